"""Line-oriented wire protocol for the remote-controlling server link.

Grammar (UTF-8, one record per line):

    STAT|<object_id>|<sensor_id>|<sensor_value>|<iso8601>\n
    CMD|<command_id>|<object_id>|<sensor_id>|<value>|<iso8601>\n

Ids come from a safe alphabet and are never escaped. The value field is
escaped: ``\\`` -> ``\\\\``, ``|`` -> ``\\p``, newline -> ``\\n``.
Timestamps are ISO-8601 UTC with a trailing ``Z``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime

from .errors import MalformedLine
from .timeutil import format_iso8601, parse_iso8601

SAFE_ID = re.compile(r"[A-Za-z0-9._:-]+\Z")


@dataclass(frozen=True)
class StatusPacket:
    object_id: str
    sensor_id: str
    value: str  # flat text encoding of the sensor value
    timestamp: datetime

    def key(self) -> tuple[str, str]:
        return (self.object_id, self.sensor_id)


@dataclass(frozen=True)
class RemoteCommand:
    command_id: str
    object_id: str
    sensor_id: str
    value: str
    issued_at: datetime


def escape_value(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\p").replace("\n", "\\n")


def unescape_value(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(text):
            raise MalformedLine("dangling escape at end of value")
        marker = text[i + 1]
        if marker == "\\":
            out.append("\\")
        elif marker == "p":
            out.append("|")
        elif marker == "n":
            out.append("\n")
        else:
            raise MalformedLine(f"unknown escape \\{marker}")
        i += 2
    return "".join(out)


def _check_id(name: str, value: str) -> str:
    if not SAFE_ID.match(value):
        raise ValueError(f"{name} {value!r} is not from the safe id alphabet")
    return value


def _split_line(line: bytes, tag: str, n_fields: int) -> list[str]:
    """Common decode front end: framing, UTF-8, tag and field count."""
    if not isinstance(line, (bytes, bytearray)):
        raise MalformedLine("expected bytes")
    if not line.endswith(b"\n"):
        raise MalformedLine("line must end with a newline")
    body = line[:-1]
    if b"\n" in body:
        raise MalformedLine("unescaped newline inside line")
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedLine("line is not valid UTF-8") from None
    parts = text.split("|")
    if parts[0] != tag:
        raise MalformedLine(f"expected tag {tag}, got {parts[0]!r}")
    if len(parts) - 1 != n_fields:
        raise MalformedLine(
            f"{tag} line needs {n_fields} fields, got {len(parts) - 1}"
        )
    return parts[1:]


def _decode_id(field_name: str, raw: str) -> str:
    if not SAFE_ID.match(raw):
        raise MalformedLine(f"bad {field_name}: {raw!r}")
    return raw


def _decode_timestamp(raw: str) -> datetime:
    try:
        return parse_iso8601(raw)
    except ValueError as exc:
        raise MalformedLine(f"bad timestamp: {exc}") from None


def encode_status_packet(packet: StatusPacket) -> bytes:
    fields = [
        "STAT",
        _check_id("object_id", packet.object_id),
        _check_id("sensor_id", packet.sensor_id),
        escape_value(packet.value),
        format_iso8601(packet.timestamp),
    ]
    return ("|".join(fields) + "\n").encode("utf-8")


def decode_status_packet(line: bytes) -> StatusPacket:
    obj, sensor, value, ts = _split_line(line, "STAT", 4)
    return StatusPacket(
        object_id=_decode_id("object_id", obj),
        sensor_id=_decode_id("sensor_id", sensor),
        value=unescape_value(value),
        timestamp=_decode_timestamp(ts),
    )


def encode_command(cmd: RemoteCommand) -> bytes:
    fields = [
        "CMD",
        _check_id("command_id", cmd.command_id),
        _check_id("object_id", cmd.object_id),
        _check_id("sensor_id", cmd.sensor_id),
        escape_value(cmd.value),
        format_iso8601(cmd.issued_at),
    ]
    return ("|".join(fields) + "\n").encode("utf-8")


def decode_command(line: bytes) -> RemoteCommand:
    cmd_id, obj, sensor, value, ts = _split_line(line, "CMD", 5)
    return RemoteCommand(
        command_id=_decode_id("command_id", cmd_id),
        object_id=_decode_id("object_id", obj),
        sensor_id=_decode_id("sensor_id", sensor),
        value=unescape_value(value),
        issued_at=_decode_timestamp(ts),
    )
