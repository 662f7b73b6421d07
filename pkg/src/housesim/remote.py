"""Client link to the remote-controlling server.

The simulator initiates everything: it polls for pending commands, applies
them through the engine, and pushes a STAT packet after every applied
event. Delivery is at-least-once (an outbox queues packets across outages)
and command application is at-most-once (de-duplication by command id).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from . import wire
from .engine import Engine
from .errors import MalformedLine, Unreachable
from .mock_remote import MockRemoteCore, tcp_exchange
from .timeutil import from_virtual_ms

OUTCOME_UNKNOWN_TARGET = "unknown-target"


class Transport(Protocol):
    """One request/response exchange with the server; raises Unreachable."""

    def exchange(self, lines: list[bytes]) -> list[bytes]: ...


class InProcessTransport:
    """Direct calls into a MockRemoteCore; deterministic tests, no sockets."""

    def __init__(self, core: MockRemoteCore):
        self.core = core

    def exchange(self, lines: list[bytes]) -> list[bytes]:
        return self.core.handle_exchange(lines) [:-1]  # drop END


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.host = host
        self.port = port
        self.timeout = timeout

    def exchange(self, lines: list[bytes]) -> list[bytes]:
        return tcp_exchange(self.host, self.port, lines, self.timeout)


@dataclass
class LinkConfig:
    endpoint: str  # host:port, advisory when a transport is injected
    poll_interval_ms: int
    session_id: str = "default"

    def __post_init__(self):
        if self.poll_interval_ms <= 0:
            raise ValueError("poll_interval_ms must be positive")


@dataclass
class CycleResult:
    reachable: bool
    delivered: int = 0
    commands: list[wire.RemoteCommand] = field(default_factory=list)
    outcomes: list[tuple[str, str]] = field(default_factory=list)


def transport_for(config: LinkConfig, timeout: float = 5.0) -> TcpTransport:
    host, _, port = config.endpoint.replace("tcp://", "").partition(":")
    if not port:
        raise ValueError(f"endpoint {config.endpoint!r} needs host:port")
    return TcpTransport(host, int(port), timeout)


class RemoteLink:
    """Owns the outbox, the seen-command set, and the poll cycle."""

    def __init__(self, config: LinkConfig, transport: Transport):
        self.config = config
        self.transport = transport
        self.outbox: deque[bytes] = deque()
        self.seen_ids: set[str] = set()
        self.parse_failures = 0

    # -- status push -----------------------------------------------------------

    def offer_status(self, packet: wire.StatusPacket) -> None:
        """Queue a packet; it rides out on the next successful push."""
        self.outbox.append(wire.encode_status_packet(packet))

    def offer_event(self, engine: Engine, logged) -> None:
        """Engine listener: queue a STAT packet for every applied event."""
        if not logged.applied:
            return
        event = logged.event
        self.offer_status(
            wire.StatusPacket(
                object_id=event.object_id,
                sensor_id=event.sensor_id,
                value=event.value_text,
                timestamp=from_virtual_ms(event.fire_time, engine.epoch),
            )
        )

    def push_statuses(self) -> int:
        """Transmit the outbox; on failure everything stays queued.

        Returns the number of packets the server acknowledged.
        """
        if not self.outbox:
            return 0
        batch = list(self.outbox)
        self.transport.exchange(batch)  # raises Unreachable, keeping outbox
        self.outbox.clear()
        return len(batch)

    # -- command fetch -----------------------------------------------------------

    def poll_once(self) -> list[wire.RemoteCommand]:
        """Fetch pending commands, de-duplicated against earlier polls.

        Malformed lines are counted and skipped; they never abort a batch.
        """
        request = f"POLL|{self.config.session_id}\n".encode("utf-8")
        lines = self.transport.exchange([request])
        fresh: list[wire.RemoteCommand] = []
        for line in lines:
            try:
                cmd = wire.decode_command(line)
            except MalformedLine:
                self.parse_failures += 1
                continue
            if cmd.command_id in self.seen_ids:
                continue
            self.seen_ids.add(cmd.command_id)
            fresh.append(cmd)
        return fresh

    # -- combined cycle ------------------------------------------------------------

    def apply_commands(
        self, engine: Engine, commands: list[wire.RemoteCommand]
    ) -> list[tuple[str, str]]:
        """Apply commands at the engine's current virtual time.

        Outcome per command: "applied", "unknown-target" (object or sensor
        does not resolve), or "rejected:<error>".
        """
        outcomes = []
        for cmd in commands:
            logged = engine.apply_remote(
                cmd.command_id, cmd.object_id, cmd.sensor_id, cmd.value
            )
            outcome = logged.outcome
            if outcome in ("rejected:UnknownDevice", "rejected:UnknownSensor"):
                outcome = OUTCOME_UNKNOWN_TARGET
            outcomes.append((cmd.command_id, outcome))
        return outcomes

    def cycle(self, engine: Engine) -> CycleResult:
        """One poll boundary: flush queued statuses, poll, apply commands."""
        result = CycleResult(reachable=True)
        try:
            result.delivered = self.push_statuses()
            result.commands = self.poll_once()
        except Unreachable:
            result.reachable = False
            return result
        result.outcomes = self.apply_commands(engine, result.commands)
        # statuses for the just-applied commands go out next cycle
        return result
