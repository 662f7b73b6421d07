"""Test double for the remote-controlling server.

Protocol, one exchange per connection: the client sends a batch of lines
and half-closes; the server answers with pending CMD lines (for a POLL)
followed by ``END``. Control lines let a test script the server:

    ENQ|<cmd line payload>   queue a raw command line for future polls
    AVAIL|on / AVAIL|off     toggle availability

While unavailable the server drops client batches without answering
(control lines keep working). Queued commands persist across polls; the
simulator de-duplicates by command id.
"""

from __future__ import annotations

import socket
import socketserver
import threading

from . import wire
from .errors import Unreachable


class MockRemoteCore:
    """In-process server state; usable directly via an in-process transport."""

    def __init__(self):
        self.pending: list[bytes] = []
        self.received: list[bytes] = []
        self.ignored = 0
        self.available = True
        self._lock = threading.Lock()

    # -- scripting hooks ----------------------------------------------------

    def enqueue_line(self, payload: bytes) -> None:
        with self._lock:
            self.pending.append(payload.rstrip(b"\n") + b"\n")

    def enqueue_command(self, cmd: wire.RemoteCommand) -> None:
        self.enqueue_line(wire.encode_command(cmd))

    def set_available(self, available: bool) -> None:
        with self._lock:
            self.available = available

    def clear_pending(self) -> None:
        with self._lock:
            self.pending.clear()

    def status_packets(self) -> list[wire.StatusPacket]:
        with self._lock:
            lines = list(self.received)
        return [wire.decode_status_packet(line) for line in lines]

    # -- one request/response exchange ---------------------------------------

    def handle_exchange(self, lines: list[bytes]) -> list[bytes]:
        """Process a client batch; raises Unreachable when switched off."""
        out: list[bytes] = []
        with self._lock:
            for line in lines:
                tag = line.split(b"|", 1)[0].rstrip(b"\n")
                if tag == b"ENQ":
                    self.pending.append(line[4:].rstrip(b"\n") + b"\n")
                elif tag == b"AVAIL":
                    self.available = line[6:].rstrip(b"\n") == b"on"
                elif not self.available:
                    raise Unreachable("mock server is switched off")
                elif tag == b"STAT":
                    self.received.append(line)
                elif tag == b"POLL":
                    out.extend(self.pending)
                else:
                    self.ignored += 1
            out.append(b"END\n")
        return out


class _ExchangeHandler(socketserver.StreamRequestHandler):
    def handle(self):
        lines = []
        while True:
            line = self.rfile.readline()
            if not line:
                break
            lines.append(line)
        try:
            response = self.server.core.handle_exchange(lines)
        except Unreachable:
            return  # close without END: the client sees an unreachable server
        self.wfile.write(b"".join(response))


class MockRemoteServer(socketserver.ThreadingTCPServer):
    """TCP wrapper over MockRemoteCore; one exchange per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind_address: tuple[str, int], core: MockRemoteCore | None = None):
        self.core = core or MockRemoteCore()
        super().__init__(bind_address, _ExchangeHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def tcp_exchange(
    host: str, port: int, lines: list[bytes], timeout: float = 5.0
) -> list[bytes]:
    """One client-side exchange; raises Unreachable on any transport trouble."""
    try:
        with socket.create_connection((host, port), timeout=timeout) as sock:
            sock.sendall(b"".join(lines))
            sock.shutdown(socket.SHUT_WR)
            chunks = []
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
    except OSError as exc:
        raise Unreachable(str(exc)) from None
    data = b"".join(chunks)
    if not data.endswith(b"END\n"):
        raise Unreachable("no END terminator in response")
    return data[:-4].splitlines(keepends=True)
