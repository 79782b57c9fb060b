"""Minimal RESP (REdis Serialization Protocol) socket client.

Speaks RESP2 over a plain TCP socket: commands go out as arrays of bulk
strings, replies come back as simple strings, errors, integers, bulk
strings, or arrays. ``pipeline`` writes several commands in one send and
reads all replies, which is how batched enqueue keeps to a single broker
round trip.

Connections are not thread-safe; ``RespBroker`` keeps one per thread.
"""

from __future__ import annotations

import socket
from typing import Optional, Sequence, Union

from . import BrokerError

Arg = Union[bytes, str, int, float]
Reply = Union[None, int, bytes, list]


class RespError(BrokerError):
    """Server-side -ERR reply or protocol violation."""


class RespConnection:
    def __init__(self, host: str, port: int, *, connect_timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        self._sock.settimeout(None)
        self._rfile = self._sock.makefile("rb")

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()

    # -- protocol ---------------------------------------------------------

    @staticmethod
    def _encode(args: Sequence[Arg]) -> bytes:
        parts = [b"*%d\r\n" % len(args)]
        for arg in args:
            if isinstance(arg, bytes):
                data = arg
            elif isinstance(arg, float):
                data = repr(arg).encode()
            else:
                data = str(arg).encode()
            parts.append(b"$%d\r\n%s\r\n" % (len(data), data))
        return b"".join(parts)

    def _read_line(self) -> bytes:
        line = self._rfile.readline()
        if not line.endswith(b"\r\n"):
            raise RespError("connection closed mid-reply")
        return line[:-2]

    def _read_reply(self) -> Reply:
        line = self._read_line()
        if not line:
            raise RespError("empty reply line")
        kind, rest = line[:1], line[1:]
        if kind == b"+":
            return rest
        if kind == b"-":
            raise RespError(rest.decode("utf-8", "replace"))
        if kind == b":":
            return int(rest)
        if kind == b"$":
            length = int(rest)
            if length == -1:
                return None
            data = self._rfile.read(length + 2)
            if len(data) != length + 2:
                raise RespError("short bulk read")
            return data[:-2]
        if kind == b"*":
            count = int(rest)
            if count == -1:
                return None
            return [self._read_reply() for _ in range(count)]
        raise RespError(f"unknown reply type {kind!r}")

    # -- public ------------------------------------------------------------

    def command(self, *args: Arg, timeout: Optional[float] = None) -> Reply:
        self._sock.settimeout(timeout)
        try:
            self._sock.sendall(self._encode(args))
            return self._read_reply()
        except socket.timeout as exc:
            raise RespError(f"command {args[0]!r} timed out") from exc
        finally:
            self._sock.settimeout(None)

    def pipeline(self, commands: Sequence[Sequence[Arg]]) -> list[Reply]:
        """Send all commands in one write, then collect every reply."""
        if not commands:
            return []
        self._sock.sendall(b"".join(self._encode(cmd) for cmd in commands))
        return [self._read_reply() for _ in commands]
