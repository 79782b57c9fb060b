"""A small in-memory RESP server for development and hermetic tests.

Implements the slice of the protocol the external broker uses: string keys
with millisecond TTLs, sorted sets with blocking min-pop, lists with
blocking pop, plain sets, and hashes. One process-wide lock serializes
command execution (mirroring the single-threaded execution model of the
real store), and blocking commands wait on a condition with a deadline.

Run standalone:  python -m synthjudge.broker.miniresp --port 6399
"""

from __future__ import annotations

import argparse
import fnmatch
import socketserver
import threading
import time
from typing import Optional

_NIL_BULK = b"$-1\r\n"
_NIL_ARRAY = b"*-1\r\n"
_OK = b"+OK\r\n"


def _now_ms() -> float:
    return time.monotonic() * 1000.0


class _Store:
    def __init__(self):
        self.lock = threading.Lock()
        self.cond = threading.Condition(self.lock)
        self.data: dict[bytes, object] = {}
        self.expiry: dict[bytes, float] = {}

    # Callers hold self.lock for everything below.

    def alive(self, key: bytes) -> bool:
        deadline = self.expiry.get(key)
        if deadline is not None and _now_ms() >= deadline:
            self.data.pop(key, None)
            self.expiry.pop(key, None)
            return False
        return key in self.data

    def get_typed(self, key: bytes, factory):
        if self.alive(key):
            value = self.data[key]
            if not isinstance(value, factory):
                raise TypeError("WRONGTYPE operation against a key holding the wrong kind of value")
            return value
        value = factory()
        self.data[key] = value
        self.expiry.pop(key, None)
        return value

    def drop(self, key: bytes) -> bool:
        existed = self.alive(key)
        self.data.pop(key, None)
        self.expiry.pop(key, None)
        return existed


def _encode_bulk(value: Optional[bytes]) -> bytes:
    if value is None:
        return _NIL_BULK
    return b"$%d\r\n%s\r\n" % (len(value), value)


def _encode_array(items) -> bytes:
    out = [b"*%d\r\n" % len(items)]
    for item in items:
        if isinstance(item, int):
            out.append(b":%d\r\n" % item)
        elif item is None:
            out.append(_NIL_BULK)
        elif isinstance(item, list):
            out.append(_encode_array(item))
        else:
            out.append(_encode_bulk(item))
    return b"".join(out)


def _fmt_score(score: float) -> bytes:
    if float(score).is_integer():
        return b"%d" % int(score)
    return repr(float(score)).encode()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        store: _Store = self.server.store  # type: ignore[attr-defined]
        while True:
            try:
                args = self._read_command()
            except (ConnectionError, ValueError):
                return
            if args is None:
                return
            try:
                reply = self._dispatch(store, args)
            except TypeError as exc:
                reply = b"-WRONGTYPE %s\r\n" % str(exc).encode()
            except Exception as exc:  # protocol-level error reply, keep serving
                reply = b"-ERR %s\r\n" % str(exc).encode()
            try:
                self.wfile.write(reply)
            except (ConnectionError, BrokenPipeError):
                return

    def _read_command(self) -> Optional[list[bytes]]:
        line = self.rfile.readline()
        if not line:
            return None
        if not line.startswith(b"*"):
            raise ValueError("inline commands not supported")
        count = int(line[1:].rstrip())
        args = []
        for _ in range(count):
            header = self.rfile.readline()
            if not header.startswith(b"$"):
                raise ValueError("expected bulk string")
            length = int(header[1:].rstrip())
            data = self.rfile.read(length + 2)
            if len(data) != length + 2:
                raise ConnectionError("short read")
            args.append(data[:-2])
        return args

    # -- command dispatch --------------------------------------------------

    def _dispatch(self, store: _Store, args: list[bytes]) -> bytes:
        name = args[0].upper().decode()
        handler = getattr(self, f"_cmd_{name.lower()}", None)
        if handler is None:
            raise ValueError(f"unknown command '{name}'")
        return handler(store, args[1:])

    def _cmd_ping(self, store, args):
        return b"+PONG\r\n"

    def _cmd_flushdb(self, store, args):
        with store.lock:
            store.data.clear()
            store.expiry.clear()
            store.cond.notify_all()
        return _OK

    def _cmd_set(self, store, args):
        key, value, opts = args[0], args[1], [a.upper() for a in args[2:]]
        px: Optional[int] = None
        nx = False
        i = 0
        while i < len(opts):
            if opts[i] == b"PX":
                px = int(opts[i + 1]); i += 2
            elif opts[i] == b"EX":
                px = int(opts[i + 1]) * 1000; i += 2
            elif opts[i] == b"NX":
                nx = True; i += 1
            else:
                raise ValueError(f"unsupported SET option {opts[i]!r}")
        with store.lock:
            if nx and store.alive(key):
                return _NIL_BULK
            store.data[key] = value
            if px is None:
                store.expiry.pop(key, None)
            else:
                store.expiry[key] = _now_ms() + px
        return _OK

    def _cmd_psetex(self, store, args):
        key, ms, value = args[0], int(args[1]), args[2]
        with store.lock:
            store.data[key] = value
            store.expiry[key] = _now_ms() + ms
        return _OK

    def _cmd_get(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return _NIL_BULK
            value = store.data[args[0]]
            if not isinstance(value, bytes):
                raise TypeError("not a string key")
            return _encode_bulk(value)

    def _cmd_del(self, store, args):
        with store.lock:
            return b":%d\r\n" % sum(store.drop(k) for k in args)

    def _cmd_exists(self, store, args):
        with store.lock:
            return b":%d\r\n" % sum(store.alive(k) for k in args)

    def _cmd_pexpire(self, store, args):
        key, ms = args[0], int(args[1])
        with store.lock:
            if not store.alive(key):
                return b":0\r\n"
            store.expiry[key] = _now_ms() + ms
            return b":1\r\n"

    def _cmd_pttl(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return b":-2\r\n"
            deadline = store.expiry.get(args[0])
            if deadline is None:
                return b":-1\r\n"
            return b":%d\r\n" % max(int(deadline - _now_ms()), 0)

    def _cmd_incr(self, store, args):
        return self._cmd_incrby(store, [args[0], b"1"])

    def _cmd_incrby(self, store, args):
        key, delta = args[0], int(args[1])
        with store.lock:
            current = int(store.data[key]) if store.alive(key) else 0
            current += delta
            store.data[key] = str(current).encode()
            return b":%d\r\n" % current

    def _cmd_keys(self, store, args):
        pattern = args[0].decode()
        with store.lock:
            matched = [k for k in list(store.data) if store.alive(k)
                       and fnmatch.fnmatchcase(k.decode(), pattern)]
            return _encode_array(matched)

    # -- sorted sets ----------------------------------------------------------

    def _cmd_zadd(self, store, args):
        key = args[0]
        pairs = args[1:]
        if len(pairs) % 2:
            raise ValueError("ZADD needs score/member pairs")
        with store.lock:
            zset = store.get_typed(key, dict)
            added = 0
            for i in range(0, len(pairs), 2):
                member = pairs[i + 1]
                if member not in zset:
                    added += 1
                zset[member] = float(pairs[i])
            store.cond.notify_all()
            return b":%d\r\n" % added

    def _cmd_zcard(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return b":0\r\n"
            return b":%d\r\n" % len(store.get_typed(args[0], dict))

    def _cmd_zpopmin(self, store, args):
        key = args[0]
        with store.lock:
            if not store.alive(key):
                return _encode_array([])
            zset = store.get_typed(key, dict)
            if not zset:
                return _encode_array([])
            member = min(zset, key=lambda m: (zset[m], m))
            score = zset.pop(member)
            if not zset:
                store.drop(key)
            return _encode_array([member, _fmt_score(score)])

    def _cmd_bzpopmin(self, store, args):
        key, timeout_s = args[0], float(args[1])
        deadline = None if timeout_s == 0 else time.monotonic() + timeout_s
        with store.lock:
            while True:
                if store.alive(key):
                    zset = store.data[key]
                    if isinstance(zset, dict) and zset:
                        member = min(zset, key=lambda m: (zset[m], m))
                        score = zset.pop(member)
                        if not zset:
                            store.drop(key)
                        return _encode_array([key, member, _fmt_score(score)])
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return _NIL_ARRAY
                store.cond.wait(remaining if remaining is None else min(remaining, 0.1))

    # -- lists -------------------------------------------------------------

    def _cmd_rpush(self, store, args):
        with store.lock:
            lst = store.get_typed(args[0], list)
            lst.extend(args[1:])
            store.cond.notify_all()
            return b":%d\r\n" % len(lst)

    def _cmd_lpush(self, store, args):
        with store.lock:
            lst = store.get_typed(args[0], list)
            for item in args[1:]:
                lst.insert(0, item)
            store.cond.notify_all()
            return b":%d\r\n" % len(lst)

    def _cmd_lpop(self, store, args):
        key = args[0]
        with store.lock:
            if not store.alive(key):
                return _NIL_BULK
            lst = store.get_typed(key, list)
            if not lst:
                return _NIL_BULK
            value = lst.pop(0)
            if not lst:
                store.drop(key)
            return _encode_bulk(value)

    def _cmd_blpop(self, store, args):
        key, timeout_s = args[0], float(args[1])
        deadline = None if timeout_s == 0 else time.monotonic() + timeout_s
        with store.lock:
            while True:
                if store.alive(key):
                    lst = store.data[key]
                    if isinstance(lst, list) and lst:
                        value = lst.pop(0)
                        if not lst:
                            store.drop(key)
                        return _encode_array([key, value])
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return _NIL_ARRAY
                store.cond.wait(remaining if remaining is None else min(remaining, 0.1))

    def _cmd_llen(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return b":0\r\n"
            return b":%d\r\n" % len(store.get_typed(args[0], list))

    def _cmd_lrange(self, store, args):
        key, start, stop = args[0], int(args[1]), int(args[2])
        with store.lock:
            if not store.alive(key):
                return _encode_array([])
            lst = store.get_typed(key, list)
            stop = len(lst) if stop == -1 else stop + 1
            return _encode_array(lst[start:stop])

    # -- sets ---------------------------------------------------------------

    def _cmd_sadd(self, store, args):
        with store.lock:
            members = store.get_typed(args[0], set)
            added = sum(1 for m in args[1:] if m not in members)
            members.update(args[1:])
            return b":%d\r\n" % added

    def _cmd_srem(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return b":0\r\n"
            members = store.get_typed(args[0], set)
            removed = sum(1 for m in args[1:] if m in members)
            members.difference_update(args[1:])
            if not members:
                store.drop(args[0])
            return b":%d\r\n" % removed

    def _cmd_smembers(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return _encode_array([])
            return _encode_array(sorted(store.get_typed(args[0], set)))

    def _cmd_scard(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return b":0\r\n"
            return b":%d\r\n" % len(store.get_typed(args[0], set))

    # -- hashes ----------------------------------------------------------------

    def _cmd_hset(self, store, args):
        key, pairs = args[0], args[1:]
        if len(pairs) % 2:
            raise ValueError("HSET needs field/value pairs")
        with store.lock:
            h = store.get_typed(key, dict)
            added = 0
            for i in range(0, len(pairs), 2):
                if pairs[i] not in h:
                    added += 1
                h[pairs[i]] = pairs[i + 1]
            return b":%d\r\n" % added

    def _cmd_hsetnx(self, store, args):
        key, fld, value = args[0], args[1], args[2]
        with store.lock:
            h = store.get_typed(key, dict)
            if fld in h:
                return b":0\r\n"
            h[fld] = value
            return b":1\r\n"

    def _cmd_hget(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return _NIL_BULK
            return _encode_bulk(store.get_typed(args[0], dict).get(args[1]))

    def _cmd_hgetall(self, store, args):
        with store.lock:
            if not store.alive(args[0]):
                return _encode_array([])
            flat: list[bytes] = []
            for fld, value in store.get_typed(args[0], dict).items():
                flat.extend([fld, value])
            return _encode_array(flat)

    def _cmd_hincrby(self, store, args):
        key, fld, delta = args[0], args[1], int(args[2])
        with store.lock:
            h = store.get_typed(key, dict)
            current = int(h.get(fld, b"0")) + delta
            h[fld] = str(current).encode()
            return b":%d\r\n" % current


class MiniRespServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.store = _Store()
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]


def start_server(host: str = "127.0.0.1", port: int = 0) -> MiniRespServer:
    """Start a server on a background thread; returns once it is listening."""
    server = MiniRespServer(host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="in-memory RESP store for synthjudge")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=6399)
    args = parser.parse_args(argv)
    server = MiniRespServer(args.host, args.port)
    print(f"miniresp listening on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
