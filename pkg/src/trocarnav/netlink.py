"""Line-based TCP link between the controller (client) and a plant (server).

Wire format, one message per line, space separated::

    HELLO <version> <T_e>
    POSES <12 reals w_T_e> <12 reals w_T_r>
    CMD <6 reals e-frame twist>
    BYE
    ERR <code> <text>

Reals use ``%.17g`` so every float64 survives the round trip exactly.
"""

from __future__ import annotations

import logging
import math
import socket
import threading
from dataclasses import dataclass

from .geometry import Pose, Twist
from .plant import Plant

PROTOCOL_VERSION = "1"
READ_TIMEOUT = 5.0
TAGS = ("HELLO", "POSES", "CMD", "BYE", "ERR")
_ARITY = {"HELLO": 2, "POSES": 24, "CMD": 6, "BYE": 0}

log = logging.getLogger(__name__)


class ProtocolError(ValueError):
    def __init__(self, msg: str, line: str = ""):
        super().__init__(f"{msg}: {line!r}" if line else msg)
        self.line = line


@dataclass(frozen=True)
class WireMessage:
    tag: str
    values: tuple = ()  # floats, except HELLO's version string
    code: str = ""  # ERR only
    text: str = ""  # ERR only

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ProtocolError(f"unknown tag {self.tag}")
        if self.tag != "ERR" and len(self.values) != _ARITY[self.tag]:
            raise ProtocolError(f"{self.tag} takes {_ARITY[self.tag]} fields, got {len(self.values)}")

    @classmethod
    def hello(cls, T_e: float, version: str = PROTOCOL_VERSION) -> "WireMessage":
        return cls("HELLO", (version, float(T_e)))

    @classmethod
    def poses(cls, w_T_e: Pose, w_T_r: Pose) -> "WireMessage":
        return cls("POSES", tuple(w_T_e.to_list() + w_T_r.to_list()))

    @classmethod
    def cmd(cls, tw: Twist) -> "WireMessage":
        return cls("CMD", tuple(tw.as_array().tolist()))

    @classmethod
    def bye(cls) -> "WireMessage":
        return cls("BYE")

    @classmethod
    def err(cls, code: str, text: str = "") -> "WireMessage":
        return cls("ERR", code=code, text=text)

    def pose_pair(self) -> tuple[Pose, Pose]:
        return Pose.from_list(self.values[:12]), Pose.from_list(self.values[12:])

    def twist(self) -> Twist:
        return Twist.from_array(self.values)


def _fmt(x: float) -> str:
    s = "%.17g" % x
    # prefer the shortest form when it round-trips (keeps "1", "0.5", ...)
    r = repr(float(x))
    if float(r) == x and len(r) < len(s):
        s = r
    return s[:-2] if s.endswith(".0") else s


def encode(msg: WireMessage) -> str:
    if msg.tag == "ERR":
        code = msg.code.split()[0] if msg.code.strip() else "UNKNOWN"
        text = " ".join(msg.text.split())
        return f"ERR {code} {text}".rstrip() + "\n"
    if msg.tag == "HELLO":
        version, T_e = msg.values
        return f"HELLO {version} {_fmt(T_e)}\n"
    fields = [msg.tag] + [_fmt(v) for v in msg.values]
    return " ".join(fields) + "\n"


def _reals(fields: list[str], line: str) -> tuple:
    out = []
    for f in fields:
        try:
            v = float(f)
        except ValueError:
            raise ProtocolError("non-numeric field", line) from None
        if not math.isfinite(v):
            raise ProtocolError("non-finite field", line)
        out.append(v)
    return tuple(out)


def decode(line: str) -> WireMessage:
    """Parse one line. Raises ProtocolError on anything malformed."""
    if not isinstance(line, str):
        raise ProtocolError("line must be text")
    parts = line.strip().split()
    if not parts:
        raise ProtocolError("empty line", line)
    tag, fields = parts[0], parts[1:]
    if tag not in TAGS:
        raise ProtocolError("unknown tag", line)
    if tag == "ERR":
        if not fields:
            raise ProtocolError("ERR needs a code", line)
        return WireMessage.err(fields[0], " ".join(fields[1:]))
    if len(fields) != _ARITY[tag]:
        raise ProtocolError(f"{tag} takes {_ARITY[tag]} fields, got {len(fields)}", line)
    if tag == "HELLO":
        T_e = _reals(fields[1:], line)[0]
        if T_e <= 0:
            raise ProtocolError("T_e must be positive", line)
        return WireMessage("HELLO", (fields[0], T_e))
    return WireMessage(tag, _reals(fields, line))


class _LineIO:
    """Buffered line reader/writer over a socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._r = sock.makefile("r", encoding="ascii", newline="\n")

    def send(self, msg: WireMessage):
        self.sock.sendall(encode(msg).encode("ascii"))

    def recv(self) -> WireMessage | None:
        """Next message, or None when the peer closed the connection."""
        try:
            line = self._r.readline()
        except UnicodeDecodeError:
            raise ProtocolError("non-ascii input") from None
        if not line:
            return None
        return decode(line)

    def close(self):
        try:
            self._r.close()
        finally:
            self.sock.close()


def _session(io: _LineIO, plant: Plant, w_T_r: Pose) -> int:
    """Run one lock-step session; returns the number of plant steps."""
    steps = 0
    msg = io.recv()
    if msg is None:
        return 0
    if msg.tag != "HELLO":
        io.send(WireMessage.err("PROTOCOL", f"expected HELLO, got {msg.tag}"))
        return 0
    version, T_e = msg.values
    if version != PROTOCOL_VERSION:
        io.send(WireMessage.err("VERSION", f"server speaks {PROTOCOL_VERSION}"))
        return 0
    if T_e != plant.T_e:
        io.send(WireMessage.err("PERIOD", f"plant runs at {_fmt(plant.T_e)}"))
        return 0
    while True:
        io.send(WireMessage.poses(plant.measured_pose(), w_T_r))
        msg = io.recv()
        if msg is None or msg.tag == "BYE":
            return steps
        if msg.tag != "CMD":
            io.send(WireMessage.err("PROTOCOL", f"expected CMD or BYE, got {msg.tag}"))
            return steps
        plant.step(msg.twist())
        steps += 1


def handle_connection(conn: socket.socket, plant: Plant, w_T_r: Pose, timeout: float = READ_TIMEOUT) -> int:
    conn.settimeout(timeout)
    io = _LineIO(conn)
    steps = 0
    try:
        steps = _session(io, plant, w_T_r)
    except ProtocolError as exc:
        _try_send(io, WireMessage.err("PROTOCOL", str(exc)))
    except socket.timeout:
        _try_send(io, WireMessage.err("TIMEOUT", f"no input for {timeout} s"))
    except OSError as exc:
        log.info("session dropped: %s", exc)
    finally:
        io.close()
    return steps


def _try_send(io: _LineIO, msg: WireMessage):
    try:
        io.send(msg)
    except OSError:
        pass


def parse_endpoint(endpoint: str | tuple) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    host, _, port = endpoint.rpartition(":")
    return host or "127.0.0.1", int(port)


def serve_plant(
    endpoint,
    plant: Plant,
    w_T_r: Pose,
    max_sessions: int | None = None,
    stop: threading.Event | None = None,
    ready: threading.Event | None = None,
    timeout: float = READ_TIMEOUT,
    bound: list | None = None,
) -> int:
    """Serve ``plant`` until ``max_sessions`` sessions ended or ``stop`` is set.

    One session owns the plant at a time; other connections get ``ERR BUSY``.
    Port 0 picks a free port; the bound address is appended to ``bound``.
    Returns the total number of plant steps.
    """
    host, port = parse_endpoint(endpoint)
    stop = stop or threading.Event()
    busy = threading.Lock()
    done = []
    workers = []

    def work(conn):
        try:
            done.append(handle_connection(conn, plant, w_T_r, timeout))
        finally:
            busy.release()

    with socket.create_server((host, port)) as srv:
        srv.settimeout(0.05)
        if bound is not None:
            bound.append(srv.getsockname()[:2])
        if ready is not None:
            ready.set()
        while not stop.is_set() and (max_sessions is None or len(done) < max_sessions):
            try:
                conn, _ = srv.accept()
            except socket.timeout:
                continue
            if not busy.acquire(blocking=False):
                try:
                    conn.sendall(encode(WireMessage.err("BUSY", "plant already in session")).encode())
                finally:
                    conn.close()
                continue
            th = threading.Thread(target=work, args=(conn,), daemon=True)
            workers.append(th)
            th.start()
        for th in workers:
            th.join()
    return sum(done)


class RemotePlant:
    """Client end of the link, used like an in-process ``Plant``."""

    def __init__(self, endpoint, T_e: float, timeout: float = READ_TIMEOUT):
        host, port = parse_endpoint(endpoint)
        self.T_e = float(T_e)
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(timeout)
        self._io = _LineIO(sock)
        self._io.send(WireMessage.hello(self.T_e))
        self._last = self._expect_poses()

    def _expect_poses(self) -> WireMessage:
        msg = self._io.recv()
        if msg is None:
            raise ConnectionError("server closed the connection")
        if msg.tag == "ERR":
            raise ConnectionError(f"server error {msg.code}: {msg.text}")
        if msg.tag != "POSES":
            raise ProtocolError(f"expected POSES, got {msg.tag}")
        return msg

    def poses(self) -> tuple[Pose, Pose]:
        return self._last.pose_pair()

    def measured_pose(self) -> Pose:
        return self.poses()[0]

    def step(self, e_twist: Twist):
        self._io.send(WireMessage.cmd(e_twist))
        self._last = self._expect_poses()

    def close(self):
        try:
            self._io.send(WireMessage.bye())
        except OSError:
            pass
        self._io.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
