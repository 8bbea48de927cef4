"""Length-prefixed binary protocol between the user and the remote station.

Stream layout per frame: 1 message-type byte, a 4-byte little-endian
unsigned payload length, then the payload. Vectors are a 4-byte dimension
followed by little-endian float64s; matrices are two 4-byte dimensions
(rows, cols) followed by row-major float64s. Exact byte round trips keep
networked runs bit-identical to in-process runs.

Message types:
    0x01 CONFIG     full EncodedConfig; exactly one, before any step
    0x02 STEP_REQ   u32 k, lifted input, lifted measurement
    0x03 STEP_RESP  u32 k, lifted alarm
    0x04 CLOSE      end of session
    0x7F ERROR      u32 code + utf8 detail, then the server closes

Error codes: 1 step-before-config, 2 malformed frame, 3 step-counter
mismatch, 4 dimension mismatch.

Plaintext never crosses this interface: the client sends only lifted
vectors and the composed config, and receives only lifted alarms.
"""

from __future__ import annotations

import os
import socket
import socketserver
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .coding import KeySet, decode_alarm, encode_u, encode_y
from .encoded import EncodedConfig
from .errors import DimensionMismatch, ProtocolViolation, TransportError
from .remote import TargetState, target_init, target_step

MSG_CONFIG = 0x01
MSG_STEP_REQ = 0x02
MSG_STEP_RESP = 0x03
MSG_CLOSE = 0x04
MSG_ERROR = 0x7F

ERR_NO_CONFIG = 1
ERR_BAD_FRAME = 2
ERR_K_MISMATCH = 3
ERR_DIM_MISMATCH = 4

ADDR_ENV_VAR = "II_DETECT_ADDR"
DEFAULT_ADDR = "127.0.0.1:7733"

_MAX_PAYLOAD = 1 << 27
_CONFIG_MATRICES = (
    "step_x",
    "step_u",
    "step_y",
    "res_y",
    "res_x",
    "quad",
    "quad_factor",
    "z_lift",
    "z_unlift",
    "z_mask",
    "a_lift",
    "a_mask",
)


@dataclass(frozen=True)
class Frame:
    msg_type: int
    payload: bytes


class _Reader:
    """Cursor over a payload; raises ProtocolViolation on any short read."""

    def __init__(self, payload: bytes):
        self.buf = payload
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ProtocolViolation(ERR_BAD_FRAME, "payload truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def vector(self) -> np.ndarray:
        dim = self.u32()
        if dim * 8 > len(self.buf):
            raise ProtocolViolation(ERR_BAD_FRAME, f"vector dim {dim} exceeds payload")
        return np.frombuffer(self.take(8 * dim), dtype="<f8").copy()

    def matrix(self) -> np.ndarray:
        rows = self.u32()
        cols = self.u32()
        if rows * cols * 8 > len(self.buf):
            raise ProtocolViolation(ERR_BAD_FRAME, f"matrix {rows}x{cols} exceeds payload")
        return np.frombuffer(self.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()

    def done(self):
        if self.pos != len(self.buf):
            raise ProtocolViolation(ERR_BAD_FRAME, f"{len(self.buf) - self.pos} trailing bytes")


def _put_vector(parts: list, v: np.ndarray):
    v = np.asarray(v, dtype="<f8").ravel()
    parts.append(struct.pack("<I", v.size))
    parts.append(v.tobytes())


def _put_matrix(parts: list, M: np.ndarray):
    M = np.asarray(M, dtype="<f8")
    parts.append(struct.pack("<II", M.shape[0], M.shape[1]))
    parts.append(M.tobytes())


def encode_frame(frame: Frame) -> bytes:
    return struct.pack("<BI", frame.msg_type, len(frame.payload)) + frame.payload


def decode_frame(data: bytes) -> tuple[Frame, bytes]:
    """Split one frame off the front of a buffer; returns (frame, rest)."""
    if len(data) < 5:
        raise ProtocolViolation(ERR_BAD_FRAME, "frame header truncated")
    msg_type, length = struct.unpack("<BI", data[:5])
    if length > _MAX_PAYLOAD:
        raise ProtocolViolation(ERR_BAD_FRAME, f"payload length {length} too large")
    if len(data) < 5 + length:
        raise ProtocolViolation(ERR_BAD_FRAME, "payload truncated")
    return Frame(msg_type, data[5 : 5 + length]), data[5 + length :]


def config_frame(config: EncodedConfig) -> Frame:
    parts: list[bytes] = []
    for name in _CONFIG_MATRICES:
        _put_matrix(parts, getattr(config, name))
    parts.append(struct.pack("<d", config.alpha))
    _put_vector(parts, config.x0)
    return Frame(MSG_CONFIG, b"".join(parts))


def parse_config(frame: Frame) -> EncodedConfig:
    r = _Reader(frame.payload)
    mats = {name: r.matrix() for name in _CONFIG_MATRICES}
    alpha = r.f64()
    x0 = r.vector()
    r.done()
    try:
        return EncodedConfig(alpha=alpha, x0=x0, **mats).validate()
    except DimensionMismatch as exc:
        raise ProtocolViolation(ERR_BAD_FRAME, f"bad config: {exc}") from exc


def step_req_frame(k: int, util: np.ndarray, ytil: np.ndarray) -> Frame:
    parts = [struct.pack("<I", k)]
    _put_vector(parts, util)
    _put_vector(parts, ytil)
    return Frame(MSG_STEP_REQ, b"".join(parts))


def parse_step_req(frame: Frame) -> tuple[int, np.ndarray, np.ndarray]:
    r = _Reader(frame.payload)
    k = r.u32()
    util = r.vector()
    ytil = r.vector()
    r.done()
    return k, util, ytil


def step_resp_frame(k: int, atil: np.ndarray) -> Frame:
    parts = [struct.pack("<I", k)]
    _put_vector(parts, atil)
    return Frame(MSG_STEP_RESP, b"".join(parts))


def parse_step_resp(frame: Frame) -> tuple[int, np.ndarray]:
    r = _Reader(frame.payload)
    k = r.u32()
    atil = r.vector()
    r.done()
    return k, atil


def error_frame(code: int, detail: str) -> Frame:
    return Frame(MSG_ERROR, struct.pack("<I", code) + detail.encode("utf-8"))


def parse_error(frame: Frame) -> tuple[int, str]:
    r = _Reader(frame.payload)
    code = r.u32()
    detail = r.buf[r.pos :].decode("utf-8", errors="replace")
    return code, detail


class RemoteSession:
    """Protocol state machine for one session, transport-agnostic.

    Feed it frames; it returns (response frame or None, session finished).
    All protocol faults come back as ERROR frames, after which the session
    is finished and the transport should close.
    """

    def __init__(self):
        self.config: EncodedConfig | None = None
        self.state: TargetState | None = None
        self.expect_k = 1

    def _fail(self, code: int, detail: str) -> tuple[Frame, bool]:
        return error_frame(code, detail), True

    def handle(self, frame: Frame) -> tuple[Frame | None, bool]:
        if frame.msg_type == MSG_CLOSE:
            return None, True
        if frame.msg_type == MSG_CONFIG:
            if self.config is not None:
                return self._fail(ERR_BAD_FRAME, "duplicate CONFIG")
            try:
                self.config = parse_config(frame)
            except ProtocolViolation as exc:
                return self._fail(exc.code, str(exc))
            self.state = target_init(self.config)
            return None, False
        if frame.msg_type == MSG_STEP_REQ:
            if self.config is None:
                return self._fail(ERR_NO_CONFIG, "STEP_REQ before CONFIG")
            try:
                k, util, ytil = parse_step_req(frame)
            except ProtocolViolation as exc:
                return self._fail(exc.code, str(exc))
            if k != self.expect_k:
                return self._fail(ERR_K_MISMATCH, f"expected k={self.expect_k}, got {k}")
            if util.shape != (self.config.dim_u,) or ytil.shape != (self.config.dim_y,):
                return self._fail(
                    ERR_DIM_MISMATCH,
                    f"expected dims ({self.config.dim_u}, {self.config.dim_y}), "
                    f"got ({util.size}, {ytil.size})",
                )
            diag = target_step(self.config, self.state, util, ytil)
            self.expect_k += 1
            return step_resp_frame(k, diag.atil), False
        return self._fail(ERR_BAD_FRAME, f"unknown message type {frame.msg_type:#x}")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise TransportError(f"connection closed after {got}/{n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame_from_socket(sock: socket.socket) -> Frame:
    header = _recv_exact(sock, 5)
    msg_type, length = struct.unpack("<BI", header)
    if length > _MAX_PAYLOAD:
        raise ProtocolViolation(ERR_BAD_FRAME, f"payload length {length} too large")
    payload = _recv_exact(sock, length) if length else b""
    return Frame(msg_type, payload)


def send_frame_to_socket(sock: socket.socket, frame: Frame):
    try:
        sock.sendall(encode_frame(frame))
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


class _SessionHandler(socketserver.BaseRequestHandler):
    def handle(self):
        session = RemoteSession()
        while True:
            try:
                frame = read_frame_from_socket(self.request)
            except (TransportError, ProtocolViolation):
                return
            response, done = session.handle(frame)
            if response is not None:
                try:
                    send_frame_to_socket(self.request, response)
                except TransportError:
                    return
            if done:
                return


class StationServer(socketserver.ThreadingTCPServer):
    """One detector session per connection; sessions are independent."""

    allow_reuse_address = True
    daemon_threads = True


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {addr!r}")
    return host, int(port)


def default_addr() -> str:
    return os.environ.get(ADDR_ENV_VAR, DEFAULT_ADDR)


def make_server(addr: str | None = None) -> StationServer:
    host, port = parse_addr(addr or default_addr())
    return StationServer((host, port), _SessionHandler)


def serve(addr: str | None = None):
    """Run the remote station until interrupted."""
    server = make_server(addr)
    with server:
        server.serve_forever()


class StepChannel:
    """Client side of one framed session over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    @classmethod
    def connect(cls, addr: str | None = None) -> "StepChannel":
        host, port = parse_addr(addr or default_addr())
        try:
            sock = socket.create_connection((host, port), timeout=30.0)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        return cls(sock)

    def send_config(self, config: EncodedConfig):
        send_frame_to_socket(self._sock, config_frame(config))

    def _expect_step_resp(self, k: int) -> np.ndarray:
        frame = read_frame_from_socket(self._sock)
        if frame.msg_type == MSG_ERROR:
            code, detail = parse_error(frame)
            raise ProtocolViolation(code, f"remote error {code}: {detail}")
        if frame.msg_type != MSG_STEP_RESP:
            raise ProtocolViolation(ERR_BAD_FRAME, f"unexpected reply type {frame.msg_type:#x}")
        got_k, atil = parse_step_resp(frame)
        if got_k != k:
            raise ProtocolViolation(ERR_K_MISMATCH, f"reply for k={got_k}, expected {k}")
        return atil

    def step(self, k: int, util: np.ndarray, ytil: np.ndarray) -> np.ndarray:
        send_frame_to_socket(self._sock, step_req_frame(k, util, ytil))
        return self._expect_step_resp(k)

    def close(self):
        try:
            send_frame_to_socket(self._sock, Frame(MSG_CLOSE, b""))
        except TransportError:
            pass
        self._sock.close()


class LoopbackChannel:
    """In-process stand-in for StepChannel; frames still round-trip
    through the byte codec so the oracle exercises the same path."""

    def __init__(self):
        self._session = RemoteSession()

    def _exchange(self, frame: Frame) -> Frame | None:
        reframed, rest = decode_frame(encode_frame(frame))
        assert not rest
        response, _ = self._session.handle(reframed)
        if response is None:
            return None
        response, rest = decode_frame(encode_frame(response))
        assert not rest
        return response

    def send_config(self, config: EncodedConfig):
        response = self._exchange(config_frame(config))
        if response is not None and response.msg_type == MSG_ERROR:
            code, detail = parse_error(response)
            raise ProtocolViolation(code, detail)

    def step(self, k: int, util: np.ndarray, ytil: np.ndarray) -> np.ndarray:
        response = self._exchange(step_req_frame(k, util, ytil))
        if response is None:
            raise TransportError("no reply to STEP_REQ")
        if response.msg_type == MSG_ERROR:
            code, detail = parse_error(response)
            raise ProtocolViolation(code, f"remote error {code}: {detail}")
        got_k, atil = parse_step_resp(response)
        if got_k != k:
            raise ProtocolViolation(ERR_K_MISMATCH, f"reply for k={got_k}, expected {k}")
        return atil

    def close(self):
        self._exchange(Frame(MSG_CLOSE, b""))


def client_session(
    addr: str | None,
    key: KeySet,
    config: EncodedConfig,
    signals: Iterable[tuple[np.ndarray, np.ndarray]],
    rng,
) -> Iterator[tuple[int, int]]:
    """Drive a remote session from plaintext (u, y) pairs.

    Encodes each pair with fresh one-time noise, streams it out, decodes
    each reply, and yields (k, alarm_bit). Pass addr=None to honor the
    II_DETECT_ADDR environment variable or the built-in default.
    """
    channel = StepChannel.connect(addr)
    try:
        channel.send_config(config)
        for k, (u, y) in enumerate(signals, start=1):
            util = encode_u(key, u, rng)
            ytil = encode_y(key, y, rng)
            atil = channel.step(k, util, ytil)
            yield k, decode_alarm(key, atil, ytil)
    finally:
        channel.close()
