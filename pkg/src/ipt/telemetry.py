"""Fixed 86-byte pose datagrams over UDP.

Layout, little-endian::

    magic     4s   b"IPT1"
    seq       u32
    t_us      u64
    x, y, z   3 x f64   meters
    qw..qz    4 x f64   body attitude, w >= 0
    rmse      f64       pixels
    n_tags    u16
    crc32     u32       over the preceding 82 bytes
"""
from __future__ import annotations

import math
import os
import socket
import struct
import threading
import zlib
from dataclasses import dataclass

import numpy as np

from .geometry import canonical_quaternion

MAGIC = b"IPT1"
DEFAULT_PORT = 47001
ENV_ADDR = "IPT_TELEMETRY_ADDR"

_BODY = struct.Struct("<4sIQ3d4ddH")
_CRC = struct.Struct("<I")
DATAGRAM_SIZE = _BODY.size + _CRC.size  # 86


class DatagramError(ValueError):
    pass


class EncodeError(DatagramError):
    pass


class ShortBufferError(DatagramError):
    pass


class LengthError(DatagramError):
    pass


class BadMagicError(DatagramError):
    pass


class CrcMismatchError(DatagramError):
    pass


@dataclass(frozen=True)
class PoseDatagram:
    seq: int
    timestamp_us: int
    position: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]  # (w, x, y, z)
    rmse: float
    n_tags: int


def encode_datagram(pose, seq: int, timestamp_us: int, rmse: float = 0.0, n_tags: int = 0) -> bytes:
    """Pack a pose into the 86-byte frame.

    ``pose`` is a :class:`~ipt.pose.WorldPose`, a :class:`PoseDatagram`, or a
    ``(position, quaternion_wxyz)`` pair.
    """
    if isinstance(pose, PoseDatagram):
        position, quat = pose.position, pose.quaternion
    elif hasattr(pose, "quaternion") and hasattr(pose, "translation"):
        position, quat = pose.translation, pose.quaternion()
    else:
        position, quat = pose
    position = np.asarray(position, dtype=np.float64).reshape(3)
    quat = np.asarray(quat, dtype=np.float64).reshape(4)
    if not (np.isfinite(position).all() and np.isfinite(quat).all() and math.isfinite(rmse)):
        raise EncodeError("pose fields must be finite")
    norm = float(np.linalg.norm(quat))
    if abs(norm - 1.0) > 1e-6:
        raise EncodeError(f"quaternion norm {norm:.9f} is not 1")
    if quat[0] < 0:
        quat = -quat
    if not 0 <= seq < 2**32:
        raise EncodeError("seq must fit in 32 bits")
    if not 0 <= timestamp_us < 2**64:
        raise EncodeError("timestamp_us must fit in 64 bits")
    if not 0 <= n_tags < 2**16:
        raise EncodeError("n_tags must fit in 16 bits")
    body = _BODY.pack(MAGIC, int(seq), int(timestamp_us), *position.tolist(), *quat.tolist(), float(rmse), int(n_tags))
    return body + _CRC.pack(zlib.crc32(body))


def decode_datagram(buf: bytes) -> PoseDatagram:
    buf = bytes(buf)
    if len(buf) < DATAGRAM_SIZE:
        raise ShortBufferError(f"datagram is {len(buf)} bytes, expected {DATAGRAM_SIZE}")
    if len(buf) > DATAGRAM_SIZE:
        raise LengthError(f"datagram is {len(buf)} bytes, expected {DATAGRAM_SIZE}")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    body = buf[: _BODY.size]
    (crc,) = _CRC.unpack_from(buf, _BODY.size)
    if zlib.crc32(body) != crc:
        raise CrcMismatchError("crc32 mismatch")
    _, seq, t_us, x, y, z, qw, qx, qy, qz, rmse, n_tags = _BODY.unpack(body)
    return PoseDatagram(seq, t_us, (x, y, z), (qw, qx, qy, qz), rmse, n_tags)


def parse_address(text: str | None = None, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """``host:port`` (or just ``host``/``:port``) with fallbacks to ``$IPT_TELEMETRY_ADDR``."""
    text = text if text is not None else os.environ.get(ENV_ADDR, "")
    host, port = default_host, DEFAULT_PORT
    if text:
        h, sep, p = text.rpartition(":")
        if sep:
            host = h or default_host
            port = int(p)
        else:
            host = text
    if not 0 < port < 65536:
        raise ValueError(f"invalid port {port}")
    return host, port


class TelemetrySender:
    """Fire-and-forget datagram sender; use from one thread at a time."""

    def __init__(self, address: str | tuple[str, int] | None = None):
        self.address = address if isinstance(address, tuple) else parse_address(address)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.seq = 0

    def send(self, pose, timestamp_us: int, rmse: float = 0.0, n_tags: int = 0, seq: int | None = None) -> int:
        seq = self.seq if seq is None else seq
        self._sock.sendto(encode_datagram(pose, seq, timestamp_us, rmse, n_tags), self.address)
        self.seq = (seq + 1) % 2**32
        return seq

    def send_raw(self, payload: bytes) -> None:
        self._sock.sendto(payload, self.address)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TelemetryReceiver:
    """Keeps the newest pose by sequence number; stale and duplicate
    datagrams are dropped and malformed ones are counted."""

    def __init__(self):
        self._lock = threading.Lock()
        self._latest: PoseDatagram | None = None
        self.received = 0
        self.errors = 0
        self.stale = 0

    def ingest(self, payload: bytes) -> PoseDatagram | None:
        try:
            dg = decode_datagram(payload)
        except DatagramError:
            with self._lock:
                self.errors += 1
            return None
        with self._lock:
            self.received += 1
            if self._latest is not None and dg.seq <= self._latest.seq:
                self.stale += 1
                return None
            self._latest = dg
        return dg

    @property
    def latest(self) -> PoseDatagram | None:
        with self._lock:
            return self._latest


class UdpListener(TelemetryReceiver):
    """Receiver bound to a UDP socket."""

    def __init__(self, address: str | tuple[str, int] | None = None, timeout: float | None = 0.5):
        super().__init__()
        host, port = address if isinstance(address, tuple) else parse_address(address, default_host="0.0.0.0")
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(timeout)
        self.address = self._sock.getsockname()

    def poll(self) -> PoseDatagram | None:
        """Read one datagram; ``None`` on timeout or when it was rejected."""
        try:
            payload, _ = self._sock.recvfrom(2048)
        except socket.timeout:
            return None
        return self.ingest(payload)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
