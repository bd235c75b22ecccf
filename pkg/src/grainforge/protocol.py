"""GPN1 framed wire protocol for out-of-process denoisers.

Frame layout (all integers little-endian):

    bytes 0..3   magic b"GPN1"
    byte  4      msg_type: 0 PredictRequest, 1 PredictResponse, 2 Error, 3 Hello
    bytes 5..6   t      (u16) step index; protocol version for Hello
    bytes 7..8   batch  (u16)
    bytes 9..14  nx, ny, nz (u16 each)
    ...          payload: batch*nx*ny*nz little-endian float32 values

Hello frames advertise the maximum supported window in ``dims`` and carry no
payload (batch = 0). Error frames carry a UTF-8 message NUL-padded to a
multiple of 4 bytes, with dims = (1,1,1) and batch = padded_length / 4.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError

MAGIC = b"GPN1"
HEADER = struct.Struct("<4sBHHHHH")
HEADER_SIZE = HEADER.size  # 15 bytes

MSG_PREDICT_REQUEST = 0
MSG_PREDICT_RESPONSE = 1
MSG_ERROR = 2
MSG_HELLO = 3

PROTOCOL_VERSION = 1

_VALID_TYPES = (MSG_PREDICT_REQUEST, MSG_PREDICT_RESPONSE, MSG_ERROR, MSG_HELLO)


@dataclass(frozen=True)
class Frame:
    msg_type: int
    t: int
    batch: int
    dims: tuple[int, int, int]
    payload: bytes = b""

    def payload_voxels(self) -> int:
        nx, ny, nz = self.dims
        return self.batch * nx * ny * nz


def _check_frame(frame: Frame) -> None:
    if frame.msg_type not in _VALID_TYPES:
        raise ProtocolError(f"unknown msg_type {frame.msg_type}")
    for name, value in (("t", frame.t), ("batch", frame.batch)):
        if not 0 <= value <= 0xFFFF:
            raise ProtocolError(f"{name}={value} does not fit in u16")
    if len(frame.dims) != 3 or any(not 0 <= d <= 0xFFFF for d in frame.dims):
        raise ProtocolError(f"dims {frame.dims} do not fit in u16")
    expected = 4 * frame.payload_voxels()
    if len(frame.payload) != expected:
        raise ProtocolError(
            f"payload is {len(frame.payload)} bytes, header implies {expected}"
        )


def encode_frame(frame: Frame) -> bytes:
    _check_frame(frame)
    nx, ny, nz = frame.dims
    header = HEADER.pack(MAGIC, frame.msg_type, frame.t, frame.batch, nx, ny, nz)
    return header + frame.payload


def decode_header(header: bytes) -> Frame:
    """Parse a 15-byte header into a payload-less Frame skeleton."""
    if len(header) != HEADER_SIZE:
        raise ProtocolError(f"header is {len(header)} bytes, expected {HEADER_SIZE}")
    magic, msg_type, t, batch, nx, ny, nz = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if msg_type not in _VALID_TYPES:
        raise ProtocolError(f"unknown msg_type {msg_type}")
    return Frame(msg_type=msg_type, t=t, batch=batch, dims=(nx, ny, nz))


def decode_frame(buf: bytes) -> Frame:
    """Decode one complete frame from ``buf`` (must contain exactly one)."""
    skeleton = decode_header(buf[:HEADER_SIZE])
    payload = buf[HEADER_SIZE:]
    frame = Frame(
        msg_type=skeleton.msg_type,
        t=skeleton.t,
        batch=skeleton.batch,
        dims=skeleton.dims,
        payload=payload,
    )
    _check_frame(frame)
    return frame


def hello_frame(max_dims: tuple[int, int, int]) -> Frame:
    return Frame(msg_type=MSG_HELLO, t=PROTOCOL_VERSION, batch=0, dims=tuple(max_dims))


def error_frame(message: str) -> Frame:
    raw = message.encode("utf-8")
    padded = raw + b"\x00" * (-len(raw) % 4)
    return Frame(
        msg_type=MSG_ERROR,
        t=0,
        batch=len(padded) // 4,
        dims=(1, 1, 1),
        payload=padded,
    )


def error_message(frame: Frame) -> str:
    return frame.payload.rstrip(b"\x00").decode("utf-8", errors="replace")


def pack_volumes(batch: np.ndarray) -> bytes:
    """(B, nx, ny, nz) float32 -> payload bytes, x-fastest per volume."""
    batch = np.asarray(batch, dtype="<f4")
    if batch.ndim != 4:
        raise ProtocolError(f"expected 4-D batch, got {batch.ndim}-D")
    b = batch.shape[0]
    flat = np.empty((b, batch[0].size), dtype="<f4")
    for i in range(b):
        flat[i] = batch[i].ravel(order="F")
    return flat.tobytes()


def unpack_volumes(frame: Frame) -> np.ndarray:
    """Inverse of :func:`pack_volumes` using the frame's batch and dims."""
    nx, ny, nz = frame.dims
    n = nx * ny * nz
    flat = np.frombuffer(frame.payload, dtype="<f4")
    if flat.size != frame.batch * n:
        raise ProtocolError("payload size does not match batch and dims")
    out = np.empty((frame.batch, nx, ny, nz), dtype=np.float32)
    for i in range(frame.batch):
        out[i] = flat[i * n : (i + 1) * n].reshape((nx, ny, nz), order="F")
    return out


def request_frame(batch: np.ndarray, t: int) -> Frame:
    b, nx, ny, nz = batch.shape
    return Frame(
        msg_type=MSG_PREDICT_REQUEST,
        t=t,
        batch=b,
        dims=(nx, ny, nz),
        payload=pack_volumes(batch),
    )


def response_frame(batch: np.ndarray, t: int) -> Frame:
    b, nx, ny, nz = batch.shape
    return Frame(
        msg_type=MSG_PREDICT_RESPONSE,
        t=t,
        batch=b,
        dims=(nx, ny, nz),
        payload=pack_volumes(batch),
    )
