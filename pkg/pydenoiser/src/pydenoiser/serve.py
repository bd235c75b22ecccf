"""GPN1 protocol server for the trained noise predictor.

Frame format (little-endian): magic "GPN1", u8 msg_type (0 predict-request,
1 predict-response, 2 error, 3 hello), u16 t, u16 batch, 3x u16 dims, then
batch*nx*ny*nz float32 values, x-fastest within each volume. Hello frames
carry no payload and advertise the maximum window in dims; error frames
carry a NUL-padded UTF-8 message with dims (1,1,1) and batch = bytes/4.

Each side sends its Hello immediately after connect, then reads the peer's.
One request is handled at a time per connection.
"""

from __future__ import annotations

import socket
import struct
import threading

import numpy as np
import torch

from .train import Checkpoint

MAGIC = b"GPN1"
HEADER = struct.Struct("<4sBHHHHH")
MSG_REQUEST, MSG_RESPONSE, MSG_ERROR, MSG_HELLO = 0, 1, 2, 3
WINDOW = (32, 32, 32)


class WireError(RuntimeError):
    pass


def pack_frame(msg_type: int, t: int, batch: int, dims, payload: bytes = b"") -> bytes:
    nx, ny, nz = dims
    if len(payload) != 4 * batch * nx * ny * nz:
        raise WireError("payload length does not match header")
    return HEADER.pack(MAGIC, msg_type, t, batch, nx, ny, nz) + payload


def error_payload(message: str) -> tuple[int, bytes]:
    raw = message.encode("utf-8")
    raw += b"\x00" * (-len(raw) % 4)
    return len(raw) // 4, raw


def read_exactly(recv, n: int) -> bytes:
    chunks = []
    while n:
        chunk = recv(n)
        if not chunk:
            raise WireError("peer closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(recv):
    header = read_exactly(recv, HEADER.size)
    magic, msg_type, t, batch, nx, ny, nz = HEADER.unpack(header)
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    payload = read_exactly(recv, 4 * batch * nx * ny * nz)
    return msg_type, t, batch, (nx, ny, nz), payload


class PredictorServer:
    """Serves a checkpointed model; thread per connection."""

    def __init__(self, checkpoint: Checkpoint, host: str = "127.0.0.1", port: int = 0):
        self.model = checkpoint.model
        self.model.eval()
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._closing = threading.Event()
        self._lock = threading.Lock()  # model eval is not reentrant-safe on CPU
        self._accept = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept.start()

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket):
        try:
            conn.sendall(pack_frame(MSG_HELLO, 1, 0, WINDOW))
            msg_type, *_ = read_frame(conn.recv)
            if msg_type != MSG_HELLO:
                batch, payload = error_payload("expected Hello")
                conn.sendall(pack_frame(MSG_ERROR, 0, batch, (1, 1, 1), payload))
                return
            while not self._closing.is_set():
                msg_type, t, batch, dims, payload = read_frame(conn.recv)
                conn.sendall(self._answer(msg_type, t, batch, dims, payload))
        except (WireError, OSError):
            pass
        finally:
            conn.close()

    def _answer(self, msg_type, t, batch, dims, payload) -> bytes:
        if msg_type != MSG_REQUEST:
            n, raw = error_payload(f"unexpected msg_type {msg_type}")
            return pack_frame(MSG_ERROR, 0, n, (1, 1, 1), raw)
        if dims != WINDOW:
            n, raw = error_payload(f"window {dims} unsupported, need {WINDOW}")
            return pack_frame(MSG_ERROR, 0, n, (1, 1, 1), raw)
        try:
            eps = self.predict(payload_to_batch(payload, batch, dims), t)
            return pack_frame(MSG_RESPONSE, t, batch, dims, batch_to_payload(eps))
        except Exception as exc:
            n, raw = error_payload(f"{type(exc).__name__}: {exc}")
            return pack_frame(MSG_ERROR, 0, n, (1, 1, 1), raw)

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        with self._lock, torch.inference_mode():
            xt = torch.from_numpy(x)[:, None]
            eps = self.model(xt, int(t))
        return eps[:, 0].numpy().astype(np.float32)

    def close(self):
        self._closing.set()
        try:
            self._listener.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def payload_to_batch(payload: bytes, batch: int, dims) -> np.ndarray:
    """Wire payload -> (batch, nx, ny, nz) float32 array."""
    nx, ny, nz = dims
    flat = np.frombuffer(payload, dtype="<f4")
    out = np.empty((batch, nx, ny, nz), dtype=np.float32)
    n = nx * ny * nz
    for i in range(batch):
        out[i] = flat[i * n : (i + 1) * n].reshape((nx, ny, nz), order="F")
    return out


def batch_to_payload(batch: np.ndarray) -> bytes:
    b = batch.shape[0]
    flat = np.empty((b, batch[0].size), dtype="<f4")
    for i in range(b):
        flat[i] = batch[i].ravel(order="F")
    return flat.tobytes()


def serve_stdio(checkpoint: Checkpoint, stdin, stdout) -> None:
    """Serve over binary stdio pipes until EOF (for stdio: endpoints)."""
    server = PredictorServer.__new__(PredictorServer)
    server.model = checkpoint.model
    server.model.eval()
    server._lock = threading.Lock()

    stdout.write(pack_frame(MSG_HELLO, 1, 0, WINDOW))
    stdout.flush()
    try:
        msg_type, *_ = read_frame(stdin.read)
        if msg_type != MSG_HELLO:
            return
        while True:
            msg_type, t, batch, dims, payload = read_frame(stdin.read)
            stdout.write(server._answer(msg_type, t, batch, dims, payload))
            stdout.flush()
    except WireError:
        return
