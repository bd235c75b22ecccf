"""Denoiser backend client, loopback server, and transports.

One connection carries one request at a time; concurrency comes from
multiple connections. Both sides send a Hello immediately after connecting
and then read the peer's Hello, so the handshake cannot deadlock.
"""

from __future__ import annotations

import socket
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from . import protocol as proto
from .denoisers import Denoiser
from .errors import (
    BackendError,
    ConnectTimeout,
    InvalidConfig,
    InvalidRequest,
    IoError,
    ProtocolError,
    RequestTimeout,
)

DEFAULT_MAX_DIMS = (32, 32, 32)


@dataclass(frozen=True)
class BackendEndpoint:
    """Where a denoiser backend lives: TCP address or a child process."""

    kind: str  # "tcp" or "stdio"
    address: tuple[str, int] | tuple[str, ...]
    timeout_ms: int = 30_000

    def __post_init__(self):
        if self.kind not in ("tcp", "stdio"):
            raise InvalidConfig(f"unknown endpoint kind {self.kind!r}")
        if self.timeout_ms <= 0:
            raise InvalidConfig(f"timeout must be positive, got {self.timeout_ms}")

    @classmethod
    def parse(cls, spec: str, timeout_ms: int = 30_000) -> "BackendEndpoint":
        """Parse ``tcp:host:port`` or ``stdio:cmd arg ...``."""
        kind, _, rest = spec.partition(":")
        if kind == "tcp":
            host, _, port = rest.rpartition(":")
            if not host or not port.isdigit():
                raise InvalidConfig(f"malformed tcp endpoint {spec!r}")
            return cls(kind="tcp", address=(host, int(port)), timeout_ms=timeout_ms)
        if kind == "stdio":
            argv = tuple(rest.split())
            if not argv:
                raise InvalidConfig(f"stdio endpoint needs a command: {spec!r}")
            return cls(kind="stdio", address=argv, timeout_ms=timeout_ms)
        raise InvalidConfig(f"unknown endpoint kind in {spec!r}")


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except (socket.timeout, TimeoutError) as exc:
            raise ConnectTimeout(f"connect to {host}:{port} timed out") from exc
        except OSError as exc:
            raise ConnectTimeout(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.settimeout(timeout)

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except (socket.timeout, TimeoutError) as exc:
            raise RequestTimeout("send timed out") from exc
        except OSError as exc:
            raise ProtocolError(f"send failed: {exc}") from exc

    def recv_exactly(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self.sock.recv(min(remaining, 1 << 20))
            except (socket.timeout, TimeoutError) as exc:
                raise RequestTimeout("receive timed out") from exc
            except OSError as exc:
                raise ProtocolError(f"receive failed: {exc}") from exc
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class _StdioTransport:
    """Frames over a child process's stdin/stdout."""

    def __init__(self, argv: tuple[str, ...], timeout: float):
        self.timeout = timeout
        try:
            self.proc = subprocess.Popen(
                list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise ConnectTimeout(f"cannot start {argv[0]}: {exc}") from exc

    def send(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"child stdin failed: {exc}") from exc

    def recv_exactly(self, n: int) -> bytes:
        # Blocking pipe reads; the child exiting surfaces as a short read.
        data = self.proc.stdout.read(n)
        if data is None or len(data) != n:
            raise ProtocolError("child closed the pipe mid-frame")
        return data

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self.proc.terminate()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


def _read_frame(transport) -> proto.Frame:
    header = transport.recv_exactly(proto.HEADER_SIZE)
    skeleton = proto.decode_header(header)
    payload = transport.recv_exactly(4 * skeleton.payload_voxels())
    return proto.decode_frame(header + payload)


class BackendClient:
    """Client side of the GPN1 protocol; realizes the Denoiser interface."""

    def __init__(self, transport, advertised_dims: tuple[int, int, int]):
        self._transport = transport
        self.advertised_dims = advertised_dims
        self._lock = threading.Lock()

    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x = np.asarray(x_t, dtype=np.float32)
        if x.ndim != 4:
            raise InvalidRequest(f"expected (B, nx, ny, nz) batch, got shape {x.shape}")
        if any(d > m for d, m in zip(x.shape[1:], self.advertised_dims)):
            raise InvalidRequest(
                f"window {x.shape[1:]} exceeds advertised max {self.advertised_dims}"
            )
        if not 0 <= t <= 0xFFFF or x.shape[0] > 0xFFFF:
            raise InvalidRequest("step index or batch too large for the wire format")
        request = proto.request_frame(x, t)
        with self._lock:
            self._transport.send(proto.encode_frame(request))
            reply = _read_frame(self._transport)
        if reply.msg_type == proto.MSG_ERROR:
            raise BackendError(proto.error_message(reply))
        if reply.msg_type != proto.MSG_PREDICT_RESPONSE:
            raise ProtocolError(f"unexpected reply type {reply.msg_type}")
        if reply.batch != request.batch or reply.dims != request.dims:
            raise ProtocolError("response batch/dims do not match request")
        return proto.unpack_volumes(reply)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(endpoint: BackendEndpoint) -> BackendClient:
    """Open a transport and exchange Hello frames."""
    timeout = endpoint.timeout_ms / 1000.0
    if endpoint.kind == "tcp":
        host, port = endpoint.address
        transport = _TcpTransport(host, int(port), timeout)
    else:
        transport = _StdioTransport(tuple(endpoint.address), timeout)
    try:
        transport.send(proto.encode_frame(proto.hello_frame(DEFAULT_MAX_DIMS)))
        try:
            hello = _read_frame(transport)
        except RequestTimeout as exc:
            raise ConnectTimeout(str(exc)) from exc
        if hello.msg_type != proto.MSG_HELLO:
            raise ProtocolError(f"expected Hello, got msg_type {hello.msg_type}")
        return BackendClient(transport, hello.dims)
    except Exception:
        transport.close()
        raise


class LoopbackServer:
    """In-process TCP server wrapping any Denoiser; one worker per connection."""

    def __init__(self, denoiser: Denoiser, host: str = "127.0.0.1", port: int = 0,
                 max_dims: tuple[int, int, int] = DEFAULT_MAX_DIMS):
        self.denoiser = denoiser
        self.max_dims = tuple(max_dims)
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise IoError(f"cannot bind {host}:{port}: {exc}") from exc
        self.address = self._listener.getsockname()
        self._closing = threading.Event()
        self._threads: list[threading.Thread] = []
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    @property
    def endpoint(self) -> BackendEndpoint:
        return BackendEndpoint(kind="tcp", address=(self.address[0], self.address[1]))

    def _accept_loop(self) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            worker = threading.Thread(target=self._serve_one, args=(conn,), daemon=True)
            worker.start()
            self._threads.append(worker)

    def _serve_one(self, conn: socket.socket) -> None:
        conn.settimeout(None)
        transport = _TcpTransportWrapper(conn)
        try:
            transport.send(proto.encode_frame(proto.hello_frame(self.max_dims)))
            hello = _read_frame(transport)
            if hello.msg_type != proto.MSG_HELLO:
                transport.send(proto.encode_frame(proto.error_frame("expected Hello")))
                return
            while not self._closing.is_set():
                frame = _read_frame(transport)
                reply = serve_request(self.denoiser, frame, self.max_dims)
                transport.send(proto.encode_frame(reply))
        except (ProtocolError, OSError):
            pass  # peer went away or spoke garbage; drop the connection
        finally:
            transport.close()

    def close(self) -> None:
        self._closing.set()
        try:
            self._listener.close()
        except OSError:
            pass
        for worker in self._threads:
            worker.join(timeout=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _TcpTransportWrapper:
    """Server-side view of an accepted socket with the transport interface."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv_exactly(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            chunk = self.sock.recv(min(remaining, 1 << 20))
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def serve_request(
    denoiser: Denoiser, frame: proto.Frame, max_dims: tuple[int, int, int]
) -> proto.Frame:
    """Answer one request frame (shared by the TCP and stdio servers)."""
    if frame.msg_type != proto.MSG_PREDICT_REQUEST:
        return proto.error_frame(f"unexpected msg_type {frame.msg_type}")
    if any(d > m for d, m in zip(frame.dims, max_dims)):
        return proto.error_frame(
            f"window {frame.dims} exceeds supported max {tuple(max_dims)}"
        )
    try:
        x = proto.unpack_volumes(frame)
        eps = np.asarray(denoiser.predict_noise(x, frame.t), dtype=np.float32)
        if eps.shape != x.shape:
            return proto.error_frame(f"denoiser returned shape {eps.shape}")
        return proto.response_frame(eps, frame.t)
    except Exception as exc:  # backend errors must travel as frames
        return proto.error_frame(f"{type(exc).__name__}: {exc}")


def serve_loopback(
    denoiser: Denoiser,
    host: str = "127.0.0.1",
    port: int = 0,
    max_dims: tuple[int, int, int] = DEFAULT_MAX_DIMS,
) -> LoopbackServer:
    """Start a background TCP server for ``denoiser``; returns its handle."""
    return LoopbackServer(denoiser, host, port, max_dims)


def serve_stdio(denoiser: Denoiser, stdin, stdout,
                max_dims: tuple[int, int, int] = DEFAULT_MAX_DIMS) -> None:
    """Serve the protocol over binary stdio pipes until EOF."""

    class _Pipe:
        def send(self, data: bytes) -> None:
            stdout.write(data)
            stdout.flush()

        def recv_exactly(self, n: int) -> bytes:
            data = stdin.read(n)
            if data is None or len(data) != n:
                raise ProtocolError("stdin closed")
            return data

    pipe = _Pipe()
    pipe.send(proto.encode_frame(proto.hello_frame(max_dims)))
    try:
        hello = _read_frame(pipe)
        if hello.msg_type != proto.MSG_HELLO:
            return
        while True:
            frame = _read_frame(pipe)
            pipe.send(proto.encode_frame(serve_request(denoiser, frame, max_dims)))
    except ProtocolError:
        return
