"""Client for remote prior-score servers.

Payloads (both transports, all little-endian):

    request:  u32 step | u32 height | u32 width | height*width float32
    response: height*width float32 (same shape as the request)

Stream-socket transport wraps each payload in a 4-byte u32 length header.
A header with the top bit set (0x80000000) is an error frame: the low 31
bits give the length of a UTF-8 error message.  HTTP transport POSTs the
bare request payload to /score and returns the bare response payload on
status 200, or an error message with any other status.

See PROTOCOL.md for the byte-level specification and golden fixtures.
"""

from __future__ import annotations

import socket
import struct
import urllib.error
import urllib.request

import numpy as np

from .reconstruction import PriorScore

REQUEST_HEADER = struct.Struct("<III")
FRAME_HEADER = struct.Struct("<I")
ERROR_FLAG = 0x80000000
MAX_FRAME = 0x7FFFFFFF


class RemoteScoreError(RuntimeError):
    pass


def encode_request(state: np.ndarray, step: int) -> bytes:
    state = np.asarray(state)
    if state.ndim != 2:
        raise ValueError("state must be 2-D")
    h, w = state.shape
    return REQUEST_HEADER.pack(int(step), h, w) + state.astype("<f4").tobytes()


def decode_request(payload: bytes):
    if len(payload) < REQUEST_HEADER.size:
        raise RemoteScoreError("request payload shorter than its header")
    step, h, w = REQUEST_HEADER.unpack_from(payload, 0)
    expected = REQUEST_HEADER.size + 4 * h * w
    if len(payload) != expected:
        raise RemoteScoreError(
            f"request payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4", offset=REQUEST_HEADER.size)
    return step, data.reshape(h, w)


def encode_response(scores: np.ndarray) -> bytes:
    return np.asarray(scores).astype("<f4").tobytes()


def decode_response(payload: bytes, shape) -> np.ndarray:
    expected = 4 * shape[0] * shape[1]
    if len(payload) != expected:
        raise RemoteScoreError(
            f"response payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)


def frame_message(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise ValueError("payload too large to frame")
    return FRAME_HEADER.pack(len(payload)) + payload


def frame_error(message: str) -> bytes:
    body = message.encode("utf-8")
    if len(body) > MAX_FRAME:
        body = body[:MAX_FRAME]
    return FRAME_HEADER.pack(ERROR_FLAG | len(body)) + body


def _read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        part = sock.recv(remaining)
        if not part:
            raise RemoteScoreError("connection closed mid-frame")
        chunks.append(part)
        remaining -= len(part)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    (header,) = FRAME_HEADER.unpack(_read_exact(sock, FRAME_HEADER.size))
    body = _read_exact(sock, header & MAX_FRAME)
    if header & ERROR_FLAG:
        raise RemoteScoreError(f"server error: {body.decode('utf-8', 'replace')}")
    return body


class RemoteScorePrior(PriorScore):
    """Prior score served over the wire protocol.

    Addresses: ``host:port`` for the framed stream-socket transport, or an
    ``http://`` / ``https://`` URL for HTTP POST to /score.
    """

    parallel_safe = False  # one connection, sequential requests

    def __init__(self, address: str, timeout: float = 30.0):
        self.address = address
        self.timeout = timeout
        self._http = address.startswith(("http://", "https://"))
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            host, _, port = self.address.rpartition(":")
            try:
                self._sock = socket.create_connection(
                    (host, int(port)), timeout=self.timeout
                )
            except OSError as exc:
                raise RemoteScoreError(
                    f"cannot reach score server at {self.address}: {exc}"
                ) from exc
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def evaluate(self, state, step):
        payload = encode_request(np.asarray(state), step)
        if self._http:
            body = self._http_round_trip(payload)
        else:
            sock = self._connect()
            try:
                sock.sendall(frame_message(payload))
                body = read_frame(sock)
            except (OSError, RemoteScoreError):
                self.close()
                raise
        scores = decode_response(body, np.asarray(state).shape)
        if not np.all(np.isfinite(scores)):
            raise RemoteScoreError("server returned non-finite scores")
        return scores

    def _http_round_trip(self, payload: bytes) -> bytes:
        req = urllib.request.Request(
            self.address.rstrip("/") + "/score",
            data=payload,
            headers={"Content-Type": "application/octet-stream"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            raise RemoteScoreError(f"server error {exc.code}: {detail}") from exc
        except urllib.error.URLError as exc:
            raise RemoteScoreError(
                f"cannot reach score server at {self.address}: {exc.reason}"
            ) from exc
