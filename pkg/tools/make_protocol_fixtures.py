#!/usr/bin/env python3
"""Regenerate the golden protocol fixtures in protocol_fixtures/."""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from spadsim.remote_score import (  # noqa: E402
    encode_request,
    encode_response,
    frame_error,
    frame_message,
)


def ramp_image(h, w):
    n = h * w
    return (-1.0 + 2.0 * np.arange(n) / (n - 1)).reshape(h, w)


def gaussian01_score(state):
    # the bridge's gaussian:0,1 test model: score = (0 - x) / 1^2
    return -np.asarray(state, dtype=np.float32)


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "protocol_fixtures"
    out.mkdir(exist_ok=True)

    img = ramp_image(8, 8)
    req = encode_request(img, 3)
    resp = encode_response(gaussian01_score(img.astype(np.float32)))
    (out / "request_8x8_k3.bin").write_bytes(frame_message(req))
    (out / "request_8x8_k3_raw.bin").write_bytes(req)
    (out / "response_8x8_k3.bin").write_bytes(frame_message(resp))
    (out / "response_8x8_k3_raw.bin").write_bytes(resp)

    one = np.array([[0.25]])
    req1 = encode_request(one, 0)
    resp1 = encode_response(gaussian01_score(one.astype(np.float32)))
    (out / "request_1x1_k0.bin").write_bytes(frame_message(req1))
    (out / "response_1x1_k0.bin").write_bytes(frame_message(resp1))

    (out / "error_frame.bin").write_bytes(frame_error("test error message"))
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
