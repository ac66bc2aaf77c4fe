"""Binary event-stream file format.

Little-endian layout:

    offset  size  field
    0       8     magic "SPADEVT1"
    8       4     version (u32, currently 1)
    12      4     height (u32)
    16      4     width (u32)
    20      8     exposure in nanoseconds (u64, 0 = unbounded)
    28      8     dead time in nanoseconds (u64)
    36      ...   per pixel, row-major: count (u32) then count
                  timestamps (u64, picoseconds)

Timestamps are integer picoseconds so write/read round-trips are
byte-exact and the dead-time spacing check stays integer arithmetic.
"""

from __future__ import annotations

import struct

import numpy as np

from .streams import StreamCollection

MAGIC = b"SPADEVT1"
VERSION = 1
_HEADER = struct.Struct("<8sIIIQQ")


class EventFileError(ValueError):
    """Malformed event file; message carries the failing byte offset."""


def write_events(path, streams: StreamCollection) -> None:
    if streams.bounded:
        if streams.exposure_ps % 1000 != 0:
            raise ValueError("exposure must sit on the nanosecond grid")
        exposure_ns = streams.exposure_ps // 1000
        if exposure_ns == 0:
            raise ValueError("bounded exposure must be at least 1 ns")
    else:
        exposure_ns = 0
    if streams.dead_ps % 1000 != 0:
        raise ValueError("dead time must sit on the nanosecond grid")
    counts = streams.counts.ravel()
    if streams.times_ps.size and streams.times_ps.min() < 0:
        raise ValueError("negative timestamp")
    counts32 = counts.astype("<u4")
    times64 = streams.times_ps.astype("<u8")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC,
                VERSION,
                streams.height,
                streams.width,
                exposure_ns,
                streams.dead_ps // 1000,
            )
        )
        pos = 0
        for i, c in enumerate(counts):
            fh.write(counts32[i].tobytes())
            if c:
                fh.write(times64[pos : pos + c].tobytes())
                pos += int(c)


def read_events(path) -> StreamCollection:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise EventFileError(f"truncated header at offset {len(data)}")
    magic, version, height, width, exposure_ns, dead_ns = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EventFileError(f"bad magic at offset 0: {magic!r}")
    if version != VERSION:
        raise EventFileError(f"unsupported version {version} at offset 8")
    if height == 0 or width == 0:
        raise EventFileError("zero image dimension at offset 12")
    n_pixels = int(height) * int(width)
    counts = np.empty(n_pixels, dtype=np.int64)
    chunks = []
    offset = _HEADER.size
    for i in range(n_pixels):
        if offset + 4 > len(data):
            raise EventFileError(f"truncated pixel count at offset {offset}")
        (c,) = struct.unpack_from("<I", data, offset)
        offset += 4
        end = offset + 8 * c
        if end > len(data):
            raise EventFileError(f"truncated timestamps at offset {offset}")
        counts[i] = c
        if c:
            chunks.append(np.frombuffer(data[offset:end], dtype="<u8").astype(np.int64))
        offset = end
    if offset != len(data):
        raise EventFileError(f"{len(data) - offset} trailing bytes at offset {offset}")
    times = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    col = StreamCollection(
        height=int(height),
        width=int(width),
        dead_ps=int(dead_ns) * 1000,
        exposure_ps=int(exposure_ns) * 1000 if exposure_ns else None,
        counts=counts.reshape(int(height), int(width)),
        times_ps=times,
    )
    _check_invariants(col)
    return col


def _pixel_of(counts, flat_index):
    return int(np.searchsorted(np.cumsum(counts), flat_index, side="right"))


def _byte_offset(counts, flat_index):
    pixel = _pixel_of(counts, flat_index)
    return _HEADER.size + 4 * (pixel + 1) + 8 * flat_index, pixel


def _check_invariants(col: StreamCollection) -> None:
    """Vectorized ordering/spacing/bounds checks with offset diagnostics."""
    times = col.times_ps
    counts = col.counts.ravel()
    if times.size == 0:
        return
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    nonempty = counts > 0
    firsts = starts[nonempty]
    if np.any(times[firsts] < 0):
        flat = int(firsts[np.argmax(times[firsts] < 0)])
        byte, pixel = _byte_offset(counts, flat)
        raise EventFileError(f"negative timestamp at offset {byte} (pixel {pixel})")
    if times.size > 1:
        gaps = np.diff(times)
        within = np.ones(times.size - 1, dtype=bool)
        cross = firsts[firsts > 0] - 1  # gap indices that span two pixels
        within[cross] = False
        bad = (gaps < max(col.dead_ps, 1)) & within
        if np.any(bad):
            flat = int(np.argmax(bad)) + 1
            byte, pixel = _byte_offset(counts, flat)
            raise EventFileError(
                f"dead-time spacing violated at offset {byte} (pixel {pixel})"
            )
    if col.bounded:
        lasts = starts[nonempty] + counts[nonempty] - 1
        over = times[lasts] > col.exposure_ps
        if np.any(over):
            flat = int(lasts[np.argmax(over)])
            byte, pixel = _byte_offset(counts, flat)
            raise EventFileError(
                f"timestamp beyond the exposure at offset {byte} (pixel {pixel})"
            )
