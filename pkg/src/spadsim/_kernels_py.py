"""Pure-Python / NumPy implementation of the hot kernels.

This module and the compiled extension ``spadsim._kernels`` expose the same
surface and must produce identical output draw-for-draw.  The contract both
implement:

* RNG: Philox4x32-10.  Key = 64-bit seed split into two 32-bit words.
  Counter = (block, col, row, purpose).  Each block yields two 64-bit words
  ``(x1 << 32) | x0`` and ``(x3 << 32) | x2``; draw ``d`` maps to block
  ``d // 2``, word ``d % 2``.  Uniform in (0, 1]: ``((w >> 11) + 1) * 2**-53``.
* Purposes: 0 = inter-event exponential gaps, 1 = timestamp jitter,
  2 = afterpulse coin flips.  Keeping these on separate streams means
  enabling a nuisance never perturbs the base event times.
* Times are integer picoseconds.  Gap rounding is ``floor(x + 0.5)``.
  Recorded times are strictly increasing with spacing >= dead time
  (>= 1 ps when the dead time is zero).
"""

from __future__ import annotations

import math

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_GAP_CLAMP = 4.0e18  # keeps int64 time arithmetic overflow-free
_MAX_TIME_PS = 2**61
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_U32 = np.uint64(32)

PURPOSE_GAP = 0
PURPOSE_JITTER = 1
PURPOSE_AFTERPULSE = 2


def backend_name() -> str:
    return "python"


def philox4x32_10(c0: int, c1: int, c2: int, c3: int, k0: int, k1: int):
    """One Philox4x32-10 block (scalar, for tests and documentation)."""
    m0, m1 = 0xD2511F53, 0xCD9E8D57
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> 32) ^ c1 ^ k0) & 0xFFFFFFFF,
            p1 & 0xFFFFFFFF,
            ((p0 >> 32) ^ c3 ^ k1) & 0xFFFFFFFF,
            p0 & 0xFFFFFFFF,
        )
        k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
        k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _philox_blocks(blocks, cols, rows, purpose, seed):
    """Vectorized Philox over broadcastable uint64 arrays of block indices."""
    shape = np.broadcast_shapes(np.shape(blocks), np.shape(cols), np.shape(rows))
    x0 = np.broadcast_to(np.asarray(blocks, dtype=np.uint64) & _MASK32, shape).copy()
    x1 = np.broadcast_to(np.asarray(cols, dtype=np.uint64) & _MASK32, shape).copy()
    x2 = np.broadcast_to(np.asarray(rows, dtype=np.uint64) & _MASK32, shape).copy()
    x3 = np.full(shape, np.uint64(purpose) & _MASK32, dtype=np.uint64)
    k0 = np.uint64(seed) & _MASK32
    k1 = (np.uint64(seed) >> _U32) & _MASK32
    for _ in range(10):
        p0 = _M0 * x0
        p1 = _M1 * x2
        x0, x1, x2, x3 = (
            (p1 >> _U32) ^ x1 ^ k0,
            p1 & _MASK32,
            (p0 >> _U32) ^ x3 ^ k1,
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return x0, x1, x2, x3


def _uniform_chunk(seed, rows, cols, purpose, start, count):
    """Uniforms in (0, 1] for draw indices [start, start+count) per pixel.

    rows/cols are 1-D uint64 arrays (n pixels); returns (n, count) float64.
    """
    first_block = start // 2
    last_block = (start + count - 1) // 2
    nblocks = last_block - first_block + 1
    blocks = (np.uint64(first_block) + np.arange(nblocks, dtype=np.uint64))[None, :]
    x0, x1, x2, x3 = _philox_blocks(
        blocks, np.asarray(cols, dtype=np.uint64)[:, None],
        np.asarray(rows, dtype=np.uint64)[:, None], purpose, seed,
    )
    wa = (x1 << _U32) | x0
    wb = (x3 << _U32) | x2
    words = np.empty((wa.shape[0], 2 * nblocks), dtype=np.uint64)
    words[:, 0::2] = wa
    words[:, 1::2] = wb
    lo = start - 2 * first_block
    words = words[:, lo : lo + count]
    return ((words >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53


def uniforms(seed, row, col, purpose, start, count):
    """Uniform draws [start, start+count) of one pixel stream, as float64."""
    out = _uniform_chunk(
        seed,
        np.array([row], dtype=np.uint64),
        np.array([col], dtype=np.uint64),
        purpose,
        int(start),
        int(count),
    )
    return out[0]


def _gaps_ps(u, rates):
    """Exponential inter-event gaps in integer picoseconds."""
    with np.errstate(divide="ignore"):
        g = -np.log(u) / rates
    return np.floor(np.minimum(g * 1e12 + 0.5, _GAP_CLAMP)).astype(np.int64)


def sim_counts(rates, exposure_ps, dead_ps, seed, rows, cols):
    """Detection counts per pixel, nuisance-free path.

    Consumes the same gap draws as ``sim_streams`` with nuisances disabled.
    """
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.uint64)
    cols = np.asarray(cols, dtype=np.uint64)
    active = rates > 0.0
    t_cur = np.zeros(n, dtype=np.int64)
    draw_cursor = 0
    # increments beyond the exposure end the pixel either way; clipping them
    # to exposure_ps + 1 keeps the chunk cumsum inside int64
    t_limit = exposure_ps + 1
    chunk_cap = max(1, int(8_000_000_000_000_000_000 // t_limit))
    mean = float(np.max(rates, initial=0.0)) * exposure_ps * 1e-12
    chunk = max(16, min(4096, int(mean + 10.0 * math.sqrt(mean + 1.0) + 16)))
    while np.any(active):
        chunk = min(chunk, chunk_cap)
        idx = np.nonzero(active)[0]
        u = _uniform_chunk(seed, rows[idx], cols[idx], PURPOSE_GAP, draw_cursor, chunk)
        gaps = _gaps_ps(u, rates[idx][:, None])
        incr = gaps + dead_ps
        np.maximum(incr, 1, out=incr)
        if draw_cursor == 0:
            incr[:, 0] = gaps[:, 0]  # first arrival: no preceding dead time
        np.minimum(incr, t_limit, out=incr)
        times = t_cur[idx][:, None] + np.cumsum(incr, axis=1)
        fits = times <= exposure_ps
        counts[idx] += fits.sum(axis=1)
        t_cur[idx] = times[:, -1]
        active[idx] = fits[:, -1]
        draw_cursor += chunk
        chunk = 64
    return counts


class _PixelDraws:
    """Sequential uniform draws of one pixel stream, fetched in blocks."""

    def __init__(self, seed, row, col, purpose, block=256):
        self._seed = seed
        self._row = np.array([row], dtype=np.uint64)
        self._col = np.array([col], dtype=np.uint64)
        self._purpose = purpose
        self._block = block
        self._base = 0
        self._buf = np.empty(0)
        self._pos = 0

    def take(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = _uniform_chunk(
                self._seed, self._row, self._col, self._purpose, self._base, self._block
            )[0]
            self._base += self._block
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


def _gap_ps_scalar(u, rate):
    return math.floor(min(-math.log(u) / rate * 1e12 + 0.5, _GAP_CLAMP))


def _jitter_offsets(seed, row, col, sigma_ps, m_count):
    """Gaussian jitter offsets (ps) for raw event ordinals 0..m_count-1."""
    if m_count == 0:
        return np.empty(0, dtype=np.int64)
    u = _uniform_chunk(
        seed,
        np.array([row], dtype=np.uint64),
        np.array([col], dtype=np.uint64),
        PURPOSE_JITTER,
        0,
        2 * m_count,
    )[0]
    u1, u2 = u[0::2], u[1::2]
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
    return np.floor(z * sigma_ps + 0.5).astype(np.int64)


def _repair(times_ps, dead_ps, exposure_ps):
    """Sort, then drop events violating ordering/spacing/range invariants."""
    order = np.sort(times_ps, kind="stable")
    kept = []
    min_gap = max(dead_ps, 1)
    last = None
    for t in order:
        t = int(t)
        if t < 0:
            continue
        if exposure_ps is not None and t > exposure_ps:
            break
        if last is not None and t - last < min_gap:
            continue
        kept.append(t)
        last = t
    return kept


def _raw_events_pixel(rate, dead_ps, seed, row, col, ap_prob, ap_delay_ps,
                      stop_time_ps=None, stop_count=None, state=None):
    """Core event loop for one pixel; returns (times list, resumable state)."""
    if state is None:
        gaps = _PixelDraws(seed, row, col, PURPOSE_GAP)
        coins = _PixelDraws(seed, row, col, PURPOSE_AFTERPULSE)
        t_cur = _gap_ps_scalar(gaps.take(), rate)
        times = []
    else:
        gaps, coins, t_cur, times = state
    while True:
        if stop_count is not None and len(times) >= stop_count:
            break
        if stop_time_ps is not None and t_cur > stop_time_ps:
            break
        if t_cur > _MAX_TIME_PS:
            raise OverflowError("event time exceeded the supported range")
        times.append(t_cur)
        base = t_cur
        if ap_prob > 0.0 and coins.take() < ap_prob:
            t_ap = t_cur + max(dead_ps + ap_delay_ps, 1)
            if stop_time_ps is None or t_ap <= stop_time_ps:
                times.append(t_ap)
                base = t_ap
        t_cur = base + max(dead_ps + _gap_ps_scalar(gaps.take(), rate), 1)
    return times, (gaps, coins, t_cur, times)


def _sim_pixel(rate, exposure_ps, dead_ps, seed, row, col,
               ap_prob, ap_delay_ps, jitter_sigma_ps):
    if rate <= 0.0:
        return []
    times, _ = _raw_events_pixel(
        rate, dead_ps, seed, row, col, ap_prob, ap_delay_ps,
        stop_time_ps=exposure_ps,
    )
    if jitter_sigma_ps > 0.0 and times:
        off = _jitter_offsets(seed, row, col, jitter_sigma_ps, len(times))
        jittered = np.asarray(times, dtype=np.int64) + off
        return _repair(jittered, dead_ps, exposure_ps)
    return times


def sim_streams(rates, exposure_ps, dead_ps, seed, rows, cols,
                ap_prob, ap_delay_ps, jitter_sigma_ps):
    """Full per-pixel event streams; returns (counts, concatenated times)."""
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    nuisances = ap_prob > 0.0 or jitter_sigma_ps > 0.0
    if not nuisances:
        counts = sim_counts(rates, exposure_ps, dead_ps, seed, rows, cols)
        times = np.empty(int(counts.sum()), dtype=np.int64)
        pos = 0
        for i in range(n):
            c = int(counts[i])
            if c == 0:
                continue
            u = uniforms(seed, rows[i], cols[i], PURPOSE_GAP, 0, c)
            gaps = _gaps_ps(u, rates[i])
            incr = np.maximum(gaps + dead_ps, 1)
            incr[0] = gaps[0]
            times[pos : pos + c] = np.cumsum(incr)
            pos += c
        return counts, times
    counts = np.zeros(n, dtype=np.int64)
    chunks = []
    for i in range(n):
        t = _sim_pixel(float(rates[i]), exposure_ps, dead_ps, seed,
                       int(rows[i]), int(cols[i]),
                       ap_prob, ap_delay_ps, jitter_sigma_ps)
        counts[i] = len(t)
        if t:
            chunks.append(np.asarray(t, dtype=np.int64))
    times = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return counts, times


def sim_fixed_count(rates, n_det, dead_ps, seed, rows, cols,
                    ap_prob, ap_delay_ps, jitter_sigma_ps):
    """Exactly n_det detections per pixel, unbounded exposure."""
    rates = np.asarray(rates, dtype=np.float64)
    n = rates.shape[0]
    out = np.empty(n * n_det, dtype=np.int64)
    for i in range(n):
        rate = float(rates[i])
        if rate <= 0.0:
            raise ValueError("fixed-count mode needs a positive detection rate")
        row, col = int(rows[i]), int(cols[i])
        if jitter_sigma_ps <= 0.0:
            times, _ = _raw_events_pixel(
                rate, dead_ps, seed, row, col, ap_prob, ap_delay_ps,
                stop_count=n_det,
            )
            out[i * n_det : (i + 1) * n_det] = times[:n_det]
            continue
        target = n_det
        state = None
        while True:
            times, state = _raw_events_pixel(
                rate, dead_ps, seed, row, col, ap_prob, ap_delay_ps,
                stop_count=target, state=state,
            )
            off = _jitter_offsets(seed, row, col, jitter_sigma_ps, len(times))
            kept = _repair(np.asarray(times, dtype=np.int64) + off, dead_ps, None)
            if len(kept) >= n_det:
                out[i * n_det : (i + 1) * n_det] = kept[:n_det]
                break
            target += n_det - len(kept)
    return out


def poisson_tail_sum(n: int, x: float) -> float:
    """Sum of the first n Poisson(x) terms: P(count < n).

    Log-space terms with compensated (Kahan) summation; terms past the mode
    that can no longer move the double-precision sum are skipped.
    """
    if n <= 0:
        return 0.0
    if x <= 0.0:
        return 1.0
    logx = math.log(x)
    logfact = 0.0
    total = 0.0
    comp = 0.0
    for i in range(n):
        if i > 0:
            logfact += math.log(i)
        term = math.exp(i * logx - x - logfact)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if i > x and term < 1e-18:
            break
    return total


def count_pmf_all(rate: float, exposure_ps: int, dead_ps: int) -> np.ndarray:
    """Dead-time-corrected count PMF for n = 0..max_events, as one array.

    Entry n is S(n) - S(n+1) with S(n) the Erlang CDF at the case boundary,
    so summing the array telescopes to S(0) - S(M+1) = 1.
    """
    if dead_ps <= 0:
        raise ValueError("count_pmf_all requires a positive dead time")
    m = exposure_ps // dead_ps + 1
    s = np.empty(m + 2, dtype=np.float64)
    s[0] = 1.0
    for k in range(1, m + 2):
        t_arg = exposure_ps - (k - 1) * dead_ps
        if t_arg < 0:
            t_arg = 0
        s[k] = 1.0 - poisson_tail_sum(k, rate * (t_arg * 1e-12))
    return s[:-1] - s[1:]
