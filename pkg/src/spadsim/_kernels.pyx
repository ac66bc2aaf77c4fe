# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  The backend contract (RNG layout, draw purposes,
picosecond rounding, repair rules) is documented in ``_kernels_py``; the two
modules must stay draw-for-draw identical."""

from libc.math cimport cos, exp, floor, log, sqrt
from libc.stdint cimport int64_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc, realloc

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double GAP_CLAMP = 4.0e18  # keeps int64 time arithmetic overflow-free
cdef int64_t MAX_TIME_PS = 2305843009213693952LL  # 2**61, matches streams.py

PURPOSE_GAP = 0
PURPOSE_JITTER = 1
PURPOSE_AFTERPULSE = 2


def backend_name():
    return "cython"


cdef inline void _philox_core(uint64_t x0, uint64_t x1, uint64_t x2, uint64_t x3,
                              uint64_t k0, uint64_t k1, uint64_t* out) noexcept nogil:
    cdef uint64_t p0, p1, t0, t1, t2, t3
    cdef int r
    for r in range(10):
        p0 = 0xD2511F53u * x0
        p1 = 0xCD9E8D57u * x2
        t0 = ((p1 >> 32) ^ x1 ^ k0) & 0xFFFFFFFFu
        t1 = p1 & 0xFFFFFFFFu
        t2 = ((p0 >> 32) ^ x3 ^ k1) & 0xFFFFFFFFu
        t3 = p0 & 0xFFFFFFFFu
        x0 = t0
        x1 = t1
        x2 = t2
        x3 = t3
        k0 = (k0 + 0x9E3779B9u) & 0xFFFFFFFFu
        k1 = (k1 + 0xBB67AE85u) & 0xFFFFFFFFu
    out[0] = x0
    out[1] = x1
    out[2] = x2
    out[3] = x3


def philox4x32_10(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block (scalar, for tests and documentation)."""
    cdef uint64_t out[4]
    _philox_core(<uint64_t> c0 & 0xFFFFFFFFu, <uint64_t> c1 & 0xFFFFFFFFu,
                 <uint64_t> c2 & 0xFFFFFFFFu, <uint64_t> c3 & 0xFFFFFFFFu,
                 <uint64_t> k0 & 0xFFFFFFFFu, <uint64_t> k1 & 0xFFFFFFFFu, out)
    return int(out[0]), int(out[1]), int(out[2]), int(out[3])


cdef struct Stream:
    uint64_t k0, k1
    uint64_t col, row, purpose
    uint64_t block
    uint64_t w0, w1
    int have  # buffered 64-bit words remaining; w0 is consumed first


cdef inline void _stream_init(Stream* s, uint64_t seed, uint64_t row,
                              uint64_t col, uint64_t purpose) noexcept nogil:
    s.k0 = seed & 0xFFFFFFFFu
    s.k1 = (seed >> 32) & 0xFFFFFFFFu
    s.col = col & 0xFFFFFFFFu
    s.row = row & 0xFFFFFFFFu
    s.purpose = purpose & 0xFFFFFFFFu
    s.block = 0
    s.have = 0


cdef inline double _stream_next(Stream* s) noexcept nogil:
    cdef uint64_t out[4]
    cdef uint64_t w
    if s.have == 0:
        _philox_core(s.block & 0xFFFFFFFFu, s.col, s.row, s.purpose,
                     s.k0, s.k1, out)
        s.w0 = (out[1] << 32) | out[0]
        s.w1 = (out[3] << 32) | out[2]
        s.block += 1
        s.have = 2
    if s.have == 2:
        w = s.w0
    else:
        w = s.w1
    s.have -= 1
    return <double> ((w >> 11) + 1) * INV_2_53


def uniforms(seed, row, col, purpose, start, count):
    """Uniform draws [start, start+count) of one pixel stream, as float64."""
    cdef Py_ssize_t n = count
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Stream s
    cdef Py_ssize_t skip = start & 1
    cdef Py_ssize_t i
    _stream_init(&s, <uint64_t> seed, <uint64_t> row, <uint64_t> col,
                 <uint64_t> purpose)
    s.block = <uint64_t> (start >> 1)
    with nogil:
        if skip:
            _stream_next(&s)
        for i in range(n):
            out[i] = _stream_next(&s)
    return out


cdef inline int64_t _gap_ps(Stream* s, double rate) noexcept nogil:
    cdef double g = -log(_stream_next(s)) / rate * 1e12 + 0.5
    if g > GAP_CLAMP:
        g = GAP_CLAMP
    return <int64_t> floor(g)


cdef inline int64_t _count_pixel(double rate, int64_t t_ps, int64_t dead_ps,
                                 uint64_t seed, uint64_t row,
                                 uint64_t col) noexcept nogil:
    cdef Stream gaps
    cdef int64_t t, incr, n
    if rate <= 0.0:
        return 0
    _stream_init(&gaps, seed, row, col, 0)
    t = _gap_ps(&gaps, rate)
    n = 0
    while t <= t_ps:
        n += 1
        incr = dead_ps + _gap_ps(&gaps, rate)
        if incr < 1:
            incr = 1
        t += incr
    return n


def sim_counts(rates, exposure_ps, dead_ps, seed, rows, cols):
    """Detection counts per pixel, nuisance-free path."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rates, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] rr = np.ascontiguousarray(rows, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] cc = np.ascontiguousarray(cols, dtype=np.uint64)
    cdef Py_ssize_t n = r.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n, dtype=np.int64)
    cdef int64_t t_ps = exposure_ps
    cdef int64_t d_ps = dead_ps
    cdef uint64_t sd = seed
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            counts[i] = _count_pixel(r[i], t_ps, d_ps, sd, rr[i], cc[i])
    return counts


cdef struct Buf:
    int64_t* data
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int _buf_push(Buf* b, int64_t v) noexcept nogil:
    cdef int64_t* p
    if b.size == b.cap:
        b.cap = b.cap * 2 if b.cap else 1024
        p = <int64_t*> realloc(b.data, b.cap * sizeof(int64_t))
        if p == NULL:
            return -1
        b.data = p
    b.data[b.size] = v
    b.size += 1
    return 0


cdef inline int64_t _round_off(double x) noexcept nogil:
    return <int64_t> floor(x + 0.5)


cdef int _raw_events_pixel(double rate, int64_t dead_ps, uint64_t seed,
                           uint64_t row, uint64_t col, double ap_prob,
                           int64_t ap_delay_ps, int64_t stop_time_ps,
                           Py_ssize_t stop_count, Buf* times,
                           Stream* gaps, Stream* coins,
                           int64_t* t_cur, int resume) noexcept nogil:
    """Core event loop; stop_time_ps < 0 means unbounded.
    Returns -1 on OOM, -2 on timestamp-range overflow."""
    cdef int64_t t, t_ap, incr, base
    if not resume:
        _stream_init(gaps, seed, row, col, 0)
        _stream_init(coins, seed, row, col, 2)
        t_cur[0] = _gap_ps(gaps, rate)
    while True:
        if stop_count >= 0 and times.size >= stop_count:
            break
        if stop_time_ps >= 0 and t_cur[0] > stop_time_ps:
            break
        if t_cur[0] > MAX_TIME_PS:
            return -2
        if _buf_push(times, t_cur[0]) < 0:
            return -1
        base = t_cur[0]
        if ap_prob > 0.0 and _stream_next(coins) < ap_prob:
            incr = dead_ps + ap_delay_ps
            if incr < 1:
                incr = 1
            t_ap = t_cur[0] + incr
            if stop_time_ps < 0 or t_ap <= stop_time_ps:
                if _buf_push(times, t_ap) < 0:
                    return -1
                base = t_ap
        incr = dead_ps + _gap_ps(gaps, rate)
        if incr < 1:
            incr = 1
        t_cur[0] = base + incr
    return 0


cdef void _insertion_sort(int64_t* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef int64_t v
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


cdef Py_ssize_t _jitter_and_repair(Buf* times, double sigma_ps, int64_t dead_ps,
                                   int64_t exposure_ps, uint64_t seed,
                                   uint64_t row, uint64_t col) noexcept nogil:
    """Jitter each raw event, sort, drop invariant violators in place.

    exposure_ps < 0 means unbounded.  Returns the kept count.
    """
    cdef Stream jit
    cdef Py_ssize_t m, k
    cdef int64_t min_gap, last, t
    cdef double u1, u2, z
    _stream_init(&jit, seed, row, col, 1)
    for m in range(times.size):
        u1 = _stream_next(&jit)
        u2 = _stream_next(&jit)
        z = sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
        times.data[m] = times.data[m] + _round_off(z * sigma_ps)
    _insertion_sort(times.data, times.size)
    min_gap = dead_ps if dead_ps > 1 else 1
    k = 0
    last = 0
    for m in range(times.size):
        t = times.data[m]
        if t < 0:
            continue
        if exposure_ps >= 0 and t > exposure_ps:
            break
        if k > 0 and t - last < min_gap:
            continue
        times.data[k] = t
        last = t
        k += 1
    times.size = k
    return k


def sim_streams(rates, exposure_ps, dead_ps, seed, rows, cols,
                ap_prob, ap_delay_ps, jitter_sigma_ps):
    """Full per-pixel event streams; returns (counts, concatenated times)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rates, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] rr = np.ascontiguousarray(rows, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] cc = np.ascontiguousarray(cols, dtype=np.uint64)
    cdef Py_ssize_t n = r.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n, dtype=np.int64)
    cdef int64_t t_ps = exposure_ps
    cdef int64_t d_ps = dead_ps
    cdef int64_t ap_ps = ap_delay_ps
    cdef double ap = ap_prob
    cdef double sig = jitter_sigma_ps
    cdef uint64_t sd = seed
    cdef Buf all_times, pix
    cdef Stream gaps, coins
    cdef int64_t t_cur
    cdef Py_ssize_t i, m
    cdef int status = 0
    all_times.data = NULL
    all_times.size = 0
    all_times.cap = 0
    pix.data = NULL
    pix.size = 0
    pix.cap = 0
    with nogil:
        for i in range(n):
            if r[i] <= 0.0:
                continue
            pix.size = 0
            status = _raw_events_pixel(r[i], d_ps, sd, rr[i], cc[i], ap, ap_ps,
                                       t_ps, -1, &pix, &gaps, &coins, &t_cur, 0)
            if status < 0:
                break
            if sig > 0.0 and pix.size > 0:
                _jitter_and_repair(&pix, sig, d_ps, t_ps, sd, rr[i], cc[i])
            counts[i] = pix.size
            for m in range(pix.size):
                if _buf_push(&all_times, pix.data[m]) < 0:
                    status = -1
                    break
            if status < 0:
                break
    free(pix.data)
    if status == -2:
        free(all_times.data)
        raise OverflowError("event time exceeded the supported range")
    if status < 0:
        free(all_times.data)
        raise MemoryError("event buffer allocation failed")
    out = np.empty(all_times.size, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_view = out
    for m in range(all_times.size):
        out_view[m] = all_times.data[m]
    free(all_times.data)
    return counts, out


def sim_fixed_count(rates, n_det, dead_ps, seed, rows, cols,
                    ap_prob, ap_delay_ps, jitter_sigma_ps):
    """Exactly n_det detections per pixel, unbounded exposure."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rates, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] rr = np.ascontiguousarray(rows, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] cc = np.ascontiguousarray(cols, dtype=np.uint64)
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t nd = n_det
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n * nd, dtype=np.int64)
    cdef int64_t d_ps = dead_ps
    cdef int64_t ap_ps = ap_delay_ps
    cdef double ap = ap_prob
    cdef double sig = jitter_sigma_ps
    cdef uint64_t sd = seed
    cdef Buf raw, work
    cdef Stream gaps, coins
    cdef int64_t t_cur
    cdef Py_ssize_t i, m, kept, target
    cdef int status = 0
    for i in range(n):
        if r[i] <= 0.0:
            raise ValueError("fixed-count mode needs a positive detection rate")
    raw.data = NULL
    raw.size = 0
    raw.cap = 0
    work.data = NULL
    work.size = 0
    work.cap = 0
    with nogil:
        for i in range(n):
            raw.size = 0
            if sig <= 0.0:
                status = _raw_events_pixel(r[i], d_ps, sd, rr[i], cc[i], ap,
                                           ap_ps, -1, nd, &raw, &gaps, &coins,
                                           &t_cur, 0)
                if status < 0:
                    break
                for m in range(nd):
                    out[i * nd + m] = raw.data[m]
                continue
            target = nd
            status = _raw_events_pixel(r[i], d_ps, sd, rr[i], cc[i], ap, ap_ps,
                                       -1, target, &raw, &gaps, &coins, &t_cur, 0)
            if status < 0:
                break
            while True:
                work.size = 0
                for m in range(raw.size):
                    if _buf_push(&work, raw.data[m]) < 0:
                        status = -1
                        break
                if status < 0:
                    break
                kept = _jitter_and_repair(&work, sig, d_ps, -1, sd, rr[i], cc[i])
                if kept >= nd:
                    for m in range(nd):
                        out[i * nd + m] = work.data[m]
                    break
                target = target + (nd - kept)
                status = _raw_events_pixel(r[i], d_ps, sd, rr[i], cc[i], ap,
                                           ap_ps, -1, target, &raw, &gaps,
                                           &coins, &t_cur, 1)
                if status < 0:
                    break
            if status < 0:
                break
    free(raw.data)
    free(work.data)
    if status == -2:
        raise OverflowError("event time exceeded the supported range")
    if status < 0:
        raise MemoryError("event buffer allocation failed")
    return out


cdef double _tail_sum(int64_t n, double x) noexcept nogil:
    cdef double logx, logfact, total, comp, term, y, t
    cdef int64_t i
    if n <= 0:
        return 0.0
    if x <= 0.0:
        return 1.0
    logx = log(x)
    logfact = 0.0
    total = 0.0
    comp = 0.0
    for i in range(n):
        if i > 0:
            logfact += log(<double> i)
        term = exp(i * logx - x - logfact)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if i > x and term < 1e-18:
            break
    return total


def poisson_tail_sum(n, x):
    """Sum of the first n Poisson(x) terms: P(count < n)."""
    return _tail_sum(<int64_t> n, <double> x)


def count_pmf_all(rate, exposure_ps, dead_ps):
    """Dead-time-corrected count PMF for n = 0..max_events, as one array."""
    cdef int64_t t_ps = exposure_ps
    cdef int64_t d_ps = dead_ps
    cdef double lam = rate
    if d_ps <= 0:
        raise ValueError("count_pmf_all requires a positive dead time")
    cdef int64_t m = t_ps // d_ps + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.empty(m + 2, dtype=np.float64)
    cdef int64_t k, t_arg
    with nogil:
        s[0] = 1.0
        for k in range(1, m + 2):
            t_arg = t_ps - (k - 1) * d_ps
            if t_arg < 0:
                t_arg = 0
            s[k] = 1.0 - _tail_sum(k, lam * (t_arg * 1e-12))
    return s[: m + 1] - s[1 : m + 2]
