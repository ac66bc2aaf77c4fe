"""Poisson, Erlang, exponential, and shifted-exponential kernels.

All functions are pure.  Rates are events per second, times are seconds.
Counting distributions switch to log-space evaluation above n = 20 so that
counts in the tens of thousands (possible under short dead times) neither
overflow nor lose the normalization identities.
"""

from __future__ import annotations

import math

from ._backend import kernels

_LOG_SPACE_THRESHOLD = 20


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not math.isfinite(rate) or rate < 0.0:
        raise ValueError(f"rate must be finite and >= 0, got {rate!r}")
    return rate


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {t!r}")
    return t


def _check_count(n, minimum: int = 0) -> int:
    if isinstance(n, float):
        if not n.is_integer():
            raise ValueError(f"count must be an integer, got {n!r}")
        n = int(n)
    n = int(n)
    if n < minimum:
        raise ValueError(f"count must be >= {minimum}, got {n}")
    return n


def poisson_pmf(n, rate: float, t: float) -> float:
    """Probability of exactly n events in time t at the given rate."""
    n = _check_count(n)
    rate = _check_rate(rate)
    t = _check_time(t)
    x = rate * t
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if n <= _LOG_SPACE_THRESHOLD:
        return x**n * math.exp(-x) / math.factorial(n)
    return math.exp(n * math.log(x) - x - math.lgamma(n + 1))


def erlang_pdf(t: float, n, rate: float) -> float:
    """Density of the waiting time until the n-th event (n >= 1)."""
    n = _check_count(n, minimum=1)
    rate = _check_rate(rate)
    t = _check_time(t)
    x = rate * t
    if t == 0.0:
        return rate if n == 1 else 0.0
    if x == 0.0:  # rate == 0: no events ever arrive
        return 0.0
    if n <= _LOG_SPACE_THRESHOLD:
        return rate**n * t ** (n - 1) * math.exp(-x) / math.factorial(n - 1)
    return math.exp(
        n * math.log(rate) + (n - 1) * math.log(t) - x - math.lgamma(n)
    )


def erlang_cdf(t: float, n, rate: float) -> float:
    """P(the n-th event arrives by time t); exactly 1 for n = 0.

    Evaluated as one minus the finite Poisson tail sum, in log space with
    compensated summation, so that count-distribution identities built from
    differences of this function telescope exactly.
    """
    n = _check_count(n)
    rate = _check_rate(rate)
    t = _check_time(t)
    if n == 0:
        return 1.0
    return 1.0 - kernels.poisson_tail_sum(n, rate * t)


def shifted_exp_pdf(dt: float, rate: float, dead: float) -> float:
    """Inter-detection gap density under a non-paralyzable dead time."""
    dt = _check_time(dt, "dt")
    rate = _check_rate(rate)
    dead = _check_time(dead, "dead")
    if dt < dead:
        return 0.0
    return rate * math.exp(-rate * (dt - dead))


def sample_exponential(rate: float, rng) -> float:
    """Inverse-CDF exponential sample -ln(u)/rate, u in (0, 1] from rng.

    rate = 0 returns math.inf: no event ever arrives.
    """
    rate = _check_rate(rate)
    if rate == 0.0:
        return math.inf
    return -math.log(rng.next_uniform()) / rate


class RandomStream:
    """Counter-based uniform stream for one (seed, row, col, purpose) key.

    Draws are a pure function of the key and the draw index, so any number
    of streams may run concurrently in any order.
    """

    def __init__(self, seed: int, row: int = 0, col: int = 0, purpose: int = 0):
        self.seed = int(seed)
        self.row = int(row)
        self.col = int(col)
        self.purpose = int(purpose)
        self._index = 0

    def next_uniform(self) -> float:
        u = kernels.uniforms(self.seed, self.row, self.col, self.purpose,
                             self._index, 1)[0]
        self._index += 1
        return float(u)

    def uniforms(self, count: int):
        out = kernels.uniforms(self.seed, self.row, self.col, self.purpose,
                               self._index, int(count))
        self._index += int(count)
        return out
