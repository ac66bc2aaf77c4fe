"""Invariant verification suite behind the ``verify`` CLI command.

Each check reports a measured error against its threshold.  The
``cdf_bias`` hook multiplies odd-order Erlang CDF evaluations inside the
checks by (1 + bias); a nonzero bias is a negative control that must make
the suite fail (a uniform bias would cancel in the telescoping sums, so
the corruption alternates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import distributions as dist
from . import likelihood as lik
from .config import RunConfig
from .simulator import EventStream, simulate_counts
from .streams import seconds_to_ps

# 27-point (rate, exposure, dead) verification grid: products rate*T span
# [0.1, 50] and ratios dead/T span [1e-4, 0.1]
GRID_EXPOSURES = (1e-3, 4e-3, 1e-2)
GRID_RATE_PRODUCTS = (0.1, 5.0, 50.0)
GRID_DEAD_RATIOS = (1e-4, 5e-3, 0.1)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (
            f"[{status}] {self.name}: measured {self.measured:.3e}"
            f" (threshold {self.threshold:.1e}){extra}"
        )


def _biased_cdf(bias: float):
    def cdf(t: float, n: int, rate: float) -> float:
        value = dist.erlang_cdf(t, n, rate)
        if bias and n % 2 == 1:
            value *= 1.0 + bias
        return value

    return cdf


def _count_pmf_via(cdf, n: int, rate: float, exposure: float, dead: float) -> float:
    t_ps = seconds_to_ps(exposure)
    dead_ps = seconds_to_ps(dead)
    if dead_ps > 0 and n > t_ps // dead_ps + 1:
        return 0.0
    t1 = max(t_ps - (n - 1) * dead_ps, 0) * 1e-12
    t2 = max(t_ps - n * dead_ps, 0) * 1e-12
    return cdf(t1, n, rate) - cdf(t2, n + 1, rate)


def check_duality(cdf) -> CheckResult:
    worst = 0.0
    for n in range(51):
        for rate in (0.1, 1.0, 10.0):
            for t in (0.01, 1.0, 100.0):
                p = dist.poisson_pmf(n, rate, t)
                d = cdf(t, n, rate) - cdf(t, n + 1, rate)
                worst = max(worst, abs(p - d))
    return CheckResult("poisson-erlang-duality", worst < 1e-12, worst, 1e-12)


def check_normalization(cdf) -> CheckResult:
    worst = 0.0
    for exposure in GRID_EXPOSURES:
        for product in GRID_RATE_PRODUCTS:
            rate = product / exposure
            for ratio in GRID_DEAD_RATIOS:
                dead = ratio * exposure
                m = seconds_to_ps(exposure) // seconds_to_ps(dead) + 1
                total = math.fsum(
                    _count_pmf_via(cdf, n, rate, exposure, dead)
                    for n in range(m + 1)
                )
                worst = max(worst, abs(total - 1.0))
    return CheckResult("count-pmf-normalization", worst < 1e-9, worst, 1e-9)


def check_poisson_collapse(cdf) -> CheckResult:
    worst = 0.0
    for n in (0, 1, 3, 17, 40):
        p = _count_pmf_via(cdf, n, 2000.0, 1e-3, 0.0)
        worst = max(worst, abs(p - dist.poisson_pmf(n, 2000.0, 1e-3)))
    return CheckResult("zero-dead-time-collapse", worst < 1e-12, worst, 1e-12)


def check_cdf_monotone() -> CheckResult:
    worst = 0.0
    for rate in (0.1, 1.0, 10.0):
        for t in (0.01, 1.0, 100.0):
            vals = [dist.erlang_cdf(t, n, rate) for n in range(51)]
            worst = max(worst, max(
                (b - a) for a, b in zip(vals, vals[1:])
            ))
    return CheckResult("erlang-cdf-monotone-in-order", worst <= 0.0, worst, 0.0)


def check_gradient() -> CheckResult:
    worst = 0.0
    cases = [
        [], [0.4], [0.999],
        [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.997],
    ]
    for times in cases:
        stream = EventStream.from_seconds(times, 1.0, 0.01)
        for lam in (0.5, 5.0, 500.0):
            g = lik.grad_log_likelihood(stream, lam)
            h = 1e-6
            up = lik.log_likelihood(stream, lam * (1 + h)).log_value
            dn = lik.log_likelihood(stream, lam * (1 - h)).log_value
            fd = (up - dn) / (2 * lam * h)
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-12))
    return CheckResult("gradient-finite-difference", worst < 1e-6, worst, 1e-6)


def check_monte_carlo(config: RunConfig, pixels: int) -> CheckResult:
    sensor = config.sensor().without_nuisances()
    rate = 1e5  # detection rate exercised by the distributional check
    counts = simulate_counts(rate / sensor.quantum_efficiency, sensor, pixels, seed=20_240)
    if sensor.dead_ps > 0:
        pmf = lik.count_pmf_array(rate, sensor.exposure, sensor.dead_time)
    else:
        top = int(counts.max()) + 10
        pmf = np.array(
            [dist.poisson_pmf(n, rate, sensor.exposure) for n in range(top + 1)]
        )
    observed = np.bincount(counts, minlength=pmf.size).astype(float)
    expected = np.clip(pmf, 0, 1) * pixels
    obs_b, exp_b, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
            acc_o = acc_e = 0.0
    obs_b[-1] += acc_o
    exp_b[-1] += acc_e
    obs_arr, exp_arr = np.array(obs_b), np.array(exp_b)
    exp_arr *= obs_arr.sum() / exp_arr.sum()
    chi2 = float(((obs_arr - exp_arr) ** 2 / exp_arr).sum())
    p_value = float(stats.chi2.sf(chi2, len(obs_b) - 1))
    return CheckResult(
        "monte-carlo-chi2", p_value > 0.001, p_value, 0.001,
        detail=f"chi2={chi2:.1f} over {len(obs_b) - 1} dof, {pixels} pixels",
    )


def run_checks(config: RunConfig | None = None, mc_pixels: int = 100_000,
               cdf_bias: float = 0.0) -> list[CheckResult]:
    config = config or RunConfig()
    cdf = _biased_cdf(cdf_bias)
    return [
        check_duality(cdf),
        check_normalization(cdf),
        check_poisson_collapse(cdf),
        check_cdf_monotone(),
        check_gradient(),
        check_monte_carlo(config, mc_pixels),
    ]
