import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from spadsim import distributions as dist


class ConstantRng:
    def __init__(self, u):
        self.u = u

    def next_uniform(self):
        return self.u


# ---------------------------------------------------------------- poisson


def test_poisson_zero_count_is_survival():
    for x in (0.3, 1.0, 7.5):
        assert dist.poisson_pmf(0, x, 1.0) == pytest.approx(math.exp(-x), rel=1e-14)


def test_poisson_sums_to_one():
    total = sum(dist.poisson_pmf(n, 5.0, 1.0) for n in range(201))
    assert abs(total - 1.0) < 1e-12


def test_poisson_matches_erlang_cdf_difference():
    # identity: P(N) = F(t; N) - F(t; N+1)
    for n in (0, 1, 4, 17, 40):
        p = dist.poisson_pmf(n, 2.0, 1.5)
        d = dist.erlang_cdf(1.5, n, 2.0) - dist.erlang_cdf(1.5, n + 1, 2.0)
        assert abs(p - d) < 1e-12


def test_poisson_rejects_bad_counts():
    with pytest.raises(ValueError):
        dist.poisson_pmf(-1, 1.0, 1.0)
    with pytest.raises(ValueError):
        dist.poisson_pmf(1.5, 1.0, 1.0)


def test_poisson_zero_rate():
    assert dist.poisson_pmf(0, 0.0, 3.0) == 1.0
    assert dist.poisson_pmf(2, 0.0, 3.0) == 0.0


def test_poisson_log_path_matches_direct():
    # below the switch point the direct product form must agree with the
    # log-space evaluation to 1e-10 relative
    for n in range(0, 21):
        for x in (0.05, 1.0, 14.0):
            direct = x**n * math.exp(-x) / math.factorial(n)
            logspace = math.exp(n * math.log(x) - x - math.lgamma(n + 1))
            assert dist.poisson_pmf(n, x, 1.0) == pytest.approx(direct, rel=1e-14)
            assert logspace == pytest.approx(direct, rel=1e-10)


def test_poisson_large_count_no_overflow():
    p = dist.poisson_pmf(10_000, 1e4, 1.0)
    assert 0.0 < p < 1.0  # near the mode of a lam*t = 1e4 process


# ----------------------------------------------------------------- erlang


def test_erlang_pdf_n1_is_exponential():
    for t in (0.0, 0.2, 3.0):
        assert dist.erlang_pdf(t, 1, 2.5) == pytest.approx(
            2.5 * math.exp(-2.5 * t), rel=1e-14
        )


def test_erlang_pdf_integrates_to_one():
    val, err = quad(lambda t: dist.erlang_pdf(t, 3, 2.0), 0.0, np.inf)
    assert abs(val - 1.0) < 1e-9


def test_erlang_pdf_mode():
    # grid-search oracle: mode of n=4, rate=1 sits at t = 3
    ts = np.linspace(0.01, 10.0, 5000)
    vals = [dist.erlang_pdf(t, 4, 1.0) for t in ts]
    assert ts[int(np.argmax(vals))] == pytest.approx(3.0, abs=0.01)


def test_erlang_pdf_rejects_n0():
    with pytest.raises(ValueError):
        dist.erlang_pdf(1.0, 0, 1.0)


def test_erlang_cdf_edges():
    assert dist.erlang_cdf(5.0, 0, 2.0) == 1.0
    assert dist.erlang_cdf(0.0, 0, 2.0) == 1.0
    assert dist.erlang_cdf(0.0, 1, 2.0) == 0.0
    assert dist.erlang_cdf(0.0, 7, 2.0) == 0.0


def test_erlang_cdf_matches_quadrature():
    val, _ = quad(lambda t: dist.erlang_pdf(t, 2, 3.0), 0.0, 1.0)
    assert dist.erlang_cdf(1.0, 2, 3.0) == pytest.approx(val, abs=1e-9)


def test_erlang_cdf_nonincreasing_in_n():
    for rate in (0.1, 1.0, 10.0):
        for t in (0.01, 1.0, 100.0):
            vals = [dist.erlang_cdf(t, n, rate) for n in range(51)]
            assert all(a >= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(min_value=0, max_value=50),
    rate=st.sampled_from([0.1, 1.0, 10.0]),
    t=st.sampled_from([0.01, 1.0, 100.0]),
)
def test_duality_property(n, rate, t):
    p = dist.poisson_pmf(n, rate, t)
    d = dist.erlang_cdf(t, n, rate) - dist.erlang_cdf(t, n + 1, rate)
    assert abs(p - d) < 1e-12
    assert -1e-15 <= p <= 1.0 + 1e-15


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=40),
    rate=st.floats(min_value=1e-3, max_value=1e3),
    t=st.floats(min_value=0.0, max_value=1e2),
)
def test_cdf_bounds_property(n, rate, t):
    f = dist.erlang_cdf(t, n, rate)
    assert -1e-15 <= f <= 1.0 + 1e-15
    assert dist.erlang_pdf(t, n, rate) >= 0.0


# ------------------------------------------------------ shifted exponential


def test_shifted_exp_zero_before_dead_time():
    assert dist.shifted_exp_pdf(0.5e-9, 1e5, 50e-9) == 0.0
    assert dist.shifted_exp_pdf(49e-9, 1e5, 50e-9) == 0.0


def test_shifted_exp_reduces_to_exponential():
    for dt in (0.0, 1e-6, 3e-5):
        assert dist.shifted_exp_pdf(dt, 1e4, 0.0) == pytest.approx(
            1e4 * math.exp(-1e4 * dt), rel=1e-14
        )


def test_shifted_exp_integrates_to_one():
    dead = 2e-3
    val, _ = quad(lambda dt: dist.shifted_exp_pdf(dt, 1e3, dead), dead, np.inf)
    assert abs(val - 1.0) < 1e-9


# ----------------------------------------------------------------- sampling


def test_sample_exponential_mean():
    rng = dist.RandomStream(seed=2024)
    u = rng.uniforms(10**6)
    samples = -np.log(u) / 4.0
    assert abs(samples.mean() - 0.25) < 3 * (0.25 / 1e3)


def test_sample_exponential_endpoint():
    assert dist.sample_exponential(3.0, ConstantRng(1.0)) == 0.0


def test_sample_exponential_zero_rate_sentinel():
    assert dist.sample_exponential(0.0, ConstantRng(0.5)) == math.inf


def test_sample_exponential_deterministic():
    a = [dist.sample_exponential(2.0, dist.RandomStream(5, 1, 2)) for _ in range(4)]
    b = [dist.sample_exponential(2.0, dist.RandomStream(5, 1, 2)) for _ in range(4)]
    assert a == b  # fresh streams replay identically
    s = dist.RandomStream(5, 1, 2)
    seq = [dist.sample_exponential(2.0, s) for _ in range(4)]
    s2 = dist.RandomStream(5, 1, 2)
    seq2 = [dist.sample_exponential(2.0, s2) for _ in range(4)]
    assert seq == seq2


def test_rate_validation():
    with pytest.raises(ValueError):
        dist.poisson_pmf(1, -1.0, 1.0)
    with pytest.raises(ValueError):
        dist.erlang_cdf(1.0, 1, math.nan)
    with pytest.raises(ValueError):
        dist.sample_exponential(-2.0, ConstantRng(0.5))
