import math

import numpy as np
import pytest

from conftest import assert_histogram_close

from spadsim import distributions as dist
from spadsim import likelihood as lik
from spadsim.likelihood import CaseTag, MleFlag
from spadsim.simulator import PixelRng, SensorConfig, simulate_counts, simulate_pixel
from spadsim.streams import EventStream, FluxMap, StreamCollection


def stream_of(times, exposure=1.0, dead=0.01):
    return EventStream.from_seconds(times, exposure, dead)


def unbounded_stream(times, dead=0.01):
    return EventStream.from_seconds(times, None, dead)


# ------------------------------------------------------------------ cases


def test_empty_stream_is_open_tail():
    assert lik.classify_case(stream_of([])) is CaseTag.CASE_I


def test_case_boundary_is_closed_on_the_left_side():
    # t_last exactly at exposure - dead still leaves the tail window open
    assert lik.classify_case(stream_of([0.99])) is CaseTag.CASE_I
    assert lik.classify_case(stream_of([0.9900001])) is CaseTag.CASE_II
    assert lik.classify_case(stream_of([1.0])) is CaseTag.CASE_II


def test_unbounded_streams_are_closed_tail():
    assert lik.classify_case(unbounded_stream([0.5])) is CaseTag.CASE_II


# -------------------------------------------------------------- likelihood


def test_log_likelihood_no_events():
    res = lik.log_likelihood(stream_of([]), 3.0)
    assert res.log_value == pytest.approx(-3.0, rel=1e-14)
    assert res.case is CaseTag.CASE_I


def test_log_likelihood_direct_substitution():
    # frozen by hand: 3 ln 2 - 2 (1 - 0.03)
    res = lik.log_likelihood(stream_of([0.1, 0.3, 0.5]), 2.0)
    assert res.case is CaseTag.CASE_I
    assert res.log_value == pytest.approx(0.1394415416798358, rel=1e-12)


def _product_form_log(stream, flux):
    """Oracle: first-arrival density x shifted-exponential gaps x tail
    survival, assembled term by term from the distribution kernels."""
    t = stream.times
    dead = stream.dead_time
    total = math.log(flux * math.exp(-flux * t[0]))
    for prev, cur in zip(t[:-1], t[1:]):
        total += math.log(dist.shifted_exp_pdf(cur - prev, flux, dead))
    if lik.classify_case(stream) is CaseTag.CASE_I:
        total += -flux * (stream.exposure - t[-1] - dead)
    return total


@pytest.mark.parametrize("times,flux", [
    ([0.05, 0.21, 0.4, 0.66], 2.7),          # open tail
    ([0.05, 0.21, 0.4, 0.995], 2.7),          # closed tail
    ([0.3], 0.8),
    ([0.011, 0.024, 0.05, 0.1, 0.2, 0.5, 0.9], 11.0),
])
def test_log_likelihood_matches_product_form(times, flux):
    stream = stream_of(times)
    res = lik.log_likelihood(stream, flux)
    assert res.log_value == pytest.approx(_product_form_log(stream, flux), rel=1e-10)


def test_log_likelihood_zero_rate():
    assert lik.log_likelihood(stream_of([]), 0.0).log_value == 0.0
    assert lik.log_likelihood(stream_of([0.5]), 0.0).log_value == -math.inf
    with pytest.raises(ValueError):
        lik.log_likelihood(stream_of([0.5]), -1.0)


def test_sufficiency_interior_times_do_not_matter():
    a = lik.log_likelihood(stream_of([0.1, 0.3, 0.8]), 4.2).log_value
    b = lik.log_likelihood(stream_of([0.1, 0.52, 0.8]), 4.2).log_value
    assert a == b  # bit-identical: only N and the last time enter


def test_concavity_in_rate():
    stream = stream_of([0.1, 0.3, 0.8])
    for lam in (0.5, 2.0, 10.0, 300.0):
        h = lam * 1e-3
        f = [lik.log_likelihood(stream, v).log_value for v in (lam - h, lam, lam + h)]
        assert f[0] - 2 * f[1] + f[2] < 0


# ---------------------------------------------------------------- gradient


def _fd_gradient(stream, lam, h=1e-6):
    up = lik.log_likelihood(stream, lam * (1 + h)).log_value
    dn = lik.log_likelihood(stream, lam * (1 - h)).log_value
    return (up - dn) / (2 * lam * h)


@pytest.mark.parametrize("lam", [0.5, 5.0, 500.0])
@pytest.mark.parametrize("times", [
    [],                                   # N = 0
    [0.4],                                # N = 1, open tail
    [0.999],                              # N = 1, closed tail
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],  # N = 7, open tail
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.997],  # N = 7, closed tail
])
def test_gradient_matches_finite_difference(times, lam):
    stream = stream_of(times)
    g = lik.grad_log_likelihood(stream, lam)
    if not times:
        assert g == pytest.approx(-1.0, rel=1e-12)
    fd = _fd_gradient(stream, lam)
    scale = max(abs(g), abs(fd), 1e-9)
    assert abs(g - fd) / scale < 1e-6


def test_gradient_zero_at_stationary_point():
    stream = stream_of([0.1, 0.2, 0.3])
    lam_hat = 3 / (1.0 - 3 * 0.01)
    assert abs(lik.grad_log_likelihood(stream, lam_hat)) < 1e-9


def test_gradient_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        lik.grad_log_likelihood(stream_of([0.5]), 0.0)


# --------------------------------------------------------------- count pmf


def test_count_pmf_collapses_to_poisson_without_dead_time():
    for n in (0, 1, 5, 40):
        p = lik.count_pmf(n, 2000.0, 1e-3, 0.0)
        assert abs(p - dist.poisson_pmf(n, 2000.0, 1e-3)) < 1e-12


def test_count_pmf_normalizes():
    for lam_t in (0.1, 2.0, 50.0):
        for ratio in (0.001, 0.05):
            exposure = 1e-3
            lam = lam_t / exposure
            dead = ratio * exposure
            total = lik.count_pmf_array(lam, exposure, dead).sum()
            assert abs(total - 1.0) < 1e-9


def test_count_pmf_zero_beyond_max_events():
    assert lik.count_pmf(4, 1e3, 1e-3, 0.4e-3) == 0.0  # max is floor(2.5)+1 = 3
    assert lik.count_pmf(3, 1e3, 1e-3, 0.4e-3) > 0.0


def test_count_pmf_scalar_matches_array():
    lam, exposure, dead = 1e5, 1e-3, 50e-9
    arr = lik.count_pmf_array(lam, exposure, dead)
    for n in (0, 1, 50, 99, 100, 101, 5000, 20000, 20001):
        assert lik.count_pmf(n, lam, exposure, dead) == arr[n]


def test_count_pmf_monte_carlo_agreement():
    cfg = SensorConfig(dead_time=50e-9, exposure=1e-3, dark_count_rate=0.0,
                       afterpulse_probability=0.0, jitter_sigma=0.0,
                       quantum_efficiency=1.0)
    counts = simulate_counts(2e5, cfg, 100_000, seed=77)
    pmf = lik.count_pmf_array(2e5, cfg.exposure, cfg.dead_time)
    assert_histogram_close(counts, pmf)


def test_max_events():
    assert lik.max_events(1e-3, 50e-9) == 20001
    assert lik.max_events(1e-3, 2e-3) == 1
    assert lik.max_events(1e-3, 0.0) is None


# --------------------------------------------------------------------- mle


def test_mle_matches_grid_search():
    stream = stream_of([0.05 * i for i in range(1, 11)])  # N=10, open tail
    res = lik.mle_flux(stream)
    assert res.flag is MleFlag.OK
    assert res.flux == pytest.approx(10 / 0.9, rel=1e-12)
    lams = np.linspace(0.5 * res.flux, 1.5 * res.flux, 40001)
    vals = [lik.log_likelihood(stream, v).log_value for v in lams]
    assert lams[int(np.argmax(vals))] == pytest.approx(res.flux, rel=1e-4)


def test_mle_stationarity():
    stream = stream_of([0.1, 0.4, 0.95])
    res = lik.mle_flux(stream)
    assert abs(lik.grad_log_likelihood(stream, res.flux)) < 1e-9


def test_mle_zero_dead_time_is_classical():
    stream = stream_of([0.1, 0.4, 0.7], dead=0.0)
    assert lik.mle_flux(stream).flux == pytest.approx(3.0, rel=1e-12)


def test_mle_flags():
    assert lik.mle_flux(stream_of([])).flag is MleFlag.BOUNDARY_ZERO
    assert lik.mle_flux(stream_of([])).flux == 0.0
    # degenerate stream (start at 0, gaps exactly at the dead time): the
    # live observation time vanishes and the likelihood has no maximizer
    res = lik.mle_flux(unbounded_stream([0.0, 0.01]))
    assert res.flag is MleFlag.UNBOUNDED


def test_mle_unbounded_uses_last_time():
    stream = unbounded_stream([0.1, 0.3, 0.6])
    # live time ends at the last detection; its own dead window never closes
    assert lik.mle_flux(stream).flux == pytest.approx(3 / (0.6 - 0.02), rel=1e-12)


def test_mle_consistency_improves_with_pooling():
    # pooled maximizer error shrinks like 1/sqrt(K)
    cfg = SensorConfig(dead_time=50e-9, exposure=1e-3, dark_count_rate=0.0,
                       afterpulse_probability=0.0, jitter_sigma=0.0,
                       quantum_efficiency=1.0)
    lam = 1e5
    errors = []
    for k, seed in ((100, 5), (10_000, 6)):
        counts = simulate_counts(lam, cfg, k, seed=seed)
        # open-tail denominators dominate at lam*dead << 1; use exact streams
        total_n = counts.sum()
        denom = (cfg.exposure * k) - counts.sum() * cfg.dead_time
        errors.append(abs(total_n / denom / lam - 1.0))
    assert errors[1] < errors[0]
    assert errors[1] < 3 / math.sqrt(10_000 * lam * cfg.exposure)


# ----------------------------------------------------------- case partition


def test_case_partition_frequencies():
    # empirical case-I / case-II masses match the two Erlang-CDF forms
    cfg = SensorConfig(dead_time=40e-6, exposure=1e-3, dark_count_rate=0.0,
                       afterpulse_probability=0.0, jitter_sigma=0.0,
                       quantum_efficiency=1.0)
    lam = 2e4
    runs = 40_000
    tally = {}
    for i in range(runs):
        s = simulate_pixel(lam, cfg, PixelRng(seed=13, row=0, col=i))
        key = (s.n, lik.classify_case(s))
        tally[key] = tally.get(key, 0) + 1

    def erlang_f(t, n):
        return dist.erlang_cdf(max(t, 0.0), n, lam)

    total_checked = 0
    for n in range(0, 60):
        t_exp, dead = cfg.exposure, cfg.dead_time
        p_one = erlang_f(t_exp - n * dead, n) - erlang_f(t_exp - n * dead, n + 1)
        p_two = erlang_f(t_exp - (n - 1) * dead, n) - erlang_f(t_exp - n * dead, n)
        if n == 0:
            p_two = 0.0
        for case, p in ((CaseTag.CASE_I, p_one), (CaseTag.CASE_II, p_two)):
            emp = tally.get((n, case), 0) / runs
            se = math.sqrt(max(p * (1 - p), 1e-12) / runs)
            assert abs(emp - p) <= 4 * se + 1e-9
            total_checked += 1
    assert total_checked > 0
    assert sum(tally.values()) == runs  # the two cases partition everything


# ------------------------------------------------------------ gradient map


def _collection_from_streams(streams, height, width):
    counts = np.array([[streams[r * width + c].n for c in range(width)]
                       for r in range(height)], dtype=np.int64)
    times = np.concatenate([s.times_ps for s in streams]) if streams else []
    return StreamCollection(
        height=height, width=width,
        dead_ps=streams[0].dead_ps, exposure_ps=streams[0].exposure_ps,
        counts=counts, times_ps=np.asarray(times, dtype=np.int64),
    )


def test_grad_map_constant_for_identical_streams():
    s = stream_of([0.1, 0.5])
    col = _collection_from_streams([s] * 6, 2, 3)
    grad, invalid = lik.grad_log_likelihood_map(col, FluxMap(np.full((2, 3), 4.0)))
    assert not invalid.any()
    assert np.all(grad == grad[0, 0])


def test_grad_map_single_pixel_equals_scalar():
    s = stream_of([0.2, 0.4, 0.99])
    col = _collection_from_streams([s], 1, 1)
    grad, _ = lik.grad_log_likelihood_map(col, FluxMap(np.array([[7.0]])))
    assert grad[0, 0] == pytest.approx(lik.grad_log_likelihood(s, 7.0), rel=1e-14)


def test_grad_map_matches_finite_difference_of_sum():
    rng = np.random.default_rng(3)
    streams = [
        simulate_pixel(float(f), SensorConfig().without_nuisances(),
                       PixelRng(seed=2, col=i))
        for i, f in enumerate(rng.uniform(2e4, 2e5, 6))
    ]
    col = _collection_from_streams(streams, 2, 3)
    lam = rng.uniform(1e4, 2e5, (2, 3))
    grad, invalid = lik.grad_log_likelihood_map(col, FluxMap(lam))
    assert not invalid.any()
    h = 1e-4
    for r in range(2):
        for c in range(3):
            bumped = lam.copy()
            bumped[r, c] = lam[r, c] * (1 + h)
            up = sum(
                lik.log_likelihood(col.stream_at(i, j), bumped[i, j]).log_value
                for i in range(2) for j in range(3)
            )
            bumped[r, c] = lam[r, c] * (1 - h)
            dn = sum(
                lik.log_likelihood(col.stream_at(i, j), bumped[i, j]).log_value
                for i in range(2) for j in range(3)
            )
            fd = (up - dn) / (2 * lam[r, c] * h)
            assert grad[r, c] == pytest.approx(fd, rel=1e-5)


def test_grad_map_zero_rate_handling():
    empty = stream_of([])
    busy = stream_of([0.1, 0.5])
    col = _collection_from_streams([empty, busy], 1, 2)
    grad, invalid = lik.grad_log_likelihood_map(
        col, FluxMap(np.array([[0.0, 0.0]]))
    )
    assert grad[0, 0] == pytest.approx(-1.0)  # no-event limit: -exposure
    assert not invalid[0, 0]
    assert invalid[0, 1] and grad[0, 1] == 0.0


def test_grad_map_shape_mismatch():
    col = _collection_from_streams([stream_of([0.1])], 1, 1)
    with pytest.raises(ValueError):
        lik.grad_log_likelihood_map(col, FluxMap(np.ones((2, 2))))
