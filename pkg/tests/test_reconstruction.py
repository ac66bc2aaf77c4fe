import math

import numpy as np
import pytest

from spadsim import likelihood as lik
from spadsim.likelihood import MleFlag
from spadsim.reconstruction import (
    DomainTransform,
    GaussianPrior,
    MleMap,
    PriorScore,
    ReconstructionError,
    ScheduleSet,
    SmoothnessPrior,
    ancestral_step,
    domain_adapt,
    dps_reconstruct,
    guidance_step,
    inverse_domain,
    mle_reconstruct,
    tweedie_estimate,
)
from spadsim.simulator import PixelRng, SensorConfig, simulate_image, simulate_pixel
from spadsim.streams import EventStream, FluxMap, StreamCollection

CLEAN = SensorConfig(dead_time=50e-9, exposure=1e-3, dark_count_rate=0.0,
                     afterpulse_probability=0.0, jitter_sigma=0.0,
                     quantum_efficiency=1.0)


def one_pixel_collection(stream):
    return StreamCollection(
        height=1, width=1, dead_ps=stream.dead_ps,
        exposure_ps=stream.exposure_ps,
        counts=np.array([[stream.n]], dtype=np.int64),
        times_ps=stream.times_ps,
    )


def collection_of(streams, height, width):
    counts = np.array([s.n for s in streams], dtype=np.int64).reshape(height, width)
    times = np.concatenate([s.times_ps for s in streams])
    return StreamCollection(height=height, width=width,
                            dead_ps=streams[0].dead_ps,
                            exposure_ps=streams[0].exposure_ps,
                            counts=counts, times_ps=times)


# ---------------------------------------------------------------- schedules


def test_schedule_consistency_enforced():
    beta = np.linspace(1e-4, 2e-2, 50)
    sched = ScheduleSet.from_beta(beta)
    assert np.max(np.abs(np.cumprod(1 - beta) - sched.alpha)) <= 1e-12
    with pytest.raises(ValueError):
        ScheduleSet(alpha=sched.alpha + 1e-6, beta=beta,
                    sigma=sched.sigma, rho=sched.rho)


def test_schedule_sigma_must_anneal_toward_zero():
    beta = np.full(4, 0.01)
    with pytest.raises(ValueError):
        ScheduleSet.from_beta(beta, sigma=np.array([0.4, 0.3, 0.2, 0.1]))


def test_default_schedule_shape():
    s = ScheduleSet.default(steps=100)
    assert s.steps == 100
    assert s.alpha[0] == pytest.approx(1 - 1e-4)
    full = ScheduleSet.default()
    assert full.steps == 1000
    assert full.alpha[-1] < 1e-3  # deep-noise end


# ------------------------------------------------------------------ tweedie


def test_tweedie_identity_when_clean():
    x = np.random.default_rng(0).standard_normal((3, 3))
    out = tweedie_estimate(x, np.zeros_like(x), 1.0)
    assert np.array_equal(out, x)


def test_tweedie_gaussian_conjugacy():
    # with the exact marginal score of a Gaussian clean law, the estimate
    # is the closed-form posterior mean of the clean image
    sched = ScheduleSet.default(steps=200)
    mu, s = 0.3, 0.7
    prior = GaussianPrior(mu, s, sched)
    rng = np.random.default_rng(1)
    for k in (0, 50, 150, 199):
        a = sched.alpha[k]
        x = rng.standard_normal((4, 4))
        got = tweedie_estimate(x, prior.evaluate(x, k), a)
        expected = (math.sqrt(a) * s**2 * x + (1 - a) * mu) / (a * s**2 + 1 - a)
        assert np.allclose(got, expected, rtol=1e-12)


def test_tweedie_affine_in_state():
    x = np.random.default_rng(2).standard_normal((2, 2))
    score = np.random.default_rng(3).standard_normal((2, 2))
    a = 0.5
    shifted = tweedie_estimate(x + 0.7, score, a) - tweedie_estimate(x, score, a)
    assert np.allclose(shifted, 0.7 / math.sqrt(a))


def test_tweedie_shape_check():
    with pytest.raises(ValueError):
        tweedie_estimate(np.zeros((2, 2)), np.zeros((3, 3)), 0.5)


# ----------------------------------------------------------------- domain


def test_domain_adapt_edges():
    tr = DomainTransform(a=100.0, b=1.0)
    out = domain_adapt(np.array([[-1.0, 0.0]]), tr)
    assert out.flux[0, 0] == 0.0
    assert out.flux[0, 1] == 100.0


def test_domain_adapt_round_trip():
    tr = DomainTransform(a=250.0, b=1.5)
    x = np.linspace(-1, 1, 9).reshape(3, 3)
    back = inverse_domain(domain_adapt(x, tr), tr)
    assert np.allclose(back, x, atol=1e-12)


def test_domain_adapt_rejects_negative_flux():
    tr = DomainTransform(a=10.0, b=1.0)
    with pytest.raises(ValueError):
        domain_adapt(np.array([[-1.2]]), tr)
    with pytest.raises(ValueError):
        DomainTransform(a=10.0, b=0.5)
    with pytest.raises(ValueError):
        DomainTransform(a=-1.0, b=1.0)


# -------------------------------------------------------------- ancestral


def test_ancestral_degenerate_schedule_is_noop():
    sched = ScheduleSet.from_beta(np.zeros(3), sigma=np.zeros(3),
                                  rho=np.zeros(3))
    x = np.random.default_rng(4).standard_normal((2, 2))
    out = ancestral_step(x, np.zeros_like(x), sched, 1, np.zeros_like(x))
    assert np.array_equal(out, x)


def test_ancestral_deterministic():
    sched = ScheduleSet.default(steps=20)
    rng = np.random.default_rng(5)
    x, x0, z = (rng.standard_normal((3, 3)) for _ in range(3))
    a = ancestral_step(x, x0, sched, 7, z)
    b = ancestral_step(x, x0, sched, 7, z)
    assert np.array_equal(a, b)


def test_ancestral_coefficient_identity():
    # on-manifold fixed point: if x_k = sqrt(alpha_k) v and the clean
    # estimate is v, the noiseless step lands exactly on sqrt(alpha_prev) v
    sched = ScheduleSet.from_beta(
        np.sort(np.random.default_rng(6).uniform(1e-4, 0.3, 30))
    )
    v = np.random.default_rng(7).standard_normal((2, 5))
    for k in range(1, 30):
        x_k = math.sqrt(sched.alpha[k]) * v
        out = ancestral_step(x_k, v, sched, k, np.zeros_like(v))
        assert np.allclose(out, math.sqrt(sched.alpha[k - 1]) * v, rtol=1e-12)


# --------------------------------------------------------------- guidance


def test_guidance_off_returns_input():
    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=1))
    col = one_pixel_collection(stream)
    x = np.array([[0.3]])
    out = guidance_step(x, col, np.array([[0.0]]), DomainTransform(a=1e5), 0.0)
    assert np.array_equal(out, x)


def test_guidance_sign_tracks_likelihood_score():
    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=2))
    col = one_pixel_collection(stream)
    mle = lik.mle_flux(stream).flux
    tr = DomainTransform(a=mle, b=1.0)
    for x_hat, direction in (
        (np.array([[0.5]]), -1.0),   # rate 1.5x the MLE: push down
        (np.array([[-0.5]]), +1.0),  # rate 0.5x the MLE: push up
    ):
        out = guidance_step(np.zeros((1, 1)), col, x_hat, tr, rho_k=1e-9)
        update = out[0, 0]
        grad, _ = lik.grad_log_likelihood_map(
            col, domain_adapt(x_hat, tr)
        )
        assert math.copysign(1.0, update) == direction
        assert math.copysign(1.0, update) == math.copysign(1.0, grad[0, 0])


def test_guidance_masks_impossible_pixels():
    busy = simulate_pixel(1e5, CLEAN, PixelRng(seed=3))
    col = one_pixel_collection(busy)
    tr = DomainTransform(a=50.0, b=1.0)
    x_hat = np.array([[-1.0]])  # maps to zero rate although events exist
    x = np.array([[0.25]])
    with pytest.warns(RuntimeWarning, match="masked 1 pixel"):
        out = guidance_step(x, col, x_hat, tr, rho_k=0.5)
    assert out[0, 0] == x[0, 0]  # masked: zero applied update


def test_guidance_norm_normalization():
    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=4))
    col = one_pixel_collection(stream)
    tr = DomainTransform(a=1e5, b=1.0)
    x_hat = np.array([[0.4]])
    raw = guidance_step(np.zeros((1, 1)), col, x_hat, tr, 1.0)
    unit = guidance_step(np.zeros((1, 1)), col, x_hat, tr, 1.0, normalize=True)
    assert abs(unit[0, 0]) == pytest.approx(1.0, rel=1e-12)
    assert math.copysign(1, unit[0, 0]) == math.copysign(1, raw[0, 0])


# -------------------------------------------------------------------- dps


def test_dps_zero_variance_prior_pins_output():
    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=5))
    col = one_pixel_collection(stream)
    sched = ScheduleSet.default(steps=50)
    prior = GaussianPrior(mean=0.25, std=0.0, schedule=sched)
    tr = DomainTransform(a=1000.0, b=1.0)
    out = dps_reconstruct(col, prior, tr, sched, seed=0)
    assert out.flux[0, 0] == pytest.approx(1000.0 * 1.25, rel=1e-12)


def test_dps_prior_sampling_moments():
    # guidance off: the loop must sample the analytic prior; pixels are
    # independent, so a 50-pixel image over 20 seeds gives 1000 samples
    mu, s = 0.2, 0.4
    sched = ScheduleSet.from_beta(np.linspace(1e-4, 2e-2, 1000),
                                  rho=np.zeros(1000))
    prior = GaussianPrior(mu, s, sched)
    tr = DomainTransform(a=100.0, b=1.0)
    base = EventStream.from_seconds([0.5], 1.0, 0.0)
    col = StreamCollection(height=50, width=1, dead_ps=0,
                           exposure_ps=base.exposure_ps,
                           counts=np.ones((50, 1), dtype=np.int64),
                           times_ps=np.concatenate([base.times_ps] * 50))
    samples = np.concatenate([
        inverse_domain(dps_reconstruct(col, prior, tr, sched, seed=sd), tr).ravel()
        for sd in range(20)
    ])
    n = samples.size
    assert abs(samples.mean() - mu) < 4 * s / math.sqrt(n)
    assert abs(samples.var() - s * s) < 4 * s * s * math.sqrt(2 / (n - 1))


def test_dps_matches_brute_force_map_small():
    # light version of the acceptance check: fewer steps, looser bar
    lam_true = 9e5
    stream = simulate_pixel(lam_true, CLEAN, PixelRng(seed=101))
    col = one_pixel_collection(stream)
    a, mu, s = 1e6, 0.0, 0.3
    tr = DomainTransform(a=a, b=1.0)
    lams = np.linspace(1.0, 2 * a, 100001)
    xs = lams / a - 1.0
    logpost = np.array([lik.log_likelihood(stream, l).log_value for l in lams])
    logpost -= (xs - mu) ** 2 / (2 * s * s)
    lam_map = lams[np.argmax(logpost)]
    sched = ScheduleSet.guided(a, steps=400)
    prior = GaussianPrior(mu, s, sched)
    out = np.median([
        dps_reconstruct(col, prior, tr, sched, seed=sd,
                        normalize_guidance=False).flux[0, 0]
        for sd in range(10)
    ])
    assert abs(out / lam_map - 1.0) < 0.03


def test_dps_states_stay_finite_across_seeds():
    img = np.linspace(0.2, 1.0, 4).reshape(2, 2)
    col = simulate_image(img, 0.4, CLEAN, seed=9)
    sched = ScheduleSet.default(steps=1000)
    prior = GaussianPrior(0.0, 0.5, sched)
    tr = DomainTransform(a=4e4, b=1.0)
    for seed in range(100):
        out = dps_reconstruct(col, prior, tr, sched, seed=seed)
        assert np.all(np.isfinite(out.flux))  # dps raises otherwise


def test_dps_prior_failure_reports_step():
    class Exploding(PriorScore):
        def evaluate(self, state, step):
            if step < 40:
                raise RuntimeError("boom")
            return np.zeros_like(state)

    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=6))
    sched = ScheduleSet.default(steps=50)
    with pytest.raises(ReconstructionError, match="step 39"):
        dps_reconstruct(one_pixel_collection(stream), Exploding(),
                        DomainTransform(a=1e5), sched, seed=0)


def test_dps_nonfinite_score_rejected():
    class BadScore(PriorScore):
        def evaluate(self, state, step):
            return np.full_like(state, np.nan)

    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=7))
    sched = ScheduleSet.default(steps=10)
    with pytest.raises(ReconstructionError, match="non-finite"):
        dps_reconstruct(one_pixel_collection(stream), BadScore(),
                        DomainTransform(a=1e5), sched, seed=0)


def test_smoothness_prior_score_direction():
    prior = SmoothnessPrior(weight=2.0)
    x = np.zeros((3, 3))
    x[1, 1] = 1.0  # a spike should be pulled down toward its neighbors
    score = prior.evaluate(x, 0)
    assert score[1, 1] < 0
    assert score[0, 1] > 0
    flat = prior.evaluate(np.full((3, 3), 0.7), 0)
    assert np.allclose(flat, 0.0)


# -------------------------------------------------------------- mle recon


def test_mle_reconstruct_uniform_is_flat():
    img = np.full((16, 16), 1.0)
    col = simulate_image(img, 0.4, CLEAN, seed=10)
    res = mle_reconstruct(col)
    lam = res.flux.flux
    assert np.all(res.flags == int(MleFlag.OK))
    assert lam.std() / lam.mean() < 0.2  # flat up to sampling noise


def test_mle_reconstruct_single_pixel_matches_scalar():
    stream = simulate_pixel(1e5, CLEAN, PixelRng(seed=11))
    res = mle_reconstruct(one_pixel_collection(stream))
    assert res.flux.flux[0, 0] == pytest.approx(lik.mle_flux(stream).flux, rel=1e-14)


def test_mle_reconstruct_monotone_in_lux():
    img = np.full((24, 24), 1.0)
    means = []
    for i, lux in enumerate((0.04, 0.12, 0.4)):
        col = simulate_image(img, lux, CLEAN, seed=12 + i)
        means.append(mle_reconstruct(col).flux.flux.mean())
    assert means[0] < means[1] < means[2]


def test_mle_reconstruct_flags_empty_pixels():
    empty = EventStream.from_seconds([], 1e-3, 50e-9)
    busy = simulate_pixel(1e5, CLEAN, PixelRng(seed=13))
    col = collection_of([empty, busy], 1, 2)
    res = mle_reconstruct(col)
    assert res.flags[0, 0] == int(MleFlag.BOUNDARY_ZERO)
    assert res.flux.flux[0, 0] == 0.0
    assert res.flags[0, 1] == int(MleFlag.OK)
