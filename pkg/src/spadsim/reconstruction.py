"""Guided annealed-Langevin reconstruction of flux maps from event streams.

The sampler runs the standard ancestral reverse-diffusion loop with a
pluggable prior score.  Each iteration estimates the clean image from the
current state and score, takes the ancestral step, maps the clean estimate
to flux space through an affine transform, and nudges the state along the
per-pixel likelihood gradient.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .likelihood import MleFlag, grad_log_likelihood_map, mle_flux
from .streams import FluxMap, StreamCollection


class ReconstructionError(RuntimeError):
    pass


@dataclass
class ScheduleSet:
    """Per-step noise/guidance schedules, indexed 0..steps-1; the sampling
    loop counts the index down.  alpha is the running product of (1 - beta)
    and must stay consistent with beta to 1e-12."""

    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma", "rho"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        k = self.alpha.shape[0]
        if any(getattr(self, n).shape != (k,) for n in ("beta", "sigma", "rho")):
            raise ValueError("all schedule arrays must share one length")
        if k == 0:
            raise ValueError("schedule needs at least one step")
        if np.any(self.alpha <= 0) or np.any(self.alpha > 1):
            raise ValueError("alpha must lie in (0, 1]")
        if np.any(self.beta < 0) or np.any(self.beta >= 1):
            raise ValueError("beta must lie in [0, 1)")
        if np.any(self.sigma < 0) or np.any(self.rho < 0):
            raise ValueError("sigma and rho must be >= 0")
        if np.any(np.diff(self.sigma) < 0):
            raise ValueError("sigma must not increase toward step 0")
        derived = np.cumprod(1.0 - self.beta)
        if np.max(np.abs(derived - self.alpha)) > 1e-12:
            raise ValueError("alpha is inconsistent with cumprod(1 - beta)")

    @property
    def steps(self) -> int:
        return int(self.alpha.shape[0])

    @classmethod
    def from_beta(cls, beta, sigma=None, rho=None) -> "ScheduleSet":
        beta = np.asarray(beta, dtype=np.float64)
        alpha = np.cumprod(1.0 - beta)
        if sigma is None:
            sigma = np.sqrt(beta)
        if rho is None:
            rho = np.ones_like(beta)
        return cls(alpha=alpha, beta=beta, sigma=np.asarray(sigma, float),
                   rho=np.asarray(rho, float))

    @classmethod
    def default(cls, steps: int = 1000, beta_start: float = 1e-4,
                beta_end: float = 2e-2, rho0: float = 1.0) -> "ScheduleSet":
        """Linear beta ramp, sigma = sqrt(beta), constant guidance weight.

        Meant for gradient-norm-normalized guidance (the dps default),
        where rho0 sets the total step length per iteration.
        """
        beta = np.linspace(beta_start, beta_end, steps)
        return cls.from_beta(beta, rho=np.full(steps, float(rho0)))

    @classmethod
    def guided(cls, transform_scale: float, steps: int = 1000,
               beta_start: float = 1e-4, beta_end: float = 2e-2,
               gain: float = 1.0) -> "ScheduleSet":
        """Guidance weights matching the ancestral step's own clean-image
        coefficient, with the domain-transform chain factor folded in:
        rho_k = gain * a * beta_k / sqrt(alpha_k).  Use with
        normalize_guidance=False; well suited to small pixel counts where
        gradient-norm normalization over-steps."""
        beta = np.linspace(beta_start, beta_end, steps)
        alpha = np.cumprod(1.0 - beta)
        rho = gain * float(transform_scale) * beta / np.sqrt(alpha)
        return cls.from_beta(beta, rho=rho)


@dataclass(frozen=True)
class DomainTransform:
    """Affine map from the normalized image domain [-1, 1] to flux:
    flux = a * (x + b).  b >= 1 keeps the whole domain nonnegative."""

    a: float
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0) or not math.isfinite(self.a):
            raise ValueError("scale a must be positive and finite")
        if not (self.b >= 1) or not math.isfinite(self.b):
            raise ValueError("offset b must be >= 1 so [-1, 1] maps to flux >= 0")


def domain_adapt(x_hat: np.ndarray, transform: DomainTransform) -> FluxMap:
    """Map a normalized image to per-pixel flux; negative results are a
    transform-configuration error."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    lam = transform.a * (x_hat + transform.b)
    if np.any(lam < 0):
        raise ValueError("transform maps part of the image to negative flux")
    return FluxMap(lam)


def inverse_domain(flux: FluxMap, transform: DomainTransform) -> np.ndarray:
    """Inverse of domain_adapt: x = flux / a - b."""
    return flux.flux / transform.a - transform.b


class PriorScore:
    """Interface for prior score functions s(state, step) -> image.

    ``parallel_safe`` declares whether concurrent read-only evaluation is
    allowed; implementations holding connections should say False.
    """

    parallel_safe: bool = True

    def evaluate(self, state: np.ndarray, step: int) -> np.ndarray:
        raise NotImplementedError


class GaussianPrior(PriorScore):
    """Analytic prior: clean images are i.i.d. N(mean, std^2) per pixel.

    The clean-image score is (mean - x) / std^2; at step k the sampler sees
    the diffused state sqrt(alpha_k) x0 + noise, so evaluate() returns the
    score of that step-k marginal.
    """

    def __init__(self, mean: float, std: float, schedule: ScheduleSet):
        if std < 0:
            raise ValueError("std must be >= 0")
        self.mean = float(mean)
        self.std = float(std)
        self.schedule = schedule

    def evaluate(self, state, step):
        a = self.schedule.alpha[step]
        var = a * self.std**2 + (1.0 - a)
        return (math.sqrt(a) * self.mean - state) / var


class SmoothnessPrior(PriorScore):
    """Quadratic smoothness prior: log-density -(weight/2) sum of squared
    neighbor differences, so the score is weight times the discrete
    Laplacian (reflecting boundaries).  Noise-level independent."""

    def __init__(self, weight: float):
        if weight < 0:
            raise ValueError("weight must be >= 0")
        self.weight = float(weight)

    def evaluate(self, state, step):
        x = np.asarray(state, dtype=np.float64)
        padded = np.pad(x, 1, mode="edge")
        lap = (
            padded[:-2, 1:-1] + padded[2:, 1:-1]
            + padded[1:-1, :-2] + padded[1:-1, 2:]
            - 4.0 * x
        )
        return self.weight * lap


def tweedie_estimate(state: np.ndarray, score: np.ndarray, alpha_k: float) -> np.ndarray:
    """Clean-image estimate from a noisy state and its score:
    (state + (1 - alpha_k) * score) / sqrt(alpha_k)."""
    state = np.asarray(state, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if state.shape != score.shape:
        raise ValueError("state and score shapes differ")
    if not (0 < alpha_k <= 1):
        raise ValueError("alpha_k must lie in (0, 1]")
    return (state + (1.0 - alpha_k) * score) / math.sqrt(alpha_k)


def ancestral_step(x_k: np.ndarray, x_hat0: np.ndarray, schedule: ScheduleSet,
                   k: int, noise: np.ndarray) -> np.ndarray:
    """One reverse-diffusion step: the posterior-mean mix of the current
    state and the clean estimate, plus sigma_k times the supplied noise."""
    x_k = np.asarray(x_k, dtype=np.float64)
    x_hat0 = np.asarray(x_hat0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x_k.shape != x_hat0.shape or x_k.shape != noise.shape:
        raise ValueError("state, estimate, and noise shapes differ")
    if not (0 <= k < schedule.steps):
        raise ValueError("step index outside the schedule")
    alpha_k = schedule.alpha[k]
    alpha_prev = schedule.alpha[k - 1] if k >= 1 else 1.0
    denom = 1.0 - alpha_k
    if denom <= 0.0:  # alpha == 1: degenerate noise-free step
        return x_k + schedule.sigma[k] * noise
    # the state coefficient carries the per-step ratio alpha_k/alpha_prev
    # (= 1 - beta_k); with it, a noiseless on-manifold state maps exactly
    # to sqrt(alpha_prev) * x_hat0 when x_k = sqrt(alpha_k) * x_hat0
    c_state = math.sqrt(alpha_k / alpha_prev) * (1.0 - alpha_prev) / denom
    c_clean = math.sqrt(alpha_prev) * schedule.beta[k] / denom
    return c_state * x_k + c_clean * x_hat0 + schedule.sigma[k] * noise


def _apply_guidance(x_prime, streams, x_hat0, transform, rho_k, normalize):
    """Guidance update plus the number of masked (zero-guidance) pixels."""
    if rho_k < 0:
        raise ValueError("rho_k must be >= 0")
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if rho_k == 0.0:
        return x_prime, 0
    lam = domain_adapt(x_hat0, transform)
    grad, invalid = grad_log_likelihood_map(streams, lam)
    step = float(rho_k)
    if normalize:
        norm = float(np.linalg.norm(grad))
        if norm > 0.0:
            step /= norm
    return x_prime + step * grad, int(invalid.sum())


def guidance_step(x_prime: np.ndarray, streams: StreamCollection,
                  x_hat0: np.ndarray, transform: DomainTransform,
                  rho_k: float, normalize: bool = False) -> np.ndarray:
    """Move the state along the per-pixel likelihood score of the flux
    image implied by the clean estimate.  Pixels flagged invalid by the
    gradient map receive no guidance and raise one warning per call."""
    out, masked = _apply_guidance(x_prime, streams, x_hat0, transform,
                                  rho_k, normalize)
    if masked:
        warnings.warn(
            f"guidance masked {masked} pixel(s) with events but zero rate",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def dps_reconstruct(streams: StreamCollection, prior: PriorScore,
                    transform: DomainTransform, schedule: ScheduleSet,
                    seed: int, normalize_guidance: bool = True) -> FluxMap:
    """Posterior sampling: seeded Gaussian init, then score estimation,
    clean-image estimation, ancestral step, and likelihood guidance per
    step.  Returns the flux image of the final clean estimate."""
    h, w = streams.shape
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((h, w))
    x_clean = None
    masked_steps = 0
    masked_peak = 0
    for k in range(schedule.steps - 1, -1, -1):
        try:
            score = np.asarray(prior.evaluate(x, k), dtype=np.float64)
        except Exception as exc:
            raise ReconstructionError(f"prior evaluation failed at step {k}") from exc
        if score.shape != x.shape:
            raise ReconstructionError(
                f"prior returned shape {score.shape} for state {x.shape} at step {k}"
            )
        if not np.all(np.isfinite(score)):
            raise ReconstructionError(f"prior returned non-finite score at step {k}")
        x_hat0 = tweedie_estimate(x, score, schedule.alpha[k])
        noise = rng.standard_normal((h, w))
        x_prime = ancestral_step(x, x_hat0, schedule, k, noise)
        # the transform's domain is the normalized image range [-1, 1]
        x_clean = np.clip(x_hat0, -1.0, 1.0)
        x, masked = _apply_guidance(x_prime, streams, x_clean, transform,
                                    schedule.rho[k],
                                    normalize=normalize_guidance)
        if masked:
            masked_steps += 1
            masked_peak = max(masked_peak, masked)
        if not np.all(np.isfinite(x)):
            raise ReconstructionError(f"state became non-finite after step {k}")
    if masked_steps:
        warnings.warn(
            f"guidance masked up to {masked_peak} pixel(s) with events but "
            f"zero rate in {masked_steps} of {schedule.steps} steps",
            RuntimeWarning,
            stacklevel=2,
        )
    return domain_adapt(x_clean, transform)


@dataclass
class MleMap:
    """Per-pixel closed-form estimates plus a sidecar flag mask."""

    flux: FluxMap
    flags: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint8))


def mle_reconstruct(streams: StreamCollection) -> MleMap:
    """Per-pixel maximum-likelihood flux.  Empty pixels report zero with a
    boundary flag; degenerate pixels report zero with an unbounded flag."""
    n = streams.counts
    last_ps = streams.last_times_ps()
    if streams.bounded:
        case_one = (n == 0) | (last_ps <= streams.exposure_ps - streams.dead_ps)
        live_ps = np.where(
            case_one,
            streams.exposure_ps - n * streams.dead_ps,
            last_ps - (n - 1) * streams.dead_ps,
        )
    else:
        live_ps = last_ps - (n - 1) * streams.dead_ps
    flags = np.zeros(streams.shape, dtype=np.uint8)
    empty = n == 0
    degenerate = ~empty & (live_ps <= 0)
    flags[empty] = int(MleFlag.BOUNDARY_ZERO)
    flags[degenerate] = int(MleFlag.UNBOUNDED)
    values = np.zeros(streams.shape, dtype=np.float64)
    ok = ~empty & ~degenerate
    values[ok] = n[ok] / (live_ps[ok] * 1e-12)
    return MleMap(flux=FluxMap(values), flags=flags)
