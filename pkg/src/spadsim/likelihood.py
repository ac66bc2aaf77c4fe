"""Exact event-sequence likelihood under a non-paralyzable dead time.

The joint density of a recorded stream depends on the data only through
the number of detections N, the last detection time, and which side of the
exposure boundary that last detection falls on:

* open tail: the last dead-time window ends inside the exposure, so the
  tail carries survival probability; log density
  ``N log(rate) - rate * (T - N * dead)``.
* closed tail: the last dead-time window extends past the exposure end, so
  no further detection was possible; log density
  ``N log(rate) - rate * (t_last - (N - 1) * dead)``.

In both, the subtracted duration is the live observation time: dead-time
windows that complete within the observation are excluded, and in the
closed-tail case the N-th window never completes.  The two forms agree at
the boundary ``t_last = T - dead``, keeping the density continuous.

Fixed-count (unbounded) streams use the closed-tail form with the
acquisition effectively ending at the last detection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .streams import EventStream, FluxMap, StreamCollection, seconds_to_ps


class CaseTag(enum.Enum):
    CASE_I = "tail-window-open"
    CASE_II = "tail-window-closed"


@dataclass(frozen=True)
class LikelihoodResult:
    log_value: float
    case: CaseTag


class MleFlag(enum.IntEnum):
    OK = 0
    BOUNDARY_ZERO = 1  # no events: likelihood maximized at rate -> 0
    UNBOUNDED = 2  # nonpositive denominator: invariant-violating input


@dataclass(frozen=True)
class MleResult:
    flux: float
    flag: MleFlag


def classify_case(stream: EventStream) -> CaseTag:
    """Which boundary case a stream falls in.  Unbounded streams always use
    the closed-tail form (the acquisition ends at the last detection)."""
    if stream.n == 0:
        if not stream.bounded:
            raise ValueError("an unbounded stream cannot be empty")
        return CaseTag.CASE_I
    if not stream.bounded:
        return CaseTag.CASE_II
    if stream.last_time_ps <= stream.exposure_ps - stream.dead_ps:
        return CaseTag.CASE_I
    return CaseTag.CASE_II


def _live_time_ps(stream: EventStream, case: CaseTag) -> int:
    """Observation time minus completed dead-time windows, in picoseconds."""
    n = stream.n
    if case is CaseTag.CASE_I:
        return stream.exposure_ps - n * stream.dead_ps
    return stream.last_time_ps - (n - 1) * stream.dead_ps


def log_likelihood(stream: EventStream, flux: float) -> LikelihoodResult:
    """Natural log of the joint event-time density at the given rate."""
    flux = float(flux)
    if flux < 0.0 or not math.isfinite(flux):
        raise ValueError("rate must be finite and >= 0")
    n = stream.n
    case = classify_case(stream)
    if flux == 0.0:
        if n == 0:
            return LikelihoodResult(0.0, case)
        return LikelihoodResult(-math.inf, case)
    if n == 0:
        return LikelihoodResult(-flux * stream.exposure, case)
    live_s = _live_time_ps(stream, case) * 1e-12
    return LikelihoodResult(n * math.log(flux) - flux * live_s, case)


def grad_log_likelihood(stream: EventStream, flux: float) -> float:
    """d/d(rate) of the log likelihood; -exposure when no events occurred."""
    flux = float(flux)
    if flux <= 0.0 or not math.isfinite(flux):
        raise ValueError("rate must be finite and > 0")
    n = stream.n
    if n == 0:
        return -stream.exposure
    case = classify_case(stream)
    return n / flux - _live_time_ps(stream, case) * 1e-12


def max_events(exposure: float, dead: float):
    """Largest detection count a dead time allows; None when dead = 0."""
    dead_ps = seconds_to_ps(dead)
    if dead_ps == 0:
        return None
    return seconds_to_ps(exposure) // dead_ps + 1


def count_pmf(n, flux: float, exposure: float, dead: float) -> float:
    """Probability of exactly n detections in a fixed exposure.

    Difference of two Erlang CDFs evaluated at the dead-time-shifted
    boundaries; time arguments below zero clamp to zero.  Reduces exactly
    to the Poisson PMF when the dead time is zero.
    """
    if isinstance(n, float):
        if not n.is_integer():
            raise ValueError("count must be an integer")
        n = int(n)
    n = int(n)
    if n < 0:
        raise ValueError("count must be >= 0")
    flux = float(flux)
    if flux < 0.0 or not math.isfinite(flux):
        raise ValueError("rate must be finite and >= 0")
    t_ps = seconds_to_ps(exposure)
    dead_ps = seconds_to_ps(dead)
    if dead_ps > 0 and n > t_ps // dead_ps + 1:
        return 0.0
    t1 = max(t_ps - (n - 1) * dead_ps, 0)
    t2 = max(t_ps - n * dead_ps, 0)
    upper = 1.0 if n == 0 else 1.0 - kernels.poisson_tail_sum(n, flux * (t1 * 1e-12))
    lower = 1.0 - kernels.poisson_tail_sum(n + 1, flux * (t2 * 1e-12))
    return upper - lower


def count_pmf_array(flux: float, exposure: float, dead: float) -> np.ndarray:
    """count_pmf for every n from 0 to max_events, sharing the CDF work.

    Bit-identical to per-n count_pmf calls; requires dead > 0.
    """
    flux = float(flux)
    if flux < 0.0 or not math.isfinite(flux):
        raise ValueError("rate must be finite and >= 0")
    return kernels.count_pmf_all(flux, seconds_to_ps(exposure), seconds_to_ps(dead))


def mle_flux(stream: EventStream) -> MleResult:
    """Closed-form per-pixel rate estimate: N over the live observation time."""
    n = stream.n
    if n == 0:
        return MleResult(0.0, MleFlag.BOUNDARY_ZERO)
    case = classify_case(stream)
    live_ps = _live_time_ps(stream, case)
    if live_ps <= 0:
        return MleResult(math.nan, MleFlag.UNBOUNDED)
    return MleResult(n / (live_ps * 1e-12), MleFlag.OK)


def grad_log_likelihood_map(streams: StreamCollection, flux: FluxMap):
    """Per-pixel log-likelihood gradient over a field of view.

    Returns (gradient, invalid) arrays.  Pixels with zero rate and no
    events take the no-event limit -exposure; zero-rate pixels that did
    record events are impossible under the model and come back flagged in
    the invalid mask with a zero gradient.
    """
    if streams.shape != flux.shape:
        raise ValueError(
            f"stream grid {streams.shape} does not match flux map {flux.shape}"
        )
    lam = flux.flux
    n = streams.counts
    last_ps = streams.last_times_ps()
    if streams.bounded:
        case_one = (n == 0) | (
            last_ps <= streams.exposure_ps - streams.dead_ps
        )
        live_ps = np.where(
            case_one,
            streams.exposure_ps - n * streams.dead_ps,
            last_ps - (n - 1) * streams.dead_ps,
        )
    else:
        if np.any(n == 0):
            raise ValueError("unbounded collection contains an empty stream")
        live_ps = last_ps - (n - 1) * streams.dead_ps
    denom_s = live_ps * 1e-12
    invalid = (lam == 0.0) & (n > 0)
    grad = np.empty(lam.shape, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = n / lam - denom_s
    zero_empty = (lam == 0.0) & (n == 0)
    if np.any(zero_empty):
        if not streams.bounded:
            raise ValueError("unbounded collection contains an empty stream")
        grad[zero_empty] = -streams.exposure_ps * 1e-12
    grad[invalid] = 0.0
    return grad, invalid
