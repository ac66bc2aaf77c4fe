"""SPAD detection-event simulation.

A pixel's effective detection rate is quantum efficiency times incident
photon flux, plus the dark-count rate.  Events are generated by the
first-arrival / shifted-exponential loop: an exponential wait to the first
detection, then a dead time plus an exponential wait before each subsequent
one.  Afterpulsing optionally inserts one spurious detection at a fixed
delay after dead-time release; Gaussian timestamp jitter is applied last,
followed by invariant repair.

Per-pixel randomness is keyed by (seed, row, col) through a counter-based
generator, so results never depend on simulation order or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels
from .streams import EventStream, FluxMap, StreamCollection, seconds_to_ps

# Energy of one photon at wavelength w is HC_JOULE_METERS / w.
HC_JOULE_METERS = 1.98644586e-25

_CHUNK_PIXELS = 65536  # fixed work unit so thread count cannot change output


@dataclass(frozen=True)
class SensorConfig:
    """Physical SPAD pixel parameters.  Defaults are a 5 um pitch device
    with 50 ns dead time and a 1 ms exposure."""

    quantum_efficiency: float = 0.9
    dead_time: float = 50e-9
    exposure: float = 1e-3
    pixel_pitch: float = 5e-6
    fill_factor: float = 1.0
    wavelength: float = 555e-9
    luminous_efficiency: float = 683.0
    dark_count_rate: float = 100.0
    afterpulse_probability: float = 0.01
    afterpulse_delay: float = 100e-9
    jitter_sigma: float = 200e-12

    def __post_init__(self):
        for name in ("quantum_efficiency", "fill_factor", "afterpulse_probability"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        for name in (
            "dead_time",
            "exposure",
            "pixel_pitch",
            "wavelength",
            "luminous_efficiency",
            "dark_count_rate",
            "afterpulse_delay",
            "jitter_sigma",
        ):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def dead_ps(self) -> int:
        return seconds_to_ps(self.dead_time)

    @property
    def exposure_ps(self) -> int:
        ps = seconds_to_ps(self.exposure)
        if ps <= 0:
            raise ValueError("exposure must be positive for fixed-exposure mode")
        return ps

    @property
    def afterpulse_delay_ps(self) -> int:
        return seconds_to_ps(self.afterpulse_delay)

    @property
    def jitter_sigma_ps(self) -> float:
        return self.jitter_sigma * 1e12

    def without_nuisances(self) -> "SensorConfig":
        """Copy with dark counts, afterpulsing, and jitter disabled."""
        return replace(
            self,
            dark_count_rate=0.0,
            afterpulse_probability=0.0,
            jitter_sigma=0.0,
        )


@dataclass(frozen=True)
class PixelRng:
    """Counter-based randomness key for one pixel."""

    seed: int
    row: int = 0
    col: int = 0


def lux_to_flux(lux, config: SensorConfig):
    """Photon flux (photons per second) reaching one pixel at a given
    illuminance.  Power per area is illuminance over luminous efficiency;
    multiply by the pixel's active area and divide by the photon energy."""
    lux = np.asarray(lux, dtype=np.float64)
    if np.any(lux < 0):
        raise ValueError("illuminance must be >= 0")
    if config.luminous_efficiency <= 0 or config.wavelength <= 0:
        raise ValueError("luminous efficiency and wavelength must be positive")
    area = config.pixel_pitch**2 * config.fill_factor
    photon_energy = HC_JOULE_METERS / config.wavelength
    out = lux * area / (config.luminous_efficiency * photon_energy)
    return float(out) if out.ndim == 0 else out


def effective_rate(flux, config: SensorConfig):
    """Detection-event rate: quantum efficiency x flux + dark counts."""
    flux = np.asarray(flux, dtype=np.float64)
    if np.any(flux < 0):
        raise ValueError("photon flux must be >= 0")
    out = config.quantum_efficiency * flux + config.dark_count_rate
    return float(out) if out.ndim == 0 else out


def _threads() -> int:
    cap = os.environ.get("SPAD_THREADS", "")
    limit = os.cpu_count() or 1
    if cap:
        limit = max(1, min(limit, int(cap)))
    return limit


def _sim_chunked(rates, rows, cols, runner):
    """Run a kernel over fixed-size pixel chunks, optionally threaded."""
    n = rates.shape[0]
    spans = [(i, min(i + _CHUNK_PIXELS, n)) for i in range(0, n, _CHUNK_PIXELS)]
    jobs = [(rates[a:b], rows[a:b], cols[a:b]) for a, b in spans]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [runner(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: runner(*j), jobs))


def simulate_pixel(flux: float, config: SensorConfig, rng: PixelRng) -> EventStream:
    """One pixel's event stream over a fixed exposure."""
    rate = effective_rate(float(flux), config)
    counts, times = kernels.sim_streams(
        np.array([rate]),
        config.exposure_ps,
        config.dead_ps,
        rng.seed,
        np.array([rng.row], dtype=np.uint64),
        np.array([rng.col], dtype=np.uint64),
        config.afterpulse_probability,
        config.afterpulse_delay_ps,
        config.jitter_sigma_ps,
    )
    return EventStream(
        dead_ps=config.dead_ps, times_ps=times, exposure_ps=config.exposure_ps
    )


def simulate_fixed_count(
    flux: float, n_det: int, config: SensorConfig, rng: PixelRng
) -> EventStream:
    """One pixel's stream with unbounded exposure and exactly n_det events."""
    if n_det < 1:
        raise ValueError("n_det must be >= 1")
    rate = effective_rate(float(flux), config)
    if rate <= 0.0:
        raise ValueError("zero detection rate: acquisition would never finish")
    times = kernels.sim_fixed_count(
        np.array([rate]),
        int(n_det),
        config.dead_ps,
        rng.seed,
        np.array([rng.row], dtype=np.uint64),
        np.array([rng.col], dtype=np.uint64),
        config.afterpulse_probability,
        config.afterpulse_delay_ps,
        config.jitter_sigma_ps,
    )
    return EventStream(dead_ps=config.dead_ps, times_ps=times, exposure_ps=None)


def _image_rates(image, reference_lux: float, config: SensorConfig):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    if np.any(image < 0.0) or np.any(image > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    if reference_lux < 0:
        raise ValueError("reference illuminance must be >= 0")
    flux = lux_to_flux(reference_lux * image, config)
    rates = effective_rate(flux, config)
    h, w = image.shape
    rows, cols = np.divmod(np.arange(h * w, dtype=np.uint64), np.uint64(w))
    return rates.ravel(), rows, cols, (h, w)


def simulate_image(
    image, reference_lux: float, config: SensorConfig, seed: int
) -> StreamCollection:
    """Fixed-exposure acquisition of a normalized grayscale image."""
    rates, rows, cols, (h, w) = _image_rates(image, reference_lux, config)
    parts = _sim_chunked(
        rates,
        rows,
        cols,
        lambda r, rr, cc: kernels.sim_streams(
            r,
            config.exposure_ps,
            config.dead_ps,
            seed,
            rr,
            cc,
            config.afterpulse_probability,
            config.afterpulse_delay_ps,
            config.jitter_sigma_ps,
        ),
    )
    counts = np.concatenate([p[0] for p in parts]).reshape(h, w)
    times = np.concatenate([p[1] for p in parts])
    return StreamCollection(
        height=h,
        width=w,
        dead_ps=config.dead_ps,
        exposure_ps=config.exposure_ps,
        counts=counts,
        times_ps=times,
    )


def simulate_image_fixed_count(
    image, reference_lux: float, config: SensorConfig, n_det: int, seed: int
) -> StreamCollection:
    """Fixed-count acquisition: every pixel records exactly n_det events."""
    if n_det < 1:
        raise ValueError("n_det must be >= 1")
    rates, rows, cols, (h, w) = _image_rates(image, reference_lux, config)
    if np.any(rates <= 0.0):
        raise ValueError("zero detection rate: acquisition would never finish")
    parts = _sim_chunked(
        rates,
        rows,
        cols,
        lambda r, rr, cc: kernels.sim_fixed_count(
            r,
            int(n_det),
            config.dead_ps,
            seed,
            rr,
            cc,
            config.afterpulse_probability,
            config.afterpulse_delay_ps,
            config.jitter_sigma_ps,
        ),
    )
    counts = np.full((h, w), int(n_det), dtype=np.int64)
    times = np.concatenate(parts)
    return StreamCollection(
        height=h,
        width=w,
        dead_ps=config.dead_ps,
        exposure_ps=None,
        counts=counts,
        times_ps=times,
    )


def simulate_counts(
    flux: float, config: SensorConfig, n_pixels: int, seed: int
) -> np.ndarray:
    """Detection counts for n_pixels independent pixels at one flux.

    Fast path for distribution checks; afterpulsing and jitter must be
    disabled in the config (dark counts fold into the rate and are fine).
    """
    if config.afterpulse_probability > 0 or config.jitter_sigma > 0:
        raise ValueError("counts fast path requires afterpulsing and jitter off")
    rate = effective_rate(float(flux), config)
    rates = np.full(n_pixels, rate, dtype=np.float64)
    idx = np.arange(n_pixels, dtype=np.uint64)
    rows, cols = idx >> np.uint64(16), idx & np.uint64(0xFFFF)
    parts = _sim_chunked(
        rates,
        rows,
        cols,
        lambda r, rr, cc: kernels.sim_counts(
            r, config.exposure_ps, config.dead_ps, seed, rr, cc
        ),
    )
    return np.concatenate(parts)
