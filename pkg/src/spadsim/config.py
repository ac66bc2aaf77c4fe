"""Flat key=value run configuration.

Lines are ``key = value``; ``#`` starts a comment.  Unknown keys are
rejected.  Sensor defaults match the reference device parameters the
library ships with (5 um pitch, 50 ns dead time, 1 ms exposure).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .reconstruction import ScheduleSet
from .simulator import SensorConfig


@dataclass
class RunConfig:
    # sensor
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
    # acquisition
    seed: int = 0
    reference_lux: float = 0.4
    mode: str = "fixed-exposure"  # or "fixed-count"
    fixed_count: int = 100
    # reconstruction
    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    rho0: float = 1.0
    guidance: str = "normalized"  # or "weighted"
    transform_a: float = 0.0  # 0 = derive from the reference flux
    transform_b: float = 1.0

    def sensor(self) -> SensorConfig:
        return SensorConfig(
            quantum_efficiency=self.quantum_efficiency,
            dead_time=self.dead_time,
            exposure=self.exposure,
            pixel_pitch=self.pixel_pitch,
            fill_factor=self.fill_factor,
            wavelength=self.wavelength,
            luminous_efficiency=self.luminous_efficiency,
            dark_count_rate=self.dark_count_rate,
            afterpulse_probability=self.afterpulse_probability,
            afterpulse_delay=self.afterpulse_delay,
            jitter_sigma=self.jitter_sigma,
        )

    def schedule(self, transform_scale: float) -> ScheduleSet:
        if self.guidance == "weighted":
            return ScheduleSet.guided(
                transform_scale, steps=self.steps,
                beta_start=self.beta_start, beta_end=self.beta_end,
                gain=self.rho0,
            )
        return ScheduleSet.default(
            steps=self.steps, beta_start=self.beta_start,
            beta_end=self.beta_end, rho0=self.rho0,
        )


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        kind = _FIELDS[key]
        try:
            if kind in ("int", int):
                setattr(cfg, key, int(value))
            elif kind in ("float", float):
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    if cfg.mode not in ("fixed-exposure", "fixed-count"):
        raise ValueError(f"mode must be fixed-exposure or fixed-count, got {cfg.mode!r}")
    if cfg.guidance not in ("normalized", "weighted"):
        raise ValueError(f"guidance must be normalized or weighted, got {cfg.guidance!r}")
    cfg.sensor()  # validates the physical parameters
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
