"""Command-line interface: simulate, mle, verify, reconstruct."""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from .config import RunConfig, load_config
from .eventfile import read_events, write_events
from .pgm import read_pgm, write_pgm
from .reconstruction import (
    DomainTransform,
    GaussianPrior,
    ScheduleSet,
    SmoothnessPrior,
    dps_reconstruct,
    inverse_domain,
    mle_reconstruct,
)
from .remote_score import RemoteScorePrior
from .simulator import (
    effective_rate,
    lux_to_flux,
    simulate_image,
    simulate_image_fixed_count,
)
from .verify import run_checks


def _print_histogram(counts: np.ndarray, bins: int = 16) -> None:
    flat = counts.ravel()
    print(f"counts: min {flat.min()}  mean {flat.mean():.2f}  max {flat.max()}")
    lo, hi = int(flat.min()), int(flat.max())
    if hi == lo:
        print(f"  [{lo}] {'#' * 40} {flat.size}")
        return
    edges = np.linspace(lo, hi + 1, bins + 1)
    hist, _ = np.histogram(flat, bins=edges)
    top = hist.max()
    for i, h in enumerate(hist):
        if h == 0:
            continue
        bar = "#" * max(1, int(40 * h / top))
        print(f"  [{int(edges[i]):6d}..{int(edges[i + 1]) - 1:6d}] {bar} {h}")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "lux", None) is not None:
        cfg.reference_lux = args.lux
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    image = read_pgm(args.image)
    sensor = cfg.sensor()
    fixed_count = args.fixed_count
    if fixed_count is None and not args.fixed_exposure and cfg.mode == "fixed-count":
        fixed_count = cfg.fixed_count
    if fixed_count is not None:
        streams = simulate_image_fixed_count(
            image, cfg.reference_lux, sensor, fixed_count, cfg.seed
        )
        mode = f"fixed-count {fixed_count}"
    else:
        streams = simulate_image(image, cfg.reference_lux, sensor, cfg.seed)
        mode = f"fixed-exposure {sensor.exposure:g}s"
    write_events(args.out, streams)
    print(
        f"simulated {streams.height}x{streams.width} pixels, {mode}, "
        f"lux {cfg.reference_lux:g}, seed {cfg.seed}"
    )
    _print_histogram(streams.counts)
    print(f"wrote {args.out}")
    return 0


def cmd_mle(args) -> int:
    streams = read_events(args.events)
    result = mle_reconstruct(streams)
    lam = result.flux.flux
    peak = float(lam.max())
    write_pgm(args.out, lam / peak if peak > 0 else lam)
    csv_path = str(args.out) + ".csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["# pgm_scale", peak])
        writer.writerow(["row", "col", "flux_per_s", "flag"])
        for r in range(streams.height):
            for c in range(streams.width):
                writer.writerow([r, c, repr(float(lam[r, c])), int(result.flags[r, c])])
    flagged = int((result.flags != 0).sum())
    print(f"wrote {args.out} and {csv_path} ({flagged} flagged pixels)")
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    bias = 1e-6 if args.self_test_corrupt else 0.0
    results = run_checks(cfg, mc_pixels=args.mc_pixels, cdf_bias=bias)
    for res in results:
        print(res.line())
    ok = all(r.passed for r in results)
    print("verification", "PASSED" if ok else "FAILED")
    return 0 if ok else 1


def _parse_prior(spec: str, schedule: ScheduleSet):
    kind, _, rest = spec.partition(":")
    if kind == "gaussian":
        try:
            mean_s, std_s = rest.split(",")
            return GaussianPrior(float(mean_s), float(std_s), schedule)
        except ValueError as exc:
            raise ValueError(f"bad gaussian prior spec {spec!r}") from exc
    if kind == "smooth":
        try:
            return SmoothnessPrior(float(rest))
        except ValueError as exc:
            raise ValueError(f"bad smoothness prior spec {spec!r}") from exc
    if kind == "remote":
        if not rest:
            raise ValueError("remote prior needs an address")
        return RemoteScorePrior(rest)
    raise ValueError(f"unknown prior kind {kind!r} (use gaussian/smooth/remote)")


def _psnr(reference: np.ndarray, reconstruction: np.ndarray) -> float:
    mse = float(np.mean((reference - reconstruction) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def cmd_reconstruct(args) -> int:
    cfg = _load_run_config(args)
    streams = read_events(args.events)
    sensor = cfg.sensor()
    reference_rate = effective_rate(lux_to_flux(cfg.reference_lux, sensor), sensor)
    a = cfg.transform_a if cfg.transform_a > 0 else reference_rate / 2.0
    transform = DomainTransform(a=a, b=cfg.transform_b)
    schedule = cfg.schedule(transform_scale=a)
    prior = _parse_prior(args.prior, schedule)
    flux = dps_reconstruct(
        streams, prior, transform, schedule, cfg.seed,
        normalize_guidance=(cfg.guidance == "normalized"),
    )
    normalized = np.clip((inverse_domain(flux, transform) + 1.0) / 2.0, 0.0, 1.0)
    write_pgm(args.out, normalized)
    metrics_path = str(args.out) + ".metrics.csv"
    rows = [
        ("transform_a", repr(a)),
        ("transform_b", repr(cfg.transform_b)),
        ("flux_mean", repr(float(flux.flux.mean()))),
        ("flux_max", repr(float(flux.flux.max()))),
    ]
    if args.reference:
        ref = read_pgm(args.reference)
        if ref.shape != normalized.shape:
            raise ValueError(
                f"reference {ref.shape} does not match reconstruction {normalized.shape}"
            )
        rows.append(("psnr_db", repr(_psnr(ref, normalized))))
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(rows)
    print(f"wrote {args.out} and {metrics_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spadsim",
        description="SPAD event simulation, likelihoods, and reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an event file from a PGM image")
    sim.add_argument("image", help="input grayscale PGM (P5)")
    sim.add_argument("--out", required=True, help="output event file")
    sim.add_argument("--config", help="key=value run configuration")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--lux", type=float, help="override the reference illuminance")
    mode = sim.add_mutually_exclusive_group()
    mode.add_argument("--fixed-exposure", action="store_true",
                      help="fixed exposure window per pixel (default)")
    mode.add_argument("--fixed-count", type=int, metavar="N",
                      help="record exactly N detections per pixel")
    sim.set_defaults(func=cmd_simulate)

    mle = sub.add_parser("mle", help="per-pixel maximum-likelihood flux image")
    mle.add_argument("events", help="input event file")
    mle.add_argument("--out", required=True, help="output 16-bit PGM")
    mle.set_defaults(func=cmd_mle)

    ver = sub.add_parser("verify", help="run the numerical invariant suite")
    ver.add_argument("--config", help="key=value run configuration")
    ver.add_argument("--mc-pixels", type=int, default=100_000,
                     help="Monte Carlo sample size (default 100000)")
    ver.add_argument("--self-test-corrupt", action="store_true",
                     help="negative control: corrupt the CDF and expect failure")
    ver.set_defaults(func=cmd_verify)

    rec = sub.add_parser("reconstruct", help="guided diffusion reconstruction")
    rec.add_argument("events", help="input event file")
    rec.add_argument("--prior", required=True,
                     help="gaussian:MEAN,STD | smooth:WEIGHT | remote:ADDRESS")
    rec.add_argument("--out", required=True, help="output 16-bit PGM")
    rec.add_argument("--config", help="key=value run configuration")
    rec.add_argument("--seed", type=int, help="override the config seed")
    rec.add_argument("--lux", type=float,
                     help="override the reference illuminance for the transform")
    rec.add_argument("--reference", help="reference PGM for PSNR")
    rec.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        message = str(exc)
        if exc.__cause__ is not None:
            message += f" ({exc.__cause__})"
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
