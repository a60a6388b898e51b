"""Command line entry point ``isozaki-kit``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    SweepConfig,
    fit_exponent,
    load_config,
    read_rows,
    report,
    rows_to_csv,
    run_sweep,
    run_verify,
    write_rows,
)
from .forward import align_bsd, make_bsd, read_bsd, write_bsd
from .geometry import GridSpec, build_grid
from .potential import from_values, sample
from .reconstruct import FourierSamples, estimate_lambda, fourier_sample, frequency_grid, reconstruct


def _cmd_forward(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(GridSpec.from_dict(cfg["grid"]))
    field = sample(cfg.get("potential", []), grid) if cfg.get("potential") else None
    bsd = make_bsd(grid, field, cfg.get("K"), keep_eigenfunctions=False)
    write_bsd(bsd, args.out)
    print(f"wrote {bsd.K} pairs to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    cfg = load_config(args.config) if args.config else None
    checks = run_verify(cfg, suite=args.suite, fault=args.fault)
    print(report(checks))
    if args.json:
        Path(args.json).write_text(json.dumps([c.__dict__ for c in checks], indent=2))
    return 0 if all(c.passed for c in checks) else 1


def _attach_field(bsd):
    specs = bsd.meta.get("potential") or []
    return replace(bsd, field=sample(specs, bsd.grid) if specs else None)


def _cmd_fourier(args) -> int:
    b1, b2 = read_bsd(args.bsd1), read_bsd(args.bsd2)
    b2 = align_bsd(b1, b2)
    if args.method == "direct":
        b1, b2 = _attach_field(b1), _attach_field(b2)
        if b1.field is None:
            b1 = _zero_field(b1)
        if b2.field is None:
            b2 = _zero_field(b2)
    grid = b1.grid
    dxi = np.pi / grid.L
    xis = frequency_grid(grid.d, grid.L, args.rmax, dxi)
    Lam = estimate_lambda(b1, b2)
    samples = fourier_sample(b1, b2, xis, tau=args.tau, K=args.K, method=args.method,
                             workers=args.threads, Lam=Lam, dxi=dxi, r_max=args.rmax)
    samples.write_csv(args.out)
    print(f"wrote {samples.size} samples to {args.out} (Lam={Lam:.17g})")
    return 0


def _zero_field(bsd):
    return replace(bsd, field=from_values(np.zeros(bsd.grid.size), bsd.grid))


def _cmd_reconstruct(args) -> int:
    samples = FourierSamples.read_csv(args.samples)
    if args.Lam == "auto":
        if samples.Lam is None:
            print("error: samples carry no Lam; pass --lambda explicitly", file=sys.stderr)
            return 2
        Lam = float(samples.Lam)
    else:
        Lam = float(args.Lam)
    result = reconstruct(samples, Lam, calibration=args.calibration)
    result.write_json(args.out)
    print(f"r={result.r:.17g} imag_residue={result.imag_residue:.3g} -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    data = load_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = SweepConfig.from_dict(data)
    rows = run_sweep(cfg, workers=args.threads)
    write_rows(rows, args.out, cfg)
    sys.stdout.write(rows_to_csv(rows))
    return 0 if all(r.status == "ok" for r in rows) else 1


def _cmd_fit(args) -> int:
    rows = read_rows(args.inp)
    d = args.dim
    if d is None:
        sidecar = Path(str(args.inp) + ".json")
        if not sidecar.exists():
            print("error: pass --dim or keep the sweep's .json sidecar", file=sys.stderr)
            return 2
        d = json.loads(sidecar.read_text())["grid"]["d"]
    fit = fit_exponent(rows, d, column=args.column)
    print(f"slope={fit.slope:.17g} C_fit={fit.C_fit:.17g} exponent={fit.exponent:.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isozaki-kit", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1, help="worker count")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("forward", help="compute boundary spectral data")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_forward)

    s = sub.add_parser("verify", help="run identity checks")
    s.add_argument("--config")
    s.add_argument("--suite", default="all", choices=["all", "probe", "scattering", "series"])
    s.add_argument("--fault", choices=["trace-sign"], help="inject a known fault")
    s.add_argument("--json", help="write the checks as JSON")
    s.set_defaults(func=_cmd_verify)

    s = sub.add_parser("fourier", help="sample the Fourier transform of q1 - q2")
    s.add_argument("--bsd1", required=True)
    s.add_argument("--bsd2", required=True)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--rmax", type=float, required=True)
    s.add_argument("--K", type=int, default=None)
    s.add_argument("--method", default="series", choices=["series", "direct"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_fourier)

    s = sub.add_parser("reconstruct", help="low-pass inversion of Fourier samples")
    s.add_argument("--samples", required=True)
    s.add_argument("--lambda", dest="Lam", default="auto")
    s.add_argument("--calibration", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_reconstruct)

    s = sub.add_parser("sweep", help="stability sweep over amplitudes")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("fit", help="fit the stability exponent")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--dim", type=int, default=None)
    s.add_argument("--column", default="h1_true", choices=["h1_true", "h1_rec_err", "l2_rec_err"])
    s.set_defaults(func=_cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
