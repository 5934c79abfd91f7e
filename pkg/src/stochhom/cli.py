"""Command-line experiment runner.

Subcommands: ``sample-field``, ``estimate``, ``rate-study``, ``decay-study``
and ``sweep``.  Each writes its data files plus ``<command>.manifest.json``
into the output directory.  Exit status is 0 on success, 2 on invalid
configuration and 3 on solver failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load
from .field import sample_edge_coefficients
from .krylov import SolverError
from .parabolic import decay_diagnostics
from .upscale import (
    SystematicErrorTable,
    UpscaleEstimate,
    ensemble_traces,
    estimate_one,
    fit_rate,
    monte_carlo,
    paired_systematic_error,
    sweep_T_vs_R,
    voigt_reuss_bounds,
    write_estimates_csv,
    write_rate_fits_csv,
)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.raw["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample_field(cfg: RunConfig) -> list[Path]:
    if cfg.law is None:
        raise ConfigError("missing 'law' section: sample-field needs a coefficient law")
    fld = sample_edge_coefficients(cfg.grid, cfg.law, cfg.seed, cfg.raw["coupling"])
    path = _outdir(cfg) / f"field.{cfg.raw['field_format']}"
    io.write_field(path, fld)
    return [path]


def _fixed_field_estimates(cfg: RunConfig, fld) -> list[UpscaleEstimate]:
    out = []
    for xi in cfg.directions:
        for method in cfg.methods:
            for T in [None] if method == "naive" else cfg.T_values:
                sched = cfg.time.schedule(T) if method.startswith("modified") else None
                v = estimate_one(fld, method, xi, T, cfg.window, sched, cfg.solver)
                lo, hi = voigt_reuss_bounds(fld, xi)
                out.append(
                    UpscaleEstimate(
                        method, float("inf") if T is None else T, fld.grid.d, fld.grid.N, fld.grid.R,
                        cfg.window.L or fld.grid.R, xi, 1, v, 0.0, 0.0, cfg.seed,
                        np.array([v]), np.array([lo]), np.array([hi]),
                    )
                )
    return out


def cmd_estimate(cfg: RunConfig) -> list[Path]:
    if cfg.raw["field_file"] is not None:
        fld = io.read_field(cfg.raw["field_file"])
        cfg.grid = fld.grid
        ests = _fixed_field_estimates(cfg, fld)
    else:
        ests = []
        for xi in cfg.directions:
            for method in cfg.methods:
                for T in [None] if method == "naive" else cfg.T_values:
                    ests.append(
                        monte_carlo(
                            cfg.law, cfg.grid, method, xi, T, cfg.realizations, cfg.seed,
                            cfg.window, cfg.solver, cfg.time, cfg.raw["coupling"], cfg.threads,
                        )
                    )
    path = _outdir(cfg) / "estimates.csv"
    with io.staged(path) as tmp:
        write_estimates_csv(tmp, ests)
    return [path]


def _synthetic_table(cfg: RunConfig) -> SystematicErrorTable:
    syn = cfg.raw["synthetic"]
    T = np.array(sorted(cfg.T_values))
    y = float(syn.get("amplitude", 1.0)) * T ** float(syn["exponent"])
    zeros = np.zeros(1)
    return SystematicErrorTable("synthetic", T, y[None, :], zeros, y[None, :], cfg.grid, cfg.seed)


def cmd_rate_study(cfg: RunConfig) -> list[Path]:
    if not cfg.T_values:
        raise ConfigError("rate-study needs T_values")
    factor = float(cfg.raw["noise_floor_factor"])
    tables = {}
    if cfg.raw["synthetic"] is not None:
        tables["synthetic"] = _synthetic_table(cfg)
    else:
        if cfg.law is None:
            raise ConfigError("missing 'law' section: rate-study needs a coefficient law")
        methods = [m for m in cfg.methods if m in ("modified", "zeroth_order")] or ["modified"]
        for method in methods:
            tables[method] = paired_systematic_error(
                cfg.law, cfg.grid, cfg.directions[0], cfg.T_values, cfg.realizations, cfg.seed,
                method, cfg.solver, cfg.time, cfg.raw["coupling"], cfg.threads,
            )
    out = _outdir(cfg)
    err_path = out / "systematic_error.csv"
    with io.staged(err_path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "T", "err_sys", "stderr", "err_stat", "M", "used_in_fit"])
        for name, tab in tables.items():
            mask = tab.noise_floor_mask(factor)
            for row in zip(tab.T, tab.err_sys, tab.stderr, tab.err_stat, mask):
                w.writerow([name] + [repr(float(x)) for x in row[:4]] + [tab.M, int(row[4])])
    fit_path = out / "rate_fits.csv"
    with io.staged(fit_path) as tmp:
        write_rate_fits_csv(tmp, {name: tab.fit(factor) for name, tab in tables.items()})
    return [err_path, fit_path]


def cmd_decay_study(cfg: RunConfig) -> list[Path]:
    if cfg.law is None:
        raise ConfigError("missing 'law' section: decay-study needs a coefficient law")
    T = float(cfg.raw["T_final"])
    traces = ensemble_traces(
        cfg.law, cfg.grid, cfg.directions[0], T, cfg.realizations, cfg.seed,
        cfg.solver, cfg.time, cfg.raw["coupling"], cfg.threads,
    )
    table = decay_diagnostics(traces)
    out = _outdir(cfg)
    path = out / "decay.csv"
    with io.staged(path) as tmp:
        table.to_csv(tmp)
    sel = table.window(*cfg.raw["fit_window"])
    fits = {}
    for name in ("rms_u", "rms_grad_u"):
        y = getattr(table, name)[sel]
        ok = y > 0
        fits[name] = fit_rate(zip(table.t[sel][ok], y[ok])) if ok.sum() >= 2 else None
    fit_path = out / "decay_fits.csv"
    with io.staged(fit_path) as tmp:
        write_rate_fits_csv(tmp, fits)
    return [path, fit_path]


def cmd_sweep(cfg: RunConfig) -> list[Path]:
    if cfg.law is None:
        raise ConfigError("missing 'law' section: sweep needs a coefficient law")
    if not cfg.raw["cells_list"] or not cfg.T_values:
        raise ConfigError("sweep needs cells_list and T_values")
    table = sweep_T_vs_R(
        cfg.law, cfg.raw["cells_list"], cfg.T_values, cfg.realizations, cfg.seed,
        cfg.grid.h, cfg.grid.d, cfg.directions[0], cfg.solver, cfg.time, cfg.raw["coupling"],
        cfg.threads,
    )
    out = _outdir(cfg)
    path = out / "sweep.csv"
    with io.staged(path) as tmp:
        table.to_csv(tmp)
    opt_path = out / "sweep_optimal.csv"
    with io.staged(opt_path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "T_opt"])
        for R, T in table.optimal_T(float(cfg.raw["noise_floor_factor"])).items():
            w.writerow([repr(R), repr(T)])
    return [path, opt_path]


COMMANDS = {
    "sample-field": cmd_sample_field,
    "estimate": cmd_estimate,
    "rate-study": cmd_rate_study,
    "decay-study": cmd_decay_study,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochhom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker processes for realizations")
        p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = io.now()
    try:
        raw = load(args.config, overrides={"seed": args.seed, "threads": args.threads, "output": args.out})
        cfg = RunConfig.from_dict(raw, require_law=args.command != "rate-study")
        outputs = COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"stochhom {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"stochhom {args.command}: solver failure: {exc}", file=sys.stderr)
        return 3
    io.write_manifest(_outdir(cfg) / f"{args.command}.manifest.json", args.command, cfg.raw, outputs, started)
    for p in outputs:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
