"""Run configuration for the command-line driver.

A run is described by one JSON document.  Precedence, lowest first: built-in
defaults, the ``--config`` file, ``STOCHHOM_<KEY>`` environment variables
(values parsed as JSON, falling back to plain strings), then command-line
flags.  Unknown keys are rejected and every value is validated before any
computation starts.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass

from .field import FieldLaw
from .grid import AveragingWindow, PeriodicGrid, unit_direction
from .krylov import SolverConfig
from .parabolic import TimeConfig

ENV_PREFIX = "STOCHHOM_"

DEFAULTS = {
    "dimension": 1,
    "cells": 256,
    "spacing": 1.0,
    "law": None,
    "coupling": "independent",
    "methods": ["naive"],
    "T_values": [],
    "window": None,
    "xi": None,
    "realizations": 1,
    "seed": 0,
    "solver": {"backend": "auto", "tol": 1e-10, "maxit": None, "preconditioner": "none"},
    "time": {"scheme": "implicit_euler", "dt0": None, "growth": 1.1},
    "output": "out",
    "threads": 1,
    "field_file": None,
    "field_format": "csv",
    "cells_list": None,
    "T_final": 64.0,
    "fit_window": [4.0, 64.0],
    "noise_floor_factor": 2.0,
    "synthetic": None,
}

_METHODS = ("naive", "zeroth_order", "modified", "modified_quadrature")


class ConfigError(ValueError):
    pass


def load(path=None, env=None, overrides=None) -> dict:
    """Merge defaults, a JSON file, environment and explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        _merge(cfg, doc, "")
    env = os.environ if env is None else env
    for key, raw in env.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            try:
                val = json.loads(raw)
            except json.JSONDecodeError:
                val = raw
            _merge(cfg, {name: val}, "env ")
    _merge(cfg, {k: v for k, v in (overrides or {}).items() if v is not None}, "flag ")
    return cfg


def _merge(cfg, doc, origin):
    for key, val in doc.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown {origin}config key {key!r}")
        if key in ("solver", "time") and isinstance(val, dict):
            unknown = set(val) - set(DEFAULTS[key])
            if unknown:
                raise ConfigError(f"unknown {key} keys: {sorted(unknown)}")
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val


@dataclass
class RunConfig:
    """Validated view of a merged configuration dictionary."""

    raw: dict
    grid: PeriodicGrid
    law: FieldLaw | None
    methods: list
    T_values: list
    window: AveragingWindow
    directions: list
    realizations: int
    seed: int
    solver: SolverConfig
    time: TimeConfig
    threads: int

    @classmethod
    def from_dict(cls, cfg: dict, require_law: bool = True) -> "RunConfig":
        d = _int(cfg, "dimension")
        N = _int(cfg, "cells")
        h = _float(cfg, "spacing")
        try:
            grid = PeriodicGrid.from_spacing(d, N, h)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc
        law = None
        if cfg["law"] is None:
            if require_law and cfg.get("field_file") is None:
                raise ConfigError("missing 'law' section: a coefficient law is required")
        else:
            if not isinstance(cfg["law"], dict):
                raise ConfigError("'law' must be an object")
            try:
                law = FieldLaw.from_dict(cfg["law"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        if cfg["coupling"] not in ("independent", "scalar"):
            raise ConfigError("coupling must be 'independent' or 'scalar'")
        methods = list(cfg["methods"])
        for m in methods:
            if m not in _METHODS:
                raise ConfigError(f"methods: unknown method {m!r}; expected one of {_METHODS}")
        T_values = [float(t) for t in cfg["T_values"]]
        if any(not (t > 0 and math.isfinite(t)) for t in T_values):
            raise ConfigError("T_values must be positive and finite")
        if any(m != "naive" for m in methods) and not T_values:
            raise ConfigError("T_values is required for methods other than 'naive'")
        window = AveragingWindow(None if cfg["window"] is None else _float(cfg, "window"))
        try:
            window.cells(grid)
        except ValueError as exc:
            raise ConfigError(f"window: {exc}") from exc
        xis = cfg["xi"]
        if xis is None:
            xis = [[1.0] + [0.0] * (d - 1)]
        try:
            directions = [unit_direction(x, d) for x in xis]
        except ValueError as exc:
            raise ConfigError(f"xi: {exc}") from exc
        M = _int(cfg, "realizations")
        if M < 1:
            raise ConfigError("realizations must be >= 1")
        seed = _int(cfg, "seed")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        threads = _int(cfg, "threads")
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            solver = SolverConfig(**cfg["solver"])
            time = TimeConfig(**cfg["time"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if cfg["field_format"] not in ("csv", "bin"):
            raise ConfigError("field_format must be 'csv' or 'bin'")
        fw = cfg["fit_window"]
        if not (isinstance(fw, (list, tuple)) and len(fw) == 2 and 0 < fw[0] < fw[1]):
            raise ConfigError("fit_window must be [t_min, t_max] with 0 < t_min < t_max")
        if not _float(cfg, "T_final") > 0:
            raise ConfigError("T_final must be positive")
        if cfg["cells_list"] is not None:
            if not all(isinstance(n, int) and n >= 2 for n in cfg["cells_list"]):
                raise ConfigError("cells_list must contain integers >= 2")
        syn = cfg["synthetic"]
        if syn is not None:
            if not isinstance(syn, dict) or set(syn) - {"exponent", "amplitude"}:
                raise ConfigError("synthetic must be an object with 'exponent' and optional 'amplitude'")
            if "exponent" not in syn:
                raise ConfigError("synthetic.exponent is required")
        return cls(
            raw=cfg,
            grid=grid,
            law=law,
            methods=methods,
            T_values=T_values,
            window=window,
            directions=directions,
            realizations=M,
            seed=seed,
            solver=solver,
            time=time,
            threads=threads,
        )


def _int(cfg, key):
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
        raise ConfigError(f"{key} must be an integer, got {val!r}")
    return int(val)


def _float(cfg, key):
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"{key} must be a finite number, got {val!r}")
    return float(val)
