"""Experiment configuration: flat ``key = value`` files with sections, parsed by configparser."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .entropy import EntropyPair, FluxSpec, make_entropy, make_flux
from .errors import ConfigError
from .grid import Boundary, GridSpec
from .mollifiers import BaseKernel, make_kernel
from .solver import IC_NAMES, NoiseSpec, SolveConfig, make_noise, stable_n_steps
from .weights import WeightFunction, make_weight

# section -> key -> default (None means required)
SCHEMA: dict[str, dict[str, object]] = {
    "solver": {
        "epsilon": 0.02,
        "t_final": 0.5,
        "n_steps": 0,  # 0: smallest CFL-compliant count
        "n_records": 100,
        "n_cells": 512,
        "half_width": 1.0,
        "boundary": "periodic",
        "seed": 0,
        "n_paths": 8,
        "ic": "neg-sin",
        "u_max": 3.0,
    },
    "model": {
        "flux": "burgers",
        "entropy": "same-as-flux",
        "weight": "power",
        "weight_N": 1.0,
        "noise": "linear",
        "noise_K": 0.5,
        "kernel": "friedrichs",
    },
    "study": {
        "epsilon_list": "",
        "delta_list": "",
        "z_list": "",
        "tdelta_list": "",
        "power": 0.0,  # 0: p_f + p_eta + 2
        "p": 2.0,
        "r": 2.0,
        "h_cells": 4,
        "n_levels": 3,
        "bracket": "discrete",
        "lattice_half_width": 5.0,
        "lattice_points": 101,
        "z_max": 1.0,
        "R": 1.0,
        "weight_N_list": "",
        "C1": 1.0,
        "C2": 1.0,
        "C3": 1.0,
        "m_F": 2,
        "m_G": 0,
        "rho_delta_list": "",
    },
    "output": {
        "output_dir": "out",
        "emit_plots": False,
    },
}


def _floats(key: str, text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(key, f"expected a comma-separated list of numbers, got {text!r}") from None


def _coerce(key: str, default, text: str):
    text = text.strip().strip("'\"")
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {type(default).__name__}") from None
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict[str, dict[str, object]]
    epsilon_list: tuple[float, ...] = ()
    delta_list: tuple[float, ...] = ()
    z_list: tuple[float, ...] = ()
    tdelta_list: tuple[float, ...] = ()
    weight_N_list: tuple[float, ...] = ()
    rho_delta_list: tuple[float, ...] = ()
    extras: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.raw[section][key]

    # -- model objects

    @property
    def grid(self) -> GridSpec:
        s = self.raw["solver"]
        return GridSpec(s["half_width"], s["n_cells"], Boundary(s["boundary"]))

    @property
    def flux(self) -> FluxSpec:
        return make_flux(self.get("model", "flux"))

    def pair(self, flux: FluxSpec | None = None) -> EntropyPair:
        return make_entropy(flux or self.flux, self.get("model", "entropy"))

    @property
    def weight(self) -> WeightFunction:
        return make_weight(self.get("model", "weight"), N=self.get("model", "weight_N"),
                           half_width=self.get("solver", "half_width"))

    @property
    def noise(self) -> NoiseSpec:
        return make_noise(self.get("model", "noise"), self.get("model", "noise_K"))

    @property
    def kernel(self) -> BaseKernel:
        return make_kernel(self.get("model", "kernel"))

    @property
    def seed(self) -> int:
        return self.get("solver", "seed")

    @property
    def n_paths(self) -> int:
        return self.get("solver", "n_paths")

    def solve_config(self, epsilon: float | None = None) -> SolveConfig:
        s = self.raw["solver"]
        eps = s["epsilon"] if epsilon is None else epsilon
        n_rec = s["n_records"]
        n = s["n_steps"] or stable_n_steps(self.flux, eps, self.grid, s["t_final"], s["u_max"],
                                           multiple_of=n_rec)
        return SolveConfig(eps, s["t_final"], n, self.grid, seed=s["seed"],
                           initial_condition=s["ic"], record_every=n // n_rec)

    def with_overrides(self, seed: int | None = None) -> "ExperimentConfig":
        if seed is None:
            return self
        raw = {k: dict(v) for k, v in self.raw.items()}
        raw["solver"]["seed"] = int(seed)
        out = replace(self, raw=raw)
        _validate(out)
        return out

    def to_ini(self) -> str:
        lines = []
        for sec, kv in self.raw.items():
            lines.append(f"[{sec}]")
            for k, v in kv.items():
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {sec: {k: v for k, v in kv.items()} for sec, kv in self.raw.items()}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (C1, m_F, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    raw: dict[str, dict[str, object]] = {}
    for sec, keys in SCHEMA.items():
        raw[sec] = dict(keys)
        if cp.has_section(sec):
            for k, v in cp.items(sec):
                if k not in keys:
                    raise ConfigError(f"{sec}.{k}", "unknown key")
                raw[sec][k] = _coerce(f"{sec}.{k}", keys[k], v)
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, "unknown section")
    st = raw["study"]
    cfg = ExperimentConfig(
        raw=raw,
        **{name: _floats(f"study.{name}", str(st[name]))
           for name in ("epsilon_list", "delta_list", "z_list", "tdelta_list",
                        "weight_N_list", "rho_delta_list")},
    )
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _validate(cfg: ExperimentConfig) -> None:
    s, m, st = cfg.raw["solver"], cfg.raw["model"], cfg.raw["study"]
    for key in ("t_final", "half_width"):
        if not s[key] > 0:
            raise ConfigError(f"solver.{key}", "must be positive")
    if s["epsilon"] < 0:
        raise ConfigError("solver.epsilon", "must be nonnegative")
    if s["n_paths"] < 1:
        raise ConfigError("solver.n_paths", "must be at least 1")
    if s["n_records"] < 1:
        raise ConfigError("solver.n_records", "must be at least 1")
    if s["n_steps"] < 0 or (s["n_steps"] and s["n_steps"] % s["n_records"]):
        raise ConfigError("solver.n_steps", "must be 0 (auto) or a positive multiple of n_records")
    if not 0 <= s["seed"] < 2**64:
        raise ConfigError("solver.seed", "must be an unsigned 64-bit integer")
    if s["ic"] not in IC_NAMES:
        raise ConfigError("solver.ic", f"unknown initial condition; choose from {IC_NAMES}")
    if s["boundary"] not in [b.value for b in Boundary]:
        raise ConfigError("solver.boundary", "must be periodic or dirichlet_zero")
    try:
        grid = cfg.grid
    except ValueError as exc:
        raise ConfigError("solver.n_cells", str(exc)) from None
    for key, build in (("flux", lambda: cfg.flux), ("entropy", lambda: cfg.pair()),
                       ("weight", lambda: cfg.weight), ("noise", lambda: cfg.noise),
                       ("kernel", lambda: cfg.kernel)):
        try:
            build()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"model.{key}", str(exc)) from None
    eps = cfg.epsilon_list
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("study.epsilon_list", "must be positive and strictly decreasing")
    for key in ("delta_list", "z_list"):
        vals = getattr(cfg, key)
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(f"study.{key}", "must be positive and strictly increasing")
        for v in vals:
            try:
                grid.cells(v)
            except ValueError as exc:
                raise ConfigError(f"study.{key}", str(exc)) from None
    step = s["t_final"] / s["n_records"]
    for v in cfg.tdelta_list:
        if not 0 < v < s["t_final"]:
            raise ConfigError("study.tdelta_list", f"{v} must lie in (0, t_final)")
        if abs(round(v / step) * step - v) > 1e-9 * step:
            raise ConfigError("study.tdelta_list", f"{v} is not a multiple of t_final/n_records={step}")
    if st["bracket"] not in ("discrete", "ito"):
        raise ConfigError("study.bracket", "must be discrete or ito")
    if st["n_levels"] < 2:
        raise ConfigError("study.n_levels", "need at least 2 refinement levels")
    if st["h_cells"] < 0:
        raise ConfigError("study.h_cells", "must be nonnegative")
    if st["lattice_points"] < 2:
        raise ConfigError("study.lattice_points", "need at least 2 points")
    if st["power"] and st["power"] < 1:
        raise ConfigError("study.power", "must be >= 1 (or 0 for the default)")
    if any(n <= 0.5 for n in cfg.weight_N_list):
        raise ConfigError("study.weight_N_list", "every N must exceed 1/2")
