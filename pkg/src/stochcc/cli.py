"""Command line entry point: ``stochcc <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, parse_config
from .entropy import default_lattice, lemma_constant, verify_lemma_bound
from .errors import ConfigError, NumericalAbort, PropertyViolation
from .estimators import (fit_rate, fit_window, interpolate_curve, kruzkov_rho_t, mollified_modulus,
                         mu_exponent, mu_x_exponent, power_moduli, spatial_sup_modulus,
                         temporal_sup_modulus)
from .interaction import residual_refinement
from .solver import apriori_moments, solve_ensemble
from .weights import make_power_weight, verify_weight_properties

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_PROPERTY, EXIT_REPLAY_MISMATCH = 0, 2, 3, 4, 5

MOMENT_NAMES = ("sup_weighted_lp_pow_r", "dissipation_pow_r", "entropy_production_pow_r")
CURVE_HEADER = ("kind", "delta", "value", "std_err", "n_paths")
FIT_HEADER = ("kind", "window_lo", "window_hi", "slope", "slope_stderr", "r_squared")


class Run:
    """Output directory plus the list of artifacts written into it."""

    def __init__(self, out: Path, cfg: ExperimentConfig, threads: int | None, dump: bool):
        self.out = out
        self.cfg = cfg
        self.threads = threads
        self.dump = dump
        self.artifacts: list[str] = []
        self.plots: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.artifacts.append(name)
        return path

    def plot(self, name: str, curves, ref_slope: float | None = None, title: str = ""):
        if not self.cfg.get("output", "emit_plots"):
            return
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "stochcc"
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, d, v in curves:
            d, v = np.asarray(d), np.asarray(v)
            ok = v > 0
            ax.loglog(d[ok], v[ok], "o-", label=label)
            if ref_slope is not None and ok.any():
                d0, v0 = d[ok][0], v[ok][0]
                ax.loglog(d[ok], v0 * (d[ok] / d0) ** ref_slope, "k--", lw=0.8)
        ax.set_title(title)
        ax.legend(fontsize=7)
        fig.savefig(self.out / name, format="svg", metadata={"Date": None})
        plt.close(fig)
        self.plots.append(name)

    def manifest(self, subcommand: str) -> dict:
        arts = {a: hashlib.sha256((self.out / a).read_bytes()).hexdigest() for a in self.artifacts}
        m = {
            "tool": "stochcc",
            "version": __version__,
            "subcommand": subcommand,
            "config": self.cfg.as_dict(),
            "seed": self.cfg.seed,
            "threads": self.threads,
            "dump": self.dump,
            "artifacts": arts,
            "plots": sorted(self.plots),
        }
        (self.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        return m


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _ensemble(run: Run, eps: float | None = None):
    cfg = run.cfg
    scfg = cfg.solve_config(eps)
    flux = cfg.flux
    return solve_ensemble(flux, cfg.noise, cfg.pair(flux), scfg, cfg.n_paths,
                          seed_base=cfg.seed, threads=run.threads), scfg


def _eps_list(cfg: ExperimentConfig):
    return cfg.epsilon_list or (cfg.get("solver", "epsilon"),)


def _need(cfg: ExperimentConfig, key: str):
    vals = getattr(cfg, key)
    if not vals:
        raise ConfigError(f"study.{key}", "required by this subcommand")
    return vals


# ---------------------------------------------------------------- subcommands

def cmd_solve(run: Run) -> None:
    cfg = run.cfg
    ens, scfg = _ensemble(run)
    chi, pair = cfg.weight, cfg.pair()
    grid = scfg.grid
    wx = chi.eval(grid.x) * grid.dx
    p = cfg.get("study", "p")
    rows = []
    for m, path in enumerate(ens):
        wt = np.full(path.u.shape[0], path.dt_record)
        wt[-1] = 0.0
        lp = (np.abs(path.u) ** p @ wx) ** (1.0 / p)
        rows += [
            (m, "seed", path.seed),
            (m, "max_abs_u", float(np.abs(path.u).max())),
            (m, "mass_final", math.fsum(path.u[-1] * grid.dx)),
            (m, "sup_weighted_lp", float(lp.max())),
            (m, "dissipation", math.fsum(wt * (path.eps_grad_sq @ wx))),
            (m, "entropy_production", math.fsum(wt * (path.mu_eps @ wx))),
        ]
    run.csv("summary.csv", ("path_id", "functional", "value"), rows)
    mom = apriori_moments(ens, chi, p, cfg.get("study", "r"), pair)
    run.csv("moments.csv", ("epsilon", "functional", "value", "std_err", "n_paths"),
            [(scfg.epsilon, n, v, s, len(ens))
             for n, v, s in zip(MOMENT_NAMES, mom.values, mom.std_errs)])
    if run.dump:
        for m, path in enumerate(ens):
            k, j = np.indices(path.u.shape)
            run.csv(f"paths/path_{m:04d}.csv", ("k", "j", "u"),
                    zip(k.ravel().tolist(), j.ravel().tolist(), path.u.ravel().tolist()))


def cmd_rates_space(run: Run) -> None:
    cfg = run.cfg
    z_list, d_list = _need(cfg, "z_list"), cfg.delta_list or cfg.z_list
    chi, flux = cfg.weight, cfg.flux
    pair = cfg.pair(flux)
    power = cfg.get("study", "power") or (flux.p_f + pair.p_eta + 2.0)
    p = cfg.get("study", "p")
    mu, mu_x = mu_exponent(p), mu_x_exponent(p, flux.p_f, pair.p_eta)
    grid = cfg.grid
    table, moments = [], []
    plot_curves = []
    for i, eps in enumerate(_eps_list(cfg)):
        ens, scfg = _ensemble(run, eps)
        curves = [spatial_sup_modulus(ens, chi, d_list),
                  mollified_modulus(ens, chi, cfg.kernel, d_list)]
        curves += list(power_moduli(ens, chi, power, z_list).values())
        rows, fits = [], []
        for c in curves:
            rows += list(c.csv_rows())
            lo, hi = fit_window(c.deltas, grid.dx, 2 * grid.half_width)
            if hi - lo < 3:
                lo, hi = 0, len(c.deltas)
            if hi - lo >= 3 and min(c.values[lo:hi]) > 0:
                f = fit_rate(c, (lo, hi))
                fits.append((c.label or c.kind.value, lo, hi, f.slope, f.slope_stderr, f.r_squared))
                if c.kind.value == "power_p":
                    table.append((eps, c.label, f.slope, f.slope_stderr, mu, mu_x))
        run.csv(f"curves_eps{i}.csv", CURVE_HEADER, rows)
        run.csv(f"fits_eps{i}.csv", FIT_HEADER, fits)
        mom = apriori_moments(ens, chi, p, cfg.get("study", "r"), pair)
        moments += [(eps, n, v, s, len(ens))
                    for n, v, s in zip(MOMENT_NAMES, mom.values, mom.std_errs)]
        plot_curves.append((f"eps={eps:g}", curves[2].deltas, curves[2].values))
    run.csv("mu_table.csv", ("epsilon", "kind", "slope", "slope_stderr", "mu", "mu_x"), table)
    run.csv("moments.csv", ("epsilon", "functional", "value", "std_err", "n_paths"), moments)
    run.plot("power_modulus.svg", plot_curves, ref_slope=mu, title="power modulus vs shift")


def cmd_rates_time(run: Run) -> None:
    cfg = run.cfg
    t_list = _need(cfg, "tdelta_list")
    chi = cfg.weight
    st = cfg.raw["study"]
    rows, fits, rho_rows, plot_curves = [], [], [], []
    for i, eps in enumerate(_eps_list(cfg)):
        ens, _ = _ensemble(run, eps)
        c = temporal_sup_modulus(ens, chi, t_list)
        rows = list(c.csv_rows())
        fit_rows = []
        if len(c.deltas) >= 3 and min(c.values) > 0:
            f = fit_rate(c)
            fit_rows.append((c.kind.value, 0, len(c.deltas), f.slope, f.slope_stderr, f.r_squared))
        run.csv(f"curves_eps{i}.csv", CURVE_HEADER, rows)
        run.csv(f"fits_eps{i}.csv", FIT_HEADER, fit_rows)
        plot_curves.append((f"eps={eps:g}", c.deltas, c.values))
        if cfg.z_list or cfg.delta_list:
            sx = spatial_sup_modulus(ens, chi, cfg.delta_list or cfg.z_list)
            if min(sx.values) > 0 and len(sx.deltas) >= 2:
                rho = interpolate_curve(sx)
                for d in cfg.rho_delta_list or t_list:
                    rho_rows.append((eps, d, kruzkov_rho_t(rho, st["C1"], st["C2"], st["C3"],
                                                           st["m_F"], st["m_G"], d)))
    if rho_rows:
        run.csv("rho_t.csv", ("epsilon", "delta", "rho_t"), rho_rows)
    run.plot("temporal_modulus.svg", plot_curves, ref_slope=0.5, title="temporal sup-modulus")


def cmd_interaction_check(run: Run) -> None:
    cfg = run.cfg
    flux = cfg.flux
    pair = cfg.pair(flux)
    st = cfg.raw["study"]
    scfg = cfg.solve_config()
    levels = residual_refinement(flux, cfg.noise, pair, cfg.weight, scfg, cfg.n_paths,
                                 st["h_cells"] * cfg.grid.dx, st["n_levels"], seed_base=cfg.seed,
                                 bracket=st["bracket"], threads=run.threads)
    run.csv("interaction.csv", ("level", "n_steps", "dt", "residual", "std_err"),
            [(lv.level, lv.n_steps, lv.dt, lv.residual, lv.std_err) for lv in levels])
    res = np.array([lv.residual for lv in levels])
    if len(levels) >= 2 and np.all(res > 0):
        slope = float(np.polyfit(np.log([lv.dt for lv in levels]), np.log(res), 1)[0])
        run.csv("interaction_fit.csv", ("slope", "monotone"),
                [(slope, bool(np.all(np.diff(res) < 0)))])
    run.plot("interaction.svg", [("residual", [lv.dt for lv in levels][::-1], res[::-1])],
             ref_slope=0.5, title="identity residual vs dt")


def cmd_lemma_check(run: Run) -> None:
    cfg = run.cfg
    flux = cfg.flux
    pair = cfg.pair(flux)
    st = cfg.raw["study"]
    lattice = default_lattice(st["lattice_half_width"], st["lattice_points"])
    try:
        rep = verify_lemma_bound(flux, pair, lattice)
        rows = [(flux.name, pair.name, rep.min_ratio, rep.c_lemma, rep.exponent, rep.n_pairs, "ok")]
        violation = None
    except PropertyViolation as exc:
        c = lemma_constant(flux.c_f, flux.p_f, pair.c_eta, pair.p_eta)
        rows = [(flux.name, pair.name, float("nan"), c, flux.p_f + pair.p_eta + 2.0,
                 0, f"violation: {exc}")]
        violation = exc
    run.csv("lemma.csv", ("flux", "entropy", "min_ratio", "c_lemma", "exponent", "n_pairs", "status"),
            rows)
    if violation is not None:
        raise violation


def cmd_verify_weights(run: Run) -> None:
    cfg = run.cfg
    st = cfg.raw["study"]
    Ns = cfg.weight_N_list or (cfg.get("model", "weight_N"),)
    rows = []
    for N in Ns:
        chi = make_power_weight(N) if cfg.get("model", "weight") == "power" else cfg.weight
        rep = verify_weight_properties(chi, cfg.grid, st["z_max"], st["R"])
        rows.append((chi.name, N, chi.c_chi, chi.l1_mass, rep.k1, rep.k2, rep.z_max, rep.R))
    run.csv("weights.csv", ("weight", "N", "c_chi", "l1_mass", "K1", "K2", "z_max", "R"), rows)


SUBCOMMANDS: dict[str, Callable[[Run], None]] = {
    "solve": cmd_solve,
    "rates-space": cmd_rates_space,
    "rates-time": cmd_rates_time,
    "interaction-check": cmd_interaction_check,
    "lemma-check": cmd_lemma_check,
    "verify-weights": cmd_verify_weights,
}


def run_subcommand(name: str, cfg: ExperimentConfig, out: Path, threads: int | None = None,
                   dump: bool = False) -> dict:
    """Run one subcommand and write its manifest; exceptions propagate."""
    run = Run(Path(out), cfg, threads, dump)
    try:
        SUBCOMMANDS[name](run)
    except NumericalAbort as exc:
        (run.out / "errors.log").write_text(
            f"path={exc.path_index} step={exc.step} max_abs_u={exc.max_abs_u}: {exc}\n")
        raise
    return run.manifest(name)


def replay(manifest_path: Path, out: Path | None = None) -> tuple[bool, dict]:
    """Re-run a manifest and compare CSV digests. Returns ``(identical, new_manifest)``."""
    old = json.loads(Path(manifest_path).read_text())
    lines = []
    for sec, kv in old["config"].items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in kv.items()]
    cfg = parse_config("\n".join(lines))
    if out is None:
        out = Path(tempfile.mkdtemp(prefix="stochcc-replay-"))
    new = run_subcommand(old["subcommand"], cfg, out, old.get("threads"), old.get("dump", False))
    return new["artifacts"] == old["artifacts"], new


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochcc", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int, default=None, help="overrides solver.seed")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--dump", action="store_true", help="write per-path (k, j, u) CSV dumps")
        sp.add_argument("--out", type=Path, default=None, help="overrides output.output_dir")
    rp = sub.add_parser("replay", help="re-run a manifest and check byte-identical CSV output")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--out", type=Path, default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            same, new = replay(args.manifest, args.out)
            print("identical" if same else "MISMATCH")
            return EXIT_OK if same else EXIT_REPLAY_MISMATCH
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        cfg = load_config(args.config).with_overrides(seed=args.seed)
        out = args.out or Path(cfg.get("output", "output_dir"))
        m = run_subcommand(args.command, cfg, out, args.threads or os.cpu_count(), args.dump)
        for name in m["artifacts"]:
            print(out / name)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
