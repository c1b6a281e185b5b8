"""Translation moduli, Monte Carlo curves, log-log rate fits and the Kruzkov interpolation optimizer."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import PropertyViolation
from .grid import GridSpec, shift
from .mollifiers import BaseKernel
from .solver import PathResult, _time_weights, mc_mean
from .weights import WeightFunction


class ModulusKind(str, Enum):
    SPATIAL_SUP = "spatial_sup"
    SPATIAL_MOLLIFIED = "spatial_mollified"
    TEMPORAL_SUP = "temporal_sup"
    POWER_P = "power_p"


_SUP_KINDS = (ModulusKind.SPATIAL_SUP, ModulusKind.TEMPORAL_SUP)


@dataclass(frozen=True)
class ModulusCurve:
    deltas: tuple[float, ...]
    values: tuple[float, ...]
    std_errs: tuple[float, ...]
    kind: ModulusKind
    n_paths: int = 0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ModulusKind(self.kind))
        d = np.asarray(self.deltas, float)
        v = np.asarray(self.values, float)
        if not (d.size == v.size == len(self.std_errs)):
            raise ValueError("deltas, values and std_errs must have equal length")
        if np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("deltas must be positive and strictly increasing")
        if np.any(v < 0) or np.any(np.asarray(self.std_errs) < 0):
            raise ValueError("modulus values and standard errors must be nonnegative")
        if self.kind in _SUP_KINDS and np.any(np.diff(v) < 0):
            raise PropertyViolation(f"{self.kind.value} curve is not nondecreasing in delta")

    def csv_rows(self):
        for d, v, s in zip(self.deltas, self.values, self.std_errs):
            yield (self.label or self.kind.value, d, v, s, self.n_paths)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    window: tuple[int, int] = (0, 0)


# ---------------------------------------------------------------- helpers

def _space_weights(chi: WeightFunction, grid: GridSpec, mask) -> np.ndarray:
    wx = chi.eval(grid.x) * grid.dx
    if mask is not None:
        wx = np.where(np.asarray(mask, bool), wx, 0.0)
    return wx


def _check_ensemble(ensemble: Sequence[PathResult]) -> GridSpec:
    if not ensemble:
        raise ValueError("empty ensemble")
    grid = ensemble[0].grid
    for p in ensemble:
        if p.grid != grid or p.u.shape != ensemble[0].u.shape:
            raise ValueError("ensemble paths must share grid and record layout")
    return grid


def _curve(kind, deltas, per_path, n_paths, label="") -> ModulusCurve:
    per_path = np.asarray(per_path, float).reshape(n_paths, len(deltas))
    st = [mc_mean(per_path[:, i]) for i in range(len(deltas))]
    return ModulusCurve(tuple(float(d) for d in deltas), tuple(s[0] for s in st),
                        tuple(s[1] for s in st), kind, n_paths, label)


def shift_functional(path: PathResult, chi: WeightFunction, m: int, power: float = 1.0,
                     mask=None, wt: np.ndarray | None = None) -> float:
    """``int_0^T int |u(t, x + m dx) - u(t, x)|^power chi dx dt`` on one path."""
    wx = _space_weights(chi, path.grid, mask)
    if wt is None:
        wt = _time_weights(path)
    if m == 0:
        return 0.0
    diff = np.abs(shift(path.u, m, path.grid.boundary) - path.u)
    if power != 1.0:
        diff = diff**power
    return math.fsum(wt * (diff @ wx))


def spacetime_mass(path: PathResult, chi: WeightFunction, mask=None) -> float:
    """``int_0^T int chi dx dt`` over the integration window used by the moduli."""
    return math.fsum(_time_weights(path)) * math.fsum(_space_weights(chi, path.grid, mask))


def _admissible(deltas, step, what):
    kept = []
    for d in deltas:
        if d < step * (1 - 1e-12):
            warnings.warn(f"{what} {d} is below the resolution {step}; skipped", stacklevel=3)
            continue
        kept.append(float(d))
    if not kept:
        raise ValueError(f"no admissible {what} values")
    return kept


# ---------------------------------------------------------------- moduli

def spatial_sup_modulus(ensemble: Sequence[PathResult], chi: WeightFunction, delta_list,
                        z_per_delta: int = 8, mask=None) -> ModulusCurve:
    """``E sup_{|z| <= delta} int int |u(t, x + z) - u(t, x)| chi``.

    Every grid-aligned shift with ``|m| dx <= delta`` is evaluated, so the
    tested sets are nested and at least ``z_per_delta`` shifts are used
    whenever the grid offers that many.
    """
    if z_per_delta < 1:
        raise ValueError("z_per_delta must be a positive integer")
    grid = _check_ensemble(ensemble)
    deltas = _admissible(delta_list, grid.dx, "delta")
    m_of = [int(math.floor(d / grid.dx + 1e-9)) for d in deltas]
    m_max = max(m_of)
    out = []
    for path in ensemble:
        wt = _time_weights(path)
        g = np.zeros(2 * m_max + 1)
        for m in range(-m_max, m_max + 1):
            g[m + m_max] = shift_functional(path, chi, m, 1.0, mask, wt)
        out.append([g[m_max - mm: m_max + mm + 1].max() for mm in m_of])
    return _curve(ModulusKind.SPATIAL_SUP, deltas, out, len(ensemble))


def mollified_modulus(ensemble: Sequence[PathResult], chi: WeightFunction, kernel: BaseKernel,
                      delta_list, mask=None) -> ModulusCurve:
    """``E int int int J_delta(z) |u(t, x + z) - u(t, x - z)| chi dz dx dt`` with grid-aligned z."""
    grid = _check_ensemble(ensemble)
    deltas = _admissible(delta_list, grid.dx, "delta")
    wx = _space_weights(chi, grid, mask)
    out = []
    for path in ensemble:
        wt = _time_weights(path)
        row = []
        for d in deltas:
            offsets, w = kernel.scaled(d).weights(grid.dx)
            acc = []
            for m, wm in zip(offsets, w):
                if wm == 0.0 or m == 0:
                    continue
                # |u(x+z) - u(x-z)| = |Delta_{2z} u| evaluated at x - z
                up = shift(path.u, int(m), grid.boundary)
                um = shift(path.u, -int(m), grid.boundary)
                acc.append(wm * math.fsum(wt * (np.abs(up - um) @ wx)))
            row.append(math.fsum(acc))
        out.append(row)
    return _curve(ModulusKind.SPATIAL_MOLLIFIED, deltas, out, len(ensemble))


def temporal_sup_modulus(ensemble: Sequence[PathResult], chi: WeightFunction, delta_list,
                         mask=None) -> ModulusCurve:
    """``E sup_{0 < tau <= delta} int_0^{T - delta_max} int |u(t + tau) - u(t)| chi``.

    Lags are multiples of the recorded time step. The time window is the one
    of the largest delta so that all values share it.
    """
    _check_ensemble(ensemble)
    p0 = ensemble[0]
    T, step = p0.t_final, p0.dt_record
    for d in delta_list:
        if d >= T:
            raise ValueError(f"delta={d} must be below T={T}")
    deltas = _admissible(delta_list, step, "delta")
    lags = [int(math.floor(d / step + 1e-9)) for d in deltas]
    l_max = max(lags)
    n_int = p0.u.shape[0] - 1
    n_t = n_int - l_max
    wx = _space_weights(chi, p0.grid, mask)
    out = []
    for path in ensemble:
        u = path.u
        g = np.zeros(l_max + 1)
        for lag in range(1, l_max + 1):
            inner = np.abs(u[lag:lag + n_t] - u[:n_t]) @ wx
            g[lag] = step * math.fsum(inner)
        out.append([g[: lag + 1].max() for lag in lags])
    return _curve(ModulusKind.TEMPORAL_SUP, deltas, out, len(ensemble))


def power_modulus(ensemble: Sequence[PathResult], chi: WeightFunction, power: float, z_list,
                  mask=None, direction: int = 1, label: str = "") -> ModulusCurve:
    """``E int int |u(t, x + z) - u(t, x)|^power chi`` for each positive, grid-aligned z.

    ``direction=-1`` evaluates the shifts ``-z`` instead.
    """
    if power < 1:
        raise ValueError(f"power must be >= 1, got {power}")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    grid = _check_ensemble(ensemble)
    ms = [grid.cells(z) for z in z_list]
    out = []
    for path in ensemble:
        wt = _time_weights(path)
        out.append([shift_functional(path, chi, direction * m, power, mask, wt) for m in ms])
    return _curve(ModulusKind.POWER_P, list(z_list), out, len(ensemble), label)


def power_moduli(ensemble, chi: WeightFunction, power: float, z_list, mask=None) -> dict[str, ModulusCurve]:
    """The power modulus under both chi and chi^2."""
    return {
        "chi": power_modulus(ensemble, chi, power, z_list, mask, label=f"power_{power:g}_chi"),
        "chi2": power_modulus(ensemble, chi.squared(), power, z_list, mask, label=f"power_{power:g}_chi2"),
    }


def sup_vs_mollified_consistency(ensemble, chi: WeightFunction, kernel: BaseKernel, delta_list,
                                 mask=None) -> list[tuple[float, float]]:
    """``(delta, sup / mollified)`` for every delta where the mollified value is nonzero."""
    sup = spatial_sup_modulus(ensemble, chi, delta_list, mask=mask)
    mol = mollified_modulus(ensemble, chi, kernel, delta_list, mask=mask)
    return [(d, s / m) for d, s, m in zip(sup.deltas, sup.values, mol.values) if m > 0]


# ---------------------------------------------------------------- fits

def fit_window(deltas, dx: float, scale: float, factor: float = 4.0) -> tuple[int, int]:
    """Index range ``[lo, hi)`` of deltas at least ``factor`` away from dx and from ``scale``."""
    d = np.asarray(deltas, float)
    keep = np.flatnonzero((d >= factor * dx) & (d <= scale / factor))
    if keep.size == 0:
        return (0, 0)
    return int(keep[0]), int(keep[-1]) + 1


def fit_rate(curve: ModulusCurve, window: tuple[int, int] | None = None) -> RateFit:
    lo, hi = window if window is not None else (0, len(curve.deltas))
    d = np.asarray(curve.deltas[lo:hi], float)
    v = np.asarray(curve.values[lo:hi], float)
    if d.size < 3:
        raise ValueError(f"fit window needs at least 3 points, got {d.size}")
    if np.any(v <= 0):
        raise ValueError("fit window contains nonpositive values")
    res = stats.linregress(np.log(d), np.log(v))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                   float(res.stderr), (lo, hi))


def mu_exponent(p: float) -> float:
    return 1.0 if math.isinf(p) else 1.0 - 1.0 / p


def mu_x_exponent(p: float, p_f: float, p_eta: float) -> float:
    return mu_exponent(p) / (p_f + p_eta + 2.0)


# ---------------------------------------------------------------- Kruzkov interpolation

NU_BOUNDS = (1e-8, 1e2)


def interpolate_curve(curve: ModulusCurve) -> Callable[[float], float]:
    """Log-log interpolant of a positive curve.

    Below the first delta the first-segment power law is continued down to 0;
    above the last delta the value is held constant.
    """
    ld = np.log(np.asarray(curve.deltas, float))
    v = np.asarray(curve.values, float)
    if np.any(v <= 0) or ld.size < 2:
        raise ValueError("need at least two positive curve values")
    lv = np.log(v)
    s0 = (lv[1] - lv[0]) / (ld[1] - ld[0])
    if s0 <= 0:
        raise ValueError("curve must increase near its smallest delta")

    def rho(nu):
        nu = float(nu)
        if nu <= 0:
            return 0.0
        ln = math.log(nu)
        if ln < ld[0]:
            return float(math.exp(lv[0] + s0 * (ln - ld[0])))
        return float(math.exp(np.interp(ln, ld, lv)))

    return rho


def kruzkov_rho_t(rho_x: Callable[[float], float], C1: float, C2: float, C3: float,
                  m_F: int, m_G: int, delta: float, n_scan: int = 801) -> float:
    """``inf_{nu > 0} C1 rho_x(nu) + C2 delta / nu^m_F + C3 sqrt(delta) / nu^m_G``.

    A log-spaced scan over ``NU_BOUNDS`` brackets the minimum, which a
    golden-section search in ``log nu`` then refines.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if min(C1, C2, C3) < 0 or m_F < 0 or m_G < 0:
        raise ValueError("constants and orders must be nonnegative")
    lo, hi = map(math.log, NU_BOUNDS)
    grid = np.linspace(lo, hi, n_scan)
    rx = np.array([rho_x(math.exp(s)) for s in grid])
    if not np.all(np.isfinite(rx)) or np.any(rx < 0):
        raise ValueError("rho_x must be finite and nonnegative")
    if np.any(np.diff(rx) < -1e-12 * np.maximum(1.0, np.abs(rx[1:]))):
        raise ValueError("rho_x samples are not nondecreasing")
    sd = math.sqrt(delta)

    def obj(s):
        nu = math.exp(s)
        return C1 * rho_x(nu) + C2 * delta * nu ** (-m_F) + C3 * sd * nu ** (-m_G)

    vals = C1 * rx + C2 * delta * np.exp(-m_F * grid) + C3 * sd * np.exp(-m_G * grid)
    k = int(np.argmin(vals))
    if k == n_scan - 1:
        if rx[-1] == 0.0:
            # every term is nonincreasing in nu: the infimum is the nu -> infinity limit
            return (C2 * delta if m_F == 0 else 0.0) + (C3 * sd if m_G == 0 else 0.0)
        return float(vals[-1])
    if k == 0:
        return float(vals[0])
    res = optimize.minimize_scalar(obj, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                   method="golden", tol=1e-10)
    return float(min(res.fun, vals[k]))


__all__ = [
    "ModulusCurve",
    "ModulusKind",
    "NU_BOUNDS",
    "RateFit",
    "fit_rate",
    "fit_window",
    "interpolate_curve",
    "kruzkov_rho_t",
    "mollified_modulus",
    "mu_exponent",
    "mu_x_exponent",
    "power_moduli",
    "power_modulus",
    "shift_functional",
    "spacetime_mass",
    "spatial_sup_modulus",
    "sup_vs_mollified_consistency",
    "temporal_sup_modulus",
]
