"""Weights chi with |chi'| <= C chi, weighted L^p norms, weight-class checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import PropertyViolation
from .grid import GridSpec

ArrayFn = Callable[[np.ndarray], np.ndarray]

REFERENCE_POINTS = 2**14
REFERENCE_HALF_WIDTH = 100.0


@dataclass(frozen=True)
class WeightFunction:
    """A positive integrable weight together with its first two derivatives.

    ``c_chi`` is measured from ``eval``/``grad`` rather than declared.
    """

    name: str
    eval: ArrayFn
    grad: ArrayFn
    hess: ArrayFn
    c_chi: float
    l1_mass: float
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))

    def squared(self) -> "WeightFunction":
        ev, gr, he = self.eval, self.grad, self.hess
        return WeightFunction(
            name=f"{self.name}^2",
            eval=lambda x: ev(x) ** 2,
            grad=lambda x: 2.0 * ev(x) * gr(x),
            hess=lambda x: 2.0 * (gr(x) ** 2 + ev(x) * he(x)),
            c_chi=2.0 * self.c_chi,
            l1_mass=_l1_mass(lambda x: ev(x) ** 2),
            params={**self.params, "squared": True},
        )


def _measure_log_gradient_bound(eval_fn: ArrayFn, grad_fn: ArrayFn) -> float:
    xs = np.linspace(-REFERENCE_HALF_WIDTH, REFERENCE_HALF_WIDTH, REFERENCE_POINTS)
    ratio = np.abs(grad_fn(xs)) / eval_fn(xs)
    k = int(np.argmax(ratio))
    best = float(ratio[k])
    # the grid spacing alone leaves an O(h^2) gap at the true maximiser
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda s: -abs(float(grad_fn(np.array([s]))[0])) / float(eval_fn(np.array([s]))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


def _l1_mass(eval_fn: ArrayFn) -> float:
    val, _ = integrate.quad(lambda s: float(eval_fn(np.array([s]))[0]), -np.inf, np.inf,
                            epsabs=0.0, epsrel=1e-12, limit=400)
    return float(val)


def make_power_weight(N: float) -> WeightFunction:
    """``chi_N(x) = (1 + x^2)^(-N)``; integrable on the line for ``N > 1/2``."""
    N = float(N)
    if not N > 0.5:
        raise ValueError(f"power weight needs N > 1/2 to be integrable, got N={N}")

    def ev(x):
        return (1.0 + np.square(x)) ** (-N)

    def gr(x):
        return -2.0 * N * x * (1.0 + np.square(x)) ** (-N - 1.0)

    def he(x):
        s = 1.0 + np.square(x)
        return -2.0 * N * s ** (-N - 1.0) + 4.0 * N * (N + 1.0) * np.square(x) * s ** (-N - 2.0)

    return WeightFunction(
        name="power",
        eval=ev,
        grad=gr,
        hess=he,
        c_chi=_measure_log_gradient_bound(ev, gr),
        l1_mass=_l1_mass(ev),
        params={"N": N},
    )


def power_weight_mass(N: float) -> float:
    """Closed form of the integral of ``(1+x^2)^(-N)`` over the line."""
    return math.sqrt(math.pi) * math.exp(special.gammaln(N - 0.5) - special.gammaln(N))


def power_weight_tail(N: float, X: float) -> float:
    """Upper bound for the two tails ``|x| > X`` of chi_N, using (1+x^2)^-N <= x^-2N."""
    return 2.0 * X ** (1.0 - 2.0 * N) / (2.0 * N - 1.0)


def make_constant_weight(half_width: float) -> WeightFunction:
    """chi = 1 on the truncated domain (not in the weight class on the whole line)."""
    return WeightFunction(
        name="constant",
        eval=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        grad=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        hess=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        c_chi=0.0,
        l1_mass=2.0 * float(half_width),
        params={"half_width": float(half_width)},
    )


def make_weight(name: str, **params) -> WeightFunction:
    if name == "power":
        return make_power_weight(params.get("N", 1.0))
    if name == "constant":
        return make_constant_weight(params["half_width"])
    raise ValueError(f"unknown weight {name!r}")


@dataclass(frozen=True)
class WeightReport:
    k1: float
    k2: float
    z_max: float
    R: float


def verify_weight_properties(
    chi: WeightFunction,
    grid: GridSpec,
    z_max: float,
    R: float,
    n_offsets: int = 129,
) -> WeightReport:
    """Brute-force the two constants of the weight-class inequalities.

    ``k1`` is the max of ``|chi(x+z) - chi(x)| / (chi(x)|z|)`` over grid points
    and ``0 < |z| <= z_max``; ``k2`` the max of ``chi(x)/chi(y)`` over
    ``|x - y| <= R``.
    """
    if not 0 < z_max <= 1:
        raise ValueError(f"z_max must lie in (0, 1], got {z_max}")
    if R < z_max:
        raise ValueError(f"R={R} must be >= z_max={z_max}")
    x = grid.x[:, None]
    z = np.linspace(-z_max, z_max, 2 * n_offsets)
    z = z[z != 0.0][None, :]
    with np.errstate(all="ignore"):
        cx = chi.eval(x)
        k1 = float(np.max(np.abs(chi.eval(x + z) - cx) / (cx * np.abs(z))))
        y_off = np.linspace(-R, R, 2 * n_offsets + 1)[None, :]
        k2 = float(np.max(cx / chi.eval(x + y_off)))
    if not (math.isfinite(k1) and math.isfinite(k2)):
        raise PropertyViolation(
            f"weight {chi.name} is not in the weight class on this grid: K1={k1}, K2={k2}"
        )
    return WeightReport(k1=k1, k2=k2, z_max=float(z_max), R=float(R))


def weighted_lp_norm(
    u: np.ndarray,
    chi: WeightFunction,
    p: float,
    grid: GridSpec,
    mask: np.ndarray | None = None,
) -> float:
    """Midpoint rule for ``(sum_j |u_j|^p chi(x_j) dx)^(1/p)``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    u = np.asarray(u, dtype=float)
    if u.shape != grid.x.shape:
        raise ValueError(f"u has shape {u.shape}, grid has {grid.x.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite entries")
    w = chi.eval(grid.x) * grid.dx
    if mask is not None:
        w = np.where(mask, w, 0.0)
    return math.fsum(np.abs(u) ** p * w) ** (1.0 / p)
