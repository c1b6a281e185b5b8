"""Compactly supported approximate identities and their discrete use on grids."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .grid import Boundary, GridSpec, shift


@dataclass(frozen=True)
class BaseKernel:
    """Nonnegative unit-mass kernel supported in ``[-radius, radius]``."""

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    radius: float
    norm_const: float

    def scaled(self, delta: float) -> "ApproximateIdentity":
        return ApproximateIdentity(self, float(delta))


@dataclass(frozen=True)
class ApproximateIdentity:
    base: BaseKernel
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def support_radius(self) -> float:
        return self.base.radius * self.delta

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.eval(x / self.delta) / self.delta

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.deriv(x / self.delta) / self.delta**2

    def max_abs_deriv(self) -> float:
        return _max_abs_deriv(self.base) / self.delta**2

    def tail_mass(self, h: float) -> float:
        """Mass of the rescaled kernel outside ``(-h, h)``."""
        r = self.support_radius
        if h >= r:
            return 0.0
        val, _ = integrate.quad(lambda s: float(self.eval(np.array([s]))[0]), h, r,
                                epsabs=1e-15, epsrel=1e-12)
        return 2.0 * val

    def weights(self, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Integer offsets ``m`` and discrete weights ``J_delta(m dx) dx`` summing to one."""
        m_max = int(math.floor(self.support_radius / dx))
        m = np.arange(-m_max, m_max + 1)
        w = self.eval(m * dx) * dx
        total = math.fsum(w)
        if total <= 0:
            # delta == dx: only the centre survives
            w = (m == 0).astype(float)
        else:
            w = w / total
        return m, w


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


def _bump_deriv(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    s = 1.0 - xi * xi
    out[inside] = np.exp(-1.0 / s) * (-2.0 * xi / (s * s))
    return out


@lru_cache(maxsize=None)
def friedrichs_kernel() -> BaseKernel:
    """The standard bump ``c exp(-1/(1-x^2))`` on (-1, 1), normalised numerically."""
    mass, _ = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                             epsabs=0.0, epsrel=1e-13, limit=200)
    c = 1.0 / mass
    return BaseKernel(
        name="friedrichs",
        eval=lambda x: c * _bump(x),
        deriv=lambda x: c * _bump_deriv(x),
        radius=1.0,
        norm_const=c,
    )


def make_kernel(name: str) -> BaseKernel:
    if name == "friedrichs":
        return friedrichs_kernel()
    raise ValueError(f"unknown kernel {name!r}")


@lru_cache(maxsize=None)
def _max_abs_deriv(base: BaseKernel) -> float:
    xs = np.linspace(-base.radius, base.radius, 4001)
    d = np.abs(base.deriv(xs))
    k = int(np.argmax(d))
    res = optimize.minimize_scalar(
        lambda s: -abs(float(base.deriv(np.array([s]))[0])),
        bounds=(xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(d[k]), -float(res.fun))


def convolve(k: ApproximateIdentity, u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Direct-summation ``J_delta * u`` along the last axis."""
    if k.delta < grid.dx * (1 - 1e-12):
        raise ValueError(f"kernel scale {k.delta} is below the grid spacing {grid.dx}")
    u = np.asarray(u, dtype=float)
    offsets, w = k.weights(grid.dx)
    out = np.zeros_like(u)
    for m, wm in zip(offsets, w):
        if wm != 0.0:
            # (J * u)_j = sum_m J(m dx) u_{j-m} dx
            out += wm * shift(u, -int(m), grid.boundary)
    return out


def kappa_kernel(k: ApproximateIdentity, z: float, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``kappa(y) = J_delta(y + z) - J_delta(y)`` on the lattice ``y = m dx``.

    Returns ``(y, kappa)`` covering the support ball of radius ``|z| + delta``.
    """
    if not abs(z) < 1:
        raise ValueError(f"|z| must be < 1, got {z}")
    m_max = int(math.ceil((abs(z) + k.support_radius) / dx)) + 1
    y = np.arange(-m_max, m_max + 1) * dx
    return y, k.eval(y + z) - k.eval(y)


def kappa_l1_bound(k: ApproximateIdentity, z: float) -> float:
    """``|z| max|J_delta'| 2(|z| + delta)``: mean value theorem times support length."""
    return abs(z) * k.max_abs_deriv() * 2.0 * (abs(z) + k.support_radius)


__all__ = [
    "ApproximateIdentity",
    "BaseKernel",
    "Boundary",
    "convolve",
    "friedrichs_kernel",
    "kappa_kernel",
    "kappa_l1_bound",
    "make_kernel",
]
