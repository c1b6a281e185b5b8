"""Flux/entropy pairs, the entropy flux q with q' = eta' f', and the interaction defect."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import PropertyViolation

ArrayFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_LATTICE_HALF_WIDTH = 8.0
_NODE_STEP = 1.0 / 16.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class FluxSpec:
    """Convex flux with ``f'(v) - f'(w) >= c_f (v - w)^p_f`` for ``w < v``.

    ``sonic`` is the minimiser of f, used by the Engquist-Osher splitting.
    """

    name: str
    f: ArrayFn
    f_prime: ArrayFn
    f_second: ArrayFn
    c_f: float
    p_f: float
    sonic: float = 0.0


class EntropyFlux:
    """``q(u) = int_0^u eta'(s) f'(s) ds``.

    Node values on a lattice over ``[-U, U]`` come from adaptive quadrature;
    between nodes a 10-point Gauss-Legendre panel from the nearest node is added.
    """

    def __init__(self, eta_prime: ArrayFn, f_prime: ArrayFn,
                 half_width: float = DEFAULT_LATTICE_HALF_WIDTH, anchor: float = 0.0):
        self._g = lambda s: eta_prime(s) * f_prime(s)
        self.half_width = float(half_width)
        n = int(round(2 * half_width / _NODE_STEP))
        self.nodes = np.linspace(-half_width, half_width, n + 1)
        vals = np.zeros_like(self.nodes)
        for i in range(1, self.nodes.size):
            vals[i] = vals[i - 1] + self._quad(self.nodes[i - 1], self.nodes[i])
        zero = int(np.argmin(np.abs(self.nodes)))
        self.node_values = vals - vals[zero] + anchor
        self.anchor = anchor

    def _quad(self, a: float, b: float) -> float:
        g = self._g
        val, err, info = integrate.quad(lambda s: float(g(np.array([s]))[0]), a, b,
                                        epsabs=1e-13, epsrel=1e-13, limit=200,
                                        full_output=True)[:3]
        if err > 1e-9 * max(1.0, abs(val)):
            raise ArithmeticError(f"entropy-flux quadrature did not converge on [{a}, {b}]: err={err}")
        return float(val)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        out = np.empty_like(u)
        inside = np.abs(u) <= self.half_width
        if np.any(inside):
            ui = u[inside]
            k = np.clip(np.rint((ui + self.half_width) / _NODE_STEP).astype(int), 0, self.nodes.size - 1)
            a = self.nodes[k]
            half = 0.5 * (ui - a)
            mid = 0.5 * (ui + a)
            s = mid[..., None] + half[..., None] * _GL_X
            out[inside] = self.node_values[k] + half * (self._g(s) @ _GL_W)
        if not np.all(inside):
            for idx in np.flatnonzero(~inside.ravel()):
                x = u.flat[idx]
                end = math.copysign(self.half_width, x)
                base = self.node_values[-1] if x > 0 else self.node_values[0]
                out.flat[idx] = base + self._quad(end, x)
        return out[0] if scalar else out


@dataclass(frozen=True)
class EntropyPair:
    name: str
    eta: ArrayFn
    eta_prime: ArrayFn
    eta_second: ArrayFn
    q: EntropyFlux
    c_eta: float
    p_eta: float
    p0: float = 2.0
    params: dict = field(default_factory=dict)


def make_burgers() -> FluxSpec:
    return FluxSpec(
        name="burgers",
        f=lambda u: 0.5 * u * u,
        f_prime=lambda u: np.asarray(u, dtype=float) * 1.0,
        f_second=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        c_f=1.0,
        p_f=1.0,
    )


def make_quartic() -> FluxSpec:
    """``f = u^4/4``; ``v^3 - w^3 >= (v - w)^3 / 4`` with equality at w = -v."""
    return FluxSpec(
        name="quartic",
        f=lambda u: 0.25 * u**4,
        f_prime=lambda u: u**3,
        f_second=lambda u: 3.0 * u * u,
        c_f=0.25,
        p_f=3.0,
    )


def make_zero_flux() -> FluxSpec:
    """``f = 0``: pure diffusion/noise runs. Not genuinely nonlinear (c_f = 0)."""
    return FluxSpec(
        name="zero",
        f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        f_prime=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        f_second=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        c_f=0.0,
        p_f=1.0,
    )


def make_flux(name: str) -> FluxSpec:
    try:
        return {"burgers": make_burgers, "quartic": make_quartic, "zero": make_zero_flux}[name]()
    except KeyError:
        raise ValueError(f"unknown flux {name!r}") from None


_P0_OF_FLUX = {"burgers": 2.0, "quartic": 4.0, "zero": 2.0}


def entropy_flux(flux: FluxSpec, eta_prime: ArrayFn,
                 half_width: float = DEFAULT_LATTICE_HALF_WIDTH) -> EntropyFlux:
    return EntropyFlux(eta_prime, flux.f_prime, half_width=half_width)


def make_entropy_pair(flux: FluxSpec, eta: ArrayFn, eta_prime: ArrayFn, eta_second: ArrayFn,
                      c_eta: float, p_eta: float, p0: float = 2.0, name: str = "custom",
                      half_width: float = DEFAULT_LATTICE_HALF_WIDTH) -> EntropyPair:
    return EntropyPair(
        name=name,
        eta=eta,
        eta_prime=eta_prime,
        eta_second=eta_second,
        q=entropy_flux(flux, eta_prime, half_width),
        c_eta=float(c_eta),
        p_eta=float(p_eta),
        p0=float(p0),
    )


def make_entropy(flux: FluxSpec, spec: str = "same-as-flux",
                 half_width: float = DEFAULT_LATTICE_HALF_WIDTH) -> EntropyPair:
    """``"same-as-flux"`` (eta = f) or ``"power:p0"`` (eta = |u|^p0, p0 >= 2)."""
    if spec == "same-as-flux":
        if flux.c_f <= 0:
            raise ValueError(f"flux {flux.name!r} is not convex enough to serve as an entropy")
        return make_entropy_pair(flux, flux.f, flux.f_prime, flux.f_second, flux.c_f, flux.p_f,
                                 p0=_P0_OF_FLUX.get(flux.name, 2.0), name="same-as-flux",
                                 half_width=half_width)
    if spec.startswith("power:"):
        p0 = float(spec.split(":", 1)[1])
        if p0 < 2:
            raise ValueError(f"power entropy needs p0 >= 2, got {p0}")
        return make_entropy_pair(
            flux,
            eta=lambda u: np.abs(u) ** p0,
            eta_prime=lambda u: p0 * np.abs(u) ** (p0 - 1.0) * np.sign(u),
            eta_second=lambda u: p0 * (p0 - 1.0) * np.abs(u) ** (p0 - 2.0),
            # |v|^(r-1)v - |w|^(r-1)w >= 2^(1-r)(v-w)^r with r = p0 - 1
            c_eta=p0 * 2.0 ** (2.0 - p0),
            p_eta=p0 - 1.0,
            p0=p0,
            name=spec,
            half_width=half_width,
        )
    raise ValueError(f"unknown entropy {spec!r}")


def interaction_defect(flux: FluxSpec, pair: EntropyPair, v, w):
    """``(w - v)(q(w) - q(v)) - (eta(w) - eta(v))(f(w) - f(v))``, vectorised."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return (w - v) * (pair.q(w) - pair.q(v)) - (pair.eta(w) - pair.eta(v)) * (flux.f(w) - flux.f(v))


def lemma_constant(c_f: float, p_f: float, c_eta: float, p_eta: float) -> float:
    return c_f * c_eta / ((1.0 + p_f + p_eta) * (2.0 + p_f + p_eta))


def _ordered_pairs(lattice):
    lat = np.unique(np.asarray(lattice, dtype=float))
    if lat.size < 2:
        raise ValueError("lattice needs at least two distinct points")
    i, j = np.triu_indices(lat.size, k=1)
    return lat[j], lat[i]  # v > w


def measure_nonlinearity(g_prime: ArrayFn, p: float, lattice) -> float:
    """``min_{w < v} (g'(v) - g'(w)) / (v - w)^p`` over lattice pairs."""
    v, w = _ordered_pairs(lattice)
    return float(np.min((g_prime(v) - g_prime(w)) / (v - w) ** p))


def check_nonlinearity(label: str, g_prime: ArrayFn, c: float, p: float, lattice) -> None:
    v, w = _ordered_pairs(lattice)
    lhs = g_prime(v) - g_prime(w)
    rhs = c * (v - w) ** p
    bad = lhs < rhs - 1e-12 * np.maximum(1.0, np.abs(rhs))
    if c <= 0 or np.any(bad):
        k = int(np.argmax(bad)) if np.any(bad) else 0
        raise PropertyViolation(
            f"{label}: declared constant C={c}, p={p} fails at w={w[k]}, v={v[k]} "
            f"(difference {lhs[k]!r} < {rhs[k]!r})"
        )


@dataclass(frozen=True)
class LemmaReport:
    min_ratio: float
    c_lemma: float
    exponent: float
    n_pairs: int


def verify_lemma_bound(flux: FluxSpec, pair: EntropyPair, lattice) -> LemmaReport:
    """Minimal ``defect / (v - w)^(p_f + p_eta + 2)`` over lattice pairs ``w < v``.

    Raises :class:`PropertyViolation` if the declared nonlinearity constants
    fail on the lattice or the ratio drops below the lemma constant.
    """
    check_nonlinearity(f"flux {flux.name}", flux.f_prime, flux.c_f, flux.p_f, lattice)
    check_nonlinearity(f"entropy {pair.name}", pair.eta_prime, pair.c_eta, pair.p_eta, lattice)
    v, w = _ordered_pairs(lattice)
    expo = flux.p_f + pair.p_eta + 2.0
    ratio = interaction_defect(flux, pair, v, w) / (v - w) ** expo
    c = lemma_constant(flux.c_f, flux.p_f, pair.c_eta, pair.p_eta)
    m = float(np.min(ratio))
    if m < c - 1e-9:
        raise PropertyViolation(f"interaction defect ratio {m} below lemma constant {c}")
    return LemmaReport(min_ratio=m, c_lemma=c, exponent=expo, n_pairs=int(v.size))


def growth_constant(pair: EntropyPair, lattice) -> float:
    """Smallest K with |eta^(k)(u)| <= K(1 + |u|^(p0-k)), k = 0, 1, 2, on the lattice."""
    u = np.asarray(lattice, dtype=float)
    a = np.abs(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ks = [
            np.abs(pair.eta(u)) / (1.0 + a**pair.p0),
            np.abs(pair.eta_prime(u)) / (1.0 + a ** (pair.p0 - 1.0)),
            np.abs(pair.eta_second(u)) / (1.0 + a ** (pair.p0 - 2.0)),
        ]
    return float(max(np.max(k) for k in ks))


def default_lattice(half_width: float = DEFAULT_LATTICE_HALF_WIDTH, n: int = 161) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)
