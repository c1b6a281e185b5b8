"""Discrete stochastic interaction identity for two transported fields A and D.

The fields obey, cell by cell and step by step,

    A^{k+1}_j - A^k_j = -(dt/dx)(B_j - B_{j-1}) + C_A,j dt + sigma_A,j dW_k
    D^{k+1}_j - D^k_j = -(dt/dx)(E_j - E_{j-1}) + C_D,j dt + sigma_D,j dW_k

where ``B_j``/``E_j`` live on the right interface of cell j and the flux
entering cell 0 from the left is zero. For ``I = sum_{i<j} A_i D_j dx^2``
summation by parts then gives an exact discrete identity whose continuum
limit is the Ito identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .entropy import EntropyPair, FluxSpec
from .errors import PropertyViolation
from .grid import Boundary, pad, shift
from .solver import (NoiseSpec, PathResult, SolveConfig, bridged_increments, eo_entropy_flux,
                     eo_flux, mc_mean, path_seed, solve_ensemble)
from .weights import WeightFunction

Bracket = Literal["discrete", "ito"]


@dataclass
class InteractionData:
    """Fields on time levels ``0..K`` (rows) and cells (columns); ``dW`` has K entries."""

    A: np.ndarray
    D: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C_A: np.ndarray
    C_D: np.ndarray
    sigma_A: np.ndarray
    sigma_D: np.ndarray
    dW: np.ndarray
    dx: float
    dt: float

    def __post_init__(self):
        shape = np.shape(self.A)
        for f in ("D", "B", "E", "C_A", "C_D", "sigma_A", "sigma_D"):
            if np.shape(getattr(self, f)) != shape:
                raise ValueError(f"field {f} has shape {np.shape(getattr(self, f))}, A has {shape}")
        if len(shape) != 2:
            raise ValueError("fields must be 2-D arrays (time level, cell)")
        if np.shape(self.dW) != (shape[0] - 1,):
            raise ValueError(f"dW has shape {np.shape(self.dW)}, expected ({shape[0] - 1},)")

    @property
    def n_steps(self) -> int:
        return self.A.shape[0] - 1

    def decay_ratio(self) -> float:
        """Largest boundary-cell magnitude of A or D relative to its interior maximum."""
        worst = 0.0
        for F in (self.A, self.D):
            top = np.max(np.abs(F))
            if top > 0:
                edge = max(np.max(np.abs(F[:, 0])), np.max(np.abs(F[:, -1])))
                worst = max(worst, edge / top)
        return float(worst)

    def check_decay(self, tol: float = 1e-8) -> None:
        r = self.decay_ratio()
        if r > tol:
            raise PropertyViolation(f"A or D does not decay at the boundary: ratio {r:.3e} > {tol}")


def _prefix(a, dx):
    return np.cumsum(a * dx, axis=-1)


def _suffix(a, dx):
    return np.cumsum((a * dx)[..., ::-1], axis=-1)[..., ::-1]


def _strict_prefix(a, dx):
    out = np.zeros_like(a)
    out[..., 1:] = _prefix(a, dx)[..., :-1]
    return out


def _strict_suffix(a, dx):
    out = np.zeros_like(a)
    out[..., :-1] = _suffix(a, dx)[..., 1:]
    return out


def antiderivatives(data: InteractionData, k: int):
    """Inclusive prefix sums of A, sigma_A and inclusive suffix sums of D, sigma_D at level k."""
    if not 0 <= k <= data.n_steps:
        raise IndexError(f"time level {k} outside 0..{data.n_steps}")
    dx = data.dx
    return (_prefix(data.A[k], dx), _suffix(data.D[k], dx),
            _prefix(data.sigma_A[k], dx), _suffix(data.sigma_D[k], dx))


def interaction_functional(data: InteractionData, k: int) -> float:
    """``I = sum_{i<j} A_i D_j dx^2`` in O(n)."""
    if not 0 <= k <= data.n_steps:
        raise IndexError(f"time level {k} outside 0..{data.n_steps}")
    return float(np.sum(data.A[k] * _strict_suffix(data.D[k], data.dx)) * data.dx)


def noise_interaction(data: InteractionData, k: int, rtol: float = 1e-10) -> tuple[float, float]:
    """``I_sigma`` computed against the suffix of sigma_D and against the prefix of sigma_A."""
    if not 0 <= k <= data.n_steps:
        raise IndexError(f"time level {k} outside 0..{data.n_steps}")
    sa, sd, dx = data.sigma_A[k], data.sigma_D[k], data.dx
    left = float(np.sum(sa * _strict_suffix(sd, dx)) * dx)
    right = float(np.sum(_strict_prefix(sa, dx) * sd) * dx)
    scale = float(np.sum(np.abs(sa)) * dx * np.sum(np.abs(sd)) * dx)
    if abs(left - right) > rtol * max(scale, np.finfo(float).tiny):
        raise PropertyViolation(f"noise interaction forms disagree: {left!r} vs {right!r}")
    return left, right


def identity_terms(data: InteractionData, bracket: Bracket = "discrete") -> dict[str, float]:
    """Every term of the interaction identity, with left-point (Ito) time sums.

    ``bracket="discrete"`` uses the realised covariation
    ``sum_k sum_{i<j} (A^{k+1}-A^k)_i (D^{k+1}-D^k)_j dx^2`` (discrete product
    rule, exact for data satisfying the discrete system);
    ``bracket="ito"`` uses ``sum_k I_sigma(t_k) dt``.
    """
    dx, dt = data.dx, data.dt
    K = data.n_steps
    A, D = data.A[:K], data.D[:K]
    Ds = _strict_suffix(D, dx)
    As = _strict_prefix(A, dx)
    D_right = np.zeros_like(D)
    D_right[:, :-1] = D[:, 1:]
    lhs = dt * dx * math.fsum(np.sum(A * data.E[:K] - D_right * data.B[:K], axis=1))
    c_a = dt * dx * math.fsum(np.sum(data.C_A[:K] * Ds, axis=1))
    c_d = dt * dx * math.fsum(np.sum(As * data.C_D[:K], axis=1))
    n_a = dx * math.fsum(data.dW * np.sum(data.sigma_A[:K] * Ds, axis=1))
    n_d = dx * math.fsum(data.dW * np.sum(As * data.sigma_D[:K], axis=1))
    if bracket == "discrete":
        dA = np.diff(data.A, axis=0)
        dD = np.diff(data.D, axis=0)
        br = dx * math.fsum(np.sum(dA * _strict_suffix(dD, dx), axis=1))
    elif bracket == "ito":
        sa = data.sigma_A[:K]
        i_sigma = np.sum(sa * _strict_suffix(data.sigma_D[:K], dx), axis=1) * dx
        br = dt * math.fsum(i_sigma)
    else:
        raise ValueError(f"unknown bracket {bracket!r}")
    i_T = interaction_functional(data, K)
    i_0 = interaction_functional(data, 0)
    rhs = -c_a - c_d - n_a - n_d - br + i_T - i_0
    return dict(lhs=lhs, c_a=c_a, c_d=c_d, noise_a=n_a, noise_d=n_d, bracket=br,
                i_T=i_T, i_0=i_0, rhs=rhs)


def identity_residual(data: InteractionData, bracket: Bracket = "discrete") -> float:
    t = identity_terms(data, bracket)
    return abs(t["lhs"] - t["rhs"])


def _interface_difference(Fh: np.ndarray, m: int, boundary: Boundary) -> np.ndarray:
    """``G_j = Fh[j+1+m] - Fh[j+1]`` for j = -1..n-1 (column 0 is j = -1).

    ``Fh[i]`` is the flux at the left interface of cell i (length n+1). Outside
    the domain the flux is frozen at its boundary value (dirichlet) or wrapped.
    """
    n = Fh.shape[-1] - 1
    j = np.arange(-1, n)
    if boundary is Boundary.PERIODIC:
        base = Fh[..., :n]
        return np.take(base, (j + 1 + m) % n, axis=-1) - np.take(base, (j + 1) % n, axis=-1)
    return (np.take(Fh, np.clip(j + 1 + m, 0, n), axis=-1)
            - np.take(Fh, np.clip(j + 1, 0, n), axis=-1))


def build_from_solution(path: PathResult, chi: WeightFunction, h: float, flux: FluxSpec,
                        pair: EntropyPair, noise: NoiseSpec) -> InteractionData:
    """Weighted shifted differences of a solved path, in the solver's own stencils.

    ``A = chi D_h u``, ``D = chi D_h eta(u)``; B and E are ``chi D_h`` of the
    Engquist-Osher flux and its entropy flux; C_D carries the discrete entropy
    production (Engquist-Osher numerical dissipation plus the viscous Bregman term).
    """
    grid = path.grid
    if path.record_every != 1:
        raise ValueError("build_from_solution needs every time step recorded (record_every=1)")
    if abs(h) >= 1:
        raise ValueError(f"|h| must be < 1, got {h}")
    m = grid.cells(h)
    bc = grid.boundary
    dx, dt, eps = grid.dx, path.dt, path.epsilon
    x = grid.x
    u = path.u
    c = chi.eval(x)
    c_left = np.concatenate([[0.0], c[:-1]])  # chi_{j-1}, zero flux entering cell 0
    dchi = (c - c_left) / dx

    def dh(X):
        return shift(X, m, bc) - X

    up = pad(u, 1, 1, bc)
    Fh = eo_flux(flux, up[:, :-1], up[:, 1:])
    Qh = eo_entropy_flux(flux, pair, up[:, :-1], up[:, 1:])
    Lu = (up[:, 2:] - 2.0 * u + up[:, :-2]) / dx**2
    eta = pair.eta(u)
    eta_p = pair.eta_prime(u)
    eta_pad = pair.eta(up)
    Leta = (eta_pad[:, 2:] - 2.0 * eta + eta_pad[:, :-2]) / dx**2
    sig = noise.sigma(x, u)
    nu_num = (eta_p * (Fh[:, 1:] - Fh[:, :-1]) - (Qh[:, 1:] - Qh[:, :-1])) / dx
    nu_visc = eps * (Leta - eta_p * Lu)
    mu_h = nu_num + nu_visc

    G = _interface_difference(Fh, m, bc)
    GQ = _interface_difference(Qh, m, bc)
    u_sh = shift(u, m, bc)
    eta_sh = pair.eta(u_sh) if bc is Boundary.DIRICHLET_ZERO else shift(eta, m, bc)

    A = c * (u_sh - u)
    B = c * G[:, 1:]
    C_A = dchi * G[:, :-1] + c * eps * dh(Lu)
    sigma_A = c * dh(sig)
    D = c * (eta_sh - eta)
    E = c * GQ[:, 1:]
    C_D0 = dchi * GQ[:, :-1]
    C_D1 = eps * dh(Leta)
    C_D2 = -dh(mu_h)
    C_D3 = 0.5 * dh(pair.eta_second(u) * sig * sig)
    C_D = C_D0 + c * (C_D1 + C_D2 + C_D3)
    sigma_D = c * dh(eta_p * sig)
    return InteractionData(A=A, D=D, B=B, E=E, C_A=C_A, C_D=C_D, sigma_A=sigma_A,
                           sigma_D=sigma_D, dW=path.dW.copy(), dx=dx, dt=dt)


@dataclass(frozen=True)
class RefinementLevel:
    level: int
    n_steps: int
    dt: float
    residual: float
    std_err: float


def residual_refinement(flux: FluxSpec, noise: NoiseSpec, pair: EntropyPair,
                        chi: WeightFunction, cfg: SolveConfig, n_paths: int, h: float,
                        n_levels: int = 3, seed_base: int | None = None,
                        bracket: Bracket = "discrete", threads: int | None = None,
                        check_decay: bool = True) -> list[RefinementLevel]:
    """Identity residual of solver data as dt halves, one Brownian path per seed bridged across levels."""
    if seed_base is None:
        seed_base = cfg.seed
    seeds = [path_seed(seed_base, i) for i in range(n_paths)]
    bridged = [bridged_increments(s, cfg.n_steps, cfg.dt, n_levels) for s in seeds]
    out = []
    for ell in range(n_levels):
        lcfg = SolveConfig(epsilon=cfg.epsilon, t_final=cfg.t_final, n_steps=cfg.n_steps * 2**ell,
                           grid=cfg.grid, seed=cfg.seed, initial_condition=cfg.initial_condition,
                           record_every=1)
        paths = solve_ensemble(flux, noise, pair, lcfg, n_paths, seed_base=seed_base,
                               threads=threads, increments=[b[ell] for b in bridged])
        res = []
        for p in paths:
            data = build_from_solution(p, chi, h, flux, pair, noise)
            if check_decay:
                data.check_decay()
            res.append(identity_residual(data, bracket))
        mean, se = mc_mean(res)
        out.append(RefinementLevel(ell, lcfg.n_steps, lcfg.dt, mean, se))
    return out


__all__ = [
    "InteractionData", "antiderivatives", "interaction_functional", "noise_interaction",
    "identity_terms", "identity_residual", "build_from_solution", "residual_refinement",
    "RefinementLevel",
]
