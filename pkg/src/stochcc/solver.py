"""Explicit Euler-Maruyama finite-volume solver for the viscous stochastic conservation law

    du + d_x f(u) dt = eps d_xx u dt + sigma(x, u) dW

on a cell-centred grid, with an Engquist-Osher flux and one real Brownian motion.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .entropy import EntropyPair, FluxSpec
from .errors import NumericalAbort, PropertyViolation
from .grid import GridSpec, pad
from .weights import WeightFunction

CFL_SAFETY = 0.4


@dataclass(frozen=True)
class NoiseSpec:
    name: str
    sigma: Callable[[np.ndarray, np.ndarray], np.ndarray]
    growth_const: float

    def check_growth(self, x, u) -> None:
        """Raise unless ``|sigma(x, u)| <= K (1 + |u|)`` on the sampled lattice."""
        X, U = np.meshgrid(np.asarray(x, float), np.asarray(u, float), indexing="ij")
        s = np.abs(self.sigma(X, U))
        bound = self.growth_const * (1.0 + np.abs(U))
        if np.any(s > bound * (1 + 1e-12)):
            raise PropertyViolation(f"noise {self.name} exceeds K(1+|u|) with K={self.growth_const}")


def make_noise(name: str, K: float = 1.0) -> NoiseSpec:
    K = float(K)
    if name == "zero":
        return NoiseSpec("zero", lambda x, u: np.zeros(np.broadcast(x, u).shape), 0.0)
    if name == "additive":
        return NoiseSpec("additive", lambda x, u: np.full(np.broadcast(x, u).shape, K), K)
    if name == "linear":
        # multiplicative: keeps u = 0 regions at zero, which the interaction runs need
        return NoiseSpec("linear", lambda x, u: K * (u + 0.0 * x), K)
    raise ValueError(f"unknown noise {name!r}")


IC_NAMES = ("neg-sin", "sin", "smoothed-step", "random-trig", "bump", "zero")


def make_initial_condition(name: str, grid: GridSpec, seed: int = 0) -> np.ndarray:
    x = grid.x
    L = grid.half_width
    if name == "neg-sin":
        return -np.sin(np.pi * x / L)
    if name == "sin":
        return np.sin(2.0 * np.pi * x / L)
    if name == "smoothed-step":
        w = max(4.0 * grid.dx, L / 64.0)
        return 0.5 * (1.0 - np.tanh(x / w))
    if name == "random-trig":
        rng = np.random.default_rng([int(seed), 0x1C])
        a, b = rng.standard_normal((2, 8))
        k = np.arange(1, 9)[:, None]
        return ((a[:, None] * np.cos(k * np.pi * x / L) + b[:, None] * np.sin(k * np.pi * x / L)) / k).sum(0)
    if name == "bump":
        w = L / 4.0
        s = x / w
        out = np.zeros_like(x)
        inside = np.abs(s) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out
    if name == "zero":
        return np.zeros_like(x)
    raise ValueError(f"unknown initial condition {name!r}; choose from {IC_NAMES}")


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float
    t_final: float
    n_steps: int
    grid: GridSpec
    seed: int = 0
    initial_condition: str = "neg-sin"
    record_every: int = 1

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.n_steps < 1 or self.record_every < 1 or self.n_steps % self.record_every:
            raise ValueError(f"n_steps={self.n_steps} must be a positive multiple of "
                             f"record_every={self.record_every}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def u0(self) -> np.ndarray:
        return make_initial_condition(self.initial_condition, self.grid, self.seed)


def stable_n_steps(flux: FluxSpec, epsilon: float, grid: GridSpec, t_final: float,
                   u_max: float, multiple_of: int = 1) -> int:
    """Smallest step count meeting the CFL bound for speeds up to ``|f'(u)|, |u| <= u_max``."""
    us = np.linspace(-u_max, u_max, 1001)
    speed = float(np.max(np.abs(flux.f_prime(us))))
    limits = [grid.dx / (speed + 1e-12)]
    if epsilon > 0:
        limits.append(grid.dx**2 / (2.0 * epsilon))
    n = math.ceil(t_final / (CFL_SAFETY * min(limits)))
    return int(math.ceil(n / multiple_of) * multiple_of)


@dataclass
class PathResult:
    """One sample path on the recorded time levels ``k * record_every``."""

    u: np.ndarray
    dW: np.ndarray
    eps_grad_sq: np.ndarray
    mu_eps: np.ndarray
    grid: GridSpec
    dt: float
    record_every: int
    epsilon: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dt_record(self) -> float:
        return self.dt * self.record_every

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.u.shape[0]) * self.dt_record

    @property
    def t_final(self) -> float:
        return (self.u.shape[0] - 1) * self.dt_record

    def brownian_path(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dW)])


def frozen_path(grid: GridSpec, profile: np.ndarray, t_final: float, n_records: int) -> PathResult:
    """A time-independent path, for checking functionals against closed forms."""
    u = np.broadcast_to(np.asarray(profile, float), (n_records + 1, grid.n_cells)).copy()
    zeros = np.zeros_like(u)
    dt = t_final / n_records
    return PathResult(u=u, dW=np.zeros(n_records), eps_grad_sq=zeros, mu_eps=zeros.copy(),
                      grid=grid, dt=dt, record_every=1, epsilon=0.0)


def brownian_increments(seed: int, n_steps: int, dt: float) -> np.ndarray:
    return np.random.default_rng(int(seed)).normal(0.0, math.sqrt(dt), n_steps)


def bridge_refine(dW: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Split each increment over ``dt`` into two halves via the Brownian bridge midpoint."""
    dW = np.asarray(dW, float)
    first = 0.5 * dW + math.sqrt(dt / 4.0) * rng.standard_normal(dW.shape)
    out = np.empty(2 * dW.size)
    out[0::2] = first
    out[1::2] = dW - first
    return out


def bridged_increments(seed: int, n_steps: int, dt: float, n_levels: int) -> list[np.ndarray]:
    """Increments on ``n_levels`` nested grids ``dt, dt/2, ...`` of one Brownian path."""
    levels = [brownian_increments(seed, n_steps, dt)]
    for ell in range(1, n_levels):
        rng = np.random.default_rng([int(seed), ell])
        levels.append(bridge_refine(levels[-1], dt / 2 ** (ell - 1), rng))
    return levels


def eo_flux(flux: FluxSpec, a, b):
    """Engquist-Osher flux for a convex f minimised at ``flux.sonic``."""
    s = flux.sonic
    return flux.f(np.maximum(a, s)) + flux.f(np.minimum(b, s)) - flux.f(np.asarray(s))


def eo_entropy_flux(flux: FluxSpec, pair: EntropyPair, a, b):
    """Numerical entropy flux matching :func:`eo_flux`: q split at the sonic point."""
    s = flux.sonic
    return pair.q(np.maximum(a, s)) + pair.q(np.minimum(b, s)) - pair.q(np.asarray(s))


def _solve_batch(flux: FluxSpec, noise: NoiseSpec, pair: EntropyPair, cfg: SolveConfig,
                 dW: np.ndarray, path_offset: int = 0) -> list[dict]:
    grid = cfg.grid
    dx, dt, eps = grid.dx, cfg.dt, cfg.epsilon
    P = dW.shape[0]
    x = grid.x
    u = np.broadcast_to(cfg.u0(), (P, grid.n_cells)).astype(float)
    if not np.all(np.isfinite(u)):
        raise NumericalAbort("initial condition is not finite")
    if eps > 0 and dt > CFL_SAFETY * dx**2 / (2.0 * eps) * (1 + 1e-12):
        raise NumericalAbort(
            f"viscous CFL violated: dt={dt:.3e} > {CFL_SAFETY} dx^2/(2 eps)="
            f"{CFL_SAFETY * dx**2 / (2 * eps):.3e}; increase n_steps"
        )
    speed_cap = CFL_SAFETY * dx / dt - 1e-12
    n_rec = cfg.n_steps // cfg.record_every + 1
    U = np.empty((n_rec, P, grid.n_cells))
    G = np.empty_like(U)
    lam, nu = dt / dx, eps * dt / dx**2

    def record(r, u):
        U[r] = u
        du = (pad(u, 0, 1, grid.boundary)[:, 1:] - u) / dx
        G[r] = eps * du * du

    record(0, u)
    for k in range(cfg.n_steps):
        speed = np.abs(flux.f_prime(u))
        smax = speed.max()
        if smax > speed_cap:
            p = int(np.argmax(speed.max(axis=1)))
            raise NumericalAbort(
                f"path {path_offset + p}: |f'(u)|={smax:.4g} at step {k} exceeds the CFL-certified "
                f"speed {speed_cap:.4g} (max|u|={np.abs(u[p]).max():.4g}); rerun with smaller dt",
                path_index=path_offset + p, step=k, max_abs_u=float(np.abs(u[p]).max()),
            )
        up = pad(u, 1, 1, grid.boundary)
        F = eo_flux(flux, up[:, :-1], up[:, 1:])
        u = (u - lam * (F[:, 1:] - F[:, :-1])
             + nu * (up[:, 2:] - 2.0 * u + up[:, :-2])
             + noise.sigma(x, u) * dW[:, k, None])
        if not np.all(np.isfinite(u)):
            p = int(np.argmin(np.isfinite(u).all(axis=1)))
            raise NumericalAbort(f"path {path_offset + p}: non-finite state at step {k + 1}",
                                 path_index=path_offset + p, step=k + 1)
        if (k + 1) % cfg.record_every == 0:
            record((k + 1) // cfg.record_every, u)

    eta2 = pair.eta_second(U)
    M = eta2 * G
    return [
        dict(u=U[:, p].copy(), dW=dW[p].copy(), eps_grad_sq=G[:, p].copy(), mu_eps=M[:, p].copy())
        for p in range(P)
    ]


def solve_path(flux: FluxSpec, noise: NoiseSpec, pair: EntropyPair, cfg: SolveConfig,
               dW: np.ndarray | None = None) -> PathResult:
    """Solve one path; increments default to the stream seeded by ``cfg.seed``."""
    if dW is None:
        dW = brownian_increments(cfg.seed, cfg.n_steps, cfg.dt)
    dW = np.asarray(dW, float)
    if dW.shape != (cfg.n_steps,):
        raise ValueError(f"dW has shape {dW.shape}, expected ({cfg.n_steps},)")
    (fields,) = _solve_batch(flux, noise, pair, cfg, dW[None, :])
    return PathResult(grid=cfg.grid, dt=cfg.dt, record_every=cfg.record_every,
                      epsilon=cfg.epsilon, seed=cfg.seed, **fields)


def path_seed(seed_base: int, m: int) -> int:
    return int(seed_base) ^ int(m)


def solve_ensemble(flux: FluxSpec, noise: NoiseSpec, pair: EntropyPair, cfg: SolveConfig,
                   n_paths: int, seed_base: int | None = None, threads: int | None = None,
                   increments: Sequence[np.ndarray] | None = None) -> list[PathResult]:
    """Independent paths; path ``m`` uses seed ``seed_base XOR m``.

    Paths are integrated in vectorised chunks; chunking does not change any
    path because every update is elementwise per path.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if seed_base is None:
        seed_base = cfg.seed
    seeds = [path_seed(seed_base, m) for m in range(n_paths)]
    if increments is None:
        dW = np.stack([brownian_increments(s, cfg.n_steps, cfg.dt) for s in seeds])
    else:
        dW = np.stack([np.asarray(d, float) for d in increments])
        if dW.shape != (n_paths, cfg.n_steps):
            raise ValueError(f"increments have shape {dW.shape}, expected {(n_paths, cfg.n_steps)}")
    threads = threads or os.cpu_count() or 1
    n_chunks = max(1, min(threads, n_paths))
    bounds = np.linspace(0, n_paths, n_chunks + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(ab):
        a, b = ab
        return _solve_batch(flux, noise, pair, cfg, dW[a:b], path_offset=a)

    if len(chunks) == 1:
        results = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(run, chunks))
    fields = [f for chunk in results for f in chunk]
    return [
        PathResult(grid=cfg.grid, dt=cfg.dt, record_every=cfg.record_every, epsilon=cfg.epsilon,
                   seed=seeds[m], meta={"path_index": m}, **fields[m])
        for m in range(n_paths)
    ]


def mc_mean(values) -> tuple[float, float]:
    """Order-independent mean (exactly rounded sums) and its standard error."""
    v = np.asarray(values, float)
    n = v.size
    mean = math.fsum(v) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class MomentReport:
    """Monte Carlo means of the sup-in-time weighted L^p norm, dissipation and entropy production,
    each raised to the power ``r``."""

    values: tuple[float, float, float]
    std_errs: tuple[float, float, float]
    p: float
    r: float


def _time_weights(path: PathResult) -> np.ndarray:
    # left-point rule on the recorded levels
    w = np.full(path.u.shape[0], path.dt_record)
    w[-1] = 0.0
    return w


def apriori_moments(ensemble: Sequence[PathResult], chi: WeightFunction, p: float, r: float,
                    pair: EntropyPair, mask: np.ndarray | None = None) -> MomentReport:
    if not ensemble:
        raise ValueError("empty ensemble")
    if p < 2 or r < 2:
        raise ValueError(f"need p, r >= 2, got p={p}, r={r}")
    grid = ensemble[0].grid
    wx = chi.eval(grid.x) * grid.dx
    if mask is not None:
        wx = np.where(mask, wx, 0.0)
    rows = []
    for path in ensemble:
        wt = _time_weights(path)
        norms = (np.abs(path.u) ** p @ wx) ** (1.0 / p)
        diss = math.fsum(wt * (path.eps_grad_sq @ wx))
        mu = np.abs(pair.eta_second(path.u)) * path.eps_grad_sq
        prod = math.fsum(wt * (mu @ wx))
        rows.append((norms.max() ** r, abs(diss) ** r, abs(prod) ** r))
    rows = np.asarray(rows)
    stats = [mc_mean(rows[:, i]) for i in range(3)]
    return MomentReport(values=tuple(s[0] for s in stats), std_errs=tuple(s[1] for s in stats),
                        p=float(p), r=float(r))
