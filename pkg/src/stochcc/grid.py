"""Uniform cell-centred grids on a truncated line [-L, L]."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet_zero"


@dataclass(frozen=True)
class GridSpec:
    """Cells of width ``2L/n`` centred at ``-L + (j + 1/2) dx``."""

    half_width: float
    n_cells: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 16:
            raise ValueError(f"n_cells must be an integer >= 16, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.dx * self.n_cells != 2.0 * self.half_width:
            raise ValueError(
                f"dx * n_cells != 2L in floating point for L={self.half_width}, "
                f"n={self.n_cells}; pick a representable combination"
            )

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.half_width + (np.arange(self.n_cells) + 0.5) * self.dx
        x.setflags(write=False)
        return x

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    def interior_mask(self, margin: float | None = None) -> np.ndarray:
        """Cells inside ``[-L + margin, L - margin]``; default margin is L/8."""
        if margin is None:
            margin = self.half_width / 8.0
        if margin < 0 or 2 * margin >= 2 * self.half_width:
            raise ValueError(f"invalid interior margin {margin}")
        lim = self.half_width - margin
        return np.abs(self.x) <= lim + 1e-12 * self.half_width

    def cells(self, length: float) -> int:
        """Number of cells spanned by ``length``; raises unless grid aligned."""
        m = round(length / self.dx)
        if abs(m * self.dx - length) > 1e-9 * max(self.dx, abs(length)):
            raise ValueError(f"length {length} is not a multiple of dx={self.dx}")
        return int(m)


def shift(u: np.ndarray, m: int, boundary: Boundary | str) -> np.ndarray:
    """Return ``u(x + m dx)`` along the last axis.

    Periodic grids wrap around; ``dirichlet_zero`` extends by zero.
    """
    u = np.asarray(u)
    if m == 0:
        return u.copy()
    if Boundary(boundary) is Boundary.PERIODIC:
        return np.roll(u, -m, axis=-1)
    out = np.zeros_like(u)
    n = u.shape[-1]
    if abs(m) >= n:
        return out
    if m > 0:
        out[..., : n - m] = u[..., m:]
    else:
        out[..., -m:] = u[..., : n + m]
    return out


def pad(u: np.ndarray, left: int, right: int, boundary: Boundary | str) -> np.ndarray:
    """Ghost-extend ``u`` along the last axis by ``left``/``right`` cells."""
    u = np.asarray(u)
    widths = [(0, 0)] * (u.ndim - 1) + [(left, right)]
    if Boundary(boundary) is Boundary.PERIODIC:
        return np.pad(u, widths, mode="wrap")
    return np.pad(u, widths, mode="constant")
