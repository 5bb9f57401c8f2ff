"""Periodic space-time grid and tagged Fourier fields.

Space is a periodic box of side 2*pi*lam per axis, so the frequency lattice
is Z^3/lam; time is one period of an integer tau lattice scaled by
tau_step.  The Fourier convention is the series one: forward divides by the
node count, so Parseval reads sum |u_hat|^2 = mean |u|^2 and single modes
e^{i xi x} have unit norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpaceTimeGrid:
    """3+1 dimensional periodic grid; spatial node counts are powers of two."""

    nodes: tuple[int, int, int]
    t_nodes: int
    lam: float = 1.0
    tau_step: float = 1.0
    max_n: int | None = None
    max_l: int | None = None

    def __post_init__(self):
        for n in (*self.nodes, self.t_nodes):
            if n < 2 or n & (n - 1):
                raise ValueError("node counts must be powers of two >= 2")
        if self.lam <= 0 or self.tau_step <= 0:
            raise ValueError("lam and tau_step must be positive")
        if self.max_n is not None and self.xi_max() < 2 * self.max_n:
            raise ValueError(
                f"grid resolves |xi| <= {self.xi_max():.3g}, below twice "
                f"the declared frequency budget {self.max_n}")
        if self.max_l is not None:
            need = 2 * self.max_l + (self.max_n or 0) ** 2
            if self.tau_max() < need:
                raise ValueError(
                    f"grid resolves |tau| <= {self.tau_max():.3g}, below "
                    f"the declared modulation budget {need}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (*self.nodes, self.t_nodes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def xi_axes(self) -> list[np.ndarray]:
        return [np.fft.fftfreq(n, d=1.0 / n) / self.lam for n in self.nodes]

    def xi_grids(self) -> list[np.ndarray]:
        ax = self.xi_axes()
        return [a.reshape([-1 if i == j else 1 for j in range(4)])
                for i, a in enumerate(ax)]

    def xi_norm(self) -> np.ndarray:
        """|xi| broadcast over the full grid shape (last axis length 1)."""
        g = self.xi_grids()
        return np.sqrt(sum(a**2 for a in g))

    def tau_axis(self) -> np.ndarray:
        return np.fft.fftfreq(self.t_nodes, d=1.0 / self.t_nodes) \
            * self.tau_step

    def tau_grid(self) -> np.ndarray:
        return self.tau_axis().reshape(1, 1, 1, -1)

    def xi_max(self) -> float:
        return float(np.sqrt(sum((n // 2) ** 2 for n in self.nodes))
                     / self.lam)

    def tau_max(self) -> float:
        return float(self.t_nodes // 2 * self.tau_step)

    def x_axes(self) -> list[np.ndarray]:
        side = 2 * np.pi * self.lam
        return [np.arange(n) * (side / n) for n in self.nodes]

    def times(self) -> np.ndarray:
        period = 2 * np.pi / self.tau_step
        return np.arange(self.t_nodes) * (period / self.t_nodes)


PHYSICAL = "physical"
FOURIER = "fourier"


@dataclass(frozen=True)
class Field:
    """Complex field on a SpaceTimeGrid, tagged by which side it lives on."""

    grid: SpaceTimeGrid
    values: np.ndarray
    side: str = PHYSICAL

    def __post_init__(self):
        if self.side not in (PHYSICAL, FOURIER):
            raise ValueError(f"unknown side tag {self.side!r}")
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError("field values do not match the grid shape")
        object.__setattr__(self, "values", v)

    def to_fourier(self) -> "Field":
        if self.side == FOURIER:
            return self
        vhat = np.fft.fftn(self.values) / self.grid.size
        return Field(self.grid, vhat, FOURIER)

    def to_physical(self) -> "Field":
        if self.side == PHYSICAL:
            return self
        v = np.fft.ifftn(self.values) * self.grid.size
        return Field(self.grid, v, PHYSICAL)

    def norm(self) -> float:
        """Parseval norm: sqrt(mean |u|^2) = sqrt(sum |u_hat|^2)."""
        if self.side == PHYSICAL:
            return float(np.sqrt(np.mean(np.abs(self.values) ** 2)))
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))

    def __add__(self, other: "Field") -> "Field":
        if self.grid is not other.grid and self.grid != other.grid:
            raise ValueError("fields live on different grids")
        if self.side != other.side:
            raise ValueError("fields live on different sides")
        return Field(self.grid, self.values + other.values, self.side)

    def __sub__(self, other: "Field") -> "Field":
        return self + Field(other.grid, -other.values, other.side)

    def __mul__(self, scalar) -> "Field":
        return Field(self.grid, self.values * scalar, self.side)

    __rmul__ = __mul__


def random_field(grid: SpaceTimeGrid, seed: int = 0,
                 side: str = FOURIER) -> Field:
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return Field(grid, v, side)


def mode_field(grid: SpaceTimeGrid, xi: tuple[float, float, float],
               tau: float, amplitude: complex = 1.0) -> Field:
    """Fourier-side field with a single space-time mode."""
    vhat = np.zeros(grid.shape, dtype=np.complex128)
    idx = []
    for a, (val, n) in enumerate(zip(xi, grid.nodes)):
        k = int(round(val * grid.lam))
        if not -n // 2 <= k < n - n // 2:
            raise ValueError("mode frequency outside the grid")
        idx.append(k % n)
    kt = int(round(tau / grid.tau_step))
    nt = grid.t_nodes
    if not -nt // 2 <= kt < nt - nt // 2:
        raise ValueError("mode modulation outside the grid")
    idx.append(kt % nt)
    vhat[tuple(idx)] = amplitude
    return Field(grid, vhat, FOURIER)
