"""Smooth dyadic decompositions and modulation norms on space-time grids.

The shipped bump is a clamped smoothstep of exponential type: identically 1
on |r| <= 1, supported in |r| < 2, and C-infinity.  Dyadic pieces are exact
differences psi_N(r) = psi(r/N) - psi(r/(N/2)), so partial sums telescope to
psi(r/N_max) up to a few ulps; all partition identities in this module hold
to machine roundoff by construction, not by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .caps import CapSet, build_caps
from .grid import FOURIER, Field, SpaceTimeGrid


def bump(r) -> np.ndarray:
    """Even C-infinity bump: 1 on |r| <= 1, 0 for |r| >= 2."""
    r = np.abs(np.asarray(r, dtype=float))
    out = np.ones_like(r)
    out[r >= 2] = 0.0
    mid = (r > 1) & (r < 2)
    if np.any(mid):
        t = r[mid] - 1.0
        rise = np.exp(-1.0 / t)
        fall = np.exp(-1.0 / (1.0 - t))
        out[mid] = fall / (rise + fall)
    return out


def _check_dyadic(value, name: str) -> int:
    v = int(value)
    if v != value or v < 1 or v & (v - 1):
        raise ValueError(f"{name} must be a dyadic integer >= 1, got {value}")
    return v


def psi_term(n: int, r) -> np.ndarray:
    """Dyadic piece psi_N; the N = 1 piece is the bump itself."""
    n = _check_dyadic(n, "N")
    r = np.asarray(r, dtype=float)
    if n == 1:
        return bump(r)
    # r/(n/2) rather than 2r/n: power-of-two division is exact, so the
    # shared term cancels bitwise against the next piece in partial sums.
    return bump(r / n) - bump(r / (n / 2))


def dyadic_levels(max_n: int) -> tuple[int, ...]:
    max_n = _check_dyadic(max_n, "max_n")
    return tuple(2**k for k in range(max_n.bit_length()))


def next_dyadic(x: float) -> int:
    """Smallest power of two >= max(x, 1)."""
    n = 1
    while n < x:
        n *= 2
    return n


@dataclass(frozen=True)
class PsiFamily:
    """Finite dyadic partition psi_1, ..., psi_maxN."""

    max_n: int

    def __post_init__(self):
        _check_dyadic(self.max_n, "max_n")

    @property
    def levels(self) -> tuple[int, ...]:
        return dyadic_levels(self.max_n)

    def term(self, n: int, r) -> np.ndarray:
        if n not in self.levels:
            raise ValueError(f"N={n} is not one of the levels {self.levels}")
        return psi_term(n, r)

    def total(self, r) -> np.ndarray:
        out = psi_term(1, r)
        for n in self.levels[1:]:
            out = out + psi_term(n, r)
        return out


def build_psi_partition(max_n: int) -> PsiFamily:
    return PsiFamily(max_n)


@dataclass(frozen=True)
class Localizer:
    """One projection tag: P_N, S_L, W+_L, W-_L, or cap(A, j)."""

    kind: str
    scale: int
    j: int | None = None

    def __post_init__(self):
        if self.kind not in ("P", "S", "W+", "W-", "cap"):
            raise ValueError(f"unknown localizer kind {self.kind!r}")
        _check_dyadic(self.scale, "scale")
        if self.kind == "cap":
            if self.j is None or self.j < 0:
                raise ValueError("cap localizers need a member index j >= 0")
        elif self.j is not None:
            raise ValueError(f"{self.kind} localizers take no member index")


@lru_cache(maxsize=8)
def _caps_for(aperture: int) -> CapSet:
    return build_caps(aperture)


def _cap_multiplier(grid: SpaceTimeGrid, aperture: int, j: int) -> np.ndarray:
    caps = _caps_for(aperture)
    if j >= len(caps):
        raise ValueError(f"cap index {j} out of range for {len(caps)} caps")
    ax = grid.xi_grids()
    dirs = np.stack(np.broadcast_arrays(*ax), axis=-1)[..., 0, :]
    flat = dirs.reshape(-1, 3)
    norms = np.linalg.norm(flat, axis=1)
    nz = norms > 0
    mult = np.zeros(len(flat))
    unit = flat[nz] / norms[nz, None]
    chi = caps.counts(unit).astype(float)
    member = unit @ caps.centers[j] >= np.cos(caps.radius) - 1e-12
    # chi >= 1 is a cover invariant; dividing by it makes the cap pieces
    # sum to the identity away from the zero frequency.
    vals = np.where(member, 1.0 / chi, 0.0)
    mult[nz] = vals
    return mult.reshape(*grid.nodes, 1)


def _modulation(grid: SpaceTimeGrid, kind: str) -> np.ndarray:
    xi = grid.xi_norm()
    tau = grid.tau_grid()
    if kind == "S":
        return tau + xi**2
    if kind == "W+":
        return tau + xi
    if kind == "W-":
        return tau - xi
    raise ValueError(f"unknown modulation kind {kind!r}")


def multiplier(grid: SpaceTimeGrid, loc: Localizer) -> np.ndarray:
    """Fourier multiplier of the localizer, broadcastable to grid shape."""
    if loc.kind == "P":
        r = grid.xi_norm()
        if loc.scale >= 2 and loc.scale / 2 >= grid.xi_max():
            raise ValueError(
                f"frequency localizer N={loc.scale} exceeds grid resolution "
                f"|xi| <= {grid.xi_max():.3g}")
        return psi_term(loc.scale, r)
    if loc.kind == "cap":
        return _cap_multiplier(grid, loc.scale, loc.j)
    r = _modulation(grid, loc.kind)
    if loc.scale >= 2 and loc.scale / 2 >= float(np.max(np.abs(r))):
        raise ValueError(
            f"modulation localizer L={loc.scale} exceeds grid resolution "
            f"|sigma| <= {float(np.max(np.abs(r))):.3g}")
    return psi_term(loc.scale, r)


def project(field: Field, loc: Localizer) -> Field:
    fhat = field.to_fourier()
    mult = multiplier(field.grid, loc)
    return Field(field.grid, fhat.values * mult, FOURIER)


def _lp_over_l(norms: np.ndarray, levels, b: float, p: float) -> float:
    scaled = np.array([lvl**b * v for lvl, v in zip(levels, norms)])
    if math.isinf(p):
        return float(np.max(scaled))
    return float(np.sum(scaled**p) ** (1.0 / p))


def bourgain_norm(field: Field, s: float, b: float, p: float = 2.0,
                  kind: str = "S", max_n: int | None = None,
                  max_l: int | None = None) -> float:
    """Dyadically decomposed space-time norm.

    Returns (sum_N N^{2s} (sum_L L^{pb} |P_N Loc_L u|_2^p)^{2/p})^{1/2}
    with the modulation measured against the characteristic named by kind
    ("S" for tau + |xi|^2, "W+"/"W-" for tau +- |xi|) and the obvious sup
    modification at p = inf.  Raises if the requested dyadic ranges leave
    more than a 1e-8 fraction of the mass uncovered.
    """
    if p < 1:
        raise ValueError("p must be >= 1 (or inf)")
    grid = field.grid
    fhat = field.to_fourier().values
    total = float(np.sqrt(np.sum(np.abs(fhat) ** 2)))
    if total == 0.0:
        return 0.0
    r_freq = grid.xi_norm()
    r_mod = _modulation(grid, kind)
    if max_n is None:
        max_n = next_dyadic(grid.xi_max())
    if max_l is None:
        max_l = next_dyadic(float(np.max(np.abs(r_mod))))
    n_levels = dyadic_levels(max_n)
    l_levels = dyadic_levels(max_l)

    covered = bump(r_freq / max_n) * bump(r_mod / max_l)
    miss = float(np.sqrt(np.sum((1.0 - covered) ** 2 * np.abs(fhat) ** 2)))
    if miss > 1e-8 * total:
        raise ValueError(
            f"dyadic ranges N<={max_n}, L<={max_l} leave a mass fraction "
            f"{miss / total:.3g} unresolved")

    acc = 0.0
    for n in n_levels:
        pn = psi_term(n, r_freq) * fhat
        if not np.any(pn):
            continue
        lnorms = []
        for lvl in l_levels:
            block = psi_term(lvl, r_mod) * pn
            lnorms.append(float(np.sqrt(np.sum(np.abs(block) ** 2))))
        inner = _lp_over_l(np.array(lnorms), l_levels, b, p)
        acc += n ** (2.0 * s) * inner**2
    return float(np.sqrt(acc))


def sobolev_norm(values: np.ndarray, s: float, lam: float = 1.0) -> float:
    """Spatial H^s norm over the periodic box; single modes give <xi>^s."""
    v = np.asarray(values, dtype=np.complex128)
    axes = tuple(range(v.ndim - 3, v.ndim))
    count = np.prod([v.shape[a] for a in axes])
    vhat = np.fft.fftn(v, axes=axes) / count
    xi2 = 0.0
    for k, a in enumerate(axes):
        n = v.shape[a]
        xi = np.fft.fftfreq(n, d=1.0 / n) / lam
        shape = [1] * v.ndim
        shape[a] = n
        xi2 = xi2 + xi.reshape(shape) ** 2
    weight = (1.0 + xi2) ** s
    return float(np.sqrt(np.sum(weight * np.abs(vhat) ** 2)))


def z_norm(times: np.ndarray, u_vals: np.ndarray, n_vals: np.ndarray,
           dtn_vals: np.ndarray, k: float, ell: float,
           lam: float = 1.0) -> float:
    """sup over samples of (|u|_{H^k}^2 + |n|_{H^ell}^2
    + |dt n|_{H^{ell-1}}^2)^{1/2} for a sampled trajectory."""
    times = np.asarray(times, dtype=float)
    if not (len(times) == len(u_vals) == len(n_vals) == len(dtn_vals)):
        raise ValueError("trajectory arrays disagree on the sample count")
    best = 0.0
    for u, n, dtn in zip(u_vals, n_vals, dtn_vals):
        val = (sobolev_norm(u, k, lam) ** 2
               + sobolev_norm(n, ell, lam) ** 2
               + sobolev_norm(dtn, ell - 1.0, lam) ** 2)
        best = max(best, val)
    return float(np.sqrt(best))


def time_gain_check(field: Field, t_width: float, b: float,
                    s: float = 0.0) -> float:
    """Ratio |eta_T u|_{X^{s,b,1}} / (T^{1/2-b} |u|_{X^{s,1/2,1}}).

    The cutoff eta_T is the shipped bump rescaled to live inside [0, T] on
    the physical time axis; b must satisfy 0 <= b < 1/2.
    """
    if not 0.0 <= b < 0.5:
        raise ValueError("time gain needs 0 <= b < 1/2")
    grid = field.grid
    period = 2 * np.pi / grid.tau_step
    if not 0.0 < t_width <= period:
        raise ValueError(
            f"cutoff width must lie in (0, {period:.3g}] for this grid")
    t = grid.times()
    eta = bump(4.0 * (t - t_width / 2.0) / t_width)
    phys = field.to_physical()
    cut = Field(grid, phys.values * eta.reshape(1, 1, 1, -1))
    num = bourgain_norm(cut, s, b, p=1.0)
    den = bourgain_norm(field, s, 0.5, p=1.0)
    if den == 0.0:
        raise ValueError("time gain is undefined for a vanishing field")
    return num / (t_width ** (0.5 - b) * den)
