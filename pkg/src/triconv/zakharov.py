"""Pseudospectral desk-scale solver for the 3D Schroedinger-wave system

    i du/dt + Lap u = n u
    d2n/dt2 - Lap n = Lap |u|^2

on a periodic box, evolved in the half-wave variables n_pm = n +- i
<grad>^{-1} dn/dt.  After the reduction the wave part reads

    i dn_pm/dt -+ <grad> n_pm = +- (Lap / <grad>) |u|^2

up to a harmless low-order term that the reduction absorbs; the solver
evolves exactly this reduced system with exact linear propagators, so
modulation structure is respected by construction.  Everything here is a
periodic desk-scale analog of the continuum problem, used purely as a
diagnostic for the iteration and continuity claims.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decomp import bump, sobolev_norm, z_norm
from .trilinear import check_region, region_mask

_REAL_TOL = 1e-12


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic spatial box of side 2 pi lam with power-of-two nodes."""

    nodes: tuple[int, int, int]
    lam: float = 1.0

    def __post_init__(self):
        for n in self.nodes:
            if n < 2 or n & (n - 1):
                raise ValueError("node counts must be powers of two")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    def xi_grids(self):
        axes = [np.fft.fftfreq(n, d=1.0 / n) / self.lam
                for n in self.nodes]
        return np.meshgrid(*axes, indexing="ij")

    def xi_norm2(self) -> np.ndarray:
        gx, gy, gz = self.xi_grids()
        return gx**2 + gy**2 + gz**2

    def bracket(self) -> np.ndarray:
        """Symbol of <grad>, bounded below by one."""
        return np.sqrt(1.0 + self.xi_norm2())

    def x_axes(self):
        return [np.arange(n) * (2.0 * math.pi * self.lam / n)
                for n in self.nodes]


def _require_real(name: str, vals: np.ndarray) -> np.ndarray:
    vals = np.asarray(vals)
    if np.iscomplexobj(vals):
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.max(np.abs(vals.imag)) > _REAL_TOL * scale:
            raise ValueError(f"{name} must be real (Hermitian symmetry "
                             "violated beyond 1e-12)")
        vals = vals.real
    return np.ascontiguousarray(vals, dtype=np.float64)


@dataclass(frozen=True)
class ZakharovState:
    """One time slice (u, n, dn/dt) on a shared spatial grid."""

    grid: SpatialGrid
    u: np.ndarray
    n: np.ndarray
    nt: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.complex128)
        if u.shape != self.grid.nodes:
            raise ValueError("u shape does not match the grid")
        n = _require_real("n", self.n)
        nt = _require_real("nt", self.nt)
        if n.shape != self.grid.nodes or nt.shape != self.grid.nodes:
            raise ValueError("n / nt shape does not match the grid")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "nt", nt)


@dataclass(frozen=True)
class SobolevPair:
    """Regularity indices (s, sigma) for the data space
    H^s x H^sigma x H^{sigma-1}."""

    s: float
    sigma: float

    @property
    def admissible(self) -> bool:
        return region_mask(self.s, self.sigma)

    def require(self) -> None:
        check_region(self.s, self.sigma)


def state_norm(state: ZakharovState, pair: SobolevPair) -> float:
    lam = state.grid.lam
    return float(math.sqrt(
        sobolev_norm(state.u, pair.s, lam) ** 2
        + sobolev_norm(state.n, pair.sigma, lam) ** 2
        + sobolev_norm(state.nt, pair.sigma - 1.0, lam) ** 2))


def random_state(grid: SpatialGrid, seed: int = 0, amp_u: float = 1e-2,
                 amp_n: float = 1e-2, cutoff: float | None = None
                 ) -> ZakharovState:
    """Band-limited random data; the low-pass keeps first products
    resolved on the grid."""
    rng = np.random.Generator(np.random.Philox(seed))
    if cutoff is None:
        cutoff = min(grid.nodes) / 8.0
    envelope = bump(np.sqrt(grid.xi_norm2()) / cutoff)

    def smooth(vals):
        return np.fft.ifftn(np.fft.fftn(vals) * envelope)

    u = smooth(rng.standard_normal(grid.nodes)
               + 1j * rng.standard_normal(grid.nodes))
    n = smooth(rng.standard_normal(grid.nodes)).real
    nt = smooth(rng.standard_normal(grid.nodes)).real

    def unit(vals):
        scale = float(np.sqrt(np.mean(np.abs(vals) ** 2)))
        return vals / scale if scale > 0 else vals

    return ZakharovState(grid, amp_u * unit(u), amp_n * unit(n),
                         amp_n * unit(nt))


# -- half-wave reduction ---------------------------------------------------

def wave_reduce(state: ZakharovState) -> tuple[np.ndarray, np.ndarray]:
    """n_pm = n +- i <grad>^{-1} nt, physical-space complex fields."""
    w = state.grid.bracket()
    n_hat = np.fft.fftn(state.n)
    nt_hat = np.fft.fftn(state.nt)
    plus = np.fft.ifftn(n_hat + 1j * nt_hat / w)
    minus = np.fft.ifftn(n_hat - 1j * nt_hat / w)
    return plus, minus


def wave_unreduce(grid: SpatialGrid, plus: np.ndarray,
                  minus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert the half-wave map back to (n, nt)."""
    w = grid.bracket()
    p_hat = np.fft.fftn(plus)
    m_hat = np.fft.fftn(minus)
    n = np.fft.ifftn(0.5 * (p_hat + m_hat))
    nt = np.fft.ifftn(w * (p_hat - m_hat) / 2j)
    return n.real, nt.real


# -- exponential integrator -------------------------------------------------

class IntegratorFailure(RuntimeError):
    """Blow-up guard; carries the last finite state."""

    def __init__(self, message: str, state: ZakharovState):
        super().__init__(message)
        self.state = state


def _phi1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    out = (np.exp(safe) - 1.0) / safe
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, out)


def _phi2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    out = (np.exp(safe) - 1.0 - safe) / safe**2
    return np.where(small, 0.5 + z / 6.0 + z * z / 24.0, out)


@dataclass(frozen=True)
class _Symbols:
    lam_u: np.ndarray   # -i |xi|^2
    lam_p: np.ndarray   # -i <xi>
    lam_m: np.ndarray   # +i <xi>
    gain: np.ndarray    # Lap / <grad> = -|xi|^2 / <xi>


def _symbols(grid: SpatialGrid) -> _Symbols:
    q = grid.xi_norm2()
    w = np.sqrt(1.0 + q)
    return _Symbols(-1j * q, -1j * w, 1j * w, -q / w)


def _sources(sym: _Symbols, u: np.ndarray, n: np.ndarray):
    """Fourier-side nonlinear sources for (u, n+, n-)."""
    gu = -1j * np.fft.fftn(n * u)
    f = np.fft.fftn(np.abs(u) ** 2)
    gp = 1j * sym.gain * f
    return gu, gp, -gp


def duhamel_step(state: ZakharovState, dt: float, *, nonlinear: bool = True,
                 order: int = 1) -> ZakharovState:
    """One exponential-integrator step of the reduced system.

    order 1 is the exponential Euler update; order 2 adds the standard
    predictor-corrector difference term.  Linear parts are exact per
    mode either way.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    grid = state.grid
    sym = _symbols(grid)
    plus, minus = wave_reduce(state)
    uh = np.fft.fftn(state.u)
    ph = np.fft.fftn(plus)
    mh = np.fft.fftn(minus)

    eu, ep, em = (np.exp(sym.lam_u * dt), np.exp(sym.lam_p * dt),
                  np.exp(sym.lam_m * dt))
    if not nonlinear:
        uh, ph, mh = eu * uh, ep * ph, em * mh
    else:
        # let blow-up surface as inf/nan and trip the guard below
        with np.errstate(over="ignore", invalid="ignore"):
            gu, gp, gm = _sources(sym, state.u, state.n)
            f1u, f1p, f1m = (_phi1(sym.lam_u * dt), _phi1(sym.lam_p * dt),
                             _phi1(sym.lam_m * dt))
            uh1 = eu * uh + dt * f1u * gu
            ph1 = ep * ph + dt * f1p * gp
            mh1 = em * mh + dt * f1m * gm
            if order == 2:
                u_star = np.fft.ifftn(uh1)
                n_star = np.fft.ifftn(0.5 * (ph1 + mh1)).real
                hu, hp, hm = _sources(sym, u_star, n_star)
                uh1 += dt * _phi2(sym.lam_u * dt) * (hu - gu)
                ph1 += dt * _phi2(sym.lam_p * dt) * (hp - gp)
                mh1 += dt * _phi2(sym.lam_m * dt) * (hm - gm)
            uh, ph, mh = uh1, ph1, mh1

    u = np.fft.ifftn(uh)
    n, nt = wave_unreduce(grid, np.fft.ifftn(ph), np.fft.ifftn(mh))
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(n))
            and np.all(np.isfinite(nt))):
        raise IntegratorFailure(
            f"integrator produced non-finite values at t = {state.t}",
            state)
    return ZakharovState(grid, u, n, nt, state.t + dt)


@dataclass(frozen=True)
class Trajectory:
    grid: SpatialGrid
    times: np.ndarray
    u: np.ndarray    # (T, nx, ny, nz) complex
    n: np.ndarray    # (T, ...) real
    nt: np.ndarray


def evolve(state: ZakharovState, T: float, dt: float, *,
           nonlinear: bool = True, order: int = 1,
           stride: int = 1) -> Trajectory:
    """March to time T recording every stride-th slice (plus both ends)."""
    if T <= 0:
        raise ValueError("T must be positive")
    steps = int(round(T / dt))
    if steps < 1:
        raise ValueError("horizon shorter than one step")
    times = [state.t]
    us, ns, nts = [state.u], [state.n], [state.nt]
    cur = state
    for k in range(steps):
        cur = duhamel_step(cur, dt, nonlinear=nonlinear, order=order)
        if (k + 1) % stride == 0 or k == steps - 1:
            times.append(cur.t)
            us.append(cur.u)
            ns.append(cur.n)
            nts.append(cur.nt)
    return Trajectory(state.grid, np.asarray(times), np.stack(us),
                      np.stack(ns), np.stack(nts))


# -- diagnostics -------------------------------------------------------------

def mass_drift(traj: Trajectory) -> float:
    """Relative L2 drift of u over the recorded horizon."""
    norms = np.sqrt(np.mean(np.abs(traj.u) ** 2, axis=(1, 2, 3)))
    if norms[0] == 0:
        raise ValueError("initial u vanishes; drift undefined")
    return float(np.max(np.abs(norms - norms[0])) / norms[0])


def linear_isometry_error(state: ZakharovState, T: float,
                          dt: float) -> float:
    """Max relative change of any |u-hat(xi)| under the linear flow."""
    traj = evolve(state, T, dt, nonlinear=False)
    a0 = np.abs(np.fft.fftn(traj.u[0]))
    aT = np.abs(np.fft.fftn(traj.u[-1]))
    scale = max(float(np.max(a0)), 1e-300)
    return float(np.max(np.abs(aT - a0)) / scale)


def gauge_invariance(state: ZakharovState, T: float, dt: float,
                     theta: float = 0.7, order: int = 1) -> dict:
    """Constant-phase gauge: e^{i theta} u must leave n and |u| alone."""
    base = evolve(state, T, dt, order=order)
    rot = ZakharovState(state.grid, np.exp(1j * theta) * state.u,
                        state.n, state.nt, state.t)
    other = evolve(rot, T, dt, order=order)
    n_dev = float(np.max(np.abs(base.n - other.n)))
    u_dev = float(np.max(np.abs(np.abs(base.u) - np.abs(other.u))))
    return {"n_deviation": n_dev, "absu_deviation": u_dev}


# -- Picard iteration --------------------------------------------------------

@dataclass(frozen=True)
class PicardResult:
    times: np.ndarray
    distances: tuple[float, ...]      # d_k between consecutive iterates
    factors: tuple[float, ...]        # d_{k+1} / d_k
    diverged: bool
    traj: Trajectory                  # the last iterate


def _linear_flow(grid: SpatialGrid, state: ZakharovState,
                 times: np.ndarray):
    """Free evolution of the data at every node, Fourier side."""
    sym = _symbols(grid)
    plus, minus = wave_reduce(state)
    u0, p0, m0 = (np.fft.fftn(state.u), np.fft.fftn(plus),
                  np.fft.fftn(minus))
    u = np.stack([np.exp(sym.lam_u * t) * u0 for t in times])
    p = np.stack([np.exp(sym.lam_p * t) * p0 for t in times])
    m = np.stack([np.exp(sym.lam_m * t) * m0 for t in times])
    return u, p, m


def _duhamel_integrals(sym: _Symbols, sources, dt: float):
    """Trapezoid-in-time Duhamel integrals on uniform nodes.

    I(t_j) = int_0^{t_j} e^{lam (t_j - s)} g(s) ds accumulated by the
    exact recursion I_j = P I_{j-1} + (dt/2)(P g_{j-1} + g_j).
    """
    g, lam = sources
    out = np.zeros_like(g)
    prop = np.exp(lam * dt)
    for j in range(1, g.shape[0]):
        out[j] = prop * out[j - 1] + 0.5 * dt * (prop * g[j - 1] + g[j])
    return out


def picard_iterate(state: ZakharovState, pair: SobolevPair, T: float,
                   iterations: int = 6, nodes_per_unit: int = 64
                   ) -> PicardResult:
    """Successive Duhamel iterates and their Z-space distances.

    The k-th iterate solves the linear equations with the (k-1)-th
    iterate's nonlinearity; d_k measures consecutive differences in the
    norm sup_t (H^s x H^sigma x H^{sigma-1}).
    """
    pair.require()
    if T <= 0:
        raise ValueError("T must be positive")
    grid = state.grid
    sym = _symbols(grid)
    m = max(2, int(math.ceil(nodes_per_unit * T)))
    times = np.linspace(0.0, T, m + 1)
    dt = times[1] - times[0]

    lin_u, lin_p, lin_m = _linear_flow(grid, state, times)

    def materialize(uh, ph, mh):
        u = np.stack([np.fft.ifftn(a) for a in uh])
        n = np.stack([np.fft.ifftn(0.5 * (a + b)).real
                      for a, b in zip(ph, mh)])
        nt = np.stack([np.fft.ifftn(grid.bracket() * (a - b) / 2j).real
                       for a, b in zip(ph, mh)])
        return u, n, nt

    cur = materialize(lin_u, lin_p, lin_m)
    distances = []
    grow = 0
    diverged = False
    for _ in range(iterations):
        u_prev, n_prev, _ = cur
        gu = np.stack([-1j * np.fft.fftn(n_prev[j] * u_prev[j])
                       for j in range(m + 1)])
        f = np.stack([np.fft.fftn(np.abs(u_prev[j]) ** 2)
                      for j in range(m + 1)])
        gp = 1j * sym.gain * f
        uh = lin_u + _duhamel_integrals(sym, (gu, sym.lam_u), dt)
        ph = lin_p + _duhamel_integrals(sym, (gp, sym.lam_p), dt)
        mh = lin_m + _duhamel_integrals(sym, (-gp, sym.lam_m), dt)
        nxt = materialize(uh, ph, mh)
        d = z_norm(times, nxt[0] - cur[0], nxt[1] - cur[1],
                   nxt[2] - cur[2], pair.s, pair.sigma, grid.lam)
        if distances and d > distances[-1]:
            grow += 1
            if grow >= 3:
                diverged = True
        else:
            grow = 0
        distances.append(float(d))
        cur = nxt
    factors = tuple(distances[k + 1] / distances[k]
                    if distances[k] > 0 else 0.0
                    for k in range(len(distances) - 1))
    traj = Trajectory(grid, times, cur[0], cur[1], cur[2])
    return PicardResult(times, tuple(distances), factors, diverged, traj)


def contraction_horizon(state: ZakharovState, pair: SobolevPair,
                        t_start: float = 0.1, doublings: int = 4,
                        iterations: int = 5) -> dict:
    """Double T until the tail contraction factor leaves (0, 1/2]."""
    horizons = [t_start * 2**k for k in range(doublings + 1)]
    records = []
    first_fail = None
    for T in horizons:
        res = picard_iterate(state, pair, T, iterations=iterations)
        tail = max(res.factors[1:]) if len(res.factors) > 1 else math.inf
        ok = (not res.diverged) and tail <= 0.5
        records.append({"T": T, "tail_factor": tail, "contracts": ok})
        if first_fail is None and not ok:
            first_fail = T
    return {"records": records, "first_failure": first_fail}


# -- Lipschitz continuity -----------------------------------------------------

@dataclass(frozen=True)
class LipschitzResult:
    delta: float
    ratio: float | None
    exact_equal: bool


def _perturbed(state: ZakharovState, delta: float,
               seed: int) -> ZakharovState:
    bump_state = random_state(state.grid, seed=seed, amp_u=1.0, amp_n=1.0)
    return ZakharovState(state.grid, state.u + delta * bump_state.u,
                         state.n + delta * bump_state.n,
                         state.nt + delta * bump_state.nt, state.t)


def lipschitz_probe(state: ZakharovState, pair: SobolevPair, delta: float,
                    T: float, seed: int = 0,
                    iterations: int = 6) -> LipschitzResult:
    """Solution-map difference quotient in the Z norm at data distance
    delta; delta = 0 short-circuits to the exact-equality flag."""
    pair.require()
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return LipschitzResult(0.0, None, True)
    other = _perturbed(state, delta, seed)
    res_a = picard_iterate(state, pair, T, iterations=iterations)
    res_b = picard_iterate(other, pair, T, iterations=iterations)
    for tag, res in (("base", res_a), ("perturbed", res_b)):
        tail = max(res.factors[1:]) if len(res.factors) > 1 else math.inf
        if res.diverged or tail > 1.0:
            raise RuntimeError(
                f"contraction failed on the {tag} run "
                f"(diverged={res.diverged}, tail factor {tail:.3g}); "
                "probe aborted")
    num = z_norm(res_a.times, res_a.traj.u - res_b.traj.u,
                 res_a.traj.n - res_b.traj.n,
                 res_a.traj.nt - res_b.traj.nt, pair.s, pair.sigma,
                 state.grid.lam)
    diff = ZakharovState(state.grid, state.u - other.u, state.n - other.n,
                         state.nt - other.nt)
    den = state_norm(diff, pair)
    return LipschitzResult(delta, float(num / den), False)


def lipschitz_sweep(state: ZakharovState, pair: SobolevPair, deltas,
                    T: float, seed: int = 0,
                    iterations: int = 6) -> list[LipschitzResult]:
    """Independent probe runs; parallel workers honour TRICONV_WORKERS."""
    workers = int(os.environ.get("TRICONV_WORKERS", "0")) or None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(lipschitz_probe, state, pair, d, T,
                            seed=seed, iterations=iterations)
                for d in deltas]
        return [f.result() for f in futs]
