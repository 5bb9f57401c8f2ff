"""Graph patches of submanifolds and their transversality geometry.

A patch is the rotated graph of a map phi: U subset R^d -> R^m,

    Sigma = { G (x, phi(x)) : x in U },   d + m = n,

sampled on a rectangular lattice over U.  The normal space at a node is
spanned by the columns of G (-Dphi^T; I_m); Gram-Schmidt turns these into an
orthonormal frame.  Three patches whose codimensions add up to n are
*transversal* when the determinant of the three concatenated frames is
bounded away from zero; `theta_min` measures that bound on the lattice.

The module also provides the linear-image machinery: mapping a triple
through an invertible T, re-graphing each patch by a least-squares
polynomial fit, recomputing normals via the inverse transpose, and checking
the determinant identity that relates measure distortion to the two
transversality determinants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kern, formulas

_ORTH_TOL = 1e-12
_FRAME_TOL = 1e-10
_DEGENERATE_DET = 1e-10


# --------------------------------------------------------------------------
# lattice and patch containers

@dataclass(frozen=True)
class Lattice:
    """Rectangular node lattice over a box in R^d, uniform spacing per axis."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) != len(self.nodes):
            raise ValueError("lo, hi, nodes must have equal length")
        if any(n < 2 for n in self.nodes):
            raise ValueError("need at least 2 nodes per axis")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("hi must exceed lo on every axis")

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) \
            / (np.asarray(self.nodes) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(l, h, n)
                for l, h, n in zip(self.lo, self.hi, self.nodes)]

    def grid(self) -> np.ndarray:
        """All nodes, flattened in C order, shape (P, d)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    def boundary_factors(self) -> np.ndarray:
        """Trapezoid quadrature factors (1/2 on boundary nodes), flat (P,)."""
        fac = np.ones(self.nodes)
        for a, n in enumerate(self.nodes):
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            shape = [1] * self.dim
            shape[a] = n
            fac = fac * w.reshape(shape)
        return fac.ravel()


def _fd_jacobian(phi_grid: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    """Finite-difference Dphi: central inside, one-sided at the boundary."""
    d = phi_grid.ndim - 1
    order = 2 if all(s >= 3 for s in phi_grid.shape[:-1]) else 1
    grads = np.gradient(phi_grid, *spacing, axis=tuple(range(d)),
                        edge_order=order)
    if d == 1:
        grads = [grads]
    return np.stack(grads, axis=-1)  # (*nodes, m, d)


def gram_schmidt(cols: np.ndarray) -> np.ndarray:
    """Orthonormalize the trailing column set of (..., n, m) arrays."""
    cols = np.asarray(cols, dtype=float)
    out = np.zeros_like(cols)
    for k in range(cols.shape[-1]):
        v = cols[..., k].copy()
        for j in range(k):
            proj = np.sum(out[..., j] * cols[..., k], axis=-1, keepdims=True)
            v = v - proj * out[..., j]
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(norm < 1e-14):
            raise ValueError("rank-deficient normal column set")
        out[..., k] = v / norm
    return out


class GraphPatch:
    """A lattice-sampled rotated graph with regularity data (beta, b, R).

    Treat instances as immutable; derived arrays are cached on first use.
    """

    def __init__(self, lattice: Lattice, phi_values: np.ndarray,
                 G: np.ndarray, beta: float, b_hoelder: float | None,
                 R: float | None, dphi_values: np.ndarray | None = None,
                 valid: np.ndarray | None = None,
                 analytic: bool = False,
                 offset: np.ndarray | None = None):
        self.lattice = lattice
        d = lattice.dim
        phi_values = np.asarray(phi_values, dtype=float)
        if phi_values.shape[:d] != lattice.nodes:
            raise ValueError("phi_values do not match the lattice")
        if phi_values.ndim != d + 1:
            raise ValueError("phi_values must have a trailing component axis")
        self.m = phi_values.shape[-1]
        self.n = d + self.m
        self.G = np.asarray(G, dtype=float)
        if self.G.shape != (self.n, self.n):
            raise ValueError("G must be n x n")
        if np.max(np.abs(self.G.T @ self.G - np.eye(self.n))) > _ORTH_TOL:
            raise ValueError("G is not orthogonal to 1e-12")
        if not 0.0 < beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        self.beta = float(beta)
        self._phi_grid = phi_values
        if dphi_values is None:
            dphi_values = _fd_jacobian(phi_values, lattice.spacing)
            analytic = False
        else:
            dphi_values = np.asarray(dphi_values, dtype=float)
            if dphi_values.shape != lattice.nodes + (self.m, d):
                raise ValueError("dphi_values shape mismatch")
        self._dphi_grid = dphi_values
        self.analytic_jacobian = bool(analytic)
        if valid is None:
            valid = np.ones(lattice.size, dtype=bool)
        self.valid = np.asarray(valid, dtype=bool).ravel()
        if self.valid.shape != (lattice.size,):
            raise ValueError("valid mask shape mismatch")
        if not self.valid.any():
            raise ValueError("patch has no valid nodes")
        if offset is None:
            offset = np.zeros(self.n)
        self.offset = np.asarray(offset, dtype=float).reshape(self.n)
        self._cache: dict[str, np.ndarray | float] = {}
        # R is a containing-ball radius, so the diameter may reach 2R
        diam = self.diameter()
        self.R = float(R) if R is not None else diam / 2 if diam > 0 else 1.0
        if self.R <= 0:
            raise ValueError("R must be positive")
        if diam > 2 * self.R * (1 + 1e-9):
            raise ValueError(
                f"patch diameter {diam:.6g} exceeds 2R={2 * self.R:.6g}")
        if b_hoelder is None:
            self.b_hoelder = math.inf
            rep = check_regularity(self)
            b_hoelder = rep.lhs * (1 + 1e-9) if rep.lhs > 0 else 1e-12
        self.b_hoelder = float(b_hoelder)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_callable(cls, lattice: Lattice, phi_fn: Callable,
                      dphi_fn: Callable | None, G: np.ndarray, beta: float,
                      b_hoelder: float | None, R: float | None,
                      valid: np.ndarray | None = None) -> "GraphPatch":
        x = lattice.grid().reshape(lattice.nodes + (lattice.dim,))
        phi = np.asarray(phi_fn(x), dtype=float)
        dphi = None if dphi_fn is None else np.asarray(dphi_fn(x), dtype=float)
        return cls(lattice, phi, G, beta, b_hoelder, R, dphi_values=dphi,
                   valid=valid, analytic=dphi_fn is not None)

    @classmethod
    def from_formula(cls, lattice: Lattice, formula: str, params: dict | None,
                     G: np.ndarray, beta: float, b_hoelder: float | None,
                     R: float | None) -> "GraphPatch":
        phi_fn, dphi_fn = formulas.make(formula, params)
        return cls.from_callable(lattice, phi_fn, dphi_fn, G, beta,
                                 b_hoelder, R)

    # -- derived geometry (cached) ------------------------------------------

    def _get(self, key: str, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def domain_points(self) -> np.ndarray:
        return self._get("X", lambda: self.lattice.grid())

    def phi(self) -> np.ndarray:
        return self._phi_grid.reshape(-1, self.m)

    def dphi(self) -> np.ndarray:
        return self._dphi_grid.reshape(-1, self.m, self.dim)

    def points(self) -> np.ndarray:
        def build():
            graph = np.concatenate([self.domain_points(), self.phi()], axis=1)
            return graph @ self.G.T + self.offset
        return self._get("points", build)

    def param_jacobians(self) -> np.ndarray:
        def build():
            p, d, m, n = self.lattice.size, self.dim, self.m, self.n
            j0 = np.zeros((p, n, d))
            j0[:, :d, :] = np.eye(d)
            j0[:, d:, :] = self.dphi()
            return np.einsum("ab,pbd->pad", self.G, j0)
        return self._get("jac", build)

    def raw_normals(self) -> np.ndarray:
        def build():
            p, d, m, n = self.lattice.size, self.dim, self.m, self.n
            r0 = np.zeros((p, n, m))
            r0[:, :d, :] = -np.transpose(self.dphi(), (0, 2, 1))
            r0[:, d:, :] = np.eye(m)
            return np.einsum("ab,pbk->pak", self.G, r0)
        return self._get("rawn", build)

    def frames(self) -> np.ndarray:
        return self._get("frames", lambda: gram_schmidt(self.raw_normals()))

    def gram_dets(self) -> np.ndarray:
        """det(Dpsi^T Dpsi) = det(I + Dphi^T Dphi) per node."""
        def build():
            dp = self.dphi()
            a = np.eye(self.dim) + np.einsum("pmd,pme->pde", dp, dp)
            return np.linalg.det(a)
        return self._get("gram", build)

    def weights(self) -> np.ndarray:
        """Quadrature weights sqrt(det(I+Dphi^T Dphi)) * prod(h), trapezoid
        corrected at the boundary and zeroed at invalid nodes."""
        def build():
            w = np.sqrt(self.gram_dets()) * float(np.prod(self.lattice.spacing))
            w = w * self.lattice.boundary_factors()
            return np.where(self.valid, w, 0.0)
        return self._get("weights", build)

    def diameter(self) -> float:
        return self._get("diam",
                         lambda: _cloud_diam(self.points()[self.valid]))

    def strided_sample(self, cap: int = 400) -> np.ndarray:
        """Flat indices of a deterministic strided subsample of valid nodes."""
        s = 1
        while True:
            counts = [max(1, math.ceil(n / s)) for n in self.lattice.nodes]
            if np.prod(counts) <= cap or s > max(self.lattice.nodes):
                break
            s += 1
        axes = [np.arange(0, n, s) for n in self.lattice.nodes]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.ravel_multi_index([m.ravel() for m in mesh],
                                    self.lattice.nodes)
        return flat[self.valid[flat]]


# --------------------------------------------------------------------------
# regularity and frames

@dataclass(frozen=True)
class RegularityReport:
    sup_term: float
    hoelder_seminorm: float
    lhs: float
    bound: float
    passed: bool
    pairs_used: int


def check_regularity(patch: GraphPatch, pair_cap: int = 1_000_000,
                     seed: int = 0) -> RegularityReport:
    """Evaluate R^-beta * sup|Dphi| + [Dphi]_beta against b_hoelder.

    Matrix size is Frobenius; the Hoelder seminorm is taken over lattice
    node pairs, exhaustively up to `pair_cap` pairs and on a seeded random
    subsample beyond that.
    """
    idx = np.nonzero(patch.valid)[0]
    x = patch.domain_points()[idx]
    dp = patch.dphi()[idx]
    sup = float(np.max(np.sqrt(np.sum(dp**2, axis=(1, 2)))))
    p = len(idx)
    total = p * (p - 1) // 2
    if total <= pair_cap:
        ii, jj = np.triu_indices(p, k=1)
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, p, size=pair_cap)
        jj = rng.integers(0, p, size=pair_cap)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
    semi = 0.0
    if len(ii):
        semi = float(_kern.hoelder_max(
            np.ascontiguousarray(x), np.ascontiguousarray(dp.reshape(p, -1)),
            ii.astype(np.int64), jj.astype(np.int64), patch.beta))
    lhs = patch.R ** (-patch.beta) * sup + semi
    return RegularityReport(sup, semi, lhs, patch.b_hoelder,
                            lhs <= patch.b_hoelder * (1 + 1e-12),
                            int(len(ii)))


@dataclass(frozen=True)
class NormalFrame:
    point: np.ndarray
    vectors: np.ndarray  # (n, m), orthonormal columns

    def __post_init__(self):
        v = self.vectors
        if np.max(np.abs(v.T @ v - np.eye(v.shape[1]))) > _FRAME_TOL:
            raise ValueError("frame columns are not orthonormal to 1e-10")


def normal_frame(patch: GraphPatch, node) -> NormalFrame:
    """Orthonormal normal frame at a lattice node (flat index or tuple)."""
    if isinstance(node, tuple):
        node = int(np.ravel_multi_index(node, patch.lattice.nodes))
    return NormalFrame(patch.points()[node], patch.frames()[node])


def transversality_det(f1: NormalFrame, f2: NormalFrame,
                       f3: NormalFrame) -> float:
    """det of the concatenated orthonormal frames; |.| is basis-invariant."""
    mat = np.concatenate([f1.vectors, f2.vectors, f3.vectors], axis=1)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError("codimensions do not add up to the ambient dim")
    return float(np.linalg.det(mat))


def _det_grid(frames: Sequence[np.ndarray]) -> float:
    """min |det| over the product of three frame arrays (Pi, n, mi)."""
    f1, f2, f3 = frames
    n = f1.shape[1]
    p2, p3 = len(f2), len(f3)
    rest = np.empty((p2 * p3, n, f2.shape[2] + f3.shape[2]))
    rest[:, :, :f2.shape[2]] = np.repeat(f2, p3, axis=0)
    rest[:, :, f2.shape[2]:] = np.tile(f3, (p2, 1, 1))
    best = np.inf
    block = np.empty((p2 * p3, n, n))
    block[:, :, f1.shape[2]:] = rest
    for i in range(len(f1)):
        block[:, :, :f1.shape[2]] = f1[i]
        dets = np.abs(np.linalg.det(block))
        best = min(best, float(dets.min()))
    return best


def theta_min(patches: Sequence[GraphPatch], sample_cap: int = 64,
              slack: float = 0.0) -> float:
    """Lattice infimum of |d| over sampled node triples, minus a declared
    Lipschitz slack.  Values below the degeneracy threshold collapse to 0."""
    if sum(p.m for p in patches) != patches[0].n:
        raise ValueError("codimensions do not add up to the ambient dim")
    frames = [p.frames()[p.strided_sample(sample_cap)] for p in patches]
    val = _det_grid(frames) - slack
    if val < _DEGENERATE_DET:
        return 0.0
    return val


@dataclass(frozen=True)
class TransversalTriple:
    patches: tuple[GraphPatch, GraphPatch, GraphPatch]
    theta: float
    sample_cap: int = 64
    slack: float = 0.0

    @classmethod
    def build(cls, patches, sample_cap: int = 64,
              slack: float = 0.0) -> "TransversalTriple":
        patches = tuple(patches)
        if len(patches) != 3:
            raise ValueError("need exactly three patches")
        n = patches[0].n
        if any(p.n != n for p in patches):
            raise ValueError("patches live in different ambient dimensions")
        th = theta_min(patches, sample_cap, slack)
        if th <= 0.0:
            raise ValueError("triple is degenerate: theta collapsed to 0")
        return cls(patches, th, sample_cap, slack)

    @property
    def n(self) -> int:
        return self.patches[0].n


# --------------------------------------------------------------------------
# linear images

class _Poly:
    """Multivariate polynomial fit z = c . monomials(y), with gradient."""

    def __init__(self, powers: np.ndarray, coeffs: np.ndarray):
        self.powers = powers          # (K, d) exponent rows
        self.coeffs = coeffs          # (K, m)

    @classmethod
    def fit(cls, y: np.ndarray, z: np.ndarray, degree: int,
            min_degree: int = 0) -> "_Poly":
        d = y.shape[1]
        powers = np.array([p for p in np.ndindex(*([degree + 1] * d))
                           if min_degree <= sum(p) <= degree], dtype=int)
        a = np.prod(y[:, None, :] ** powers[None, :, :], axis=2)
        coeffs, *_ = np.linalg.lstsq(a, z, rcond=None)
        return cls(powers, coeffs)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        a = np.prod(y[..., None, :] ** self.powers, axis=-1)
        return a @ self.coeffs

    def grad(self, y: np.ndarray) -> np.ndarray:
        """(..., m, d) jacobian of the fitted map."""
        outs = []
        for a in range(self.powers.shape[1]):
            pw = self.powers.copy()
            fac = pw[:, a].astype(float)
            pw[:, a] = np.maximum(pw[:, a] - 1, 0)
            mono = np.prod(y[..., None, :] ** pw, axis=-1) * fac
            outs.append(mono @ self.coeffs)
        return np.stack(outs, axis=-1)


def _regraph(points: np.ndarray, center: np.ndarray, jac_center: np.ndarray,
             nodes: tuple, beta: float, degree: int) -> GraphPatch:
    """Re-graph a point cloud over the tangent plane at `center`.

    Graph coordinates are centered at `center`, the fit keeps monomials of
    total degree >= 2 only, and the lattice box is symmetrized with odd node
    counts, so the middle node sits at the center with Dphi = 0 exactly.
    """
    d = jac_center.shape[1]
    u, _, _ = np.linalg.svd(jac_center, full_matrices=True)
    rel = points - center
    y = rel @ u[:, :d]
    z = rel @ u[:, d:]
    poly = _Poly.fit(y, z, max(degree, 2), min_degree=2)
    half = np.maximum(np.max(np.abs(y), axis=0), 1e-12)
    nodes = tuple(int(k) | 1 for k in nodes)
    lat = Lattice(tuple(-half), tuple(half), nodes)
    ygrid = lat.grid()
    valid = _inside_hull(y, ygrid)
    xg = ygrid.reshape(lat.nodes + (d,))
    return GraphPatch(lat, poly(xg), u, beta, None, None,
                      dphi_values=poly.grad(xg), valid=valid, analytic=True,
                      offset=center)


def _inside_hull(cloud: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """Mask of probe points inside the convex hull of the cloud."""
    d = cloud.shape[1]
    tol = 1e-9 * float(np.max(np.ptp(cloud, axis=0)))
    if d == 1:
        lo, hi = cloud.min(), cloud.max()
        return (probes[:, 0] >= lo - tol) & (probes[:, 0] <= hi + tol)
    from scipy.spatial import Delaunay
    tri = Delaunay(cloud)
    inside = tri.find_simplex(probes) >= 0
    # keep near-boundary lattice nodes that merely fell out by roundoff
    if not inside.all():
        missing = ~inside
        close = np.min(np.linalg.norm(
            probes[missing][:, None, :] - cloud[None, :, :], axis=-1),
            axis=1) <= tol
        inside[np.nonzero(missing)[0][close]] = True
    return inside


def _mapped_theta(triple: TransversalTriple, t_mat: np.ndarray) -> float:
    """theta of the image triple from inverse-transpose mapped normals."""
    t_inv_t = np.linalg.inv(t_mat).T
    frames = []
    for p in triple.patches:
        idx = p.strided_sample(triple.sample_cap)
        mapped = np.einsum("ab,pbk->pak", t_inv_t, p.raw_normals()[idx])
        frames.append(gram_schmidt(mapped))
    val = _det_grid(frames) - triple.slack
    return 0.0 if val < _DEGENERATE_DET else val


def apply_linear(triple: TransversalTriple, t_mat: np.ndarray,
                 fit_degree: int = 2) -> TransversalTriple:
    """Map a triple through invertible T and re-graph each patch.

    The graph structure is re-fit by least squares over the mapped lattice
    (exact for affine and quadratic families); the new theta comes from the
    inverse-transpose mapped normal frames, not from the re-fit.
    """
    t_mat = np.asarray(t_mat, dtype=float)
    det = np.linalg.det(t_mat)
    if abs(det) < 1e-12:
        raise ValueError("T is numerically singular")
    new_patches = []
    for p in triple.patches:
        pts = p.points()[p.valid] @ t_mat.T
        center = int(np.ravel_multi_index(
            tuple(n // 2 for n in p.lattice.nodes), p.lattice.nodes))
        cp = t_mat @ p.points()[center]
        jc = t_mat @ p.param_jacobians()[center]
        new_patches.append(_regraph(pts, cp, jc, p.lattice.nodes, p.beta,
                                    fit_degree))
    th = _mapped_theta(triple, t_mat)
    if th <= 0.0:
        raise ValueError("image triple is degenerate")
    return TransversalTriple(tuple(new_patches), th, triple.sample_cap,
                             triple.slack)


def random_transform(seed: int = 0, cond_cap: float = 10.0,
                     n: int = 3) -> np.ndarray:
    """Random invertible map whose condition number stays below cond_cap."""
    if cond_cap < 1.0:
        raise ValueError("cond_cap must be at least 1")
    rng = np.random.default_rng(seed)
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    half = 0.5 * math.log(cond_cap)
    sv = np.exp(rng.uniform(-half, half, n))
    return q1 @ np.diag(sv) @ q2


@dataclass(frozen=True)
class MnReport:
    max_rel_err: float
    samples: int
    skipped: int


def verify_mn_identity(triple: TransversalTriple, t_mat: np.ndarray,
                       samples: int = 64, seed: int = 0) -> MnReport:
    """Check M(x,y,z)/|det T| = (d/d')^{1/2} at random node triples.

    M is the product of the fourth-root ratios of parametrization Gram
    determinants before and after T; d and d' are the transversality
    determinants of the original and inverse-transpose mapped frames.
    Triples where either determinant is below 1e-10 are skipped.
    """
    t_mat = np.asarray(t_mat, dtype=float)
    det_t = abs(np.linalg.det(t_mat))
    if det_t < 1e-12:
        raise ValueError("T is numerically singular")
    t_inv_t = np.linalg.inv(t_mat).T
    rng = np.random.default_rng(seed)
    idxs = [np.nonzero(p.valid)[0] for p in triple.patches]
    worst, skipped = 0.0, 0
    for _ in range(samples):
        nodes = [int(rng.choice(ix)) for ix in idxs]
        m_val = 1.0
        cols, cols_p = [], []
        for p, node in zip(triple.patches, nodes):
            jac = p.param_jacobians()[node]
            g = np.linalg.det(jac.T @ jac)
            jac_p = t_mat @ jac
            g_p = np.linalg.det(jac_p.T @ jac_p)
            m_val *= (g_p / g) ** 0.25
            cols.append(p.frames()[node])
            cols_p.append(gram_schmidt(t_inv_t @ p.raw_normals()[node]))
        d = np.linalg.det(np.concatenate(cols, axis=1))
        d_p = np.linalg.det(np.concatenate(cols_p, axis=1))
        if abs(d) < _DEGENERATE_DET or abs(d_p) < _DEGENERATE_DET:
            skipped += 1
            continue
        ratio = (m_val / det_t) / math.sqrt(abs(d) / abs(d_p))
        worst = max(worst, abs(ratio - 1.0))
    return MnReport(worst, samples, skipped)


# --------------------------------------------------------------------------
# partitions and foliations

def partition_patch(patch: GraphPatch, delta: float) -> list[GraphPatch]:
    """Split a patch into pieces of diameter <= delta, each re-graphed so
    its differential vanishes at the piece center."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if patch.diameter() <= delta * (1 + 1e-12):
        return [patch]
    d = patch.dim
    counts = np.array([max(1, math.ceil(patch.diameter() / delta))] * d)
    for _ in range(24):
        pieces = _split_blocks(patch, counts, delta)
        if pieces is not None:
            return pieces
        counts = counts + 1
    raise ValueError("could not reach the requested piece diameter")


def _split_blocks(patch: GraphPatch, counts, delta) -> list | None:
    """Blocks share boundary nodes, so the sub-boxes tile the domain and
    trapezoid masses remain additive for flat pieces."""
    d = patch.dim
    edges = [np.linspace(0, n - 1, int(min(c, n - 1)) + 1).astype(int)
             for n, c in zip(patch.lattice.nodes, counts)]
    pts = patch.points()
    pieces = []
    for block in np.ndindex(*[len(e) - 1 for e in edges]):
        ranges = [np.arange(edges[a][block[a]], edges[a][block[a] + 1] + 1)
                  for a in range(d)]
        grid_idx = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index([g.ravel() for g in grid_idx],
                                    patch.lattice.nodes)
        keep = patch.valid[flat]
        if keep.sum() < d + 2:
            continue
        blk_pts = pts[flat[keep]]
        if _cloud_diam(blk_pts) > delta * (1 + 1e-9):
            return None
        center_flat = int(flat[len(flat) // 2])
        jac = patch.param_jacobians()[center_flat]
        nodes = tuple(len(r) for r in ranges)
        piece = _regraph(blk_pts, pts[center_flat], jac, nodes, patch.beta, 2)
        pieces.append(piece)
    return pieces


def _cloud_diam(pts: np.ndarray) -> float:
    best = 0.0
    step = max(1, (1 << 22) // max(len(pts), 1))
    for i0 in range(0, len(pts), step):
        blk = pts[i0:i0 + step]
        d2 = np.sum((blk[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(np.max(d2)))
    return math.sqrt(best)


@dataclass(frozen=True)
class FoliationSlice:
    node_indices: np.ndarray
    weights: np.ndarray        # node quadrature weight / slab width
    c_lo: float
    c_hi: float


@dataclass(frozen=True)
class Foliation:
    slices: list[FoliationSlice]
    direction: np.ndarray
    c_range: tuple[float, float]
    slab_width: float


def foliate(patch: GraphPatch, v: np.ndarray, slab_count: int,
            tangent_tol: float = 1e-6) -> Foliation:
    """Partition the patch nodes into level slabs of c = sigma . v.

    Slice weights are quotient weights w/dc, so the squared L2 norm of any
    density equals the c-integral (Riemann sum) of the slice norms exactly.
    Rejects directions whose tangential projection degenerates anywhere.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    if slab_count < 1:
        raise ValueError("slab_count must be >= 1")
    idx = np.nonzero(patch.valid)[0]
    jac = patch.param_jacobians()[idx]
    q, _ = np.linalg.qr(jac)
    tang = np.linalg.norm(np.einsum("pnd,n->pd", q, v), axis=1)
    if np.min(tang) < tangent_tol:
        raise ValueError("direction is tangent-degenerate on the patch")
    c = patch.points()[idx] @ v
    c_lo, c_hi = float(c.min()), float(c.max())
    width = max((c_hi - c_lo) / slab_count, 1e-300)
    bins = np.clip(((c - c_lo) / width).astype(int), 0, slab_count - 1)
    w = patch.weights()[idx]
    slices = []
    for b in range(slab_count):
        sel = bins == b
        slices.append(FoliationSlice(idx[sel], w[sel] / width,
                                     c_lo + b * width, c_lo + (b + 1) * width))
    return Foliation(slices, v, (c_lo, c_hi), width)


# --------------------------------------------------------------------------
# JSON loading and shipped families

_PATCH_KEYS = {"n", "m", "domain", "phi", "G", "beta", "b_hoelder", "R"}


def load_patch(spec) -> GraphPatch:
    """Build a patch from its JSON description (dict or file path)."""
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    unknown = set(spec) - _PATCH_KEYS
    if unknown:
        raise ValueError(f"unknown patch keys: {sorted(unknown)}")
    missing = {"n", "m", "domain", "phi", "beta"} - set(spec)
    if missing:
        raise ValueError(f"missing patch keys: {sorted(missing)}")
    dom = spec["domain"]
    lat = Lattice(tuple(dom["lo"]), tuple(dom["hi"]), tuple(dom["nodes"]))
    n, m = int(spec["n"]), int(spec["m"])
    if lat.dim + m != n:
        raise ValueError("n, m and the domain dimension are inconsistent")
    g = np.asarray(spec.get("G", np.eye(n)), dtype=float).reshape(n, n)
    beta = float(spec["beta"])
    b = spec.get("b_hoelder")
    r = spec.get("R")
    phi = spec["phi"]
    if isinstance(phi, dict) and "formula" in phi:
        return GraphPatch.from_formula(lat, phi["formula"],
                                       phi.get("params"), g, beta, b, r)
    if isinstance(phi, dict) and "table" in phi:
        vals = np.asarray(phi["table"], dtype=float)
        if vals.shape == lat.nodes:
            vals = vals[..., None]
        return GraphPatch(lat, vals, g, beta, b, r)
    raise ValueError("phi must give a formula or an inline table")


def _axis_rotations(n: int = 3) -> list[np.ndarray]:
    """Orthogonal G whose last column (the graph height) is e1, e2, e3."""
    gs = []
    for k in range(n):
        g = np.zeros((n, n))
        cols = [(k + 1 + j) % n for j in range(n - 1)]
        for j, c in enumerate(cols):
            g[c, j] = 1.0
        g[k, n - 1] = 1.0
        gs.append(g)
    return gs


def coordinate_planes_triple(extent: float = 0.5,
                             nodes: int = 17) -> TransversalTriple:
    """Three mutually orthogonal flat patches in R^3; theta = 1."""
    lat = Lattice((-extent, -extent), (extent, extent), (nodes, nodes))
    patches = [GraphPatch.from_formula(lat, "plane", None, g, 1.0, 0.1, None)
               for g in _axis_rotations()]
    return TransversalTriple.build(patches)


def tilted_planes_triple(theta: float, extent: float = 0.5,
                         nodes: int = 17) -> TransversalTriple:
    """Planes normal to e1, e2 and to cos(a) e3 + sin(a) e1; theta = cos(a)."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    alpha = math.acos(theta)
    lat = Lattice((-extent, -extent), (extent, extent), (nodes, nodes))
    g1, g2, _ = _axis_rotations()
    ca, sa = math.cos(alpha), math.sin(alpha)
    g3 = np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])
    patches = [GraphPatch.from_formula(lat, "plane", None, g, 1.0, 0.1, None)
               for g in (g1, g2, g3)]
    return TransversalTriple.build(patches)


def paraboloid_triple(extent: float = 0.35,
                      nodes: int = 17) -> TransversalTriple:
    """Three rotated paraboloid patches, pairwise transversal near 0."""
    lat = Lattice((-extent, -extent), (extent, extent), (nodes, nodes))
    patches = [GraphPatch.from_formula(lat, "paraboloid", None, g, 1.0,
                                       None, None)
               for g in _axis_rotations()]
    return TransversalTriple.build(patches)


FAMILIES = {
    "coordinate-planes": lambda theta=1.0, **kw: coordinate_planes_triple(**kw),
    "tilted-planes": tilted_planes_triple,
    "paraboloids": lambda theta=1.0, **kw: paraboloid_triple(**kw),
}
