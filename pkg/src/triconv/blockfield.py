"""Sparse Fourier supports localized to dyadic frequency-modulation blocks.

Fields here are coefficient lists over explicit integer lattice points
(xi, tau) rather than dense grids: the interesting blocks sit at |tau| up
to N^2 where dense grids are hopeless, while the block itself is thin.
The modulation coordinate c is measured against the characteristic of the
equation the block belongs to: c = tau + |xi|^2 for Schroedinger blocks
and c = tau +- |xi| for wave blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kern
from .caps import CapSet

_COORD_BITS = 12
_COORD_OFF = 1 << (_COORD_BITS - 1)
_TAU_BITS = 24
_TAU_OFF = 1 << (_TAU_BITS - 1)


def pack_keys(xi: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Bijective int64 encoding of (xi, tau) lattice points."""
    xi = np.asarray(xi, dtype=np.int64)
    tau = np.asarray(tau, dtype=np.int64)
    if np.any(np.abs(xi) >= _COORD_OFF) or np.any(np.abs(tau) >= _TAU_OFF):
        raise ValueError("lattice point out of packable range")
    key = xi[..., 0] + _COORD_OFF
    key = (key << _COORD_BITS) | (xi[..., 1] + _COORD_OFF)
    key = (key << _COORD_BITS) | (xi[..., 2] + _COORD_OFF)
    key = (key << _TAU_BITS) | (tau + _TAU_OFF)
    return key


def modulation_window(l: int, mode: str) -> np.ndarray:
    """Integer modulation offsets c covered by the dyadic block L = l.

    "plateau" keeps only offsets where the smooth cutoff equals one;
    "full" is the whole closed support, "thin" a minimal plateau sample.
    """
    if l < 1 or l & (l - 1):
        raise ValueError("L must be a dyadic integer >= 1")
    if mode == "thin":
        return np.array([0] if l == 1 else [-l, l], dtype=np.int64)
    if l == 1:
        hi = 1 if mode == "plateau" else 2
        return np.arange(-hi, hi + 1, dtype=np.int64)
    if mode == "plateau":
        half = np.arange((l + 1) // 2, l + 1, dtype=np.int64)
    elif mode == "full":
        half = np.arange(l // 2, 2 * l + 1, dtype=np.int64)
    else:
        raise ValueError(f"unknown window mode {mode!r}")
    return np.concatenate([-half[::-1], half])


def _annulus_points(n: int, thin: bool, span: int | None = None) -> np.ndarray:
    """Integer xi with |xi| in the dyadic annulus at n (ball for n = 1).

    span widens the thin shell to r in [n, n+span); it must stay inside
    the dyadic annulus, so span <= n.
    """
    if n < 1 or n & (n - 1):
        raise ValueError("N must be a dyadic integer >= 1")
    if span is not None and not 1 <= span <= n:
        raise ValueError("radial span must satisfy 1 <= span <= N")
    hi = 2 * n if not thin or n == 1 else n + (span or 1)
    rng = np.arange(-hi, hi + 1, dtype=np.int64)
    gx, gy, gz = np.meshgrid(rng, rng, rng, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    r = np.sqrt(np.sum(pts.astype(float) ** 2, axis=1))
    if n == 1:
        keep = r <= 2.0
    elif thin:
        keep = (r >= n) & (r < n + (span or 1))
    else:
        keep = (r >= n / 2) & (r <= 2 * n)
    return pts[keep]


def _cube_points(side: int, center=(0, 0, 0)) -> np.ndarray:
    if side < 1:
        raise ValueError("cube side must be >= 1")
    half = side // 2
    rng = np.arange(-half, side - half, dtype=np.int64)
    gx, gy, gz = np.meshgrid(rng, rng, rng, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return pts + np.asarray(center, dtype=np.int64)


@dataclass(frozen=True)
class Support:
    """Integer lattice slots (xi, tau) of one localized block."""

    kind: str  # "S", "W+" or "W-"
    xi: np.ndarray  # (M, 3) int64
    tau: np.ndarray  # (M,) int64
    n_level: int
    l_level: int

    def __post_init__(self):
        if self.kind not in ("S", "W+", "W-"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if len(self.xi) != len(self.tau):
            raise ValueError("xi and tau slot counts disagree")
        if len(self.xi) == 0:
            raise ValueError("empty support")
        object.__setattr__(self, "_keys", None)

    def __len__(self) -> int:
        return len(self.xi)

    def keys(self) -> np.ndarray:
        if self._keys is None:
            object.__setattr__(self, "_keys", pack_keys(self.xi, self.tau))
        return self._keys

    def characteristic(self) -> np.ndarray:
        """Modulation coordinate c of every slot."""
        r = np.sqrt(np.sum(self.xi.astype(float) ** 2, axis=1))
        if self.kind == "S":
            return self.tau + r**2
        sign = 1.0 if self.kind == "W+" else -1.0
        return self.tau + sign * r


def _slots_from_window(kind: str, xi: np.ndarray, window: np.ndarray,
                       n_level: int, l_level: int) -> Support:
    if kind == "S":
        # |xi|^2 is an exact integer on the lattice
        base = -np.sum(xi.astype(np.int64) ** 2, axis=1)
    else:
        sign = 1 if kind == "W+" else -1
        # tau must be an integer; c = tau + sign*|xi| then sweeps a window
        # around each rounded characteristic value.
        r = np.sqrt(np.sum(xi.astype(float) ** 2, axis=1))
        base = np.round(-sign * r).astype(np.int64)
    w = len(window)
    tau = (base[:, None] + window[None, :]).reshape(-1)
    xi_full = np.repeat(xi, w, axis=0)
    return Support(kind, xi_full, tau, n_level, l_level)


def schrodinger_block(n: int, l: int, *, thin_shell: bool = True,
                      window: str = "thin",
                      cap: tuple[CapSet, int] | None = None,
                      span: int | None = None) -> Support:
    """Slots of P_n intersect S_l, optionally cut to one angular cap."""
    xi = _annulus_points(n, thin_shell, span)
    if cap is not None:
        capset, j = cap
        xi = xi[capset.member_mask(j, xi.astype(float))]
        if len(xi) == 0:
            raise ValueError("cap cuts the shell to an empty point set")
    return _slots_from_window("S", xi, modulation_window(l, window), n, l)


def wave_block(n: int, l: int, sign: int = 1, *, thin_shell: bool = False,
               window: str = "full") -> Support:
    """Slots of P_n intersect W(sign)_l."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    xi = _annulus_points(n, thin_shell)
    kind = "W+" if sign == 1 else "W-"
    win = modulation_window(l, window)
    sup = _slots_from_window(kind, xi, win, n, l)
    if window == "full":
        # rounding the characteristic can push edge slots outside the
        # closed support; cut them exactly
        c = sup.characteristic()
        keep = (np.abs(c) <= 2 * l + 1e-9)
        if l >= 2:
            keep &= np.abs(c) >= l / 2 - 1e-9
        return Support(kind, sup.xi[keep], sup.tau[keep], n, l)
    return sup


def wave_cube_block(side: int, l: int, sign: int = 1,
                    center=(0, 0, 0), *, window: str = "full") -> Support:
    """Wave block over a frequency cube instead of an annulus."""
    xi = _cube_points(side, center)
    kind = "W+" if sign == 1 else "W-"
    return _slots_from_window(kind, xi, modulation_window(l, window),
                              max(1, side), l)


@dataclass(frozen=True)
class BlockField:
    """Coefficients over one or more localized supports."""

    support: Support
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (len(self.support),):
            raise ValueError("coefficient count does not match the support")
        object.__setattr__(self, "coeffs", c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def normalized(self) -> "BlockField":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize a zero field")
        return BlockField(self.support, self.coeffs / n)

    def conjugate_reflect(self) -> "BlockField":
        """The field whose physical-side function is the conjugate."""
        sup = Support(_flip_kind(self.support.kind), -self.support.xi,
                      -self.support.tau, self.support.n_level,
                      self.support.l_level)
        return BlockField(sup, np.conj(self.coeffs))


def _flip_kind(kind: str) -> str:
    return {"S": "S", "W+": "W-", "W-": "W+"}[kind]


def random_block_field(support: Support, seed: int) -> BlockField:
    rng = np.random.Generator(np.random.Philox(seed))
    m = len(support)
    c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return BlockField(support, c / np.linalg.norm(c))


# -- pair structures ----------------------------------------------------

def _bucket_cplx(bucket, vals, count):
    re = np.bincount(bucket, weights=vals.real, minlength=count)
    im = np.bincount(bucket, weights=vals.imag, minlength=count)
    return re + 1j * im


@dataclass(frozen=True)
class ConvPairs:
    """All coefficient pairs of two supports, bucketed by their sum."""

    idx1: np.ndarray
    idx2: np.ndarray
    bucket: np.ndarray
    bucket_count: int

    def norm_of_product(self, f1: BlockField, f2: BlockField) -> float:
        """l2 norm of the coefficient convolution, i.e. of the physical
        product's Fourier coefficients."""
        prod = f1.coeffs[self.idx1] * f2.coeffs[self.idx2]
        re = np.bincount(self.bucket, weights=prod.real,
                         minlength=self.bucket_count)
        im = np.bincount(self.bucket, weights=prod.imag,
                         minlength=self.bucket_count)
        return float(np.sqrt(np.sum(re**2 + im**2)))

    def ascend(self, f1: BlockField, f2: BlockField, sweeps: int) -> float:
        """Alternating maximization of the product norm over unit fields."""
        a1, a2 = f1.coeffs.copy(), f2.coeffs.copy()
        m1, m2 = len(a1), len(a2)
        val = 0.0
        for _ in range(sweeps):
            prod = a1[self.idx1] * a2[self.idx2]
            w = _bucket_cplx(self.bucket, prod, self.bucket_count)
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            w /= nw
            # grad wrt conj(a1) of <conv, w>
            g1 = _bucket_cplx(self.idx1, np.conj(a2[self.idx2])
                              * w[self.bucket], m1)
            n1 = np.linalg.norm(g1)
            if n1 > 0:
                a1 = g1 / n1
            g2 = _bucket_cplx(self.idx2, np.conj(a1[self.idx1])
                              * w[self.bucket], m2)
            n2 = np.linalg.norm(g2)
            if n2 > 0:
                a2 = g2 / n2
            prod = a1[self.idx1] * a2[self.idx2]
            conv = _bucket_cplx(self.bucket, prod, self.bucket_count)
            val = float(np.linalg.norm(conv))
        return val


def conv_pairs(sup1: Support, sup2: Support,
               max_pairs: int = 20_000_000) -> ConvPairs:
    m1, m2 = len(sup1), len(sup2)
    if m1 * m2 > max_pairs:
        raise ValueError(f"pair table would hold {m1 * m2} entries")
    i1 = np.repeat(np.arange(m1, dtype=np.int32), m2)
    i2 = np.tile(np.arange(m2, dtype=np.int32), m1)
    xi_sum = sup1.xi[i1] + sup2.xi[i2]
    tau_sum = sup1.tau[i1] + sup2.tau[i2]
    keys = pack_keys(xi_sum, tau_sum)
    uniq, inv = np.unique(keys, return_inverse=True)
    return ConvPairs(i1.astype(np.int32), i2.astype(np.int32),
                     inv.astype(np.int64), len(uniq))


class DenseProduct:
    """Product-coefficient engine over a dense flat (xi, tau) box.

    Stands in for ConvPairs when the full pair table would not fit in
    memory; the scatter cost stays O(M1 M2) but storage is only the
    bounding box of the sum support.  Buckets are zeroed on first touch,
    so repeated evaluations never rescan the whole box.
    """

    def __init__(self, sup1: Support, sup2: Support,
                 max_cells: int = 80_000_000):
        lo = sup1.xi.min(axis=0) + sup2.xi.min(axis=0)
        hi = sup1.xi.max(axis=0) + sup2.xi.max(axis=0)
        tlo = int(sup1.tau.min()) + int(sup2.tau.min())
        thi = int(sup1.tau.max()) + int(sup2.tau.max())
        ext = (hi - lo + 1).astype(np.int64)
        text = thi - tlo + 1
        cells = int(ext[0]) * int(ext[1]) * int(ext[2]) * text
        if cells > max_cells:
            raise ValueError(f"product box would hold {cells} cells")
        st = np.array([int(ext[1]) * int(ext[2]) * text,
                       int(ext[2]) * text, text], dtype=np.int64)
        self.flat2 = sup2.xi @ st + sup2.tau
        self.shift1 = sup1.xi @ st + sup1.tau - (int(lo @ st) + tlo)
        self.cells = cells
        self.sizes = (len(sup1), len(sup2))
        self._dense = np.zeros(cells, dtype=np.complex128)
        self._visited = np.zeros(cells, dtype=np.uint8)
        cap = min(cells, len(sup1) * len(sup2))
        self._touched = np.empty(cap, dtype=np.int64)

    def _clear(self, count: int) -> None:
        self._visited[self._touched[:count]] = 0

    def _scatter(self, a1, a2):
        return _kern.dense_bucketize(a1, a2, self.flat2, self.shift1,
                                     self._dense, self._visited,
                                     self._touched)

    def norm_of_product(self, f1: BlockField, f2: BlockField) -> float:
        count, norm2 = self._scatter(f1.coeffs, f2.coeffs)
        self._clear(count)
        return float(np.sqrt(norm2))

    def ascend(self, f1: BlockField, f2: BlockField, sweeps: int) -> float:
        """Alternating maximization; mirrors ConvPairs.ascend."""
        a1, a2 = f1.coeffs.copy(), f2.coeffs.copy()
        val = 0.0
        for _ in range(sweeps):
            count, s2 = self._scatter(a1, a2)
            if s2 == 0:
                self._clear(count)
                return 0.0
            inv = 1.0 / np.sqrt(s2)
            g1 = _kern.dense_reduce_first(self._dense, a2, self.flat2,
                                          self.shift1) * inv
            n1 = np.linalg.norm(g1)
            if n1 > 0:
                a1 = g1 / n1
            g2 = _kern.dense_reduce_second(self._dense, a1, self.flat2,
                                           self.shift1) * inv
            n2 = np.linalg.norm(g2)
            if n2 > 0:
                a2 = g2 / n2
            self._clear(count)
            count, s2 = self._scatter(a1, a2)
            val = float(np.sqrt(s2))
            self._clear(count)
        return val


def product_engine(sup1: Support, sup2: Support,
                   max_pairs: int = 20_000_000,
                   max_cells: int = 80_000_000):
    """Whichever product structure fits: pair table, else dense box."""
    if len(sup1) * len(sup2) <= max_pairs:
        return conv_pairs(sup1, sup2, max_pairs)
    return DenseProduct(sup1, sup2, max_cells)


@dataclass(frozen=True)
class TriPairs:
    """Triples (f-slot, g1-slot, g2-slot) with zeta_f = zeta_1 - zeta_2."""

    f_support: Support
    g1_support: Support
    g2_support: Support
    fi: np.ndarray
    i1: np.ndarray
    i2: np.ndarray

    def __len__(self) -> int:
        return len(self.fi)

    def value(self, f: BlockField, g1: BlockField, g2: BlockField) -> complex:
        if (f.support is not self.f_support
                or g1.support is not self.g1_support
                or g2.support is not self.g2_support):
            raise ValueError("fields do not match the pair table supports")
        terms = (f.coeffs[self.fi] * g1.coeffs[self.i1]
                 * g2.coeffs[self.i2])
        return complex(np.sum(terms))

    def grad_f(self, g1: BlockField, g2: BlockField) -> np.ndarray:
        prod = g1.coeffs[self.i1] * g2.coeffs[self.i2]
        return _bincount_complex(self.fi, prod, len(self.f_support))

    def grad_g1(self, f: BlockField, g2: BlockField) -> np.ndarray:
        prod = f.coeffs[self.fi] * g2.coeffs[self.i2]
        return _bincount_complex(self.i1, prod, len(self.g1_support))

    def grad_g2(self, f: BlockField, g1: BlockField) -> np.ndarray:
        prod = f.coeffs[self.fi] * g1.coeffs[self.i1]
        return _bincount_complex(self.i2, prod, len(self.g2_support))


def _bincount_complex(idx: np.ndarray, vals: np.ndarray,
                      count: int) -> np.ndarray:
    re = np.bincount(idx, weights=vals.real, minlength=count)
    im = np.bincount(idx, weights=vals.imag, minlength=count)
    return re + 1j * im


def tri_pairs(f_sup: Support, g1_sup: Support, g2_sup: Support,
              chunk: int = 4_000_000) -> TriPairs:
    """Enumerate index triples with zeta_1 - zeta_2 in the f support.

    Candidate xi pairs are culled by a KD-tree radius query (the f block
    bounds |xi_1 - xi_2|), then resolved exactly against the f slot set.
    """
    radius = float(np.max(np.sqrt(np.sum(f_sup.xi.astype(float) ** 2,
                                         axis=1)))) + 1e-9
    t1 = cKDTree(g1_sup.xi.astype(float))
    t2 = cKDTree(g2_sup.xi.astype(float))
    cand = t1.query_ball_tree(t2, r=radius)

    f_keys = f_sup.keys()
    order = np.argsort(f_keys)
    f_sorted = f_keys[order]

    fi_out, i1_out, i2_out = [], [], []
    buf1, buf2 = [], []
    total = 0

    def flush():
        nonlocal total
        if not buf1:
            return
        a1 = np.concatenate(buf1)
        a2 = np.concatenate(buf2)
        buf1.clear()
        buf2.clear()
        diff_xi = g1_sup.xi[a1] - g2_sup.xi[a2]
        diff_tau = g1_sup.tau[a1] - g2_sup.tau[a2]
        keys = pack_keys(diff_xi, diff_tau)
        pos = np.searchsorted(f_sorted, keys)
        pos_c = np.minimum(pos, len(f_sorted) - 1)
        hit = f_sorted[pos_c] == keys
        if np.any(hit):
            fi_out.append(order[pos_c[hit]])
            i1_out.append(a1[hit])
            i2_out.append(a2[hit])
        total += len(a1)

    pending = 0
    for i, neigh in enumerate(cand):
        if not neigh:
            continue
        buf1.append(np.full(len(neigh), i, dtype=np.int64))
        buf2.append(np.asarray(neigh, dtype=np.int64))
        pending += len(neigh)
        if pending >= chunk:
            flush()
            pending = 0
    flush()

    if fi_out:
        fi = np.concatenate(fi_out).astype(np.int32)
        i1 = np.concatenate(i1_out).astype(np.int32)
        i2 = np.concatenate(i2_out).astype(np.int32)
    else:
        fi = np.empty(0, dtype=np.int32)
        i1 = np.empty(0, dtype=np.int32)
        i2 = np.empty(0, dtype=np.int32)
    return TriPairs(f_sup, g1_sup, g2_sup, fi, i1, i2)


def concat_supports(parts: list[Support]) -> tuple[Support, np.ndarray]:
    """Stack same-kind supports; returns the union and slot block labels.

    The labels array holds (n_level, l_level) per slot so norms can be
    reassembled blockwise.  Slots are assumed disjoint across parts.
    """
    kinds = {p.kind for p in parts}
    if len(kinds) != 1:
        raise ValueError("cannot concatenate blocks of different kinds")
    xi = np.concatenate([p.xi for p in parts])
    tau = np.concatenate([p.tau for p in parts])
    keys = pack_keys(xi, tau)
    if len(np.unique(keys)) != len(keys):
        raise ValueError("blocks overlap on the lattice")
    labels = np.concatenate([
        np.tile([p.n_level, p.l_level], (len(p), 1)) for p in parts])
    sup = Support(kinds.pop(), xi, tau, 0, 0)
    return sup, labels


def xsb_norm(field: BlockField, labels: np.ndarray, s: float, b: float,
             p: float = np.inf) -> float:
    """Blockwise X^{s,b,p} norm from explicit (N, L) slot labels."""
    pairs = np.unique(labels, axis=0)
    n_levels = np.unique(pairs[:, 0])
    acc = 0.0
    for n in n_levels:
        vals = []
        for lvl in np.unique(pairs[pairs[:, 0] == n][:, 1]):
            mask = (labels[:, 0] == n) & (labels[:, 1] == lvl)
            block = float(np.linalg.norm(field.coeffs[mask]))
            vals.append(float(lvl) ** b * block)
        if math.isinf(p):
            inner = max(vals)
        else:
            inner = float(np.sum(np.array(vals) ** p) ** (1.0 / p))
        acc += float(n) ** (2.0 * s) * inner**2
    return float(np.sqrt(acc))
