"""Pure-numpy pair-sweep kernels.

Reference implementation of the hot loops; results agree with the compiled
extension in `_pairscan.pyx` up to floating-point reassociation.  Two kernel
families live here:

* surface kernels: for every pair of quadrature nodes (one on each of two
  patches) the sum of the two ambient points is binned to the nearest lattice
  node of a third patch and kept when it lies inside an eps-slab around that
  patch.  The resulting pair table drives the convolution and the
  alternating-maximization sweeps.
* dense product kernels: block convolutions accumulated into a flat dense
  output box, with a visited-cell list so repeated calls stay cheap.

All integer index arithmetic is done identically to the compiled version so
the two implementations produce the same tables.
"""

from __future__ import annotations

import numpy as np

# row chunk for pairwise broadcasts; keeps temporaries ~tens of MB
_CHUNK = 1 << 22


def _row_chunk(m2: int) -> int:
    return max(1, _CHUNK // max(m2, 1))


def pair_table(points1, points2, g3, lo3, h3, nodes3, node_points3, frames3,
               valid3, eps):
    """Bin node-pair sums onto the third patch lattice.

    Returns an int32 array of shape (M1, M2) holding the flat lattice index
    of the receiving node, or -1 when the sum leaves the domain, hits an
    invalid node, or falls outside the eps-slab around the patch.
    """
    p1 = np.ascontiguousarray(points1, dtype=np.float64)
    p2 = np.ascontiguousarray(points2, dtype=np.float64)
    m1, n = p1.shape
    m2 = p2.shape[0]
    d3 = len(nodes3)
    m3 = n - d3
    lo3 = np.asarray(lo3, dtype=np.float64)
    h3 = np.asarray(h3, dtype=np.float64)
    nodes3 = np.asarray(nodes3, dtype=np.int64)
    gt = np.asarray(g3, dtype=np.float64).T.copy()
    strides = np.ones(d3, dtype=np.int64)
    for a in range(d3 - 2, -1, -1):
        strides[a] = strides[a + 1] * nodes3[a + 1]
    half = 0.5 * eps
    tol = 1e-9 * np.max(h3)

    table = np.full((m1, m2), -1, dtype=np.int32)
    step = _row_chunk(m2)
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        s = p1[i0:i1, None, :] + p2[None, :, :]          # (c, M2, n)
        q = s @ gt.T                                     # graph coordinates
        qt = q[..., :d3]
        r = (qt - lo3) / h3
        idx = np.floor(r + 0.5).astype(np.int64)
        ok = np.all((qt >= lo3 - tol) & (qt <= lo3 + (nodes3 - 1) * h3 + tol),
                    axis=-1)
        np.clip(idx, 0, nodes3 - 1, out=idx)
        flat = idx @ strides
        ok &= valid3[flat]
        w = s - node_points3[flat]                       # (c, M2, n)
        proj = np.einsum("...n,...nk->...k", w, frames3[flat])
        ok &= np.all(np.abs(proj) <= half, axis=-1)
        blk = np.where(ok, flat, -1).astype(np.int32)
        table[i0:i1] = blk
    assert m3 >= 1
    return table


def _masked(table):
    flat = table.ravel()
    mask = flat >= 0
    return flat, mask


def pair_bin_third(table, fw, gw, m3size):
    """c_k = sum over pairs binned to k of fw_i * gw_j."""
    m1, m2 = table.shape
    out = np.zeros(m3size, dtype=np.complex128)
    step = _row_chunk(m2)
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        blk = table[i0:i1].ravel()
        mask = blk >= 0
        vals = (fw[i0:i1, None] * gw[None, :]).ravel()[mask]
        idx = blk[mask]
        out += np.bincount(idx, weights=vals.real, minlength=m3size) \
            + 1j * np.bincount(idx, weights=vals.imag, minlength=m3size)
    return out


def pair_value(table, fw, gw, hbar):
    """sum over pairs of fw_i * gw_j * hbar_k."""
    m1, m2 = table.shape
    acc = 0.0 + 0.0j
    step = _row_chunk(m2)
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        blk = table[i0:i1].ravel()
        mask = blk >= 0
        vals = (fw[i0:i1, None] * gw[None, :]).ravel()[mask]
        acc += np.sum(vals * hbar[blk[mask]])
    return acc


def pair_reduce_first(table, gw, hbar):
    """a_i = sum_j gw_j * hbar_{k(i,j)}."""
    m1, m2 = table.shape
    out = np.zeros(m1, dtype=np.complex128)
    step = _row_chunk(m2)
    hb = np.concatenate([hbar, [0.0]])
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        blk = table[i0:i1]
        contrib = hb[blk] * gw[None, :]
        out[i0:i1] = contrib.sum(axis=1)
    return out


def pair_reduce_second(table, fw, hbar):
    """b_j = sum_i fw_i * hbar_{k(i,j)}."""
    m1, m2 = table.shape
    out = np.zeros(m2, dtype=np.complex128)
    step = _row_chunk(m2)
    hb = np.concatenate([hbar, [0.0]])
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        blk = table[i0:i1]
        out += (hb[blk] * fw[i0:i1, None]).sum(axis=0)
    return out


def hoelder_max(coords, dflat, ii, jj, beta):
    """max over index pairs of |D_i - D_j|_F / |x_i - x_j|^beta."""
    best = 0.0
    step = max(1, _CHUNK // max(dflat.shape[1], 1))
    for k0 in range(0, len(ii), step):
        k1 = min(k0 + step, len(ii))
        i, j = ii[k0:k1], jj[k0:k1]
        num = np.sqrt(np.sum((dflat[i] - dflat[j]) ** 2, axis=1))
        den = np.sqrt(np.sum((coords[i] - coords[j]) ** 2, axis=1)) ** beta
        good = den > 0
        if np.any(good):
            best = max(best, float(np.max(num[good] / den[good])))
    return best


# -- dense product accumulation ----------------------------------------------
#
# For block convolutions whose full pair table would not fit in memory the
# product coefficients are scattered into a dense flat (xi, tau) box instead:
# cell = flat2[j] + shift1[i].  Cells are zeroed on first touch and recorded
# once in `touched`, so the box never needs a full clear between calls.


def dense_bucketize(a1, a2, flat2, shift1, dense, visited, touched):
    """Accumulate a1_i * a2_j over all pairs; returns (touched, norm^2)."""
    m2 = len(flat2)
    count = 0
    step = _row_chunk(m2)
    for i0 in range(0, len(shift1), step):
        i1 = min(i0 + step, len(shift1))
        tg = (shift1[i0:i1, None] + flat2[None, :]).ravel()
        fresh = np.unique(tg[visited[tg] == 0])
        dense[fresh] = 0.0
        visited[fresh] = 1
        touched[count:count + len(fresh)] = fresh
        count += len(fresh)
        np.add.at(dense, tg, (a1[i0:i1, None] * a2[None, :]).ravel())
    seen = dense[touched[:count]]
    return count, float(np.sum(seen.real**2 + seen.imag**2))


def dense_reduce_first(dense, a2, flat2, shift1):
    """out_i = sum_j dense[flat2_j + shift1_i] * conj(a2_j)."""
    m1, m2 = len(shift1), len(flat2)
    out = np.empty(m1, dtype=np.complex128)
    a2c = np.conj(a2)
    step = _row_chunk(m2)
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        out[i0:i1] = dense[shift1[i0:i1, None] + flat2[None, :]] @ a2c
    return out


def dense_reduce_second(dense, a1, flat2, shift1):
    """out_j = sum_i dense[flat2_j + shift1_i] * conj(a1_i)."""
    m1, m2 = len(shift1), len(flat2)
    out = np.zeros(m2, dtype=np.complex128)
    a1c = np.conj(a1)
    step = _row_chunk(m2)
    for i0 in range(0, m1, step):
        i1 = min(i0 + step, m1)
        out += a1c[i0:i1] @ dense[shift1[i0:i1, None] + flat2[None, :]]
    return out
