# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pair-sweep kernels; see numpy_impl.py for the reference
semantics.  Index arithmetic matches the numpy implementation exactly."""

import numpy as np

from libc.math cimport floor

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

DEF MAXDIM = 8


def pair_table(points1, points2, g3, lo3, h3, nodes3, node_points3, frames3,
               valid3, double eps):
    cdef double[:, ::1] p1 = np.ascontiguousarray(points1, dtype=np.float64)
    cdef double[:, ::1] p2 = np.ascontiguousarray(points2, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(g3, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(lo3, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(h3, dtype=np.float64)
    cdef i64[::1] nn = np.ascontiguousarray(nodes3, dtype=np.int64)
    cdef double[:, ::1] np3 = np.ascontiguousarray(node_points3,
                                                   dtype=np.float64)
    cdef double[:, :, ::1] fr3 = np.ascontiguousarray(frames3,
                                                      dtype=np.float64)
    cdef u8[::1] val3 = np.ascontiguousarray(valid3, dtype=np.uint8)

    cdef Py_ssize_t m1 = p1.shape[0], m2 = p2.shape[0], n = p1.shape[1]
    cdef Py_ssize_t d3 = lo.shape[0], m3 = n - d3
    cdef i64[MAXDIM] strides
    cdef Py_ssize_t a, b, i, j, k
    strides[d3 - 1] = 1
    for a in range(d3 - 2, -1, -1):
        strides[a] = strides[a + 1] * nn[a + 1]

    cdef double half = 0.5 * eps
    cdef double tol = 0.0
    for a in range(d3):
        if h[a] > tol:
            tol = h[a]
    tol *= 1e-9

    out_arr = np.full((m1, m2), -1, dtype=np.int32)
    cdef i32[:, ::1] out = out_arr
    cdef double s[MAXDIM]
    cdef double qt, r, w, proj, hi
    cdef i64 idx, flat
    cdef bint ok

    for i in range(m1):
        for j in range(m2):
            for b in range(n):
                s[b] = p1[i, b] + p2[j, b]
            ok = True
            flat = 0
            for a in range(d3):
                qt = 0.0
                for b in range(n):
                    qt += g[b, a] * s[b]
                hi = lo[a] + (nn[a] - 1) * h[a]
                if qt < lo[a] - tol or qt > hi + tol:
                    ok = False
                    break
                r = (qt - lo[a]) / h[a]
                idx = <i64> floor(r + 0.5)
                if idx < 0:
                    idx = 0
                if idx > nn[a] - 1:
                    idx = nn[a] - 1
                flat += idx * strides[a]
            if not ok:
                continue
            if not val3[flat]:
                continue
            for k in range(m3):
                proj = 0.0
                for b in range(n):
                    w = s[b] - np3[flat, b]
                    proj += w * fr3[flat, b, k]
                if proj > half or proj < -half:
                    ok = False
                    break
            if ok:
                out[i, j] = <i32> flat
    return out_arr


def pair_bin_third(table, fw, gw, Py_ssize_t m3size):
    cdef i32[:, ::1] t = table
    cdef double complex[::1] f = np.ascontiguousarray(fw, dtype=np.complex128)
    cdef double complex[::1] gg = np.ascontiguousarray(gw,
                                                       dtype=np.complex128)
    out_arr = np.zeros(m3size, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef i32 k
    cdef double complex fi
    for i in range(t.shape[0]):
        fi = f[i]
        for j in range(t.shape[1]):
            k = t[i, j]
            if k >= 0:
                out[k] = out[k] + fi * gg[j]
    return out_arr


def pair_value(table, fw, gw, hbar):
    cdef i32[:, ::1] t = table
    cdef double complex[::1] f = np.ascontiguousarray(fw, dtype=np.complex128)
    cdef double complex[::1] gg = np.ascontiguousarray(gw,
                                                       dtype=np.complex128)
    cdef double complex[::1] hb = np.ascontiguousarray(hbar,
                                                       dtype=np.complex128)
    cdef double complex acc = 0
    cdef Py_ssize_t i, j
    cdef i32 k
    cdef double complex fi
    for i in range(t.shape[0]):
        fi = f[i]
        for j in range(t.shape[1]):
            k = t[i, j]
            if k >= 0:
                acc = acc + fi * gg[j] * hb[k]
    return complex(acc)


def pair_reduce_first(table, gw, hbar):
    cdef i32[:, ::1] t = table
    cdef double complex[::1] gg = np.ascontiguousarray(gw,
                                                       dtype=np.complex128)
    cdef double complex[::1] hb = np.ascontiguousarray(hbar,
                                                       dtype=np.complex128)
    out_arr = np.zeros(t.shape[0], dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef i32 k
    cdef double complex acc
    for i in range(t.shape[0]):
        acc = 0
        for j in range(t.shape[1]):
            k = t[i, j]
            if k >= 0:
                acc = acc + gg[j] * hb[k]
        out[i] = acc
    return out_arr


def pair_reduce_second(table, fw, hbar):
    cdef i32[:, ::1] t = table
    cdef double complex[::1] f = np.ascontiguousarray(fw, dtype=np.complex128)
    cdef double complex[::1] hb = np.ascontiguousarray(hbar,
                                                       dtype=np.complex128)
    out_arr = np.zeros(t.shape[1], dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef i32 k
    cdef double complex fi
    for i in range(t.shape[0]):
        fi = f[i]
        for j in range(t.shape[1]):
            k = t[i, j]
            if k >= 0:
                out[j] = out[j] + fi * hb[k]
    return out_arr


def hoelder_max(coords, dflat, ii, jj, double beta):
    cdef double[:, ::1] x = np.ascontiguousarray(coords, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(dflat, dtype=np.float64)
    cdef i64[::1] a = np.ascontiguousarray(ii, dtype=np.int64)
    cdef i64[::1] b = np.ascontiguousarray(jj, dtype=np.int64)
    cdef double best = 0.0, num, den, t
    cdef Py_ssize_t k, c
    cdef i64 i, j
    for k in range(a.shape[0]):
        i = a[k]
        j = b[k]
        num = 0.0
        for c in range(d.shape[1]):
            t = d[i, c] - d[j, c]
            num += t * t
        den = 0.0
        for c in range(x.shape[1]):
            t = x[i, c] - x[j, c]
            den += t * t
        if den > 0.0:
            num = num ** 0.5
            den = den ** (0.5 * beta)
            t = num / den
            if t > best:
                best = t
    return best


def dense_bucketize(a1, a2, flat2, shift1, dense, visited, touched):
    cdef double complex[::1] x1 = np.ascontiguousarray(a1,
                                                       dtype=np.complex128)
    cdef double complex[::1] x2 = np.ascontiguousarray(a2,
                                                       dtype=np.complex128)
    cdef i64[::1] f2 = np.ascontiguousarray(flat2, dtype=np.int64)
    cdef i64[::1] s1 = np.ascontiguousarray(shift1, dtype=np.int64)
    cdef double complex[::1] d = dense
    cdef u8[::1] vis = visited
    cdef i64[::1] tch = touched
    cdef Py_ssize_t m1 = s1.shape[0], m2 = f2.shape[0]
    cdef Py_ssize_t i, j, count = 0
    cdef i64 s, t
    cdef double complex v
    cdef double norm2 = 0.0, re, im
    for i in range(m1):
        v = x1[i]
        s = s1[i]
        for j in range(m2):
            t = f2[j] + s
            if not vis[t]:
                vis[t] = 1
                d[t] = 0.0
                tch[count] = t
                count += 1
            d[t] = d[t] + v * x2[j]
    for i in range(count):
        t = tch[i]
        re = d[t].real
        im = d[t].imag
        norm2 += re * re + im * im
    return count, norm2


def dense_reduce_first(dense, a2, flat2, shift1):
    cdef double complex[::1] d = dense
    cdef double complex[::1] x2 = np.ascontiguousarray(a2,
                                                       dtype=np.complex128)
    cdef i64[::1] f2 = np.ascontiguousarray(flat2, dtype=np.int64)
    cdef i64[::1] s1 = np.ascontiguousarray(shift1, dtype=np.int64)
    cdef Py_ssize_t m1 = s1.shape[0], m2 = f2.shape[0]
    out_arr = np.empty(m1, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef i64 s
    cdef double complex acc
    for i in range(m1):
        s = s1[i]
        acc = 0.0
        for j in range(m2):
            acc = acc + d[f2[j] + s] * x2[j].conjugate()
        out[i] = acc
    return out_arr


def dense_reduce_second(dense, a1, flat2, shift1):
    cdef double complex[::1] d = dense
    cdef double complex[::1] x1 = np.ascontiguousarray(a1,
                                                       dtype=np.complex128)
    cdef i64[::1] f2 = np.ascontiguousarray(flat2, dtype=np.int64)
    cdef i64[::1] s1 = np.ascontiguousarray(shift1, dtype=np.int64)
    cdef Py_ssize_t m1 = s1.shape[0], m2 = f2.shape[0]
    out_arr = np.zeros(m2, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef i64 s
    cdef double complex c1
    for i in range(m1):
        s = s1[i]
        c1 = x1[i].conjugate()
        for j in range(m2):
            out[j] = out[j] + d[f2[j] + s] * c1
    return out_arr
