"""Sparse block supports and pair tables against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triconv.blockfield import (BlockField, DenseProduct, Support,
                                _annulus_points, _cube_points,
                                concat_supports, conv_pairs,
                                modulation_window, pack_keys, product_engine,
                                random_block_field, schrodinger_block,
                                tri_pairs, wave_block, wave_cube_block,
                                xsb_norm)
from triconv.caps import build_caps


# -- oracles ---------------------------------------------------------------

def conv_norm_oracle(sup1, c1, sup2, c2):
    """Accumulate the coefficient convolution in a plain dict."""
    acc = {}
    for i in range(len(sup1)):
        for j in range(len(sup2)):
            key = (tuple(sup1.xi[i] + sup2.xi[j]), int(sup1.tau[i] + sup2.tau[j]))
            acc[key] = acc.get(key, 0j) + c1[i] * c2[j]
    return float(np.sqrt(sum(abs(v) ** 2 for v in acc.values())))


def tri_value_oracle(f, g1, g2):
    """Triple loop over the f slot set."""
    slots = {}
    for k in range(len(f.support)):
        slots[(tuple(f.support.xi[k]), int(f.support.tau[k]))] = f.coeffs[k]
    acc = 0j
    for i in range(len(g1.support)):
        for j in range(len(g2.support)):
            key = (tuple(g1.support.xi[i] - g2.support.xi[j]),
                   int(g1.support.tau[i] - g2.support.tau[j]))
            if key in slots:
                acc += slots[key] * g1.coeffs[i] * g2.coeffs[j]
    return complex(acc)


# -- packing ---------------------------------------------------------------

@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(-2000, 2000), st.integers(-2000, 2000),
                          st.integers(-2000, 2000),
                          st.integers(-8_000_000, 8_000_000)),
                min_size=1, max_size=50, unique=True))
def test_pack_keys_injective(points):
    xi = np.array([p[:3] for p in points], dtype=np.int64)
    tau = np.array([p[3] for p in points], dtype=np.int64)
    keys = pack_keys(xi, tau)
    assert len(np.unique(keys)) == len(points)


def test_pack_keys_range_check():
    with pytest.raises(ValueError, match="packable range"):
        pack_keys(np.array([[5000, 0, 0]]), np.array([0]))
    with pytest.raises(ValueError, match="packable range"):
        pack_keys(np.array([[0, 0, 0]]), np.array([2**24]))


# -- windows and point sets -------------------------------------------------

def test_modulation_window_contents():
    assert modulation_window(1, "thin").tolist() == [0]
    assert modulation_window(1, "plateau").tolist() == [-1, 0, 1]
    assert modulation_window(1, "full").tolist() == [-2, -1, 0, 1, 2]
    assert modulation_window(2, "thin").tolist() == [-2, 2]
    assert modulation_window(4, "full").tolist() == (
        list(range(-8, -1)) + list(range(2, 9)))
    assert modulation_window(4, "plateau").tolist() == [-4, -3, -2, 2, 3, 4]


def test_modulation_window_rejects():
    with pytest.raises(ValueError, match="dyadic"):
        modulation_window(3, "thin")
    with pytest.raises(ValueError, match="window mode"):
        modulation_window(2, "wide")


@pytest.mark.parametrize("n,thin", [(1, True), (1, False), (2, True),
                                    (2, False), (4, True)])
def test_annulus_points_oracle(n, thin):
    pts = _annulus_points(n, thin)
    rng = np.arange(-2 * n, 2 * n + 1)
    expect = []
    for x in rng:
        for y in rng:
            for z in rng:
                r = np.sqrt(float(x * x + y * y + z * z))
                if n == 1:
                    ok = r <= 2.0
                elif thin:
                    ok = n <= r < n + 1
                else:
                    ok = n / 2 <= r <= 2 * n
                if ok:
                    expect.append((x, y, z))
    got = set(map(tuple, pts.tolist()))
    assert got == set(expect)


def test_cube_points():
    pts = _cube_points(4, center=(8, 0, 0))
    assert len(pts) == 64
    assert pts.min(axis=0).tolist() == [6, -2, -2]
    assert pts.max(axis=0).tolist() == [9, 1, 1]


# -- blocks -----------------------------------------------------------------

def test_schrodinger_characteristic_is_window():
    sup = schrodinger_block(2, 4, thin_shell=True, window="plateau")
    c = sup.characteristic()
    assert np.allclose(c, np.round(c))  # integers exactly
    assert set(np.round(c).astype(int)) <= set(
        modulation_window(4, "plateau").tolist())


def test_wave_thin_characteristic_near_ring():
    sup = wave_block(4, 4, sign=1, thin_shell=True, window="thin")
    c = np.abs(sup.characteristic())
    assert np.all((c >= 3.5) & (c <= 4.5))


def test_wave_full_characteristic_inside_support():
    sup = wave_block(2, 4, sign=-1, thin_shell=False, window="full")
    c = np.abs(sup.characteristic())
    assert np.all(c <= 8 + 1e-9)
    assert np.all(c >= 2 - 1e-9)


def test_wave_cube_block_slots():
    sup = wave_cube_block(2, 1, sign=1, center=(6, 0, 0), window="thin")
    assert len(sup) == 8
    assert np.all(np.abs(sup.characteristic()) <= 0.5 + 1e-12)


def test_schrodinger_cap_restriction():
    caps = build_caps(2)
    sup_full = schrodinger_block(4, 1, thin_shell=True, window="thin")
    sup_cap = schrodinger_block(4, 1, thin_shell=True, window="thin",
                                cap=(caps, 0))
    assert 0 < len(sup_cap) < len(sup_full)
    assert np.all(caps.member_mask(0, sup_cap.xi.astype(float)))


def test_empty_cap_rejected():
    caps = build_caps(8)
    hit = False
    for j in range(len(caps.centers)):
        try:
            schrodinger_block(2, 1, thin_shell=True, window="thin",
                              cap=(caps, j))
        except ValueError as e:
            assert "empty" in str(e)
            hit = True
            break
    assert hit  # fine caps must miss the sparse shell somewhere


def test_support_validation():
    with pytest.raises(ValueError, match="kind"):
        Support("Q", np.zeros((1, 3), np.int64), np.zeros(1, np.int64), 1, 1)
    with pytest.raises(ValueError, match="disagree"):
        Support("S", np.zeros((2, 3), np.int64), np.zeros(1, np.int64), 1, 1)


# -- fields -----------------------------------------------------------------

def test_random_field_unit_and_deterministic():
    sup = schrodinger_block(2, 2, thin_shell=True, window="thin")
    f1 = random_block_field(sup, seed=7)
    f2 = random_block_field(sup, seed=7)
    assert f1.norm() == pytest.approx(1.0, rel=1e-12)
    assert np.array_equal(f1.coeffs, f2.coeffs)


def test_conjugate_reflect_norm_and_kind():
    sup = wave_block(2, 2, sign=1, thin_shell=True, window="thin")
    f = random_block_field(sup, seed=3)
    r = f.conjugate_reflect()
    assert r.support.kind == "W-"
    assert r.norm() == f.norm()
    assert np.array_equal(r.support.xi, -sup.xi)


# -- pair tables ------------------------------------------------------------

def test_conv_pairs_oracle():
    sup1 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    sup2 = schrodinger_block(1, 2, thin_shell=False, window="thin")
    f1 = random_block_field(sup1, seed=11)
    f2 = random_block_field(sup2, seed=12)
    pairs = conv_pairs(sup1, sup2)
    got = pairs.norm_of_product(f1, f2)
    want = conv_norm_oracle(sup1, f1.coeffs, sup2, f2.coeffs)
    assert got == pytest.approx(want, rel=1e-12)


def test_conv_pairs_budget():
    sup = schrodinger_block(4, 1, thin_shell=True, window="thin")
    with pytest.raises(ValueError, match="pair table"):
        conv_pairs(sup, sup, max_pairs=10)


def test_annulus_span_widens_thin_shell():
    thin = _annulus_points(4, True)
    wide = _annulus_points(4, True, span=3)
    r2 = np.sum(wide.astype(float) ** 2, axis=1)
    assert len(wide) > len(thin)
    assert np.all((r2 >= 16) & (r2 < 49))
    with pytest.raises(ValueError, match="span"):
        _annulus_points(4, True, span=5)


def test_dense_product_matches_pair_table():
    sup1 = schrodinger_block(4, 2, thin_shell=True, window="plateau")
    sup2 = schrodinger_block(2, 4, thin_shell=True, window="plateau")
    f1 = random_block_field(sup1, seed=21)
    f2 = random_block_field(sup2, seed=22)
    pairs = conv_pairs(sup1, sup2)
    dense = DenseProduct(sup1, sup2)
    assert dense.norm_of_product(f1, f2) == pytest.approx(
        pairs.norm_of_product(f1, f2), rel=1e-12)
    # repeat calls must not see stale cells
    assert dense.norm_of_product(f1, f2) == pytest.approx(
        pairs.norm_of_product(f1, f2), rel=1e-12)


def test_dense_product_ascend_matches_pair_table():
    sup1 = schrodinger_block(2, 2, thin_shell=True, window="plateau")
    sup2 = schrodinger_block(2, 1, thin_shell=True, window="plateau")
    f1 = random_block_field(sup1, seed=31)
    f2 = random_block_field(sup2, seed=32)
    a = conv_pairs(sup1, sup2).ascend(f1, f2, 6)
    b = DenseProduct(sup1, sup2).ascend(f1, f2, 6)
    assert b == pytest.approx(a, rel=1e-10)


def test_dense_product_cell_budget():
    sup = schrodinger_block(4, 1, thin_shell=True, window="thin")
    with pytest.raises(ValueError, match="product box"):
        DenseProduct(sup, sup, max_cells=100)


def test_product_engine_switches_on_pair_budget():
    sup = schrodinger_block(2, 1, thin_shell=True, window="thin")
    assert type(product_engine(sup, sup)).__name__ == "ConvPairs"
    eng = product_engine(sup, sup, max_pairs=10)
    assert isinstance(eng, DenseProduct)
    f = random_block_field(sup, seed=41)
    g = random_block_field(sup, seed=42)
    assert eng.norm_of_product(f, g) == pytest.approx(
        conv_pairs(sup, sup).norm_of_product(f, g), rel=1e-12)


def test_conjugating_either_factor_same_norm():
    sup1 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    sup2 = wave_block(2, 2, sign=1, thin_shell=True, window="thin")
    u = random_block_field(sup1, seed=5)
    v = random_block_field(sup2, seed=6)
    ur, vr = u.conjugate_reflect(), v.conjugate_reflect()
    n1 = conv_pairs(ur.support, sup2).norm_of_product(ur, v)
    n2 = conv_pairs(sup1, vr.support).norm_of_product(u, vr)
    assert n1 == pytest.approx(n2, rel=1e-12)


def test_tri_pairs_oracle():
    g1 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    g2 = schrodinger_block(2, 2, thin_shell=True, window="thin")
    f_sup = wave_block(2, 2, sign=1, thin_shell=False, window="full")
    pairs = tri_pairs(f_sup, g1, g2)
    assert len(pairs) > 0
    f = random_block_field(f_sup, seed=1)
    a1 = random_block_field(g1, seed=2)
    a2 = random_block_field(g2, seed=3)
    got = pairs.value(f, a1, a2)
    want = tri_value_oracle(f, a1, a2)
    assert got == pytest.approx(want, rel=1e-12)


def test_tri_pairs_respects_support_identity():
    g1 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    f_sup = wave_block(2, 1, sign=1, thin_shell=False, window="full")
    pairs = tri_pairs(f_sup, g1, g1)
    other = schrodinger_block(2, 1, thin_shell=True, window="thin")
    f = random_block_field(f_sup, seed=1)
    a = random_block_field(other, seed=2)
    with pytest.raises(ValueError, match="pair table"):
        pairs.value(f, a, a)


def test_tri_pairs_disjoint_blocks_empty():
    g = schrodinger_block(2, 1, thin_shell=True, window="thin")
    far = wave_block(16, 1, sign=1, thin_shell=True, window="thin")
    pairs = tri_pairs(far, g, g)
    assert len(pairs) == 0


def test_tri_pairs_gradients_reassemble_value():
    g1 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    g2 = schrodinger_block(2, 1, thin_shell=True, window="thin")
    f_sup = wave_block(1, 2, sign=1, thin_shell=False, window="full")
    pairs = tri_pairs(f_sup, g1, g2)
    f = random_block_field(f_sup, seed=4)
    a1 = random_block_field(g1, seed=5)
    a2 = random_block_field(g2, seed=6)
    val = pairs.value(f, a1, a2)
    via_f = np.sum(f.coeffs * pairs.grad_f(a1, a2))
    via_1 = np.sum(a1.coeffs * pairs.grad_g1(f, a2))
    via_2 = np.sum(a2.coeffs * pairs.grad_g2(f, a1))
    for v in (via_f, via_1, via_2):
        assert complex(v) == pytest.approx(val, rel=1e-12)


# -- concatenation and labelled norms ----------------------------------------

def _trim_ball(sup):
    keep = np.sum(sup.xi ** 2, axis=1) < 4
    return Support(sup.kind, sup.xi[keep], sup.tau[keep],
                   sup.n_level, sup.l_level)


def test_concat_and_xsb_single_block():
    b = schrodinger_block(4, 2, thin_shell=True, window="thin")
    sup, labels = concat_supports([b])
    f = random_block_field(sup, seed=9)
    s, bb = 0.7, 0.5
    want = 4.0**s * 2.0**bb * f.norm()
    assert xsb_norm(f, labels, s, bb) == pytest.approx(want, rel=1e-12)


def test_concat_overlap_and_kind_rejected():
    b = schrodinger_block(2, 1, thin_shell=True, window="thin")
    with pytest.raises(ValueError, match="overlap"):
        concat_supports([b, b])
    w = wave_block(2, 1, sign=1, thin_shell=True, window="thin")
    with pytest.raises(ValueError, match="kinds"):
        concat_supports([b, w])


def test_xsb_norm_oracle_two_blocks():
    b1 = _trim_ball(schrodinger_block(1, 1, thin_shell=False, window="thin"))
    b2 = schrodinger_block(2, 4, thin_shell=True, window="thin")
    sup, labels = concat_supports([b1, b2])
    f = random_block_field(sup, seed=13)
    m1 = labels[:, 0] == 1
    n1 = float(np.linalg.norm(f.coeffs[m1]))
    n2 = float(np.linalg.norm(f.coeffs[~m1]))
    s, b = 0.5, 0.4
    want_inf = np.sqrt(1.0 ** (2 * s) * (1.0**b * n1) ** 2
                       + 2.0 ** (2 * s) * (4.0**b * n2) ** 2)
    assert xsb_norm(f, labels, s, b) == pytest.approx(want_inf, rel=1e-12)
    # p = 2 agrees when each N carries a single L
    assert xsb_norm(f, labels, s, b, p=2) == pytest.approx(want_inf,
                                                           rel=1e-12)
