"""Geometry layer tests.

Expected values are frozen from closed-form derivations stated inline, or
recomputed by small independent numpy oracles that avoid the package
kernels.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triconv import geometry as geo


def _quad_half():
    # phi(x) = x^2/2 on [-1, 1], analytic jacobian phi'(x) = x
    lat = geo.Lattice((-1.0,), (1.0,), (41,))
    return geo.GraphPatch.from_callable(
        lat, lambda x: 0.5 * x**2, lambda x: x[..., None, :].copy(),
        np.eye(2), beta=1.0, b_hoelder=2.0 + 1e-9, R=1.0)


def _hoelder_oracle(x, dp, beta):
    # dense all-pairs Hoelder quotient, plain numpy, no package kernels
    diff = np.linalg.norm(dp[:, None] - dp[None, :], axis=-1)
    dist = np.linalg.norm(x[:, None] - x[None, :], axis=-1)
    iu = np.triu_indices(len(x), k=1)
    return float(np.max(diff[iu] / dist[iu] ** beta))


def test_regularity_closed_form():
    # sup_F |Dphi| = max|x| = 1 on [-1,1]; the beta=1 seminorm of x -> x
    # is exactly 1; with R = 1 the left side is 1 + 1 = 2.
    patch = _quad_half()
    rep = geo.check_regularity(patch)
    assert rep.sup_term == pytest.approx(1.0, abs=1e-14)
    assert rep.hoelder_seminorm == pytest.approx(1.0, abs=1e-12)
    assert rep.lhs == pytest.approx(2.0, abs=1e-12)
    assert rep.passed

    x = patch.domain_points()
    dp = patch.dphi().reshape(len(x), -1)
    assert rep.hoelder_seminorm == pytest.approx(
        _hoelder_oracle(x, dp, 1.0), abs=1e-13)


def test_regularity_fails_when_bound_too_small():
    patch = _quad_half()
    tight = geo.GraphPatch.from_callable(
        patch.lattice, lambda x: 0.5 * x**2, lambda x: x[..., None, :].copy(),
        np.eye(2), beta=1.0, b_hoelder=1.9, R=1.0)
    assert not geo.check_regularity(tight).passed


def test_paraboloid_normal_direction():
    # raw normal of z = |x|^2 at x = (1, 0) is (-2, 0, 1); the frame is its
    # normalization (-2, 0, 1)/sqrt(5)
    lat = geo.Lattice((-1.0, -1.0), (1.0, 1.0), (5, 5))
    p = geo.GraphPatch.from_formula(lat, "paraboloid", None, np.eye(3),
                                    1.0, None, None)
    node = (4, 2)
    fr = geo.normal_frame(p, node)
    expect = np.array([-2.0, 0.0, 1.0]) / math.sqrt(5.0)
    assert np.allclose(fr.vectors[:, 0], expect, atol=1e-12)
    assert np.allclose(fr.point, [1.0, 0.0, 1.0], atol=1e-12)


def test_fd_jacobian_matches_analytic_for_quadratics():
    # second-order differences are exact on quadratics, boundary included
    lat = geo.Lattice((-1.0, -1.0), (1.0, 1.0), (9, 9))
    ana = geo.GraphPatch.from_formula(lat, "paraboloid", None, np.eye(3),
                                      1.0, None, None)
    tab = geo.GraphPatch(lat, ana._phi_grid, np.eye(3), 1.0, None, None)
    assert not tab.analytic_jacobian
    assert np.max(np.abs(tab.dphi() - ana.dphi())) < 1e-10
    assert np.max(np.abs(tab.weights() - ana.weights())) < 1e-12


def test_weights_flat_patch_total_area():
    # trapezoid weights on a flat graph integrate the area exactly
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (9, 9))
    p = geo.GraphPatch.from_formula(lat, "plane", None, np.eye(3),
                                    1.0, 0.1, None)
    assert p.weights().sum() == pytest.approx(1.0, abs=1e-13)


def test_coordinate_planes_theta_is_one():
    t = geo.coordinate_planes_triple(nodes=9)
    assert t.theta == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("alpha", [0.2, 0.7, 1.2])
def test_tilted_planes_theta_equals_cos_alpha(alpha):
    # d = det(e1, e2, n3) = <n3, e3> = cos(alpha), constant over all nodes
    t = geo.tilted_planes_triple(math.cos(alpha), nodes=9)
    assert t.theta == pytest.approx(math.cos(alpha), abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.06, 0.99))
def test_tilted_family_theta_exact(theta):
    t = geo.tilted_planes_triple(theta, nodes=5)
    assert t.theta == pytest.approx(theta, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 2 * math.pi))
def test_det_invariant_under_frame_rotation(seed, angle):
    # |d| may not depend on the orthonormal basis chosen within each
    # normal space: rotate a 2-column frame in R^4 and compare
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    f1 = geo.NormalFrame(np.zeros(4), q[:, :2])
    f2 = geo.NormalFrame(np.zeros(4), q[:, 2:3] * 0 + _unit(rng, 4)[:, None])
    f3 = geo.NormalFrame(np.zeros(4), _unit(rng, 4)[:, None])
    rot = np.array([[math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)]])
    f1r = geo.NormalFrame(np.zeros(4), q[:, :2] @ rot)
    d0 = geo.transversality_det(f1, f2, f3)
    d1 = geo.transversality_det(f1r, f2, f3)
    assert abs(abs(d0) - abs(d1)) < 1e-10


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_transversality_det_rejects_bad_dims():
    q = np.eye(3)
    f = geo.NormalFrame(np.zeros(3), q[:, :1])
    with pytest.raises(ValueError):
        geo.transversality_det(f, f, geo.NormalFrame(np.zeros(3), q[:, :2]))


def test_degenerate_triple_rejected():
    # two parallel planes: some det is exactly 0
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (5, 5))
    g1, g2, _ = geo._axis_rotations()
    mk = lambda g: geo.GraphPatch.from_formula(lat, "plane", None, g,
                                               1.0, 0.1, None)
    assert geo.theta_min([mk(g1), mk(g1), mk(g2)]) == 0.0
    with pytest.raises(ValueError):
        geo.TransversalTriple.build([mk(g1), mk(g1), mk(g2)])


def test_mn_identity_planes_and_paraboloids():
    # the identity is algebraic, so analytic-jacobian families satisfy it
    # to roundoff for any invertible T
    rng = np.random.default_rng(7)
    q1, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    q2, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    t_mat = q1 @ np.diag([0.6, 1.3, 2.1]) @ q2
    for triple in (geo.coordinate_planes_triple(nodes=9),
                   geo.paraboloid_triple(nodes=9)):
        rep = geo.verify_mn_identity(triple, t_mat, samples=32, seed=1)
        assert rep.skipped < rep.samples
        assert rep.max_rel_err < 1e-8


def test_apply_linear_isometry_preserves_theta_and_size():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    t0 = geo.paraboloid_triple(nodes=9)
    t1 = geo.apply_linear(t0, q)
    assert t1.theta == pytest.approx(t0.theta, abs=1e-9)
    for p0, p1 in zip(t0.patches, t1.patches):
        assert p1.diameter() == pytest.approx(p0.diameter(), rel=1e-6)


def test_apply_linear_rejects_singular():
    t0 = geo.coordinate_planes_triple(nodes=5)
    with pytest.raises(ValueError):
        geo.apply_linear(t0, np.diag([1.0, 1.0, 0.0]))


def test_partition_trivial_when_delta_large():
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (9, 9))
    p = geo.GraphPatch.from_formula(lat, "plane", None, np.eye(3),
                                    1.0, 0.1, None)
    out = geo.partition_patch(p, p.diameter() * 1.01)
    assert len(out) == 1 and out[0] is p


def test_partition_flat_halving():
    # a flat square split at delta = diam/2 gives 2 x 2 pieces with exact
    # mass additivity and vanishing differential at each piece center
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (17, 17))
    p = geo.GraphPatch.from_formula(lat, "plane", None, np.eye(3),
                                    1.0, 0.1, None)
    delta = p.diameter() / 2
    pieces = geo.partition_patch(p, delta)
    assert len(pieces) == 4
    total = sum(q.weights().sum() for q in pieces)
    assert total == pytest.approx(p.weights().sum(), rel=1e-12)
    for q in pieces:
        assert q.diameter() <= delta * (1 + 1e-9)
        mid = q.lattice.size // 2
        assert np.max(np.abs(q.dphi()[mid])) < 1e-12


def test_partition_paraboloid_centers():
    lat = geo.Lattice((-0.4, -0.4), (0.4, 0.4), (17, 17))
    p = geo.GraphPatch.from_formula(lat, "paraboloid", None, np.eye(3),
                                    1.0, None, None)
    pieces = geo.partition_patch(p, p.diameter() / 2)
    assert len(pieces) >= 4
    for q in pieces:
        mid = q.lattice.size // 2
        assert np.max(np.abs(q.dphi()[mid])) < 1e-12
        assert q.diameter() <= p.diameter() / 2 * (1 + 1e-6)


def test_foliation_norm_identity():
    # quotient weights make sum_slices width * ||f||_slice^2 equal the
    # surface norm exactly, for any slab count
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (13, 13))
    p = geo.GraphPatch.from_formula(lat, "paraboloid", None, np.eye(3),
                                    1.0, None, None)
    rng = np.random.default_rng(11)
    f = rng.standard_normal(p.lattice.size)
    ref = float(np.sum(np.abs(f) ** 2 * p.weights()))
    for slabs in (1, 4, 9):
        fol = geo.foliate(p, np.array([0.3, -0.2, 0.9]), slabs)
        got = sum(fol.slab_width * float(np.sum(np.abs(f[s.node_indices])**2
                                                * s.weights))
                  for s in fol.slices)
        assert got == pytest.approx(ref, rel=1e-12)
        counted = sum(len(s.node_indices) for s in fol.slices)
        assert counted == p.valid.sum()


def test_foliation_rejects_tangent_degenerate_direction():
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (9, 9))
    p = geo.GraphPatch.from_formula(lat, "plane", None, np.eye(3),
                                    1.0, 0.1, None)
    with pytest.raises(ValueError):
        geo.foliate(p, np.array([0.0, 0.0, 1.0]), 4)


def test_load_patch_formula_and_table():
    spec = {
        "n": 3, "m": 1,
        "domain": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5], "nodes": [9, 9]},
        "phi": {"formula": "paraboloid"},
        "beta": 1.0,
    }
    p = geo.load_patch(spec)
    assert p.n == 3 and p.m == 1
    vals = p._phi_grid[..., 0].tolist()
    spec_tab = dict(spec, phi={"table": vals})
    q = geo.load_patch(spec_tab)
    assert np.allclose(q.phi(), p.phi())


def test_load_patch_rejects_unknown_key():
    spec = {
        "n": 3, "m": 1,
        "domain": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5], "nodes": [5, 5]},
        "phi": {"formula": "plane"}, "beta": 1.0, "extra": 1,
    }
    with pytest.raises(ValueError, match="extra"):
        geo.load_patch(spec)


def test_load_patch_rejects_bad_dims():
    spec = {
        "n": 4, "m": 1,
        "domain": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5], "nodes": [5, 5]},
        "phi": {"formula": "plane"}, "beta": 1.0,
    }
    with pytest.raises(ValueError):
        geo.load_patch(spec)


def test_strided_sample_deterministic_and_capped():
    lat = geo.Lattice((-0.5, -0.5), (0.5, 0.5), (33, 33))
    p = geo.GraphPatch.from_formula(lat, "plane", None, np.eye(3),
                                    1.0, 0.1, None)
    s1 = p.strided_sample(64)
    s2 = p.strided_sample(64)
    assert np.array_equal(s1, s2)
    assert len(s1) <= 64
