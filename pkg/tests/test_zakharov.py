"""Solver reduction identities, integrator orders and iteration bounds."""

import math

import numpy as np
import pytest

from triconv.zakharov import (IntegratorFailure, SobolevPair, SpatialGrid,
                              ZakharovState, contraction_horizon,
                              duhamel_step, evolve, gauge_invariance,
                              linear_isometry_error, lipschitz_probe,
                              lipschitz_sweep, mass_drift, picard_iterate,
                              random_state, state_norm, wave_reduce,
                              wave_unreduce, _phi1, _phi2)

GRID = SpatialGrid((16, 16, 16))


def test_grid_validation():
    with pytest.raises(ValueError, match="powers of two"):
        SpatialGrid((12, 16, 16))
    with pytest.raises(ValueError, match="lam"):
        SpatialGrid((8, 8, 8), lam=0.0)


def test_state_validation():
    z = np.zeros(GRID.nodes)
    with pytest.raises(ValueError, match="real"):
        ZakharovState(GRID, z.astype(complex), z + 1e-6j, z)
    with pytest.raises(ValueError, match="shape"):
        ZakharovState(GRID, np.zeros((8, 8, 8), complex), z, z)


def test_sobolev_pair_region():
    assert SobolevPair(0.6, 0.1).admissible
    bad = SobolevPair(0.0, -0.6)
    assert not bad.admissible
    with pytest.raises(ValueError, match="sigma > -1/2"):
        bad.require()


# -- half-wave reduction -----------------------------------------------------

def test_reduce_zero_velocity():
    st = random_state(GRID, seed=2)
    st0 = ZakharovState(GRID, st.u, st.n, np.zeros(GRID.nodes))
    plus, minus = wave_reduce(st0)
    assert np.allclose(plus, st0.n, atol=1e-13)
    assert np.allclose(minus, st0.n, atol=1e-13)


def test_reduce_single_cosine_closed_form():
    x = GRID.x_axes()[0][:, None, None] * np.ones(GRID.nodes)
    a, b = 0.8, -0.3
    n = a * np.cos(x)
    nt = b * np.cos(x)
    st = ZakharovState(GRID, np.zeros(GRID.nodes, complex), n, nt)
    plus, minus = wave_reduce(st)
    w = math.sqrt(2.0)  # <(1,0,0)> = sqrt(1 + 1)
    assert np.allclose(plus, (a + 1j * b / w) * np.cos(x), atol=1e-12)
    assert np.allclose(minus, (a - 1j * b / w) * np.cos(x), atol=1e-12)


def test_reduce_round_trip():
    st = random_state(GRID, seed=3)
    n, nt = wave_unreduce(GRID, *wave_reduce(st))
    assert np.max(np.abs(n - st.n)) <= 1e-12
    assert np.max(np.abs(nt - st.nt)) <= 1e-12


# -- integrator ----------------------------------------------------------------

def test_phi_functions():
    assert _phi1(np.array([0.0]))[0] == pytest.approx(1.0)
    assert _phi1(np.array([1.0]))[0] == pytest.approx(math.e - 1.0)
    assert _phi2(np.array([1.0]))[0] == pytest.approx(math.e - 2.0)
    z = np.array([1e-8 + 1e-8j])
    assert _phi1(z)[0] == pytest.approx(1.0, abs=1e-7)
    assert _phi2(z)[0] == pytest.approx(0.5, abs=1e-7)


def test_step_validation():
    st = random_state(GRID, seed=1)
    with pytest.raises(ValueError, match="dt"):
        duhamel_step(st, 0.0)
    with pytest.raises(ValueError, match="order"):
        duhamel_step(st, 1e-3, order=3)


def test_zero_data_stays_zero():
    z = np.zeros(GRID.nodes)
    st = ZakharovState(GRID, z.astype(complex), z, z)
    traj = evolve(st, 0.05, 1e-2)
    assert np.all(traj.u == 0)
    assert np.all(traj.n == 0)
    assert np.all(traj.nt == 0)


def test_linear_single_mode_isometry():
    u = np.zeros(GRID.nodes, complex)
    u[2, 1, 0] = 1.0
    u = np.fft.ifftn(u) * GRID.size
    st = ZakharovState(GRID, u, np.zeros(GRID.nodes), np.zeros(GRID.nodes))
    assert linear_isometry_error(st, 0.2, 1e-3) <= 1e-12


def test_linear_isometry_random():
    st = random_state(GRID, seed=5)
    assert linear_isometry_error(st, 0.1, 1e-3) <= 1e-12


def test_integrator_failure_snapshot():
    big = 1e200 * np.ones(GRID.nodes)
    st = ZakharovState(GRID, big.astype(complex), big, big)
    with pytest.raises(IntegratorFailure) as exc:
        cur = st
        for _ in range(5):
            cur = duhamel_step(cur, 1.0)
    assert isinstance(exc.value.state, ZakharovState)


def test_richardson_order_one_and_two():
    st = random_state(GRID, seed=7, amp_u=5e-2, amp_n=5e-2)
    T = 0.04

    def final(dt, order):
        return evolve(st, T, dt, order=order).u[-1]

    ref = final(T / 256, 2)
    for order, expect in ((1, 2.0), (2, 4.0)):
        e1 = np.max(np.abs(final(T / 8, order) - ref))
        e2 = np.max(np.abs(final(T / 16, order) - ref))
        ratio = e1 / e2
        assert expect / 1.4 <= ratio <= expect * 1.4


def test_evolve_validation_and_stride():
    st = random_state(GRID, seed=1)
    with pytest.raises(ValueError, match="positive"):
        evolve(st, -1.0, 1e-3)
    traj = evolve(st, 0.01, 1e-3, stride=5)
    assert len(traj.times) == 3  # t0 plus steps 5 and 10
    assert traj.times[-1] == pytest.approx(0.01)


# -- conservation and symmetry ---------------------------------------------

def test_mass_drift_linear_run():
    st = random_state(GRID, seed=9)
    traj = evolve(st, 0.1, 1e-3, nonlinear=False)
    assert mass_drift(traj) <= 1e-12


def test_mass_drift_full_run_small():
    st = random_state(GRID, seed=10)
    traj = evolve(st, 0.25, 1e-3)
    assert mass_drift(traj) <= 1e-4


def test_mass_drift_halving_dt():
    st = random_state(GRID, seed=11, amp_u=5e-2, amp_n=5e-2)
    d1 = mass_drift(evolve(st, 0.2, 2e-3))
    d2 = mass_drift(evolve(st, 0.2, 1e-3))
    assert d2 < d1
    assert 1.4 <= d1 / d2 <= 3.0


def test_mass_drift_rejects_zero():
    z = np.zeros(GRID.nodes)
    st = ZakharovState(GRID, z.astype(complex), z, z)
    with pytest.raises(ValueError, match="vanishes"):
        mass_drift(evolve(st, 0.01, 1e-3))


def test_gauge_invariance():
    st = random_state(GRID, seed=12)
    dev = gauge_invariance(st, 0.05, 1e-3, theta=1.1)
    assert dev["n_deviation"] <= 1e-10
    assert dev["absu_deviation"] <= 1e-10


# -- Picard iteration ---------------------------------------------------------

def test_picard_zero_data():
    z = np.zeros(GRID.nodes)
    st = ZakharovState(GRID, z.astype(complex), z, z)
    res = picard_iterate(st, SobolevPair(0.6, 0.1), 0.1, iterations=3)
    assert all(d == 0.0 for d in res.distances)
    assert not res.diverged


def test_picard_contracts_small_data():
    st = random_state(GRID, seed=13)
    res = picard_iterate(st, SobolevPair(0.6, 0.1), 0.1, iterations=5)
    assert res.distances[0] > 0
    assert not res.diverged
    # d_{k+1}/d_k <= 1/2 from the second distance on
    assert all(f <= 0.5 for f in res.factors[1:])


def test_picard_requires_admissible_pair():
    st = random_state(GRID, seed=14)
    with pytest.raises(ValueError, match="admissible region"):
        picard_iterate(st, SobolevPair(0.0, -0.6), 0.1)


def test_picard_iterate_matches_stepper():
    # the converged iterate and the time stepper integrate the same
    # system: compare endpoints on a short horizon
    st = random_state(GRID, seed=15, amp_u=2e-2, amp_n=2e-2)
    res = picard_iterate(st, SobolevPair(0.6, 0.1), 0.05, iterations=6,
                         nodes_per_unit=2560)
    traj = evolve(st, 0.05, 1e-4, order=2)
    du = np.max(np.abs(res.traj.u[-1] - traj.u[-1]))
    scale = np.max(np.abs(traj.u[-1]))
    assert du / scale <= 1e-4


def test_contraction_horizon_reports():
    st = random_state(GRID, seed=16)
    out = contraction_horizon(st, SobolevPair(0.6, 0.1), t_start=0.05,
                              doublings=1, iterations=4)
    assert len(out["records"]) == 2
    for rec in out["records"]:
        assert set(rec) == {"T", "tail_factor", "contracts"}


# -- Lipschitz continuity ------------------------------------------------------

def test_lipschitz_zero_delta_flag():
    st = random_state(GRID, seed=17)
    res = lipschitz_probe(st, SobolevPair(0.6, 0.1), 0.0, 0.1)
    assert res.exact_equal and res.ratio is None


def test_lipschitz_rejects_inadmissible():
    st = random_state(GRID, seed=18)
    with pytest.raises(ValueError, match="admissible region"):
        lipschitz_probe(st, SobolevPair(0.0, -0.6), 1e-3, 0.1)


def test_lipschitz_sweep_stable():
    st = random_state(GRID, seed=19)
    out = lipschitz_sweep(st, SobolevPair(0.6, 0.1), (1e-2, 1e-3, 1e-4),
                          0.1, iterations=4)
    ratios = [r.ratio for r in out]
    assert all(r > 0 for r in ratios)
    assert max(ratios) <= 2.0 * min(ratios)


def test_state_norm_positive():
    st = random_state(GRID, seed=20)
    assert state_norm(st, SobolevPair(0.6, 0.1)) > 0
