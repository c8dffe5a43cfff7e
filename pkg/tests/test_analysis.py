import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catm.analysis import (
    check_connected_im,
    check_pair_relation,
    error_metrics,
    fold,
    line_fit,
    non_connected,
    phase_error_metrics,
    populations_phases,
    scan_n,
    scan_v0,
    wrap_angle,
)
from catm.models import CustomSampled, TwoLevelRWA
from catm.reference import converged_reference
from catm.solver import solve
from catm.timegrid import build_grid

from cases import GROUND2, MODEL_I, STIRAP, GROUND3, model_i, model_i_reference


def test_populations_phases_basis():
    p, b = populations_phases(np.array([[1, 0]]))
    np.testing.assert_array_equal(p, [[1, 0]])
    assert b[0, 0] == 0


def test_populations_phases_imaginary():
    p, b = populations_phases(np.array([[0, 1j]]))
    assert p[0, 1] == 1 and b[0, 1] == pytest.approx(np.pi / 2)


def test_phase_range_includes_pi():
    _, b = populations_phases(np.array([[-1 - 0j, complex(-1, -0.0)]]))
    assert np.all(b == np.pi)
    assert wrap_angle(-np.pi) == np.pi and wrap_angle(3 * np.pi) == np.pi


def test_empty_trajectory():
    with pytest.raises(ValueError):
        populations_phases(np.zeros((0, 2)))


def _traj(seed, n=40):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


def test_identical_inputs():
    a = _traj(0)
    rep = error_metrics(a, a, np.linspace(0, 1, 40))
    assert rep.eps_p == 0 and rep.eps_a == 0


def test_constant_population_offset():
    t = np.linspace(0, 1, 33)
    ref = np.stack([np.full(33, np.sqrt(0.5)), np.full(33, np.sqrt(0.5))], 1).astype(complex)
    catm = np.stack([np.full(33, np.sqrt(0.51)), np.full(33, np.sqrt(0.49))], 1).astype(complex)
    assert error_metrics(catm, ref, t).eps_p == pytest.approx(0.01, abs=1e-15)


def test_grid_mismatch():
    with pytest.raises(ValueError):
        error_metrics(_traj(0, 10), _traj(1, 11), np.linspace(0, 1, 10))
    with pytest.raises(ValueError):
        error_metrics(_traj(0, 10), _traj(1, 10), np.linspace(0, 1, 9))


@given(st.integers(0, 2**31))
def test_metric_symmetry(seed):
    a, b = _traj(seed), _traj(seed + 1)
    t = np.linspace(0, 1, 40)
    assert error_metrics(a, b, t).eps_p == -error_metrics(b, a, t).eps_p


@given(st.integers(0, 2**31), st.integers(0, 39), st.integers(-3, 3))
def test_angle_wrap_invariance(seed, index, turns):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 40)
    pa, pb = rng.uniform(-np.pi, np.pi, 40), rng.uniform(-np.pi, np.pi, 40)
    shifted = pa.copy()
    shifted[index] += 2 * np.pi * turns
    assert phase_error_metrics(shifted, pb, t) == pytest.approx(phase_error_metrics(pa, pb, t), abs=1e-12)
    # the state-based metric sees the same wrapped differences
    a = np.exp(1j * pa)[:, None] * [1, 0]
    b = np.exp(1j * pb)[:, None] * [1, 0]
    assert error_metrics(a, b, t).eps_a == pytest.approx(phase_error_metrics(pa, pb, t), abs=1e-12)


def _decoupled(d1, d2, n=32):
    g = build_grid(n, 1, 2)
    m = CustomSampled(np.broadcast_to(np.diag([d1, d2]).astype(complex), (n, 2, 2)).copy(), 1.0, 2.0)
    return m, g


def test_connected_im_decoupled():
    m, g = _decoupled(0.3, 1.1)
    sol = solve(m, GROUND2, 20, g)
    ref = converged_reference(m, GROUND2, start=64)
    assert check_connected_im(sol, ref) <= 1e-8


def test_connected_im_not_applicable():
    # a resonant pi pulse empties level 0 completely (|a_1(T)|^2 ~ 1e-32)
    m = TwoLevelRWA(np.pi, 0)
    ref = converged_reference(m, GROUND2, start=64)
    assert abs(ref.final_state[0]) ** 2 < 1e-24
    sol = solve(m, GROUND2, 40, build_grid(32, 1, 2))
    assert check_connected_im(sol, ref) is None


def test_pair_relation_decoupled():
    # the absorbed channel's profile spans exp(-area); N = 128 resolves it
    m, g = _decoupled(0.3, 1.1, 128)
    sol = solve(m, GROUND2, 20, g)
    pc = check_pair_relation(sol)
    assert pc.observed == pytest.approx(-sol.potential.area / g.t_total, abs=1e-8)
    assert pc.residual <= 1e-8 and not pc.flagged


def test_pair_relation_zero_area_is_flagged():
    m, g = _decoupled(0.3, 1.1)
    pc = check_pair_relation(solve(m, GROUND2, 0, g))
    assert pc.flagged


def test_pair_relation_needs_two_levels():
    sol = solve(STIRAP, GROUND3, 40, build_grid(32, 1.5, 2.5))
    with pytest.raises(ValueError):
        check_pair_relation(sol)


def test_vector_fallback_agrees_with_value_exclusion():
    sol = model_i(40.0, 32)
    assert non_connected(sol, by_vector=True) == non_connected(sol)


def test_isolation_keeps_selection_under_small_perturbation():
    a = model_i(40.0, 64)
    b = solve(MODEL_I, GROUND2, 40.0 * (1 + 1e-6), a.grid)
    assert a.isolated and b.isolated
    assert abs(b.omega - a.omega) < 1e-4
    assert b.selected_index == a.selected_index


def test_fold():
    np.testing.assert_allclose(fold([-0.5, 3.5, 1.0 + 2j], np.pi), [np.pi - 0.5, 3.5 - np.pi, 1.0])


def test_scan_v0_rows_in_order_and_errors_recorded():
    g = build_grid(32, 1, 2)
    rows = scan_v0(MODEL_I, GROUND2, [40, -1, 10], g, model_i_reference())
    assert [r.v0 for r in rows] == [40, -1, 10]
    assert rows[1].error and not rows[0].error and not rows[2].error
    assert rows[0].area == 20
    with pytest.raises(ValueError):
        scan_v0(MODEL_I, GROUND2, [], g, model_i_reference())


def test_scan_n_under_resolved_grid():
    rows = scan_n(STIRAP, GROUND3, 40, [16, 64], 2.5)
    p16, p64 = rows[0].populations, rows[1].populations
    assert np.max(np.abs(p16 - p64) / p64) > 1e-2


def test_line_fit():
    slope, icpt, r = line_fit([0, 1, 2], [1, 3, 5])
    assert slope == pytest.approx(2) and icpt == pytest.approx(1) and r == pytest.approx(1)


@pytest.mark.slow
def test_error_between_scan_endpoints():
    ref = model_i_reference()
    from catm.analysis import compare

    eps = {v: abs(compare(model_i(v), ref).eps_p) for v in (10.0, 20.0, 35.0)}
    assert eps[35.0] < eps[20.0] < eps[10.0]
