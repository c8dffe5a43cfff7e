import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catm.absorber import InitialState
from catm.analysis import max_population_deviation
from catm.eig import EigenPair
from catm.models import CustomSampled, sample_hamiltonian
from catm.solver import (
    DegenerateConnectionError,
    family_mask,
    in_zone,
    reconstruct,
    select_connected,
    solve,
)
from catm.timegrid import build_grid

from cases import GROUND2, GROUND3, MODEL_I, STIRAP, SUPERPOSITION, model_i, model_i_reference


def _pair(value, vector):
    v = np.asarray(vector, complex)
    return EigenPair(complex(value), v / np.linalg.norm(v), 0.0)


def test_unique_minimum():
    g = build_grid(2, 1, 2)
    pairs = [_pair(w, [1, 0, 0, 0]) for w in (1 - 0.001j, 2 - 5j, 3 - 5.1j)]
    assert select_connected(pairs, GROUND2, g, 2).value == 1 - 0.001j


def test_tie_goes_to_overlap():
    g = build_grid(2, 1, 2)
    a = _pair(1 - 0.5j, [0.1, 1, 0, 0])
    b = _pair(2 - 0.5j, [1, 0.1, 0, 0])
    assert select_connected([a, b], GROUND2, g, 2) is b
    assert select_connected([a, b], InitialState.basis(1, 2), g, 2) is a


def test_zone_filter_excludes_far_values():
    g = build_grid(2, 1, 2)
    far = _pair(100 - 0.1j, [1, 0, 0, 0])
    near = _pair(0.5 - 0.7j, [1, 0, 0, 0])
    assert select_connected([far, near], GROUND2, g, 2) is far
    assert select_connected([far, near], GROUND2, g, 2, center=0.0) is near


def test_zone_and_family_masks():
    w0 = np.pi
    vals = np.array([0.1 - 1j, 0.1 + w0 - 1j, 0.1 + 2.5 * w0 - 1j, 0.1 - 2 * w0 - 1j])
    np.testing.assert_array_equal(in_zone(vals, 0.0, w0), [True, False, False, False])
    np.testing.assert_array_equal(family_mask(vals, vals[0], w0), [True, True, False, True])


def test_perfect_connection():
    g = build_grid(3, 1, 2)
    c = SUPERPOSITION.amplitudes
    lam = np.concatenate([2j * c, [0.3, 0.1], [0.2, 0.2]])
    psi, res, s = reconstruct(EigenPair(0.5 + 0j, lam, 0.0), g, 2, SUPERPOSITION)
    assert res == pytest.approx(0, abs=1e-15)
    assert s == pytest.approx(1 / 2j)
    np.testing.assert_array_equal(psi[0], c)
    np.testing.assert_allclose(psi[1], s * np.exp(-0.5j * g.points[1]) * np.array([0.3, 0.1]))


def test_degenerate_connection():
    g = build_grid(2, 1, 2)
    with pytest.raises(DegenerateConnectionError):
        reconstruct(EigenPair(0j, np.array([0, 0, 1, 0], complex), 0.0), g, 2, GROUND2)


def test_length_mismatch():
    g = build_grid(4, 1, 2)
    with pytest.raises(ValueError):
        reconstruct(EigenPair(0j, np.ones(6, complex), 0.0), g, 2, GROUND2)


def _decoupled(d1, d2, n=32):
    g = build_grid(n, 1, 2)
    m = CustomSampled(np.broadcast_to(np.diag([d1, d2]).astype(complex), (n, 2, 2)).copy(), 1.0, 2.0)
    return m, g


def test_decoupled_closed_form():
    m, g = _decoupled(0.3, 1.1)
    sol = solve(m, GROUND2, 20, g)
    assert sol.omega == pytest.approx(0.3, abs=1e-8)
    expected = np.exp(-0.3j * g.points)[:, None] * np.array([1, 0])
    np.testing.assert_allclose(sol.trajectory, expected, atol=1e-8)
    assert sol.connection_residual <= 1e-8


@given(st.integers(-3, 3))
def test_brillouin_immunity_exact_shift(k):
    sol = model_i(40.0, 32)
    g = sol.grid
    lam = sol.floquet_vector * np.exp(1j * k * g.omega0 * g.points)[:, None]
    shifted = EigenPair(sol.omega + k * g.omega0, lam.ravel(), 0.0)
    psi, res, _ = reconstruct(shifted, g, 2, GROUND2)
    np.testing.assert_allclose(psi, sol.trajectory, atol=1e-12)
    assert res == pytest.approx(sol.connection_residual, abs=1e-12)


@pytest.mark.slow
def test_brillouin_immunity_of_computed_neighbours():
    from catm.eig import DenseEigensolver
    from catm.floquet import assemble

    sol = model_i(40.0, 512)
    g = sol.grid
    es = DenseEigensolver(assemble(sol.hamiltonian, sol.potential).matrix)
    for k in (-1, 1):
        pair = es.vector(es.eigenvalues[np.argmin(np.abs(es.eigenvalues - (sol.omega + k * g.omega0)))])
        assert abs(pair.value - sol.omega - k * g.omega0) < 1e-6
        psi, _, _ = reconstruct(pair, g, 2, GROUND2)
        assert np.max(np.abs(psi - sol.trajectory)) <= 1e-8


@pytest.mark.slow
def test_norm_does_not_grow():
    # the excess over 1 tracks the connection residual, so this needs a fine grid
    sol = model_i(40.0, 512)
    norms = np.linalg.norm(sol.physical_trajectory, axis=1)
    assert np.all(norms <= 1 + 1e-6)


def test_residual_decays_with_area():
    assert model_i(40.0, 128).connection_residual < model_i(10.0, 128).connection_residual


def test_no_absorber_fails_to_connect():
    assert model_i(0.0, 64).connection_residual > 0.1


def test_model_i_matches_reference():
    assert max_population_deviation(model_i(40.0, 128), model_i_reference()) <= 1e-3


def test_depopulation_floor():
    # strong adiabatic passage: the true |a_1(T)| is far below the floor
    from catm.models import TwoLevelRWA
    from catm.reference import converged_reference

    m = TwoLevelRWA(60, 60)
    ref = converged_reference(m, GROUND2, tol=1e-8)
    sol = solve(m, GROUND2, 10, build_grid(256, 1, 2))
    floor = np.exp(-0.5 * sol.potential.area)
    assert abs(ref.final_state[0]) < floor
    assert abs(sol.final_state[0]) >= floor * (1 - 1e-2)


def test_state_at_matches_grid_samples():
    sol = model_i(40.0, 64)
    np.testing.assert_allclose(sol.state_at(sol.times[1:10]), sol.trajectory[1:10], atol=1e-12)


def test_superposition_needs_two_levels():
    g = build_grid(16, 1.5, 2.5)
    with pytest.raises(ValueError):
        solve(STIRAP, InitialState([0.6, 0.8, 0]), 10, g)
    with pytest.raises(ValueError):
        solve(STIRAP, GROUND2, 10, g)


def test_isolation_flag_warns(caplog):
    m, g = _decoupled(0.3, 1.1, 16)
    with caplog.at_level(logging.WARNING, logger="catm.solver"):
        sol = solve(m, GROUND2, 0, g)
    assert not sol.isolated
    assert "not isolated" in caplog.text


def test_solution_fields():
    sol = model_i(40.0, 64)
    assert sol.spectrum.size == 128
    assert sol.spectrum[sol.selected_index] == sol.omega
    assert sol.eigen_residual <= 1e-8
    np.testing.assert_array_equal(sol.trajectory[0], GROUND2.amplitudes)
    H = sample_hamiltonian(MODEL_I, sol.grid)
    np.testing.assert_array_equal(H.matrices, sol.hamiltonian.matrices)
