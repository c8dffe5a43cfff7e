import numpy as np
import pytest

from catm.absorber import InitialState, absorbing_potential, single_channel_potential
from catm.floquet import assemble, write_matrix
from catm.models import SampledHamiltonian, TwoLevelRWA, sample_hamiltonian
from catm.timegrid import UNSIGNED, build_grid, derivative_operator, fourier_frequencies


def _constant(grid, H):
    return SampledHamiltonian(grid, np.broadcast_to(np.asarray(H, complex), (grid.n_points,) + np.shape(H)).copy())


def test_single_level_spectrum():
    g = build_grid(10, 1, 2)
    F = assemble(_constant(g, [[1.5]]))
    ev = np.sort(np.linalg.eigvals(F.matrix).real)
    np.testing.assert_allclose(ev, np.sort(1.5 + fourier_frequencies(g)), atol=1e-12)


def test_zero_hamiltonian_is_kron():
    g = build_grid(6, 1, 2)
    F = assemble(_constant(g, np.zeros((2, 2))))
    np.testing.assert_array_equal(F.matrix, np.kron(derivative_operator(g).matrix, np.eye(2)))


def test_corner_layout():
    g = build_grid(8, 1, 2)
    H = sample_hamiltonian(TwoLevelRWA(10, 10), g)
    V = absorbing_potential(g, InitialState.basis(0, 2), H.diagonals, 40)
    F = assemble(H, V)
    D = derivative_operator(g).matrix
    A = F.matrix
    for i in range(3):
        for j in range(2):
            for ip in range(3):
                for jp in range(2):
                    want = D[i, ip] * (j == jp) + (i == ip) * (H.matrices[i] + V.matrices[i])[j, jp]
                    assert A[F.index(i, j), F.index(ip, jp)] == pytest.approx(want, abs=1e-14)
    # coupling of t_2 sits next to the diagonal
    assert A[2, 3] == pytest.approx(H.matrices[1][0, 1] + D[1, 1] * 0)
    # absorption appears on level 1 in the extension
    assert A[F.index(6, 1), F.index(6, 1)].imag == pytest.approx(-40)


def test_trace_identity():
    g = build_grid(12, 1, 2)
    H = sample_hamiltonian(TwoLevelRWA(3, 4), g)
    V = single_channel_potential(g, 0, 5, 2)
    A = assemble(H, V).matrix
    want = np.trace(H.matrices + V.matrices, axis1=1, axis2=2).sum() + 2 * fourier_frequencies(g).sum()
    assert np.trace(A) == pytest.approx(want, abs=1e-10)
    assert fourier_frequencies(g).sum() == pytest.approx(-g.omega0 * 12 / 2)


def test_hermitian_without_absorber():
    g = build_grid(16, 1, 2)
    A = assemble(sample_hamiltonian(TwoLevelRWA(7, 3, 0.2), g)).matrix
    assert np.linalg.norm(A - A.conj().T) <= 1e-10 * np.linalg.norm(A)


def test_spectrum_shift():
    g = build_grid(8, 1, 2)
    H = sample_hamiltonian(TwoLevelRWA(5, 5), g)
    V = single_channel_potential(g, 0, 10, 2)
    shifted = SampledHamiltonian(g, H.matrices + (0.7 - 0.2j) * np.eye(2))
    a = np.sort_complex(np.linalg.eigvals(assemble(H, V).matrix))
    b = np.sort_complex(np.linalg.eigvals(assemble(shifted, V).matrix))
    np.testing.assert_allclose(b, a + 0.7 - 0.2j, atol=1e-9)


def test_unsigned_convention_changes_the_matrix():
    g = build_grid(8, 1, 2)
    H = sample_hamiltonian(TwoLevelRWA(5, 5), g)
    assert not np.allclose(assemble(H).matrix, assemble(H, convention=UNSIGNED).matrix)


def test_mismatches_rejected():
    g = build_grid(8, 1, 2)
    H = sample_hamiltonian(TwoLevelRWA(5, 5), g)
    with pytest.raises(ValueError):
        assemble(H, single_channel_potential(build_grid(10, 1, 2), 0, 1, 2))
    with pytest.raises(ValueError):
        assemble(H, single_channel_potential(g, 0, 1, 3))


def test_matrix_dump(tmp_path):
    g = build_grid(4, 1, 2)
    F = assemble(sample_hamiltonian(TwoLevelRWA(5, 5), g))
    write_matrix(tmp_path / "m.txt", F)
    rows = (tmp_path / "m.txt").read_text().splitlines()
    back = np.array([[complex(*map(float, tok.split(","))) for tok in r.split()] for r in rows])
    np.testing.assert_array_equal(back, F.matrix)
