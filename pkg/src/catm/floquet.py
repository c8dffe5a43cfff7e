"""Dense Floquet matrix on the (time DVR) x (level) product basis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .absorber import AbsorbingPotential
from .models import SampledHamiltonian
from .timegrid import SIGNED, TimeGrid, derivative_operator


@dataclass(frozen=True)
class FloquetMatrix:
    """Row ``i * L + j`` holds time sample ``i`` and level ``j`` (both 0-based)."""

    matrix: np.ndarray = field(repr=False)
    level_count: int
    grid: TimeGrid
    convention: str = SIGNED

    def index(self, time_index: int, level: int) -> int:
        return time_index * self.level_count + level

    def unpack(self, vector) -> np.ndarray:
        """Reshape a Floquet vector to ``(N, L)`` samples."""
        return np.asarray(vector).reshape(self.grid.n_points, self.level_count)

    @property
    def shape(self):
        return self.matrix.shape


def assemble(hamiltonian: SampledHamiltonian, potential: AbsorbingPotential | None = None,
             convention: str = SIGNED) -> FloquetMatrix:
    """Build ``D kron I_L + blockdiag(H(t_i) + V(t_i))``."""
    grid = hamiltonian.grid
    L = hamiltonian.level_count
    blocks = np.asarray(hamiltonian.matrices, complex)
    if potential is not None:
        if potential.grid != grid:
            raise ValueError("Hamiltonian and absorbing potential live on different grids")
        if potential.level_count != L:
            raise ValueError(
                f"level count mismatch: Hamiltonian {L}, potential {potential.level_count}"
            )
        blocks = blocks + potential.matrices
    N = grid.n_points
    D = derivative_operator(grid, convention).matrix
    A = np.kron(D, np.eye(L))
    A4 = A.reshape(N, L, N, L)
    i = np.arange(N)
    A4[i, :, i, :] += blocks
    return FloquetMatrix(A, L, grid, convention)


def write_matrix(path, floquet: FloquetMatrix) -> None:
    """Debug dump: one matrix row per line as space-separated ``re,im`` pairs."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in floquet.matrix:
            fh.write(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")
