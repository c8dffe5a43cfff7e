"""Constrained adiabatic trajectory method: time propagation as a single
non-Hermitian Floquet eigenproblem."""

from .absorber import AbsorbingPotential, InitialState, absorbing_potential
from .eig import ConvergenceError, DenseEigensolver, EigenPair, eig_dense, refine_pair
from .floquet import FloquetMatrix, assemble
from .models import (
    CustomSampled,
    FormatError,
    SampledHamiltonian,
    ThreeLevelIntuitive,
    ThreeLevelStirap,
    TwoLevelRWA,
    load_custom_samples,
    sample_hamiltonian,
)
from .reference import ReferenceTrajectory, converged_reference, expm, propagate, propagator_matrix
from .solver import CatmSolution, DegenerateConnectionError, solve
from .timegrid import SIGNED, UNSIGNED, TimeGrid, build_grid, derivative_operator

__version__ = "0.1.0"
