"""Constrained-Floquet-state propagation.

The absorbing potential forces one Floquet eigenvector to connect to the
initial state, so the whole trajectory follows from a single eigenpair:
``Psi(t_i) = s exp(-i omega t_i) lambda(t_i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .absorber import AbsorbingPotential, InitialState, absorbing_potential
from .eig import DenseEigensolver, EigenPair
from .floquet import FloquetMatrix, assemble
from .models import Model, SampledHamiltonian, sample_hamiltonian
from .timegrid import SIGNED, TimeGrid

log = logging.getLogger(__name__)

TIE_RTOL = 1e-8
FAMILY_ATOL = 1e-6


class DegenerateConnectionError(ValueError):
    """The selected Floquet vector has no weight at t = 0."""


@dataclass(frozen=True)
class CatmSolution:
    omega: complex
    trajectory: np.ndarray = field(repr=False)
    connection_residual: float
    spectrum: np.ndarray = field(repr=False)
    selected_index: int
    grid: TimeGrid = field(repr=False)
    hamiltonian: SampledHamiltonian = field(repr=False)
    potential: AbsorbingPotential = field(repr=False)
    initial: InitialState = field(repr=False)
    floquet_vector: np.ndarray = field(repr=False)
    scale: complex = 1.0
    zone_center: float = 0.0
    eigen_residual: float = 0.0
    isolated: bool = True
    matrix_norm: float = 1.0

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    @property
    def level_count(self) -> int:
        return self.trajectory.shape[1]

    @property
    def physical_trajectory(self) -> np.ndarray:
        return self.trajectory[: self.grid.index_physical_end + 1]

    @property
    def final_state(self) -> np.ndarray:
        """State at the last grid point inside the physical interval."""
        return self.trajectory[self.grid.index_physical_end]

    @property
    def zone_spectrum(self) -> np.ndarray:
        return self.spectrum[in_zone(self.spectrum, self.zone_center, self.grid.omega0)]

    def state_at(self, t) -> np.ndarray:
        """Trigonometric interpolation of the connected state at arbitrary times."""
        t = np.atleast_1d(np.asarray(t, float))
        lam = self.floquet_vector
        N = self.grid.n_points
        coeffs = np.fft.fft(lam, axis=0) / N
        k = np.arange(N)
        k = np.where(k < N // 2, k, k - N) * self.grid.omega0
        lam_t = np.exp(1j * np.outer(t, k)) @ coeffs
        return self.scale * np.exp(-1j * self.omega * t)[:, None] * lam_t


def zone_center(hamiltonian: SampledHamiltonian) -> float:
    """Mean real diagonal energy over the period; the reference zone is centred on it."""
    diag = hamiltonian.diagonals
    return float(np.mean(diag.real))


def in_zone(values, center: float, omega0: float, half_width: float | None = None) -> np.ndarray:
    """Mask of eigenvalues whose real part lies within ``half_width`` of ``center``.

    The default half-width of one ``omega0`` keeps at least one member of
    every well-resolved Floquet family and drops the spurious eigenvalues
    that pile up at the edges of the Fourier band.
    """
    half_width = omega0 if half_width is None else half_width
    return np.abs(np.asarray(values).real - center) <= half_width


def family_mask(values, omega: complex, omega0: float, atol: float = FAMILY_ATOL) -> np.ndarray:
    """Mask of values equal to ``omega + k omega0`` for some integer k."""
    values = np.asarray(values)
    k = np.round((values.real - omega.real) / omega0)
    return np.abs(values - (omega + k * omega0)) <= atol


def _overlap(pair: EigenPair, initial: InitialState, level_count: int) -> float:
    lam0 = pair.vector[:level_count]
    nrm = np.linalg.norm(lam0)
    if nrm == 0:
        return 0.0
    return abs(np.vdot(initial.amplitudes, lam0)) / nrm


def select_connected(pairs, initial: InitialState, grid: TimeGrid, level_count: int,
                     center: float | None = None, half_width: float | None = None) -> EigenPair:
    """Pick the eigenpair with the smallest ``|Im omega|``.

    When ``center`` is given only pairs inside the reference zone are
    considered. Ties (within ``1e-8`` of the spectral radius) go to the pair
    whose ``t = 0`` slice overlaps most with ``initial``, then to the one
    closest to the zone centre.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no eigenpairs to select from")
    if center is not None:
        values = np.array([p.value for p in pairs])
        mask = in_zone(values, center, grid.omega0, half_width)
        if mask.any():
            pairs = [p for p, m in zip(pairs, mask) if m]
    values = np.array([p.value for p in pairs])
    radius = max(np.max(np.abs(values)), np.finfo(float).tiny)
    im = np.abs(values.imag)
    tied = np.flatnonzero(im <= im.min() + TIE_RTOL * radius)
    ref = 0.0 if center is None else center
    best = min(
        tied,
        key=lambda i: (-round(_overlap(pairs[i], initial, level_count), 10), abs(values[i].real - ref)),
    )
    return pairs[best]


def reconstruct(pair: EigenPair, grid: TimeGrid, level_count: int, initial: InitialState):
    """Trajectory ``Psi(t_i)``, connection residual and scale factor from one eigenpair."""
    N = grid.n_points
    if pair.vector.size != N * level_count:
        raise ValueError(
            f"vector length {pair.vector.size} does not match {N} points x {level_count} levels"
        )
    lam = pair.vector.reshape(N, level_count)
    lam0 = lam[0]
    nrm2 = np.vdot(lam0, lam0).real
    if np.sqrt(nrm2) < 1e-12:
        raise DegenerateConnectionError("selected Floquet state has no weight at t = 0")
    c = initial.amplitudes
    s = np.vdot(lam0, c) / nrm2
    residual = float(np.linalg.norm(s * lam0 - c))
    psi = s * np.exp(-1j * pair.value * grid.points)[:, None] * lam
    psi[0] = c
    return psi, residual, s


def _as_sampled(source, grid: TimeGrid) -> SampledHamiltonian:
    if isinstance(source, SampledHamiltonian):
        if source.grid != grid:
            raise ValueError("sampled Hamiltonian lives on a different grid")
        return source
    if isinstance(source, Model):
        return sample_hamiltonian(source, grid)
    raise TypeError(f"expected a Model or SampledHamiltonian, got {type(source).__name__}")


def solve(model, initial: InitialState, v0: float, grid: TimeGrid,
          convention: str = SIGNED, backend: str = "native") -> CatmSolution:
    """Run the full pipeline: sample, absorb, assemble, diagonalize, select, reconstruct."""
    H = _as_sampled(model, grid)
    L = H.level_count
    if initial.level_count != L:
        raise ValueError(f"initial state has {initial.level_count} levels, model has {L}")
    if initial.basis_index is None and L > 2:
        raise ValueError("superposition initial states are supported for two levels only")
    V = absorbing_potential(grid, initial, H.diagonals, v0)
    F = assemble(H, V, convention)
    return solve_floquet(F, H, V, initial, backend)


def solve_floquet(F: FloquetMatrix, H: SampledHamiltonian, V: AbsorbingPotential,
                  initial: InitialState, backend: str = "native") -> CatmSolution:
    grid = F.grid
    L = F.level_count
    solver = DenseEigensolver(F.matrix, backend)
    spectrum = solver.eigenvalues
    center = zone_center(H)
    zone = np.flatnonzero(in_zone(spectrum, center, grid.omega0))
    if zone.size == 0:
        zone = np.arange(spectrum.size)
    radius = max(np.max(np.abs(spectrum)), np.finfo(float).tiny)
    im = np.abs(spectrum[zone].imag)
    candidates = zone[im <= im.min() + TIE_RTOL * radius]
    pairs = [solver.vector(spectrum[i]) for i in candidates]
    pair = select_connected(pairs, initial, grid, L, center)
    selected = int(candidates[[p is pair for p in pairs].index(True)])
    psi, residual, s = reconstruct(pair, grid, L, initial)

    others = spectrum[zone][~family_mask(spectrum[zone], pair.value, grid.omega0)]
    isolated = True
    if others.size:
        gap = np.min(np.abs(others.imag)) - abs(pair.value.imag)
        isolated = bool(gap >= 10 * pair.residual * solver.norm)
        if not isolated:
            log.warning("connected eigenvalue %s is not isolated (gap %.3e)", pair.value, gap)
    return CatmSolution(
        omega=complex(pair.value),
        trajectory=psi,
        connection_residual=residual,
        spectrum=spectrum,
        selected_index=selected,
        grid=grid,
        hamiltonian=H,
        potential=V,
        initial=initial,
        floquet_vector=pair.vector.reshape(grid.n_points, L),
        scale=complex(s),
        zone_center=center,
        eigen_residual=pair.residual,
        isolated=isolated,
        matrix_norm=solver.norm,
    )
