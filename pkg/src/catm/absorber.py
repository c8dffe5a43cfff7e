"""Time-dependent absorbing potentials active on the extension interval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .timegrid import TimeGrid


@dataclass(frozen=True)
class InitialState:
    amplitudes: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.amplitudes, complex))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("initial amplitudes must be a non-empty vector")
        norm = np.linalg.norm(c)
        if not np.isclose(norm, 1.0, rtol=0, atol=1e-9):
            raise ValueError(f"initial state must be normalized, |c| = {norm}")
        c.flags.writeable = False
        object.__setattr__(self, "amplitudes", c)

    @classmethod
    def basis(cls, index: int, level_count: int) -> "InitialState":
        c = np.zeros(level_count, complex)
        c[index] = 1.0
        return cls(c)

    @property
    def level_count(self) -> int:
        return self.amplitudes.size

    @property
    def basis_index(self) -> int | None:
        """Index of the single occupied level, or None for a superposition."""
        nz = np.flatnonzero(self.amplitudes != 0)
        return int(nz[0]) if nz.size == 1 else None


@dataclass(frozen=True)
class AbsorbingPotential:
    grid: TimeGrid
    matrices: np.ndarray = field(repr=False)
    amplitude: float
    area: float
    # set when a superposition with c_1 = 0 was handled by absorbing level 0
    swapped: bool = False

    @property
    def level_count(self) -> int:
        return self.matrices.shape[1]


def envelope(grid: TimeGrid, v0: float) -> tuple[np.ndarray, float]:
    """Sampled ``V0 sin^2(pi (t - T) / (T' - T))`` on ``(T, T')`` and its exact area."""
    if not v0 >= 0:
        raise ValueError(f"absorbing amplitude must be non-negative, got {v0}")
    t = grid.points
    T, Tp = grid.t_physical, grid.t_total
    # compare indices rather than times so the physical samples are exactly zero
    ext = np.arange(grid.n_points) > grid.index_physical_end
    env = np.where(ext, v0 * np.sin(np.pi * (t - T) / (Tp - T)) ** 2, 0.0)
    return env, 0.5 * v0 * (Tp - T)


def single_channel_potential(grid: TimeGrid, keep: int, v0: float, level_count: int) -> AbsorbingPotential:
    """``-i V_opt(t)`` on every level except ``keep``."""
    if not 0 <= keep < level_count:
        raise IndexError(f"kept level {keep} out of range for {level_count} levels")
    env, area = envelope(grid, v0)
    diag = np.ones(level_count)
    diag[keep] = 0.0
    V = np.zeros((grid.n_points, level_count, level_count), complex)
    idx = np.arange(level_count)
    V[:, idx, idx] = -1j * env[:, None] * diag
    V.flags.writeable = False
    return AbsorbingPotential(grid, V, float(v0), area)


def reverse_phase_integral(values, grid: TimeGrid) -> np.ndarray:
    """Trapezoid approximation of ``int_{t_i}^{T'} f dt`` for every sample.

    The last segment ``[t_N, T']`` closes on ``f(T') = f(0)``.
    """
    f = np.asarray(values)
    closed = np.append(f, f[0])
    seg = 0.5 * grid.spacing * (closed[:-1] + closed[1:])
    return np.cumsum(seg[::-1])[::-1]


def projector(c1, c2, phase_difference) -> np.ndarray:
    """``[[0, 0], [-(c2/c1) exp(i phase), 1]]`` for each sampled phase."""
    phase_difference = np.asarray(phase_difference)
    P = np.zeros(phase_difference.shape + (2, 2), complex)
    P[..., 1, 0] = -(c2 / c1) * np.exp(1j * phase_difference)
    P[..., 1, 1] = 1.0
    return P


def two_state_projector_potential(grid: TimeGrid, initial: InitialState, delta1, delta2, v0: float) -> AbsorbingPotential:
    """Potential ``-i V_opt(t) Pi(t)`` whose kernel tracks the superposition ``initial``.

    ``delta1`` and ``delta2`` are the diagonal entries of H sampled on the full
    grid (complex values allowed).
    """
    if initial.level_count != 2:
        raise ValueError(
            f"the projector potential is defined for two levels, got {initial.level_count}"
        )
    c1, c2 = initial.amplitudes
    if c1 == 0:
        pot = single_channel_potential(grid, 1, v0, 2)
        return AbsorbingPotential(grid, pot.matrices, pot.amplitude, pot.area, swapped=True)
    env, area = envelope(grid, v0)
    phase = reverse_phase_integral(np.asarray(delta2) - np.asarray(delta1), grid)
    V = -1j * env[:, None, None] * projector(c1, c2, phase)
    V.flags.writeable = False
    return AbsorbingPotential(grid, V, float(v0), area)


def absorbing_potential(grid: TimeGrid, initial: InitialState, diagonals, v0: float) -> AbsorbingPotential:
    """Pick the single-channel form for basis states, the projector form otherwise."""
    keep = initial.basis_index
    if keep is not None:
        return single_channel_potential(grid, keep, v0, initial.level_count)
    diagonals = np.asarray(diagonals)
    return two_state_projector_potential(grid, initial, diagonals[:, 0], diagonals[:, 1], v0)
