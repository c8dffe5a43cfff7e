"""Driven few-level Hamiltonians in the rotating-wave frame.

All quantities use hbar = 1, so matrices are angular frequencies. Each model
covers the physical interval ``[0, T]`` and is continued onto ``(T, T')``
with zero couplings and diagonal entries ramped back to their ``t = 0``
values, which makes the sampled Hamiltonian ``T'``-periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .timegrid import TimeGrid

_DURATION_RTOL = 1e-9


class FormatError(ValueError):
    """Malformed custom-sample file."""


def extension_ramp(t, t_physical, t_total, start, end):
    """Smooth ramp from ``start`` at ``t_physical`` to ``end`` at ``t_total``.

    Uses ``sin^2(pi (t - T) / (2 (T' - T)))`` so the ramp has zero slope at
    ``t_physical`` and reaches ``end`` exactly at ``t_total``.
    """
    s = np.sin(0.5 * np.pi * (np.asarray(t, float) - t_physical) / (t_total - t_physical)) ** 2
    return start + (end - start) * s


def _sin2_pulse(t, t_on, width, amplitude):
    """``amplitude * sin^2(pi (t - t_on) / width)`` on ``[t_on, t_on + width]``, zero elsewhere."""
    inside = (t >= t_on) & (t <= t_on + width)
    return np.where(inside, amplitude * np.sin(np.pi * (t - t_on) / width) ** 2, 0.0)


class Model:
    """Base class: subclasses provide ``hamiltonian(t, t_total)``."""

    level_count: int
    t_physical: float

    def hamiltonian(self, t, t_total: float) -> np.ndarray:
        raise NotImplementedError

    def check_grid(self, grid: TimeGrid) -> None:
        if not math.isclose(grid.t_physical, self.t_physical, rel_tol=_DURATION_RTOL):
            raise ValueError(
                f"{type(self).__name__} has physical duration {self.t_physical}, "
                f"grid has {grid.t_physical}"
            )


@dataclass(frozen=True)
class TwoLevelRWA(Model):
    """``H = [[0, Omega(t)], [Omega(t), Delta(t)]]`` with
    ``Omega = rabi sin^2(pi t / T)`` and ``Delta = detuning cos(pi t / T + phase)``."""

    rabi: float
    detuning: float
    phase: float = 0.0
    duration: float = 1.0

    level_count = 2

    @property
    def t_physical(self) -> float:
        return self.duration

    def hamiltonian(self, t, t_total):
        t = np.atleast_1d(np.asarray(t, float))
        T = self.duration
        inside = t <= T
        coupling = np.where(inside, self.rabi * np.sin(np.pi * t / T) ** 2, 0.0)
        det0 = self.detuning * math.cos(self.phase)
        detT = self.detuning * math.cos(math.pi + self.phase)
        det = np.where(
            inside,
            self.detuning * np.cos(np.pi * t / T + self.phase),
            extension_ramp(t, T, t_total, detT, det0),
        )
        H = np.zeros(t.shape + (2, 2), complex)
        H[..., 0, 1] = H[..., 1, 0] = coupling
        H[..., 1, 1] = det
        return H


@dataclass(frozen=True)
class _ThreeLevel(Model):
    rabi: float
    detuning: float = 0.0
    period: float = 1.0

    level_count = 3
    _pump_first = True

    @property
    def t_physical(self) -> float:
        return 1.5 * self.period

    @property
    def t_total(self) -> float:
        return 2.5 * self.period

    def check_grid(self, grid):
        super().check_grid(grid)
        if not math.isclose(grid.t_total, self.t_total, rel_tol=_DURATION_RTOL):
            raise ValueError(
                f"{type(self).__name__} requires t_total = {self.t_total} "
                f"(T + T1), grid has {grid.t_total}"
            )

    def hamiltonian(self, t, t_total=None):
        t = np.atleast_1d(np.asarray(t, float))
        T1 = self.period
        early = _sin2_pulse(t, 0.0, T1, self.rabi)
        late = _sin2_pulse(t, 0.5 * T1, T1, self.rabi)
        pump, stokes = (early, late) if self._pump_first else (late, early)
        H = np.zeros(t.shape + (3, 3), complex)
        H[..., 0, 1] = H[..., 1, 0] = pump
        H[..., 1, 2] = H[..., 2, 1] = stokes
        # constant detuning: the extension ramp is flat
        H[..., 1, 1] = self.detuning
        return H


@dataclass(frozen=True)
class ThreeLevelIntuitive(_ThreeLevel):
    """Pump (1-2) pulse on ``[0, T1]`` followed by Stokes (2-3) on ``[T1/2, 3T1/2]``."""

    _pump_first = True


@dataclass(frozen=True)
class ThreeLevelStirap(_ThreeLevel):
    """Counter-intuitive ordering: Stokes on ``[0, T1]``, pump on ``[T1/2, 3T1/2]``; no detuning."""

    _pump_first = False

    def __init__(self, rabi: float, period: float = 1.0):
        object.__setattr__(self, "rabi", rabi)
        object.__setattr__(self, "detuning", 0.0)
        object.__setattr__(self, "period", period)


@dataclass(frozen=True)
class CustomSampled(Model):
    """Externally supplied matrices on a grid.

    Off-grid evaluation (used by the reference integrator) interpolates
    linearly between samples, wrapping periodically at ``t_total``.
    """

    matrices: np.ndarray = field(repr=False)
    t_physical: float = 1.0
    t_total: float = 2.0

    def __post_init__(self):
        m = np.asarray(self.matrices, complex)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[1] < 2:
            raise ValueError(f"matrices must have shape (N, L, L) with L >= 2, got {m.shape}")
        object.__setattr__(self, "matrices", m)

    @property
    def level_count(self) -> int:
        return self.matrices.shape[1]

    def check_grid(self, grid):
        super().check_grid(grid)
        if grid.n_points != len(self.matrices) or not math.isclose(
            grid.t_total, self.t_total, rel_tol=_DURATION_RTOL
        ):
            raise ValueError("custom samples do not match the grid")

    def hamiltonian(self, t, t_total=None):
        t = np.atleast_1d(np.asarray(t, float))
        n = len(self.matrices)
        x = np.mod(t, self.t_total) / self.t_total * n
        i0 = np.floor(x).astype(int) % n
        frac = (x - np.floor(x))[..., None, None]
        return (1 - frac) * self.matrices[i0] + frac * self.matrices[(i0 + 1) % n]


@dataclass(frozen=True)
class SampledHamiltonian:
    grid: TimeGrid
    matrices: np.ndarray = field(repr=False)
    model: Model | None = field(default=None, repr=False)

    @property
    def level_count(self) -> int:
        return self.matrices.shape[1]

    @property
    def diagonals(self) -> np.ndarray:
        """Diagonal entries, shape ``(N, L)``."""
        return np.diagonal(self.matrices, axis1=1, axis2=2)


def sample_hamiltonian(model: Model, grid: TimeGrid) -> SampledHamiltonian:
    model.check_grid(grid)
    if isinstance(model, CustomSampled):
        H = model.matrices.copy()
    else:
        H = model.hamiltonian(grid.points, grid.t_total)
    H.flags.writeable = False
    return SampledHamiltonian(grid, H, model)


def write_samples(path, hamiltonian: SampledHamiltonian) -> None:
    """Write one grid point per line, ``L*L`` row-major ``re,im`` entries."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for H in hamiltonian.matrices:
            fh.write(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in H.ravel()) + "\n")


def _parse_entry(token: str, lineno: int) -> complex:
    parts = token.split(",")
    if len(parts) != 2:
        raise FormatError(f"line {lineno}: expected 're,im', got {token!r}")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise FormatError(f"line {lineno}: unparsable number in {token!r}") from None


def load_custom_samples(path, grid: TimeGrid) -> SampledHamiltonian:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) != grid.n_points:
        raise FormatError(
            f"{path}: expected {grid.n_points} rows (one per grid point), found {len(lines)}"
        )
    rows = []
    size = None
    for lineno, line in enumerate(lines, start=1):
        entries = [_parse_entry(tok, lineno) for tok in line.split()]
        L = math.isqrt(len(entries))
        if L * L != len(entries) or L < 2:
            raise FormatError(f"line {lineno}: {len(entries)} entries is not L*L with L >= 2")
        if size is None:
            size = L
        elif L != size:
            raise FormatError(f"line {lineno}: {L}x{L} matrix, previous rows were {size}x{size}")
        rows.append(np.array(entries).reshape(L, L))
    model = CustomSampled(np.array(rows), grid.t_physical, grid.t_total)
    return sample_hamiltonian(model, grid)
