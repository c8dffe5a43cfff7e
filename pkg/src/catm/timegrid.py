"""Uniform periodic time grid and the Fourier/DVR time-derivative operator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SIGNED = "signed"
UNSIGNED = "unsigned"
CONVENTIONS = (SIGNED, UNSIGNED)


@dataclass(frozen=True)
class TimeGrid:
    """``n_points`` samples ``t_i = i * t_total / n_points`` on ``[0, t_total)``.

    ``t_physical`` is the duration of the physical interaction; the samples in
    ``(t_physical, t_total)`` carry the periodic extension.
    """

    n_points: int
    t_physical: float
    t_total: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points!r}")
        if not (np.isfinite(self.t_physical) and np.isfinite(self.t_total)):
            raise ValueError("durations must be finite")
        if self.t_physical <= 0 or self.t_total <= 0:
            raise ValueError("durations must be positive")
        if self.t_physical >= self.t_total:
            raise ValueError(
                f"t_physical ({self.t_physical}) must be smaller than t_total ({self.t_total})"
            )
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return self.t_total / self.n_points

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.arange(self.n_points) * self.spacing
        pts.flags.writeable = False
        return pts

    @property
    def omega0(self) -> float:
        """Fundamental angular frequency ``2 pi / t_total``."""
        return 2.0 * np.pi / self.t_total

    @cached_property
    def index_physical_end(self) -> int:
        """Index of the last sample with ``t_i <= t_physical``."""
        # Round-off guard: a sample sitting on t_physical must count as physical.
        k = int(np.floor(self.t_physical / self.spacing * (1.0 + 1e-13) + 1e-12))
        return min(k, self.n_points - 1)

    @property
    def physical_mask(self) -> np.ndarray:
        return np.arange(self.n_points) <= self.index_physical_end


def build_grid(n_points: int, t_physical: float, t_total: float) -> TimeGrid:
    return TimeGrid(n_points, float(t_physical), float(t_total))


def fourier_frequencies(grid: TimeGrid, convention: str = SIGNED) -> np.ndarray:
    """Angular frequency attached to each DFT bin.

    With the signed convention bins ``0 .. N//2 - 1`` carry ``k * omega0`` and
    bins ``N//2 .. N-1`` carry ``(k - N) * omega0``. The unsigned convention
    keeps ``k * omega0`` for every bin.
    """
    n = grid.n_points
    k = np.arange(n)
    if convention == SIGNED:
        k = np.where(k < n // 2, k, k - n)
    elif convention != UNSIGNED:
        raise ValueError(f"unknown frequency convention {convention!r}")
    return grid.omega0 * k.astype(float)


def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    # reduce the exponent mod n before scaling to keep the phases exact
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


def apply_derivative(v, grid: TimeGrid, convention: str = SIGNED, method: str = "fft"):
    """Apply ``-i d/dt`` (hbar = 1) to samples ``v`` along axis 0."""
    v = np.asarray(v, dtype=complex)
    w = fourier_frequencies(grid, convention)
    shape = (-1,) + (1,) * (v.ndim - 1)
    if method == "fft":
        return np.fft.ifft(w.reshape(shape) * np.fft.fft(v, axis=0), axis=0)
    if method == "direct":
        F = _dft_matrix(grid.n_points)
        coeffs = np.tensordot(F, v, axes=(1, 0))
        return np.tensordot(F.conj(), w.reshape(shape) * coeffs, axes=(1, 0)) / grid.n_points
    raise ValueError(f"unknown transform method {method!r}")


@dataclass(frozen=True)
class DerivativeOperator:
    """Dense DVR matrix of ``-i hbar d/dt`` on the grid (hbar = 1)."""

    matrix: np.ndarray = field(repr=False)
    frequencies: np.ndarray = field(repr=False)
    convention: str = SIGNED

    def __matmul__(self, other):
        return self.matrix @ other


def derivative_operator(grid: TimeGrid, convention: str = SIGNED, method: str = "fft") -> DerivativeOperator:
    """Return ``D = F^-1 diag(omega) F``.

    ``method="fft"`` uses numpy's mixed-radix FFT, ``method="direct"`` builds
    the O(N^2) DFT matrix explicitly; both are exact up to round-off for any N.
    """
    eye = np.eye(grid.n_points, dtype=complex)
    D = apply_derivative(eye, grid, convention, method)
    D.flags.writeable = False
    w = fourier_frequencies(grid, convention)
    w.flags.writeable = False
    return DerivativeOperator(D, w, convention)
