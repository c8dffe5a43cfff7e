"""Populations, error metrics, eigenvalue-relation checks and parameter scans."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .absorber import InitialState
from .eig import ConvergenceError, refine_pair
from .floquet import assemble
from .models import Model
from .reference import ReferenceTrajectory, converged_reference
from .solver import CatmSolution, family_mask, in_zone, solve
from .timegrid import SIGNED, TimeGrid, build_grid

log = logging.getLogger(__name__)

NOT_APPLICABLE_AMPLITUDE = 1e-12
FAILURES = (ValueError, ArithmeticError, ConvergenceError, np.linalg.LinAlgError)


def populations_phases(trajectory) -> tuple[np.ndarray, np.ndarray]:
    """``p_n = |<n|Psi>|^2`` and ``beta_n = arg <n|Psi>`` in ``(-pi, pi]``."""
    psi = np.asarray(trajectory, complex)
    if psi.size == 0:
        raise ValueError("empty trajectory")
    beta = np.angle(psi)
    # np.angle gives -pi for negative reals with a -0.0 imaginary part
    beta = np.where(beta <= -np.pi, np.pi, beta)
    return np.abs(psi) ** 2, beta


def wrap_angle(x) -> np.ndarray:
    """Principal value in ``(-pi, pi]``."""
    x = np.asarray(x, float)
    w = np.mod(x + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


@dataclass(frozen=True)
class ErrorReport:
    eps_p: float
    eps_a: float
    times: np.ndarray = field(repr=False)
    population_difference: np.ndarray = field(repr=False)
    angle_difference: np.ndarray = field(repr=False)


def _trapezoid_mean(values, times) -> float:
    if len(times) < 2:
        return float(values[0])
    span = times[-1] - times[0]
    return float(np.trapezoid(values, times) / span)


def error_metrics(catm, ref, times, level: int = 0) -> ErrorReport:
    """Signed integrated differences of population and phase on one level.

    ``catm`` and ``ref`` are state arrays ``(n, L)`` sampled at the same
    ``times``. Both metrics are trapezoid means over the sampled span.
    """
    a = np.asarray(catm, complex)
    b = np.asarray(ref, complex)
    times = np.asarray(times, float)
    if a.shape != b.shape or a.shape[0] != times.size:
        raise ValueError(
            f"grid mismatch: CATM {a.shape}, reference {b.shape}, {times.size} times"
        )
    dp = np.abs(a[:, level]) ** 2 - np.abs(b[:, level]) ** 2
    da = wrap_angle(np.angle(a[:, level]) - np.angle(b[:, level]))
    return ErrorReport(_trapezoid_mean(dp, times), _trapezoid_mean(da, times), times, dp, da)


def phase_error_metrics(catm_phase, ref_phase, times) -> float:
    """Angle metric from raw phase samples (wrapped per sample before averaging)."""
    d = wrap_angle(np.asarray(catm_phase, float) - np.asarray(ref_phase, float))
    return _trapezoid_mean(d, np.asarray(times, float))


def compare(solution: CatmSolution, ref: ReferenceTrajectory, level: int = 0) -> ErrorReport:
    """Evaluate ``ref`` on the physical grid points and compute the metrics."""
    times = solution.times[: solution.grid.index_physical_end + 1]
    return error_metrics(solution.physical_trajectory, ref.at(times), times, level)


def max_population_deviation(solution: CatmSolution, ref: ReferenceTrajectory) -> float:
    times = solution.times[: solution.grid.index_physical_end + 1]
    pc = np.abs(solution.physical_trajectory) ** 2
    pr = np.abs(ref.at(times)) ** 2
    return float(np.max(np.abs(pc - pr)))


def final_amplitude(ref: ReferenceTrajectory, grid: TimeGrid, level: int = 0) -> complex:
    """Reference amplitude at grid index ``i_T``."""
    t = grid.points[grid.index_physical_end]
    return complex(ref.at(t)[0, level])


def _extension_integral(values, grid: TimeGrid) -> float:
    """Trapezoid integral of samples over ``[t_{i_T}, T']`` with periodic closure."""
    f = np.append(np.asarray(values), values[0])
    i = grid.index_physical_end
    return float(np.trapezoid(f[i:], dx=grid.spacing))


def _period_integral(values, grid: TimeGrid) -> float:
    f = np.append(np.asarray(values), values[0])
    return float(np.trapezoid(f, dx=grid.spacing))


def check_connected_im(solution: CatmSolution, ref: ReferenceTrajectory, level: int = 0):
    """``|Im w - (int_T^T' Im Delta_1 + ln|a_1(T)|) / T'|``, or None if ``a_1(T)`` vanishes."""
    grid = solution.grid
    a1 = final_amplitude(ref, grid, level)
    if abs(a1) < NOT_APPLICABLE_AMPLITUDE:
        return None
    im_delta = solution.hamiltonian.diagonals[:, level].imag
    predicted = (_extension_integral(im_delta, grid) + math.log(abs(a1))) / grid.t_total
    return abs(solution.omega.imag - predicted)


def fold(values, omega0: float) -> np.ndarray:
    """Real parts folded into ``[0, omega0)``."""
    return np.mod(np.asarray(values).real, omega0)


def _family_by_vector(solution: CatmSolution, candidates) -> np.ndarray:
    """Mask of ``candidates`` whose eigenvector is a Fourier shift of the connected one."""
    grid = solution.grid
    F = assemble(solution.hamiltonian, solution.potential, SIGNED).matrix
    lam = solution.floquet_vector
    out = np.zeros(len(candidates), bool)
    for n, value in enumerate(candidates):
        v = refine_pair(F, value).vector.reshape(lam.shape)
        k = round((value.real - solution.omega.real) / grid.omega0)
        shifted = lam * np.exp(1j * k * grid.omega0 * grid.points)[:, None]
        ov = abs(np.vdot(shifted, v)) / (np.linalg.norm(shifted) * np.linalg.norm(v))
        out[n] = ov > 0.99
    return out


def non_connected(solution: CatmSolution, by_vector: bool = False) -> complex:
    """Smallest-``|Im|`` zone eigenvalue outside the connected Brillouin family."""
    zone = solution.zone_spectrum
    others = zone[~family_mask(zone, solution.omega, solution.grid.omega0)]
    if others.size == 0 or by_vector:
        family = zone[family_mask(zone, solution.omega, solution.grid.omega0)]
        family = family[np.abs(family - solution.omega) > 0]
        if family.size:
            others = np.concatenate([others, family[~_family_by_vector(solution, family)]])
    if others.size == 0:
        raise ValueError("no eigenvalue left after excluding the connected family")
    return complex(others[np.argmin(np.abs(others.imag))])


@dataclass(frozen=True)
class PairCheck:
    residual: float
    observed: float
    predicted: float
    flagged: bool


def check_pair_relation(solution: CatmSolution, area: float | None = None) -> PairCheck:
    """Compare ``Im w'`` with ``-area/T' - Im w + (1/T') int Im(Delta_1 + Delta_2)``.

    The residual is relative to ``area/T'``. With zero area the relation
    cannot be normalized and the absolute residual is returned, flagged.
    """
    if solution.level_count != 2:
        raise ValueError("the pair relation is defined for two-level models")
    grid = solution.grid
    area = solution.potential.area if area is None else area
    diag = solution.hamiltonian.diagonals
    trace_im = _period_integral(diag.sum(axis=1).imag, grid)
    predicted = (-area + trace_im) / grid.t_total - solution.omega.imag
    observed = non_connected(solution).imag
    if area == 0:
        return PairCheck(abs(observed - predicted), observed, predicted, True)
    return PairCheck(abs(observed - predicted) / (area / grid.t_total), observed, predicted, False)


def isolation_gap(solution: CatmSolution) -> float:
    """``|Im w'| - |Im w|`` for the nearest competing zone eigenvalue."""
    return abs(non_connected(solution).imag) - abs(solution.omega.imag)


def depopulation_floor(area: float) -> float:
    """Lower bound ``exp(-area/2)`` on the residual initial-level amplitude."""
    return math.exp(-0.5 * area)


@dataclass
class ScanRow:
    v0: float
    area: float = math.nan
    eps_p: float = math.nan
    eps_a: float = math.nan
    omega: complex = complex(math.nan, math.nan)
    omega_pair: complex = complex(math.nan, math.nan)
    connection_residual: float = math.nan
    folded: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    error: str = ""


@dataclass
class NScanRow:
    n_points: int
    populations: np.ndarray = field(default_factory=lambda: np.empty(0))
    omega: complex = complex(math.nan, math.nan)
    connection_residual: float = math.nan
    error: str = ""


@dataclass(frozen=True)
class SpectrumScan:
    v0: np.ndarray
    connected: np.ndarray
    folded: list


def _failure(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def scan_v0(model: Model, initial: InitialState, v0_values, grid: TimeGrid,
            ref: ReferenceTrajectory | None = None, convention: str = SIGNED,
            backend: str = "native") -> list[ScanRow]:
    """Solve each ``V0`` independently; failures are recorded per row."""
    v0_values = list(v0_values)
    if not v0_values:
        raise ValueError("empty V0 list")
    if ref is None:
        ref = converged_reference(model, initial)
    rows = []
    for v0 in v0_values:
        row = ScanRow(float(v0))
        try:
            sol = solve(model, initial, v0, grid, convention, backend)
            rep = compare(sol, ref)
            row.area = sol.potential.area
            row.eps_p, row.eps_a = rep.eps_p, rep.eps_a
            row.omega = sol.omega
            row.connection_residual = sol.connection_residual
            zone = sol.zone_spectrum
            row.folded = fold(zone[~family_mask(zone, sol.omega, grid.omega0)], grid.omega0)
            row.omega_pair = non_connected(sol)
        except FAILURES as exc:
            log.warning("scan point V0=%s failed: %s", v0, exc)
            row.error = _failure(exc)
        rows.append(row)
    return rows


def spectrum_scan(rows) -> SpectrumScan:
    return SpectrumScan(
        np.array([r.v0 for r in rows]),
        np.array([r.omega for r in rows]),
        [r.folded for r in rows],
    )


def scan_n(model: Model, initial: InitialState, v0: float, n_values, t_total: float,
           convention: str = SIGNED, backend: str = "native") -> list[NScanRow]:
    """Final populations at ``i_T`` for each grid size."""
    n_values = list(n_values)
    if not n_values:
        raise ValueError("empty N list")
    rows = []
    for n in n_values:
        row = NScanRow(int(n))
        try:
            grid = build_grid(int(n), model.t_physical, t_total)
            sol = solve(model, initial, v0, grid, convention, backend)
            row.populations = np.abs(sol.final_state) ** 2
            row.omega = sol.omega
            row.connection_residual = sol.connection_residual
        except FAILURES as exc:
            log.warning("scan point N=%s failed: %s", n, exc)
            row.error = _failure(exc)
        rows.append(row)
    return rows


def line_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and correlation coefficient."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    r = float(np.corrcoef(x, y)[0, 1])
    return float(slope), float(intercept), r
