"""Direct time stepping used as the oracle for CATM trajectories.

``Psi(t + dt) = expm(-i H(t + dt/2) dt) Psi(t)`` with the Hamiltonian
evaluated analytically at the midpoints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .models import Model

log = logging.getLogger(__name__)

_TAYLOR_DEGREE = 18
_CHUNK = 1 << 16


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    Works on a single matrix or a stack ``(..., n, n)``. Each matrix is scaled
    by ``2^-s`` until its 1-norm is at most 1/2, so the degree-18 remainder is
    far below double precision before the ``s`` squarings.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm: non-finite input")
    n = A.shape[-1]
    norm1 = np.max(np.sum(np.abs(A), axis=-2), axis=-1)
    s = np.maximum(0, np.ceil(np.log2(np.maximum(norm1, 1e-300) / 0.5))).astype(int)
    X = A / (2.0 ** s)[..., None, None]
    eye = np.broadcast_to(np.eye(n, dtype=complex), A.shape)
    # Horner form of sum_k X^k / k!
    E = eye + X / _TAYLOR_DEGREE
    for k in range(_TAYLOR_DEGREE - 1, 0, -1):
        E = eye + (X @ E) / k
    for step in range(int(s.max(initial=0))):
        sq = s > step
        if np.ndim(sq) == 0:
            E = E @ E
        else:
            E = np.where(sq[..., None, None], E @ E, E)
    return E


def hamiltonian_function(source, t_total: float | None = None) -> Callable:
    """Vectorized ``t -> H(t)`` for a model or a plain callable."""
    if isinstance(source, Model):
        if t_total is None:
            t_total = getattr(source, "t_total", 2.0 * source.t_physical)
        return lambda t: source.hamiltonian(t, t_total)
    if callable(source):
        return lambda t: np.asarray(source(np.asarray(t, float)), complex)
    raise TypeError(f"cannot evaluate a Hamiltonian from {type(source).__name__}")


@njit(cache=True)
def _chain(U, psi0):
    M = U.shape[0]
    out = np.empty((M + 1,) + psi0.shape, dtype=np.complex128)
    out[0] = psi0
    for k in range(M):
        out[k + 1] = U[k] @ out[k]
    return out


def _step_propagators(H_of_t, t0: float, dt: float, start: int, stop: int) -> np.ndarray:
    mid = t0 + (np.arange(start, stop) + 0.5) * dt
    return expm(-1j * H_of_t(mid) * dt)


@dataclass(frozen=True)
class ReferenceTrajectory:
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    step: float
    hamiltonian: Callable = field(repr=False, compare=False, default=None)
    converged: bool = True
    change: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t) -> np.ndarray:
        """States at arbitrary times inside the propagated window.

        Off-lattice times get one partial midpoint step from the preceding
        lattice point.
        """
        t = np.atleast_1d(np.asarray(t, float))
        t0 = self.times[0]
        x = (t - t0) / self.step
        k = np.clip(np.floor(x + 1e-9).astype(int), 0, self.steps)
        tau = t - self.times[k]
        out = self.states[k].astype(complex)
        partial = np.abs(tau) > 1e-12 * max(self.step, 1.0)
        if partial.any():
            if self.hamiltonian is None:
                raise ValueError("off-lattice evaluation needs the Hamiltonian")
            tk = self.times[k[partial]]
            tp = tau[partial]
            U = expm(-1j * self.hamiltonian(tk + 0.5 * tp) * tp[:, None, None])
            out[partial] = np.einsum("kij,kj...->ki...", U, out[partial])
        return out


def propagate(source, initial, steps: int, t_final: float | None = None, t_start: float = 0.0,
              t_total: float | None = None) -> ReferenceTrajectory:
    """Midpoint-exponential propagation of ``initial`` over ``[t_start, t_final]``.

    ``initial`` may be an ``InitialState``, a vector, or an ``(L, m)`` block of
    column vectors. ``t_final`` defaults to the model's physical duration.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    H_of_t = hamiltonian_function(source, t_total)
    if t_final is None:
        t_final = source.t_physical
    psi0 = np.array(getattr(initial, "amplitudes", initial), dtype=complex)
    dt = (t_final - t_start) / steps
    chunks = []
    state = psi0
    for start in range(0, steps, _CHUNK):
        stop = min(start + _CHUNK, steps)
        U = _step_propagators(H_of_t, t_start, dt, start, stop)
        block = _chain(np.ascontiguousarray(U), np.ascontiguousarray(state))
        chunks.append(block[:-1] if stop < steps else block)
        state = block[-1]
    states = np.concatenate(chunks)
    states[0] = psi0
    times = t_start + np.arange(steps + 1) * dt
    times[-1] = t_final
    return ReferenceTrajectory(times, states, dt, H_of_t)


def converged_reference(source, initial, t_final: float | None = None, start: int = 1 << 12,
                        cap: int = 1 << 20, tol: float = 1e-10, t_total: float | None = None
                        ) -> ReferenceTrajectory:
    """Double the step count until populations change by less than ``tol``.

    Populations are compared on the coarse lattice; the finer trajectory is
    returned. If ``cap`` is reached first the result carries ``converged=False``.
    """
    M = start
    prev = propagate(source, initial, M, t_final, t_total=t_total)
    change = np.inf
    while M < cap:
        M *= 2
        cur = propagate(source, initial, M, t_final, t_total=t_total)
        change = float(np.max(np.abs(np.abs(cur.states[::2]) ** 2 - np.abs(prev.states) ** 2)))
        prev = cur
        if change < tol:
            return _with(prev, True, change)
    log.warning("reference did not reach tolerance %.1e at %d steps (change %.2e)", tol, M, change)
    return _with(prev, change < tol, change)


def _with(traj: ReferenceTrajectory, converged: bool, change: float) -> ReferenceTrajectory:
    return ReferenceTrajectory(traj.times, traj.states, traj.step, traj.hamiltonian, converged, change)


def propagator_matrix(source, t0: float, t1: float, steps: int, t_total: float | None = None) -> np.ndarray:
    """``U(t1, t0)`` built by propagating the standard basis column-wise."""
    if not t1 > t0:
        raise ValueError("propagator_matrix needs t1 > t0")
    H_of_t = hamiltonian_function(source, t_total)
    L = np.asarray(H_of_t(np.array([t0]))).shape[-1]
    traj = propagate(source, np.eye(L, dtype=complex), steps, t1, t_start=t0, t_total=t_total)
    return traj.final_state


def traceless_part(H) -> np.ndarray:
    """``H - tr(H)/L`` for a matrix or stack of matrices."""
    H = np.asarray(H, complex)
    L = H.shape[-1]
    tr = np.trace(H, axis1=-2, axis2=-1)
    return H - (tr / L)[..., None, None] * np.eye(L)


def adjoint_dual(U) -> np.ndarray:
    """For ``U = [[a, c], [b, d]]`` return ``[[d*, -b*], [-c*, a*]]``.

    This is the propagator generated by the adjoint of a traceless
    two-level Hamiltonian, given the propagator ``U`` of the Hamiltonian itself.
    """
    U = np.asarray(U)
    a, c = U[..., 0, 0], U[..., 0, 1]
    b, d = U[..., 1, 0], U[..., 1, 1]
    return np.stack(
        [np.stack([d.conj(), -b.conj()], -1), np.stack([-c.conj(), a.conj()], -1)], -2
    )


def richardson_order(errors, ratio: float = 2.0) -> np.ndarray:
    """Observed convergence orders from errors at successively divided steps."""
    e = np.asarray(errors, float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)
