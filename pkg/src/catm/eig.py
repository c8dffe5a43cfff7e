"""Dense complex non-Hermitian eigensolver.

Eigenvalues come from diagonal balancing, Householder reduction to upper
Hessenberg form and single-shift complex QR iterations with Wilkinson
shifts. Eigenvectors are obtained by inverse iteration on the Hessenberg
matrix and mapped back; every returned pair is checked against the original
matrix. ``refine_pair`` runs shifted inverse iteration with Rayleigh-quotient
updates directly on a dense matrix.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from numba import njit

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
_EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class EigenPair:
    value: complex
    vector: np.ndarray = field(repr=False)
    residual: float

    def __iter__(self):
        yield self.value
        yield self.vector


def matrix_norm(A) -> float:
    """Frobenius norm, the reference scale for relative residuals."""
    return float(np.linalg.norm(A))


def relative_residual(A, value, vector, norm=None) -> float:
    norm = matrix_norm(A) if norm is None else norm
    r = np.linalg.norm(A @ vector - value * vector) / np.linalg.norm(vector)
    return float(r / norm) if norm > 0 else float(r)


def sort_eigenvalues(values) -> np.ndarray:
    """Indices ordering values by ascending real part, then imaginary part."""
    values = np.asarray(values)
    return np.lexsort((values.imag, values.real))


def balance(A, max_sweeps: int = 100):
    """Diagonal similarity ``B = D^-1 A D`` with powers of two in ``D``.

    Off-diagonal row and column 2-norms are equalized following LAPACK's
    ``gebal`` (scaling only, no permutations). Returns ``B`` and ``diag(D)``.
    """
    B = np.array(A, dtype=complex, copy=True)
    n = B.shape[0]
    scale = np.ones(n)
    radix = 2.0
    big, small = 1e150, 1e-150
    for _ in range(max_sweeps):
        changed = False
        for i in range(n):
            col = B[:, i].copy()
            row = B[i, :].copy()
            col[i] = row[i] = 0.0
            c = np.linalg.norm(col)
            r = np.linalg.norm(row)
            if c == 0.0 or r == 0.0:
                continue
            s = c + r
            f = 1.0
            g = r / radix
            while c < g and max(f, c) < big and min(r, g) > small:
                f *= radix
                c *= radix
                r /= radix
                g /= radix
            g = c / radix
            while g >= r and r < big and min(f, c, g) > small:
                f /= radix
                c /= radix
                g /= radix
                r *= radix
            if c + r >= 0.95 * s:
                continue
            changed = True
            scale[i] *= f
            B[i, :] /= f
            B[:, i] *= f
        if not changed:
            break
    return B, scale


@njit(cache=True)
def _householder_hessenberg(H, V):
    """In-place reduction of ``H`` to upper Hessenberg form.

    Reflector ``k`` (unit vector, acting on rows ``k+1:``) is stored in
    ``V[k+1:, k]``.
    """
    n = H.shape[0]
    w = np.zeros(n, dtype=np.complex128)
    for k in range(n - 2):
        normx = 0.0
        for i in range(k + 1, n):
            normx += H[i, k].real ** 2 + H[i, k].imag ** 2
        normx = np.sqrt(normx)
        if normx == 0.0:
            continue
        x0 = H[k + 1, k]
        phase = x0 / abs(x0) if x0 != 0 else 1.0 + 0.0j
        for i in range(k + 1, n):
            V[i, k] = H[i, k]
        V[k + 1, k] += phase * normx
        nv = 0.0
        for i in range(k + 1, n):
            nv += V[i, k].real ** 2 + V[i, k].imag ** 2
        nv = np.sqrt(nv)
        for i in range(k + 1, n):
            V[i, k] /= nv
        # left: H[k+1:, k+1:] -= 2 v (v^* H)
        for j in range(k + 1, n):
            w[j] = 0.0
        for i in range(k + 1, n):
            vi = np.conj(V[i, k])
            for j in range(k + 1, n):
                w[j] += vi * H[i, j]
        for i in range(k + 1, n):
            vi = 2.0 * V[i, k]
            for j in range(k + 1, n):
                H[i, j] -= vi * w[j]
        H[k + 1, k] = -phase * normx
        for i in range(k + 2, n):
            H[i, k] = 0.0
        # right: H[:, k+1:] -= 2 (H v) v^*
        for i in range(n):
            acc = 0.0j
            for j in range(k + 1, n):
                acc += H[i, j] * V[j, k]
            acc *= 2.0
            for j in range(k + 1, n):
                H[i, j] -= acc * np.conj(V[j, k])


def hessenberg(B):
    """Householder reduction ``B = Q H Q^*``; returns ``H`` and the reflectors."""
    H = np.array(B, dtype=complex, copy=True, order="C")
    n = H.shape[0]
    V = np.zeros((n, max(n - 2, 0)), complex)
    if n > 2:
        _householder_hessenberg(H, V)
    reflectors = []
    for k in range(n - 2):
        v = V[k + 1:, k]
        reflectors.append(v.copy() if np.any(v) else None)
    return H, reflectors


def apply_reflectors(reflectors, Y):
    """Return ``Q Y`` for the Hessenberg reflectors (Y is 1-d or 2-d)."""
    Y = np.array(Y, dtype=complex, copy=True)
    two_d = Y.ndim == 2
    for k in range(len(reflectors) - 1, -1, -1):
        v = reflectors[k]
        if v is None:
            continue
        seg = Y[k + 1:]
        if two_d:
            seg -= 2.0 * np.outer(v, v.conj() @ seg)
        else:
            seg -= 2.0 * v * np.vdot(v, seg)
    return Y


@njit(cache=True)
def _abs1(z):
    return abs(z.real) + abs(z.imag)


@njit(cache=True)
def _hqr_eigenvalues(H, max_sweeps):
    """Eigenvalues of upper Hessenberg ``H`` (overwritten).

    Returns ``(w, stuck)`` where ``stuck`` is -1 on success, otherwise the
    index of the eigenvalue that failed to converge.
    """
    n = H.shape[0]
    w = np.zeros(n, dtype=np.complex128)
    ulp = 2.220446049250313e-16
    smlnum = 2.2250738585072014e-308 * (n / ulp)
    sweeps = 0
    i = n - 1
    its = 0
    while i >= 0:
        # locate the start l of the unreduced block ending at i
        l = i
        while l > 0:
            h = H[l, l - 1]
            if _abs1(h) <= smlnum:
                break
            tst = _abs1(H[l - 1, l - 1]) + _abs1(H[l, l])
            if tst == 0.0:
                if l - 2 >= 0:
                    tst += abs(H[l - 1, l - 2].real)
                if l + 1 <= n - 1:
                    tst += abs(H[l + 1, l].real)
            if _abs1(h) <= ulp * tst:
                ab = max(_abs1(h), _abs1(H[l - 1, l]))
                ba = min(_abs1(h), _abs1(H[l - 1, l]))
                aa = max(_abs1(H[l, l]), _abs1(H[l - 1, l - 1] - H[l, l]))
                bb = min(_abs1(H[l, l]), _abs1(H[l - 1, l - 1] - H[l, l]))
                s = aa + ab
                if ba * (ab / s) <= max(smlnum, ulp * (bb * (aa / s))):
                    break
            l -= 1
        if l > 0:
            H[l, l - 1] = 0.0
        if l == i:
            w[i] = H[i, i]
            i -= 1
            its = 0
            continue
        if sweeps >= max_sweeps:
            return w, i
        sweeps += 1
        its += 1
        # shift selection
        if its % 20 == 0:
            s = H[i, i] + 0.75 * abs(H[i, i - 1].real) + 0.75j * abs(H[i, i - 1].imag)
        elif its % 10 == 0:
            s = H[l, l] + 0.75 * abs(H[l + 1, l].real) + 0.75j * abs(H[l + 1, l].imag)
        else:
            a = H[i - 1, i - 1]
            b = H[i - 1, i]
            c = H[i, i - 1]
            d = H[i, i]
            # eigenvalue of the trailing 2x2 block closest to d
            half = 0.5 * (a - d)
            disc = np.sqrt(half * half + b * c)
            e1 = d + half + disc
            e2 = d + half - disc
            s = e1 if _abs1(e1 - d) <= _abs1(e2 - d) else e2
        # implicit single-shift QR sweep on rows/cols l..i via Givens rotations
        x = H[l, l] - s
        y = H[l + 1, l]
        for k in range(l, i):
            if k > l:
                x = H[k, k - 1]
                y = H[k + 1, k - 1]
            ax = abs(x)
            r = np.sqrt(ax * ax + abs(y) ** 2)
            if r == 0.0:
                continue
            if ax == 0.0:
                cs = 0.0
                sn = 1.0 + 0.0j
            else:
                alpha = x / ax
                cs = ax / r
                sn = alpha * np.conj(y) / r
            j0 = l if k == l else k - 1
            for j in range(j0, i + 1):
                t1 = H[k, j]
                t2 = H[k + 1, j]
                H[k, j] = cs * t1 + sn * t2
                H[k + 1, j] = -np.conj(sn) * t1 + cs * t2
            if k > l:
                H[k + 1, k - 1] = 0.0
            jmax = min(k + 2, i)
            for j in range(l, jmax + 1):
                t1 = H[j, k]
                t2 = H[j, k + 1]
                H[j, k] = cs * t1 + np.conj(sn) * t2
                H[j, k + 1] = -sn * t1 + cs * t2
    return w, -1


@njit(cache=True)
def _hessenberg_inverse_iteration(H, lam, x0, eps3, basis, nbasis, maxit, tol):
    """Inverse iteration for ``H - lam I`` with ``H`` upper Hessenberg.

    ``basis[:, :nbasis]`` holds orthonormal vectors to project out at every
    step (used for clustered eigenvalues). Returns the unit vector and its
    residual relative to ``normH`` implied by ``tol`` scaling of the caller.
    """
    n = H.shape[0]
    B = H.copy()
    for k in range(n):
        B[k, k] -= lam
    mult = np.zeros(max(n - 1, 1), dtype=np.complex128)
    swap = np.zeros(max(n - 1, 1), dtype=np.bool_)
    for k in range(n - 1):
        if _abs1(B[k + 1, k]) > _abs1(B[k, k]):
            for j in range(k, n):
                t = B[k, j]
                B[k, j] = B[k + 1, j]
                B[k + 1, j] = t
            swap[k] = True
        if abs(B[k, k]) < eps3:
            B[k, k] = eps3
        m = B[k + 1, k] / B[k, k]
        mult[k] = m
        if m != 0:
            for j in range(k + 1, n):
                B[k + 1, j] -= m * B[k, j]
        B[k + 1, k] = 0.0
    if abs(B[n - 1, n - 1]) < eps3:
        B[n - 1, n - 1] = eps3
    x = x0.copy()
    res = np.inf
    for it in range(maxit):
        for k in range(n - 1):
            if swap[k]:
                t = x[k]
                x[k] = x[k + 1]
                x[k + 1] = t
            x[k + 1] -= mult[k] * x[k]
        for ii in range(n - 1, -1, -1):
            acc = x[ii]
            for j in range(ii + 1, n):
                acc -= B[ii, j] * x[j]
            x[ii] = acc / B[ii, ii]
        for q in range(nbasis):
            proj = 0.0j
            for j in range(n):
                proj += np.conj(basis[j, q]) * x[j]
            for j in range(n):
                x[j] -= proj * basis[j, q]
        nrm = np.sqrt(np.sum(np.abs(x) ** 2))
        if nrm == 0.0 or not np.isfinite(nrm):
            return x, np.inf
        x /= nrm
        # residual of the normalized vector against H
        res = 0.0
        for ii in range(n):
            acc = -lam * x[ii]
            for j in range(max(ii - 1, 0), n):
                acc += H[ii, j] * x[j]
            res += abs(acc) ** 2
        res = np.sqrt(res)
        if res <= tol and it >= 1:
            break
    return x, res


def _lu(M):
    # exact singularity is detected by the caller from the pivots
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(M, check_finite=False)


def _start_vector(n, seed):
    if seed == 0:
        return np.ones(n, complex) / np.sqrt(n)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


class DenseEigensolver:
    """Eigen-decomposition workspace for one square matrix.

    Keeps the balanced Hessenberg form so eigenvectors can be computed on
    demand, one per requested eigenvalue.
    """

    def __init__(self, A, backend: str = "native"):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix contains non-finite entries")
        if backend not in ("native", "lapack"):
            raise ValueError(f"unknown eigensolver backend {backend!r}")
        self.A = np.asarray(A, dtype=complex)
        self.n = A.shape[0]
        self.backend = backend
        self.norm = matrix_norm(self.A)
        self._lu_cache = {}

    @cached_property
    def _reduced(self):
        B, scale = balance(self.A)
        H, reflectors = hessenberg(B)
        return H, reflectors, scale

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues, ordered by ascending real then imaginary part."""
        if self.n == 0:
            return np.zeros(0, complex)
        if self.backend == "lapack":
            w = sla.eigvals(self.A)
        else:
            H = np.array(self._reduced[0], copy=True)
            w, stuck = _hqr_eigenvalues(H, 30 * max(self.n, 1))
            if stuck >= 0:
                raise ConvergenceError(
                    f"eig_dense: QR iteration did not converge for eigenvalue index {stuck} "
                    f"after {30 * self.n} sweeps",
                    index=int(stuck),
                )
        w = w[sort_eigenvalues(w)]
        w.flags.writeable = False
        return w

    def _hessenberg_vector(self, value, seed=0, basis=None):
        H, reflectors, scale = self._reduced
        n = self.n
        normH = max(np.linalg.norm(H), np.finfo(float).tiny)
        eps3 = normH * _EPS
        if basis is None or basis.shape[1] == 0:
            basis = np.zeros((n, 1), complex)
            nb = 0
        else:
            nb = basis.shape[1]
        y, res = _hessenberg_inverse_iteration(
            H, complex(value), _start_vector(n, seed), eps3,
            np.ascontiguousarray(basis), nb, 8, 1e-14 * normH,
        )
        return y

    def _to_original(self, Y):
        H, reflectors, scale = self._reduced
        V = apply_reflectors(reflectors, Y)
        V = V * (scale[:, None] if V.ndim == 2 else scale)
        return V / np.linalg.norm(V, axis=0)

    def vector(self, value, seed=0) -> EigenPair:
        """Eigenpair for one (already computed or nearby) eigenvalue."""
        value = complex(value)
        if self.backend == "native":
            y = self._hessenberg_vector(value, seed)
            v = self._to_original(y)
            res = relative_residual(self.A, value, v, self.norm)
        else:
            res = np.inf
        if not res <= RESIDUAL_TOL:
            v, res = self._dense_inverse_iteration(value, seed)
        if not res <= RESIDUAL_TOL:
            raise ConvergenceError(
                f"eig_dense: eigenvector for {value} has residual {res:.2e} > {RESIDUAL_TOL:.0e}"
            )
        return EigenPair(value, v, res)

    def _dense_inverse_iteration(self, value, seed=0, maxit=6):
        shift = value
        for attempt in range(5):
            lu, piv = _lu(self.A - shift * np.eye(self.n))
            if np.min(np.abs(np.diag(lu))) > 0:
                break
            shift = shift + 1e-10 * self.norm * (attempt + 1)
        x = _start_vector(self.n, seed + 1)
        res = np.inf
        for _ in range(maxit):
            x = sla.lu_solve((lu, piv), x, check_finite=False)
            x /= np.linalg.norm(x)
            res = relative_residual(self.A, value, x, self.norm)
            if res <= 1e-14:
                break
        return x, res

    def pairs(self) -> list[EigenPair]:
        values = self.eigenvalues
        n = self.n
        if self.backend == "lapack":
            w, V = sla.eig(self.A)
            order = sort_eigenvalues(w)
            w, V = w[order], V[:, order]
            V = V / np.linalg.norm(V, axis=0)
            values = w
        else:
            H, reflectors, scale = self._reduced
            Y = np.zeros((n, n), complex)
            cluster_tol = 1e-9 * max(self.norm, np.finfo(float).tiny)
            for k, lam in enumerate(values):
                # previously computed vectors whose eigenvalues coincide with lam
                near = [j for j in range(k) if abs(values[j] - lam) <= cluster_tol]
                basis = None
                if near:
                    basis, _ = np.linalg.qr(Y[:, near])
                Y[:, k] = self._hessenberg_vector(lam, seed=len(near), basis=basis)
            V = self._to_original(Y)
        R = self.A @ V - V * values
        res = np.linalg.norm(R, axis=0) / max(self.norm, np.finfo(float).tiny)
        out = []
        for k, lam in enumerate(values):
            if res[k] <= RESIDUAL_TOL:
                out.append(EigenPair(complex(lam), V[:, k], float(res[k])))
                continue
            log.debug("refining eigenvector %d (residual %.2e)", k, res[k])
            v, r = self._dense_inverse_iteration(lam, seed=k)
            if not r <= RESIDUAL_TOL:
                raise ConvergenceError(
                    f"eig_dense: eigenvector {k} ({lam}) has residual {r:.2e}", index=k
                )
            out.append(EigenPair(complex(lam), v, float(r)))
        return out


def eig_dense(A, backend: str = "native") -> list[EigenPair]:
    """All eigenpairs of ``A`` ordered by ascending real part, then imaginary part."""
    return DenseEigensolver(A, backend).pairs()


def eigvals_dense(A, backend: str = "native") -> np.ndarray:
    return DenseEigensolver(A, backend).eigenvalues


def refine_pair(A, guess, tol: float = 1e-10, maxiter: int = 60, max_retries: int = 5) -> EigenPair:
    """Inverse iteration from ``guess``, switching to Rayleigh-quotient shifts
    once the iterate has settled on the eigenvalue nearest the guess."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    norm = max(matrix_norm(A), np.finfo(float).tiny)
    eye = np.eye(n)

    def factor(shift):
        for attempt in range(max_retries + 1):
            lu, piv = _lu(A - shift * eye)
            if np.min(np.abs(np.diag(lu))) > _EPS * norm:
                return lu, piv, shift
            shift = shift + 1e-10 * norm
        raise ConvergenceError(f"refine_pair: shift {shift} stays singular after {max_retries} perturbations")

    shift = complex(guess)
    lu, piv, shift = factor(shift)
    x = _start_vector(n, 0)
    value = shift
    res = np.inf
    rayleigh = False
    for it in range(maxiter):
        x = sla.lu_solve((lu, piv), x, check_finite=False)
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm == 0:
            raise ConvergenceError("refine_pair: iterate overflowed")
        x /= nrm
        Ax = A @ x
        value = np.vdot(x, Ax)
        res = np.linalg.norm(Ax - value * x) / norm
        if res <= tol:
            break
        # fixed shift keeps the iterate on the nearest eigenvalue; Rayleigh
        # updates only once it has clearly locked on
        if not rayleigh and res < 1e-4:
            rayleigh = True
        if rayleigh:
            lu, piv, _ = factor(value)
    else:
        raise ConvergenceError(f"refine_pair: residual {res:.2e} after {maxiter} iterations")
    return EigenPair(complex(value), x, float(res))
