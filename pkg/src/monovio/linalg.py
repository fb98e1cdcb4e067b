"""Self-contained dense linear algebra kernel.

Everything the estimator needs in one place: cyclic Jacobi eigenvalue
decomposition for symmetric matrices, square-matrix SVD built on top of it,
the inverse power method, and Cholesky / partially pivoted LU solvers. No
LAPACK-backed routine is called; numpy is used only as array storage and for
elementwise/vector arithmetic.

Capacities mirror the fixed-buffer sizing of the target estimator: the SVD
path accepts matrices up to 16x16 and the solvers up to 200x200. Exceeding a
capacity is a programmer error (ValueError), not a numerical failure.

All functions are pure: identical input bits produce identical output bits,
and nothing here holds mutable state.
"""

from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np

from .errors import NotPositiveDefinite, NumericalFailure, SingularMatrix

MAX_SVD_DIM = 16
MAX_SOLVE_DIM = 200

_JACOBI_MAX_SWEEPS = 50
_JACOBI_REL_TOL = 1e-12
_SYMMETRY_REL_TOL = 1e-12
_PIVOT_TOL = 1e-14


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def _as_square(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError(f"{name}: empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: matrix has non-finite entries")
    return a


def _as_symmetric(a, name: str) -> np.ndarray:
    a = _as_square(a, name)
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > _SYMMETRY_REL_TOL * scale:
        raise ValueError(f"{name}: matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def _as_vector(b, n: int, name: str) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != n:
        raise ValueError(f"{name}: right-hand side must be a vector of length {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name}: right-hand side has non-finite entries")
    return b


def _sweep_numpy(w: np.ndarray, v: np.ndarray, tol: float, skip: float, max_sweeps: int):
    """Cyclic Jacobi sweeps, in place. Returns (sweeps_done, max_off_diag);
    sweeps_done is -1 when the tolerance was not reached."""
    n = w.shape[0]
    for sweep in range(max_sweeps):
        off = float(np.abs(w - np.diag(np.diag(w))).max())
        if off <= tol:
            return sweep, off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if abs(apq) <= skip:
                    continue
                # two-sided Givens rotation zeroing w[p, q]; rows are updated
                # and mirrored into columns since w stays symmetric
                app = w[p, p]
                aqq = w[q, q]
                theta = 0.5 * (aqq - app) / apq
                if theta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rp = c * w[p, :] - s * w[q, :]
                rq = s * w[p, :] + c * w[q, :]
                rp[p] = app - t * apq
                rp[q] = 0.0
                rq[q] = aqq + t * apq
                rq[p] = 0.0
                w[p, :] = rp
                w[q, :] = rq
                w[:, p] = rp
                w[:, q] = rq
                vp = c * v[:, p] - s * v[:, q]
                v[:, q] = s * v[:, p] + c * v[:, q]
                v[:, p] = vp
    off = float(np.abs(w - np.diag(np.diag(w))).max())
    return (max_sweeps if off <= tol else -1), off


def _build_sweep_jit():
    from numba import njit

    @njit(cache=True)
    def _sweep_jit(w, v, tol, skip, max_sweeps):  # pragma: no cover - compiled
        n = w.shape[0]
        for sweep in range(max_sweeps):
            off = 0.0
            for i in range(n - 1):
                for j in range(i + 1, n):
                    x = abs(w[i, j])
                    if x > off:
                        off = x
            if off <= tol:
                return sweep, off
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = w[p, q]
                    if abs(apq) <= skip:
                        continue
                    app = w[p, p]
                    aqq = w[q, q]
                    theta = 0.5 * (aqq - app) / apq
                    if theta == 0.0:
                        t = 1.0
                    else:
                        t = math.copysign(1.0, theta) / (
                            abs(theta) + math.sqrt(1.0 + theta * theta)
                        )
                    c = 1.0 / math.sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        wpk = w[p, k]
                        wqk = w[q, k]
                        w[p, k] = c * wpk - s * wqk
                        w[q, k] = s * wpk + c * wqk
                    w[p, p] = app - t * apq
                    w[q, q] = aqq + t * apq
                    w[p, q] = 0.0
                    w[q, p] = 0.0
                    for k in range(n):
                        w[k, p] = w[p, k]
                        w[k, q] = w[q, k]
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                x = abs(w[i, j])
                if x > off:
                    off = x
        if off <= tol:
            return max_sweeps, off
        return -1, off

    return _sweep_jit


if os.environ.get("MONOVIO_NO_JIT"):
    _sweep = _sweep_numpy
else:
    try:
        _sweep = _build_sweep_jit()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _sweep = _sweep_numpy


def jacobi_eigen(a, max_sweeps: int = _JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvectors as the corresponding orthonormal columns. Sweeps stop when
    the largest off-diagonal magnitude drops below 1e-12 * ||A||_F. The
    compiled and the plain-numpy sweep kernels apply the identical operation
    sequence and produce bitwise-equal results (covered by a test).
    """
    w = _as_symmetric(a, "jacobi_eigen").copy()
    n = w.shape[0]
    v = np.eye(n)
    if n == 1:
        return w[0, :1].copy(), v

    fnorm = float(np.sqrt((w * w).sum()))
    if fnorm == 0.0:
        return np.zeros(n), v
    tol = _JACOBI_REL_TOL * fnorm
    skip = tol / (10.0 * n)

    sweeps, off = _sweep(w, v, tol, skip, max_sweeps)
    if sweeps < 0:
        raise NumericalFailure(
            f"jacobi_eigen: no convergence after {max_sweeps} sweeps, "
            f"max off-diagonal residual {off:.3e}"
        )

    eigenvalues = np.diag(w).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def svd_square(a) -> SvdResult:
    """SVD of a square matrix with n <= 16, A = U diag(sigma) V^T.

    Built on jacobi_eigen of A^T A: the right singular vectors are its
    eigenvectors, sigma_i = ||A v_i||, and U columns come from A v_i / sigma_i
    with Gram-Schmidt completion where sigma_i is numerically zero. A final
    re-orthonormalization pass keeps U orthogonal even for clustered small
    singular values.
    """
    a = _as_square(a, "svd_square")
    n = a.shape[0]
    if n > MAX_SVD_DIM:
        raise ValueError(f"svd_square: dimension {n} exceeds capacity {MAX_SVD_DIM}")

    _, v = jacobi_eigen(a.T @ a)
    av = a @ v
    sigma = np.sqrt((av * av).sum(axis=0))

    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    v = v[:, order]
    av = av[:, order]

    sigma_max = sigma[0] if sigma[0] > 0.0 else 0.0
    cutoff = 1e-12 * sigma_max
    u = np.zeros((n, n))
    for i in range(n):
        if sigma[i] > cutoff and sigma[i] > 0.0:
            u[:, i] = av[:, i] / sigma[i]
        else:
            u[:, i] = _complete_column(u, i)
            sigma[i] = 0.0

    # modified Gram-Schmidt polish: restores orthogonality lost to the
    # squared conditioning of A^T A without disturbing the reconstruction
    for i in range(n):
        col = u[:, i]
        for j in range(i):
            col = col - (u[:, j] @ col) * u[:, j]
        nrm = np.sqrt(col @ col)
        if nrm < 0.5:
            col = _complete_column(u, i)
            nrm = 1.0
        u[:, i] = col / nrm

    return SvdResult(u=u, sigma=sigma, v=v)


def _complete_column(u: np.ndarray, i: int) -> np.ndarray:
    """Unit vector orthogonal to the first i columns of u (deterministic)."""
    n = u.shape[0]
    best = None
    best_norm = -1.0
    for k in range(n):
        cand = np.zeros(n)
        cand[k] = 1.0
        for j in range(i):
            cand = cand - (u[:, j] @ cand) * u[:, j]
        nrm = float(np.sqrt(cand @ cand))
        if nrm > best_norm:
            best_norm = nrm
            best = cand / nrm
        if nrm > 0.9:
            break
    if best is None or best_norm <= 1e-8:
        raise NumericalFailure("svd_square: failed to complete orthogonal basis")
    return best


def inverse_power(a, shift: float, max_iter: int = 300, tol: float = 1e-10):
    """Eigenpair of a symmetric matrix nearest to `shift` by inverse iteration.

    Fixed-shift iteration drives the vector toward the target eigenspace; a
    few Rayleigh-quotient steps then polish the pair to full precision, which
    also handles clustered eigenvalues where plain inverse iteration crawls.
    Returns (eigenvalue, eigenvector). Raises SingularMatrix when the shifted
    matrix cannot be factored and NumericalFailure when the final residual
    ||A v - lambda v|| is not below 1e-8.
    """
    a = _as_symmetric(a, "inverse_power")
    n = a.shape[0]
    shifted = a - float(shift) * np.eye(n)
    lu, piv = _lu_factor(shifted, "inverse_power")

    v = np.ones(n) / np.sqrt(n)
    lam = float(v @ (a @ v))
    res = np.inf
    for _ in range(max_iter):
        v_new = _lu_solve(lu, piv, v)
        nrm = float(np.sqrt(v_new @ v_new))
        if not np.isfinite(nrm) or nrm == 0.0:
            raise NumericalFailure("inverse_power: iteration diverged")
        v = v_new / nrm
        lam = float(v @ (a @ v))
        residual = a @ v - lam * v
        res = float(np.sqrt(residual @ residual))
        if res < 1e-4:
            break

    # Rayleigh-quotient polish; a singular factorization here means v already
    # spans the eigenvector to machine precision
    for _ in range(5):
        if res < tol:
            break
        try:
            lu_r, piv_r = _lu_factor(a - lam * np.eye(n), "inverse_power")
        except SingularMatrix:
            break
        v_new = _lu_solve(lu_r, piv_r, v)
        nrm = float(np.sqrt(v_new @ v_new))
        if not np.isfinite(nrm) or nrm == 0.0:
            break
        v = v_new / nrm
        lam = float(v @ (a @ v))
        residual = a @ v - lam * v
        res = float(np.sqrt(residual @ residual))

    if res < 1e-8:
        return lam, v
    raise NumericalFailure(f"inverse_power: residual {res:.3e} after polish")


def cholesky_factor(a) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix (L with A = L L^T)."""
    a = _as_symmetric(a, "cholesky_factor")
    n = a.shape[0]
    if n > MAX_SOLVE_DIM:
        raise ValueError(f"cholesky_factor: dimension {n} exceeds capacity {MAX_SOLVE_DIM}")
    l = np.zeros((n, n))
    for j in range(n):
        d = a[j, j] - l[j, :j] @ l[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise NotPositiveDefinite(j, float(d))
        l[j, j] = np.sqrt(d)
        if j + 1 < n:
            l[j + 1 :, j] = (a[j + 1 :, j] - l[j + 1 :, :j] @ l[j, :j]) / l[j, j]
    return l


def solve_spd(a, b) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky."""
    a = _as_symmetric(a, "solve_spd")
    n = a.shape[0]
    b = _as_vector(b, n, "solve_spd")
    l = cholesky_factor(a)
    y = _forward_sub(l, b)
    return _backward_sub_transposed(l, y)


def _forward_sub(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = l.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - l[i, :i] @ y[:i]) / l[i, i]
    return y


def _backward_sub_transposed(l: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = l.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - l[i + 1 :, i] @ x[i + 1 :]) / l[i, i]
    return x


def _lu_factor(a: np.ndarray, name: str):
    n = a.shape[0]
    if n > MAX_SOLVE_DIM:
        raise ValueError(f"{name}: dimension {n} exceeds capacity {MAX_SOLVE_DIM}")
    lu = a.copy()
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < _PIVOT_TOL:
            raise SingularMatrix(f"{name}: pivot {k} below {_PIVOT_TOL:g}")
        if p != k:
            lu[[k, p], :] = lu[[p, k], :]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, piv


def _lu_solve(lu: np.ndarray, piv: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = b[piv].astype(np.float64, copy=True)
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def solve_general(a, b) -> np.ndarray:
    """Solve A x = b for general nonsingular A via partially pivoted LU."""
    a = _as_square(a, "solve_general")
    n = a.shape[0]
    b = _as_vector(b, n, "solve_general")
    lu, piv = _lu_factor(a, "solve_general")
    return _lu_solve(lu, piv, b)


def inv_spd(a) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor."""
    a = _as_symmetric(a, "inv_spd")
    n = a.shape[0]
    l = cholesky_factor(a)
    inv = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        y = _forward_sub(l, e)
        inv[:, j] = _backward_sub_transposed(l, y)
    return 0.5 * (inv + inv.T)
