"""Symmetric positive definite matrix toolbox.

Covariance estimation, eigendecomposition-based matrix functions, the
affine-invariant geometry (log/exp maps, tangent inner product, distances,
Karcher mean), and the norm-preserving half-vectorization.  All matrix
functions accept stacked inputs of shape ``(..., n, n)`` and operate on each
matrix independently.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericError

#: Relative ridge added to ill-conditioned covariance estimates.
RIDGE_EPS = 1e-6

_SYM_TOL = 1e-10


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _check_symmetric(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - np.swapaxes(M, -1, -2))) > _SYM_TOL * scale:
        raise ValueError(f"{name} is asymmetric beyond tolerance")
    return _sym(M)


def _eigh_apply(C, fn, name="matrix", require_pd=False):
    """Apply a scalar function to the eigenvalues of symmetric ``C``."""
    C = _check_symmetric(C, name)
    w, V = np.linalg.eigh(C)
    if require_pd and np.min(w) <= 0.0:
        raise NumericError(f"{name} is not positive definite (min eig {np.min(w):.3e})")
    out = (V * fn(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return _sym(out)


def is_spd(C, tol=0.0):
    """True when ``C`` is symmetric with all eigenvalues above ``tol``."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(C))))
    if np.max(np.abs(C - C.T)) > _SYM_TOL * scale:
        return False
    return bool(np.min(np.linalg.eigvalsh(_sym(C))) > tol)


def covariances(trials):
    """Sample covariance of each trial window, regularized to be SPD.

    For a window ``X`` of shape ``(n_channels, n_samples)`` the estimate is
    ``X @ X.T / (n_samples - 1)``.  When the smallest eigenvalue falls below
    ``RIDGE_EPS * trace(C) / n_channels`` a ridge of that size is added, so
    the result is always positive definite.

    Parameters
    ----------
    trials : ndarray, shape (..., n_channels, n_samples)

    Returns
    -------
    ndarray, shape (..., n_channels, n_channels)
    """
    X = np.asarray(trials, dtype=np.float64)
    if X.shape[-1] < 2:
        raise ValueError("need at least 2 samples to estimate a covariance")
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite samples")
    n = X.shape[-2]
    C = _sym(X @ np.swapaxes(X, -1, -2) / (X.shape[-1] - 1))
    w = np.linalg.eigvalsh(C)
    tau = np.trace(C, axis1=-2, axis2=-1) / n
    tau = np.where(tau > 0.0, tau, 1.0)
    ridge = RIDGE_EPS * tau
    need = w[..., 0] < ridge
    if np.any(need):
        eye = np.eye(n)
        C = C + np.where(need, ridge, 0.0)[..., None, None] * eye
    return C


def covariance(x):
    """Regularized SPD covariance of a single ``(n_channels, n_samples)`` window."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-d (n_channels, n_samples) array")
    return covariances(x[None])[0]


def logm(C):
    """Matrix logarithm of an SPD matrix via its eigendecomposition."""
    return _eigh_apply(C, np.log, name="logm input", require_pd=True)


def expm(S):
    """Matrix exponential of a symmetric matrix."""
    return _eigh_apply(S, np.exp, name="expm input")


def sqrtm(C):
    """Principal square root of an SPD matrix."""
    return _eigh_apply(C, np.sqrt, name="sqrtm input", require_pd=True)


def invsqrtm(C):
    """Inverse principal square root of an SPD matrix."""
    return _eigh_apply(C, lambda w: 1.0 / np.sqrt(w), name="invsqrtm input",
                       require_pd=True)


def log_map(C, Cref):
    """Map an SPD matrix to the tangent space at ``Cref``.

    Computes ``Cref^(1/2) logm(Cref^(-1/2) C Cref^(-1/2)) Cref^(1/2)``.
    """
    R = invsqrtm(Cref)
    Rh = sqrtm(Cref)
    return _sym(Rh @ logm(_sym(R @ C @ R)) @ Rh)


def exp_map(S, Cref):
    """Inverse of :func:`log_map`: map a tangent vector back to the manifold."""
    R = invsqrtm(Cref)
    Rh = sqrtm(Cref)
    S = _check_symmetric(S, "tangent vector")
    return _sym(Rh @ expm(_sym(R @ S @ R)) @ Rh)


def inner_tangent(S1, S2, Cref):
    """Affine-invariant inner product of two tangent vectors at ``Cref``.

    ``<S1, S2> = trace(Cref^(-1) S1 Cref^(-1) S2)``.
    """
    S1 = _check_symmetric(S1, "tangent vector")
    S2 = _check_symmetric(S2, "tangent vector")
    A1 = np.linalg.solve(Cref, S1)
    A2 = np.linalg.solve(Cref, S2)
    return float(np.trace(A1 @ A2))


def dist_euclid(A, B):
    """Frobenius distance between two matrices."""
    return float(np.linalg.norm(np.asarray(A, float) - np.asarray(B, float)))


def gen_eigh(C1, C2):
    """Generalized symmetric eigenproblem ``C1 u = lam C2 u`` with SPD ``C2``.

    Solved by Cholesky whitening of ``C2`` followed by a symmetric
    eigendecomposition, so the eigenvectors satisfy ``U.T @ C2 @ U = I``.

    Returns
    -------
    (lam, U)
        Eigenvalues in ascending order and the matching eigenvector columns.
    """
    C1 = _check_symmetric(C1, "C1")
    C2 = _check_symmetric(C2, "C2")
    try:
        L = np.linalg.cholesky(C2)
    except np.linalg.LinAlgError as exc:
        raise NumericError("C2 is not positive definite") from exc
    Li = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    W = _sym(Li @ C1 @ Li.T)
    lam, V = np.linalg.eigh(W)
    return lam, Li.T @ V


def dist_riemann(A, B):
    """Affine-invariant Riemannian distance between two SPD matrices.

    ``sqrt(sum(log(lam)^2))`` over the generalized eigenvalues of
    ``(B, A)``; invariant under congruence ``X -> W X W.T``.
    """
    lam, _ = gen_eigh(B, A)
    if np.min(lam) <= 0.0:
        raise NumericError("inputs are not positive definite")
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def arithmetic_mean(Cs):
    """Elementwise average of a non-empty sequence of matrices."""
    A = np.asarray(Cs, dtype=np.float64)
    if A.ndim != 3 or A.shape[0] == 0:
        raise ValueError("expected a non-empty sequence of square matrices")
    return A.mean(axis=0)


def geometric_mean(Cs, tol=1e-8, max_iter=50):
    """Karcher mean of SPD matrices under the affine-invariant metric.

    Fixed-point iteration started from the arithmetic mean: at each step the
    pool is mapped to the tangent space at the current estimate, the tangent
    vectors are averaged, and the estimate moves along the exponential map.
    The plain unit step contracts the error at rate ``|1 - lam|`` per mode,
    where ``lam`` ranges over the spectrum of the local Hessian of the summed
    squared distances.  Tight pools keep that spectrum near 1 and converge in
    a handful of steps, but widely spread pools push the top of the spectrum
    toward (and past) 2, where the unit step crawls or oscillates.  The loop
    therefore estimates the dominant eigenvalue from the signed ratio of
    consecutive tangent means and rescales the step to ``2 / (1 + lam)``,
    which contracts every mode at rate ``(lam - 1) / (lam + 1)`` at worst.
    As a safety net the step is halved while it would increase the sum of
    squared distances to the pool.  Stops when the Frobenius norm of the
    tangent mean falls below ``tol``.

    Parameters
    ----------
    Cs : sequence of ndarray, each (n, n) SPD
    tol : float
    max_iter : int

    Returns
    -------
    ndarray, the mean.

    Raises
    ------
    NumericError
        If the iteration has not converged after ``max_iter`` steps; the
        exception carries the last residual.
    """
    A = np.asarray(Cs, dtype=np.float64)
    if A.ndim != 3 or A.shape[0] == 0:
        raise ValueError("expected a non-empty sequence of square matrices")
    if A.shape[0] == 1:
        return A[0].copy()

    def tangent_state(G):
        R = invsqrtm(G)
        Rh = sqrtm(G)
        S = logm(_sym(R @ A @ R))
        return S.mean(axis=0), Rh, float(np.sum(S * S))

    G = A.mean(axis=0)
    T, Rh, cost = tangent_state(G)
    theta = 1.0
    for _ in range(max_iter):
        residual = float(np.linalg.norm(Rh @ T @ Rh))
        if residual < tol:
            return G
        step = theta
        for _ in range(12):
            Gn = _sym(Rh @ expm(step * T) @ Rh)
            Tn, Rhn, costn = tangent_state(Gn)
            if costn <= cost:
                break
            step *= 0.5
        tt = float(np.sum(T * T))
        rho = float(np.sum(Tn * T)) / tt if tt > 0.0 else 0.0
        lam = (1.0 - rho) / step
        theta = 2.0 / (1.0 + lam) if lam > 1.0 else 1.0
        G, T, Rh, cost = Gn, Tn, Rhn, costn
    residual = float(np.linalg.norm(Rh @ T @ Rh))
    if residual < tol:
        return G
    raise NumericError(
        f"Karcher mean did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
    )


@lru_cache(maxsize=None)
def _vect_index(n):
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, scale


def vect(S):
    """Half-vectorize a symmetric matrix, preserving the Frobenius norm.

    The upper triangle is read in row-major order; off-diagonal entries are
    scaled by ``sqrt(2)`` so ``norm(vect(S)) == norm(S, 'fro')`` and plain
    dot products of vectorized tangent vectors reproduce tangent-space inner
    products at the identity.

    Parameters
    ----------
    S : ndarray, shape (..., n, n), symmetric

    Returns
    -------
    ndarray, shape (..., n * (n + 1) / 2)
    """
    S = _check_symmetric(S, "vect input")
    iu, scale = _vect_index(S.shape[-1])
    return S[..., iu[0], iu[1]] * scale


def unvect(v):
    """Rebuild the symmetric matrix from its half-vectorization."""
    v = np.asarray(v, dtype=np.float64)
    m = v.shape[-1]
    n = int((np.sqrt(8.0 * m + 1.0) - 1.0) / 2.0)
    if n * (n + 1) // 2 != m:
        raise ValueError(f"length {m} is not a triangular number")
    iu, scale = _vect_index(n)
    S = np.zeros(v.shape[:-1] + (n, n))
    S[..., iu[0], iu[1]] = v / scale
    S = S + np.swapaxes(S, -1, -2)
    S[..., np.arange(n), np.arange(n)] /= 2.0
    return S
