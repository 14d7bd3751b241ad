"""Dense reference implementations for cross-checking the iterative solvers.

General-form Tikhonov (normal equations and GSVD expansion), TGSVD, the
generalized spectrum of ``{A^T A, G}``, filter factors of pGKB iterates and
explicit Krylov bases.  Intended for ``n`` up to a few hundred.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dense_core import GsvdFactors
from .exceptions import DimensionError, JointRankError
from .pgkb import Bidiagonal

__all__ = [
    "SpectrumReport",
    "FilterReport",
    "tikhonov_direct",
    "tikhonov_gsvd",
    "tikhonov_sweep",
    "tgsvd_solution",
    "generalized_spectrum",
    "gram_in_gsvd_basis",
    "filter_factors",
    "filtered_expansion",
    "krylov_subspace",
    "krylov_subspace_gsvd",
    "subspace_distance",
]

MAX_ORACLE_N = 2000


def _dense(X):
    if hasattr(X, "to_dense"):
        return X.to_dense()
    if hasattr(X, "toarray"):
        return X.toarray()
    return np.asarray(X, dtype=float)


def tikhonov_direct(A, M, b, lam: float) -> np.ndarray:
    """``x = (A^T A + lam M)^{-1} A^T b`` by a dense Cholesky solve."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    A, M = _dense(A), _dense(M)
    if A.shape[1] > MAX_ORACLE_N:
        raise DimensionError(f"oracle is limited to n <= {MAX_ORACLE_N}")
    K = A.T @ A + lam * M
    try:
        c = scipy.linalg.cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise JointRankError("A^T A + lam M is singular; N(A) and N(M) intersect") from exc
    return scipy.linalg.cho_solve(c, A.T @ np.asarray(b, float))


def _coeffs(g: GsvdFactors, b) -> np.ndarray:
    """``u_{A,i}^T b / sigma_i`` for columns with ``sigma_i > 0``, zero elsewhere."""
    b = np.asarray(b, float)
    d = min(g.m, g.n)
    c = np.zeros(g.n)
    ub = g.U_A[:, :d].T @ b
    pos = g.sigma[:d] > 0
    c[:d][pos] = ub[pos] / g.sigma[:d][pos]
    return c


def tikhonov_gsvd(g: GsvdFactors, b, lam: float) -> np.ndarray:
    """Tikhonov solution from the filtered GSVD expansion of ``{A, L}``, ``M = L^T L``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    s2, r2 = g.sigma**2, g.rho**2
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(s2 > 0, s2 / (s2 + lam * r2), 0.0)
    return g.Z @ (f * _coeffs(g, b))


def tikhonov_sweep(A, M, b, x_true, lambdas):
    """Relative error of direct Tikhonov over ``lambdas``.

    Returns
    -------
    best_lam : float
    best_re : float
    errors : ndarray
    """
    A, M = _dense(A), _dense(M)
    b = np.asarray(b, float)
    x_true = np.asarray(x_true, float)
    AtA, Atb = A.T @ A, A.T @ b
    tn = np.linalg.norm(x_true)
    errs = []
    for lam in lambdas:
        c = scipy.linalg.cho_factor(AtA + lam * M)
        errs.append(np.linalg.norm(scipy.linalg.cho_solve(c, Atb) - x_true) / tn)
    errs = np.asarray(errs)
    i = int(np.argmin(errs))
    return float(lambdas[i]), float(errs[i]), errs


def tgsvd_solution(g: GsvdFactors, b, k: int) -> np.ndarray:
    """Truncated GSVD solution keeping the ``k`` dominant generalized components.

    The pure-``A`` block uses ``sigma_i = 1``.
    """
    if not 0 <= k <= g.r + g.q:
        raise ValueError(f"k must lie in [0, {g.r + g.q}], got {k}")
    c = _coeffs(g, b)
    return g.Z[:, :k] @ c[:k]


@dataclass
class SpectrumReport:
    xi: np.ndarray
    gamma: np.ndarray
    d_alpha: np.ndarray


def generalized_spectrum(g: GsvdFactors, alpha: float) -> SpectrumReport:
    """Eigenvalues of ``A^T A z = xi G z`` with ``G = A^T A + alpha L^T L``.

    ``xi = 1`` on the pure-``A`` block, ``gamma^2 / (gamma^2 + alpha)`` on the
    coupled block and 0 on the pure-``L`` block; ``d_alpha`` is the diagonal
    of ``Z^T G Z``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    s2, r2 = g.sigma**2, g.rho**2
    d_alpha = s2 + alpha * r2
    xi = s2 / d_alpha
    xi[: g.r] = 1.0
    xi[g.r + g.q:] = 0.0
    return SpectrumReport(xi=xi, gamma=g.gamma, d_alpha=d_alpha)


def gram_in_gsvd_basis(A, M, alpha: float, g: GsvdFactors) -> np.ndarray:
    """``Z^T (A^T A + alpha M) Z`` assembled densely."""
    A, M = _dense(A), _dense(M)
    AZ = A @ g.Z
    return AZ.T @ AZ + alpha * (g.Z.T @ M @ g.Z)


@dataclass
class FilterReport:
    theta: np.ndarray
    f: np.ndarray


def filter_factors(Bk: Bidiagonal | np.ndarray, spectrum: SpectrumReport) -> FilterReport:
    """Filter factors ``1 - prod_j (theta_j^2 - xi_i) / theta_j^2`` of the ``k``-th iterate."""
    B = Bk.matrix() if isinstance(Bk, Bidiagonal) else np.asarray(Bk, float)
    theta = np.linalg.svd(B, compute_uv=False)
    if theta.size and theta[-1] == 0:
        raise ZeroDivisionError("zero Ritz value; the bidiagonalization broke down")
    t2 = theta**2
    xi = np.asarray(spectrum.xi, float)
    f = 1.0 - np.prod((t2[None, :] - xi[:, None]) / t2[None, :], axis=1)
    return FilterReport(theta=theta, f=f)


def filtered_expansion(g: GsvdFactors, b, f) -> np.ndarray:
    """``sum_i f_i (u_{A,i}^T b / sigma_i) z_i``; terms with ``sigma_i = 0`` are dropped."""
    f = np.asarray(f, float)
    if f.shape != (g.n,):
        raise DimensionError(f"need {g.n} filter factors, got {f.shape}")
    return g.Z @ (f * _coeffs(g, b))


def _project_out(Q, v):
    for _ in range(2):
        v = v - Q @ (Q.T @ v)
    return v


def krylov_subspace(Gdense, Adense, b, k: int, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``K_k(G^{-1} A^T A, G^{-1} A^T b)``.

    Each new power is applied to the latest basis vector and orthogonalized
    twice; the process stops early, returning fewer columns, once the new
    direction is below ``tol`` relative to its norm before projection.
    """
    G, A = _dense(Gdense), _dense(Adense)
    c = scipy.linalg.cho_factor(G)
    v = scipy.linalg.cho_solve(c, A.T @ np.asarray(b, float))
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.zeros((G.shape[0], 0))
    Q = (v / nv)[:, None]
    AtA = A.T @ A
    while Q.shape[1] < k:
        v = scipy.linalg.cho_solve(c, AtA @ Q[:, -1])
        nv = np.linalg.norm(v)
        v = _project_out(Q, v)
        nr = np.linalg.norm(v)
        if nr <= tol * nv:
            break
        Q = np.column_stack([Q, v / nr])
    return Q


def krylov_subspace_gsvd(g: GsvdFactors, alpha: float, b, k: int, tol: float = 1e-10) -> np.ndarray:
    """The same subspace from its GSVD-coordinate form.

    Spanned by ``Z diag(xi)^i D_alpha^{-1} D_A^T U_A^T b`` for ``i < k``.
    """
    spec = generalized_spectrum(g, alpha)
    d = min(g.m, g.n)
    c = np.zeros(g.n)
    c[:d] = g.sigma[:d] * (g.U_A[:, :d].T @ np.asarray(b, float))
    c /= spec.d_alpha
    V = np.column_stack([spec.xi**i * c for i in range(k)])
    X = g.Z @ V
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.count_nonzero(diag > tol * diag[0])) if diag.size and diag[0] > 0 else 0
    return Q[:, :rank]


def subspace_distance(basis1, basis2, metric=None) -> float:
    """Largest principal angle (radians) between two orthonormal bases.

    With ``metric`` (SPD matrix) both bases are taken to be orthonormal in
    that inner product.  Small angles are computed from sines, large ones
    from cosines.
    """
    Q1 = np.asarray(basis1, float)
    Q2 = np.asarray(basis2, float)
    if Q1.ndim != 2 or Q2.ndim != 2 or Q1.shape != Q2.shape:
        raise DimensionError(f"bases must have equal shapes, got {Q1.shape} and {Q2.shape}")
    Mt = None if metric is None else _dense(metric)
    MQ2 = Q2 if Mt is None else Mt @ Q2
    cos = np.linalg.svd(Q1.T @ MQ2, compute_uv=False)
    cmin = float(np.clip(cos.min(), 0.0, 1.0)) if cos.size else 1.0
    if cmin < 0.7:
        return float(np.arccos(cmin))
    R = Q2 - Q1 @ (Q1.T @ MQ2)
    if Mt is None:
        s = np.linalg.norm(R, 2)
    else:
        s = np.sqrt(max(np.linalg.eigvalsh(R.T @ Mt @ R).max(), 0.0))
    return float(np.arcsin(min(s, 1.0)))
