"""Small dense kernels: GSVD of a matrix pair, compact PSD square roots and a
bounded scalar minimizer.

Everything here operates on matrices whose size is the projected dimension
``k`` (hybrid solver) or a small test dimension (oracle), never on the full
problem size of a large-scale run.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.optimize

from .exceptions import DimensionError, JointRankError, NotPSDError

__all__ = [
    "GsvdFactors",
    "gsvd_pair",
    "sym_psd_sqrt",
    "minimize_scalar",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class GsvdFactors:
    """Generalized SVD ``A = U_A D_A Z^{-1}``, ``L = U_L D_L Z^{-1}``.

    ``sigma`` and ``rho`` hold the diagonals of ``D_A`` and ``D_L`` aligned
    with the columns of ``Z`` (length ``n``), ordered so that ``sigma`` is
    non-increasing.  The first ``r`` entries are the pure-``A`` block
    (``sigma = 1``, ``rho = 0``), the next ``q`` the coupled block with
    ``sigma**2 + rho**2 = 1`` and the rest the pure-``L`` block
    (``sigma = 0``, ``rho = 1``).
    """

    U_A: np.ndarray
    U_L: np.ndarray
    Z: np.ndarray
    Zinv: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    r: int
    q: int

    @property
    def m(self) -> int:
        return self.U_A.shape[0]

    @property
    def p(self) -> int:
        return self.U_L.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def gamma(self) -> np.ndarray:
        """Generalized singular values, ``inf`` on the first block and 0 on the last."""
        g = np.empty(self.n)
        g[: self.r] = np.inf
        mid = slice(self.r, self.r + self.q)
        g[mid] = self.sigma[mid] / self.rho[mid]
        g[self.r + self.q:] = 0.0
        return g

    @property
    def D_A(self) -> np.ndarray:
        D = np.zeros((self.m, self.n))
        d = min(self.m, self.n)
        D[np.arange(d), np.arange(d)] = self.sigma[:d]
        return D

    @property
    def D_L(self) -> np.ndarray:
        # Nonzero diagonal sits on rows p - n + j for columns j >= r.
        D = np.zeros((self.p, self.n))
        cols = np.arange(self.r, self.n)
        D[self.p - self.n + cols, cols] = self.rho[cols]
        return D


def gsvd_pair(A, L, rank_tol: float = 1e-12) -> GsvdFactors:
    """GSVD of the pair ``{A, L}`` with ``L`` of full row rank ``p <= n``.

    Economy QR of the stacked matrix ``[A; L] = [Q1; Q2] R`` followed by a
    cosine-sine extraction: the SVD of ``Q1`` fixes the directions whose
    cosine is below ``1/sqrt(2)``, and an SVD of ``Q2`` restricted to the
    remaining directions resolves the small sines accurately.

    Parameters
    ----------
    A : array_like, shape (m, n)
    L : array_like, shape (p, n)
        May have zero rows, in which case every direction is in the pure-``A``
        block.
    rank_tol : float
        Relative threshold for the rank decisions that fix ``r`` and ``q``.
        Values exactly at the threshold are assigned to the coupled block.

    Raises
    ------
    JointRankError
        If ``[A; L]`` is rank deficient, or ``L`` does not have full row rank.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    L = np.asarray(L, dtype=float).reshape(-1, n)
    p = L.shape[0]
    if p > n:
        raise DimensionError(f"L must have at most n={n} rows, got {p}")
    if m + p < n:
        raise JointRankError("joint rank violation: m + p < n")

    Q, R = np.linalg.qr(np.vstack([A, L]), mode="reduced")
    rsv = np.linalg.svd(R, compute_uv=False)
    if not np.all(np.isfinite(rsv)):
        raise np.linalg.LinAlgError("non-finite values in stacked factorization")
    if rsv[-1] <= rank_tol * rsv[0]:
        raise JointRankError("joint rank violation: N(A) and N(L) intersect")
    Q1, Q2 = Q[:m], Q[m:]

    U1, c_svd, Vt = np.linalg.svd(Q1, full_matrices=True)
    V = Vt.T.copy()
    c = np.zeros(n)
    c[: c_svd.size] = c_svd
    s = np.zeros(n)
    U_A = U1.copy()
    k = int(np.count_nonzero(c > _INV_SQRT2))
    lcols = np.zeros((p, n))

    if p == 0:
        c[:] = 1.0
    else:
        if k > 0:
            # Large cosines: sines are small and must come from Q2 directly.
            T = Q2 @ V[:, :k]
            Ut, st, Wt = np.linalg.svd(T, full_matrices=True)
            W = Wt.T[:, ::-1]
            s_blk = np.zeros(k)
            s_blk[: st.size] = st
            s[:k] = s_blk[::-1]
            V[:, :k] = V[:, :k] @ W
            X = U1[:, :k] @ (c[:k, None] * W)
            Qx, Rx = np.linalg.qr(X)
            sgn = np.where(np.diag(Rx) < 0, -1.0, 1.0)
            U_A[:, :k] = Qx * sgn
            c[:k] = np.abs(np.diag(Rx))
            # Column i of Ut pairs with original index i, i.e. reversed position k-1-i.
            for i in range(st.size):
                lcols[:, k - 1 - i] = Ut[:, i]
        if k < n:
            Y = Q2 @ V[:, k:]
            s[k:] = np.linalg.norm(Y, axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                lcols[:, k:] = np.where(s[k:] > 0, Y / s[k:], 0.0)

    h = np.hypot(c, s)
    c /= h
    s /= h
    thr = rank_tol * max(c.max(), s.max())
    r = int(np.count_nonzero(s < thr))
    nz = int(np.count_nonzero(c < thr))
    q = n - r - nz
    if n - r != p:
        # the number of nonzero sines is rank(L)
        raise JointRankError("L does not have full row rank")
    c[:r], s[:r] = 1.0, 0.0
    c[n - nz:], s[n - nz:] = 0.0, 1.0

    U_L = np.zeros((p, p))
    if p > 0:
        used = lcols[:, r:]
        U_L[:, p - n + r:] = used
        if p - n + r > 0:
            Qf, _ = np.linalg.qr(used, mode="complete")
            U_L[:, : p - n + r] = Qf[:, n - r:]

    Z = scipy.linalg.solve_triangular(R, V)
    Zinv = V.T @ R
    return GsvdFactors(U_A=U_A, U_L=U_L, Z=Z, Zinv=Zinv, sigma=c, rho=s, r=r, q=q)


def sym_psd_sqrt(S, tol: float = 1e-12, neg_tol: float | None = None) -> np.ndarray:
    """Compact square root ``C`` with ``C.T @ C = S`` for symmetric PSD ``S``.

    ``C`` has one row per eigenvalue above ``tol * ||S||``, ordered by
    decreasing eigenvalue; each row is signed so its largest-magnitude entry
    is positive.  Eigenvalues below ``-neg_tol * ||S||`` (``neg_tol`` defaults
    to ``tol``) raise :class:`NotPSDError`.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = S.shape[0]
    if S.shape != (n, n):
        raise DimensionError(f"expected a square matrix, got {S.shape}")
    if n == 0:
        return np.zeros((0, 0))
    neg_tol = tol if neg_tol is None else neg_tol
    evals, evecs = np.linalg.eigh(0.5 * (S + S.T))
    nrm = np.abs(evals).max()
    if nrm == 0.0:
        return np.zeros((0, n))
    if np.abs(S - S.T).max() > 1e-12 * nrm * n:
        raise ValueError("matrix is not symmetric")
    if evals[0] < -neg_tol * nrm:
        raise NotPSDError(f"not PSD: eigenvalue {evals[0]:.3e} below -{neg_tol:g}*||S||")
    keep = np.flatnonzero(evals > tol * nrm)[::-1]
    C = np.sqrt(evals[keep])[:, None] * evecs[:, keep].T
    lead = C[np.arange(C.shape[0]), np.abs(C).argmax(axis=1)]
    return C * np.where(lead < 0, -1.0, 1.0)[:, None]


def minimize_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    rel_tol: float = 1e-8,
    maxiter: int = 200,
) -> tuple[float, float]:
    """Bounded minimization of ``f`` on ``[lo, hi]``.

    Golden-section search with parabolic steps (Brent), followed by a
    comparison against both endpoints so that monotone functions return the
    boundary exactly.

    Returns
    -------
    argmin, fmin : float

    Raises
    ------
    FloatingPointError
        If ``f`` returns a non-finite value.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")

    def checked(x):
        fx = float(f(x))
        if not np.isfinite(fx):
            raise FloatingPointError(f"objective is not finite at x={x!r}: {fx}")
        return fx

    res = scipy.optimize.minimize_scalar(
        checked,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": rel_tol * (hi - lo), "maxiter": maxiter},
    )
    best_x, best_f = float(res.x), float(res.fun)
    for x in (lo, hi):
        fx = checked(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f
