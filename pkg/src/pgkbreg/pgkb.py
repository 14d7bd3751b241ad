"""Preconditioned Golub-Kahan bidiagonalization.

The process is Golub-Kahan bidiagonalization of ``A`` taken between
``(R^n, <.,.>_G)`` and ``(R^m, <.,.>_2)`` with ``G = A^T A + alpha M``.  The
adjoint of ``A`` in that pairing is ``G^{-1} A^T``, so each step needs one
solve with ``G``.  After ``k`` steps

    A W_k = U_{k+1} B_k,    U_{k+1}^T U_{k+1} = I,    W_k^T G W_k = I,

with ``B_k`` lower bidiagonal of size ``(k+1) x k``.  Both bases are fully
reorthogonalized (two modified Gram-Schmidt passes); the ``G``-inner
products use cached images ``g_j = G w_j`` so they cost one dot product each.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import BreakdownError, DimensionError
from .operators import (
    GramOperator,
    InnerSolveConfig,
    LinearOperator,
    aslinearoperator,
    cg_solve,
    make_gram,
)

__all__ = [
    "PgkbState",
    "Bidiagonal",
    "pgkb_start",
    "pgkb_extend",
    "pgkb_run",
    "reorth_against",
    "bidiagonal",
    "save_checkpoint",
    "load_checkpoint",
    "PgkbSnapshot",
]

BREAKDOWN_RTOL = 1e-14


@dataclass
class PgkbState:
    """Growing factorization produced by :func:`pgkb_start` / :func:`pgkb_extend`.

    ``k`` counts completed columns of ``B_k``.  At step ``k`` the state holds
    ``u_1..u_{k+1}``, ``w_1..w_{k+1}``, ``alpha_1..alpha_{k+1}`` and
    ``beta_1..beta_{k+1}``; the trailing ``alpha_{k+1}``, ``w_{k+1}`` are what
    the LSQR-style update needs for its next rotation.

    After a breakdown the state is frozen.  ``breakdown == 'beta'`` means
    ``A w_k`` lay in ``span(U_k)``: ``B_k`` is square and the last recorded
    beta is zero.  ``breakdown == 'alpha'`` means the new ``w`` vanished:
    ``B_k`` is complete, the last alpha is zero and the last ``w`` is zero.
    """

    A: LinearOperator
    M: LinearOperator
    G: GramOperator
    alpha: float
    inner_cfg: InnerSolveConfig
    U: list = field(default_factory=list)
    W: list = field(default_factory=list)
    GW: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    breakdown: str | None = None
    norm_est: float = 0.0
    inner_stats: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.betas) - 1

    @property
    def beta1(self) -> float:
        return self.betas[0]

    @property
    def breakdown_tol(self) -> float:
        return BREAKDOWN_RTOL * self.norm_est

    def U_matrix(self, k: int | None = None) -> np.ndarray:
        """``U_{k+1}`` (or ``U_k`` when a beta-breakdown made ``B_k`` square)."""
        k = self.k if k is None else k
        return np.column_stack(self.U[: k + 1])

    def W_matrix(self, k: int | None = None) -> np.ndarray:
        k = self.k if k is None else k
        if k == 0:
            return np.zeros((self.A.ncols, 0))
        return np.column_stack(self.W[:k])

    def GW_matrix(self, k: int | None = None) -> np.ndarray:
        k = self.k if k is None else k
        if k == 0:
            return np.zeros((self.A.ncols, 0))
        return np.column_stack(self.GW[:k])

    @property
    def inner_truncations(self) -> int:
        return sum(1 for s in self.inner_stats if not s[2])


@dataclass
class Bidiagonal:
    """Entries of ``B_k``: ``diag = alpha_1..alpha_k``, ``subdiag = beta_2..beta_{k+1}``.

    ``subdiag`` has ``k`` entries for the usual ``(k+1) x k`` shape and
    ``k - 1`` when the matrix is square (termination by beta-breakdown).
    """

    k: int
    diag: np.ndarray
    subdiag: np.ndarray
    beta1: float

    @property
    def square(self) -> bool:
        return self.subdiag.size < self.k

    def matrix(self) -> np.ndarray:
        rows = self.k if self.square else self.k + 1
        B = np.zeros((rows, self.k))
        idx = np.arange(self.k)
        B[idx, idx] = self.diag
        B[idx[: self.subdiag.size] + 1, idx[: self.subdiag.size]] = self.subdiag
        return B

    def singular_values(self) -> np.ndarray:
        if self.k == 0:
            return np.zeros(0)
        return np.linalg.svd(self.matrix(), compute_uv=False)


def reorth_against(v, basis, gram_images=None, passes: int = 2, tol: float | None = None) -> np.ndarray:
    """Remove from ``v`` its components along an orthonormal ``basis``.

    With ``gram_images`` (``g_j = G b_j``) the projection is taken in the
    ``G``-inner product, coefficient ``g_j^T v``; otherwise in the Euclidean
    one.  Runs ``passes`` sweeps of modified Gram-Schmidt.

    If ``tol`` is given and the Euclidean norm drops below ``tol`` times its
    input value, :class:`BreakdownError` is raised.
    """
    v = np.array(v, dtype=float)
    dots = basis if gram_images is None else gram_images
    if len(dots) != len(basis):
        raise DimensionError("gram_images must match the basis length")
    norm_in = np.linalg.norm(v)
    for _ in range(passes):
        for b, g in zip(basis, dots):
            v -= (g @ v) * b
    if tol is not None and np.linalg.norm(v) <= tol * norm_in:
        raise BreakdownError("vector annihilated by reorthogonalization")
    return v


def _inner_solve(state: PgkbState, rhs: np.ndarray) -> np.ndarray:
    res = cg_solve(state.G, rhs, state.inner_cfg)
    state.inner_stats.append((res.iters, res.relres, res.converged))
    return res.x


def pgkb_start(A, M, alpha: float, b, inner_cfg: InnerSolveConfig | None = None) -> PgkbState:
    """Initialize: ``beta_1 u_1 = b`` and ``alpha_1 w_1 = G^{-1} A^T u_1``."""
    A = aslinearoperator(A, "A")
    M = aslinearoperator(M, "M")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.nrows,):
        raise DimensionError(f"b must have length {A.nrows}, got {b.shape}")
    G = make_gram(A, M, alpha)
    state = PgkbState(A=A, M=M, G=G, alpha=float(alpha), inner_cfg=inner_cfg or InnerSolveConfig())

    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        raise ValueError("right-hand side b is zero")
    u = b / beta1
    t = A.adjoint(u)
    s = _inner_solve(state, t)
    # G s = A^T u_1, so s^T G s = s^T A^T u_1 without another G application.
    a2 = s @ t
    state.U.append(u)
    state.betas.append(beta1)
    if not np.isfinite(a2) or a2 <= 0.0:
        state.alphas.append(0.0)
        state.W.append(np.zeros(A.ncols))
        state.GW.append(np.zeros(A.ncols))
        state.breakdown = "alpha"
        return state
    a = np.sqrt(a2)
    state.alphas.append(a)
    state.W.append(s / a)
    state.GW.append(t / a)
    state.norm_est = a
    return state


def pgkb_extend(state: PgkbState) -> PgkbState:
    """Advance one step: produce ``beta_{k+2}, u_{k+2}, alpha_{k+2}, w_{k+2}``.

    ``alpha`` is evaluated as ``(s^T G s)^{1/2}`` with ``G s`` recomputed by one
    fresh application after reorthogonalization, since reorthogonalization
    invalidates the short recurrence for ``G w``.
    """
    if state.breakdown:
        raise BreakdownError(f"pGKB already terminated ({state.breakdown}-breakdown)")
    A = state.A
    w, u, a = state.W[-1], state.U[-1], state.alphas[-1]

    r = A.forward(w) - a * u
    r = reorth_against(r, state.U)
    beta = np.linalg.norm(r)
    if not np.isfinite(beta):
        raise BreakdownError("breakdown: non-finite beta")
    if beta <= state.breakdown_tol:
        state.betas.append(0.0)
        state.alphas.append(0.0)
        state.W.append(np.zeros(A.ncols))
        state.GW.append(np.zeros(A.ncols))
        state.breakdown = "beta"
        return state
    u_new = r / beta
    state.U.append(u_new)
    state.betas.append(beta)
    state.norm_est = max(state.norm_est, beta)

    s = _inner_solve(state, A.adjoint(u_new)) - beta * w
    s = reorth_against(s, state.W, state.GW)
    Gs = state.G.apply(s)
    a2 = s @ Gs
    if not np.isfinite(a2):
        raise BreakdownError("breakdown: non-finite alpha")
    a_new = np.sqrt(max(a2, 0.0))
    if a_new <= state.breakdown_tol:
        state.alphas.append(0.0)
        state.W.append(np.zeros(A.ncols))
        state.GW.append(np.zeros(A.ncols))
        state.breakdown = "alpha"
        return state
    state.alphas.append(a_new)
    state.W.append(s / a_new)
    state.GW.append(Gs / a_new)
    state.norm_est = max(state.norm_est, a_new)
    return state


def pgkb_run(A, M, alpha: float, b, k: int, inner_cfg: InnerSolveConfig | None = None) -> PgkbState:
    """Start and extend until ``k`` columns are available or the process breaks down."""
    state = pgkb_start(A, M, alpha, b, inner_cfg)
    while state.k < k and not state.breakdown:
        pgkb_extend(state)
    return state


def bidiagonal(state: PgkbState, k: int | None = None) -> Bidiagonal:
    """Return ``B_k`` (default: the largest available)."""
    k = state.k if k is None else k
    if not 1 <= k <= state.k:
        raise ValueError(f"k must be in [1, {state.k}], got {k}")
    diag = np.array(state.alphas[:k])
    sub = np.array(state.betas[1: k + 1])
    if k == state.k and state.breakdown == "beta":
        sub = sub[:-1]
    return Bidiagonal(k=k, diag=diag, subdiag=sub, beta1=state.betas[0])


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"PGKBCKPT"
_VERSION = 1
_HEADER = struct.Struct("<8sI6Qd")
_BREAKDOWN_CODES = {None: 0, "beta": 1, "alpha": 2}


@dataclass
class PgkbSnapshot:
    """Operator-free copy of a :class:`PgkbState` read back from a checkpoint."""

    alpha: float
    U: np.ndarray
    W: np.ndarray
    GW: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    breakdown: str | None

    @property
    def k(self) -> int:
        return self.betas.size - 1


def save_checkpoint(state: PgkbState, path) -> None:
    """Write ``state`` as a versioned header followed by little-endian float64 data.

    Layout: magic ``PGKBCKPT``, uint32 version, uint64 ``m, n, nU, nW,
    nalphas, nbetas``, float64 ``alpha``, uint64 breakdown code, then the
    arrays alphas, betas, U, W, GW (one row per vector).
    """
    m, n = state.A.shape
    U = np.array(state.U, dtype="<f8").reshape(-1, m)
    W = np.array(state.W, dtype="<f8").reshape(-1, n)
    GW = np.array(state.GW, dtype="<f8").reshape(-1, n)
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, m, n, U.shape[0], W.shape[0],
                              len(state.alphas), len(state.betas), state.alpha))
        fh.write(struct.pack("<Q", _BREAKDOWN_CODES[state.breakdown]))
        for arr in (np.asarray(state.alphas, "<f8"), np.asarray(state.betas, "<f8"), U, W, GW):
            fh.write(arr.tobytes())


def load_checkpoint(path) -> PgkbSnapshot:
    data = Path(path).read_bytes()
    magic, version, m, n, nU, nW, na, nb, alpha = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError("not a pGKB checkpoint")
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = _HEADER.size
    (code,) = struct.unpack_from("<Q", data, off)
    off += 8

    def take(count, shape):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        return arr.astype(float)

    alphas = take(na, (na,))
    betas = take(nb, (nb,))
    U = take(nU * m, (nU, m)).T
    W = take(nW * n, (nW, n)).T
    GW = take(nW * n, (nW, n)).T
    breakdown = {v: k for k, v in _BREAKDOWN_CODES.items()}[code]
    return PgkbSnapshot(alpha=alpha, U=U, W=W, GW=GW, alphas=alphas, betas=betas, breakdown=breakdown)
