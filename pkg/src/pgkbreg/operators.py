"""Matrix-free linear operators, the regularized Gram operator and the inner
conjugate-gradient solver.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .exceptions import BreakdownError, DimensionError, OperatorNotSPDError

__all__ = [
    "LinearOperator",
    "GramOperator",
    "InnerSolveConfig",
    "CGResult",
    "op_apply",
    "make_gram",
    "cg_solve",
    "aslinearoperator",
    "load_matrix_market",
    "RELAXED_INNER",
    "TIGHT_INNER",
]


class LinearOperator:
    """A linear map given by its forward and adjoint actions.

    Parameters
    ----------
    shape : (int, int)
        ``(nrows, ncols)``.
    matvec : callable
        ``v -> A v``.  Must accept a 1-D vector of length ``ncols``; if it
        also accepts 2-D column blocks, :meth:`to_dense` uses that.
    rmatvec : callable, optional
        ``u -> A^T u``.  Defaults to ``matvec`` when ``symmetric`` is set.
    symmetric : bool
    dense : ndarray, sparse matrix or callable, optional
        Explicit matrix (or a zero-argument builder) returned by
        :meth:`to_dense` instead of probing with unit vectors.
    name : str, optional

    Notes
    -----
    ``n_forward`` and ``n_adjoint`` count calls made through :meth:`forward`
    and :meth:`adjoint`.  They are guarded by a lock so an operator can be
    shared between solver runs in different threads.
    """

    def __init__(
        self,
        shape: tuple[int, int],
        matvec: Callable[[np.ndarray], np.ndarray],
        rmatvec: Callable[[np.ndarray], np.ndarray] | None = None,
        *,
        symmetric: bool = False,
        dense=None,
        name: str | None = None,
    ):
        self.shape = (int(shape[0]), int(shape[1]))
        if rmatvec is None:
            if not symmetric:
                raise ValueError("rmatvec is required for a non-symmetric operator")
            if self.shape[0] != self.shape[1]:
                raise DimensionError("a symmetric operator must be square")
            rmatvec = matvec
        self._matvec = matvec
        self._rmatvec = rmatvec
        self.symmetric = symmetric
        self._dense = dense
        self.name = name or "LinearOperator"
        self._lock = threading.Lock()
        self.n_forward = 0
        self.n_adjoint = 0

    def __repr__(self):
        return f"<{self.name} {self.shape[0]}x{self.shape[1]}>"

    @property
    def nrows(self) -> int:
        return self.shape[0]

    @property
    def ncols(self) -> int:
        return self.shape[1]

    def forward(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.ncols:
            raise DimensionError(f"{self.name}: forward expects length {self.ncols}, got {v.shape[0]}")
        with self._lock:
            self.n_forward += 1
        return np.asarray(self._matvec(v), dtype=float)

    def adjoint(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.nrows:
            raise DimensionError(f"{self.name}: adjoint expects length {self.nrows}, got {u.shape[0]}")
        with self._lock:
            self.n_adjoint += 1
        return np.asarray(self._rmatvec(u), dtype=float)

    __matmul__ = forward

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(
            (self.ncols, self.nrows),
            self._rmatvec,
            self._matvec,
            symmetric=self.symmetric,
            dense=None if self._dense is None else (lambda: self.to_dense().T),
            name=f"{self.name}.T",
        )

    def reset_counts(self):
        with self._lock:
            self.n_forward = 0
            self.n_adjoint = 0

    def to_dense(self) -> np.ndarray:
        """Materialize the operator as a dense array (does not touch the counters)."""
        d = self._dense() if callable(self._dense) else self._dense
        if d is not None:
            return d.toarray() if sp.issparse(d) else np.array(d, dtype=float)
        eye = np.eye(self.ncols)
        try:
            out = np.asarray(self._matvec(eye), dtype=float)
            if out.shape == self.shape:
                return out
        except (ValueError, IndexError):
            pass
        return np.column_stack([self._matvec(eye[:, j]) for j in range(self.ncols)])

    @classmethod
    def from_matrix(cls, mat, name: str | None = None, symmetric: bool | None = None) -> "LinearOperator":
        """Wrap a dense array or a scipy sparse matrix."""
        if sp.issparse(mat):
            mat = sp.csr_matrix(mat, dtype=float)
            matT = mat.T.tocsr()
        else:
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            matT = mat.T
        if symmetric is None:
            symmetric = False
        return cls(
            mat.shape,
            lambda v: mat @ v,
            lambda u: matT @ u,
            symmetric=symmetric,
            dense=mat,
            name=name or ("SparseMatrix" if sp.issparse(mat) else "DenseMatrix"),
        )

    @classmethod
    def identity(cls, n: int) -> "LinearOperator":
        return cls((n, n), lambda v: np.array(v, dtype=float), symmetric=True,
                   dense=lambda: np.eye(n), name="Identity")

    @classmethod
    def zeros(cls, m: int, n: int | None = None) -> "LinearOperator":
        n = m if n is None else n
        return cls(
            (m, n),
            lambda v: np.zeros((m,) + np.shape(v)[1:]),
            lambda u: np.zeros((n,) + np.shape(u)[1:]),
            symmetric=(m == n),
            dense=lambda: np.zeros((m, n)),
            name="Zero",
        )


def aslinearoperator(obj, name: str | None = None) -> LinearOperator:
    """Return ``obj`` if it is already an operator, otherwise wrap it as a matrix."""
    if isinstance(obj, LinearOperator):
        return obj
    return LinearOperator.from_matrix(obj, name=name)


def op_apply(op: LinearOperator, v, mode: str = "forward") -> np.ndarray:
    """Apply ``op`` (``mode='forward'``) or its transpose (``mode='adjoint'``)."""
    if mode == "forward":
        return op.forward(v)
    if mode == "adjoint":
        return op.adjoint(v)
    raise ValueError(f"mode must be 'forward' or 'adjoint', got {mode!r}")


class GramOperator:
    """The regularized normal operator ``G = A^T A + alpha M``.

    Only the action ``v -> A^T (A v) + alpha M v`` is used by the iterative
    paths; :meth:`solve_direct` densifies and Cholesky-factors ``G`` once, for
    small problems or experiments that want exact inner solves.
    """

    def __init__(self, A: LinearOperator, M: LinearOperator, alpha: float):
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if M.shape != (A.ncols, A.ncols):
            raise DimensionError(f"M must be {A.ncols}x{A.ncols}, got {M.shape}")
        self.A = A
        self.M = M
        self.alpha = float(alpha)
        self.n = A.ncols
        self.n_apply = 0
        self._lock = threading.Lock()
        self._chol = None

    @property
    def shape(self):
        return (self.n, self.n)

    def apply(self, v) -> np.ndarray:
        with self._lock:
            self.n_apply += 1
        return self.A.adjoint(self.A.forward(v)) + self.alpha * self.M.forward(v)

    __matmul__ = apply

    def to_dense(self) -> np.ndarray:
        Ad = self.A.to_dense()
        return Ad.T @ Ad + self.alpha * self.M.to_dense()

    def solve_direct(self, rhs) -> np.ndarray:
        if self._chol is None:
            G = self.to_dense()
            try:
                self._chol = scipy.linalg.cho_factor(0.5 * (G + G.T))
            except np.linalg.LinAlgError as exc:
                raise OperatorNotSPDError("operator not SPD: Cholesky failed") from exc
        return scipy.linalg.cho_solve(self._chol, rhs)


def make_gram(A: LinearOperator, M: LinearOperator, alpha: float) -> GramOperator:
    """Build ``G = A^T A + alpha M`` as an action-only operator."""
    return GramOperator(aslinearoperator(A), aslinearoperator(M), alpha)


@dataclass(frozen=True)
class InnerSolveConfig:
    """Settings for the inner solves ``G s = A^T u``.

    ``method='cg'`` runs conjugate gradients from a zero start to relative
    residual ``tol`` (at most ``max_iter`` steps, default ``2 n``).
    ``method='direct'`` uses a cached dense Cholesky factorization and ignores
    ``tol``; it stands in for exact inner solves on small problems.
    """

    tol: float = 1e-6
    max_iter: int | None = None
    record_stats: bool = False
    method: str = "cg"

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.method not in ("cg", "direct"):
            raise ValueError(f"method must be 'cg' or 'direct', got {self.method!r}")


TIGHT_INNER = InnerSolveConfig(tol=1e-6)
RELAXED_INNER = InnerSolveConfig(tol=1e-4)


class CGResult(NamedTuple):
    x: np.ndarray
    iters: int
    relres: float
    converged: bool
    residuals: list | None = None


def cg_solve(
    G,
    rhs,
    cfg: InnerSolveConfig | None = None,
    x0=None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> CGResult:
    """Solve ``G s = rhs`` for symmetric positive definite ``G``.

    ``G`` is anything with an ``apply`` method (a :class:`GramOperator`) or a
    :class:`LinearOperator`.  On truncation at ``max_iter`` the last iterate,
    which has the smallest ``G``-norm error so far, is returned with
    ``converged=False``.  ``callback`` is called with each iterate.

    Raises
    ------
    OperatorNotSPDError
        When a search direction has ``p^T G p <= 0``.
    BreakdownError
        On non-finite values.
    """
    cfg = cfg or InnerSolveConfig()
    apply = G.apply if hasattr(G, "apply") else G.forward
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, True, [] if cfg.record_stats else None)

    if cfg.method == "direct":
        x = G.solve_direct(rhs)
        relres = np.linalg.norm(rhs - apply(x)) / bnorm
        return CGResult(x, 1, relres, True, [relres] if cfg.record_stats else None)

    max_iter = cfg.max_iter or 2 * n
    if x0 is None:
        x = np.zeros(n)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=float)
        r = rhs - apply(x)
    rr = r @ r
    relres = np.sqrt(rr) / bnorm
    hist = [relres] if cfg.record_stats else None
    if relres <= cfg.tol:
        return CGResult(x, 0, relres, True, hist)
    p = r.copy()
    for it in range(1, max_iter + 1):
        q = apply(p)
        pq = p @ q
        if not np.isfinite(pq):
            raise BreakdownError(f"breakdown: non-finite curvature at CG iteration {it}")
        if pq <= 0.0:
            raise OperatorNotSPDError(f"operator not SPD: p^T G p = {pq:.3e} at CG iteration {it}")
        a = rr / pq
        x += a * p
        r -= a * q
        rr_new = r @ r
        relres = np.sqrt(rr_new) / bnorm
        if hist is not None:
            hist.append(relres)
        if callback is not None:
            callback(x)
        if relres <= cfg.tol:
            return CGResult(x, it, relres, True, hist)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, max_iter, relres, False, hist)


def load_matrix_market(path, name: str | None = None) -> LinearOperator:
    """Read a Matrix Market file (array or coordinate) into an operator."""
    mat = scipy.io.mmread(str(path))
    if sp.issparse(mat):
        mat = mat.tocsr()
    return LinearOperator.from_matrix(mat, name=name or str(path))
