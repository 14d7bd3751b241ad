"""Test problems, regularization matrices and seeded noise.

``deriv2`` and ``gauss1d`` are the two one-dimensional benchmarks; the
regularizers are the first-difference matrix, the total-variation matrix
linearized at a reference signal (lagged-diffusivity form) and the 2-D
Neumann negative Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp

from .operators import LinearOperator

__all__ = [
    "ProblemInstance",
    "deriv2_kernel",
    "build_deriv2",
    "build_gauss1d",
    "gauss1d_signal",
    "first_difference",
    "tv_weights",
    "tv_linearized_M",
    "neg_laplacian_2d",
    "add_noise",
    "make_problem",
    "relative_error",
]


@dataclass
class ProblemInstance:
    """A test problem ``b = A x_true + e`` together with its regularizer."""

    A: LinearOperator
    M: LinearOperator
    x_true: np.ndarray
    b_true: np.ndarray
    b: np.ndarray
    e_norm: float
    epsilon: float
    seed: int | None
    L: sp.spmatrix | np.ndarray | None = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def relative_error(self, x) -> float:
        return relative_error(x, self.x_true)


def relative_error(x, x_true) -> float:
    return float(np.linalg.norm(np.asarray(x) - x_true) / np.linalg.norm(x_true))


# -- deriv2 ----------------------------------------------------------------

def deriv2_kernel(s, t):
    """Green's function of the second derivative on [0, 1] with zero ends."""
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    return np.where(s < t, s * (t - 1.0), t * (s - 1.0))


def build_deriv2(n: int) -> tuple[LinearOperator, np.ndarray]:
    """Midpoint discretization of the deriv2 integral equation, ``x(t) = t``.

    ``A[i, j] = K(t_i, t_j) / n`` on ``t_i = (i + 1/2) / n``.  The operator is
    applied in O(n) with two cumulative sums; ``to_dense`` returns the
    explicitly assembled (exactly symmetric) matrix.
    """
    if n < 4:
        raise ValueError("deriv2 needs n >= 4")
    t = (np.arange(n) + 0.5) / n

    def matvec(x):
        x = np.asarray(x, float)
        tt = t if x.ndim == 1 else t[:, None]
        # row i: (t_i - 1) sum_{j<=i} t_j x_j + t_i sum_{j>i} (t_j - 1) x_j
        lower = np.cumsum(tt * x, axis=0)
        c2 = np.cumsum((tt - 1.0) * x, axis=0)
        upper = c2[-1] - c2
        return ((tt - 1.0) * lower + tt * upper) / n

    def dense():
        return deriv2_kernel(t[:, None], t[None, :]) / n

    A = LinearOperator((n, n), matvec, symmetric=True, dense=dense, name="deriv2")
    return A, t.copy()


# -- gauss1d ---------------------------------------------------------------

GAUSS1D_BREAKS = (0.1, 0.25, 0.5, 0.75, 0.9)
GAUSS1D_LEVELS = (1.0, 0.4, 0.9, 0.0, 0.0)


def gauss1d_signal(n: int, breaks=GAUSS1D_BREAKS, levels=GAUSS1D_LEVELS) -> np.ndarray:
    """Piecewise-constant signal on ``t_i = (i + 1/2) / n``.

    The signal is 0 before ``breaks[0]`` and takes ``levels[j]`` on
    ``[breaks[j], breaks[j+1])`` (the last level extends to 1).
    """
    t = (np.arange(n) + 0.5) / n
    x = np.zeros(n)
    for j, start in enumerate(breaks):
        x[t >= start] = levels[j]
    return x


def build_gauss1d(n: int = 800, sigma: float = 10.0) -> tuple[LinearOperator, np.ndarray]:
    """Gaussian blur as an ``n x n`` symmetric Toeplitz matrix with zero boundary.

    ``A[i, j] = exp(-(i - j)^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)`` with
    ``sigma`` in grid-index units.  Products go through a zero-padded FFT.
    """
    if n < 16:
        raise ValueError("gauss1d needs n >= 16")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.arange(n, dtype=float)
    col = np.exp(-(d**2) / (2.0 * sigma**2)) / (np.sqrt(2.0 * np.pi) * sigma)
    kernel = np.concatenate([col[:0:-1], col])  # offsets -(n-1) .. n-1
    nfft = scipy.fft.next_fast_len(3 * n - 2, real=True)
    khat = scipy.fft.rfft(kernel, nfft)

    def matvec(x):
        x = np.asarray(x, float)
        xhat = scipy.fft.rfft(x, nfft, axis=0)
        prod = xhat * (khat if x.ndim == 1 else khat[:, None])
        full = scipy.fft.irfft(prod, nfft, axis=0)
        return full[n - 1: 2 * n - 1]

    A = LinearOperator((n, n), matvec, symmetric=True,
                       dense=lambda: scipy.linalg.toeplitz(col), name="gauss1d")
    return A, gauss1d_signal(n)


# -- regularizers ----------------------------------------------------------

def first_difference(n: int) -> sp.csr_matrix:
    """Forward difference ``(n-1) x n``: ``L[i, i] = -1``, ``L[i, i+1] = 1``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def tv_weights(x_ref, beta: float) -> np.ndarray:
    dx = np.diff(np.asarray(x_ref, float))
    return 1.0 / np.sqrt(dx**2 + beta**2)


def tv_linearized_M(x_ref, beta: float = 1e-6) -> tuple[LinearOperator, sp.csr_matrix]:
    """Lagged-diffusivity matrix ``M = D^T diag(w) D`` at ``x_ref``.

    ``w_i = 1 / sqrt((D x_ref)_i^2 + beta^2)``.  Returns the operator and the
    factor ``L = diag(sqrt(w)) D`` with ``M = L^T L``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    x_ref = np.asarray(x_ref, float)
    D = first_difference(x_ref.size)
    w = tv_weights(x_ref, beta)
    L = (sp.diags(np.sqrt(w)) @ D).tocsr()
    M = (D.T @ sp.diags(w) @ D).tocsr()
    return LinearOperator.from_matrix(M, name="M_tv", symmetric=True), L


def neg_laplacian_2d(nx: int, ny: int) -> LinearOperator:
    """Five-point negative Laplacian on an ``nx x ny`` grid, Neumann boundary.

    Vectors are images flattened in C order with shape ``(ny, nx)``.
    """
    if nx < 3 or ny < 3:
        raise ValueError("grid must be at least 3x3")
    Dx = first_difference(nx)
    Dy = first_difference(ny)
    Lx = (Dx.T @ Dx).tocsr()
    Ly = (Dy.T @ Dy).tocsr()
    M = (sp.kron(sp.identity(ny), Lx) + sp.kron(Ly, sp.identity(nx))).tocsr()
    return LinearOperator.from_matrix(M, name="neg_laplacian_2d", symmetric=True)


# -- noise -----------------------------------------------------------------

def add_noise(b_true, epsilon: float, seed: int | None = None) -> tuple[np.ndarray, float]:
    """Add white Gaussian noise scaled to ``||e|| = epsilon ||b_true||`` exactly."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    b_true = np.asarray(b_true, float)
    e_norm = epsilon * np.linalg.norm(b_true)
    if epsilon == 0:
        return b_true.copy(), 0.0
    g = np.random.default_rng(seed).standard_normal(b_true.shape)
    return b_true + (e_norm / np.linalg.norm(g)) * g, float(e_norm)


# -- assembled instances ---------------------------------------------------

def make_problem(
    name: str,
    n: int,
    *,
    epsilon: float = 0.0,
    seed: int | None = 0,
    reg: str | None = None,
    sigma: float = 10.0,
    beta: float = 1e-6,
) -> ProblemInstance:
    """Build a complete instance.

    ``reg`` is ``'firstdiff'`` (default for deriv2), ``'tv'`` (default for
    gauss1d, linearized at the true signal) or ``'identity'``.
    """
    if name == "deriv2":
        A, x_true = build_deriv2(n)
        reg = reg or "firstdiff"
        params = {"n": n}
    elif name == "gauss1d":
        A, x_true = build_gauss1d(n, sigma)
        reg = reg or "tv"
        params = {"n": n, "sigma": sigma}
    else:
        raise ValueError(f"unknown problem {name!r}")

    if reg == "firstdiff":
        L = first_difference(n)
        M = LinearOperator.from_matrix((L.T @ L).tocsr(), name="M_firstdiff", symmetric=True)
    elif reg == "tv":
        M, L = tv_linearized_M(x_true, beta)
        params["beta"] = beta
    elif reg == "identity":
        L = sp.identity(n, format="csr")
        M = LinearOperator.from_matrix(L, name="M_identity", symmetric=True)
    else:
        raise ValueError(f"unknown regularizer {reg!r}")
    params["reg"] = reg

    b_true = A.forward(x_true)
    A.reset_counts()
    b, e_norm = add_noise(b_true, epsilon, seed)
    return ProblemInstance(A=A, M=M, x_true=x_true, b_true=b_true, b=b, e_norm=e_norm,
                           epsilon=epsilon, seed=seed, L=L, name=name, params=params)
