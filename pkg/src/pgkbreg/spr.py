"""Subspace projection regularization on the pGKB solution subspaces.

The ``k``-th iterate minimizes ``||A x - b||`` over ``span(W_k)``, which
reduces to the small problem ``min ||B_k y - beta_1 e_1||``.  As in LSQR, the
iterate and its residual norm are updated with one Givens rotation per step,
and the iteration number acts as the regularization parameter: it is chosen
by the discrepancy principle or by the corner of the L-curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import InnerSolveConfig
from .pgkb import PgkbState, bidiagonal, pgkb_extend, pgkb_start

__all__ = [
    "GivensState",
    "StopRule",
    "SolveResult",
    "givens_init",
    "givens_update",
    "dp_check",
    "lcurve_corner",
    "menger_curvature",
    "projected_lsq",
    "run_spr",
    "SPR_COLUMNS",
]

SPR_COLUMNS = ("k", "residual_norm", "penalty_norm", "rel_error", "stopped_flag")


@dataclass
class GivensState:
    """Quantities carried between rotations.

    ``phi_bar`` equals the current residual norm ``||A x_k - b||``.  With
    ``x = p = None`` only the scalar recurrences are advanced.
    """

    rho_bar: float
    phi_bar: float
    x: np.ndarray | None = None
    p: np.ndarray | None = None
    k: int = 0
    rho: float = math.nan
    c: float = math.nan
    s: float = math.nan
    theta: float = math.nan
    phi: float = math.nan


def givens_init(alpha1: float, beta1: float, w1=None) -> GivensState:
    """``x_0 = 0``, ``p_1 = w_1``, ``phi_bar_1 = beta_1``, ``rho_bar_1 = alpha_1``."""
    if w1 is None:
        return GivensState(rho_bar=float(alpha1), phi_bar=float(beta1))
    w1 = np.asarray(w1, float)
    return GivensState(rho_bar=float(alpha1), phi_bar=float(beta1), x=np.zeros_like(w1), p=w1.copy())


def givens_update(gs: GivensState, alpha_next: float, beta_next: float, w_next=None) -> GivensState:
    """One LSQR-style rotation: ``x_{i-1} -> x_i`` using ``beta_{i+1}``, ``alpha_{i+1}``, ``w_{i+1}``."""
    rho = math.hypot(gs.rho_bar, beta_next)
    if rho == 0.0:
        raise ZeroDivisionError("rho = 0 in Givens update (pGKB breakdown not handled upstream)")
    c = gs.rho_bar / rho
    s = beta_next / rho
    theta = s * alpha_next
    phi = c * gs.phi_bar
    if gs.x is not None:
        gs.x = gs.x + (phi / rho) * gs.p
        if w_next is None:
            w_next = np.zeros_like(gs.p)
        gs.p = np.asarray(w_next, float) - (theta / rho) * gs.p
    gs.rho_bar = -c * alpha_next
    gs.phi_bar = s * gs.phi_bar
    gs.rho, gs.c, gs.s, gs.theta, gs.phi = rho, c, s, theta, phi
    gs.k += 1
    return gs


@dataclass(frozen=True)
class StopRule:
    """Early stopping rule.

    ``kind='dp'`` stops at the first ``k`` with ``||A x_k - b|| <= tau ||e||``;
    ``'lcurve'`` runs to ``max_iter`` and picks the corner afterwards;
    ``'maxit'`` simply runs ``max_iter`` steps.
    """

    kind: str = "dp"
    tau: float = 1.01
    e_norm: float | None = None
    max_iter: int = 60

    def __post_init__(self):
        if self.kind not in ("dp", "lcurve", "maxit"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.tau <= 1.0:
            raise ValueError(f"tau must exceed 1, got {self.tau}")
        if self.kind == "dp" and (self.e_norm is None or self.e_norm < 0):
            raise ValueError("the discrepancy principle needs e_norm >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def dp_check(phi_bar_next: float, rule: StopRule) -> bool:
    return phi_bar_next <= rule.tau * rule.e_norm


def menger_curvature(a, b, c) -> float:
    """Signed curvature of the circle through three points; positive for a clockwise turn."""
    a, b, c = (np.asarray(v, float) for v in (a, b, c))
    cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
    denom = np.linalg.norm(b - a) * np.linalg.norm(c - b) * np.linalg.norm(c - a)
    if denom == 0.0:
        return 0.0
    return float(-2.0 * cross / denom)


def lcurve_corner(points, ks=None) -> int | None:
    """Corner of a discrete L-curve ``(log residual, log penalty)``.

    Points that break the staircase (residual decreasing, penalty
    increasing) are dropped, then the interior point of largest signed
    Menger curvature is returned; ties go to the smaller ``k``.  If no point
    has positive curvature (e.g. collinear input) the first interior point
    is returned.  Fewer than four points give ``None``.

    Parameters
    ----------
    points : array_like, shape (N, 2)
    ks : sequence of int, optional
        Iteration numbers of the points, default ``1..N``.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    ks = np.arange(1, len(pts) + 1) if ks is None else np.asarray(ks)
    if len(pts) < 4 or not np.all(np.isfinite(pts)):
        return None
    keep = [0]
    for i in range(1, len(pts)):
        last = pts[keep[-1]]
        if pts[i, 0] < last[0] and pts[i, 1] > last[1]:
            keep.append(i)
    if len(keep) < 3:
        return None
    kp = pts[keep]
    curv = np.array([menger_curvature(kp[j - 1], kp[j], kp[j + 1]) for j in range(1, len(kp) - 1)])
    j = int(np.argmax(curv)) if curv.max() > 0 else 0
    return int(ks[keep[j + 1]])


@dataclass
class SolveResult:
    x: np.ndarray
    k_stop: int
    history: list
    stopped: bool
    breakdown: str | None
    state: PgkbState
    method: str
    mu_final: float | None = None
    info: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([row[name] for row in self.history], dtype=float)


def projected_lsq(state: PgkbState, k: int) -> np.ndarray:
    """``x_k = W_k y_k`` with ``y_k`` solving ``min ||B_k y - beta_1 e_1||`` densely."""
    B = bidiagonal(state, k).matrix()
    rhs = np.zeros(B.shape[0])
    rhs[0] = state.beta1
    y = np.linalg.lstsq(B, rhs, rcond=None)[0]
    return state.W_matrix(k) @ y


def run_spr(
    A,
    M,
    alpha: float,
    b,
    rule: StopRule,
    inner_cfg: InnerSolveConfig | None = None,
    truth=None,
    *,
    record_penalty: bool | None = None,
    run_to_max: bool = False,
) -> SolveResult:
    """pGKB subspace projection regularization with early stopping.

    Parameters
    ----------
    rule : StopRule
    truth : array_like, optional
        If given, the relative error of every iterate is recorded.
    record_penalty : bool, optional
        Record ``(x_k^T M x_k)^{1/2}`` (one ``M`` product per step).  Forced on
        for the L-curve rule; defaults to on.
    run_to_max : bool
        Keep iterating to ``rule.max_iter`` after the discrepancy principle
        fires; ``x`` is still the iterate at the stopping index.
    """
    if record_penalty is None:
        record_penalty = True
    if rule.kind == "lcurve":
        record_penalty = True
    truth = None if truth is None else np.asarray(truth, float)
    tnorm = None if truth is None else np.linalg.norm(truth)

    state = pgkb_start(A, M, alpha, b, inner_cfg)
    gs = givens_init(state.alphas[0], state.betas[0], state.W[0])
    history: list[dict] = []
    k_stop = None
    x_stop = None

    while state.k < rule.max_iter and not state.breakdown:
        pgkb_extend(state)
        k = state.k
        givens_update(gs, state.alphas[k], state.betas[k], state.W[k])
        row = {"k": k, "residual_norm": gs.phi_bar, "penalty_norm": math.nan,
               "rel_error": math.nan, "stopped_flag": 0}
        if record_penalty:
            row["penalty_norm"] = math.sqrt(max(gs.x @ state.M.forward(gs.x), 0.0))
        if truth is not None:
            row["rel_error"] = float(np.linalg.norm(gs.x - truth) / tnorm)
        fired = rule.kind == "dp" and k_stop is None and dp_check(gs.phi_bar, rule)
        if fired:
            k_stop, x_stop = k, gs.x.copy()
            row["stopped_flag"] = 1
        history.append(row)
        if fired and not run_to_max:
            break

    stopped = k_stop is not None
    if rule.kind == "lcurve" and history:
        pts = [(math.log(r["residual_norm"]), math.log(r["penalty_norm"]))
               if r["residual_norm"] > 0 and r["penalty_norm"] > 0 else (math.nan, math.nan)
               for r in history]
        ks = [r["k"] for r in history]
        finite = [i for i, p in enumerate(pts) if np.isfinite(p).all()]
        corner = lcurve_corner([pts[i] for i in finite], [ks[i] for i in finite])
        if corner is not None:
            k_stop, stopped = corner, True
            x_stop = gs.x.copy() if corner == state.k else projected_lsq(state, corner)
            history[corner - 1]["stopped_flag"] = 1
    if k_stop is None:
        k_stop = state.k
        x_stop = gs.x.copy()

    return SolveResult(
        x=x_stop,
        k_stop=k_stop,
        history=history,
        stopped=stopped,
        breakdown=state.breakdown,
        state=state,
        method=f"spr-{rule.kind}",
        info={"x_last": gs.x, "inner_truncations": state.inner_truncations},
    )
