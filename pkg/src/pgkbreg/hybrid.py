"""Hybrid regularization: Tikhonov on the pGKB projected problem.

At step ``k`` the projected problem is

    min_y ||B_k y - beta_1 e_1||^2 + mu ||C_k y||^2,   C_k^T C_k = W_k^T M W_k,

and ``mu`` is chosen either by weighted GCV or by the secant update driven by
the discrepancy equation ``psi_k(mu) = tau ||e||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dense_core import gsvd_pair, minimize_scalar, sym_psd_sqrt
from .exceptions import NotPSDError
from .operators import InnerSolveConfig
from .pgkb import PgkbState, bidiagonal, pgkb_extend, pgkb_start
from .spr import SolveResult, givens_init, givens_update

__all__ = [
    "HybridConfig",
    "HybridState",
    "WgcvCurve",
    "project_regularizer",
    "projected_tikhonov",
    "wgcv_function",
    "select_mu_wgcv",
    "update_omega",
    "su_update",
    "run_hybrid",
    "HYBRID_COLUMNS",
]

HYBRID_COLUMNS = ("k", "mu", "omega", "gcv_value", "psi0", "psi_mu", "rel_error")


@dataclass(frozen=True)
class HybridConfig:
    """Parameters of a hybrid run.

    Parameters
    ----------
    mode : {'wgcv', 'su'}
    omega_mode : {'fixed', 'adaptive'}
        WGCV weight handling; ``fixed`` with ``omega=1`` is standard GCV.
    omega : float
        Fixed weight, or the initial weight in adaptive mode.
    mu0 : float
        Initial parameter of the secant update.
    tau, e_norm : float
        Discrepancy target ``tau * e_norm`` (SU only).
    tol1, s1 : float, int
        WGCV stopping window.
    tol2, s2 : float, int
        SU stopping window.
    max_iter : int
    resolve_final : bool
        SU only: re-solve the stopping step with ``mu_{k2}`` instead of
        returning the ``mu_{k2-1}`` iterate.
    """

    mode: str = "su"
    omega_mode: str = "fixed"
    omega: float = 1.0
    mu0: float = 1.0
    tau: float = 1.01
    e_norm: float | None = None
    tol1: float = 1e-6
    s1: int = 4
    tol2: float = 1e-3
    s2: int = 4
    max_iter: int = 60
    resolve_final: bool = True

    def __post_init__(self):
        if self.mode not in ("wgcv", "su"):
            raise ValueError(f"unknown hybrid mode {self.mode!r}")
        if self.omega_mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown omega mode {self.omega_mode!r}")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if self.tau <= 1.0:
            raise ValueError("tau must exceed 1")
        if self.mode == "su" and (self.e_norm is None or self.e_norm < 0):
            raise ValueError("the secant update needs e_norm >= 0")
        if self.s1 < 0 or self.s2 < 0 or self.tol1 <= 0 or self.tol2 <= 0:
            raise ValueError("stopping windows need s >= 0 and tol > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class HybridState:
    pgkb: PgkbState
    WMW: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    MW: list = field(default_factory=list)
    C: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    mu_trace: list = field(default_factory=list)
    omega_trace: list = field(default_factory=list)
    gcv_trace: list = field(default_factory=list)
    psi0_trace: list = field(default_factory=list)
    psimu_trace: list = field(default_factory=list)
    omega_hats: list = field(default_factory=list)
    gcv1_argmin: list = field(default_factory=list)
    ys: list = field(default_factory=list)


def project_regularizer(state: HybridState, w_next) -> np.ndarray:
    """Border ``W^T M W`` with the new basis vector and refresh ``C_k``.

    Uses exactly one product with ``M``.
    """
    w_next = np.asarray(w_next, float)
    mw = state.pgkb.M.forward(w_next)
    state.MW.append(mw)
    k = state.WMW.shape[0] + 1
    col = state.pgkb.W_matrix(k).T @ mw
    S = np.zeros((k, k))
    S[:-1, :-1] = state.WMW
    S[:, -1] = col
    S[-1, :] = col
    state.WMW = S
    try:
        state.C = sym_psd_sqrt(S, tol=1e-12, neg_tol=1e-10)
    except NotPSDError as exc:
        raise NotPSDError(f"W^T M W lost semidefiniteness at k={k}; "
                          "basis orthogonality has likely degraded") from exc
    return state.C


def projected_tikhonov(B, C, beta1: float, mu: float) -> tuple[np.ndarray, float]:
    """Solve the projected Tikhonov problem as a stacked least-squares problem.

    Returns
    -------
    y : ndarray
    psi : float
        ``||B y - beta1 e_1||``.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    B = np.asarray(B, float)
    C = np.asarray(C, float).reshape(-1, B.shape[1])
    rhs0 = np.zeros(B.shape[0])
    rhs0[0] = beta1
    if mu > 0 and C.shape[0]:
        K = np.vstack([B, math.sqrt(mu) * C])
        rhs = np.concatenate([rhs0, np.zeros(C.shape[0])])
    else:
        K, rhs = B, rhs0
    y, _, rank, _ = np.linalg.lstsq(K, rhs, rcond=None)
    if rank < B.shape[1]:
        raise np.linalg.LinAlgError("projected Tikhonov system is singular")
    return y, float(np.linalg.norm(B @ y - rhs0))


class WgcvCurve:
    """Closed-form WGCV ingredients from the GSVD of ``{B_k, C_k}``.

    With generalized values ``gamma_i`` and ``d = U_A^T beta_1 e_1``:

    * residual ``||B y_mu - beta_1 e_1||^2 = sum (mu / (gamma_i^2 + mu))^2 d_i^2 + const``
    * trace term ``rows - omega * (r + sum gamma_i^2 / (gamma_i^2 + mu))``
    """

    def __init__(self, B, C, beta1: float):
        B = np.asarray(B, float)
        rows, k = B.shape
        C = np.asarray(C, float).reshape(-1, k)
        g = gsvd_pair(B, C)
        d = beta1 * g.U_A[0, :]
        mid = slice(g.r, g.r + g.q)
        self.rows = rows
        self.r = g.r
        self.gamma2 = (g.sigma[mid] / g.rho[mid]) ** 2
        self.d2 = d[mid] ** 2
        # pure-L block (sigma = 0) and rows beyond k are never fitted
        self.const = float(np.sum(d[g.r + g.q: k] ** 2) + np.sum(d[k:] ** 2))
        self.theta1 = float(np.linalg.norm(B, 2))

    def residual2(self, mu):
        return float(np.sum((mu / (self.gamma2 + mu)) ** 2 * self.d2) + self.const)

    def fitted(self, mu):
        return float(self.r + np.sum(self.gamma2 / (self.gamma2 + mu)))

    def trace(self, omega, mu):
        return self.rows - omega * self.fitted(mu)

    def value(self, omega, mu):
        t = self.trace(omega, mu)
        if abs(t) <= 1e-14 * self.rows:
            return math.inf
        return self.residual2(mu) / t**2

    def stationary_omega(self, mu):
        """Weight for which ``mu`` is a stationary point of ``G(omega, .)``."""
        g2, d2 = self.gamma2, self.d2
        dR = float(np.sum(2.0 * mu * g2 / (g2 + mu) ** 3 * d2))
        dS = float(-np.sum(g2 / (g2 + mu) ** 2))
        R, S = self.residual2(mu), self.fitted(mu)
        den = dR * S - 2.0 * R * dS
        if den == 0.0:
            return math.nan
        return self.rows * dR / den

    def bracket(self):
        t2 = self.theta1**2
        return math.log10(1e-12 * t2), math.log10(t2)

    def argmin(self, omega, n_grid: int = 101):
        """Coarse log-grid scan, then Brent refinement in the neighbouring cells."""
        lo, hi = self.bracket()
        big = np.finfo(float).max

        def obj(lm):
            return min(self.value(omega, 10.0**lm), big)

        grid = np.linspace(lo, hi, n_grid)
        vals = np.array([obj(t) for t in grid])
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
        lm, _ = minimize_scalar(obj, a, b, rel_tol=1e-10)
        return 10.0**lm


def wgcv_function(B, C, beta1: float, omega: float, mu: float) -> float:
    """Weighted GCV function of the projected problem (``+inf`` on a zero denominator)."""
    if not 0.0 < omega <= 1.0:
        raise ValueError("omega must lie in (0, 1]")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    return WgcvCurve(B, C, beta1).value(omega, mu)


def select_mu_wgcv(B, C, beta1: float, omega: float) -> float:
    """Minimize the WGCV function over ``log10 mu`` in ``[log10(1e-12 theta_1^2), log10(theta_1^2)]``."""
    return WgcvCurve(B, C, beta1).argmin(omega)


def update_omega(state: HybridState, cfg: HybridConfig, curve: WgcvCurve | None = None) -> float:
    """Weight to use at the current step.

    In adaptive mode ``omega_hat_k`` makes the current WGCV curve stationary
    at the standard-GCV minimizer of the previous step, and the returned
    weight is the mean of ``omega_hat_2 .. omega_hat_k`` clipped to
    ``(0, 1]``.  A failed solve repeats the previous weight.
    """
    prev = state.omega_trace[-1] if state.omega_trace else cfg.omega
    if cfg.omega_mode == "fixed" or curve is None or not state.gcv1_argmin:
        return prev
    w_hat = curve.stationary_omega(state.gcv1_argmin[-1])
    if not (np.isfinite(w_hat) and w_hat > 0):
        w_hat = prev
    state.omega_hats.append(float(w_hat))
    return float(min(max(np.mean(state.omega_hats), 1e-8), 1.0))


def su_update(mu_prev: float, psi0: float, psimu: float, tau_e: float) -> float:
    """Secant update ``|(tau_e - psi0) / (psimu - psi0)| * mu_prev``; flat response keeps ``mu_prev``."""
    if psimu == psi0:
        return mu_prev
    return abs((tau_e - psi0) / (psimu - psi0)) * mu_prev


def _window_met(flags, s) -> bool:
    return len(flags) >= s + 1 and all(flags[-(s + 1):])


def run_hybrid(A, M, alpha: float, b, cfg: HybridConfig,
               inner_cfg: InnerSolveConfig | None = None, truth=None) -> SolveResult:
    """pGKB hybrid regularization with WGCV or secant-update parameter choice.

    The run stops at ``k + s`` where ``k`` is the first step opening a window
    of ``s + 1`` consecutive satisfied conditions; without a stop the last
    iterate is returned with ``stopped=False``.
    """
    truth = None if truth is None else np.asarray(truth, float)
    tnorm = None if truth is None else np.linalg.norm(truth)
    pstate = pgkb_start(A, M, alpha, b, inner_cfg)
    hs = HybridState(pgkb=pstate)
    gs = givens_init(pstate.alphas[0], pstate.betas[0])
    tau_e = None if cfg.e_norm is None else cfg.tau * cfg.e_norm
    history: list[dict] = []
    window: list[bool] = []
    mu_prev = cfg.mu0
    k_stop = None

    while pstate.k < cfg.max_iter and not pstate.breakdown:
        pgkb_extend(pstate)
        k = pstate.k
        givens_update(gs, pstate.alphas[k], pstate.betas[k])
        project_regularizer(hs, pstate.W[k - 1])
        B = bidiagonal(pstate, k).matrix()
        psi0 = gs.phi_bar
        row = {"k": k, "mu": math.nan, "omega": math.nan, "gcv_value": math.nan,
               "psi0": psi0, "psi_mu": math.nan, "rel_error": math.nan}

        if cfg.mode == "wgcv":
            curve = WgcvCurve(B, hs.C, pstate.beta1)
            omega = update_omega(hs, cfg, curve)
            mu = curve.argmin(omega)
            if cfg.omega_mode == "adaptive":
                hs.gcv1_argmin.append(mu if omega == 1.0 else curve.argmin(1.0))
            y, psimu = projected_tikhonov(B, hs.C, pstate.beta1, mu)
            gcv1 = curve.value(1.0, mu)
            hs.omega_trace.append(omega)
            hs.gcv_trace.append(gcv1)
            row.update(mu=mu, omega=omega, gcv_value=gcv1, psi_mu=psimu)
            if len(hs.gcv_trace) >= 2:
                window.append(abs((hs.gcv_trace[-1] - hs.gcv_trace[-2]) / hs.gcv_trace[0]) < cfg.tol1)
            s = cfg.s1
        else:
            y, psimu = projected_tikhonov(B, hs.C, pstate.beta1, mu_prev)
            mu = su_update(mu_prev, psi0, psimu, tau_e)
            if len(hs.psimu_trace) >= 1:
                last = hs.psimu_trace[-1]
                ok = abs((psimu - last) / last) <= cfg.tol2 if last > 0 else psimu == 0
                window.append(ok and hs.psi0_trace[-1] <= tau_e)
            row.update(mu=mu, psi_mu=psimu)
            mu_prev = mu
            s = cfg.s2

        hs.mu_trace.append(mu)
        hs.psi0_trace.append(psi0)
        hs.psimu_trace.append(psimu)
        hs.ys.append(y)
        if truth is not None:
            row["rel_error"] = float(np.linalg.norm(pstate.W_matrix(k) @ y - truth) / tnorm)
        history.append(row)
        if _window_met(window, s):
            # window entry j compares steps j+1 and j+2; the rule opens at k - s - 1
            k_stop = k - 1
            break

    stopped = k_stop is not None
    if k_stop is None:
        k_stop = pstate.k
    if k_stop == 0:
        x = np.zeros(pstate.A.shape[1])
        mu_final = cfg.mu0
    else:
        mu_final = hs.mu_trace[k_stop - 1]
        y = hs.ys[k_stop - 1]
        if cfg.mode == "su" and cfg.resolve_final:
            Bk = bidiagonal(pstate, k_stop).matrix()
            Ck = sym_psd_sqrt(hs.WMW[:k_stop, :k_stop], tol=1e-12, neg_tol=1e-10)
            y, _ = projected_tikhonov(Bk, Ck, pstate.beta1, mu_final)
        x = pstate.W_matrix(k_stop) @ y

    return SolveResult(
        x=x,
        k_stop=k_stop,
        history=history,
        stopped=stopped,
        breakdown=pstate.breakdown,
        state=pstate,
        method=f"hybrid-{cfg.mode}",
        mu_final=mu_final,
        info={"hybrid_state": hs, "inner_truncations": pstate.inner_truncations},
    )
