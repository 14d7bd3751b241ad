"""Preconditioned Golub-Kahan bidiagonalization for general-form regularization.

The solution subspaces are built in the inner product of
``G = A^T A + alpha M``; regularization comes either from early stopping
(:func:`run_spr`) or from Tikhonov on the projected problem
(:func:`run_hybrid`).
"""
from .dense_core import GsvdFactors, gsvd_pair, minimize_scalar, sym_psd_sqrt
from .exceptions import BreakdownError, DimensionError, JointRankError, NotPSDError, OperatorNotSPDError
from .hybrid import HybridConfig, run_hybrid, select_mu_wgcv, su_update, wgcv_function
from .operators import (
    RELAXED_INNER,
    TIGHT_INNER,
    GramOperator,
    InnerSolveConfig,
    LinearOperator,
    aslinearoperator,
    cg_solve,
)
from .pgkb import PgkbState, bidiagonal, load_checkpoint, pgkb_extend, pgkb_run, pgkb_start, save_checkpoint
from .problems import ProblemInstance, make_problem
from .spr import SolveResult, StopRule, run_spr

__version__ = "0.1.0"

__all__ = [
    "GsvdFactors",
    "gsvd_pair",
    "minimize_scalar",
    "sym_psd_sqrt",
    "BreakdownError",
    "DimensionError",
    "JointRankError",
    "NotPSDError",
    "OperatorNotSPDError",
    "HybridConfig",
    "run_hybrid",
    "select_mu_wgcv",
    "su_update",
    "wgcv_function",
    "RELAXED_INNER",
    "TIGHT_INNER",
    "GramOperator",
    "InnerSolveConfig",
    "LinearOperator",
    "aslinearoperator",
    "cg_solve",
    "PgkbState",
    "bidiagonal",
    "load_checkpoint",
    "pgkb_extend",
    "pgkb_run",
    "pgkb_start",
    "save_checkpoint",
    "ProblemInstance",
    "make_problem",
    "SolveResult",
    "StopRule",
    "run_spr",
]
