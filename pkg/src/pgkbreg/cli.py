"""Command-line front end.

Subcommands
-----------
generate   write a test problem (manifest, vectors, sparse regularizer)
solve      run SPR or the hybrid solver, write a history CSV and a summary
sweep      repeat ``solve`` over several ``alpha`` values
verify     run the acceptance checks (``quick`` or ``full``)

Options may also come from ``--config FILE`` with ``key = value`` lines;
flags given on the command line win.  Exit codes: 0 success, 2 configuration
error, 3 numerical breakdown, 4 verification failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .exceptions import BreakdownError, JointRankError, NotPSDError, OperatorNotSPDError
from .export import format_value, read_manifest, read_vector, write_history, write_manifest, write_matrix, write_vector
from .hybrid import HYBRID_COLUMNS, HybridConfig, run_hybrid
from .operators import InnerSolveConfig, load_matrix_market
from .problems import ProblemInstance, make_problem
from .spr import SPR_COLUMNS, StopRule, run_spr

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_VERIFY = 0, 2, 3, 4

SPR_STOPS = ("dp", "lcurve", "maxit")
HYBRID_STOPS = ("wgcv", "su")


class ConfigError(ValueError):
    pass


# -- argument parsing --------------------------------------------------------

def _add_problem_args(p):
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=("deriv2", "gauss1d"))
    g.add_argument("--n", type=int)
    g.add_argument("--reg", choices=("firstdiff", "tv", "identity"))
    g.add_argument("--sigma", type=float, default=10.0, help="gauss1d blur width in grid units")
    g.add_argument("--beta", type=float, default=1e-6, help="TV smoothing parameter")
    g.add_argument("--noise", type=float, default=0.0, help="relative noise level epsilon")
    g.add_argument("--seed", type=int, default=0)


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--instance", type=Path, help="directory written by 'generate'")
    g.add_argument("--method", choices=("spr", "hybrid"), default="spr")
    g.add_argument("--stop", choices=SPR_STOPS + HYBRID_STOPS)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--tau", type=float, default=1.01)
    g.add_argument("--inner-tol", type=float, default=1e-6)
    g.add_argument("--inner-maxit", type=int)
    g.add_argument("--inner-method", choices=("cg", "direct"), default="cg")
    g.add_argument("--max-iter", type=int, default=60)
    g.add_argument("--omega-mode", choices=("fixed", "adaptive"), default="fixed")
    g.add_argument("--omega", type=float, default=1.0)
    g.add_argument("--mu0", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgkbreg", description="pGKB regularization solvers")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="key = value file with option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a test problem to disk")
    _add_problem_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--export-matrices", action="store_true", help="also write A as Matrix Market")

    p = sub.add_parser("solve", help="run a solver")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--history", type=Path, help="history CSV path (default: stdout summary only)")
    p.add_argument("--x-out", type=Path, help="write the solution as CSV")

    p = sub.add_parser("sweep", help="run a solver for several alpha values")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--alphas", required=True, help="comma separated, e.g. 0.001,1,100")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("level", choices=("quick", "full"), nargs="?", default="quick")
    return parser


def _config_tokens(path: Path) -> list[str]:
    try:
        entries = read_manifest(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    tokens = []
    for key, value in entries.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, str) and value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif isinstance(value, str) and value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [flag, str(value)]
    return tokens


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # Config-file options are inserted right after the subcommand so that
    # explicit flags, which come later, override them.
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a path")
        cfg = Path(argv[i + 1])
        argv = argv[:i] + argv[i + 2:]
        cmd_pos = next((j for j, a in enumerate(argv) if a in ("generate", "solve", "sweep", "verify")), None)
        if cmd_pos is None:
            parser.error("a subcommand is required")
        argv = argv[: cmd_pos + 1] + _config_tokens(cfg) + argv[cmd_pos + 1:]
    return parser.parse_args(argv)


# -- instances ---------------------------------------------------------------

def _instance_from_args(args) -> ProblemInstance:
    if args.instance is not None:
        return load_instance(args.instance)
    if args.problem is None or args.n is None:
        raise ConfigError("give --instance or both --problem and --n")
    return make_problem(args.problem, args.n, epsilon=args.noise, seed=args.seed,
                        reg=args.reg, sigma=args.sigma, beta=args.beta)


def _manifest(P: ProblemInstance) -> dict:
    entries = {"generator": P.name, "epsilon": P.epsilon, "e_norm": P.e_norm, "seed": P.seed,
               "format_version": 1, "pgkbreg_version": __version__}
    entries.update(P.params)
    return entries


def save_instance(P: ProblemInstance, out: Path, export_matrices: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.txt", _manifest(P))
    write_vector(out / "b.csv", P.b)
    write_vector(out / "b_true.csv", P.b_true)
    write_vector(out / "x_true.csv", P.x_true)
    if P.L is not None:
        L = sp.csr_matrix(P.L)
        write_matrix(out / "L.mtx", L)
        write_matrix(out / "M.mtx", (L.T @ L).tocsr())
    if export_matrices:
        write_matrix(out / "A.mtx", P.A.to_dense())


def load_instance(path: Path) -> ProblemInstance:
    """Rebuild an instance from a ``generate`` directory.

    ``b`` is always read from ``b.csv``.  ``A`` and ``M`` come from
    ``A.mtx``/``M.mtx`` when present and are otherwise regenerated from the
    manifest parameters.
    """
    path = Path(path)
    mf = path / "manifest.txt"
    if not mf.exists():
        raise ConfigError(f"no manifest.txt in {path}")
    man = read_manifest(mf)
    try:
        name, n = man["generator"], int(man["n"])
    except KeyError as exc:
        raise ConfigError(f"manifest lacks {exc}") from exc
    P = make_problem(name, n, epsilon=0.0, reg=man.get("reg"), sigma=float(man.get("sigma", 10.0)),
                     beta=float(man.get("beta", 1e-6)))
    if (path / "A.mtx").exists():
        P.A = load_matrix_market(path / "A.mtx", name="A")
    if (path / "M.mtx").exists():
        P.M = load_matrix_market(path / "M.mtx", name="M")
    P.b = read_vector(path / "b.csv")
    if (path / "x_true.csv").exists():
        P.x_true = read_vector(path / "x_true.csv")
    if (path / "b_true.csv").exists():
        P.b_true = read_vector(path / "b_true.csv")
    P.e_norm = float(man.get("e_norm", 0.0))
    P.epsilon = float(man.get("epsilon", 0.0))
    P.seed = man.get("seed")
    return P


# -- solving -----------------------------------------------------------------

def _check_method(args):
    stop = args.stop or ("dp" if args.method == "spr" else "su")
    allowed = SPR_STOPS if args.method == "spr" else HYBRID_STOPS
    if stop not in allowed:
        raise ConfigError(f"stop rule {stop!r} is incompatible with method {args.method!r}")
    for name in ("alpha", "inner_tol", "max_iter"):
        if getattr(args, name) <= 0:
            raise ConfigError(f"--{name.replace('_', '-')} must be positive")
    return stop


def _run_one(P: ProblemInstance, args, alpha: float, stop: str):
    try:
        inner = InnerSolveConfig(tol=args.inner_tol, max_iter=args.inner_maxit, method=args.inner_method)
        if stop in ("dp", "su") and P.e_norm <= 0:
            raise ConfigError(f"stop rule {stop!r} needs a positive noise norm (generate with --noise)")
        truth = P.x_true if P.x_true is not None and np.any(P.x_true) else None
        if args.method == "spr":
            rule = StopRule(stop, tau=args.tau, e_norm=P.e_norm if stop == "dp" else None,
                            max_iter=args.max_iter)
            res = run_spr(P.A, P.M, alpha, P.b, rule, inner, truth=truth)
            columns, schema = SPR_COLUMNS, "pgkbreg.spr"
        else:
            cfg = HybridConfig(mode=stop, omega_mode=args.omega_mode, omega=args.omega, mu0=args.mu0,
                               tau=args.tau, e_norm=P.e_norm if stop == "su" else None,
                               max_iter=args.max_iter)
            res = run_hybrid(P.A, P.M, alpha, P.b, cfg, inner, truth=truth)
            columns, schema = HYBRID_COLUMNS, "pgkbreg.hybrid"
    except ConfigError:
        raise
    except (ValueError, JointRankError) as exc:
        if isinstance(exc, NotPSDError):
            raise
        raise ConfigError(str(exc)) from exc
    return res, columns, schema


def _summary(res, P, alpha, wall) -> dict:
    re = res.column("rel_error") if res.history else np.array([])
    out = {
        "method": res.method,
        "alpha": alpha,
        "k_stop": res.k_stop,
        "stopped": int(res.stopped),
        "breakdown": res.breakdown or "none",
        "final_re": P.relative_error(res.x) if np.any(P.x_true) else float("nan"),
        "min_re": float(np.nanmin(re)) if re.size and np.isfinite(re).any() else float("nan"),
        "argmin_k": int(np.nanargmin(re)) + 1 if re.size and np.isfinite(re).any() else -1,
        "wall_s": round(wall, 3),
        "A_forward": P.A.n_forward,
        "A_adjoint": P.A.n_adjoint,
        "M_apply": P.M.n_forward,
        "G_apply": res.state.G.n_apply,
    }
    if res.mu_final is not None:
        out["mu_final"] = res.mu_final
    return out


def _print_summary(summary, stream=None):
    print(" ".join(f"{k}={format_value(v)}" for k, v in summary.items()), file=stream or sys.stdout)


def _config_echo(args, P, alpha, stop):
    keys = ("method", "tau", "inner_tol", "inner_maxit", "inner_method", "max_iter",
            "omega_mode", "omega", "mu0")
    cfg = {k: getattr(args, k) for k in keys}
    # problem parameters come from the instance actually solved
    cfg.update({k: v for k, v in P.params.items() if k in ("n", "reg", "sigma", "beta")})
    cfg.update(problem=P.name, noise=P.epsilon, seed=P.seed, alpha=alpha, stop=stop,
               instance=str(args.instance) if args.instance else None)
    return cfg


def cmd_generate(args) -> int:
    if args.problem is None or args.n is None:
        raise ConfigError("generate needs --problem and --n")
    P = make_problem(args.problem, args.n, epsilon=args.noise, seed=args.seed, reg=args.reg,
                     sigma=args.sigma, beta=args.beta)
    try:
        save_instance(P, args.out, args.export_matrices)
    except OSError as exc:
        raise ConfigError(f"cannot write to {args.out}: {exc}") from exc
    print(f"wrote {args.out} generator={P.name} n={args.n} e_norm={P.e_norm!r}")
    return EXIT_OK


def _solve_and_report(P, args, alpha, stop, history_path, x_path):
    for op in (P.A, P.M):
        op.reset_counts()
    t0 = time.perf_counter()
    res, columns, schema = _run_one(P, args, alpha, stop)
    wall = time.perf_counter() - t0
    if history_path is not None:
        write_history(history_path, res.history, columns, schema, _config_echo(args, P, alpha, stop))
    if x_path is not None:
        write_vector(x_path, res.x)
    _print_summary(_summary(res, P, alpha, wall))
    return EXIT_BREAKDOWN if res.breakdown and not res.stopped else EXIT_OK


def cmd_solve(args) -> int:
    stop = _check_method(args)
    P = _instance_from_args(args)
    return _solve_and_report(P, args, args.alpha, stop, args.history, args.x_out)


def cmd_sweep(args) -> int:
    stop = _check_method(args)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --alphas: {exc}") from exc
    if not alphas or min(alphas) <= 0:
        raise ConfigError("--alphas must list positive values")
    P = _instance_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for i, alpha in enumerate(alphas):
        hist = args.out_dir / f"history_{i:02d}_alpha{alpha:g}.csv"
        status = max(status, _solve_and_report(P, args, alpha, stop, hist, None))
    return status


def cmd_verify(args) -> int:
    from .acceptance import run_criteria

    results = run_criteria(args.level, stream=sys.stdout)
    failed = [k for k, ok in results.items() if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" +
          (f"; failed: {failed}" if failed else ""))
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"pgkbreg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BreakdownError, OperatorNotSPDError, NotPSDError, FloatingPointError) as exc:
        print(f"pgkbreg: numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN


if __name__ == "__main__":
    sys.exit(main())
