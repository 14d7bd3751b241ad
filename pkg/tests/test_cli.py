import numpy as np
import pytest

from pgkbreg.cli import EXIT_BREAKDOWN, EXIT_CONFIG, EXIT_OK, load_instance, main
from pgkbreg.export import read_history


def _summary(out):
    line = out.strip().splitlines()[-1]
    return dict(tok.split("=", 1) for tok in line.split())


@pytest.fixture
def instance(tmp_path):
    out = tmp_path / "inst"
    assert main(["generate", "--problem", "deriv2", "--n", "120", "--noise", "1e-3", "--seed", "4",
                 "--out", str(out), "--export-matrices"]) == EXIT_OK
    return out


def test_generate_deterministic(tmp_path, instance):
    other = tmp_path / "again"
    main(["generate", "--problem", "deriv2", "--n", "120", "--noise", "1e-3", "--seed", "4",
          "--out", str(other), "--export-matrices"])
    for name in ("manifest.txt", "b.csv", "b_true.csv", "x_true.csv", "A.mtx", "M.mtx", "L.mtx"):
        assert (instance / name).read_bytes() == (other / name).read_bytes()


def test_load_instance(instance):
    P = load_instance(instance)
    assert P.x_true.shape == (120,)
    assert np.linalg.norm(P.b - P.b_true) == pytest.approx(P.e_norm, rel=1e-12)
    np.testing.assert_allclose(P.A.forward(P.x_true), P.b_true, atol=1e-14)


def test_solve_from_instance(instance, tmp_path, capsys):
    hist = tmp_path / "h.csv"
    xo = tmp_path / "x.csv"
    rc = main(["solve", "--instance", str(instance), "--alpha", "10", "--history", str(hist),
               "--x-out", str(xo)])
    assert rc == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert s["method"] == "spr-dp" and s["stopped"] == "1"
    meta, rows = read_history(hist)
    assert meta["schema"] == "pgkbreg.spr/v1" and meta["config"]["alpha"] == 10.0
    assert meta["config"]["problem"] == "deriv2" and meta["config"]["seed"] == 4
    assert meta["config"]["n"] == 120 and meta["config"]["noise"] == 1e-3
    assert len(rows) == int(s["k_stop"])
    assert int(s["A_forward"]) > 0 and int(s["G_apply"]) > 0


def test_solve_inline_matches_instance(instance, capsys):
    main(["solve", "--instance", str(instance), "--alpha", "10"])
    a = _summary(capsys.readouterr().out)
    main(["solve", "--problem", "deriv2", "--n", "120", "--noise", "1e-3", "--seed", "4", "--alpha", "10"])
    b = _summary(capsys.readouterr().out)
    # the instance applies the exported dense A, so only round-off may differ
    assert a["k_stop"] == b["k_stop"]
    assert float(a["final_re"]) == pytest.approx(float(b["final_re"]), rel=1e-10)


@pytest.mark.parametrize("stop", ["su", "wgcv"])
def test_solve_hybrid(instance, capsys, stop):
    rc = main(["solve", "--instance", str(instance), "--method", "hybrid", "--stop", stop,
               "--alpha", "10", "--max-iter", "25"])
    assert rc == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert s["method"] == f"hybrid-{stop}" and float(s["mu_final"]) > 0


def test_config_file_and_override(instance, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\ninstance = {instance}\nalpha = 10\nstop = lcurve\nmax_iter = 20\n")
    assert main(["--config", str(cfg), "solve"]) == EXIT_OK
    assert _summary(capsys.readouterr().out)["method"] == "spr-lcurve"
    assert main(["--config", str(cfg), "solve", "--stop", "maxit"]) == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert s["method"] == "spr-maxit" and s["k_stop"] == "20"


def test_sweep(instance, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--instance", str(instance), "--alphas", "1,100", "--out-dir", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["history_00_alpha1.csv", "history_01_alpha100.csv"]
    assert len(capsys.readouterr().out.strip().splitlines()) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--problem", "deriv2", "--n", "50", "--noise", "1e-3", "--method", "spr", "--stop", "su"],
        ["solve", "--problem", "deriv2", "--n", "50", "--stop", "dp"],
        ["solve", "--problem", "deriv2", "--n", "50", "--noise", "1e-3", "--alpha", "-1"],
        ["sweep", "--problem", "deriv2", "--n", "50", "--alphas", "1,x", "--out-dir", "unused"],
        ["generate", "--problem", "deriv2", "--out", "unused"],
        ["--config", "/nonexistent/cfg", "solve"],
    ],
)
def test_config_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_breakdown_exit_code(tmp_path, capsys):
    # tiny problem: the basis is exhausted long before max_iter
    rc = main(["solve", "--problem", "deriv2", "--n", "6", "--stop", "maxit", "--inner-method", "direct",
               "--max-iter", "40"])
    s = _summary(capsys.readouterr().out)
    assert s["breakdown"] != "none" and s["stopped"] == "0"
    assert rc == EXIT_BREAKDOWN


@pytest.mark.slow
def test_verify_quick(capsys):
    assert main(["verify", "quick"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 9 and "[FAIL]" not in out
