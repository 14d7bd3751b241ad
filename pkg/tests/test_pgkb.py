import numpy as np
import pytest

from pgkbreg.exceptions import BreakdownError, DimensionError
from pgkbreg.oracle import generalized_spectrum
from pgkbreg.dense_core import gsvd_pair
from pgkbreg.operators import InnerSolveConfig, LinearOperator
from pgkbreg.pgkb import (
    bidiagonal,
    load_checkpoint,
    pgkb_extend,
    pgkb_run,
    pgkb_start,
    reorth_against,
    save_checkpoint,
)
from pgkbreg.problems import make_problem

from conftest import ops


def test_start_identity():
    st = pgkb_start(np.eye(2), np.zeros((2, 2)), 1.0, [0.0, 2.0], InnerSolveConfig(method="direct"))
    assert st.beta1 == 2.0
    np.testing.assert_allclose(st.U[0], [0, 1])
    assert st.alphas[0] == pytest.approx(1.0)
    np.testing.assert_allclose(st.W[0], [0, 1])


def test_start_diag():
    # G = diag(6, 3), s = (1/3, 0), alpha_1 = sqrt(s^T A^T u_1)
    st = pgkb_start(np.diag([2.0, 1.0]), np.eye(2), 2.0, [1.0, 0.0], InnerSolveConfig(method="direct"))
    assert st.alphas[0] == pytest.approx(np.sqrt(2 / 3), rel=1e-14)
    np.testing.assert_allclose(st.W[0] * st.alphas[0], [1 / 3, 0], atol=1e-15)


def test_start_unit_G_norm_deriv2():
    P = make_problem("deriv2", 100)
    st = pgkb_start(P.A, P.M, 10.0, P.b_true, InnerSolveConfig(tol=1e-12, max_iter=1000))
    w = st.W[0]
    assert abs(w @ st.G.apply(w) - 1) <= 1e-10


def test_start_errors():
    with pytest.raises(ValueError):
        pgkb_start(np.eye(2), np.eye(2), 1.0, np.zeros(2))
    with pytest.raises(DimensionError):
        pgkb_start(np.eye(2), np.eye(2), 1.0, np.ones(3))


def test_start_alpha_breakdown():
    # A^T b = 0
    st = pgkb_start(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2), 1.0, [0.0, 1.0],
                    InnerSolveConfig(method="direct"))
    assert st.breakdown == "alpha"


def test_invariant_subspace_breakdown():
    st = pgkb_start(np.eye(2), np.zeros((2, 2)), 1.0, [0.0, 2.0], InnerSolveConfig(method="direct"))
    pgkb_extend(st)
    assert st.breakdown == "beta"
    B = bidiagonal(st)
    assert B.square and B.matrix().shape == (1, 1)
    with pytest.raises(BreakdownError):
        pgkb_extend(st)


def test_orthogonality_and_relation(dense_30x20, exact):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 10, exact)
    U, W = st.U_matrix(), st.W_matrix()
    G = A.T @ A + M
    off = lambda X: np.abs(X - np.diag(np.diag(X))).max()
    assert off(U.T @ U) <= 1e-12
    assert off(W.T @ G @ W) <= 1e-12
    B = bidiagonal(st, 10).matrix()
    assert np.linalg.norm(A @ W - U @ B) / np.linalg.norm(A) <= 1e-10


def test_relation_frobenius_cg(dense_30x20):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 12, InnerSolveConfig(tol=1e-12, max_iter=400))
    B = bidiagonal(st).matrix()
    assert np.linalg.norm(A @ st.W_matrix() - st.U_matrix() @ B) <= 1e-8 * np.linalg.norm(A)


def test_ritz_interlacing(dense_30x20, exact):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 6, exact)
    s5 = bidiagonal(st, 5).singular_values()
    s6 = bidiagonal(st, 6).singular_values()
    assert np.all(s6[:5] >= s5 - 1e-12) and np.all(s5 >= s6[1:] - 1e-12)


def test_ritz_values_approach_spectrum(dense_30x20, exact):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 10, exact)
    xi = generalized_spectrum(gsvd_pair(A, L), 1.0).xi
    gaps = [abs(bidiagonal(st, k).singular_values()[0] ** 2 - xi[0]) for k in range(1, 11)]
    assert all(b <= a + 1e-14 for a, b in zip(gaps, gaps[1:]))


def test_bidiagonal_first_column(dense_30x20, exact):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 1, exact)
    np.testing.assert_allclose(bidiagonal(st, 1).matrix(), [[st.alphas[0]], [st.betas[1]]])
    with pytest.raises(ValueError):
        bidiagonal(st, 2)


def test_reorth_cases():
    e = np.eye(3)
    with pytest.raises(BreakdownError):
        reorth_against(e[0], [e[0], e[1]], tol=1e-14)
    np.testing.assert_allclose(reorth_against(e[2], [e[0], e[1]]), e[2], atol=1e-15)
    z = np.array([0.0, 0.0, 0.7])
    np.testing.assert_allclose(reorth_against(e[0] + z, [e[0], e[1]]), z, atol=1e-15)


def test_reorth_gram_images():
    G = np.diag([2.0, 1.0])
    w = np.array([1.0, 0.0]) / np.sqrt(2)
    v = reorth_against([1.0, 1.0], [w], [G @ w])
    assert abs(w @ G @ v) <= 1e-15


def test_checkpoint_roundtrip(tmp_path, dense_30x20, exact):
    A, L, M, b = dense_30x20
    st = pgkb_run(*ops(A, M), 1.0, b, 4, exact)
    save_checkpoint(st, tmp_path / "ck.bin")
    snap = load_checkpoint(tmp_path / "ck.bin")
    assert snap.k == st.k and snap.alpha == 1.0 and snap.breakdown is None
    np.testing.assert_array_equal(snap.U, st.U_matrix())
    np.testing.assert_array_equal(snap.W, np.column_stack(st.W))
    np.testing.assert_array_equal(snap.alphas, st.alphas)


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"\0" * 128)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")


def test_inner_stats_recorded():
    P = make_problem("deriv2", 60, epsilon=1e-3)
    st = pgkb_run(P.A, P.M, 1.0, P.b, 5, InnerSolveConfig(tol=1e-6, max_iter=3))
    assert len(st.inner_stats) == 6
    assert st.inner_truncations > 0
