import threading

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pgkbreg.exceptions import DimensionError, OperatorNotSPDError
from pgkbreg.operators import (
    RELAXED_INNER,
    TIGHT_INNER,
    InnerSolveConfig,
    LinearOperator,
    cg_solve,
    load_matrix_market,
    make_gram,
    op_apply,
)
from pgkbreg.problems import build_deriv2, build_gauss1d, first_difference, neg_laplacian_2d, tv_linearized_M

A32 = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])


def test_identity_forward():
    np.testing.assert_array_equal(op_apply(LinearOperator.identity(3), [1, 2, 3]), [1, 2, 3])


@pytest.mark.parametrize(
    "mat", [A32, sp.csr_matrix(A32)], ids=["dense", "sparse"]
)
def test_dense_and_sparse_apply(mat):
    op = LinearOperator.from_matrix(mat)
    np.testing.assert_array_equal(op_apply(op, [1, 1]), [1, 2, 0])
    np.testing.assert_array_equal(op_apply(op, [1, 1, 5], "adjoint"), [1, 2])
    assert (op.n_forward, op.n_adjoint) == (1, 1)


def test_bad_mode_and_length():
    op = LinearOperator.from_matrix(A32)
    with pytest.raises(ValueError):
        op_apply(op, [1, 1], "sideways")
    with pytest.raises(DimensionError):
        op.forward(np.ones(3))
    with pytest.raises(DimensionError):
        op.adjoint(np.ones(2))


def test_nonsymmetric_needs_rmatvec():
    with pytest.raises(ValueError):
        LinearOperator((2, 3), lambda v: v[:2])


def test_transpose_and_to_dense():
    op = LinearOperator.from_matrix(A32)
    np.testing.assert_array_equal(op.T.to_dense(), A32.T)
    probe = LinearOperator((3, 2), lambda v: A32 @ v, lambda u: A32.T @ u)
    np.testing.assert_array_equal(probe.to_dense(), A32)


def test_counters_thread_safe():
    op = LinearOperator.identity(4)

    def work():
        for _ in range(500):
            op.forward(np.ones(4))

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert op.n_forward == 2000
    op.reset_counts()
    assert op.n_forward == 0


def shipped_operators():
    n = 40
    x = np.linspace(0, 1, n) > 0.5
    return {
        "deriv2": build_deriv2(n)[0],
        "gauss1d": build_gauss1d(n, 3.0)[0],
        "firstdiff": LinearOperator.from_matrix(first_difference(n)),
        "tv": tv_linearized_M(x.astype(float), 1e-3)[0],
        "laplacian": neg_laplacian_2d(5, 4),
        "identity": LinearOperator.identity(n),
        "zeros": LinearOperator.zeros(n, 7),
    }


@pytest.mark.parametrize("name", list(shipped_operators()))
def test_adjoint_consistency(name):
    op = shipped_operators()[name]
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = rng.standard_normal(op.ncols)
        u = rng.standard_normal(op.nrows)
        Av = op.forward(v)
        lhs, rhs = Av @ u, v @ op.adjoint(u)
        assert abs(lhs - rhs) <= 1e-10 * max(np.linalg.norm(Av) * np.linalg.norm(u), 1e-300)


@pytest.mark.parametrize(
    "A, M, alpha, expected",
    [
        (np.eye(3), np.zeros((3, 3)), 7.0, np.eye(3)),
        (np.zeros((3, 3)), np.eye(3), 2.0, 2 * np.eye(3)),
        (np.diag([1.0, 2.0]), np.diag([1.0, 0.0]), 1.0, np.diag([2.0, 4.0])),
    ],
)
def test_make_gram(A, M, alpha, expected):
    G = make_gram(LinearOperator.from_matrix(A), LinearOperator.from_matrix(M), alpha)
    np.testing.assert_allclose(np.column_stack([G.apply(e) for e in np.eye(len(A))]), expected)
    np.testing.assert_allclose(G.to_dense(), expected)


def test_make_gram_validates():
    A = LinearOperator.identity(3)
    with pytest.raises(ValueError):
        make_gram(A, A, 0.0)
    with pytest.raises(DimensionError):
        make_gram(A, LinearOperator.identity(2), 1.0)


def test_gram_positive_on_deriv2():
    A, _ = build_deriv2(50)
    M = LinearOperator.from_matrix((first_difference(50).T @ first_difference(50)).tocsr())
    G = make_gram(A, M, 1e-3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(50)
        assert v @ G.apply(v) > 0


def test_cg_identity_one_step():
    res = cg_solve(LinearOperator.identity(2), [3.0, 4.0])
    np.testing.assert_allclose(res.x, [3.0, 4.0])
    assert res.iters == 1 and res.converged


def test_cg_diag():
    G = LinearOperator.from_matrix(np.diag([1.0, 2.0, 3.0]))
    res = cg_solve(G, [1.0, 2.0, 3.0], InnerSolveConfig(tol=1e-12))
    np.testing.assert_allclose(res.x, 1.0, atol=1e-12)


def test_cg_zero_rhs():
    res = cg_solve(LinearOperator.identity(3), np.zeros(3))
    assert res.iters == 0 and not res.x.any()


def test_cg_deriv2_against_direct():
    A, _ = build_deriv2(100)
    L = first_difference(100)
    G = make_gram(A, LinearOperator.from_matrix((L.T @ L).tocsr()), 10.0)
    rhs = np.random.default_rng(3).standard_normal(100)
    res = cg_solve(G, rhs, InnerSolveConfig(tol=1e-11, max_iter=2000))
    assert res.relres <= 1e-10
    direct = np.linalg.solve(G.to_dense(), rhs)
    assert np.linalg.norm(res.x - direct) <= 1e-8 * np.linalg.norm(direct)


def test_cg_direct_method_matches():
    A = LinearOperator.from_matrix(np.random.default_rng(2).standard_normal((8, 5)))
    G = make_gram(A, LinearOperator.identity(5), 0.5)
    rhs = np.ones(5)
    res = cg_solve(G, rhs, InnerSolveConfig(method="direct"))
    np.testing.assert_allclose(G.apply(res.x), rhs, atol=1e-12)


def test_cg_error_monotone_in_G_norm():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 30))
    Gd = X @ X.T + 0.1 * np.eye(30)
    G = LinearOperator.from_matrix(Gd, symmetric=True)
    rhs = rng.standard_normal(30)
    xs = np.linalg.solve(Gd, rhs)
    errs = []
    cg_solve(G, rhs, InnerSolveConfig(tol=1e-10, max_iter=200),
             callback=lambda x: errs.append(np.sqrt((x - xs) @ Gd @ (x - xs))))
    assert all(b <= a * (1 + 1e-8) for a, b in zip(errs, errs[1:]))


def test_cg_truncation_returns_last_iterate():
    Gd = np.diag(np.logspace(0, 6, 50))
    seen = []
    res = cg_solve(LinearOperator.from_matrix(Gd), np.ones(50), InnerSolveConfig(tol=1e-12, max_iter=5),
                   callback=lambda x: seen.append(x.copy()))
    assert not res.converged and res.iters == 5
    np.testing.assert_array_equal(res.x, seen[-1])
    assert res.relres == pytest.approx(np.linalg.norm(Gd @ res.x - 1) / np.sqrt(50), rel=1e-6)


def test_cg_detects_indefinite():
    with pytest.raises(OperatorNotSPDError):
        cg_solve(LinearOperator.from_matrix(np.diag([1.0, -1.0])), np.array([0.0, 1.0]))


@pytest.mark.parametrize("kwargs", [dict(tol=0.0), dict(tol=1.0), dict(max_iter=0), dict(method="lu")])
def test_inner_config_validation(kwargs):
    with pytest.raises(ValueError):
        InnerSolveConfig(**kwargs)


def test_presets():
    assert TIGHT_INNER.tol == 1e-6 and RELAXED_INNER.tol == 1e-4


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_cg_solves_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    Gd = X @ X.T + np.eye(n)
    rhs = rng.standard_normal(n)
    res = cg_solve(LinearOperator.from_matrix(Gd), rhs, InnerSolveConfig(tol=1e-10, max_iter=10 * n))
    assert np.linalg.norm(Gd @ res.x - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_matrix_market_roundtrip(tmp_path):
    import scipy.io

    scipy.io.mmwrite(str(tmp_path / "a.mtx"), sp.csr_matrix(A32))
    op = load_matrix_market(tmp_path / "a.mtx")
    np.testing.assert_array_equal(op.to_dense(), A32)
