import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgkbreg.dense_core import gsvd_pair, minimize_scalar, sym_psd_sqrt
from pgkbreg.exceptions import DimensionError, JointRankError, NotPSDError
from pgkbreg.problems import first_difference

from conftest import random_pair


def reconstruction(A, L, g):
    ea = np.linalg.norm(g.U_A @ g.D_A @ g.Zinv - A) / np.linalg.norm(A)
    el = np.linalg.norm(g.U_L @ g.D_L @ g.Zinv - L) / max(np.linalg.norm(L), 1.0)
    return ea, el


def test_identity_pair():
    g = gsvd_pair(np.eye(2), np.eye(2))
    assert (g.r, g.q) == (0, 2)
    np.testing.assert_allclose(g.gamma, [1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(g.sigma, [2**-0.5] * 2, atol=1e-14)
    np.testing.assert_allclose(g.rho, [2**-0.5] * 2, atol=1e-14)


def test_diag_pair_gamma():
    # A = U_A D_A Z^{-1}: with Z^{-1} = diag(sqrt(5), sqrt(2)) the 2x2 algebra is explicit
    g = gsvd_pair(np.diag([2.0, 1.0]), np.eye(2))
    gam = np.array([2.0, 1.0])
    np.testing.assert_allclose(g.gamma, gam, rtol=1e-13)
    np.testing.assert_allclose(g.sigma, gam / np.sqrt(1 + gam**2), rtol=1e-13)
    np.testing.assert_allclose(np.abs(g.Zinv), np.diag([np.sqrt(5.0), np.sqrt(2.0)]), atol=1e-13)


def test_first_difference_pair():
    A, L, _ = random_pair(20, 15, 0)
    g = gsvd_pair(A, L)
    ea, el = reconstruction(A, L, g)
    assert ea <= 1e-10 and el <= 1e-10
    assert (g.r, g.q) == (1, 14)
    np.testing.assert_allclose(g.sigma**2 + g.rho**2, 1.0, atol=1e-12)
    np.testing.assert_allclose(g.U_A.T @ g.U_A, np.eye(20), atol=1e-12)
    np.testing.assert_allclose(g.U_L.T @ g.U_L, np.eye(14), atol=1e-12)
    assert np.all(np.diff(g.sigma) <= 1e-15)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 12), n=st.integers(1, 10), p=st.integers(0, 10), seed=st.integers(0, 2**31))
def test_gsvd_reconstruction_property(m, n, p, seed):
    p = min(p, n)
    if m + p < n:
        return
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    L = rng.standard_normal((p, n))
    g = gsvd_pair(A, L)
    ea, el = reconstruction(A, L, g)
    assert ea <= 1e-8 and el <= 1e-8
    mid = slice(g.r, g.r + g.q)
    assert np.max(np.abs(g.sigma[mid] ** 2 + g.rho[mid] ** 2 - 1), initial=0) <= 1e-12
    assert g.r + g.q + (g.n - g.r - g.q) == n


def test_empty_L():
    A = np.random.default_rng(1).standard_normal((6, 4))
    g = gsvd_pair(A, np.zeros((0, 4)))
    assert g.r == 4 and g.q == 0
    assert reconstruction(A, np.zeros((0, 4)), g)[0] <= 1e-12


def test_pure_L_block():
    # A has a null direction that L sees
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    g = gsvd_pair(A, np.eye(2))
    assert g.gamma[-1] == 0.0
    assert reconstruction(A, np.eye(2), g)[0] <= 1e-12


@pytest.mark.parametrize(
    "A, L, exc",
    [
        (np.zeros((3, 2)), np.zeros((1, 2)), JointRankError),
        (np.eye(2)[:1], np.eye(2)[:0], JointRankError),
        (np.eye(3), np.ones((2, 3)), JointRankError),
        (np.eye(2), np.ones((3, 2)), DimensionError),
    ],
)
def test_gsvd_errors(A, L, exc):
    with pytest.raises(exc):
        gsvd_pair(A, L)


def test_sqrt_identity():
    C = sym_psd_sqrt(np.eye(3))
    np.testing.assert_allclose(C.T @ C, np.eye(3), atol=1e-14)


def test_sqrt_rank_one():
    C = sym_psd_sqrt(np.diag([4.0, 0.0]))
    np.testing.assert_allclose(C, [[2.0, 0.0]])


def test_sqrt_zero_matrix_has_no_rows():
    assert sym_psd_sqrt(np.zeros((3, 3))).shape == (0, 3)


def test_sqrt_not_psd():
    with pytest.raises(NotPSDError):
        sym_psd_sqrt(np.diag([1.0, -0.5]))


def test_sqrt_not_symmetric():
    with pytest.raises(ValueError):
        sym_psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 9), r=st.integers(0, 9), seed=st.integers(0, 2**31))
def test_sqrt_reproduces(n, r, seed):
    X = np.random.default_rng(seed).standard_normal((n, min(r, n)))
    S = X @ X.T
    C = sym_psd_sqrt(S)
    assert np.abs(C.T @ C - S).max() <= 1e-10 * max(np.abs(S).max(), 1.0)
    assert C.shape[0] <= min(r, n)


def test_minimize_quadratic():
    x, fx = minimize_scalar(lambda t: (t - 2.0) ** 2, 0.0, 5.0)
    assert abs(x - 2.0) <= 1e-8
    assert fx <= 1e-15


def test_minimize_monotone_returns_lo():
    assert minimize_scalar(lambda t: t, 1.0, 3.0) == (1.0, 1.0)


def test_minimize_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        minimize_scalar(lambda t: np.nan, 0.0, 1.0)


def test_minimize_bad_bracket():
    with pytest.raises(ValueError):
        minimize_scalar(lambda t: t, 1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(-3, 3), a=st.floats(0.1, 10))
def test_minimize_random_quadratic(c, a):
    x, _ = minimize_scalar(lambda t: a * (t - c) ** 2, -5.0, 5.0)
    assert abs(x - c) <= 1e-6
