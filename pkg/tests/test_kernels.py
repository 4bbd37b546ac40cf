"""Kernel correctness: numpy reference path vs the active backend, and the
arrow-structured solve against a dense least-squares reference."""

import numpy as np
import pytest
import scipy.sparse as sp

from qksdp import kernels


def _random_setup(rng, n=40, r=5):
    R = rng.standard_normal((n, r))
    R[:, 0] = rng.uniform(0.1, 0.9, n)
    a = rng.uniform(0.5, 2.0, n)
    tau = 0.4 * a.sum()
    return R, a, tau


def _dense_jacobian(R, a, tau):
    """Rows: gradients of diag(RR^T) - Re1 (n of them) then the knapsack poly."""
    n, r = R.shape
    J = np.zeros((n + 1, n * r))
    Z = 2.0 * R
    Z[:, 0] -= 1.0
    for i in range(n):
        J[i, i * r : (i + 1) * r] = Z[i]
    w = 2.0 * (R.T @ a)
    w[0] -= tau
    for i in range(n):
        J[n, i * r : (i + 1) * r] = a[i] * w
    return J


def test_backend_reports_mode():
    assert kernels.backend() in ("numba", "numpy")


def test_constraint_parts_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        R, a, tau = _random_setup(rng)
        g, s = kernels.constraint_parts(R, a, tau)
        g_ref = np.einsum("ij,ij->i", R, R) - R[:, 0]
        aR = a @ R
        s_ref = aR @ aR - tau * aR[0]
        assert np.allclose(g, g_ref, atol=1e-12)
        assert np.isclose(s, s_ref, atol=1e-9 * (1 + abs(s_ref)))


def test_arrow_system_matches_jacobian_gram():
    rng = np.random.default_rng(1)
    for _ in range(25):
        R, a, tau = _random_setup(rng, n=15, r=4)
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        J = _dense_jacobian(R, a, tau)
        G = J @ J.T
        assert np.allclose(d, np.diag(G)[:-1], rtol=1e-10)
        assert np.allclose(b, G[-1, :-1], rtol=1e-9, atol=1e-9)
        assert np.isclose(gamma, G[-1, -1], rtol=1e-10)


def test_arrow_solve_matches_dense_solve():
    rng = np.random.default_rng(2)
    for _ in range(100):
        R, a, tau = _random_setup(rng, n=20, r=4)
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        rhs = rng.standard_normal(20)
        rhs_l = rng.standard_normal()
        mu, lam, _ = kernels.arrow_solve(d, b, gamma, rhs, rhs_l, 1e-14)
        A = np.diag(d)
        M = np.block([[A, b[:, None]], [b[None, :], np.array([[gamma]])]])
        ref = np.linalg.solve(M, np.append(rhs, rhs_l))
        assert np.allclose(mu, ref[:-1], rtol=1e-8, atol=1e-10)
        assert np.isclose(lam, ref[-1], rtol=1e-8, atol=1e-10)


def test_arrow_solve_flags_singular_pivot():
    # R = v e1^T with a binary v on the capacity makes the system singular
    n = 6
    v = np.array([1.0, 1, 0, 0, 1, 0])
    a = np.ones(n)
    tau = 3.0
    R = np.zeros((n, 3))
    R[:, 0] = v
    d, b, gamma, w = kernels.arrow_system(R, a, tau)
    mu, lam, pivot = kernels.arrow_solve(d, b, gamma, np.ones(n), 1.0, 1e-14)
    assert mu is None
    assert abs(pivot) <= 1e-14


def test_apply_correction_matches_jacobian_transpose():
    rng = np.random.default_rng(3)
    for _ in range(25):
        R, a, tau = _random_setup(rng, n=12, r=3)
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        y = rng.standard_normal(12)
        yl = rng.standard_normal()
        out = kernels.apply_correction(R, a, w, y, yl)
        J = _dense_jacobian(R, a, tau)
        ref = (J.T @ np.append(y, yl)).reshape(R.shape)
        assert np.allclose(out, ref, rtol=1e-9, atol=1e-9)


def test_proj_rhs_matches_jacobian_action():
    rng = np.random.default_rng(4)
    for _ in range(25):
        R, a, tau = _random_setup(rng, n=12, r=3)
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        G = rng.standard_normal(R.shape)
        rhs, rhs_l = kernels.proj_rhs(R, a, G, w)
        J = _dense_jacobian(R, a, tau)
        ref = J @ G.ravel()
        assert np.allclose(rhs, ref[:-1], rtol=1e-9, atol=1e-9)
        assert np.isclose(rhs_l, ref[-1], rtol=1e-9, atol=1e-9)


def test_numpy_reference_path_agrees_with_active_backend():
    rng = np.random.default_rng(5)
    R, a, tau = _random_setup(rng, n=60, r=6)
    g, s = kernels.constraint_parts(R, a, tau)
    g2, s2 = kernels.constraint_parts_np(R, a, tau)
    assert np.allclose(g, g2) and np.isclose(s, s2)
    d, b, gamma, w = kernels.arrow_system(R, a, tau)
    d2, b2, gamma2, w2 = kernels.arrow_system_np(R, a, tau)
    assert np.allclose(d, d2) and np.allclose(b, b2)
    assert np.isclose(gamma, gamma2) and np.allclose(w, w2)


def test_sym_csr_matmat_matches_scipy():
    rng = np.random.default_rng(6)
    n = 50
    M = sp.random(n, n, density=0.2, random_state=7, format="csr")
    C = (M + M.T).tocsr()
    X = rng.standard_normal((n, 4))
    out = kernels.sym_csr_matmat(C.indptr, C.indices, C.data, X)
    assert np.allclose(out, C @ X, rtol=1e-12)
