"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The factor matrix operations here are the ones executed once or more per
solver iteration, all O(n*r):

* ``constraint_parts``   -- variety residuals (diagonal block + knapsack scalar)
* ``arrow_system``       -- Gram/normal-equation pieces of the constraint
                            Jacobian (diagonal, border column, corner)
* ``arrow_solve``        -- solve the arrow-structured (n+1) system by Schur
                            complement on the single border entry
* ``apply_correction``   -- subtract diag(mu)*(2R - e e1^T) + lam * a w^T
* ``sym_csr_matmat``     -- CSR (full symmetric storage) times dense factor

Set ``QKSDP_NO_NUMBA=1`` to force the numpy path (also used automatically
when numba is not importable).  ``backend()`` reports which path is live.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("QKSDP_NO_NUMBA", "") not in ("", "0")

try:  # pragma: no cover - absence of numba is environment-specific
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def constraint_parts_np(R, a, tau):
    """Residuals (diag(RR^T) - R e1, ||a^T R||^2 - tau * a^T R e1)."""
    g = np.einsum("ij,ij->i", R, R) - R[:, 0]
    ra = R.T @ a
    s = float(ra @ ra - tau * (a @ R[:, 0]))
    return g, s


def arrow_system_np(R, a, tau):
    """Pieces of J J^T for the constraint Jacobian at R.

    Returns (d, b, gamma, w) with d_i = ||2R_i - e1||^2,
    w = 2 R^T a - tau e1, b_i = a_i (2R_i - e1) . w,
    gamma = sum(a^2) ||w||^2.
    """
    Z = 2.0 * R
    d = np.einsum("ij,ij->i", Z, Z) - 2.0 * Z[:, 0] + 1.0
    # (2R_i - e1) . w = Z_i . w - w[0]
    w = 2.0 * (R.T @ a)
    w[0] -= tau
    b = a * (Z @ w - w[0])
    gamma = float((a @ a) * (w @ w))
    return d, b, gamma, w


def arrow_solve_np(d, b, gamma, rhs, rhs_l, pivot_tol):
    """Solve [diag(d) b; b^T gamma] [mu; lam] = [rhs; rhs_l].

    Returns (mu, lam, pivot) where pivot is the Schur complement scaled by
    the corner magnitude; callers compare it against pivot_tol.
    """
    dmin = d.min() if d.size else 0.0
    if dmin <= pivot_tol:
        return None, 0.0, dmin
    bd = b / d
    schur = gamma - float(b @ bd)
    scale = max(1.0, abs(gamma))
    if schur <= pivot_tol * scale:
        return None, 0.0, schur / scale
    lam = (rhs_l - float(bd @ rhs)) / schur
    mu = (rhs - lam * b) / d
    return mu, lam, schur / scale


def apply_correction_np(R, a, w, mu, lam):
    """Return diag(mu) (2R - e e1^T) + lam * a w^T."""
    out = (2.0 * mu)[:, None] * R
    out[:, 0] -= mu
    out += (lam * a)[:, None] * w[None, :]
    return out


def proj_rhs_np(R, a, G, w):
    """Right-hand sides <J_i, G> and <J_knap, G> for tangent projection.

    ``w`` must be the border vector 2 R^T a - tau e1 from arrow_system.
    """
    rhs = 2.0 * np.einsum("ij,ij->i", R, G) - G[:, 0]
    rhs_l = float((G.T @ a) @ w)
    return rhs, rhs_l


def sym_csr_matmat_np(indptr, indices, data, B):
    """CSR (full symmetric storage) times dense matrix, pure python loops.

    Only used when numba is unavailable *and* no scipy handle is supplied;
    production callers go through scipy's native product instead.
    """
    n = indptr.shape[0] - 1
    out = np.zeros((n, B.shape[1]))
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi > lo:
            out[i] = data[lo:hi] @ B[indices[lo:hi]]
    return out


# ---------------------------------------------------------------------------
# numba mirrors
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _constraint_parts_nb(R, a, tau):
        n, r = R.shape
        g = np.empty(n)
        ra = np.zeros(r)
        s0 = 0.0
        for i in range(n):
            acc = 0.0
            ai = a[i]
            for j in range(r):
                x = R[i, j]
                acc += x * x
                ra[j] += ai * x
            g[i] = acc - R[i, 0]
            s0 += ai * R[i, 0]
        s = 0.0
        for j in range(r):
            s += ra[j] * ra[j]
        return g, s - tau * s0

    @njit(cache=True)
    def _arrow_system_nb(R, a, tau):
        n, r = R.shape
        w = np.zeros(r)
        aa = 0.0
        for i in range(n):
            ai = a[i]
            aa += ai * ai
            for j in range(r):
                w[j] += 2.0 * ai * R[i, j]
        w[0] -= tau
        d = np.empty(n)
        b = np.empty(n)
        ww = 0.0
        for j in range(r):
            ww += w[j] * w[j]
        for i in range(n):
            di = 0.0
            bi = 0.0
            for j in range(r):
                z = 2.0 * R[i, j]
                if j == 0:
                    z -= 1.0
                di += z * z
                bi += z * w[j]
            d[i] = di
            b[i] = a[i] * bi
        return d, b, aa * ww, w

    @njit(cache=True)
    def _arrow_solve_core_nb(d, b, gamma, rhs, rhs_l):
        n = d.shape[0]
        mu = np.empty(n)
        schur = gamma
        top = rhs_l
        dmin = 1.0e300
        for i in range(n):
            if d[i] < dmin:
                dmin = d[i]
        if dmin <= 0.0:
            return mu, 0.0, dmin, False
        for i in range(n):
            bd = b[i] / d[i]
            schur -= b[i] * bd
            top -= bd * rhs[i]
        scale = max(1.0, abs(gamma))
        if schur <= 0.0:
            return mu, 0.0, schur / scale, False
        lam = top / schur
        for i in range(n):
            mu[i] = (rhs[i] - lam * b[i]) / d[i]
        return mu, lam, schur / scale, True

    @njit(cache=True)
    def _apply_correction_nb(R, a, w, mu, lam):
        n, r = R.shape
        out = np.empty((n, r))
        for i in range(n):
            mi = mu[i]
            la = lam * a[i]
            for j in range(r):
                out[i, j] = 2.0 * mi * R[i, j] + la * w[j]
            out[i, 0] -= mi
        return out

    @njit(cache=True)
    def _proj_rhs_nb(R, a, G, w):
        n, r = R.shape
        rhs = np.empty(n)
        ga = np.zeros(r)
        for i in range(n):
            acc = 0.0
            ai = a[i]
            for j in range(r):
                acc += 2.0 * R[i, j] * G[i, j]
                ga[j] += ai * G[i, j]
            rhs[i] = acc - G[i, 0]
        rhs_l = 0.0
        for j in range(r):
            rhs_l += ga[j] * w[j]
        return rhs, rhs_l

    @njit(cache=True)
    def _sym_csr_matmat_nb(indptr, indices, data, B):
        n = indptr.shape[0] - 1
        m = B.shape[1]
        out = np.zeros((n, m))
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                cij = data[k]
                col = indices[k]
                for j in range(m):
                    out[i, j] += cij * B[col, j]
        return out

    def constraint_parts_nb(R, a, tau):
        g, s = _constraint_parts_nb(R, a, tau)
        return g, float(s)

    def arrow_system_nb(R, a, tau):
        d, b, gamma, w = _arrow_system_nb(R, a, tau)
        return d, b, float(gamma), w

    def arrow_solve_nb(d, b, gamma, rhs, rhs_l, pivot_tol):
        mu, lam, pivot, ok = _arrow_solve_core_nb(d, b, gamma, rhs, rhs_l)
        if not ok or pivot <= pivot_tol:
            return None, 0.0, pivot
        return mu, lam, pivot

    def proj_rhs_nb(R, a, G, w):
        rhs, rhs_l = _proj_rhs_nb(R, a, G, w)
        return rhs, float(rhs_l)

    constraint_parts = constraint_parts_nb
    arrow_system = arrow_system_nb
    arrow_solve = arrow_solve_nb
    apply_correction = _apply_correction_nb
    proj_rhs = proj_rhs_nb
    sym_csr_matmat = _sym_csr_matmat_nb
    _BACKEND = "numba"
else:
    constraint_parts = constraint_parts_np
    arrow_system = arrow_system_np

    def _arrow_solve_guard(d, b, gamma, rhs, rhs_l, pivot_tol):
        mu, lam, pivot = arrow_solve_np(d, b, gamma, rhs, rhs_l, pivot_tol)
        return mu, lam, pivot

    arrow_solve = _arrow_solve_guard
    apply_correction = apply_correction_np
    proj_rhs = proj_rhs_np
    sym_csr_matmat = sym_csr_matmat_np
    _BACKEND = "numpy"


def backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _BACKEND
