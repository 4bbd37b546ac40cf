"""Extreme eigenpairs of sparse + diagonal + low-rank symmetric operators.

Used for the escape dual (smallest eigenvalue as a function of the scalar
multiplier) and the large-scale dual residue.  Small operators take a dense
eigendecomposition; larger ones a restarted Lanczos iteration with full
reorthogonalization on the Krylov basis and deflation of converged pairs.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EigNotConverged

DENSE_THRESHOLD = 400
RESTART_DIM = 30


@dataclass(frozen=True)
class StructuredOperator:
    """S0 + diag(D) + sum_k w_k (u_k z_k^T + z_k u_k^T) / 2."""

    n: int
    S0: sp.csr_matrix | None = None
    D: np.ndarray | None = None
    lowrank: tuple = field(default_factory=tuple)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"operator dim {self.n}, vector {x.shape}")
        y = self.S0 @ x if self.S0 is not None else np.zeros_like(x)
        if self.D is not None:
            y = y + self.D * x
        for w, u, z in self.lowrank:
            y = y + (0.5 * w) * (u * (z @ x) + z * (u @ x))
        return y

    def matmat(self, X):
        Y = self.S0 @ X if self.S0 is not None else np.zeros_like(X)
        if self.D is not None:
            Y = Y + self.D[:, None] * X
        for w, u, z in self.lowrank:
            Y = Y + (0.5 * w) * (np.outer(u, z @ X) + np.outer(z, u @ X))
        return Y

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        if self.S0 is not None:
            A += self.S0.toarray()
        if self.D is not None:
            A[np.diag_indices(self.n)] += self.D
        for w, u, z in self.lowrank:
            A += (0.5 * w) * (np.outer(u, z) + np.outer(z, u))
        return A

    def fro_norm_estimate(self):
        """Exact Frobenius norm of the assembled operator, in O(nnz)."""
        # assemble cheaply in sparse form; low-rank terms stay factored
        total = 0.0
        A = self.S0.copy() if self.S0 is not None else sp.csr_matrix((self.n, self.n))
        if self.D is not None:
            A = (A + sp.diags(self.D)).tocsr()
        if not self.lowrank:
            return float(sp.linalg.norm(A))
        # ||A + L||^2 = ||A||^2 + 2<A, L> + ||L||^2 with L the low-rank part
        total = sp.linalg.norm(A) ** 2
        mats = [(0.5 * w, u, z) for w, u, z in self.lowrank]
        for w, u, z in mats:
            Au = A @ u
            Az = A @ z
            total += 2.0 * w * (z @ Au + u @ Az)
        for w1, u1, z1 in mats:
            for w2, u2, z2 in mats:
                total += (
                    2.0
                    * w1
                    * w2
                    * ((u1 @ u2) * (z1 @ z2) + (u1 @ z2) * (z1 @ u2))
                )
        return float(np.sqrt(max(0.0, total)))


def matvec(opr, x):
    return opr.matvec(x)


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray  # columns
    converged: bool
    residuals: np.ndarray


def _dense_smallest(opr, k):
    A = opr.to_dense()
    vals, vecs = np.linalg.eigh(A)
    res = np.array(
        [np.linalg.norm(A @ vecs[:, i] - vals[i] * vecs[:, i]) for i in range(k)]
    )
    return EigResult(vals[:k].copy(), vecs[:, :k].copy(), True, res)


def _lanczos_one(opr, locked, tol, max_matvecs, restart_dim, rng, v0=None):
    """Smallest eigenpair in the complement of the locked columns."""
    n = opr.n
    nl = locked.shape[1]
    m = min(restart_dim, n - nl)

    def deflate(x):
        if nl:
            x = x - locked @ (locked.T @ x)
        return x

    q = deflate(np.asarray(v0, dtype=np.float64) if v0 is not None
                else rng.standard_normal(n))
    nq = np.linalg.norm(q)
    if nq == 0:
        raise EigNotConverged("degenerate start vector")
    q /= nq
    matvecs = 0
    best = (np.inf, q, np.inf)
    normest = 1.0  # running operator-norm estimate from the Ritz values
    while matvecs < max_matvecs:
        V = np.empty((n, m))
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[:, 0] = q
        j = 0
        while j < m:
            w = deflate(opr.matvec(V[:, j]))
            matvecs += 1
            alpha[j] = V[:, j] @ w
            w -= V[:, : j + 1] @ (V[:, : j + 1].T @ w)  # full reorthogonalization
            w -= V[:, : j + 1] @ (V[:, : j + 1].T @ w)
            bj = np.linalg.norm(w)
            beta[j] = bj
            if j + 1 == m:
                break
            if bj < 1e-14 * max(1.0, abs(alpha[j])):
                # invariant subspace: diagonalize what we have
                m = j + 1
                break
            V[:, j + 1] = w / bj
            j += 1
        T = np.diag(alpha[:m])
        for i in range(m - 1):
            T[i, i + 1] = T[i + 1, i] = beta[i]
        tvals, tvecs = np.linalg.eigh(T)
        theta = tvals[0]
        u = V[:, :m] @ tvecs[:, 0]
        u = deflate(u)
        u /= np.linalg.norm(u)
        resid = np.linalg.norm(deflate(opr.matvec(u)) - theta * u)
        matvecs += 1
        normest = max(normest, abs(tvals[0]), abs(tvals[-1]))
        if resid < best[2]:
            best = (theta, u, resid)
        if resid <= tol * max(1.0, abs(theta), normest):
            return theta, u, resid, True, matvecs
        q = u
        # clustered spectra need a thicker Krylov space: grow on restart
        m = min(max(restart_dim, int(1.5 * m)), 300, n - nl)
    theta, u, resid = best
    return theta, u, resid, False, matvecs


def smallest_eigenpairs_k(
    opr,
    k=1,
    tol=1e-9,
    max_iter=20000,
    seed=0,
    dense_threshold=DENSE_THRESHOLD,
    restart_dim=RESTART_DIM,
    raise_on_fail=False,
    v0=None,
):
    """k smallest eigenpairs, mutually orthonormal; deterministic per seed."""
    if k > opr.n:
        raise DimensionMismatch(f"k={k} exceeds operator dim {opr.n}")
    if opr.n <= dense_threshold:
        return _dense_smallest(opr, k)
    rng = np.random.default_rng(seed)
    locked = np.empty((opr.n, 0))
    vals, res, ok = [], [], True
    for i in range(k):
        theta, u, resid, conv, _ = _lanczos_one(
            opr, locked, tol, max_iter, restart_dim, rng,
            v0=v0 if i == 0 else None,
        )
        vals.append(theta)
        res.append(resid)
        ok = ok and conv
        locked = np.column_stack([locked, u])
    if not ok and raise_on_fail:
        raise EigNotConverged(f"residuals {res}")
    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    locked = locked[:, order]
    # report residuals against the full (undeflated) operator
    full_res = np.array(
        [
            np.linalg.norm(opr.matvec(locked[:, i]) - vals[i] * locked[:, i])
            for i in range(k)
        ]
    )
    return EigResult(vals, locked, ok, full_res)


def smallest_eigenpair(opr, tol=1e-9, max_iter=20000, seed=0, **kw):
    """(lambda_min estimate, unit vector, converged flag)."""
    out = smallest_eigenpairs_k(opr, 1, tol=tol, max_iter=max_iter, seed=seed, **kw)
    return float(out.values[0]), out.vectors[:, 0], out.converged
