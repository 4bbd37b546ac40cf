"""Small-scale reference computations for cross-checking the solver.

Everything here is deliberately brute-force and independent of the solver's
fast paths: exhaustive enumeration for the integer optimum, dense eigensolves
for the escape dual, and a from-scratch dense KKT evaluation.
"""

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import TooLarge

EXHAUSTIVE_MAX_N = 20


def exhaustive_qkp(inst):
    """Exact QKP optimum by enumerating all 2^n binary vectors."""
    n = inst.n
    if n > EXHAUSTIVE_MAX_N:
        raise TooLarge(f"exhaustive enumeration capped at n={EXHAUSTIVE_MAX_N}, got {n}")
    C = inst.C.toarray()
    a, tau = np.asarray(inst.a, dtype=np.float64), inst.tau
    best, best_x = -np.inf, np.zeros(n, dtype=np.int64)
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, start + chunk, dtype=np.uint32)
        X = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.float64)
        ok = X @ a <= tau
        if not ok.any():
            continue
        Xok = X[ok]
        vals = np.einsum("ki,ij,kj->k", Xok, C, Xok)
        k = int(vals.argmax())
        if vals[k] > best:
            best, best_x = float(vals[k]), Xok[k].astype(np.int64)
    return best, best_x


def escape_dual_dense(prob, alpha):
    """phi(alpha) by a dense eigensolve of M - alpha*A."""
    M = prob.shifted_operator(0.0).to_dense()
    A = (M - prob.shifted_operator(1.0).to_dense())
    return float(np.linalg.eigvalsh(M - alpha * A)[0])


def escape_dual_grid(prob, lo=-1.0, hi=1.0, grid=200):
    """Maximize the concave escape dual by grid localization + refinement."""
    M = prob.shifted_operator(0.0).to_dense()
    A = M - prob.shifted_operator(1.0).to_dense()

    def phi(alpha):
        return float(np.linalg.eigvalsh(M - alpha * A)[0])

    # widen the bracket until the maximum is interior
    for _ in range(60):
        xs = np.linspace(lo, hi, grid)
        vals = np.array([phi(x) for x in xs])
        k = int(vals.argmax())
        if 0 < k < grid - 1:
            lo, hi = xs[k - 1], xs[k + 1]
            break
        span = hi - lo
        if k == 0:
            lo -= span
        else:
            hi += span
    res = minimize_scalar(
        lambda x: -phi(x), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(-res.fun), float(res.x)


def dense_kkt(inst, R, mu, lam, y=None):
    """KKT residues recomputed densely from first principles."""
    C = inst.C.toarray()
    a, tau = np.asarray(inst.a, dtype=np.float64), inst.tau
    R = np.asarray(R, dtype=np.float64)
    X = R @ R.T
    x = R[:, 0]
    g = np.diag(X) - x
    s = a @ X @ a - tau * (a @ x)
    Rp = 0.5 * np.sqrt(g @ g + s * s)
    if y is None:
        y = 0.5 * float((mu + lam * tau * a) @ x)
    n = inst.n
    S = np.empty((n + 1, n + 1))
    S[0, 0] = -y
    b = 0.5 * (mu + lam * tau * a)
    S[0, 1:] = b
    S[1:, 0] = b
    S[1:, 1:] = -C - np.diag(mu) - lam * np.outer(a, a)
    w = np.linalg.eigvalsh(S)
    Rd = np.linalg.norm(np.minimum(w, 0.0)) / (1.0 + np.linalg.norm(S))
    obj = -float(np.einsum("ij,ij->", C @ R, R))
    pdgap = abs(obj - y) / (1.0 + abs(obj) + abs(y))
    return Rp, Rd, pdgap, obj
