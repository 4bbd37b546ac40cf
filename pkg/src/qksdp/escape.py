"""Second-order stationarity test and escape at binary non-regular points.

At a binary point v e1^T the decision problem is a two-constraint SDP whose
dual is a one-dimensional concave maximization of the smallest eigenvalue of
M - alpha*A, with M = 2 diag((Cv) o d) - C and A = a a^T - sigma*tau*diag(a o d).
A supergradient at alpha is -u^T A u for a bottom eigenvector u, so the
maximizer is found by bracketing plus bisection on the supergradient sign.
If the maximum is negative, a rank <= 2 feasible direction with negative
objective is extracted from the bottom eigenspace at the maximizer.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import Inconclusive, RetractionDiverged, StepFailed
from .geometry import FactorPoint, retract_to_variety
from .spectral import StructuredOperator, smallest_eigenpairs_k

BISECT_MAX_ITER = 200
CLUSTER_RTOL = 1e-7


@dataclass(frozen=True)
class EscapeProblem:
    C: sp.csr_matrix
    a: np.ndarray
    tau: float
    v: np.ndarray
    d: np.ndarray
    sigma: float
    r: int

    @classmethod
    def at_point(cls, v, C, a, tau, r):
        v = np.asarray(v, dtype=np.float64)
        d = 2.0 * v - 1.0
        sigma = 1.0 if v.any() else -1.0
        return cls(C, np.asarray(a, dtype=np.float64), float(tau), v, d, sigma, int(r))

    def shifted_operator(self, alpha):
        """M - alpha*A as sparse + diagonal + rank-1."""
        Cv = self.C @ self.v
        D = 2.0 * Cv * self.d + alpha * self.sigma * self.tau * (self.a * self.d)
        return StructuredOperator(
            self.C.shape[0], S0=-self.C, D=D, lowrank=((-alpha, self.a, self.a),)
        )

    def quad_A(self, U):
        """Columnwise u^T A u (and cross terms) for A = aa^T - sigma*tau*diag(a o d)."""
        au = self.a @ U
        G = np.outer(au, au) - (self.sigma * self.tau) * (
            U.T @ ((self.a * self.d)[:, None] * U)
        )
        return G

    def quad_M(self, U):
        Cv = self.C @ self.v
        MU = -self.C @ U + (2.0 * Cv * self.d)[:, None] * U
        return U.T @ MU

    def scale(self):
        return 1.0 + float(sp.linalg.norm(self.C))


@dataclass
class EscapeOutcome:
    kind: str  # "StationaryCertificate" | "EscapingDirection"
    dual_alpha: float
    dual_value: float
    direction: np.ndarray | None = None  # n x (r-1), zero-padded, ||H|| = 1
    predicted_decrease: float = 0.0
    quad_value: float = 0.0  # <M H, H> for an escaping direction


def dual_value(prob, alpha, k=1, tol=1e-10, seed=0, v0=None):
    """phi(alpha) = lambda_min(M - alpha*A) and bottom eigenvector(s)."""
    opr = prob.shifted_operator(alpha)
    out = smallest_eigenpairs_k(opr, k=k, tol=tol, seed=seed, v0=v0)
    return float(out.values[0]), out


def _supergradient(prob, U0):
    return -float(prob.quad_A(U0[:, :1])[0, 0])


def solve_escape_sdp(prob, cert_tol=None, budget=BISECT_MAX_ITER, eig_tol=1e-10, seed=0):
    """Maximize phi(alpha); certify stationarity or extract a direction."""
    if prob.r < 3:
        raise ValueError("escape handling requires factor rank >= 3")
    if cert_tol is None:
        cert_tol = 1e-8 * prob.scale()

    evals = {}
    warm = [None]  # bottom eigenvector of the previous evaluation

    def eval_at(alpha):
        if alpha not in evals:
            val, out = dual_value(prob, alpha, tol=eig_tol, seed=seed, v0=warm[0])
            warm[0] = out.vectors[:, 0]
            evals[alpha] = (val, out.vectors, _supergradient(prob, out.vectors))
        return evals[alpha]

    # bracket a sign change of the supergradient by doubling outwards
    lo, hi = -1.0, 1.0
    val, _, s_lo = eval_at(lo)
    best = (val, lo)
    for _ in range(80):
        if s_lo >= 0:
            break
        hi = lo
        lo *= 2.0
        val, _, s_lo = eval_at(lo)
        best = max(best, (val, lo))
    val, _, s_hi = eval_at(hi)
    best = max(best, (val, hi))
    for _ in range(80):
        if s_hi <= 0:
            break
        lo = hi
        hi *= 2.0
        val, _, s_hi = eval_at(hi)
        best = max(best, (val, hi))

    for _ in range(budget):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val, _, s_mid = eval_at(mid)
        best = max(best, (val, mid))
        if val >= 0 and best[0] >= 0:
            break  # PSD certified, no need to localise the maximizer further
        if s_mid > 0:
            lo = mid
        elif s_mid < 0:
            hi = mid
        else:
            break
        if hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break

    beta_star, alpha_star = best
    if beta_star >= -cert_tol:
        return EscapeOutcome("StationaryCertificate", alpha_star, beta_star)

    # bottom eigenvectors at the final bracket endpoints carry supergradients
    # of both signs; they seed the straddling construction when the eigenspace
    # at the maximizer itself is too degenerate to split cleanly
    extra = [evals[al][1][:, 0] for al in (lo, hi) if al in evals]
    direction = _extract_direction(prob, alpha_star, cert_tol, eig_tol, seed, extra=extra)
    if direction is None:
        raise Inconclusive(
            f"dual value {beta_star:.3e} < -cert_tol but no feasible "
            "negative direction found within budget"
        )
    H, quad = direction
    return EscapeOutcome(
        "EscapingDirection",
        alpha_star,
        beta_star,
        direction=H,
        quad_value=quad,
        predicted_decrease=-quad,
    )


def _pad(prob, cols):
    """Zero-pad the factor columns to n x (r-1) and normalize in Frobenius."""
    n = prob.C.shape[0]
    H = np.zeros((n, prob.r - 1))
    cols = np.atleast_2d(cols.T).T
    H[:, : cols.shape[1]] = cols
    H /= np.linalg.norm(H)
    return H


def _extract_direction(prob, alpha, cert_tol, eig_tol, seed, k=4, extra=()):
    """Rank <= 2 feasible X = HH^T with <M, X> < 0 from the bottom eigenspace."""
    k = min(k, prob.C.shape[0])
    _, out = dual_value(prob, alpha, k=k, tol=eig_tol, seed=seed)
    U = out.vectors
    vals = out.values
    neig = U.shape[1]
    if extra:
        U = np.column_stack([U] + [np.asarray(u) for u in extra])
    sA = np.array([prob.quad_A(U[:, i : i + 1])[0, 0] for i in range(U.shape[1])])
    sM = np.array([prob.quad_M(U[:, i : i + 1])[0, 0] for i in range(U.shape[1])])
    span = 1.0 + abs(vals[0])
    scale = prob.scale()

    # single vector already feasible
    for i in range(U.shape[1]):
        if abs(sA[i]) <= 1e-9 * scale and sM[i] <= -cert_tol:
            return _pad(prob, U[:, i]), float(sM[i])

    def try_rotation(i, j):
        """Degenerate bottom eigenspace: rotate to a single vector with
        u^T A u = 0 (real rotation exists iff the restricted 2x2 quadratic
        form of A is indefinite)."""
        si, sj = sA[i], sA[j]
        cross = prob.quad_A(U[:, [i, j]])[0, 1]
        if cross * cross < si * sj:
            return None
        # s(t) proportional to sj t^2 + 2 cross t + si with t = tan(theta)
        roots = np.roots([sj, 2.0 * cross, si]) if sj else [-si / (2.0 * cross)]
        for t in roots:
            t = complex(t)
            if abs(t.imag) > 1e-10:
                continue
            c = 1.0 / math.hypot(1.0, t.real)
            u = c * (U[:, i] + t.real * U[:, j])
            if abs(prob.quad_A(u[:, None])[0, 0]) <= 1e-8 * scale:
                q = float(prob.quad_M(u[:, None])[0, 0])
                if q <= -cert_tol:
                    return _pad(prob, u), q
        return None

    def try_straddle(i, j):
        """Convex combination c1 u_i u_i^T + c2 u_j u_j^T with <A, X> = 0;
        linear in X, so no cross terms appear regardless of eigen-degeneracy."""
        si, sj = sA[i], sA[j]
        if si * sj > 0:
            return None
        if si == sj:  # both zero handled by the single-vector scan
            return None
        c1 = -sj / (si - sj)
        c2 = 1.0 - c1
        if not (0.0 <= c1 <= 1.0):
            return None
        q = float(c1 * sM[i] + c2 * sM[j])
        if q <= -cert_tol:
            cols = np.column_stack(
                [math.sqrt(c1) * U[:, i], math.sqrt(c2) * U[:, j]]
            )
            return _pad(prob, cols), q
        return None

    m = U.shape[1]
    for i in range(m):
        for j in range(i + 1, m):
            got = try_straddle(i, j)
            if got is not None:
                return got
    for i in range(neig):
        for j in range(i + 1, neig):
            in_cluster = (
                abs(vals[i] - vals[0]) <= CLUSTER_RTOL * span
                and abs(vals[j] - vals[0]) <= CLUSTER_RTOL * span
            )
            if in_cluster:
                got = try_rotation(i, j)
                if got is not None:
                    return got
    return None


def escape_step(
    prob,
    H,
    quad_value,
    t0=1.0,
    c=0.25,
    t_min=1e-8,
    feas_tol=None,
):
    """Move along the second-order escape curve and retract; backtrack on t.

    The curve at step t has first column v - t^2 (diag(HH^T) o d) and
    remaining columns t*H; the accepted point must beat the binary objective
    by c * t^2 * |<M H, H>|.
    """
    v, d, a, tau, C = prob.v, prob.d, prob.a, prob.tau, prob.C
    f0 = -float(v @ (C @ v))
    hh = np.einsum("ij,ij->i", H, H)
    t = float(t0)
    while t >= t_min:
        first = v - (t * t) * (hh * d)
        Rhat = np.column_stack([first, t * H])
        try:
            R = retract_to_variety(Rhat, a, tau, feas_tol=feas_tol)
        except RetractionDiverged:
            t *= 0.5
            continue
        f = -float(np.einsum("ij,ij->", C @ R, R))
        if f < f0 - c * t * t * abs(quad_value):
            return FactorPoint(R, a, tau), t, f
        t *= 0.5
    raise StepFailed(f"escape step underflowed below {t_min} (f0={f0:.6e})")
