"""Geometry of the pinned-first-column low-rank feasible set.

A point is an n x r factor R with diag(R R^T) = R e1 and, on the knapsack
variety, ||a^T R||^2 - tau * a^T R e1 = 0.  Equivalently every row of
2R - e e1^T lies on the unit sphere, so the first column stays in [0, 1].

The constraint Jacobian has an arrow-shaped Gram matrix (unit diagonal block
plus one border row/column), which makes tangent projection, dual recovery
and the Gauss-Newton retraction all O(n*r).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import RetractionDiverged, SingularProjection

PIVOT_TOL = 1e-14
GN_MAX_ITER = 20


def feas_tol_for(R, rel=1e-12):
    nrm2 = float(np.sum(R * R))
    return rel * max(1.0, nrm2)


class FactorPoint:
    """Feasible factor point with cached products; treat as immutable."""

    __slots__ = ("R", "a", "tau", "variety", "Re1", "diagRRt", "aR", "norm")

    def __init__(self, R, a, tau, variety="knapsack", check=False, feas_tol=None):
        self.R = np.ascontiguousarray(R, dtype=np.float64)
        self.a = np.ascontiguousarray(a, dtype=np.float64)
        self.tau = float(tau)
        self.variety = variety
        self.Re1 = self.R[:, 0].copy()
        self.diagRRt = np.einsum("ij,ij->i", self.R, self.R)
        self.aR = self.R.T @ self.a
        self.norm = float(np.linalg.norm(self.R))
        if check:
            tol = feas_tol if feas_tol is not None else feas_tol_for(self.R)
            g, s = self.residuals()
            viol = np.max(np.abs(g)) if g.size else 0.0
            if self.variety == "knapsack":
                viol = max(viol, abs(s))
            if viol > tol:
                raise ValueError(f"infeasible point: residual {viol:.3e} > {tol:.3e}")

    @property
    def n(self):
        return self.R.shape[0]

    @property
    def r(self):
        return self.R.shape[1]

    def residuals(self):
        g, s = kernels.constraint_parts(self.R, self.a, self.tau)
        if self.variety != "knapsack":
            s = 0.0
        return g, s


@dataclass
class TangentVector:
    H: np.ndarray
    base: FactorPoint

    def norm(self):
        return float(np.linalg.norm(self.H))


def constraint_residual(P):
    """(diag(RR^T) - R e1, knapsack scalar); scalar is 0 on the oblique variety."""
    return P.residuals()


def project_tangent(P, G):
    """Orthogonal projection of G onto the tangent space at a regular point."""
    G = np.asarray(G, dtype=np.float64)
    if P.variety == "oblique":
        return _project_oblique(P, G)
    d, b, gamma, w = kernels.arrow_system(P.R, P.a, P.tau)
    rhs, rhs_l = kernels.proj_rhs(P.R, P.a, G, w)
    mu, lam, pivot = kernels.arrow_solve(d, b, gamma, rhs, rhs_l, PIVOT_TOL)
    if mu is None:
        raise SingularProjection(f"arrow pivot {pivot:.3e} below tolerance")
    PG = G - kernels.apply_correction(P.R, P.a, w, mu, lam)
    return TangentVector(PG, P)


def _project_oblique(P, G):
    Z = 2.0 * P.R
    Z[:, 0] -= 1.0
    d = np.einsum("ij,ij->i", Z, Z)
    if d.min() <= PIVOT_TOL:
        raise SingularProjection("zero constraint gradient row")
    mu = np.einsum("ij,ij->i", Z, G) / d
    return TangentVector(G - mu[:, None] * Z, P)


def riemannian_gradient(P, C):
    """Projected gradient of -<C, RR^T> plus its normalized norm."""
    CR = C @ P.R
    return riemannian_gradient_from_CR(P, CR)


def riemannian_gradient_from_CR(P, CR):
    tv = project_tangent(P, -2.0 * CR)
    gnorm = tv.norm() / max(1.0, P.norm)
    return tv, gnorm


def retract_to_variety(R0, a, tau, variety="knapsack", feas_tol=None, max_iter=GN_MAX_ITER):
    """Gauss-Newton iteration pulling an ambient matrix onto the variety."""
    R = np.array(R0, dtype=np.float64)
    if variety == "oblique":
        Z = 2.0 * R
        Z[:, 0] -= 1.0
        nrm = np.linalg.norm(Z, axis=1)
        if np.any(nrm <= 0):
            raise RetractionDiverged("zero row in oblique retraction")
        Z /= nrm[:, None]
        R = 0.5 * Z
        R[:, 0] += 0.5
        return R
    tol = feas_tol if feas_tol is not None else feas_tol_for(R)

    def resnorm(g, s):
        return float(np.sqrt(g @ g + s * s))

    g, s = kernels.constraint_parts(R, a, tau)
    res = resnorm(g, s)
    for _ in range(max_iter):
        if res <= tol:
            return R
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        y, yl, pivot = kernels.arrow_solve(d, b, gamma, g, s, PIVOT_TOL)
        if y is None:
            raise RetractionDiverged(f"singular Gauss-Newton system (pivot {pivot:.3e})")
        step = kernels.apply_correction(R, a, w, y, yl)
        # damping: halve the correction while the residual would grow
        t = 1.0
        for _ in range(30):
            Rn = R - t * step
            gn, sn = kernels.constraint_parts(Rn, a, tau)
            rn = resnorm(gn, sn)
            if rn < res:
                R, g, s, res = Rn, gn, sn, rn
                break
            t *= 0.5
        else:
            raise RetractionDiverged(f"residual stalled at {res:.3e}")
    if res <= tol:
        return R
    raise RetractionDiverged(f"residual {res:.3e} > {tol:.3e} after {max_iter} iterations")


def newton_retract(P, H, t, feas_tol=None):
    """Second-order retraction of R + tH back onto the variety."""
    if isinstance(H, TangentVector):
        H = H.H
    R0 = P.R + t * np.asarray(H)
    tol = feas_tol if feas_tol is not None else feas_tol_for(R0)
    R = retract_to_variety(R0, P.a, P.tau, variety=P.variety, feas_tol=tol)
    return FactorPoint(R, P.a, P.tau, variety=P.variety)


def round_point(P):
    """Threshold the first column at 0.5; returns (v, ||R - v e1^T||_F)."""
    v = (P.Re1 >= 0.5).astype(np.int64)
    D = P.R.copy()
    D[:, 0] -= v
    return v, float(np.linalg.norm(D))


def in_delta_neighborhood(P, delta):
    """True iff the distance to the rounded binary point is < delta (strict)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    _, dist = round_point(P)
    return dist < delta


def is_nonregular(v, a, tau, tol=None):
    """True iff v = 0 or a^T v = tau (the LICQ-failing binary points)."""
    v = np.asarray(v)
    if not v.any():
        return True
    lhs = float(np.asarray(a) @ v)
    if tol is None:
        exact = np.issubdtype(np.asarray(a).dtype, np.integer) and float(
            tau
        ).is_integer()
        tol = 0.0 if exact else 1e-9 * abs(tau)
    return abs(lhs - tau) <= tol


def binary_point(v, a, tau, r, variety="knapsack"):
    """The factor v e1^T as a FactorPoint (v must satisfy is_nonregular)."""
    n = len(v)
    R = np.zeros((n, r))
    R[:, 0] = v
    return FactorPoint(R, a, tau, variety=variety)


def random_feasible_point(n, r, a, tau, rng, variety="knapsack", max_tries=10):
    """Random Gaussian initialization retracted onto the variety.

    Entries scaled by 1/sqrt(n*r) and shifted so the first column starts
    inside (0, 1); retraction failures re-sample.
    """
    last = None
    for _ in range(max_tries):
        R0 = rng.standard_normal((n, r)) / np.sqrt(n * r)
        R0[:, 0] = rng.uniform(0.25, 0.75, size=n)
        try:
            # closed-form row normalization first, then the full GN pull-in
            R = retract_to_variety(R0, a, tau, variety="oblique")
            if variety == "knapsack":
                R = retract_to_variety(R, a, tau, variety="knapsack", max_iter=100)
            return FactorPoint(R, a, tau, variety=variety)
        except RetractionDiverged as exc:  # re-sample
            last = exc
    raise RetractionDiverged(f"initialization failed after {max_tries} tries: {last}")
