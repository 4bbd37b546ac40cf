"""Feasible-point solver for the lifted knapsack SDP.

Minimizes f(R) = <-C, RR^T> over the pinned-first-row variety with a
Riemannian gradient descent inner loop (alternating Barzilai-Borwein steps,
non-monotone line search) wrapped in an outer loop that guards a shrinking
neighborhood of the binary non-regular points: iterates entering the
neighborhood are rounded and either certified optimal via the escape SDP or
pushed off along an escaping direction.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import certify, escape, geometry, kernels
from . import instance as instance_mod
from .errors import (
    Inconclusive,
    RetractionDiverged,
    SingularNormalEquations,
    SingularProjection,
    StepFailed,
)
from .geometry import FactorPoint

logger = logging.getLogger("qksdp.solver")

TOLG_FLOOR = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    r: int = 0  # 0 = automatic rank selection
    tol_kkt: float = 1e-6
    tolg0: float = 1e-6
    delta0: float = 0.1
    max_time_s: float = 3600.0
    max_outer: int = 100
    max_inner: int = 500_000
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    nm_memory: int = 10
    nm_eta: float = 0.85  # moving-average weight of the non-monotone reference
    stag_window: int = 100  # iterations between stagnation checks
    stag_tol: float = 1e-7  # relative decrease per window below which we certify
    stag_min_time: float = 10.0  # stagnation checks arm only after this long
    bb_min: float = 1e-10
    bb_max: float = 1e10
    seed: int = 0
    rd_mode: str = "auto"  # auto | full-eig | lambda-min
    log_every: int = 0  # 0 disables progress lines

    def __post_init__(self):
        if self.r and self.r < 3:
            raise ValueError("factor rank must be >= 3 (or 0 for automatic)")
        if not 0.0 < self.delta0 < 1.0:
            raise ValueError("delta0 must lie in (0, 1)")
        if min(self.tol_kkt, self.tolg0) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    certificate: certify.KktCertificate
    point: FactorPoint
    status: str  # Converged | NonRegularOptimal | TimeLimit | Inconclusive
    iterations: int = 0
    escapes_triggered: int = 0
    wall_time_s: float = 0.0
    model: str = "SQKE"
    rank: int = 0
    tolg_final: float = 0.0
    delta_final: float = 0.0
    rounded: object = None

    @property
    def obj(self):
        return self.certificate.obj


def select_rank(inst, mode="auto"):
    """Factor rank: 3 for diagonal C, bandwidth+3 for banded, else generic."""
    generic = math.ceil(math.sqrt(2.0 * (inst.n + 1))) + 2
    if mode == "generic":
        return generic
    if mode == "capped":
        return max(3, min(20, generic))
    if mode != "auto":
        raise ValueError(f"unknown rank mode {mode!r}")
    coo = inst.C.tocoo()
    bw = int(np.abs(coo.row - coo.col).max()) if coo.nnz else 0
    return max(3, min(bw + 3, generic))


class _Clock:
    def __init__(self, budget):
        self.t0 = time.perf_counter()
        self.budget = budget

    def elapsed(self):
        return time.perf_counter() - self.t0

    def expired(self):
        return self.elapsed() >= self.budget


def _spmm(C, R):
    """C @ R through the compiled kernel when available (scipy otherwise)."""
    if kernels._BACKEND == "numba":
        return kernels.sym_csr_matmat(C.indptr, C.indices, C.data, R)
    return C @ R


def _objective(C, R):
    return -float(np.einsum("ij,ij->", _spmm(C, R), R))


def _objective_from(CR, R):
    return -float(np.einsum("ij,ij->", CR, R))


def _certificate_at(P, C, config, mu=None, lam=None):
    if mu is None:
        mu, lam = certify.recover_dual_regular(P, C)
    inequality = P.variety == "oblique"
    return certify.kkt_residues(
        P, mu, lam, C, rd_mode=config.rd_mode, inequality=inequality, seed=config.seed
    )


def _recover_dual_oblique(P, C):
    """Least-squares diagonal dual on the sphere-product variety (lambda = 0)."""
    Z = 2.0 * P.R
    Z[:, 0] -= 1.0
    G = -2.0 * (C @ P.R)
    d = np.einsum("ij,ij->i", Z, Z)
    mu = np.einsum("ij,ij->i", Z, G) / d
    return mu, 0.0


def rgd_inner(P, C, f_outer, config, clock, delta, tolg, state=None, stag_tol=None):
    """BB-stepped descent until a KKT pass, a delta-neighborhood hit, or failure.

    Returns (event, payload) where event is one of "kkt" (certificate),
    "delta" (point entered the guarded neighborhood or projection went
    singular), "tolg" (KKT check failed at certificate), "timeout",
    "stalled", "stagnant" (objective decrease fell below stag_tol over a
    window; caller should certify).  state carries (P, f, history) across
    tolg restarts.
    """
    if state is None:
        f = _objective(C, P.R)
        state = [P, f, [f], None, None, 1.0, 0, f, 1.0]
    P, f, history, R_prev, g_prev, step, it, c_ref, q_ref = state
    CR = _spmm(C, P.R)  # reused by both the gradient and the objective
    if stag_tol is None:
        stag_tol = config.stag_tol
    stag_f, stag_it = f, it
    gmin, prev_gmin = math.inf, None
    recentered = False

    while it < config.max_inner:
        if clock.expired():
            return "timeout", state
        if P.variety == "knapsack" and geometry.in_delta_neighborhood(P, delta):
            return "delta", state
        try:
            g, gnorm = geometry.riemannian_gradient_from_CR(P, CR)
        except SingularProjection:
            return "delta", state
        if gnorm < tolg:
            try:
                if P.variety == "oblique":
                    mu, lam = _recover_dual_oblique(P, C)
                else:
                    mu, lam = certify.recover_dual_regular(P, C)
            except SingularNormalEquations:
                return "delta", state
            cert = _certificate_at(P, C, config, mu, lam)
            if cert.max_residue < config.tol_kkt:
                return "kkt", (cert, state)
            return "tolg", (cert, state)

        # alternating BB step from the previous ambient displacement
        if R_prev is not None:
            s = P.R - R_prev
            y = g.H - geometry.project_tangent(P, g_prev).H
            sy = float(np.einsum("ij,ij->", s, y))
            if sy > 0:
                if it % 2 == 0:
                    step = float(np.einsum("ij,ij->", s, s)) / sy
                else:
                    step = sy / float(np.einsum("ij,ij->", y, y))
            step = min(max(step, config.bb_min), config.bb_max)
        else:
            step = min(1.0, 1.0 / max(g.norm(), 1e-12))

        # non-monotone reference: moving average of past objectives, capped
        # by the outer bound so accepted iterates never exceed f_outer
        f_ref = min(c_ref, f_outer)
        # noise allowance: near the optimum the Armijo decrease drops below
        # the floating-point resolution of f, which would stall the line
        # search while the gradient still carries information
        f_eps = 1e-12 * (1.0 + abs(f_ref))
        g2 = g.norm() ** 2
        accepted = False
        # second pass restarts from the gradient-scaled default step in case
        # the BB proposal is noise-inflated beyond what backtracking can fix
        for t0 in (step, min(1.0, 1.0 / max(g.norm(), 1e-12))):
            t = t0
            for _ in range(config.max_backtracks):
                try:
                    P_new = geometry.newton_retract(P, -t * g.H, 1.0)
                except (RetractionDiverged, SingularProjection):
                    t *= config.backtrack
                    continue
                CR_new = _spmm(C, P_new.R)
                f_new = _objective_from(CR_new, P_new.R)
                if f_new <= f_ref + f_eps - config.armijo_c * t * g2:
                    accepted = True
                    break
                t *= config.backtrack
            if accepted:
                break
        if not accepted:
            if not recentered:
                # the iterate may sit just off the variety (within the
                # retraction tolerance), biasing f low enough to block the
                # line search; tighten it back onto the variety and retry
                try:
                    P = geometry.newton_retract(
                        P, np.zeros_like(P.R), 0.0,
                        feas_tol=1e-3 * geometry.feas_tol_for(P.R),
                    )
                except (RetractionDiverged, SingularProjection):
                    state[:] = [P, f, history, R_prev, g.H, step, it + 1, c_ref, q_ref]
                    return "stalled", state
                CR = _spmm(C, P.R)
                f = _objective_from(CR, P.R)
                c_ref, q_ref = f, 1.0
                R_prev, g_prev = None, None
                state[:] = [P, f, history, None, None, step, it, c_ref, q_ref]
                recentered = True
                continue
            state[:] = [P, f, history, R_prev, g.H, step, it + 1, c_ref, q_ref]
            return "stalled", state

        recentered = False
        R_prev, g_prev = P.R, g.H
        P, f, CR = P_new, f_new, CR_new
        q_new = config.nm_eta * q_ref + 1.0
        c_ref = (config.nm_eta * q_ref * c_ref + f) / q_new
        q_ref = q_new
        history.append(f)
        if len(history) > config.nm_memory:
            history.pop(0)
        it += 1
        state[:] = [P, f, history, R_prev, g_prev, step, it, c_ref, q_ref]
        gmin = min(gmin, gnorm)
        if it - stag_it >= config.stag_window and clock.elapsed() >= config.stag_min_time:
            # stagnant only when both the objective and the gradient stopped
            # improving over a window (plateau, not slow steady progress);
            # the gradient bar is the best window minimum seen so far, so a
            # single lucky dip cannot keep deferring the check
            flat = stag_f - f <= stag_tol * (1.0 + abs(f))
            if flat and prev_gmin is not None and gmin > 0.5 * prev_gmin:
                return "stagnant", state
            stag_f, stag_it = f, it
            prev_gmin = gmin if prev_gmin is None else min(prev_gmin, gmin)
            gmin = math.inf
        if config.log_every and it % config.log_every == 0:
            logger.info(
                "iter=%d f=%.9e gnorm=%.3e delta=%.3e tolg=%.1e", it, f, gnorm, delta, tolg
            )
    return "stalled", state


def solve_sqkelr(inst, config=None, R0=None, variety="knapsack"):
    """Outer loop of the solver on the given variety (Algorithm body)."""
    config = config or SolverConfig()
    clock = _Clock(config.max_time_s)
    r = config.r or select_rank(inst)
    rng = np.random.default_rng(config.seed)

    # iterate on capacity-scaled data; residues are invariant up to the
    # knapsack feasibility term, which the variety pins to zero either way
    scaled = instance_mod.scale(inst)
    a, tau, C = scaled.a, scaled.tau, scaled.C

    if R0 is not None:
        R0 = np.asarray(R0, dtype=np.float64)
        if R0.shape != (inst.n, r):
            raise ValueError(f"R0 must be {inst.n}x{r}, got {R0.shape}")
        try:
            R = geometry.retract_to_variety(R0, a, tau, variety=variety)
        except RetractionDiverged:
            # a singular retraction means R0 sits numerically on a binary
            # non-regular point; start there and let the rounding guard act
            v = (R0[:, 0] >= 0.5).astype(np.float64)
            if variety != "knapsack" or not geometry.is_nonregular(v, a, tau):
                raise
            R = geometry.binary_point(v, a, tau, r).R
        P = FactorPoint(R, a, tau, variety=variety)
    else:
        P = geometry.random_feasible_point(inst.n, r, a, tau, rng, variety=variety)

    delta = config.delta0
    tolg = config.tolg0
    stag_scale = 1.0
    escapes = 0
    total_iters = 0
    f_outer = _objective(C, P.R)
    state = None
    status = "Inconclusive"
    cert = None
    visited = set()

    for _outer in range(config.max_outer):
        event, payload = rgd_inner(
            P, C, f_outer, config, clock, delta, tolg, state,
            stag_tol=config.stag_tol * stag_scale,
        )
        if event in ("kkt", "tolg"):
            cert, state = payload
        else:
            state = payload
        P = state[0]
        total_iters = state[6]

        if event == "kkt":
            status = "Converged"
            break
        if event == "timeout":
            status = "TimeLimit"
            break
        if event == "tolg":
            tolg /= 10.0
            if tolg < TOLG_FLOOR:
                status = "Inconclusive"
                break
            continue
        if event in ("stalled", "stagnant"):
            # line search underflow or flat objective: certify where we stand
            try:
                if P.variety == "oblique":
                    mu, lam = _recover_dual_oblique(P, C)
                else:
                    mu, lam = certify.recover_dual_regular(P, C)
                cert = _certificate_at(P, C, config, mu, lam)
            except SingularNormalEquations:
                event = "delta"
            if event == "stagnant":
                if cert.max_residue < config.tol_kkt:
                    status = "Converged"
                    break
                # premature check: require a 10x flatter window next time
                stag_scale /= 10.0
                continue
            if event == "stalled":
                if cert.max_residue < config.tol_kkt:
                    status = "Converged"
                    break
                tolg /= 10.0
                if tolg < TOLG_FLOOR:
                    status = "Inconclusive"
                    break
                continue

        # event == "delta": rounding guard
        v, _dist = geometry.round_point(P)
        if not geometry.is_nonregular(v, a, tau):
            delta /= 2.0  # Case 1: rounded point is off the variety
            f_outer = _objective(C, P.R)
            state = [P, f_outer, [f_outer], None, None, 1.0, total_iters, f_outer, 1.0]
            continue

        key = tuple(np.flatnonzero(v).tolist())
        if key in visited:
            status = "Inconclusive"  # escape revisited the same binary point
            break
        prob = escape.EscapeProblem.at_point(v, C, a, tau, r)
        try:
            out = escape.solve_escape_sdp(prob, seed=config.seed)
        except Inconclusive:
            status = "Inconclusive"
            break
        if out.kind == "StationaryCertificate":
            # Case 2: binary stationary point, exact dual certificate
            Pv = geometry.binary_point(v, a, tau, r)
            mu, lam = certify.recover_dual_nonregular(v, out.dual_alpha, C, a, tau)
            cert = _certificate_at(Pv, C, config, mu, lam)
            P = Pv
            status = "NonRegularOptimal"
            break
        # Case 3: escape, keep the better of the escaped and current points
        escapes += 1
        visited.add(key)
        try:
            P_plus, _t, f_plus = escape.escape_step(prob, out.direction, out.quad_value)
        except StepFailed:
            status = "Inconclusive"
            break
        f_cur = _objective(C, P.R)
        if f_plus < f_cur:
            P, f_outer = P_plus, f_plus
        else:
            f_outer = f_cur
        delta /= 2.0
        state = [P, f_outer, [f_outer], None, None, 1.0, total_iters, f_outer, 1.0]
    else:
        status = "Inconclusive"

    if cert is None:
        # best-effort certificate at the final point
        try:
            cert = _certificate_at(P, C, config)
        except SingularNormalEquations:
            v, _ = geometry.round_point(P)
            mu, lam = certify.recover_dual_nonregular(v, 0.0, C, a, tau)
            cert = _certificate_at(P, C, config, mu, lam)

    # report against the original (unscaled) weights; the diagonal dual and all
    # residues are scale-invariant, the knapsack multiplier picks up 1/tau^2
    cert.lam = cert.lam / float(inst.tau) ** 2
    P_out = FactorPoint(P.R, inst.a, float(inst.tau), variety=P.variety)
    return SolveReport(
        certificate=cert,
        point=P_out,
        status=status,
        iterations=total_iters,
        escapes_triggered=escapes,
        wall_time_s=clock.elapsed(),
        model="SQKE" if variety == "knapsack" else "SQKS",
        rank=r,
        tolg_final=tolg,
        delta_final=delta,
    )


def solve_pipeline(inst, config=None):
    """Route by sign structure: nonnegative C solves the equality model
    directly; otherwise try the knapsack-free sphere model first and keep its
    solution when it already satisfies the lifted knapsack inequality."""
    config = config or SolverConfig()
    if inst.C.nnz == 0 or inst.C.data.min() >= 0:
        return solve_sqkelr(inst, config)
    report = solve_sqkelr(inst, config, variety="oblique")
    aR = inst.a @ report.point.R
    slack = float(aR @ aR) - inst.tau * float(aR[0])
    if slack <= 1e-10 * (1.0 + float(aR @ aR)):
        return report
    return solve_sqkelr(inst, config)
