"""Tests for the sort-and-fill rounding heuristic and the relative gap."""

import numpy as np
import scipy.sparse as sp

from qksdp import instance, oracle, rounding
from qksdp.geometry import FactorPoint, retract_to_variety


def _inst(C, a, tau):
    C = sp.csr_matrix(np.asarray(C, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    return instance.QkpInstance(len(a), C, a, float(tau))


class _Scores:
    """Minimal stand-in exposing the first factor column."""

    def __init__(self, scores):
        self.Re1 = np.asarray(scores, dtype=np.float64)


def test_prefix_fill_example():
    inst = _inst(np.zeros((3, 3)), [1, 1, 1], 2.0)
    sol = rounding.round_solution(_Scores([0.9, 0.8, 0.1]), inst)
    assert sol.x.tolist() == [1, 1, 0]
    assert sol.feasible and sol.weight == 2.0


def test_tie_breaks_toward_smaller_index():
    inst = _inst(np.zeros((4, 4)), [1, 1, 1, 1], 2.0)
    sol = rounding.round_solution(_Scores([0.5, 0.5, 0.5, 0.5]), inst)
    assert sol.x.tolist() == [1, 1, 0, 0]


def test_prefix_is_maximal_not_skipping():
    # the second-ranked item does not fit, so the prefix stops there even
    # though the third-ranked item would fit on its own
    inst = _inst(np.zeros((3, 3)), [1.0, 5.0, 1.0], 2.0)
    sol = rounding.round_solution(_Scores([0.9, 0.8, 0.7]), inst)
    assert sol.x.tolist() == [1, 0, 0]


def test_n3_exhaustive_sandwich():
    from qksdp.solver import SolverConfig, solve_sqkelr

    C = [[0, 1, 0], [1, 0, 2], [0, 2, 0]]
    inst = _inst(C, [1, 1, 1], 2.0)
    opt, x_opt = oracle.exhaustive_qkp(inst)
    assert opt == 4.0 and x_opt.tolist() == [0, 1, 1]
    report = solve_sqkelr(inst, SolverConfig(r=4, seed=0))
    bound = -report.certificate.obj
    sol = rounding.round_solution(report.point, inst)
    assert sol.value <= opt + 1e-9
    assert bound >= opt - 1e-6 * (1.0 + abs(opt))


def test_feasibility_exact_on_integer_data():
    rng = np.random.default_rng(3)
    for trial in range(200):
        n = int(rng.integers(2, 30))
        a = rng.integers(1, 50, size=n).astype(np.float64)
        beta = rng.uniform(0.1, 0.9)
        inst = _inst(np.zeros((n, n)), a, float(np.ceil(beta * a.sum())))
        sol = rounding.round_solution(_Scores(rng.random(n)), inst)
        assert sol.feasible
        assert inst.a @ sol.x <= inst.tau


def test_relgap_zero_iff_bound_attained():
    sol = rounding.RoundedSolution(np.array([1, 0]), 5.0, 1.0, True)
    assert rounding.relgap(5.0, sol) == 0.0
    assert rounding.relgap(6.0, sol) == 1.0 / 6.0
    assert rounding.relgap(4.0, sol) > 0.0


def test_round_solution_on_factor_point():
    rng = np.random.default_rng(11)
    n, r = 20, 5
    spec = instance.GeneratorSpec("random-qkp", n, p=0.4, beta=0.5, seed=2)
    inst = instance.generate(spec)
    scaled = instance.scale(inst)
    R0 = rng.random((n, r)) / np.sqrt(n * r) + 0.3
    R = retract_to_variety(R0, scaled.a, scaled.tau, "knapsack")
    P = FactorPoint(R, scaled.a, scaled.tau, variety="knapsack")
    sol = rounding.round_solution(P, inst)
    assert sol.x.shape == (n,) and set(np.unique(sol.x)) <= {0, 1}
    assert sol.weight == float(inst.a @ sol.x)
    assert sol.value == float(inst.profit(sol.x.astype(np.float64)))
