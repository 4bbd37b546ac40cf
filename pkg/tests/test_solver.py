"""Tests for rank selection, the outer solver, and the SQKS pre-solve pipeline."""

import numpy as np
import pytest
import scipy.sparse as sp

from qksdp import instance, oracle
from qksdp.solver import SolverConfig, select_rank, solve_pipeline, solve_sqkelr


def _inst(C, a, tau):
    C = sp.csr_matrix(np.asarray(C, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    return instance.QkpInstance(len(a), C, a, float(tau))


def _random_inst(n, rng, density=0.4, signed=False):
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                v = rng.integers(1, 101)
                if signed and rng.random() < 0.5:
                    v = -v
                C[i, j] = C[j, i] = v
    a = rng.integers(1, 51, size=n).astype(np.float64)
    tau = 0.5 * a.sum()
    return _inst(C, a, tau)


def test_select_rank_diagonal():
    inst = _inst(np.diag([1.0, 2.0, 3.0, 4.0]), [1, 1, 1, 1], 2.0)
    assert select_rank(inst) == 3


def test_select_rank_generic_n1000():
    inst = instance.generate(
        instance.GeneratorSpec("random-qkp", 1000, p=0.01, beta=0.5, seed=0)
    )
    assert select_rank(inst, mode="generic") == 47
    assert select_rank(inst) == 47 or select_rank(inst) <= 47  # banded cap


def test_select_rank_capped():
    inst = instance.generate(
        instance.GeneratorSpec("random-qkp", 3000, p=0.001, beta=0.5, seed=0)
    )
    assert select_rank(inst, mode="capped") == 20


def test_select_rank_banded():
    n = 200
    C = sp.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1]).tocsr()
    inst = instance.QkpInstance(n, C, np.ones(n), 10.0)
    assert select_rank(inst) == 4  # bandwidth 1 + 3


def test_zero_profit_converges_immediately():
    inst = _inst(np.zeros((6, 6)), [1, 2, 3, 4, 5, 6], 10.0)
    report = solve_sqkelr(inst, SolverConfig(r=4, seed=1))
    cert = report.certificate
    assert report.status in ("Converged", "NonRegularOptimal")
    assert abs(cert.obj) <= 1e-10
    assert np.all(np.abs(cert.mu) <= 1e-8)
    assert abs(cert.lam) <= 1e-8


def test_relaxation_bound_dominates_exhaustive():
    rng = np.random.default_rng(7)
    for trial in range(10):
        inst = _random_inst(8, rng)
        report = solve_sqkelr(inst, SolverConfig(r=6, seed=trial))
        opt, _ = oracle.exhaustive_qkp(inst)
        bound = -report.certificate.obj
        assert bound >= opt - 1e-6 * (1.0 + abs(opt))


def test_converged_certificate_reverified():
    from qksdp import certify
    from qksdp import instance as instance_mod

    inst = instance.generate(
        instance.GeneratorSpec("random-qkp", 40, p=0.3, beta=0.5, seed=5)
    )
    config = SolverConfig(seed=5)
    report = solve_sqkelr(inst, config)
    assert report.status == "Converged"
    cert = report.certificate
    assert cert.max_residue < config.tol_kkt
    # independent dense recheck on the unscaled data
    Rp, Rd, pdgap, obj = oracle.dense_kkt(
        inst, report.point.R, cert.mu, cert.lam, cert.y
    )
    # dense recheck reports the same minimization-form objective
    assert abs(obj - cert.obj) <= 1e-8 * (1.0 + abs(obj))
    assert max(Rp, Rd, pdgap) <= max(10.0 * cert.max_residue,
                                     1e-8 * (1.0 + float(inst.tau) ** 2))


def test_nonregular_construction_small():
    inst = instance.generate(
        instance.GeneratorSpec("nonregular-construction", 40, seed=3)
    )
    v1, v2 = instance.nonregular_indicators(40)
    opt = -inst.profit(v2.astype(np.float64))
    rng = np.random.default_rng(0)
    R0 = np.outer(v1, [1.0, 0.0, 0.0]) + rng.random((40, 3)) / (1000 * 40)
    report = solve_sqkelr(inst, SolverConfig(r=3, seed=0), R0=R0)
    assert report.status in ("Converged", "NonRegularOptimal")
    assert report.escapes_triggered >= 1
    assert abs(report.certificate.obj - opt) <= 1e-8 * (1.0 + abs(opt))
    assert report.certificate.max_residue <= 1e-8


def test_outer_objective_monotone():
    inst = instance.generate(
        instance.GeneratorSpec("nonregular-construction", 24, seed=1)
    )
    v1, _ = instance.nonregular_indicators(24)
    rng = np.random.default_rng(4)
    R0 = np.outer(v1, [1.0, 0.0, 0.0]) + rng.random((24, 3)) / (1000 * 24)
    report = solve_sqkelr(inst, SolverConfig(r=3, seed=4), R0=R0)
    # objective of the final point can never exceed the starting objective
    f0 = -inst.profit(v1.astype(np.float64)) / 1.0  # v1 has zero profit
    assert report.certificate.obj <= f0 + 1e-8


def test_pipeline_nonnegative_direct_branch():
    inst = instance.generate(
        instance.GeneratorSpec("random-qkp", 12, p=0.5, beta=0.5, seed=9)
    )
    assert inst.C.nnz == 0 or inst.C.data.min() >= 0
    report = solve_pipeline(inst, SolverConfig(seed=9))
    assert report.model == "SQKE"
    opt, _ = oracle.exhaustive_qkp(inst)
    assert -report.certificate.obj >= opt - 1e-6 * (1.0 + abs(opt))


def test_pipeline_negative_definite_sqks_branch():
    n = 8
    inst = _inst(-np.eye(n), np.ones(n), 4.0)
    report = solve_pipeline(inst, SolverConfig(seed=2))
    assert report.model == "SQKS"
    opt, x_opt = oracle.exhaustive_qkp(inst)
    assert opt == 0.0 and x_opt.sum() == 0
    assert -report.certificate.obj >= opt - 1e-6


def test_pipeline_mixed_sign_bound():
    rng = np.random.default_rng(13)
    for trial in range(6):
        inst = _random_inst(9, rng, signed=True)
        report = solve_pipeline(inst, SolverConfig(seed=trial))
        opt, _ = oracle.exhaustive_qkp(inst)
        assert -report.certificate.obj >= opt - 1e-6 * (1.0 + abs(opt))


def test_time_limit_status():
    inst = instance.generate(
        instance.GeneratorSpec("random-qkp", 300, p=0.25, beta=0.5, seed=1)
    )
    report = solve_sqkelr(inst, SolverConfig(seed=1, max_time_s=1e-3))
    assert report.status == "TimeLimit"


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_kkt=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(delta0=0.0)
