"""Instance generation, validation, scaling, and file round-trips."""

import io

import numpy as np
import pytest
import scipy.sparse as sp

from qksdp import instance
from qksdp.errors import (
    CapacityTooLarge,
    DegenerateSize,
    NonSymmetricC,
    OddNForConstruction,
    ParseError,
    ValidationError,
    WeightOutOfRange,
)


def _gen(family, n, **kw):
    return instance.generate(instance.GeneratorSpec(family, n, **kw))


def test_random_qkp_shapes_and_ranges():
    rng_checks = 0
    for seed in range(20):
        inst = _gen("random-qkp", 30, p=0.4, seed=seed)
        C = inst.C.toarray()
        assert np.allclose(C, C.T)
        vals = C[C != 0]
        assert vals.size and vals.min() >= 1 and vals.max() <= 100
        assert inst.a.min() >= 1 and inst.a.max() <= 50
        assert np.isclose(inst.tau, 0.5 * inst.a.sum())
        rng_checks += 1
    assert rng_checks == 20


def test_random_qkp_density_statistics():
    # expected off-diagonal density p; check the empirical rate over pairs
    n, p = 120, 0.25
    hits = total = 0
    for seed in range(10):
        inst = _gen("random-qkp", n, p=p, seed=seed)
        C = inst.C.toarray()
        iu = np.triu_indices(n)
        hits += (C[iu] != 0).sum()
        total += iu[0].size
    rate = hits / total
    assert abs(rate - p) < 0.02


def test_generate_deterministic_per_seed():
    a = _gen("random-qkp", 25, seed=9)
    b = _gen("random-qkp", 25, seed=9)
    c = _gen("random-qkp", 25, seed=10)
    assert (a.C != b.C).nnz == 0 and np.array_equal(a.a, b.a) and a.tau == b.tau
    assert (a.C != c.C).nnz != 0 or not np.array_equal(a.a, c.a)


def test_sparse_qkp_density():
    n = 400
    inst = _gen("sparse-qkp", n, seed=0)
    target = np.log(n) / n
    rate = inst.C.nnz / (n * n)
    assert 0.2 * target < rate < 3.0 * target


def test_linear_families_diagonal():
    for fam in ("uncorrelated-linear", "weakly-correlated-linear",
                "strongly-correlated-linear"):
        inst = _gen(fam, 50, seed=1)
        C = inst.C.toarray()
        assert np.allclose(C, np.diag(np.diag(C)))
        assert np.diag(C).min() >= 1
        if fam == "strongly-correlated-linear":
            assert np.allclose(np.diag(C), inst.a + 100)


def test_integer_capacity_flag():
    inst = _gen("random-qkp", 11, beta=0.3, seed=2, integer_capacity=True)
    assert inst.tau == int(inst.tau)


def test_nonregular_construction_invariants():
    for n in (10, 40, 100):
        inst = _gen("nonregular-construction", n, seed=4)
        v1, v2 = instance.nonregular_indicators(n)
        a, tau = inst.a, inst.tau
        assert a @ v1 == tau and a @ v2 == tau
        # v1 (even 0-based positions) collects no profit; v2 does
        assert inst.profit(v1.astype(float)) == 0
        assert inst.profit(v2.astype(float)) > 0
        C = inst.C.toarray()
        assert np.allclose(C, C.T)


def test_nonregular_construction_rejects_odd_n():
    with pytest.raises(OddNForConstruction):
        instance.GeneratorSpec("nonregular-construction", 11)


def test_generator_spec_validation():
    with pytest.raises(ValidationError):
        instance.GeneratorSpec("no-such-family", 10)
    with pytest.raises(ValidationError):
        instance.GeneratorSpec("random-qkp", 10, p=0.0)
    with pytest.raises(ValidationError):
        instance.GeneratorSpec("random-qkp", 10, beta=1.0)


def test_validate_diagnostics():
    n = 5
    C = sp.csr_matrix(np.arange(n * n, dtype=float).reshape(n, n))
    a = np.ones(n)
    with pytest.raises(NonSymmetricC):
        instance.validate(instance.QkpInstance(n, C, a, 2.0))
    Cs = sp.csr_matrix(np.eye(n))
    with pytest.raises(WeightOutOfRange):
        instance.validate(instance.QkpInstance(n, Cs, np.array([1.0, -1, 1, 1, 1]), 2.0))
    with pytest.raises(CapacityTooLarge):
        instance.validate(instance.QkpInstance(n, Cs, a, 100.0))
    with pytest.raises(DegenerateSize):
        instance.validate(instance.QkpInstance(0, sp.csr_matrix((0, 0)), np.ones(0), 1.0))


def test_scale_normalizes_capacity():
    inst = _gen("random-qkp", 12, seed=3)
    scaled = instance.scale(inst)
    assert scaled.tau == 1.0
    assert np.allclose(scaled.a, inst.a / inst.tau)
    assert scaled.C is inst.C


def test_qkp_text_round_trip():
    inst = _gen("random-qkp", 17, seed=6)
    buf = io.StringIO()
    instance.write_instance(inst, buf, format="qkp-text")
    buf.seek(0)
    back = instance.read_instance(buf, format="qkp-text")
    assert back.n == inst.n and back.tau == inst.tau
    assert np.array_equal(back.a, inst.a)
    assert (back.C != inst.C).nnz == 0


def test_knap_linear_round_trip():
    inst = _gen("uncorrelated-linear", 20, seed=7)
    buf = io.StringIO()
    instance.write_instance(inst, buf, format="knap-linear")
    buf.seek(0)
    back = instance.read_instance(buf, format="knap-linear")
    assert back.n == inst.n and back.tau == inst.tau
    assert np.array_equal(back.a, inst.a)
    assert (back.C != inst.C).nnz == 0


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as ei:
        instance.read_instance(io.StringIO("3 5\n1 2 x\n"), format="qkp-text")
    assert "line" in str(ei.value)
    with pytest.raises(ParseError):
        instance.read_instance(io.StringIO(""), format="qkp-text")


def test_read_missing_file_raises():
    with pytest.raises((ParseError, OSError)):
        instance.read_instance("/no/such/file.qkp")
