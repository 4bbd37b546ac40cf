"""Quadratic knapsack instances: validation, scaling, generation, file I/O.

Profit matrices are kept in sparse symmetric (full triplet) storage; integer
data stays integer until the solver converts it, so feasibility checks on
rounded solutions are exact.
"""

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import (
    CapacityTooLarge,
    DegenerateSize,
    NonSymmetricC,
    OddNForConstruction,
    ParseError,
    ValidationError,
    WeightOutOfRange,
)

FAMILIES = (
    "uncorrelated-linear",
    "weakly-correlated-linear",
    "strongly-correlated-linear",
    "random-qkp",
    "sparse-qkp",
    "nonregular-construction",
)

# profit/weight range of the linear knapsack families
_LINEAR_RANGE = 1000


@dataclass(frozen=True)
class QkpInstance:
    """Profit matrix C (sparse symmetric), positive weights a, capacity tau."""

    n: int
    C: sp.csr_matrix
    a: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)

    def with_capacity(self, tau):
        return replace(self, tau=tau)

    def profit(self, x):
        """x^T C x for a binary (or real) selection vector, exact on ints."""
        return (x @ (self.C @ x)).item()

    def weight(self, x):
        return (self.a @ x).item()


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    n: int
    p: float = 0.25
    beta: float = 0.5
    seed: int = 0
    integer_capacity: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}")
        if not 0 < self.p <= 1:
            raise ValidationError("density p must be in (0, 1]")
        if not 0 < self.beta < 1:
            raise ValidationError("beta must be in (0, 1)")
        if self.family == "nonregular-construction" and self.n % 2:
            raise OddNForConstruction("nonregular-construction needs even n")


def validate(inst):
    """Raise a diagnostic error unless all instance invariants hold."""
    if inst.n <= 1:
        raise DegenerateSize(f"n={inst.n}; need n > 1")
    if inst.C.shape != (inst.n, inst.n):
        raise ValidationError("C shape does not match n")
    asym = abs(inst.C - inst.C.T)
    if asym.nnz and asym.max() > 0:
        raise NonSymmetricC("profit matrix is not symmetric")
    a = np.asarray(inst.a)
    if a.shape != (inst.n,):
        raise ValidationError("weight vector length does not match n")
    if np.any(a <= 0):
        i = int(np.argmax(a <= 0))
        raise WeightOutOfRange(f"a[{i}]={a[i]} is not positive")
    if np.any(a >= inst.tau):
        i = int(np.argmax(a >= inst.tau))
        raise WeightOutOfRange(f"a[{i}]={a[i]} >= tau={inst.tau}")
    if a.sum() <= inst.tau:
        raise CapacityTooLarge(f"sum(a)={a.sum()} <= tau={inst.tau}")


def scale(inst):
    """Return the instance with a <- a/tau, tau <- 1 (C untouched)."""
    validate(inst)
    if inst.tau == 1 and np.issubdtype(np.asarray(inst.a).dtype, np.floating):
        return inst
    a = np.asarray(inst.a, dtype=np.float64) / float(inst.tau)
    return QkpInstance(inst.n, inst.C, a, 1.0, dict(inst.meta, scaled=True))


def _sym_from_triplets(n, rows, cols, vals):
    """Build a symmetric CSR from upper-triangle triplets."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    off = rows != cols
    r = np.concatenate([rows, cols[off]])
    c = np.concatenate([cols, rows[off]])
    v = np.concatenate([vals, vals[off]])
    C = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    C.sum_duplicates()
    return C


def _random_upper_pairs(n, p, rng):
    """Sample upper-triangle index pairs (i <= j), each kept with prob p."""
    total = n * (n + 1) // 2  # diagonal included
    if total <= 1 << 21:
        iu, ju = np.triu_indices(n)
        keep = rng.random(total) < p
        return iu[keep].astype(np.int64), ju[keep].astype(np.int64)
    # large case: draw the nonzero count, then sample distinct linear
    # indices (collision rate is negligible at these densities)
    m = rng.binomial(total, p)
    if m == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    lin = np.unique(rng.integers(0, total, size=int(m * 1.02) + 16))
    lin = rng.permutation(lin)[:m]
    # linear index k -> (i, j) with i <= j, rows of the upper triangle
    # enumerated as i*(2n-i+1)/2 + (j-i)
    i = (n + 0.5) - np.sqrt((n + 0.5) ** 2 - 2.0 * lin)
    i = np.floor(i).astype(np.int64)
    np.clip(i, 0, n - 1, out=i)
    for _ in range(2):  # absorb float error in the triangular root
        base = i * (2 * n - i + 1) // 2
        i[base > lin] -= 1
        nxt = (i + 1) * (2 * n - i) // 2
        i[nxt <= lin] += 1
    base = i * (2 * n - i + 1) // 2
    j = i + (lin - base)
    return i, j


def _random_qkp(spec, rng, p):
    n = spec.n
    i, j = _random_upper_pairs(n, p, rng)
    vals = rng.integers(1, 101, size=i.shape[0])
    C = _sym_from_triplets(n, i, j, vals)
    a = rng.integers(1, 51, size=n).astype(np.int64)
    tau = spec.beta * float(a.sum())
    if spec.integer_capacity:
        tau = float(math.ceil(tau))
    return QkpInstance(n, C, a, tau)


def _linear(spec, rng):
    n = spec.n
    R = _LINEAR_RANGE
    w = rng.integers(1, R + 1, size=n).astype(np.int64)
    if spec.family == "uncorrelated-linear":
        prof = rng.integers(1, R + 1, size=n)
    elif spec.family == "weakly-correlated-linear":
        noise = rng.integers(-R // 10, R // 10 + 1, size=n)
        prof = np.maximum(1, w + noise)
    else:  # strongly correlated
        prof = w + R // 10
    idx = np.arange(n)
    C = _sym_from_triplets(n, idx, idx, prof)
    tau = spec.beta * float(w.sum())
    if spec.integer_capacity:
        tau = float(math.ceil(tau))
    return QkpInstance(n, C, w, tau)


def _nonregular(spec, rng):
    base = _random_qkp(spec, rng, spec.p)
    n = spec.n
    C = base.C.tocoo()
    # 1-based parity: item i is "even" when (i+1) % 2 == 0, i.e. odd 0-based
    keep = ((C.row % 2) == 1) & ((C.col % 2) == 1)
    Cp = sp.coo_matrix(
        (C.data[keep], (C.row[keep], C.col[keep])), shape=(n, n)
    ).tocsr()
    a = np.asarray(base.a)
    # a'_i = a_{2*ceil(i/2)} (1-based): both items of a pair take the pair's
    # even-indexed weight
    ap = np.repeat(a[1::2], 2).astype(np.int64)
    taup = float(ap.sum()) / 2.0
    return QkpInstance(n, Cp, ap, taup)


def nonregular_indicators(n):
    """The odd/even (1-based) indicator vectors v1, v2 of the construction."""
    v1 = np.zeros(n, dtype=np.int64)
    v2 = np.zeros(n, dtype=np.int64)
    v1[0::2] = 1
    v2[1::2] = 1
    return v1, v2


def generate(spec):
    """Generate an instance of the requested family; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.family == "random-qkp":
        inst = _random_qkp(spec, rng, spec.p)
    elif spec.family == "sparse-qkp":
        inst = _random_qkp(spec, rng, math.log(spec.n) / spec.n)
    elif spec.family == "nonregular-construction":
        inst = _nonregular(spec, rng)
    else:
        inst = _linear(spec, rng)
    meta = {
        "family": spec.family,
        "seed": spec.seed,
        "p": spec.p,
        "beta": spec.beta,
        "source": "generated",
    }
    inst = replace(inst, meta=meta)
    validate(inst)
    return inst


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _tokens(stream):
    for lineno, line in enumerate(stream, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            yield lineno, body.split()


def _num(tok, lineno, what):
    try:
        f = float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: bad {what} {tok!r}") from None
    return f


def read_instance(path_or_stream, format="qkp-text"):
    """Parse an instance file; validate() is applied before returning."""
    if hasattr(path_or_stream, "read"):
        return _read_stream(path_or_stream, format, "<stream>")
    with open(path_or_stream, "r") as fh:
        return _read_stream(fh, format, str(path_or_stream))


def _read_stream(stream, format, name):
    if format not in ("knap-linear", "qkp-text"):
        raise ParseError(f"unknown format {format!r}")
    toks = _tokens(stream)
    try:
        lineno, head = next(toks)
    except StopIteration:
        raise ParseError(f"{name}: empty file") from None
    if len(head) != 2:
        raise ParseError(f"line {lineno}: expected 'n tau'")
    n = int(_num(head[0], lineno, "n"))
    tau = _num(head[1], lineno, "tau")
    if format == "knap-linear":
        prof = np.zeros(n)
        wts = np.zeros(n)
        for k in range(n):
            try:
                lineno, row = next(toks)
            except StopIteration:
                raise ParseError(f"{name}: truncated after {k} item lines") from None
            if len(row) != 2:
                raise ParseError(f"line {lineno}: expected 'profit weight'")
            prof[k] = _num(row[0], lineno, "profit")
            wts[k] = _num(row[1], lineno, "weight")
        idx = np.arange(n)
        C = _sym_from_triplets(n, idx, idx, prof)
        a = wts
    else:
        try:
            lineno, row = next(toks)
        except StopIteration:
            raise ParseError(f"{name}: missing weight line") from None
        if len(row) != n:
            raise ParseError(f"line {lineno}: expected {n} weights, got {len(row)}")
        a = np.array([_num(t, lineno, "weight") for t in row])
        rows, cols, vals = [], [], []
        for lineno, row in toks:
            if len(row) != 3:
                raise ParseError(f"line {lineno}: expected 'i j v' triplet")
            i = int(_num(row[0], lineno, "row index"))
            j = int(_num(row[1], lineno, "col index"))
            if not (1 <= i <= n and 1 <= j <= n):
                raise ParseError(f"line {lineno}: index out of range")
            if i > j:
                i, j = j, i
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(_num(row[2], lineno, "value"))
        C = _sym_from_triplets(n, rows, cols, vals)
    if np.all(a == np.round(a)):
        a = a.astype(np.int64)
    inst = QkpInstance(n, C, a, tau, {"source": "file", "path": name})
    validate(inst)
    return inst


def write_instance(inst, path_or_stream, format="qkp-text"):
    """Write in one of the two text formats; round-trips integer data."""

    def fmt(x):
        xf = float(x)
        return str(int(xf)) if xf == int(xf) else repr(xf)

    def _write(fh):
        fh.write(f"{inst.n} {fmt(inst.tau)}\n")
        if format == "knap-linear":
            diag = inst.C.diagonal()
            off = inst.C - sp.diags(diag)
            if off.nnz:
                raise ValidationError("knap-linear format requires diagonal C")
            for p, w in zip(diag, inst.a):
                fh.write(f"{fmt(p)} {fmt(w)}\n")
        else:
            fh.write(" ".join(fmt(w) for w in inst.a) + "\n")
            coo = sp.triu(inst.C).tocoo()
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {fmt(v)}\n")

    if hasattr(path_or_stream, "write"):
        _write(path_or_stream)
    else:
        with open(path_or_stream, "w") as fh:
            _write(fh)


def dumps(inst, format="qkp-text"):
    buf = io.StringIO()
    write_instance(inst, buf, format)
    return buf.getvalue()
