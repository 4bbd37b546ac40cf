"""Greedy rounding of a relaxation solution to a feasible binary vector."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RoundedSolution:
    x: np.ndarray
    value: float
    weight: float
    feasible: bool


def round_solution(P, inst):
    """Sort-and-fill rounding of the first factor column.

    Indices are sorted by decreasing relaxation value (ties broken toward the
    smaller index) and the longest prefix whose cumulative weight stays within
    capacity is selected.  O(n log n).
    """
    scores = np.asarray(P.Re1, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    csum = np.cumsum(inst.a[order])
    k = int(np.searchsorted(csum, inst.tau, side="right"))
    x = np.zeros(inst.n, dtype=np.int64)
    x[order[:k]] = 1
    value = float(inst.profit(x))
    weight = float(inst.a @ x)
    return RoundedSolution(x, value, weight, weight <= inst.tau)


def relgap(sdp_obj, rounded):
    """Relative gap between the SDP upper bound and the rounded profit."""
    return abs(sdp_obj - rounded.value) / (1.0 + abs(rounded.value))
