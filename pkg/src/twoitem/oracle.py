"""Brute-force optimum on a discretized type space, used to validate the closed form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .mechanism import revenue_payment
from .simplex import simplex_max
from .solver import assemble_mechanism


@dataclass(frozen=True)
class DiscreteInstance:
    n: int
    types: np.ndarray      # (n*n, 2), cell centres, item-1 index major
    weights: np.ndarray    # (n*n,)


@dataclass(frozen=True)
class LPSolution:
    a1: np.ndarray
    a2: np.ndarray
    payment: np.ndarray
    objective: float
    iterations: int = 0

    def triples(self):
        return np.column_stack([self.a1, self.a2, self.payment])


def build_grid_instance(d1, d2, n: int) -> DiscreteInstance:
    if not 2 <= n <= 16:
        raise ValueError("n must be in [2, 16]")
    edges = np.linspace(0.0, 1.0, n + 1)
    m1 = np.diff(d1.cdf(edges))
    m2 = np.diff(d2.cdf(edges))
    centres = (edges[:-1] + edges[1:]) / 2
    X1, X2 = np.meshgrid(centres, centres, indexing="ij")
    w = np.outer(m1, m2).ravel()
    return DiscreteInstance(n, np.column_stack([X1.ravel(), X2.ravel()]), w / w.sum())


def lp_matrices(types, weights):
    """max w.p  s.t. IC for all ordered pairs, IR, a <= 1.  Variables (a1, a2, p) per type."""
    k = len(types)
    nv = 3 * k
    x1, x2 = types[:, 0], types[:, 1]
    pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
    A = np.zeros((len(pairs) + 3 * k, nv))
    for row, (i, j) in enumerate(pairs):
        # type i prefers its own entry to j's:  u_j(x_i) - u_i(x_i) <= 0
        A[row, 3 * i: 3 * i + 3] -= (x1[i], x2[i], -1.0)
        A[row, 3 * j: 3 * j + 3] += (x1[i], x2[i], -1.0)
    base = len(pairs)
    for i in range(k):
        A[base + i, 3 * i: 3 * i + 3] = (-x1[i], -x2[i], 1.0)   # IR
        A[base + k + 2 * i, 3 * i] = 1.0                          # a1 <= 1
        A[base + k + 2 * i + 1, 3 * i + 1] = 1.0                  # a2 <= 1
    b = np.zeros(A.shape[0])
    b[base + k:] = 1.0
    c = np.zeros(nv)
    c[2::3] = weights
    return c, A, b


def solve_discrete_optimal(instance: DiscreteInstance) -> LPSolution:
    c, A, b = lp_matrices(instance.types, instance.weights)
    res = simplex_max(c, A, b)
    x = res.x
    return LPSolution(x[0::3], x[1::3], x[2::3], res.objective, res.iterations)


def ic_violation(instance: DiscreteInstance, sol: LPSolution) -> float:
    """Largest gain from misreporting, and largest IR shortfall."""
    t = instance.types
    own = sol.a1 * t[:, 0] + sol.a2 * t[:, 1] - sol.payment
    cross = np.outer(t[:, 0], sol.a1) + np.outer(t[:, 1], sol.a2) - sol.payment[None, :]
    return float(max(np.max(cross - own[:, None]), np.max(-own)))


def cluster_triples(sol: LPSolution, tol: float = 1e-6) -> list:
    """Distinct (a1, a2, p) menu items, merging items closer than tol."""
    reps = []
    for row in sol.triples():
        if not any(np.max(np.abs(row - r)) <= tol for r in reps):
            reps.append(row)
    return reps


def compare_oracle(d1, d2, n_list=(4, 6, 8)) -> list:
    mech = assemble_mechanism(d1, d2)
    closed = revenue_payment(mech, d1, d2)
    rows = []
    for n in n_list:
        sol = solve_discrete_optimal(build_grid_instance(d1, d2, n))
        rows.append({"n": n, "lp_revenue": sol.objective, "closed_form": closed,
                     "gap": abs(sol.objective - closed)})
    return rows


def rows_to_csv(rows, columns, fmt=lambda v: v) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()
