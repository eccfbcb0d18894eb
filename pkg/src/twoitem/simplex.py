"""Dense simplex for max c.x subject to A x <= b, x >= 0 with b >= 0.

The condensed tableau keeps only the nonbasic columns, so memory is m x n
instead of m x (n + m).  Pricing is steepest edge with lowest-index ties;
after a run of degenerate pivots it switches to Bland's rule, which cannot
cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterExceeded, MechanismError

PIVOT_TOL = 1e-7
RATIO_TOL = 1e-11
STALL_LIMIT = 50
PERTURBATION = 1e-10


class LPUnbounded(MechanismError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int
    bland_iterations: int


def simplex_max(c, A, b, max_iter: int = 200_000, perturb: float = PERTURBATION) -> SimplexResult:
    """Maximize c.x.  ``perturb`` > 0 spreads the right-hand side by up to
    that amount (deterministically) so degenerate vertices are split; the
    returned x then satisfies A x <= b + perturb."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b < 0.0):
        raise ValueError("origin must be feasible (b >= 0)")
    # rows 0..m-1: x_B = b - T[:, :n] x_N ; last row holds reduced costs
    T = np.zeros((m + 1, n + 1))
    T[:m, :n] = A
    T[:m, n] = b
    if perturb > 0.0:
        T[:m, n] += perturb * (1.0 + np.random.default_rng(0).random(m))
    T[m, :n] = c
    nonbasic = np.arange(n)             # variable id of each column
    basic = np.arange(n, n + m)         # slack ids
    stall, bland, it = 0, 0, 0
    while True:
        d = T[m, :n]
        cand = np.flatnonzero(d > PIVOT_TOL)
        if cand.size == 0:
            break
        if it >= max_iter:
            raise MaxIterExceeded("simplex iteration limit reached")
        use_bland = stall >= STALL_LIMIT
        if use_bland:
            j = cand[np.argmin(nonbasic[cand])]
            bland += 1
        else:
            # steepest edge in the space of the current nonbasic variables
            norms = np.sqrt(1.0 + np.einsum("ij,ij->j", T[:m, cand], T[:m, cand]))
            score = d[cand] / norms
            best = score.max()
            tied = cand[score >= best * (1.0 - 1e-12)]
            j = tied[np.argmin(nonbasic[tied])]
        col = T[:m, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise LPUnbounded("objective is unbounded")
        # two-pass ratio test: among rows whose ratio is within a small
        # relaxation of the minimum, pivot on the largest element
        rhs = T[rows, n]
        ratios = rhs / col[rows]
        rmin = ratios.min()
        relaxed = ((rhs + RATIO_TOL) / col[rows]).min()
        near = rows[ratios <= relaxed]
        if use_bland:
            r = near[np.argmin(basic[near])]
        else:
            r = near[np.argmax(col[near])]
        stall = stall + 1 if rmin <= 1e-14 else 0

        a = T[r, j]
        prow = T[r].copy()
        pcol = T[:, j].copy()
        T -= np.outer(pcol / a, prow)
        T[r] = prow / a
        T[:, j] = -pcol / a
        T[r, j] = 1.0 / a
        nonbasic[j], basic[r] = basic[r], nonbasic[j]
        np.maximum(T[:m, n], 0.0, out=T[:m, n])   # roundoff can push values below zero
        it += 1

    x = np.zeros(n + m)
    x[basic] = T[:m, n]
    x = x[:n]
    return SimplexResult(x, float(c @ x), it, bland)
