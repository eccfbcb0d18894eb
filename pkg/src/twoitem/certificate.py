"""Numerical optimality certificate for a solved mechanism.

The bundle region D12 = {x1 >= x1*, x2 >= x2*, x1 + x2 >= p} must carry a
decomposition h = w1 + w2 whose row integrals of w1 and column integrals of
w2 match the boundary masses f1(1) f2 and f2(1) f1.  Existence is shown by a
max-flow on a delta-lattice over D12; the flow split in every box defines
w1, w2 there.  Outside D12 the split is forced (w1 = h on D1, w2 = h on D2,
zero elsewhere).

Flow to the row node of box (i, j) becomes w1 (it is integrated along x1),
flow to the column node becomes w2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import h_antiderivative_x1, h_antiderivative_x2, h_rect_integral, h_value
from .errors import CertificateFailed, Unsaturated
from .maxflow import Dinic
from .mechanism import region_index, utility_xy
from .numerics import TIGHT_QUAD_TOL, Interval, integrate_1d

CAPACITY_SCALE = 10 ** 15
DEFICIENCY_TOL = 1e-8
PSI_REL_TOL = 1e-6
SATURATION_TOL = 1e-9
MIN_DELTA = 1.0 / 512


# ---------------------------------------------------------------------------
# integrals over pieces of D12
# ---------------------------------------------------------------------------

def d12_box_integral(mech, a1, b1, a2, b2) -> float:
    """Integral of h over [a1, b1] x [a2, b2] intersected with D12."""
    d1, d2, p = mech.d1, mech.d2, mech.p
    a1 = max(a1, mech.x1_star)
    a2 = max(a2, mech.x2_star)
    if a1 >= b1 or a2 >= b2 or b1 + b2 <= p:
        return 0.0
    if a1 + a2 >= p:
        return float(h_rect_integral(d1, d2, a1, b1, a2, b2))
    # slices in x2: x1 from max(a1, p - x2) to b1
    lo = max(a2, p - b1)
    kink = p - a1
    val = 0.0
    if kink > lo:
        top = min(kink, b2)
        val += integrate_1d(
            lambda x2: h_antiderivative_x1(d1, d2, b1, x2) - h_antiderivative_x1(d1, d2, p - x2, x2),
            Interval(lo, top), TIGHT_QUAD_TOL)
    if b2 > kink:
        val += float(h_rect_integral(d1, d2, a1, b1, max(kink, a2), b2))
    return val


def _mass(dist, a, b):
    return float(dist.cdf(b) - dist.cdf(a)) if b > a else 0.0


@dataclass(frozen=True)
class BoxBody:
    t1: float
    t2: float


def deficiency(d1, d2, body: BoxBody, mech) -> float:
    """Deficiency of [t1, 1] x [t2, 1] intersected with D12."""
    a1 = max(body.t1, mech.x1_star, mech.p - 1.0, 0.0)
    a2 = max(body.t2, mech.x2_star, mech.p - 1.0, 0.0)
    if a1 >= 1.0 or a2 >= 1.0:
        return 0.0
    # projections: a column x1 meets the body iff x1 + 1 >= p and x1 >= a1 ...
    s1_lo = max(a1, mech.p - 1.0)
    s2_lo = max(a2, mech.p - 1.0)
    # ... and the body must reach the diagonal
    if a1 + 1.0 <= mech.p and a2 + 1.0 <= mech.p:
        return 0.0
    area = d12_box_integral(mech, a1, 1.0, a2, 1.0)
    if area == 0.0:
        return 0.0
    return area - d2.f1 * _mass(d1, s1_lo, 1.0) - d1.f1 * _mass(d2, s2_lo, 1.0)


def scan_box_deficiencies(d1, d2, mech, grid_n: int = 64):
    """Largest deficiency over the grid of upward-closed boxes in D12."""
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    t1s = np.linspace(mech.x1_star, 1.0, grid_n)
    t2s = np.linspace(mech.x2_star, 1.0, grid_n)
    best, arg = -math.inf, None
    for t1 in t1s:
        for t2 in t2s:
            v = deficiency(d1, d2, BoxBody(float(t1), float(t2)), mech)
            if v > best:
                best, arg = v, BoxBody(float(t1), float(t2))
    return best, arg


# ---------------------------------------------------------------------------
# flow network
# ---------------------------------------------------------------------------

SOURCE, SINK = 0, 1


@dataclass
class FlowGraph:
    delta: float
    n_cells: int
    internal: dict              # (i, j) -> node id, 0-based box indices
    column: dict                # i -> node id
    row: dict                   # j -> node id
    edges: list                 # (u, v, capacity)
    box_capacity: dict          # (i, j) -> integral of h over the box

    @property
    def n_nodes(self) -> int:
        return 2 + len(self.internal) + len(self.column) + len(self.row)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def source_capacity(self) -> float:
        return sum(c for u, _, c in self.edges if u == SOURCE)

    @property
    def sink_capacity(self) -> float:
        return sum(c for _, v, c in self.edges if v == SINK)


def build_flow_graph(d1, d2, mech, delta: float) -> FlowGraph:
    n = round(1.0 / delta)
    if abs(n * delta - 1.0) > 1e-12:
        raise ValueError("1/delta must be an integer")
    if delta > 1.0 / 4:
        raise ValueError("delta too coarse")
    p, a1s, a2s = mech.p, mech.x1_star, mech.x2_star
    internal, column, row, caps = {}, {}, {}, {}
    next_id = 2
    for i in range(n):
        lo1, hi1 = i * delta, (i + 1) * delta
        if hi1 <= a1s:
            continue
        for j in range(n):
            lo2, hi2 = j * delta, (j + 1) * delta
            if hi2 <= a2s or hi1 + hi2 <= p:
                continue
            c = d12_box_integral(mech, lo1, hi1, lo2, hi2)
            if c <= 0.0:
                continue
            internal[(i, j)] = next_id
            caps[(i, j)] = c
            next_id += 1
    for i, j in internal:
        if i not in column:
            column[i] = None
        if j not in row:
            row[j] = None
    for i in sorted(column):
        column[i] = next_id
        next_id += 1
    for j in sorted(row):
        row[j] = next_id
        next_id += 1

    edges = []
    for (i, j), v in internal.items():
        edges.append((SOURCE, v, caps[(i, j)]))
    for (i, j), v in internal.items():
        edges.append((v, column[i], caps[(i, j)]))
        edges.append((v, row[j], caps[(i, j)]))
    lo_col = max(a1s, p - 1.0, 0.0)
    lo_row = max(a2s, p - 1.0, 0.0)
    for i, v in column.items():
        edges.append((v, SINK, d2.f1 * _mass(d1, max(i * delta, lo_col), (i + 1) * delta)))
    for j, v in row.items():
        edges.append((v, SINK, d1.f1 * _mass(d2, max(j * delta, lo_row), (j + 1) * delta)))
    return FlowGraph(delta, n, internal, column, row, edges, caps)


def max_flow(graph: FlowGraph):
    """(value, per-edge flows) with capacities scaled to integers."""
    solver = Dinic(graph.n_nodes)
    ids = [solver.add_edge(u, v, int(round(c * CAPACITY_SCALE))) for u, v, c in graph.edges]
    value = solver.run(SOURCE, SINK)
    return value / CAPACITY_SCALE, [solver.flow_on(e) / CAPACITY_SCALE for e in ids]


# ---------------------------------------------------------------------------
# dual fields
# ---------------------------------------------------------------------------

@dataclass
class DualFields:
    mech: object
    delta: float
    phi: np.ndarray        # inflow per box
    phi1: np.ndarray       # to the row node -> w1
    phi2: np.ndarray       # to the column node -> w2
    psi: float
    r1: np.ndarray = field(init=False)
    r2: np.ndarray = field(init=False)

    def __post_init__(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            self.r1 = np.where(self.phi > 0.0, self.phi1 / np.where(self.phi > 0, self.phi, 1.0), 0.0)
        self.r2 = np.where(self.phi > 0.0, 1.0 - self.r1, 0.0)

    @property
    def n(self):
        return self.phi.shape[0]

    def w(self, x1, x2):
        """(w1, w2) at points."""
        m = self.mech
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        h = h_value(m.d1, m.d2, x1, x2)
        k = region_index(m, x1, x2)
        i = np.clip((x1 / self.delta).astype(int), 0, self.n - 1)
        j = np.clip((x2 / self.delta).astype(int), 0, self.n - 1)
        in12 = (k == 3) & (self.phi[i, j] > 0.0)
        w1 = np.where(k == 1, h, 0.0) + np.where(in12, self.r1[i, j] * h, 0.0)
        w2 = np.where(k == 2, h, 0.0) + np.where(in12, self.r2[i, j] * h, 0.0)
        # bundle points in boxes without positive area: split evenly
        w1 = np.where((k == 3) & ~in12, 0.5 * h, w1)
        w2 = np.where((k == 3) & ~in12, 0.5 * h, w2)
        return w1, w2

    def _z(self, x_own, x_other, j_own):
        """z_j(x) = int_0^{x_j} w_j, for arrays of points (exact within boxes)."""
        m = self.mech
        if j_own == 1:
            d_a, d_b, curve, star_other, star_own, ratio = m.d1, m.d2, m.s1, m.x2_star, m.x1_star, self.r1
            K = lambda u, o: h_antiderivative_x1(d_a, d_b, u, o)
        else:
            d_a, d_b, curve, star_other, star_own, ratio = m.d2, m.d1, m.s2, m.x1_star, m.x2_star, self.r2.T
            K = lambda u, o: h_antiderivative_x2(m.d1, m.d2, u, o)
        x_own = np.asarray(x_own, dtype=float).ravel()
        x_other = np.asarray(x_other, dtype=float).ravel()
        z = np.zeros_like(x_own)
        # single-item strip: x_other <= star_other, x_own >= curve(x_other)
        strip = x_other <= star_other
        if np.any(strip):
            s = curve(x_other[strip])
            top = np.maximum(x_own[strip], s)
            z[strip] = K(top, x_other[strip]) - K(s, x_other[strip])
        bundle = ~strip
        if np.any(bundle):
            xo, xa = x_other[bundle], x_own[bundle]
            jj = np.clip((xo / self.delta).astype(int), 0, self.n - 1)
            edges = np.arange(self.n + 1) * self.delta
            lo = np.maximum(edges[None, :-1], np.maximum(star_own, m.p - xo)[:, None])
            hi = np.minimum(edges[None, 1:], xa[:, None])
            hi = np.maximum(hi, lo)
            seg = K(hi, xo[:, None]) - K(lo, xo[:, None])
            z[bundle] = np.sum(ratio[:, jj].T * seg, axis=1)
        return z

    def z1(self, x1, x2):
        return self._z(x1, x2, 1).reshape(np.shape(np.broadcast_arrays(x1, x2)[0]))

    def z2(self, x1, x2):
        return self._z(x2, x1, 2).reshape(np.shape(np.broadcast_arrays(x1, x2)[0]))


def construct_duals(graph: FlowGraph, flow, mech, tol: float = SATURATION_TOL) -> DualFields:
    n = graph.n_cells
    phi = np.zeros((n, n))
    phi1 = np.zeros((n, n))
    phi2 = np.zeros((n, n))
    inv = {v: key for key, v in graph.internal.items()}
    col_ids = set(graph.column.values())
    row_ids = set(graph.row.values())
    worst = 0.0
    for (u, v, c), f in zip(graph.edges, flow):
        if u == SOURCE:
            key = inv[v]
            phi[key] = f
            worst = max(worst, c - f)
        elif u in inv:
            if v in row_ids:
                phi1[inv[u]] = f
            elif v in col_ids:
                phi2[inv[u]] = f
    if worst > tol:
        raise Unsaturated(f"source edge left {worst:.3g} unused")
    return DualFields(mech, graph.delta, phi, phi1, phi2, sum(flow[k] for k, e in enumerate(graph.edges) if e[0] == SOURCE))


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class CertificateReport:
    verified: bool
    delta: float
    epsilon: float
    psi_required: float
    psi_achieved: float
    max_box_deficiency: float
    argmax_body: tuple
    dual_boundary_residual: float
    dual_boundary_abs_residual: float
    epsilon_prime: float
    M: float
    complementarity_residuals: dict
    epsilon_achieved: float
    revenue_gap_bound: float
    n_internal: int
    n_nodes: int
    n_edges: int
    failed_condition: str = ""

    def as_dict(self):
        return {
            "verified": self.verified,
            "failed_condition": self.failed_condition,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "psi_required": self.psi_required,
            "psi_achieved": self.psi_achieved,
            "max_box_deficiency": self.max_box_deficiency,
            "argmax_body": list(self.argmax_body),
            "dual_boundary_residual": self.dual_boundary_residual,
            "dual_boundary_abs_residual": self.dual_boundary_abs_residual,
            "epsilon_prime": self.epsilon_prime,
            "M": self.M,
            "complementarity_residuals": dict(self.complementarity_residuals),
            "epsilon_achieved": self.epsilon_achieved,
            "revenue_gap_bound": self.revenue_gap_bound,
            "graph": {"internal_nodes": self.n_internal, "nodes": self.n_nodes, "edges": self.n_edges},
        }


def boundary_floor(mech) -> float:
    """M: min over the closure of D12 of min(f1(1) f2(x2), f2(1) f1(x1))."""
    lo1 = max(mech.x1_star, mech.p - 1.0, 0.0)
    lo2 = max(mech.x2_star, mech.p - 1.0, 0.0)
    g1 = np.linspace(lo1, 1.0, 2049)
    g2 = np.linspace(lo2, 1.0, 2049)
    return float(min(mech.d1.f1 * np.min(mech.d2.pdf(g2)), mech.d2.f1 * np.min(mech.d1.pdf(g1))))


def _boundary_residuals(duals, n_samples):
    m = duals.mech
    t = (np.arange(n_samples) + 0.5) / n_samples
    ones = np.ones_like(t)
    rows = duals.z1(ones, t) - m.d1.f1 * m.d2.pdf(t)
    cols = duals.z2(t, ones) - m.d2.f1 * m.d1.pdf(t)
    both = np.concatenate([rows, cols])
    return float(np.max(both)), float(np.max(np.abs(both))), t, rows, cols


def complementarity_residuals(duals, grid: int = 128) -> dict:
    """Maxima of the three relaxed complementarity conditions, each divided by its right side."""
    m = duals.mech
    c = (np.arange(grid) + 0.5) / grid
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    x1, x2 = X1.ravel(), X2.ravel()
    f12 = m.d1.pdf(x1) * m.d2.pdf(x2)
    u = utility_xy(m, x1, x2)
    h = h_value(m.d1, m.d2, x1, x2)
    w1, w2 = duals.w(x1, x2)
    r_interior = np.max(np.abs(u * (h - w1 - w2)) / f12)

    ones = np.ones_like(c)
    b1 = m.d1.f1 * m.d2.pdf(c)
    b2 = m.d2.f1 * m.d1.pdf(c)
    r_edge = max(
        float(np.max(utility_xy(m, ones, c) * (duals.z1(ones, c) - b1) / b1)),
        float(np.max(utility_xy(m, c, ones) * (duals.z2(c, ones) - b2) / b2)),
        0.0,
    )

    k = region_index(m, x1, x2)
    a1 = np.select([k == 0, k == 1, k == 2, k == 3], [0.0, 1.0, -m.s2.derivative(x1), 1.0])
    a2 = np.select([k == 0, k == 1, k == 2, k == 3], [0.0, -m.s1.derivative(x2), 1.0, 1.0])
    z1 = duals.z1(x1, x2)
    z2 = duals.z2(x1, x2)
    r_slack = max(float(np.max(z1 * (1.0 - a1) / f12)), float(np.max(z2 * (1.0 - a2) / f12)), 0.0)
    return {"interior": float(r_interior), "boundary": r_edge, "slackness": r_slack}


def _certify_at(d1, d2, mech, delta, epsilon, M, deficiency_result):
    max_def, arg = deficiency_result
    graph = build_flow_graph(d1, d2, mech, delta)
    psi_required = d2.f1 * _mass(d1, max(mech.x1_star, mech.p - 1.0, 0.0), 1.0) \
        + d1.f1 * _mass(d2, max(mech.x2_star, mech.p - 1.0, 0.0), 1.0)
    value, flow = max_flow(graph)
    eps_prime = epsilon * M / 2.0
    common = dict(
        delta=delta, epsilon=epsilon, psi_required=psi_required, psi_achieved=value,
        max_box_deficiency=max_def, argmax_body=(arg.t1, arg.t2) if arg else (math.nan, math.nan),
        epsilon_prime=eps_prime, M=M, n_internal=len(graph.internal),
        n_nodes=graph.n_nodes, n_edges=graph.n_edges,
    )
    try:
        duals = construct_duals(graph, flow, mech)
    except Unsaturated as exc:
        return CertificateReport(False, dual_boundary_residual=math.inf, dual_boundary_abs_residual=math.inf,
                                 complementarity_residuals={}, epsilon_achieved=math.inf,
                                 revenue_gap_bound=math.inf, failed_condition=f"saturation: {exc}", **common)
    n_samples = max(1024, int(round(8 / delta)))
    r_one, r_abs, *_ = _boundary_residuals(duals, n_samples)
    comp = complementarity_residuals(duals)
    eps_achieved = max(max(comp.values()), 2.0 * max(r_one, 0.0) / M)
    failed = ""
    if value < psi_required * (1.0 - PSI_REL_TOL):
        failed = "saturation"
    elif r_one > eps_prime:
        failed = "dual boundary residual"
    elif eps_achieved > epsilon:
        failed = "complementarity"
    return CertificateReport(not failed, dual_boundary_residual=r_one, dual_boundary_abs_residual=r_abs,
                             complementarity_residuals=comp, epsilon_achieved=eps_achieved,
                             revenue_gap_bound=7.0 * eps_achieved, failed_condition=failed, **common)


def verify_certificate(d1, d2, mech, delta: float = 1.0 / 64, epsilon: float = 0.05,
                       grid_n: int = 64, refine: bool = True, raise_on_failure: bool = True) -> CertificateReport:
    """Run the deficiency scan, max-flow and residual checks.

    When ``refine`` is set, delta is halved (down to 1/512) while only the
    dual boundary residual fails; deficiency and saturation failures are final.
    """
    max_def, arg = scan_box_deficiencies(d1, d2, mech, grid_n)
    M = boundary_floor(mech)
    if max_def > DEFICIENCY_TOL:
        report = CertificateReport(
            False, delta, epsilon, math.nan, math.nan, max_def, (arg.t1, arg.t2), math.nan, math.nan,
            epsilon * M / 2.0, M, {}, math.inf, math.inf, 0, 0, 0, failed_condition="deficiency")
        if raise_on_failure:
            raise CertificateFailed("deficiency", report)
        return report
    while True:
        report = _certify_at(d1, d2, mech, delta, epsilon, M, (max_def, arg))
        if report.verified or not refine or report.failed_condition != "dual boundary residual" \
                or delta / 2 < MIN_DELTA:
            break
        delta /= 2
    if not report.verified and raise_on_failure:
        raise CertificateFailed(report.failed_condition, report)
    return report
