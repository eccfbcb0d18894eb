"""Evaluating the mechanism: utility, allocation, revenue, menus, convexification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .distributions import h_value
from .errors import AlreadyConcave, MechanismError
from .numerics import TIGHT_QUAD_TOL, Interval, Region, Slab, concave_envelope, integrate_1d, integrate_2d_region
from .solver import BoundaryCurve, Classification, MechanismSolution, assemble_mechanism

TIE_TOL = 1e-12


class RegionName(str, enum.Enum):
    ZERO = "Zero"
    D1 = "D1"
    D2 = "D2"
    BUNDLE = "Bundle"


_REGION_ORDER = (RegionName.ZERO, RegionName.D1, RegionName.D2, RegionName.BUNDLE)


@dataclass(frozen=True)
class AllocationResult:
    a1: float
    a2: float
    payment: float
    region: RegionName


@dataclass(frozen=True)
class MenuEntry:
    a1: float
    a2: float
    price: float

    def as_tuple(self):
        return (self.a1, self.a2, self.price)


@dataclass(frozen=True)
class RevenueResult:
    rev_functional: float
    rev_payment: float
    discrepancy: float


def _terms(mech, x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    zero = np.zeros(np.broadcast(x1, x2).shape)
    return np.stack([zero, x1 - mech.s1(x2), x2 - mech.s2(x1), x1 + x2 - mech.p])


def utility_xy(mech: MechanismSolution, x1, x2):
    u = _terms(mech, x1, x2).max(axis=0)
    return float(u) if u.ndim == 0 else u


def utility(mech: MechanismSolution, x):
    """u(x) = max{0, x1 - s1(x2), x2 - s2(x1), x1 + x2 - p} for x of shape (2,) or (n, 2)."""
    x = np.asarray(x, dtype=float)
    return utility_xy(mech, x[..., 0], x[..., 1])


def region_index(mech, x1, x2):
    """Index into (Zero, D1, D2, Bundle); ties go to the larger total allocation."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    terms = _terms(mech, x1, x2)
    best = terms.max(axis=0)
    total = np.stack([
        np.zeros_like(best),
        1.0 - mech.s1.derivative(x2) * np.ones_like(best),
        1.0 - mech.s2.derivative(x1) * np.ones_like(best),
        np.full_like(best, 2.0),
    ])
    score = np.where(terms >= best - TIE_TOL, total, -np.inf)
    return np.argmax(score, axis=0)


def allocate(mech: MechanismSolution, x) -> AllocationResult:
    x1, x2 = (float(v) for v in x)
    k = int(region_index(mech, x1, x2))
    name = _REGION_ORDER[k]
    if name is RegionName.ZERO:
        return AllocationResult(0.0, 0.0, 0.0, name)
    if name is RegionName.BUNDLE:
        return AllocationResult(1.0, 1.0, mech.p, name)
    if name is RegionName.D1:
        s, ds = float(mech.s1(x2)), float(mech.s1.derivative(x2))
        return AllocationResult(1.0, -ds + 0.0, s - x2 * ds, name)
    s, ds = float(mech.s2(x1)), float(mech.s2.derivative(x1))
    return AllocationResult(-ds + 0.0, 1.0, s - x1 * ds, name)


# ---------------------------------------------------------------------------
# revenue
# ---------------------------------------------------------------------------

def _breaks(curve, lo, hi):
    return tuple(b for b in curve.breaks if lo < b < hi)


def _quad(fn, lo, hi, tol, points=()):
    if hi <= lo:
        return 0.0
    return integrate_1d(fn, Interval(lo, hi), tol, points=points)


def revenue_payment(mech, d1, d2, tol=TIGHT_QUAD_TOL) -> float:
    """Expected payment, region by region."""
    s1, s2, p = mech.s1, mech.s2, mech.p
    a1, a2 = mech.x1_star, mech.x2_star

    def pay1(x2):
        return (s1(x2) - x2 * s1.derivative(x2)) * d2.pdf(x2) * d1.sf(np.clip(s1(x2), 0.0, 1.0))

    def pay2(x1):
        return (s2(x1) - x1 * s2.derivative(x1)) * d1.pdf(x1) * d2.sf(np.clip(s2(x1), 0.0, 1.0))

    def bundle(x2):
        return d2.pdf(x2) * d1.sf(np.clip(np.maximum(a1, p - x2), 0.0, 1.0))

    r1 = _quad(pay1, 0.0, a2, tol, _breaks(s1, 0.0, a2))
    r2 = _quad(pay2, 0.0, a1, tol, _breaks(s2, 0.0, a1))
    lo = max(a2, p - 1.0, 0.0)
    kinks = tuple(b for b in (p - a1,) if lo < b < 1.0)
    r12 = p * _quad(bundle, lo, 1.0, tol, kinks)
    return r1 + r2 + r12


def _u_h_integral(mech, d1, d2, tol):
    s1, s2, p = mech.s1, mech.s2, mech.p
    a1, a2 = mech.x1_star, mech.x2_star
    h = lambda x1, x2: h_value(d1, d2, x1, x2)
    total = 0.0
    if a2 > 0.0:
        reg = Region((Slab(0.0, a2, lambda o: s1(o), 1.0, axis=2, breakpoints=_breaks(s1, 0.0, a2)),))
        total += integrate_2d_region(lambda x1, x2: (x1 - s1(x2)) * h(x1, x2), reg, tol)
    if a1 > 0.0:
        reg = Region((Slab(0.0, a1, lambda o: s2(o), 1.0, axis=1, breakpoints=_breaks(s2, 0.0, a1)),))
        total += integrate_2d_region(lambda x1, x2: (x2 - s2(x1)) * h(x1, x2), reg, tol)
    lo = max(a2, p - 1.0, 0.0)
    if lo < 1.0:
        kinks = tuple(b for b in (p - a1,) if lo < b < 1.0)
        reg = Region((Slab(lo, 1.0, lambda o: np.clip(np.maximum(a1, p - o), 0.0, 1.0), 1.0,
                           axis=2, breakpoints=kinks),))
        total += integrate_2d_region(lambda x1, x2: (x1 + x2 - p) * h(x1, x2), reg, tol)
    return total


def revenue_functional(mech, d1, d2, tol=TIGHT_QUAD_TOL) -> float:
    """Revenue as a linear functional of u alone (integration by parts).

    R(u) = f1(1) int u(1, x2) f2 + f2(1) int u(x1, 1) f1 - int int u h.
    """
    pts2 = tuple(b for b in (mech.x2_star,) + mech.s1.breaks if 0.0 < b < 1.0)
    pts1 = tuple(b for b in (mech.x1_star,) + mech.s2.breaks if 0.0 < b < 1.0)
    edge2 = _quad(lambda x2: utility_xy(mech, np.ones_like(x2), x2) * d2.pdf(x2), 0.0, 1.0, tol, pts2)
    edge1 = _quad(lambda x1: utility_xy(mech, x1, np.ones_like(x1)) * d1.pdf(x1), 0.0, 1.0, tol, pts1)
    return d1.f1 * edge2 + d2.f1 * edge1 - _u_h_integral(mech, d1, d2, tol)


def revenue(mech, d1=None, d2=None, tol=TIGHT_QUAD_TOL) -> RevenueResult:
    d1 = d1 or mech.d1
    d2 = d2 or mech.d2
    rf = revenue_functional(mech, d1, d2, tol)
    rp = revenue_payment(mech, d1, d2, tol)
    return RevenueResult(rf, rp, abs(rf - rp))


# ---------------------------------------------------------------------------
# menus
# ---------------------------------------------------------------------------

def _curve_entries(curve: BoundaryCurve, upto: float, item: int):
    """Tangent-line entries of a boundary curve; exact for linear pieces."""
    if curve.is_constant:
        pts = np.array([0.0])
    elif curve.breaks or curve.closed_form in ("chord", "envelope"):
        edges = np.array(sorted({0.0, upto, *[b for b in curve.breaks if b < upto]}))
        pts = 0.5 * (edges[:-1] + edges[1:]) if edges.size > 1 else np.array([0.0])
    else:
        pts = curve.knots
    out = []
    for t in pts:
        s, ds = float(curve(t)), float(curve.derivative(t))
        price = s - t * ds
        out.append(MenuEntry(1.0, -ds + 0.0, price) if item == 1 else MenuEntry(-ds + 0.0, 1.0, price))
    return out


def extract_menu(mech: MechanismSolution) -> list:
    """A finite menu whose best entry reproduces u (exactly for linear curves)."""
    if mech.classification in (Classification.UPPER_BOUND_ONLY, Classification.UNSUPPORTED):
        raise MechanismError(f"no menu for a {mech.classification.value} mechanism")
    entries = [MenuEntry(0.0, 0.0, 0.0)]
    entries += _curve_entries(mech.s1, mech.x2_star, 1)
    entries += _curve_entries(mech.s2, mech.x1_star, 2)
    entries.append(MenuEntry(1.0, 1.0, mech.p))
    seen, menu = set(), []
    for e in entries:
        key = tuple(round(v, 12) for v in e.as_tuple())
        if key not in seen:
            seen.add(key)
            menu.append(e)
    return menu


def menu_utility(menu, x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    vals = [e.a1 * x1 + e.a2 * x2 - e.price for e in menu]
    return np.max(np.stack(vals), axis=0)


# ---------------------------------------------------------------------------
# convexification
# ---------------------------------------------------------------------------

ENVELOPE_SAMPLES = 2049


def _envelope_curve(curve: BoundaryCurve, upto: float) -> BoundaryCurve:
    if upto <= 0.0:
        return curve
    t = np.linspace(0.0, upto, ENVELOPE_SAMPLES)
    env = concave_envelope(np.column_stack([t, curve(t)]))
    vx = np.asarray(env.x)

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= upto, env(np.minimum(x, upto)), curve(x))

    def dfn(x):
        x = np.asarray(x, dtype=float)
        inner = env.derivative(np.minimum(x, upto))
        return np.where(x < upto, inner, curve.derivative(x))

    tag = "chord" if vx.size == 2 else "envelope"
    knots = np.union1d(curve.knots, vx)
    breaks = tuple(float(b) for b in vx[1:-1]) + (float(upto),)
    return BoundaryCurve(knots, np.asarray(fn(knots)), np.asarray(dfn(knots)), tag,
                         exact=fn, exact_slope=dfn, breaks=breaks)


def convexify(mech: MechanismSolution) -> MechanismSolution:
    """Replace non-concave curves by their concave envelope on [0, x*], p fixed."""
    if mech.classification is Classification.EXACT:
        raise AlreadyConcave("mechanism is already exact")
    if mech.classification is not Classification.UPPER_BOUND_ONLY:
        raise MechanismError(f"cannot convexify a {mech.classification.value} mechanism")
    s1 = _envelope_curve(mech.s1, mech.x2_star)
    s2 = _envelope_curve(mech.s2, mech.x1_star)
    diag = {**mech.diagnostics, "convexified_from": "UpperBoundOnly"}
    return replace(mech, s1=s1, s2=s2, classification=Classification.FEASIBLE_APPROX, diagnostics=diag)


def convexification_gap(d1, d2, mech=None) -> float:
    """Ratio of the upper-bound revenue to the convexified (feasible) revenue."""
    mech = mech or assemble_mechanism(d1, d2)
    if mech.classification is Classification.EXACT:
        return 1.0
    upper = revenue_payment(mech, d1, d2)
    feasible = revenue_payment(convexify(mech), d1, d2)
    return upper / feasible
