"""Exclusion boundaries, bundle price and the assembled mechanism."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .distributions import (
    Custom,
    Monomial,
    PowerLaw,
    TruncExponential,
    Uniform,
    check_assumption1,
    check_theorem2_conditions,
    h_antiderivative_x1,
    h_antiderivative_x2,
    h_total,
    h_value,
)
from .errors import BracketFailure, MechanismError, NoBracket, NoSolution
from .numerics import (
    TIGHT_QUAD_TOL,
    TIGHT_ROOT_TOL,
    Interval,
    find_root,
    integrate_1d,
)

N_KNOTS = 257
SHAPE_TOL = 1e-9


def chebyshev_knots(n: int = N_KNOTS) -> np.ndarray:
    k = np.arange(n)
    t = 0.5 * (1.0 - np.cos(np.pi * k / (n - 1)))
    t[0], t[-1] = 0.0, 1.0
    return t


class Classification(str, enum.Enum):
    EXACT = "Exact"
    UPPER_BOUND_ONLY = "UpperBoundOnly"
    UNSUPPORTED = "Unsupported"
    FEASIBLE_APPROX = "FeasibleApprox"


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """A decreasing curve s on [0, 1].

    ``knots``/``values``/``slopes`` always hold the tabulated curve.  When
    ``exact`` is set it is used for evaluation and the table is only a record.
    """
    knots: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    closed_form: Optional[str] = None
    exact: Optional[Callable] = field(default=None, repr=False)
    exact_slope: Optional[Callable] = field(default=None, repr=False)
    interp: Optional[Callable] = field(default=None, repr=False)
    breaks: tuple = ()

    def __call__(self, t):
        tc = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.exact is not None:
            out = self.exact(tc)
        else:
            out = self.interp(tc)
        out = np.asarray(out, dtype=float)
        return float(out) if np.ndim(t) == 0 else out

    def derivative(self, t):
        tc = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.exact_slope is not None:
            out = self.exact_slope(tc)
        else:
            out = self.interp.derivative()(tc)
        out = np.asarray(out, dtype=float) * np.ones_like(tc)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def is_constant(self) -> bool:
        return bool(np.max(np.abs(self.slopes)) <= 1e-12)

    @classmethod
    def constant(cls, value: float, tag: str = "constant") -> "BoundaryCurve":
        t = chebyshev_knots()
        return cls(t, np.full_like(t, value), np.zeros_like(t), tag,
                   exact=lambda x: np.full_like(np.asarray(x, dtype=float), value),
                   exact_slope=lambda x: np.zeros_like(np.asarray(x, dtype=float)))

    @classmethod
    def from_table(cls, t, s, ds=None, tag=None) -> "BoundaryCurve":
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if ds is None:
            interp = PchipInterpolator(t, s)
            ds = interp.derivative()(t)
        else:
            ds = np.asarray(ds, dtype=float)
            interp = CubicHermiteSpline(t, s, ds)
        return cls(t, s, ds, tag, interp=interp)

    @classmethod
    def from_function(cls, fn, dfn, tag=None) -> "BoundaryCurve":
        t = chebyshev_knots()
        return cls(t, np.asarray(fn(t), dtype=float), np.asarray(dfn(t), dtype=float), tag,
                   exact=fn, exact_slope=dfn)

    def restricted_slopes(self, upto: float) -> np.ndarray:
        return self.slopes[self.knots <= upto + 1e-15]

    def secant_slopes(self, upto: float = 1.0) -> np.ndarray:
        mask = self.knots <= upto + 1e-15
        t, s = self.knots[mask], self.values[mask]
        return np.diff(s) / np.diff(t)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def _has_closed_inverse(dist) -> bool:
    if isinstance(dist, (Uniform, Monomial, TruncExponential)):
        return True
    return isinstance(dist, PowerLaw) and dist.alpha == 2.0


def _curve_tag(d_own, d_other) -> str:
    if d_other.h_constant:
        return "monomial-constant" if isinstance(d_own, (Uniform, Monomial)) else "constant"
    if isinstance(d_own, Uniform):
        return "uniform-rational"
    if isinstance(d_own, Monomial):
        return "monomial-power"
    if isinstance(d_own, TruncExponential):
        return "exponential-lambertw"
    return "powerlaw-quadratic"


def _targets(d_other, t):
    T = 2.0 + np.asarray(d_other.H(t), dtype=float)
    if np.any(T <= 0.0):
        raise NoSolution("2 + H(t) must be positive for the boundary equation to have a root")
    return T


def solve_s_iid(dist, t):
    """Root y in (0, 1) of G(y) = 2 + H(t)."""
    return dist.G_inverse(_targets(dist, t) if np.ndim(t) else float(_targets(dist, t)))


def boundary_curve(d_own, d_other) -> BoundaryCurve:
    """The curve s with G_own(s(t)) = 2 + H_other(t)."""
    t = chebyshev_knots()
    if d_other.h_constant:
        T = float(_targets(d_other, 0.0))
        return BoundaryCurve.constant(float(d_own.G_inverse(T)), _curve_tag(d_own, d_other))

    dH = None if isinstance(d_other, Custom) else d_other.dH
    if _has_closed_inverse(d_own) and dH is not None:
        def fn(x):
            return d_own.G_inverse(_targets(d_other, x))

        def dfn(x):
            return np.asarray(dH(x)) / np.asarray(d_own.dG(fn(x)))

        curve = BoundaryCurve.from_function(fn, dfn, _curve_tag(d_own, d_other))
    else:
        s = np.asarray(d_own.G_inverse(_targets(d_other, t)), dtype=float)
        ds = None if dH is None else np.asarray(dH(t)) / np.asarray(d_own.dG(s))
        curve = BoundaryCurve.from_table(t, s, ds)
    if np.any(curve.values < 0.0) or np.any(curve.values > 1.0):
        raise NoSolution("boundary curve leaves [0, 1]")
    return curve


def solve_s_noniid(d1, d2):
    """(s1, s2): s1 is a function of x2, s2 a function of x1."""
    return boundary_curve(d1, d2), boundary_curve(d2, d1)


def boundary_residual(d_own, d_other, curve, t):
    t = np.asarray(t, dtype=float)
    return np.asarray(d_own.G(curve(t))) - 2.0 - np.asarray(d_other.H(t))


def residual_eq4(d1, d2, s1, t) -> float:
    """``int_{s1(t)}^1 h(x1, t) dx1 - f1(1) f2(t)`` by quadrature."""
    lo = float(s1(t))
    val = integrate_1d(lambda x: h_value(d1, d2, x, np.full_like(x, t)), Interval(lo, 1.0), TIGHT_QUAD_TOL)
    return val - d1.f1 * float(d2.pdf(t))


# ---------------------------------------------------------------------------
# bundle price
# ---------------------------------------------------------------------------

def curve_intersection(s1, s2):
    """(x1_hat, x2_hat) where x1 = s1(x2) and x2 = s2(x1)."""
    x2 = find_root(lambda y: float(s2(s1(y))) - y, Interval(0.0, 1.0), TIGHT_ROOT_TOL)
    return float(s1(x2)), x2


def diagonal_intersection(curve, p) -> float:
    """Root of curve(t) + t - p on [0, 1]; 0 without a sign change."""
    g0 = float(curve(0.0)) - p
    g1 = float(curve(1.0)) + 1.0 - p
    if g0 >= 0.0 or g1 <= 0.0:
        return 0.0
    return find_root(lambda t: float(curve(t)) + t - p, Interval(0.0, 1.0), TIGHT_ROOT_TOL)


def _quad(fn, lo, hi):
    if hi <= lo:
        return 0.0
    return integrate_1d(fn, Interval(lo, hi), TIGHT_QUAD_TOL)


def excluded_mass(d1, d2, s1, s2, p, x1_star=None, x2_star=None) -> float:
    """Integral of h over the zero-utility region {x1<=s1(x2), x2<=s2(x1), x1+x2<=p}."""
    if x1_star is None:
        x1_star = diagonal_intersection(s2, p)
    if x2_star is None:
        x2_star = diagonal_intersection(s1, p)
    K1 = lambda u, x2: h_antiderivative_x1(d1, d2, u, x2)
    K2 = lambda u, x1: h_antiderivative_x2(d1, d2, u, x1)
    low = _quad(lambda x2: K1(s1(x2), x2), 0.0, x2_star)
    mid = _quad(lambda x2: K1(np.minimum(1.0, p - x2), x2), x2_star, min(1.0, p - x1_star))
    col = _quad(lambda x1: K2(s2(x1), x1) - K2(min(1.0, p - x1_star), x1), 0.0, x1_star)
    return low + mid + col


def price_residual(d1, d2, s1, s2, p) -> float:
    """``int_D h - f1(1) - f2(1)``; positive when p is too low."""
    return (h_total(d1, d2) - d1.f1 - d2.f1) - excluded_mass(d1, d2, s1, s2, p)


def check_full_bundle(d1, d2, s1, s2) -> bool:
    """True when selling only the bundle is optimal."""
    pmin = min(float(s1(0.0)), float(s2(0.0)))
    return price_residual(d1, d2, s1, s2, pmin) <= 0.0


def _iid_price(dist, s, x_hat):
    """Solve the symmetric condition on x* and return (p, x*)."""
    f1 = dist.f1

    def bundle_mass(x):
        p = x + float(s(x))
        if p <= 2 * x:
            return float(h_total_rect(dist, x))
        top = min(1.0, p - x)
        tri = _quad(lambda x2: h_antiderivative_x1(dist, dist, p - x2, x2)
                    - h_antiderivative_x1(dist, dist, x, x2), x, top)
        return float(h_total_rect(dist, x)) - tri

    def phi(x):
        return bundle_mass(x) - 2.0 * f1 * float(dist.sf(x))

    x = find_root(phi, Interval(0.0, x_hat), TIGHT_ROOT_TOL)
    return x + float(s(x)), x


def h_total_rect(dist, x):
    from .distributions import h_rect_integral
    return h_rect_integral(dist, dist, x, 1.0, x, 1.0)


def solve_bundle_price(d1, d2, s1, s2, iid: Optional[bool] = None):
    """Return (p, x1_star, x2_star) solving the bundle-price equation."""
    x1_hat, x2_hat = curve_intersection(s1, s2)
    if iid is None:
        iid = d1 == d2
    if iid:
        try:
            p, x = _iid_price(d1, s1, x2_hat)
            return p, x, x
        except NoBracket:
            pass  # full bundling: handled by the general path
    hi = x1_hat + x2_hat
    try:
        p = find_root(lambda q: price_residual(d1, d2, s1, s2, q), Interval(0.0, hi), TIGHT_ROOT_TOL)
    except NoBracket as exc:
        raise BracketFailure(f"bundle price not bracketed on [0, {hi:.6g}]") from exc
    return p, diagonal_intersection(s2, p), diagonal_intersection(s1, p)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MechanismSolution:
    d1: object
    d2: object
    s1: Optional[BoundaryCurve]
    s2: Optional[BoundaryCurve]
    p: float
    x1_star: float
    x2_star: float
    classification: Classification
    full_bundle_only: bool
    x1_hat: float = math.nan
    x2_hat: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_deterministic(self) -> bool:
        return self.s1.is_constant and self.s2.is_constant

    @property
    def is_randomized(self) -> bool:
        """Some type buys a lottery: -s' in (0, 1) on a set of positive length."""
        for curve, top in ((self.s1, self.x2_star), (self.s2, self.x1_star)):
            sl = curve.restricted_slopes(top)
            if sl.size > 1 and np.any((sl < -1e-9) & (sl > -1.0)):
                return True
        return False


def reprice(mech: MechanismSolution, p: float) -> MechanismSolution:
    """Same curves, different bundle price (used for negative controls)."""
    return replace(
        mech,
        p=p,
        x1_star=diagonal_intersection(mech.s2, p),
        x2_star=diagonal_intersection(mech.s1, p),
        full_bundle_only=p <= min(float(mech.s1(0.0)), float(mech.s2(0.0))),
        diagnostics={**mech.diagnostics, "repriced": True},
    )


def curve_shape(curve: BoundaryCurve, upto: float) -> dict:
    sl = curve.restricted_slopes(upto)
    sec = curve.secant_slopes(upto)
    return {
        "decreasing": bool(np.all(sl <= SHAPE_TOL)),
        "slope_gt_minus_one": bool(np.all(sl > -1.0 + SHAPE_TOL)),
        "concave": bool(sec.size < 2 or np.all(np.diff(sec) <= SHAPE_TOL)),
    }


def _unsupported(d1, d2, reason, **extra):
    return MechanismSolution(d1, d2, extra.pop("s1", None), extra.pop("s2", None), math.nan, math.nan,
                             math.nan, Classification.UNSUPPORTED, False,
                             diagnostics={"reason": reason, **extra})


def assemble_mechanism(d1, d2) -> MechanismSolution:
    """Solve and classify the two-item instance."""
    diag = {
        "theorem2_d1": check_theorem2_conditions(d1).as_dict(),
        "theorem2_d2": check_theorem2_conditions(d2).as_dict(),
    }
    try:
        s1, s2 = solve_s_noniid(d1, d2)
        x1_hat, x2_hat = curve_intersection(s1, s2)
        p, x1s, x2s = solve_bundle_price(d1, d2, s1, s2)
    except (NoSolution, BracketFailure, NoBracket) as exc:
        return _unsupported(d1, d2, f"{type(exc).__name__}: {exc}", **diag)

    full = p <= min(float(s1(0.0)), float(s2(0.0))) + 1e-12
    mech = MechanismSolution(d1, d2, s1, s2, p, x1s, x2s, Classification.EXACT, full, x1_hat, x2_hat, diag)

    a1 = check_assumption1(d1, d2, region="d12", variant="nonnegative", mechanism=mech)
    if not a1.passed:
        alt = check_assumption1(d1, d2, region="d12", variant="monotone", mechanism=mech)
        a1 = alt if alt.passed else a1
    shape1 = curve_shape(s1, x2_hat)
    shape2 = curve_shape(s2, x1_hat)
    diag.update(assumption1=a1.as_dict(), shape_s1=shape1, shape_s2=shape2)

    if not a1.passed:
        cls = Classification.UNSUPPORTED
        diag["reason"] = "assumption 1 fails on the bundle region"
    elif not all(shape1[k] and shape2[k] for k in ("decreasing", "slope_gt_minus_one")):
        cls = Classification.UNSUPPORTED
        diag["reason"] = "boundary curve not decreasing with slope > -1"
    elif not (shape1["concave"] and shape2["concave"]):
        cls = Classification.UPPER_BOUND_ONLY
        diag["reason"] = "boundary curve not concave; utility is an upper bound"
    else:
        cls = Classification.EXACT
    return replace(mech, classification=cls, diagnostics=diag)
