"""Value distributions on [0, 1] and the functionals built from them.

Each family exposes its density ``pdf``, derivative ``dpdf``, ``cdf`` and
survival function ``sf``.  ``xdpdf(t) = t f'(t)`` is provided separately so
that densities with an infinite slope at zero (monomials with c < 1) stay
finite where it matters.

On top of the families sit the transforms

    G(t) = t f(t) / (1 - F(t))        H(t) = t f'(t) / f(t)

and the two-item density functional

    h(x) = 3 f1(x1) f2(x2) + x1 f1'(x1) f2(x2) + x2 f2'(x2) f1(x1),

together with grid checks of the sign / shape conditions under which the
closed-form mechanism applies.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NoSolution, OutOfDomain, Singular, SpecParseError
from .numerics import TIGHT_ROOT_TOL, find_root, lambert_w

ASSUMPTION_THRESHOLD = -1e-9


def _out(v, t):
    return float(v) if np.ndim(t) == 0 else v


class DistributionSpec:
    """Base class.  Subclasses are immutable dataclasses."""

    family = "abstract"
    #: H is constant (uniform / monomial), so the opposite boundary is flat
    h_constant = False

    # -- primitives (vectorised, no domain check) ----------------------------
    def pdf(self, t):
        raise NotImplementedError

    def dpdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def sf(self, t):
        return _out(1.0 - np.asarray(self.cdf(t), dtype=float), t)

    def xdpdf(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.dpdf(t)

    @property
    def f1(self) -> float:
        """Density at the top of the support, f(1)."""
        return float(self.pdf(1.0))

    # -- transforms ------------------------------------------------------------
    def G(self, t):
        t = np.asarray(t, dtype=float)
        f = np.asarray(self.pdf(t), dtype=float)
        s = np.asarray(self.sf(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(s > 0.0, t * f / np.where(s > 0.0, s, 1.0), np.inf)
        return _out(g, t)

    def dG(self, t):
        t = np.asarray(t, dtype=float)
        f = np.asarray(self.pdf(t), dtype=float)
        s = np.asarray(self.sf(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s > 0.0, (f + self.xdpdf(t)) / s + t * f * f / s ** 2, np.inf)
        return _out(out, t)

    def H(self, t):
        t = np.asarray(t, dtype=float)
        f = np.asarray(self.pdf(t), dtype=float)
        if np.any(f == 0.0):
            raise Singular(f"H undefined where f vanishes ({self.to_spec()})")
        return _out(np.asarray(self.xdpdf(t)) / f, t)

    def dH(self, t):
        """Derivative of H, or ``None`` when only f and f' are known."""
        return None

    def G_inverse(self, target):
        """Solve G(y) = target for y in (0, 1); closed form where one exists."""
        return self._G_inverse_numeric(target)

    def G_at_one(self) -> float:
        if self.sf(1.0) <= 0.0 and self.f1 > 0.0:
            return math.inf
        return float(self.G(1.0 - 1e-12))

    def _G_inverse_numeric(self, target):
        targets = np.atleast_1d(np.asarray(target, dtype=float))
        hi = 1.0 - 1e-12
        g_hi = float(self.G(hi))
        out = np.empty_like(targets)
        for k, T in enumerate(targets):
            if T <= 0.0:
                raise NoSolution(f"G(y) = {T} has no root in (0, 1)")
            if g_hi < T:
                raise NoSolution(f"G(1-) = {g_hi:.6g} < {T:.6g} for {self.to_spec()}")
            out[k] = find_root(lambda y: float(self.G(y)) - T, (0.0, hi), TIGHT_ROOT_TOL)
        return float(out[0]) if np.ndim(target) == 0 else out

    def to_spec(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_spec()


@dataclass(frozen=True, eq=True)
class Uniform(DistributionSpec):
    family = "uniform"
    h_constant = True

    def pdf(self, t):
        return _out(np.ones_like(np.asarray(t, dtype=float)), t)

    def dpdf(self, t):
        return _out(np.zeros_like(np.asarray(t, dtype=float)), t)

    def xdpdf(self, t):
        return self.dpdf(t)

    def cdf(self, t):
        return _out(np.asarray(t, dtype=float) * 1.0, t)

    def sf(self, t):
        return _out(1.0 - np.asarray(t, dtype=float), t)

    def H(self, t):
        return self.dpdf(t)

    def dH(self, t):
        return self.dpdf(t)

    def G_inverse(self, target):
        T = np.asarray(target, dtype=float)
        return _out(T / (1.0 + T), target)

    def to_spec(self):
        return "uniform"


@dataclass(frozen=True, eq=True)
class Monomial(DistributionSpec):
    """f(t) = (c + 1) t^c."""
    c: float = 0.0
    family = "monomial"
    h_constant = True

    def __post_init__(self):
        if not self.c >= 0.0:
            raise ValueError("monomial exponent must be >= 0")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out((self.c + 1.0) * t ** self.c, t)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.c == 0.0:
            return _out(np.zeros_like(t), t)
        with np.errstate(divide="ignore"):
            return _out(self.c * (self.c + 1.0) * t ** (self.c - 1.0), t)

    def xdpdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(self.c * (self.c + 1.0) * t ** self.c, t)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(t ** (self.c + 1.0), t)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(t > 0.0, -np.expm1((self.c + 1.0) * np.log(np.where(t > 0.0, t, 1.0))), 1.0)
        return _out(out, t)

    def H(self, t):
        return _out(np.full_like(np.asarray(t, dtype=float), self.c), t)

    def dH(self, t):
        return _out(np.zeros_like(np.asarray(t, dtype=float)), t)

    def G_inverse(self, target):
        T = np.asarray(target, dtype=float)
        return _out((T / (T + self.c + 1.0)) ** (1.0 / (self.c + 1.0)), target)

    def to_spec(self):
        return f"monomial:c={self.c:g}"


@dataclass(frozen=True, eq=True)
class TruncExponential(DistributionSpec):
    """f(t) = lam e^{-lam t} / (1 - e^{-lam}) on [0, 1]."""
    lam: float = 1.0
    family = "exp"

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("exponential rate must be > 0")

    @property
    def _norm(self):
        return self.lam / -math.expm1(-self.lam)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(self._norm * np.exp(-self.lam * t), t)

    def dpdf(self, t):
        return _out(-self.lam * np.asarray(self.pdf(t)), t)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(np.expm1(-self.lam * t) / math.expm1(-self.lam), t)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(np.exp(-self.lam * t) * np.expm1(-self.lam * (1.0 - t)) / math.expm1(-self.lam), t)

    def G(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(t < 1.0, self.lam * t / -np.expm1(-self.lam * (1.0 - t)), np.inf)
        return _out(g, t)

    def H(self, t):
        return _out(-self.lam * np.asarray(t, dtype=float), t)

    def dH(self, t):
        return _out(np.full_like(np.asarray(t, dtype=float), -self.lam), t)

    def G_inverse(self, target):
        T = np.asarray(target, dtype=float)
        lam = self.lam
        return _out((T - lambert_w(T * np.exp(T - lam))) / lam, target)

    def to_spec(self):
        return f"exp:lambda={self.lam:g}"


@dataclass(frozen=True, eq=True)
class PowerLaw(DistributionSpec):
    """f(t) = k / (t + 1)^alpha with k chosen so that f integrates to one."""
    alpha: float = 2.0
    family = "powerlaw"

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("power-law exponent must be > 0")

    @property
    def norm(self) -> float:
        a = self.alpha
        if abs(a - 1.0) < 1e-12:
            return 1.0 / math.log(2.0)
        return (a - 1.0) / (1.0 - 2.0 ** (1.0 - a))

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(self.norm * (t + 1.0) ** -self.alpha, t)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(-self.alpha * self.norm * (t + 1.0) ** (-self.alpha - 1.0), t)

    def _antider(self, t):
        a = self.alpha
        if abs(a - 1.0) < 1e-12:
            return self.norm * np.log1p(t)
        return self.norm * (1.0 - (t + 1.0) ** (1.0 - a)) / (a - 1.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(self._antider(t), t)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        if abs(a - 1.0) < 1e-12:
            return _out(self.norm * np.log(2.0 / (1.0 + t)), t)
        return _out(self.norm * ((t + 1.0) ** (1.0 - a) - 2.0 ** (1.0 - a)) / (a - 1.0), t)

    def H(self, t):
        t = np.asarray(t, dtype=float)
        return _out(-self.alpha * t / (1.0 + t), t)

    def dH(self, t):
        t = np.asarray(t, dtype=float)
        return _out(-self.alpha / (1.0 + t) ** 2, t)

    def G_inverse(self, target):
        if self.alpha == 2.0:
            # G(y) = 2y / (1 - y^2)
            T = np.asarray(target, dtype=float)
            return _out((np.sqrt(1.0 + T * T) - 1.0) / T, target)
        return self._G_inverse_numeric(target)

    def to_spec(self):
        return f"powerlaw:alpha={self.alpha:g}"


@dataclass(frozen=True, eq=False)
class Custom(DistributionSpec):
    """User-supplied density, derivative and cdf (all three are required)."""
    f: Callable
    fprime: Callable
    F: Callable
    name: str = "custom"
    family = "custom"
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        check_distribution(self)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(np.asarray(self.f(t), dtype=float) * np.ones_like(t), t)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(np.asarray(self.fprime(t), dtype=float) * np.ones_like(t), t)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return _out(np.asarray(self.F(t), dtype=float) * np.ones_like(t), t)

    def to_spec(self):
        return self.name


def check_distribution(dist: DistributionSpec, n_points: int = 100) -> None:
    """Raise ValueError unless f, F and f' are mutually consistent."""
    from scipy.integrate import quad

    mass = quad(lambda t: float(dist.pdf(t)), 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"density integrates to {mass!r}, not 1")
    if abs(float(dist.cdf(0.0))) > 1e-8 or abs(float(dist.cdf(1.0)) - 1.0) > 1e-8:
        raise ValueError("cdf must satisfy F(0)=0 and F(1)=1")
    t = np.linspace(0.01, 0.99, n_points)
    step = 1e-5
    dF = (np.asarray(dist.cdf(t + step)) - np.asarray(dist.cdf(t - step))) / (2 * step)
    if np.max(np.abs(dF - dist.pdf(t))) > 1e-6:
        raise ValueError("cdf derivative does not match the density")
    df = (np.asarray(dist.pdf(t + step)) - np.asarray(dist.pdf(t - step))) / (2 * step)
    if np.max(np.abs(df - dist.dpdf(t)) / np.maximum(1.0, np.abs(df))) > 1e-5:
        raise ValueError("density derivative does not match f'")
    if np.any(np.asarray(dist.pdf(np.linspace(1e-3, 1.0, n_points))) <= 0.0):
        raise ValueError("density must be positive on (0, 1]")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_SPEC_RE = re.compile(r"^\s*(?P<fam>[a-z]+)\s*(?::\s*(?P<key>[a-z]+)\s*=\s*(?P<val>[-+0-9.eE]+)\s*)?$")


def parse_distribution(text: str) -> DistributionSpec:
    """Parse ``uniform``, ``monomial:c=<x>``, ``exp:lambda=<x>``, ``powerlaw:alpha=<x>``."""
    m = _SPEC_RE.match(text.lower())
    if not m:
        raise SpecParseError(f"cannot parse distribution spec {text!r}")
    fam, key, val = m.group("fam"), m.group("key"), m.group("val")
    expected = {"uniform": None, "monomial": "c", "exp": "lambda", "powerlaw": "alpha"}
    if fam not in expected:
        raise SpecParseError(f"unknown family {fam!r}; expected one of {sorted(expected)}")
    if expected[fam] != key:
        raise SpecParseError(f"family {fam!r} takes parameter {expected[fam]!r}, got {key!r}")
    try:
        value = float(val) if val is not None else None
    except ValueError as exc:
        raise SpecParseError(f"bad number in {text!r}") from exc
    try:
        if fam == "uniform":
            return Uniform()
        if fam == "monomial":
            return Uniform() if value == 0.0 else Monomial(value)
        if fam == "exp":
            return TruncExponential(value)
        return PowerLaw(value)
    except ValueError as exc:
        raise SpecParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# checked scalar evaluations
# ---------------------------------------------------------------------------

def _check_domain(t):
    ta = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(ta)) or np.any(ta < 0.0) or np.any(ta > 1.0):
        raise OutOfDomain(f"argument outside [0, 1]: {t!r}")


def eval_f(dist, t):
    _check_domain(t)
    return dist.pdf(t)


def eval_f_prime(dist, t):
    _check_domain(t)
    return dist.dpdf(t)


def eval_F(dist, t):
    _check_domain(t)
    return dist.cdf(t)


def eval_G(dist, t):
    _check_domain(t)
    if np.any(np.asarray(t) == 1.0) and dist.f1 == 0.0:
        raise Singular("G(1) is 0/0 for a density vanishing at 1")
    return dist.G(t)


def eval_H(dist, t):
    _check_domain(t)
    return dist.H(t)


def eval_h(d1, d2, x1, x2):
    _check_domain(x1)
    _check_domain(x2)
    return h_value(d1, d2, x1, x2)


# ---------------------------------------------------------------------------
# the density functional h and its exact partial integrals
# ---------------------------------------------------------------------------

def h_value(d1, d2, x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    f1, f2 = d1.pdf(x1), d2.pdf(x2)
    out = 3.0 * f1 * f2 + d1.xdpdf(x1) * f2 + d2.xdpdf(x2) * f1
    return float(out) if np.ndim(out) == 0 else out


def h_antiderivative_x1(d1, d2, u, x2):
    """Exact ``int_0^u h(x1, x2) dx1``."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    x2 = np.asarray(x2, dtype=float)
    Fu = d1.cdf(u)
    return d2.pdf(x2) * (2.0 * Fu + u * d1.pdf(u)) + d2.xdpdf(x2) * Fu


def h_antiderivative_x2(d1, d2, u, x1):
    """Exact ``int_0^u h(x1, x2) dx2``."""
    return h_antiderivative_x1(d2, d1, u, x1)


def h_rect_integral(d1, d2, a1, b1, a2, b2):
    """Exact integral of h over the rectangle [a1, b1] x [a2, b2]."""
    dF1 = np.asarray(d1.cdf(b1)) - d1.cdf(a1)
    dF2 = np.asarray(d2.cdf(b2)) - d2.cdf(a2)
    dt1 = np.asarray(b1) * d1.pdf(b1) - np.asarray(a1) * d1.pdf(a1)
    dt2 = np.asarray(b2) * d2.pdf(b2) - np.asarray(a2) * d2.pdf(a2)
    return dF1 * dF2 + dt1 * dF2 + dF1 * dt2


def h_total(d1, d2) -> float:
    """``int over [0,1]^2 of h``, which equals 1 + f1(1) + f2(1)."""
    return float(h_rect_integral(d1, d2, 0.0, 1.0, 0.0, 1.0))


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    passed: bool
    variant: str            # "nonnegative" | "monotone"
    region: str             # "full" | "d12"
    worst_point: tuple
    worst_value: float
    samples_checked: int

    def as_dict(self):
        return {
            "passed": self.passed,
            "variant": self.variant,
            "region": self.region,
            "worst_point": list(self.worst_point),
            "worst_value": self.worst_value,
            "samples_checked": self.samples_checked,
        }


def _assumption_lattice(region, grid_n, bundle):
    if region == "full":
        g = np.linspace(0.0, 1.0, grid_n)
        x1, x2 = np.meshgrid(g, g, indexing="ij")
        return x1, x2, np.ones_like(x1, dtype=bool)
    if bundle is None:
        raise ValueError("region 'd12' needs a solved mechanism (p, x1_star, x2_star)")
    p, a1, a2 = bundle.p, bundle.x1_star, bundle.x2_star
    a1 = max(a1, p - 1.0, 0.0)
    a2 = max(a2, p - 1.0, 0.0)
    x1, x2 = np.meshgrid(np.linspace(a1, 1.0, grid_n), np.linspace(a2, 1.0, grid_n), indexing="ij")
    return x1, x2, (x1 + x2 >= p - 1e-12)


def check_assumption1(d1, d2, region: str = "full", variant: str = "nonnegative",
                      grid_n: int = 129, mechanism=None) -> AssumptionReport:
    """Grid check of h - f2(1) f1(x1) >= 0 and h - f1(1) f2(x2) >= 0.

    ``variant='monotone'`` instead checks that the first is nondecreasing in
    x1 and the second in x2, together with h >= 0.  ``region='d12'`` restricts
    the lattice to the bundle region of ``mechanism``.
    """
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    if region not in ("full", "d12"):
        raise ValueError(f"unknown region {region!r}")
    if variant not in ("nonnegative", "monotone"):
        raise ValueError(f"unknown variant {variant!r}")
    x1, x2, mask = _assumption_lattice(region, grid_n, mechanism)
    h = h_value(d1, d2, x1, x2)
    g1 = h - d2.f1 * d1.pdf(x1)
    g2 = h - d1.f1 * d2.pdf(x2)
    if variant == "nonnegative":
        vals = np.where(mask, np.minimum(g1, g2), np.inf)
        k = np.unravel_index(np.argmin(vals), vals.shape)
        worst = float(vals[k])
        point = (float(x1[k]), float(x2[k]))
    else:
        d_g1 = np.where(mask[1:, :] & mask[:-1, :], np.diff(g1, axis=0), np.inf)
        d_g2 = np.where(mask[:, 1:] & mask[:, :-1], np.diff(g2, axis=1), np.inf)
        h_min = np.where(mask, h, np.inf)
        cands = [(d_g1, lambda k: (x1[k], x2[k])), (d_g2, lambda k: (x1[k], x2[k])), (h_min, lambda k: (x1[k], x2[k]))]
        worst, point = math.inf, (math.nan, math.nan)
        for arr, loc in cands:
            k = np.unravel_index(np.argmin(arr), arr.shape)
            if arr[k] < worst:
                worst = float(arr[k])
                point = tuple(float(v) for v in loc(k))
    return AssumptionReport(
        passed=bool(worst >= ASSUMPTION_THRESHOLD),
        variant=variant,
        region=region,
        worst_point=point,
        worst_value=worst,
        samples_checked=int(mask.sum()),
    )


@dataclass(frozen=True)
class ShapeReport:
    G_increasing: bool
    G_convex: bool
    H_decreasing: bool
    H_concave: bool
    GplusH_increasing: bool
    boundary_ok: bool

    @property
    def all_ok(self) -> bool:
        return all(self.as_dict().values())

    @property
    def all_but_H_concave(self) -> bool:
        d = self.as_dict()
        d.pop("H_concave")
        return all(d.values())

    def as_dict(self):
        return {
            "G_increasing": self.G_increasing,
            "G_convex": self.G_convex,
            "H_decreasing": self.H_decreasing,
            "H_concave": self.H_concave,
            "GplusH_increasing": self.GplusH_increasing,
            "boundary_ok": self.boundary_ok,
        }


def check_theorem2_conditions(dist, grid_n: int = 256) -> ShapeReport:
    """Finite-difference shape checks of G and H on [0, 1 - 1e-6]."""
    if grid_n < 64:
        raise ValueError("grid_n must be >= 64")
    t = np.linspace(0.0, 1.0 - 1e-6, grid_n)
    G = np.asarray(dist.G(t), dtype=float)
    # H at t = 0 can be 0/0 for densities vanishing there; use the right limit
    try:
        H = np.asarray(dist.H(t), dtype=float)
    except Singular:
        H = np.asarray(dist.H(np.maximum(t, 1e-9)), dtype=float)
    thr = 1e-9

    def scale(v):
        return thr * np.maximum(1.0, np.abs(v[1:-1]))

    dG = np.diff(G)
    ddG = G[2:] - 2.0 * G[1:-1] + G[:-2]
    dH = np.diff(H)
    ddH = H[2:] - 2.0 * H[1:-1] + H[:-2]
    S = G + H
    G1 = dist.G_at_one()
    return ShapeReport(
        G_increasing=bool(np.all(dG > 0.0)),
        G_convex=bool(np.all(ddG >= -scale(G))),
        H_decreasing=bool(np.all(dH <= thr * np.maximum(1.0, np.abs(H[1:])))),
        H_concave=bool(np.all(ddH <= scale(H))),
        GplusH_increasing=bool(np.all(np.diff(S) >= -thr * np.maximum(1.0, np.abs(S[1:])))),
        boundary_ok=bool(G1 >= 2.0 + H[0]),
    )
