"""Shared numerical kernels.

Brent root finding, the principal branch of Lambert W, adaptive
Gauss-Legendre quadrature in one dimension and over sliced planar regions,
and the upper concave envelope of a sampled curve.  Everything here is a
pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MaxIterExceeded, NoBracket, OutOfDomain, DegenerateRegion, TooFewPoints

_EPS = np.finfo(float).eps
_INV_E = math.exp(-1.0)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0 or not self.rel_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


ROOT_TOL = Tolerance(1e-10, 1e-12, 200)
QUAD_TOL = Tolerance(1e-9, 1e-12, 4000)
# used internally where downstream checks need ~1e-10 accuracy
TIGHT_ROOT_TOL = Tolerance(1e-14, 1e-14, 400)
TIGHT_QUAD_TOL = Tolerance(1e-13, 1e-13, 8000)


def _as_interval(bracket) -> tuple[float, float]:
    if isinstance(bracket, Interval):
        return float(bracket.lo), float(bracket.hi)
    lo, hi = bracket
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# roots
# --------------------------------------------------------------------------

def find_root(fn: Callable[[float], float], bracket, tol: Tolerance | None = None) -> float:
    """Brent's method on a sign-changing bracket.

    Returns ``r`` inside the bracket with either ``fn(r) == 0`` or the final
    sign-change interval narrower than ``tol.abs_tol``.
    """
    tol = tol or ROOT_TOL
    a, b = _as_interval(bracket)
    if a > b:
        a, b = b, a
    fa, fb = float(fn(a)), float(fn(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise NoBracket(f"non-finite endpoint value on [{a}, {b}]: {fa}, {fb}")
    if fa * fb > 0.0:
        raise NoBracket(f"no sign change on [{a}, {b}]: f={fa:.3g}, {fb:.3g}")

    c, fc = a, fa
    d = e = b - a
    for _ in range(tol.max_iter):
        if fb * fc > 0.0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * _EPS * abs(b) + 0.5 * max(tol.abs_tol, tol.rel_tol * abs(b))
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e = d
                d = p / q
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a, fa = b, fb
        b = b + d if abs(d) > tol1 else b + math.copysign(tol1, xm)
        fb = float(fn(b))
        if not math.isfinite(fb):
            raise NoBracket(f"function returned {fb} at {b}")
    raise MaxIterExceeded(f"Brent did not converge in {tol.max_iter} iterations")


# --------------------------------------------------------------------------
# Lambert W
# --------------------------------------------------------------------------

def lambert_w(x, tol: Tolerance | None = None):
    """Principal branch W0 by Halley iteration.  Accepts scalars or arrays."""
    tol = tol or ROOT_TOL
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)) or np.any(xa < -_INV_E - 1e-15):
        raise OutOfDomain("lambert_w is defined for x >= -1/e")
    xa = np.maximum(xa, -_INV_E)

    pos = xa >= 0.0
    q = np.sqrt(np.maximum(2.0 * (math.e * xa + 1.0), 0.0))
    w = np.where(pos, np.log1p(np.where(pos, xa, 0.0)), -1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q ** 3)
    # the series overshoots for x close to 0^-
    w = np.where(~pos & (xa > -0.25), xa * (1.0 - xa), w)

    # near the branch point roundoff in w*e^w - x dominates the Halley step,
    # so an element is done once either its step or its residual is tiny
    active = np.ones(xa.shape, dtype=bool)
    for _ in range(tol.max_iter):
        ew = np.exp(w)
        f = w * ew - xa
        wp1 = w + 1.0
        safe = np.abs(wp1) > 1e-300
        denom = ew * wp1 - (w + 2.0) * f / np.where(safe, 2.0 * wp1, 1.0)
        step = np.where(active & safe & (denom != 0.0), f / np.where(denom != 0.0, denom, 1.0), 0.0)
        w = w - step
        small_step = np.abs(step) <= 4.0 * _EPS * (1.0 + np.abs(w))
        small_res = np.abs(f) <= 1e-3 * tol.abs_tol * np.maximum(1.0, np.abs(xa))
        active &= ~(small_step | (small_res & (np.abs(step) < 1e-6)))
        if not active.any():
            break
    else:
        raise MaxIterExceeded("Halley iteration for lambert_w did not converge")
    if np.ndim(x) == 0:
        return float(w)
    return w


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

def _eval(fn, x):
    y = np.asarray(fn(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    return y


def _gl_panels(fn, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    y = _eval(fn, x.ravel()).reshape(x.shape)
    return half * (y @ _GL_WEIGHTS)


def integrate_1d(fn: Callable, interval, tol: Tolerance | None = None,
                 points: Sequence[float] = ()) -> float:
    """Adaptive 15-point Gauss-Legendre quadrature of a vectorised ``fn``.

    Panels are bisected breadth-first until the two halves agree with the
    parent panel to within the panel's share of the tolerance.  ``points``
    are interior breakpoints (kinks, jumps) that become panel edges.
    """
    tol = tol or QUAD_TOL
    lo, hi = _as_interval(interval)
    if hi == lo:
        return 0.0
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0
    length = hi - lo
    edges = np.array(sorted({lo, hi, *[float(p) for p in points if lo < p < hi]}))
    a, b = edges[:-1], edges[1:]
    whole = _gl_panels(fn, a, b)
    done = 0.0
    used = len(a)
    while len(a):
        m = 0.5 * (a + b)
        left = _gl_panels(fn, a, m)
        right = _gl_panels(fn, m, b)
        refined = left + right
        err = np.abs(refined - whole)
        scale = max(tol.abs_tol, tol.rel_tol * abs(done + refined.sum()))
        ok = (err <= scale * (b - a) / length) | ((b - a) <= 64 * _EPS * max(1.0, abs(lo), abs(hi)))
        done += refined[ok].sum()
        keep = ~ok
        if not keep.any():
            break
        used += 2 * int(keep.sum())
        if used > tol.max_iter:
            raise MaxIterExceeded(
                f"quadrature panel budget {tol.max_iter} exhausted on [{lo}, {hi}]")
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        whole = np.concatenate([left[keep], right[keep]])
    return sign * float(done)





def _limit(v, o):
    if callable(v):
        return np.asarray(v(o), dtype=float) * np.ones_like(o)
    return np.full_like(o, float(v))


@dataclass(frozen=True)
class Slab:
    """Points with ``outer in [lo, hi]`` and ``inner in [inner_lo(outer), inner_hi(outer)]``.

    ``axis`` names the outer variable: ``2`` slices along x2 (inner variable x1),
    ``1`` slices along x1.
    """
    lo: float
    hi: float
    inner_lo: object = 0.0
    inner_hi: object = 1.0
    axis: int = 2
    breakpoints: tuple = ()

    def contains(self, x1, x2):
        outer, inner = (x2, x1) if self.axis == 2 else (x1, x2)
        outer = np.asarray(outer, dtype=float)
        inner = np.asarray(inner, dtype=float)
        o = np.clip(outer, self.lo, self.hi) if self.hi > self.lo else outer
        lo_v = _limit(self.inner_lo, np.atleast_1d(o)).reshape(np.shape(o))
        hi_v = _limit(self.inner_hi, np.atleast_1d(o)).reshape(np.shape(o))
        return (outer >= self.lo) & (outer <= self.hi) & (inner >= lo_v) & (inner <= hi_v)


@dataclass(frozen=True)
class Region:
    """A planar region given as a union of non-overlapping slabs."""
    slabs: tuple = field(default_factory=tuple)

    @classmethod
    def box(cls, x1_lo=0.0, x1_hi=1.0, x2_lo=0.0, x2_hi=1.0):
        return cls((Slab(x2_lo, x2_hi, x1_lo, x1_hi),))

    def contains(self, x1, x2):
        inside = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, dtype=bool)
        for slab in self.slabs:
            inside |= slab.contains(x1, x2)
        return inside

    @property
    def bbox(self):
        if not self.slabs:
            return (0.0, 0.0, 0.0, 0.0)
        return (0.0, 1.0, min(s.lo for s in self.slabs), max(s.hi for s in self.slabs))


def _inner_integral(fn, outer, lo, hi, axis, tol):
    """Composite GL15 over [lo, hi] for every outer node at once, doubling panels."""
    width = np.maximum(hi - lo, 0.0)
    prev = None
    n_sub = 1
    while True:
        edges = lo[:, None] + width[:, None] * (np.arange(n_sub + 1) / n_sub)[None, :]
        a = edges[:, :-1]
        half = 0.5 * (edges[:, 1:] - a)
        mid = a + half
        x_in = mid[..., None] + half[..., None] * _GL_NODES
        x_out = np.broadcast_to(outer[:, None, None], x_in.shape)
        y = fn(x_in, x_out) if axis == 2 else fn(x_out, x_in)
        val = ((y @ _GL_WEIGHTS) * half).sum(axis=1)
        if prev is not None and np.all(np.abs(val - prev) <= max(tol.abs_tol, tol.rel_tol * np.abs(val).max(initial=0.0))):
            return val
        if n_sub >= 256:
            raise MaxIterExceeded("inner quadrature did not converge")
        prev = val
        n_sub *= 2


def integrate_2d_region(fn: Callable, region: Region, tol: Tolerance | None = None) -> float:
    """Integrate ``fn(x1, x2)`` over ``region`` by slicing.

    Each slab is integrated as an outer adaptive 1D integral whose integrand
    is the inner integral between the exact slice limits, so the region
    boundary never enters as an indicator function.
    """
    tol = tol or QUAD_TOL
    slabs = [s for s in region.slabs if s.hi > s.lo]
    if not slabs:
        raise DegenerateRegion("region has zero area")
    total = 0.0
    for slab in slabs:
        def outer_fn(o, slab=slab):
            o = np.asarray(o, dtype=float)
            lo = _limit(slab.inner_lo, o)
            hi = _limit(slab.inner_hi, o)
            hi = np.maximum(hi, lo)
            return _inner_integral(_pair(fn), o, lo, hi, slab.axis, tol)
        total += integrate_1d(outer_fn, (slab.lo, slab.hi), tol, points=slab.breakpoints)
    return total


def _pair(fn):
    def g(x1, x2):
        return np.broadcast_to(np.asarray(fn(x1, x2), dtype=float), np.broadcast(x1, x2).shape)
    return g


# --------------------------------------------------------------------------
# concave envelope
# --------------------------------------------------------------------------

class PiecewiseLinear:
    """Continuous piecewise-linear function on sorted knots."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.slopes = np.diff(self.y) / np.diff(self.x)

    def __call__(self, t):
        out = np.interp(t, self.x, self.y)
        return float(out) if np.ndim(t) == 0 else out

    def derivative(self, t):
        idx = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, len(self.slopes) - 1)
        out = self.slopes[idx]
        return float(out) if np.ndim(t) == 0 else out

    def __len__(self):
        return len(self.x)

    def __repr__(self):
        return f"PiecewiseLinear({len(self.x)} knots on [{self.x[0]:.6g}, {self.x[-1]:.6g}])"


def concave_envelope(points) -> PiecewiseLinear:
    """Least concave majorant of sampled points (upper hull, monotone chain)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise TooFewPoints("need at least two (t, s) samples")
    t, s = pts[:, 0], pts[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError("abscissae must be strictly increasing")
    hull = []
    for i in range(len(t)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (t[a] - t[o]) * (s[i] - s[o]) - (s[a] - s[o]) * (t[i] - t[o])
            if cross >= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return PiecewiseLinear(t[hull], s[hull])
