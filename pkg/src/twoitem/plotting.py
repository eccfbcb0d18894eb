"""SVG figures of the valuation-space partition and of parameter sweeps."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

SVG_METADATA = {"Date": None}
COLORS = {"Zero": "#f2f2f2", "D1": "#9ecae1", "D2": "#fdae6b", "Bundle": "#a1d99b"}


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "twoitem", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def clip_halfplane(poly, a, b, c):
    """Sutherland-Hodgman: keep the part of ``poly`` with a*x + b*y >= c."""
    out = []
    n = len(poly)
    for k in range(n):
        P, Q = poly[k], poly[(k + 1) % n]
        fp = a * P[0] + b * P[1] - c
        fq = a * Q[0] + b * Q[1] - c
        if fp >= 0:
            out.append(P)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((P[0] + t * (Q[0] - P[0]), P[1] + t * (Q[1] - P[1])))
    return out


def region_polygons(mech, samples: int = 200) -> dict:
    """Vertex lists for D1, D2 and the bundle region (the rest is Zero)."""
    polys = {}
    a1, a2, p = mech.x1_star, mech.x2_star, mech.p
    if a2 > 0.0:
        t = np.linspace(0.0, a2, samples)
        polys["D1"] = [(float(mech.s1(x)), float(x)) for x in t] + [(1.0, a2), (1.0, 0.0)]
    if a1 > 0.0:
        t = np.linspace(0.0, a1, samples)
        polys["D2"] = [(float(x), float(mech.s2(x))) for x in t] + [(a1, 1.0), (0.0, 1.0)]
    rect = [(a1, a2), (1.0, a2), (1.0, 1.0), (a1, 1.0)]
    bundle = clip_halfplane(rect, 1.0, 1.0, p)
    if len(bundle) >= 3:
        polys["Bundle"] = bundle
    return polys


def plot_partition(mech, path, title=None):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(Polygon([(0, 0), (1, 0), (1, 1), (0, 1)], closed=True, color=COLORS["Zero"], label="no sale"))
    labels = {"D1": "item 1 sold", "D2": "item 2 sold", "Bundle": "bundle"}
    for name, poly in region_polygons(mech).items():
        ax.add_patch(Polygon(poly, closed=True, color=COLORS[name], alpha=0.9, label=labels[name]))
    t = np.linspace(0.0, 1.0, 400)
    if not mech.full_bundle_only:
        m2 = t <= mech.x2_star
        m1 = t <= mech.x1_star
        ax.plot(mech.s1(t[m2]), t[m2], color="k", lw=1.2)
        ax.plot(t[m1], mech.s2(t[m1]), color="k", lw=1.2)
    lo = max(0.0, mech.p - 1.0)
    hi = min(1.0, mech.p)
    xs = np.linspace(lo, hi, 2)
    ax.plot(xs, mech.p - xs, color="k", lw=1.2, ls="--")
    for v, kw in ((mech.x1_star, dict(x=mech.x1_star)), (mech.x2_star, dict(y=mech.x2_star))):
        if v > 0.0:
            (ax.axvline if "x" in kw else ax.axhline)(v, color="0.4", lw=0.6, ls=":")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_title(title or f"{mech.d1} x {mech.d2}, p = {mech.p:.4f}", fontsize=9)
    ax.legend(loc="upper right", fontsize=7, framealpha=0.8)
    _save(fig, path)


def plot_sweep(rows, param_name, path):
    ok = [r for r in rows if r["classification"] != "Unsupported"]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    if ok:
        x = [r["param"] for r in ok]
        ax.plot(x, [r["p"] for r in ok], marker="o", label="bundle price p")
        ax.plot(x, [r["s0"] for r in ok], marker="s", label="s(0)")
        ax.plot(x, [r["revenue"] for r in ok], marker="^", label="revenue")
    bad = [r["param"] for r in rows if r["classification"] == "Unsupported"]
    for b in bad:
        ax.axvline(b, color="r", lw=0.6, ls=":")
    ax.set_xlabel(param_name)
    ax.legend(fontsize=7)
    _save(fig, path)
