"""twoitem command line: solve, check, certify, oracle, convexify, plot, table."""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

import numpy as np

from .certificate import verify_certificate
from .distributions import check_assumption1, check_theorem2_conditions, parse_distribution
from .errors import CertificateFailed, MechanismError, SpecParseError
from .mechanism import convexification_gap, convexify, extract_menu, revenue
from .numerics import Tolerance
from .oracle import compare_oracle, rows_to_csv
from .solver import Classification, assemble_mechanism, reprice

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_UNSUPPORTED, EXIT_CERT = 0, 1, 2, 3
SIG_DIGITS = 12


class UsageError(Exception):
    pass


def fmt_float(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(f"{v:.{SIG_DIGITS}g}")


def normalize(obj):
    """Round floats to 12 significant digits, make the tree JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [normalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if hasattr(obj, "value"):
        return obj.value
    return obj


def dumps(doc) -> str:
    return json.dumps(normalize(doc), indent=2) + "\n"


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_delta(text: str) -> float:
    try:
        frac = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad --delta {text!r}") from exc
    if frac <= 0 or (1 / frac).denominator != 1:
        raise UsageError("--delta must be 1/k for an integer k")
    return float(frac)


def parse_n_list(text: str):
    try:
        ns = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --n-list {text!r}") from exc
    if not ns or any(not 2 <= n <= 16 for n in ns):
        raise UsageError("--n-list entries must lie in [2, 16]")
    return ns


# ---------------------------------------------------------------------------
# document builders
# ---------------------------------------------------------------------------

def curve_doc(curve):
    return {
        "closed_form": curve.closed_form,
        "s0": float(curve(0.0)),
        "knots": curve.knots,
        "values": curve.values,
    }


def mechanism_doc(mech, tol=None):
    doc = {
        "classification": mech.classification.value,
        "full_bundle_only": mech.full_bundle_only,
        "p": mech.p,
        "x1_star": mech.x1_star,
        "x2_star": mech.x2_star,
    }
    if mech.classification is Classification.UNSUPPORTED:
        doc["reason"] = mech.diagnostics.get("reason", "")
        return doc
    rev = revenue(mech, tol=tol) if tol else revenue(mech)
    try:
        menu = [[e.a1, e.a2, e.price] for e in extract_menu(mech)]
    except MechanismError:
        menu = None
    doc.update({
        "deterministic": mech.is_deterministic,
        "randomized": mech.is_randomized,
        "s1": curve_doc(mech.s1),
        "s2": curve_doc(mech.s2),
        "revenue": {"functional": rev.rev_functional, "payment": rev.rev_payment,
                    "discrepancy": rev.discrepancy},
        "menu": menu,
    })
    if "reason" in mech.diagnostics:
        doc["reason"] = mech.diagnostics["reason"]
    return doc


def header(command, args):
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "d1": str(args.d1_dist), "d2": str(args.d2_dist)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(args):
    mech = assemble_mechanism(args.d1_dist, args.d2_dist)
    tol = Tolerance(args.tol, args.tol, 8000) if args.tol else None
    doc = {**header("solve", args), **mechanism_doc(mech, tol)}
    if args.figure and mech.classification is not Classification.UNSUPPORTED:
        from .plotting import plot_partition
        plot_partition(mech, args.figure)
        doc["figure"] = args.figure
    _emit(dumps(doc), args.out)
    return EXIT_UNSUPPORTED if mech.classification is Classification.UNSUPPORTED else EXIT_OK


def cmd_check(args):
    d1, d2 = args.d1_dist, args.d2_dist
    mech = assemble_mechanism(d1, d2)
    doc = header("check", args)
    doc["theorem2"] = {"d1": check_theorem2_conditions(d1).as_dict(),
                       "d2": check_theorem2_conditions(d2).as_dict()}
    doc["assumption1"] = {"full": check_assumption1(d1, d2, "full").as_dict()}
    if not math.isnan(mech.p):
        doc["assumption1"]["d12"] = check_assumption1(d1, d2, "d12", mechanism=mech).as_dict()
        doc["curve_shape"] = {"s1": mech.diagnostics["shape_s1"], "s2": mech.diagnostics["shape_s2"]}
    doc["classification"] = mech.classification.value
    _emit(dumps(doc), args.out)
    return EXIT_UNSUPPORTED if mech.classification is Classification.UNSUPPORTED else EXIT_OK


def cmd_certify(args):
    mech = assemble_mechanism(args.d1_dist, args.d2_dist)
    doc = header("certify", args)
    if mech.classification is not Classification.EXACT:
        doc.update(classification=mech.classification.value, verified=False,
                   failed_condition="instance is not Exact")
        _emit(dumps(doc), args.out)
        return EXIT_UNSUPPORTED
    if args.perturb_p:
        mech = reprice(mech, mech.p + args.perturb_p)
        doc["perturb_p"] = args.perturb_p
    doc["p"] = mech.p
    try:
        report = verify_certificate(mech.d1, mech.d2, mech, delta=args.delta, epsilon=args.epsilon,
                                    refine=not args.no_refine)
        code = EXIT_OK
    except CertificateFailed as exc:
        report = exc.report
        code = EXIT_CERT
    doc.update(report.as_dict())
    _emit(dumps(doc), args.out)
    return code


def cmd_oracle(args):
    mech = assemble_mechanism(args.d1_dist, args.d2_dist)
    if mech.classification is Classification.UNSUPPORTED:
        sys.stderr.write(f"unsupported instance: {mech.diagnostics.get('reason', '')}\n")
        return EXIT_UNSUPPORTED
    rows = compare_oracle(args.d1_dist, args.d2_dist, args.n_list)
    _emit(rows_to_csv(rows, ["n", "lp_revenue", "closed_form", "gap"], fmt_float), args.out)
    return EXIT_OK


def cmd_convexify(args):
    d1, d2 = args.d1_dist, args.d2_dist
    mech = assemble_mechanism(d1, d2)
    doc = {**header("convexify", args), "classification": mech.classification.value}
    if mech.classification is Classification.UNSUPPORTED:
        doc["reason"] = mech.diagnostics.get("reason", "")
        _emit(dumps(doc), args.out)
        return EXIT_UNSUPPORTED
    if mech.classification is Classification.EXACT:
        doc.update(already_concave=True, gap=1.0)
        _emit(dumps(doc), args.out)
        return EXIT_OK
    conv = convexify(mech)
    upper = revenue(mech)
    feasible = revenue(conv)
    doc.update({
        "already_concave": False,
        "upper_bound_revenue": upper.rev_payment,
        "convexified_revenue": feasible.rev_payment,
        "gap": convexification_gap(d1, d2, mech),
        "convexified": mechanism_doc(conv),
    })
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_plot(args):
    from .plotting import plot_partition
    mech = assemble_mechanism(args.d1_dist, args.d2_dist)
    if mech.classification is Classification.UNSUPPORTED:
        sys.stderr.write(f"unsupported instance: {mech.diagnostics.get('reason', '')}\n")
        return EXIT_UNSUPPORTED
    out = args.out or "partition.svg"
    plot_partition(mech, out)
    sys.stdout.write(dumps({**header("plot", args), "classification": mech.classification.value,
                            "p": mech.p, "x1_star": mech.x1_star, "x2_star": mech.x2_star,
                            "figure": out}))
    return EXIT_OK


FAMILY_TEMPLATES = {"monomial": "monomial:c={}", "exp": "exp:lambda={}", "powerlaw": "powerlaw:alpha={}",
                    "uniform": "uniform"}


def cmd_table(args):
    if args.family not in FAMILY_TEMPLATES:
        raise UsageError(f"--family must be one of {sorted(FAMILY_TEMPLATES)}")
    try:
        params = [float(v) for v in args.params.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --params {args.params!r}") from exc
    rows = []
    for c in params:
        try:
            dist = parse_distribution(FAMILY_TEMPLATES[args.family].format(repr(c)))
            mech = assemble_mechanism(dist, dist)
        except (SpecParseError, MechanismError) as exc:
            rows.append({"param": c, "s0": math.nan, "p": math.nan, "revenue": math.nan,
                         "classification": "Unsupported", "note": str(exc)})
            continue
        if mech.classification is Classification.UNSUPPORTED:
            rows.append({"param": c, "s0": float(mech.s1(0.0)) if mech.s1 else math.nan, "p": mech.p,
                         "revenue": math.nan, "classification": "Unsupported"})
            continue
        rows.append({"param": c, "s0": float(mech.s1(0.0)), "p": mech.p,
                     "revenue": revenue(mech).rev_payment, "classification": mech.classification.value})
    text = rows_to_csv(rows, ["param", "s0", "p", "revenue", "classification"],
                       lambda v: v if isinstance(v, str) else fmt_float(v))
    _emit(text, args.out)
    if args.figure:
        from .plotting import plot_sweep
        plot_sweep(rows, args.family, args.figure)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "certify": cmd_certify, "oracle": cmd_oracle,
            "convexify": cmd_convexify, "plot": cmd_plot, "table": cmd_table}


def build_parser():
    parser = argparse.ArgumentParser(prog="twoitem", description="Optimal two-item mechanisms")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dists=True):
        if dists:
            p.add_argument("--d1", required=True, help="distribution of item 1, e.g. exp:lambda=1")
            p.add_argument("--d2", required=True, help="distribution of item 2")
        p.add_argument("--out", help="write the output here instead of stdout")
        return p

    s = common(sub.add_parser("solve", help="solve and classify an instance"))
    s.add_argument("--tol", type=float, help="quadrature tolerance for the revenue")
    s.add_argument("--figure", help="also write the partition figure (SVG)")
    common(sub.add_parser("check", help="report the distributional conditions"))
    c = common(sub.add_parser("certify", help="run the max-flow optimality certificate"))
    c.add_argument("--delta", default="1/64", help="lattice size 1/k (default 1/64)")
    c.add_argument("--epsilon", type=float, default=0.05)
    c.add_argument("--perturb-p", type=float, default=0.0, help="debug: shift the bundle price")
    c.add_argument("--no-refine", action="store_true", help="do not halve delta on residual failure")
    o = common(sub.add_parser("oracle", help="compare with the discretized LP optimum (CSV)"))
    o.add_argument("--n-list", default="4,6,8")
    common(sub.add_parser("convexify", help="feasible mechanism from an upper-bound instance"))
    common(sub.add_parser("plot", help="SVG of the valuation-space partition"))
    t = common(sub.add_parser("table", help="CSV sweep over one family (iid)"), dists=False)
    t.add_argument("--family", required=True)
    t.add_argument("--params", required=True, help="comma separated parameter values")
    t.add_argument("--figure", help="also write a sweep figure (SVG)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command != "table":
            args.d1_dist = parse_distribution(args.d1)
            args.d2_dist = parse_distribution(args.d2)
        if args.command == "certify":
            args.delta = parse_delta(args.delta)
            if not 0.0 < args.epsilon < 1.0:
                raise UsageError("--epsilon must lie in (0, 1)")
        if args.command == "oracle":
            args.n_list = parse_n_list(args.n_list)
        return COMMANDS[args.command](args)
    except (UsageError, SpecParseError) as exc:
        sys.stderr.write(f"twoitem: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
