import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoitem.distributions import Uniform
from twoitem.errors import AlreadyConcave, MechanismError
from twoitem.mechanism import (
    RegionName, _envelope_curve, allocate, convexification_gap, convexify, extract_menu, menu_utility,
    revenue, utility, utility_xy,
)
from twoitem.solver import BoundaryCurve, Classification, MechanismSolution

from conftest import EXACT_PAIRS, solved

P_UNIFORM = (4 - math.sqrt(2)) / 3
REV_UNIFORM = 0.5492010046


def test_uniform_utilities(uniform_mech):
    assert utility(uniform_mech, (0.1, 0.1)) == 0.0
    assert utility(uniform_mech, (0.9, 0.9)) == pytest.approx(1.8 - P_UNIFORM, abs=1e-12)
    assert utility(uniform_mech, (0.7, 0.1)) == pytest.approx(1 / 30, abs=1e-12)
    pts = np.array([[0.1, 0.1], [0.9, 0.9]])
    np.testing.assert_allclose(utility(uniform_mech, pts), [0.0, 1.8 - P_UNIFORM])


def test_uniform_allocations(uniform_mech):
    a = allocate(uniform_mech, (0.9, 0.2))
    assert (a.a1, a.a2, a.payment, a.region) == (1.0, 1.0, pytest.approx(P_UNIFORM), RegionName.BUNDLE)
    a = allocate(uniform_mech, (0.7, 0.1))
    assert (a.a1, a.a2, a.payment, a.region) == (1.0, 0.0, pytest.approx(2 / 3), RegionName.D1)
    assert math.copysign(1.0, a.a2) == 1.0
    a = allocate(uniform_mech, (0.05, 0.9))
    assert a.region is RegionName.D2 and a.payment == pytest.approx(2 / 3)
    assert allocate(uniform_mech, (0.2, 0.2)).region is RegionName.ZERO


def test_randomized_allocation(exp_mech):
    a = allocate(exp_mech, (0.9, 0.02))
    assert a.region is RegionName.D1
    assert 0.0 < a.a2 < 1.0
    assert a.payment == pytest.approx(float(exp_mech.s1(0.02)) + 0.02 * a.a2)


def test_allocation_is_utility_gradient(exp_mech):
    for x in [(0.9, 0.05), (0.05, 0.95), (0.7, 0.7)]:
        a = allocate(exp_mech, x)
        e = 1e-6
        g1 = (utility(exp_mech, (x[0] + e, x[1])) - utility(exp_mech, (x[0] - e, x[1]))) / (2 * e)
        g2 = (utility(exp_mech, (x[0], x[1] + e)) - utility(exp_mech, (x[0], x[1] - e))) / (2 * e)
        assert (a.a1, a.a2) == pytest.approx((g1, g2), abs=1e-5)
        assert a.a1 * x[0] + a.a2 * x[1] - a.payment == pytest.approx(utility(exp_mech, x), abs=1e-12)


@pytest.mark.parametrize("pair, value", [
    (("uniform", "uniform"), REV_UNIFORM),
    (("monomial:c=1", "monomial:c=1"), 0.84738),
    (("exp:lambda=1", "exp:lambda=1"), 0.42768),
    (("uniform", "exp:lambda=1"), 0.48828),
    (("powerlaw:alpha=2", "powerlaw:alpha=2"), 0.3832911626),
])
def test_revenue_values(pair, value):
    r = revenue(solved(*pair))
    assert r.rev_payment == pytest.approx(value, abs=1e-5)
    assert r.discrepancy < 1e-10


def test_zero_mechanism_revenue():
    one = BoundaryCurve.constant(1.0)
    zero = MechanismSolution(Uniform(), Uniform(), one, one, 2.0, 0.0, 0.0, Classification.EXACT, False)
    r = revenue(zero)
    assert r.rev_payment == pytest.approx(0.0, abs=1e-14)
    assert r.rev_functional == pytest.approx(0.0, abs=1e-12)


def test_uniform_revenue_monte_carlo():
    """10^7 uniform draws, payment read off the argmax menu item."""
    rng = np.random.default_rng(20240601)
    total, n, sq = 0.0, 0, 0.0
    s, p = 2 / 3, P_UNIFORM
    prices = np.array([0.0, s, s, p])
    for _ in range(10):
        x = rng.random((1_000_000, 2))
        u = np.stack([np.zeros(len(x)), x[:, 0] - s, x[:, 1] - s, x.sum(axis=1) - p])
        pay = prices[np.argmax(u, axis=0)]
        total += pay.sum()
        sq += (pay ** 2).sum()
        n += len(x)
    mean = total / n
    sigma = math.sqrt((sq / n - mean ** 2) / n)
    assert abs(mean - REV_UNIFORM) < 3 * sigma
    assert abs(revenue(solved("uniform")).rev_payment - REV_UNIFORM) < 1e-9


def test_uniform_menu_has_four_entries(uniform_mech):
    menu = extract_menu(uniform_mech)
    assert sorted(e.as_tuple() for e in menu) == sorted([
        (0.0, 0.0, 0.0), (1.0, 0.0, pytest.approx(2 / 3)), (0.0, 1.0, pytest.approx(2 / 3)),
        (1.0, 1.0, pytest.approx(P_UNIFORM))])


@pytest.mark.parametrize("pair", EXACT_PAIRS, ids=str)
def test_menu_reproduces_utility(pair):
    mech = solved(*pair)
    menu = extract_menu(mech)
    g = np.linspace(0, 1, 61)
    X1, X2 = np.meshgrid(g, g)
    err = np.max(np.abs(menu_utility(menu, X1, X2) - utility_xy(mech, X1, X2)))
    assert err < 1e-6


def test_menu_refused_for_upper_bound(powerlaw_mech):
    with pytest.raises(MechanismError):
        extract_menu(powerlaw_mech)


def test_convexify_exact_raises(uniform_mech):
    with pytest.raises(AlreadyConcave):
        convexify(uniform_mech)
    assert convexification_gap(uniform_mech.d1, uniform_mech.d2, uniform_mech) == 1.0


def test_convexify_powerlaw(powerlaw_mech):
    conv = convexify(powerlaw_mech)
    assert conv.classification is Classification.FEASIBLE_APPROX
    assert conv.s1.closed_form == "chord"
    x = powerlaw_mech.x2_star
    s0, sx = float(powerlaw_mech.s1(0.0)), float(powerlaw_mech.s1(x))
    t = np.linspace(0, x, 50)
    np.testing.assert_allclose(conv.s1(t), s0 + (sx - s0) * t / x, atol=1e-13)
    menu = extract_menu(conv)
    assert len(menu) == 4
    gap = convexification_gap(powerlaw_mech.d1, powerlaw_mech.d2, powerlaw_mech)
    assert 1.0 <= gap <= 1 + 1e-6


def test_convexify_gap_alpha_one_and_half():
    m = solved("powerlaw:alpha=1.5")
    gap = convexification_gap(m.d1, m.d2, m)
    assert 1.0 <= gap <= 1.01


def test_envelope_flattens_only_the_kink():
    # kinks on the sampling grid (multiples of 1/2048)
    xs = np.array([0.0, 0.25, 0.3125, 0.5, 1.0])
    ys = np.array([0.7, 0.675, 0.64375, 0.634375, 0.334375])
    curve = BoundaryCurve.from_function(lambda t: np.interp(t, xs, ys),
                                        lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    env = _envelope_curve(curve, 1.0)
    t = np.linspace(0, 1, 401)
    outside = (t <= 0.25) | (t >= 0.5)
    np.testing.assert_allclose(env(t[outside]), curve(t[outside]), atol=1e-12)
    inside = (t > 0.25) & (t < 0.5)
    assert np.all(env(t[inside]) >= curve(t[inside]) - 1e-12)
    np.testing.assert_allclose(env(0.375), 0.675 - 0.1625 * 0.125, atol=1e-12)


# --- properties over every Exact instance ------------------------------------

points = st.tuples(st.floats(0, 1), st.floats(0, 1))


@pytest.mark.parametrize("pair", EXACT_PAIRS, ids=str)
@settings(max_examples=60, deadline=None)
@given(x=points, y=points, lam=st.floats(0, 1))
def test_utility_convex_and_one_lipschitz(pair, x, y, lam):
    mech = solved(*pair)
    ux, uy = utility(mech, x), utility(mech, y)
    z = (lam * x[0] + (1 - lam) * y[0], lam * x[1] + (1 - lam) * y[1])
    assert utility(mech, z) <= lam * ux + (1 - lam) * uy + 1e-12
    assert abs(ux - uy) <= abs(x[0] - y[0]) + abs(x[1] - y[1]) + 1e-12


@pytest.mark.parametrize("pair", EXACT_PAIRS, ids=str)
@settings(max_examples=60, deadline=None)
@given(x=points)
def test_allocation_in_unit_square(pair, x):
    a = allocate(solved(*pair), x)
    assert 0.0 <= a.a1 <= 1.0 and 0.0 <= a.a2 <= 1.0
    assert a.payment >= -1e-15


@pytest.mark.parametrize("pair", EXACT_PAIRS, ids=str)
@settings(max_examples=40, deadline=None)
@given(x=points, y=points)
def test_truthful_report_is_optimal(pair, x, y):
    mech = solved(*pair)
    b = allocate(mech, y)
    assert utility(mech, x) >= b.a1 * x[0] + b.a2 * x[1] - b.payment - 1e-9
