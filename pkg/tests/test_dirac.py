import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from oracles import sphere_gamma
from signedchord.dirac import (TestFunction, UnboundedWeight, cross_check, dirac_chords,
                               dirac_gamma, dirac_pairs, dirac_radii, lambda_phi)
from signedchord.estimators import GammaTable, agrees, estimate_distances

V_SPHERE = 4 * math.pi / 3
V_SHELL = 7 * math.pi / 6


def test_lambda_phi_examples():
    assert lambda_phi(TestFunction.power(0), 3.0) == 4.5
    assert lambda_phi(TestFunction.power(1), 2.0) == pytest.approx(8 / 6)
    assert lambda_phi(TestFunction.exp(1.0), 1.0) == pytest.approx(math.exp(-1))


FUNCS = [TestFunction.exp(1.0), TestFunction.exp(3.5, 2.0), TestFunction.power(0),
         TestFunction.power(2, 4 * math.pi), TestFunction.power(3), TestFunction.indicator(0.5),
         TestFunction.table([0, 0.5, 1.0, 2.0], [0.0, 1.0, 0.25, 0.5])]


@pytest.mark.parametrize("phi", FUNCS, ids=str)
@given(x=st.floats(0.0, 3.0))
def test_integrals_match_quadrature(phi, x):
    brk = [p for p in (phi.param if phi.kind == "ind" else None, *phi.grid) if p is not None and p < x]
    Phi = quad(lambda r: float(phi(r)), 0, x, points=brk or None, limit=200)[0] if x > 0 else 0.0
    Lam = quad(lambda r: (x - r) * float(phi(r)), 0, x, points=brk or None, limit=200)[0] if x > 0 else 0.0
    assert float(phi.antiderivative(x)) == pytest.approx(Phi, rel=1e-9, abs=1e-12)
    assert float(phi.lambda_phi(x)) == pytest.approx(Lam, rel=1e-9, abs=1e-12)


def test_exp_lambda_small_argument_is_accurate():
    phi = TestFunction.exp(1.0)
    x = np.array([1e-9, 1e-6, 1e-4, 9.9e-4, 1.1e-3])
    # exact: sum_{k>=2} (-1)^k x^k / k!
    ref = np.array([math.fsum((-1) ** k * xi ** k / math.factorial(k) for k in range(2, 12))
                    for xi in x])
    assert np.allclose(phi.lambda_phi(x), ref, rtol=1e-12, atol=0)


@pytest.mark.parametrize("text,kind,param,scale", [
    ("exp:1.0", "exp", 1.0, 1.0), ("pow:2", "pow", 2.0, 1.0), ("ind:0.5", "ind", 0.5, 1.0),
    ("4pi*pow:2", "pow", 2.0, 4 * math.pi), ("2.5*exp:3", "exp", 3.0, 2.5), ("pi*pow:0", "pow", 0.0, math.pi),
])
def test_parse(text, kind, param, scale):
    f = TestFunction.parse(text)
    assert (f.kind, f.param, f.scale) == (kind, param, pytest.approx(scale))
    assert str(f) == text


def test_parse_table(tmp_path):
    p = tmp_path / "phi.csv"
    p.write_text("0,0\n1,1\n2,4\n")
    f = TestFunction.parse(f"table:{p}")
    assert float(f(1.5)) == 2.5 and f.weight_bounded is False


@pytest.mark.parametrize("text", ["exp", "exp:-1", "pow:1.5", "cosh:1", "x*pow:2", "pow:two"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        TestFunction.parse(text)


def test_weight_boundedness():
    assert TestFunction.power(2).weight_bounded and TestFunction.power(5).weight_bounded
    assert not TestFunction.power(1).weight_bounded
    assert not TestFunction.exp(1).weight_bounded and not TestFunction.indicator(1).weight_bounded
    assert TestFunction.table([0, 1, 2], [0, 0, 1]).weight_bounded


def test_pairs_gate_and_empty(unit_sphere, plan):
    with pytest.raises(UnboundedWeight):
        dirac_pairs(unit_sphere, TestFunction.exp(1.0), plan, 10)
    with pytest.raises(ValueError):
        dirac_pairs(unit_sphere, TestFunction.power(2), plan, 0)


def test_pairs_volume_is_exact(unit_sphere, plan):
    # phi = 4 pi x^2 makes every pair weigh V
    e = dirac_pairs(unit_sphere, TestFunction.parse("4pi*pow:2"), plan, 1000)
    assert e.value == pytest.approx(V_SPHERE, rel=1e-12) and e.stderr < 1e-12


def test_pairs_mean_distance(unit_sphere, plan):
    e = dirac_pairs(unit_sphere, TestFunction.parse("4pi*pow:3"), plan, 500_000)
    assert agrees(e.value, e.stderr, V_SPHERE * 36 / 35)[0]


def test_sphere_routes_phi_one(unit_sphere, plan):
    one = TestFunction.power(0)
    r = dirac_radii(unit_sphere, one, plan, 200_000)
    assert agrees(r.value, r.stderr, 0.75)[0]
    c = dirac_chords(unit_sphere, one, plan, 200_000)
    assert agrees(c.value, c.stderr, 0.75)[0]
    g = dirac_gamma(estimate_distances(unit_sphere, plan, 500_000, 64).gamma_table(V_SPHERE), one)
    assert agrees(g.value, g.stderr, 0.75)[0]


def _table(counts, n):
    edges = np.linspace(0.0, 2.0, len(counts) + 1)
    c = np.asarray(counts, np.int64)
    return GammaTable(edges[:-1], edges[1:], c * 0.0, c * 0.0, c, n, V_SPHERE)


def test_gamma_route_stderr_is_per_pair_variance():
    # every bin occupied: the floor is inactive and the error is the
    # standard error of the mean over per-pair contributions n * a_bin
    counts, n = [3, 5, 9, 2], 30
    t = _table(counts, n)
    phi = TestFunction.exp(1.0)
    a = t.weights * (phi.antiderivative(t.hi) - phi.antiderivative(t.lo))
    per_pair = np.concatenate([np.full(c, n * ai) for c, ai in zip(counts, a)]
                              + [np.zeros(n - sum(counts))])
    g = dirac_gamma(t, phi)
    assert g.value == pytest.approx(per_pair.mean())
    assert g.stderr == pytest.approx(per_pair.std() / math.sqrt(n))


def test_gamma_route_floors_empty_bins():
    phi = TestFunction.exp(1.0)
    full, empty = _table([1, 2, 3, 5, 4, 3, 2, 1], 30), _table([0, 2, 3, 5, 4, 3, 2, 1], 30)
    a0 = (full.weights * (phi.antiderivative(full.hi) - phi.antiderivative(full.lo)))[0]
    g_full, g_empty = dirac_gamma(full, phi), dirac_gamma(empty, phi)
    e0 = 1.0 / full.weights[0]
    assert e0 < 1.0
    # an empty bin keeps the variance of its gamma = 1 expected count
    assert g_empty.stderr ** 2 - (g_full.stderr ** 2 - a0 ** 2 * (1 - e0)) == pytest.approx(
        (g_full.value ** 2 - g_empty.value ** 2) / 30)
    assert g_full.value - g_empty.value == pytest.approx(a0)


def test_sphere_routes_exp(unit_sphere, plan):
    ref = quad(lambda x: float(sphere_gamma(x)) * math.exp(-x), 0, 2)[0]
    cc = cross_check(unit_sphere, TestFunction.exp(1.0), plan, 200_000, bins=64, reference=ref)
    assert set(cc.estimates) == {"gamma", "radii", "chords"}
    assert cc.passed, cc.to_json()


def test_chords_fourth_moment_normalisation(unit_shell, plan):
    phi = TestFunction.parse("4pi*pow:2")
    e = dirac_chords(unit_shell, phi, plan, 100_000, ell="fourth_moment")
    # the empirical normalisation makes this route reproduce V identically
    assert e.value == pytest.approx(V_SHELL, rel=1e-12)
    c = dirac_chords(unit_shell, phi, plan, 100_000)
    assert agrees(c.value, c.stderr, V_SHELL)[0]
    with pytest.raises(ValueError):
        dirac_chords(unit_shell, phi, plan, 10, ell="other")


def test_shell_cross_check_x2(unit_shell, plan):
    cc = cross_check(unit_shell, TestFunction.power(2), plan, 200_000, bins=64)
    assert set(cc.estimates) == {"gamma", "radii", "chords", "pairs"}
    assert cc.passed, cc.to_json()


def test_cross_check_unknown_method(unit_shell, plan):
    with pytest.raises(ValueError):
        cross_check(unit_shell, TestFunction.power(2), plan, 10, methods=("gamma", "magic"))
