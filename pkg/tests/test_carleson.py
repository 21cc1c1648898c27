import math
from fractions import Fraction as F

import numpy as np
import pytest

from bergsparse.carleson import (ApexLattice, TestFunction, boundedness_certificate,
                                 boundedness_sweep, carleson_intensity, default_escape_sequences,
                                 eval_test_function, map_ordered, mean_value_check,
                                 reproducing_check, test_function_norm,
                                 test_function_norm_closed_form, testing_condition_value,
                                 vanishing_probe)
from bergsparse.geometry import Interval, whitney_decompose
from bergsparse.quadrature import QuadratureSpec
from bergsparse.symbols import parse

U1 = parse("1")
SHIFT = parse("z+i")
IDENT = parse("z")
SMALL = ApexLattice(xs=(-1.0, 0.0, 1.0), ys=(0.25, 1.0, 4.0))


def test_test_function_values():
    tf = TestFunction(1j, 2)
    assert eval_test_function(tf, 1j) == pytest.approx(1 / (2j) ** 2)
    assert tf.exponent == 2
    assert TestFunction(1j, 2, alpha=1).exponent == 3
    with pytest.raises(ValueError):
        TestFunction(-1j, 2)
    with pytest.raises(ValueError):
        TestFunction(1j, 0.5)


def test_abs_pow_matches_modulus():
    tf = TestFunction(0.5 + 2j, 3, alpha=0.5)
    z = np.array([1j, 2 + 0.1j, -4 + 9j])
    assert np.allclose(tf.abs_pow(z, 1.7), np.abs(tf(z)) ** 1.7, rtol=1e-13)


@pytest.mark.parametrize("alpha,want", [(0, 0.25), (1, 0.125)])
def test_norm_closed_form_known_values(alpha, want):
    assert math.isclose(test_function_norm_closed_form(alpha), want, rel_tol=1e-14)


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 1.0, 2.5])
def test_norm_quadrature_matches_closed_form(alpha):
    tf = TestFunction(3 + 0.5j, 2, alpha)
    est = test_function_norm(tf, QuadratureSpec(rel_tol=1e-7))
    assert abs(est.value / test_function_norm_closed_form(alpha) - 1) < 1e-5


@pytest.mark.parametrize("ya", [0.25, 1.0, 4.0, 100.0])
def test_translation_testing_closed_form(ya):
    est = testing_condition_value(U1, SHIFT, 2, 2, 0, complex(0, ya))
    assert est.converged
    assert abs(est.value / (ya**2 / (4 * (1 + ya) ** 2)) - 1) < 1e-6


def test_identity_testing_is_norm():
    est = testing_condition_value(U1, IDENT, 2, 2, 0, 5 + 3j)
    assert abs(est.value - 0.25) < 1e-6


def test_zero_weight_short_circuit():
    est = testing_condition_value(parse("0"), SHIFT, 2, 2, 0, 1j)
    assert est.value == 0 and est.cells_used == 0


def test_testing_requires_q_ge_p():
    with pytest.raises(ValueError):
        testing_condition_value(U1, SHIFT, 3, 2, 0, 1j)


def test_carleson_intensity_translation():
    # the tent pulls back to [x - y/2, x + y/2) x [0, y - 1), so the ratio is (y - 1)/y
    a = 0.5 + 3j
    est = carleson_intensity(U1, SHIFT, 2, 2, 0, a)
    assert math.isclose(est.value, 2 / 3, rel_tol=1e-14)
    assert carleson_intensity(U1, SHIFT, 2, 2, 0, 0.5j).value == 0


def test_lattice_refinement():
    lat = ApexLattice(xs=(-2.0, 0.0, 2.0), ys=(0.5, 1.0, 2.0))
    r = lat.refined()
    assert r.xs[0] == -4 and r.xs[-1] == 4 and len(r.xs) == 9
    assert math.isclose(r.ys[0], 0.25) and math.isclose(r.ys[-1], 4.0) and len(r.ys) == 9
    assert len(lat) == 9 and lat.points()[0] == complex(-2, 0.5)


def test_certificate_translation_bounded():
    # the values approach 1/4 from below; the lattice must sit on the plateau
    lat = ApexLattice(xs=(-1.0, 0.0, 1.0), ys=(16.0, 64.0, 256.0))
    cert = boundedness_certificate(U1, SHIFT, 2, 2, 0, lat)
    assert cert.verdict.startswith("bounded")
    assert cert.supremum == pytest.approx(256**2 / (4 * 257**2), rel=1e-6)
    assert len(cert.rows()) == len(lat)
    d = cert.to_dict()
    assert d["quantity"] == "testing" and len(d["supremum_history"]) == 2


def test_certificate_unbounded_for_p_less_than_q():
    cert = boundedness_certificate(U1, IDENT, 2, 4, 0, SMALL)
    assert cert.verdict.startswith("unbounded")
    assert cert.refined_supremum > 2 * cert.supremum


def test_sweep_rejects_bad_beta():
    with pytest.raises(ValueError):
        boundedness_sweep(U1, SHIFT, 2, 3, 0, [1.5])


def test_sweep_on_translation():
    lat = ApexLattice(xs=(0.0,), ys=(1.0, 4.0))
    out = boundedness_sweep(U1, SHIFT, 2, 3, 0, [2, 2.5, 3], lat)
    assert len(out["suprema"]) == 3 and out["monotone_in_beta"]


def test_vanishing_probe_translation_not_compact():
    seqs = {k: v[::3] for k, v in default_escape_sequences(9).items()}
    prof = vanishing_probe(U1, SHIFT, 2, 2, 0, seqs)
    assert prof.vanishes["to_boundary"] and not prof.vanishes["to_infinity"]
    assert prof.verdict.startswith("not compact")
    assert prof.decay["to_boundary"] == pytest.approx(2, abs=0.1)


def test_map_ordered_threads_preserve_order():
    items = list(range(50))
    assert map_ordered(lambda v: v * v, items, 4) == [v * v for v in items]


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_reproducing_constant(alpha):
    tf = TestFunction(0.3 + 1.2j, 2, alpha)
    pts = [1j, 0.5 + 2j, -1 + 0.7j]
    out = reproducing_check(tf, pts, alpha, QuadratureSpec(rel_tol=1e-8))
    assert out["dispersion"] < 1e-6
    assert abs(out["estimate"] - 1) < 1e-5


def test_mean_value_check_bounded():
    tf = TestFunction(1j, 2)
    rs = whitney_decompose(Interval(F(-1), F(2)), 3)
    vals = [mean_value_check(tf, r, 0) for r in rs]
    assert all(0 < v < 10 for v in vals)
