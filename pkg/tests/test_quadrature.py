import math
from fractions import Fraction as F

import numpy as np
import pytest

from bergsparse.geometry import CarlesonBox, Interval
from bergsparse.quadrature import (NODES, W_GAUSS, W_KRONROD, Box, HalfDisk, QuadratureSpec,
                                   SingularIntegrandError, as_box, bergman_norm, check_alpha,
                                   compensated_sum, integrate, integrate_halfplane, measure_alpha,
                                   pullback_measure)
from bergsparse.symbols import parse

ALPHAS = [-0.5, 0.0, 1.0, 2.5]


def one(z):
    return np.ones(np.shape(z))


def test_rule_tables():
    assert math.isclose(W_KRONROD.sum(), 2.0, rel_tol=1e-15)
    assert math.isclose(W_GAUSS.sum(), 2.0, rel_tol=1e-15)
    # Gauss part is exact through degree 13, Kronrod through 22
    assert abs(np.dot(W_GAUSS, NODES**12) - 2 / 13) < 1e-14
    assert abs(np.dot(W_KRONROD, NODES**22) - 2 / 23) < 1e-14


def test_check_alpha():
    with pytest.raises(ValueError):
        check_alpha(-1)
    with pytest.raises(ValueError):
        check_alpha(float("nan"))
    assert check_alpha(0) == 0.0


def test_box_validation():
    with pytest.raises(ValueError):
        Box(0, 1, -1, 1)
    with pytest.raises(ValueError):
        Box(1, 1, 0, 1)


def test_as_box_accepts_geometry():
    b = as_box(CarlesonBox(Interval(F(-1), F(2))))
    assert b == Box(-1.0, 1.0, 0.0, 2.0)
    assert as_box((0, 1, 0, 1)) == Box(0.0, 1.0, 0.0, 1.0)


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("ell", [0.25, 1.0, 8.0])
def test_box_measure(alpha, ell):
    want = 2**alpha / math.pi * ell ** (alpha + 2)
    b = Box(-ell / 3, 2 * ell / 3, 0.0, ell)
    assert math.isclose(measure_alpha(b, alpha), want, rel_tol=1e-14)
    est = integrate(one, alpha, b, QuadratureSpec(rel_tol=1e-10))
    assert est.converged
    assert abs(est.value / want - 1) < 1e-9


@pytest.mark.parametrize("alpha", ALPHAS)
def test_half_disk_measure(alpha):
    d = HalfDisk(0.5, 2.0)
    est = integrate(one, alpha, d, QuadratureSpec(rel_tol=1e-10))
    assert abs(est.value / measure_alpha(d, alpha) - 1) < 1e-8


def test_half_disk_alpha_zero_is_area():
    assert math.isclose(measure_alpha(HalfDisk(0, 3), 0), 9 / 2, rel_tol=1e-14)


def test_polynomial_exact():
    # x^2 y over [0,2]x[0,1] against dA_0 = dx dy / pi
    est = integrate(lambda z: z.real**2 * z.imag, 0, Box(0, 2, 0, 1))
    assert abs(est.value - (8 / 3) * 0.5 / math.pi) < 1e-14


def test_complex_integrand():
    est = integrate(lambda z: z, 0, Box(-1, 1, 0, 1))
    assert isinstance(est.value, complex)
    assert abs(est.value.real) < 1e-15
    assert abs(est.value.imag - 1 / math.pi) < 1e-14


def test_singular_weight_converges():
    # 1/|z| on the unit half-disk: integral of dr dtheta / pi = 1
    est = integrate(lambda z: 1 / np.abs(z), 0, HalfDisk(0, 1), QuadratureSpec(rel_tol=1e-9))
    assert est.converged and abs(est.value - 1) < 1e-8


def test_nonfinite_samples_raise():
    with pytest.raises(SingularIntegrandError):
        integrate(lambda z: np.full(np.shape(z), np.inf), 0, Box(0, 1, 0, 1))


def test_positivity():
    est = integrate(lambda z: np.exp(-np.abs(z) ** 2), 1.0, Box(-3, 3, 0, 3))
    assert est.value > 0 and est.error_bound >= 0 and est.tail_estimate >= 0


@pytest.mark.parametrize("ya", [0.25, 1.0, 4.0])
def test_halfplane_with_power_tail(ya):
    f = lambda z: ya**2 / np.abs(z + 1j + 1j * ya) ** 4
    spec = QuadratureSpec(tail_model="power_law", decay=4.0, rel_tol=1e-8, truncation=(-8, 8, 8))
    est = integrate_halfplane(f, 0, spec)
    want = ya**2 / (4 * (1 + ya) ** 2)
    assert est.converged and abs(est.value / want - 1) < 1e-7
    assert est.tail_estimate > 0
    assert est.truncation[1] - est.truncation[0] > 16


def test_borderline_decay_is_divergent():
    spec = QuadratureSpec(tail_model="power_law", decay=2.0)
    est = integrate_halfplane(lambda z: 1 / np.abs(1j - z) ** 2, 0, spec)
    assert est.divergent and not est.converged and math.isnan(est.value)
    assert est.to_dict()["divergent"] == "divergent (borderline)"


def test_bergman_norm_of_kernel_power():
    f = lambda z: 1 / (z + 1j) ** 2
    spec = QuadratureSpec(tail_model="power_law", decay=4.0, rel_tol=1e-9)
    est = bergman_norm(f, 2, 0, spec)
    assert abs(est.value - 0.5) < 1e-8


def test_compensated_sum():
    assert compensated_sum([1e16, 1.0, -1e16]) == 1.0
    assert compensated_sum(np.array([1e16 + 1j, 1.0, -1e16])) == 1 + 1j


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_pullback_exact_matches_indicator(alpha):
    u, phi = parse("1"), parse("2*z + i")
    E = Box(-1, 3, 0.5, 4)
    exact = pullback_measure(E, u, phi, 2, alpha)
    # preimage is [-1/2, 3/2) x [0, 3/2)
    assert math.isclose(exact.value, measure_alpha(Box(-0.5, 1.5, 0, 1.5), alpha), rel_tol=1e-14)
    spec = QuadratureSpec(truncation=(-4, 4, 4), rel_tol=1e-5, abs_tol=1e-8, max_cells=60000,
                          min_cell=1e-7)
    approx = pullback_measure(E, u, phi, 2, alpha, spec, exact_affine=False)
    assert abs(approx.value / exact.value - 1) < 1e-3


def test_pullback_nonconstant_u():
    u, phi = parse("z + i"), parse("z + i")
    E = Box(-1, 1, 0, 2)
    est = pullback_measure(E, u, phi, 2, 0)
    # preimage [-1,1) x [0,1), |z+i|^2 = x^2 + (y+1)^2
    want = (2 / 3 * 1 + 2 * (8 - 1) / 3) / math.pi
    assert abs(est.value - want) < 1e-10


def test_pullback_empty_preimage():
    est = pullback_measure(Box(0, 1, 0, 1), parse("1"), parse("z + 2i"), 2, 0)
    assert est.value == 0.0 and est.converged
