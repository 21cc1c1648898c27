import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergsparse.carleson import TestFunction
from bergsparse.geometry import Interval, TruncatedBoxCollection
from bergsparse.quadrature import Box, QuadratureSpec, integrate
from bergsparse.sparse import (ExhaustingFamily, ExponentWindow, SparseEngine, SparseFormParams,
                               compactness_tail, default_collections, default_corpus,
                               dyadic_maximal, fractional_maximal, fractional_sparse_form,
                               gamma_average, kernel_domination_check, operator_norm_q,
                               operator_vs_sparse, sparse_form, sparse_infimum,
                               unweighted_sparse_form, z_pq)
from bergsparse.symbols import parse

U1, U0 = parse("1"), parse("0")
IDENT, SHIFT = parse("z"), parse("z+i")
SMALL = default_collections(-3, 2, (-4, 4))
UNIT = [TruncatedBoxCollection(1, 0, 0, Interval(F(0), F(1)))]


def ones(z):
    return np.ones(np.shape(z))


def zeros(z):
    return np.zeros(np.shape(z))


def test_z_pq_examples():
    assert z_pq(3.5, 4) == [1, 2, 3]
    assert z_pq(1, 1.5) == []
    assert ExponentWindow(2, 3).admissible == []
    assert ExponentWindow(2.5, 3).admissible == [1, 2]


@settings(max_examples=300, deadline=None)
@given(st.floats(1, 8), st.floats(0, 8))
def test_z_pq_brute_force(p, dq):
    q = p + dq
    brute = [N for N in range(1, math.ceil(q) + 2) if N >= 1 and N < p and p < q and q < p + N]
    assert z_pq(p, q) == brute


@pytest.mark.parametrize("gamma", [1.0, 1.25, 2.0, 7.0])
def test_conjugate_exponent_identity(gamma):
    prm = SparseFormParams(1, gamma, 2, 2)
    inv = 0.0 if math.isinf(prm.gamma_prime) else 1 / prm.gamma_prime
    assert abs(1 / gamma + inv - 1) < 1e-15
    assert prm.mu_exponent == pytest.approx(inv, abs=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        SparseFormParams(1, 1, 3, 2)
    with pytest.raises(ValueError):
        SparseFormParams(0, 1, 2, 2)
    with pytest.raises(ValueError):
        SparseFormParams(1, 0.5, 2, 2)
    with pytest.raises(ValueError):
        SparseFormParams(3, 1, 2, 2).check_general()
    assert SparseFormParams(1, 1.5, 2, 2).compactness_ok()
    assert not SparseFormParams(1, 2.5, 2, 2).compactness_ok()
    assert SparseFormParams(2, 3, 2, 2).compactness_ok()
    assert not SparseFormParams(2, 1, 2, 2).compactness_ok()


def test_exhausting_family():
    fam = ExhaustingFamily()
    assert fam.K(2) == (-2.0, 2.0, 0.5, 2.0)
    assert fam.contains(3, 1 + 2j) and not fam.contains(1, 1 + 2j)
    with pytest.raises(ValueError):
        fam.K(0)
    lefts = np.array([-10.0, 0.0, 10.0])
    assert list(fam.up_misses(2, lefts, 1.0)) == [True, False, True]
    assert fam.up_misses(2, lefts, 8.0).all()


def test_gamma_average_examples():
    Q = Box(0, 1, 0, 1)
    assert gamma_average(ones, Q, 3, 0) == pytest.approx(1, rel=1e-12)
    assert gamma_average(lambda z: z.imag, Q, 1, 0) == pytest.approx(0.5, rel=1e-10)
    assert gamma_average(lambda z: z.imag, Q, 2, 0) == pytest.approx(1 / math.sqrt(3), rel=1e-10)
    with pytest.raises(ValueError):
        gamma_average(ones, Q, 0.5, 0)


def test_single_box_forms():
    prm = SparseFormParams(1, 1.0, 2, 2)
    assert sparse_form(ones, U1, IDENT, prm, 0, UNIT).value == pytest.approx(1 / math.pi, rel=1e-13)
    assert unweighted_sparse_form(ones, 1, 2, 0, UNIT).value == pytest.approx(1 / math.pi, rel=1e-13)


def test_zero_function():
    prm = SparseFormParams(1, 1.5, 2, 2)
    assert sparse_form(zeros, U1, SHIFT, prm, 0, SMALL).value == 0
    assert fractional_sparse_form(zeros, 1, 2.5, 3, 0, SMALL).value == 0


def test_fractional_errors_name_constraint():
    with pytest.raises(ValueError, match="N<p<q<p\\+N"):
        fractional_sparse_form(ones, 1, 1, 1.5, 0, UNIT)
    with pytest.raises(ValueError, match="not admissible"):
        fractional_sparse_form(ones, 3, 2.5, 3, 0, UNIT)


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 1.0])
def test_engine_box_integrals_match_adaptive(alpha):
    tf = TestFunction(0.3 + 0.7j, 2, alpha)
    eng = SparseEngine(tf, alpha, SMALL)
    spec = QuadratureSpec(rel_tol=1e-11)
    for gi, level in [(0, 2), (1, 0), (2, -3)]:
        T = eng.tables[gi]
        vals = eng.box_integral(1.5, gi, level)
        for k in np.flatnonzero(T.in_window[level])[:4]:
            L, ell = float(T.lefts[level][k]), 2.0**level
            want = integrate(lambda z: tf.abs_pow(z, 1.5), alpha, Box(L, L + ell, 0, ell),
                             spec.with_(focus=((0.3, 0.7), (L, ell))))
            assert abs(vals[k] / want.value - 1) < 1e-9


def test_engine_generic_callable_agrees():
    tf = TestFunction(1j, 2)
    a = SparseEngine(tf, 0, SMALL)
    b = SparseEngine(lambda z: tf(z), 0, SMALL)
    for level in (-3, 0, 2):
        assert np.allclose(a.box_integral(2, 0, level), b.box_integral(2, 0, level), rtol=1e-12)


def test_swap_symmetry():
    tf = TestFunction(0.5 + 1j, 4)
    v1 = unweighted_sparse_form(tf, 1, 4, 0, SMALL).value
    v3 = unweighted_sparse_form(tf, 3, 4, 0, SMALL).value
    assert v1 == pytest.approx(v3, rel=1e-14)


def test_gamma_one_specialization_term_by_term():
    tf = TestFunction(0.5 + 1j, 2)
    a = sparse_form(tf, U1, IDENT, SparseFormParams(1, 1.0, 2, 2), 0, SMALL, dump=True)
    b = unweighted_sparse_form(tf, 1, 2, 0, SMALL, dump=True)
    assert a.rows == b.rows and a.value == b.value


def test_truncation_monotone():
    tf = TestFunction(1j, 2)
    prm = SparseFormParams(1, 1.5, 2, 2)
    small = sparse_form(tf, U1, SHIFT, prm, 0, default_collections(-2, 1, (-4, 4))).value
    big = sparse_form(tf, U1, SHIFT, prm, 0, default_collections(-3, 2, (-8, 8))).value
    assert big >= small > 0


def test_mu_factor_for_translation():
    # mu(Q) vanishes for boxes of side <= 1 under z -> z + i
    tf = TestFunction(1j, 2)
    r = sparse_form(tf, U1, SHIFT, SparseFormParams(1, 2.0, 2, 2), 0, SMALL, dump=True)
    for grid, level, left, mu, *_ in r.rows:
        ell = 2.0**level
        want = 0.0 if ell <= 1 else math.sqrt(ell * (ell - 1) / math.pi)
        assert mu == pytest.approx(want, rel=1e-14, abs=0)


def test_sparse_infimum_picks_minimum():
    tf = TestFunction(1j, 3)
    out = sparse_infimum(tf, U1, IDENT, 3, 3, 1.0, 0, SMALL)
    assert set(out["per_N"]) == {1, 2, 3}
    assert out["value"] == min(out["per_N"].values())


def test_operator_norm():
    tf = TestFunction(2 + 1j, 2)
    assert operator_norm_q(tf, U1, IDENT, 2, 0).value == pytest.approx(0.25, rel=1e-7)
    assert operator_norm_q(tf, U0, SHIFT, 2, 0).value == 0
    # translation testing closed form with y_a = 1
    assert operator_norm_q(TestFunction(1j, 2), U1, SHIFT, 2, 0).value == pytest.approx(1 / 16, rel=1e-7)


def test_operator_vs_sparse_zero_symbol_and_cache():
    corpus = [TestFunction(1j, 2), TestFunction(2j, 2)]
    cache = {}
    out = operator_vs_sparse(corpus, U0, SHIFT, 2, 2, 0, collections=SMALL, cache=cache)
    assert all(r["lhs"] == 0 for r in out["rows"]) and out["max_ratio"] == 0
    assert len(cache) == 2
    again = operator_vs_sparse(corpus, U1, IDENT, 2, 2, 0, collections=SMALL, cache=cache)
    assert len(cache) == 2 and again["max_ratio"] > 0


def test_default_corpus():
    c = default_corpus(2)
    assert len(c) == 12 and len({f.apex for f in c}) == 12


def test_dyadic_maximal_examples():
    col = default_collections(-4, 4, (-16, 16))[0]
    assert dyadic_maximal(ones, 1, 0.3 + 0.2j, 0, collection=col) == pytest.approx(1, rel=1e-12)

    def ind(z):
        return ((z.real >= 0) & (z.real < 1) & (z.imag < 1)).astype(float)
    v = dyadic_maximal(ind, 1, 2 + 0.5j, 0, collection=col)
    assert v == pytest.approx(1 / 16, rel=1e-6)


def test_dyadic_maximal_sublinear():
    col = default_collections(-3, 3, (-8, 8))[0]
    f = TestFunction(1j, 2)
    g = TestFunction(-1 + 0.5j, 2)
    for z in (0.2 + 0.3j, -1 + 1j, 2.5 + 0.1j):
        lhs = dyadic_maximal(lambda w: f(w) + g(w), 1, z, 0, collection=col)
        rhs = dyadic_maximal(f, 1, z, 0, collection=col) + dyadic_maximal(g, 1, z, 0, collection=col)
        assert lhs <= rhs * (1 + 1e-9)


def test_fractional_maximal():
    col = default_collections(-3, 3, (-8, 8))[1]
    f = TestFunction(1j, 2)
    z = 0.4 + 0.3j
    assert fractional_maximal(zeros, 2, z, 0, 1.0, collection=col) == 0
    a = fractional_maximal(f, 2, z, 0, 1e-9, collection=col)
    b = dyadic_maximal(f, 2, z, 0, collection=col)
    assert a == pytest.approx(b, rel=1e-7)
    with pytest.raises(ValueError):
        fractional_maximal(f, 2, z, 0, 2.0, collection=col)
    # f = 1: the largest enumerated ancestor wins
    v = fractional_maximal(ones, 1, 0.5 + 0.25j, 0, 1.0, collection=default_collections(-3, 3, (-8, 8))[0])
    assert v == pytest.approx((64 / math.pi) ** 0.5, rel=1e-10)


def test_kernel_domination_constant_function():
    out = kernel_domination_check(None, U1, IDENT, 2, 2, 1.0, 0, 0.3 + 0.5j, SMALL)
    assert out["lhs"] > 0 and out["rhs"] > 0 and out["converged"]


def test_kernel_domination_uniform_in_zeta():
    rng = np.random.default_rng(5)
    f = TestFunction(1j, 2)
    eng = SparseEngine(f, 0, SMALL)
    ratios = []
    for _ in range(20):
        zeta = complex(rng.uniform(-2, 2), rng.uniform(0.2, 2))
        out = kernel_domination_check(f, U1, SHIFT, 2, 1, 1.5, 0, zeta, SMALL, engine=eng)
        ratios.append(out["ratio"])
    assert max(ratios) / min(ratios) < 10


def test_compactness_tail_empty_sum_and_errors():
    fs = [TestFunction(1j, 2)]
    prm = SparseFormParams(1, 1.5, 2, 2)
    out = compactness_tail(fs, U1, SHIFT, prm, 0, n_values=[1, 2, 64], collections=SMALL)
    assert out["tail"][-1] == 0 and out["tail"][0] >= out["tail"][1] > 0
    with pytest.raises(ValueError):
        compactness_tail(fs, U1, SHIFT, SparseFormParams(1, 1.0, 2, 2), 0)
