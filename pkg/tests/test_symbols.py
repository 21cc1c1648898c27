import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergsparse.symbols import (BinOp, Call, Const, ExpressionError, Neg, Pow, Var, affine_symbol,
                                holomorphy_residual, mobius_symbol, parse, parse_weight, to_text,
                                verify_self_map)


def test_translation_ast():
    e = parse("z + i")
    assert e.ast == BinOp("+", Var(), Const(1j))
    assert e.affine() == (1, 1j)


def test_mobius_parses():
    e = parse("(2*z + i)/(z + 2*i)")
    assert isinstance(e.ast, BinOp) and e.ast.op == "/"
    assert e.affine() is None


@pytest.mark.parametrize("text,z,want", [
    ("z+i", 1j, 2j),
    ("1/z", 1 + 1j, (1 - 1j) / 2),
    ("z^2", 1 + 1j, 2j),
    ("-z^2", 1j, 1),
    ("2i*z", 1j, -2),
    ("z^0.5", -1 + 0j, 1j),
    ("z^-1", 2j, -0.5j),
])
def test_eval_examples(text, z, want):
    assert abs(parse(text).at(z) - want) < 1e-14


@pytest.mark.parametrize("text,offset", [
    ("conj(z)", 0),
    ("abs(z)", 0),
    ("z +* 1", 3),
    ("(z + 1", 6),
    ("z ^ z", 4),
    ("z $ 1", 2),
    ("", 0),
])
def test_errors_carry_offset(text, offset):
    with pytest.raises(ExpressionError) as info:
        parse(text)
    assert info.value.offset == offset
    assert f"byte {offset}" in str(info.value)


def test_offset_counts_bytes():
    with pytest.raises(ExpressionError) as info:
        parse("é + z")
    assert info.value.offset == 0
    with pytest.raises(ExpressionError) as info:
        parse("z + é")
    assert info.value.offset == 4


def test_weight_functions():
    w = parse_weight("indisk(z)/abs(z)")
    vals = w(np.array([0.5j, 2j, 0.3 + 0.4j]))
    assert np.allclose(vals, [2.0, 0.0, 2.0])
    assert parse_weight("max0(re(z))")(-1 + 1j) == 0
    assert parse_weight("im(z)^2")(3 + 2j) == 4
    assert parse_weight("1").constant() is None


def test_constant_and_affine():
    assert parse("3").constant() == 3
    assert parse("2*(z - 1) + i").affine() == (2, -2 + 1j)
    assert parse("z*z").affine() is None


def test_self_map_examples():
    r = verify_self_map(parse("z+i"))
    assert r.ok and abs(r.min_imag - (1e-3 + 1)) < 1e-12
    r = verify_self_map(parse("z-2i"), [1j, 3j])
    assert not r.ok and r.violations[0] == (0.0, 1.0, -1.0)
    assert verify_self_map(parse("z")).ok


def test_builtin_catalog_matches_hand_values():
    rng = np.random.default_rng(0)
    z = rng.uniform(-10, 10, 100) + 1j * rng.uniform(0.01, 10, 100)
    a, b = 2.5, 1 + 0.5j
    assert np.allclose(affine_symbol(a, b)(z), a * z + b, rtol=1e-14)
    m = (2.0, 1.0, -1.0, 3.0)
    want = (m[0] * z + m[1]) / (m[2] * z + m[3])
    assert np.allclose(mobius_symbol(*m)(z), want, rtol=1e-14)


def test_mobius_self_maps():
    rng = np.random.default_rng(1)
    for _ in range(25):
        a, b, c, d = rng.normal(size=4)
        if a * d - b * c <= 0:
            a, b = -a, -b
        assert verify_self_map(mobius_symbol(a, b, c, d)).ok


def test_holomorphy_residual():
    pts = np.array([1j, 2 + 0.5j, -3 + 4j])
    assert holomorphy_residual(parse("(2*z+i)/(z+2*i)"), pts) < 1e-6
    assert holomorphy_residual(lambda z: np.conj(z), pts) > 0.5


def test_real_power_principal_branch():
    e = parse("(z+1)^-1.5")
    z = 0.3 + 2j
    assert abs(e.at(z) - cmath.exp(-1.5 * cmath.log(z + 1))) < 1e-14


# random trees for the round trip

# the parser only produces nonnegative real or imaginary literals
consts = st.builds(lambda r, imag: Const(complex(0, r) if imag else complex(r, 0)),
                   st.floats(0, 100, allow_nan=False, allow_subnormal=False), st.booleans())
leaves = st.one_of(st.just(Var()), consts)


def _grow(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from("+-*/"), children, children),
        st.builds(Pow, children, st.one_of(st.integers(-4, 4), st.sampled_from([0.5, -1.5, 2.25]))),
    )


trees = st.recursive(leaves, _grow, max_leaves=12)
weight_trees = st.recursive(
    leaves, lambda ch: st.one_of(_grow(ch), st.builds(Call, st.sampled_from(["abs", "re", "im", "max0", "indisk"]), ch)),
    max_leaves=10)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_round_trip(tree):
    assert parse(to_text(tree)).ast == tree


@settings(max_examples=200, deadline=None)
@given(weight_trees)
def test_round_trip_weights(tree):
    assert parse_weight(to_text(tree)).ast == tree
