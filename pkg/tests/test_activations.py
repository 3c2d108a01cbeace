import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from sparseland import Activation, activation_named

ALL_KINDS = [
    Activation.linear(),
    Activation.relu(),
    Activation.leaky_relu(0.01),
    Activation.leaky_relu(0.2),
    Activation.elu(1.0),
    Activation.elu(0.7),
    Activation.tanh(),
    Activation.sigmoid(),
    Activation.shifted_sigmoid(),
    Activation.softplus(),
    Activation.polynomial((0.5, 1.0, 0.25)),
    Activation.polynomial((0.1, 1.0, -0.5, 1.0 / 3)),
]

Z = sp.symbols("z")


def sympy_expr(act):
    """Symbolic counterpart of each activation (smooth kinds only)."""
    if act.kind == "linear":
        return Z
    if act.kind == "tanh":
        return sp.tanh(Z)
    if act.kind == "sigmoid":
        return 1 / (1 + sp.exp(-Z))
    if act.kind == "shifted_sigmoid":
        return 1 / (1 + sp.exp(-Z)) - sp.Rational(1, 2)
    if act.kind == "softplus":
        return sp.log(1 + sp.exp(Z))
    if act.kind == "polynomial":
        return sum(sp.Rational(c).limit_denominator(10**12) * Z**k
                   for k, c in enumerate(act.coeffs))
    raise ValueError(act.kind)


# ---------------------------------------------------------------------------
# Taylor data: exact fractions against a symbolic oracle
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["tanh", "sigmoid", "shifted_sigmoid", "linear"])
def test_taylor_fractions_match_sympy(kind):
    act = activation_named(kind)
    expr = sympy_expr(act)
    for k in range(9):
        want = sp.diff(expr, Z, k).subs(Z, 0)
        got = act.taylor_fraction(k)
        assert got == Fraction(int(sp.nsimplify(want).p), int(sp.nsimplify(want).q)), (kind, k)


def test_softplus_taylor():
    act = Activation.softplus()
    # order 0 is log 2: irrational, flagged by the None marker
    assert act.taylor_fraction(0) is None
    assert act.taylor_at_zero(0) == pytest.approx(math.log(2), abs=1e-15)
    assert act.taylor_nonzero(0)
    expr = sympy_expr(act)
    for k in range(1, 9):
        want = sp.diff(expr, Z, k).subs(Z, 0)
        assert act.taylor_fraction(k) == Fraction(int(sp.nsimplify(want).p),
                                                  int(sp.nsimplify(want).q)), k


def test_taylor_known_values():
    # frozen spot values: tanh'''(0) = -2, sigmoid'(0) = 1/4
    assert Activation.tanh().taylor_fraction(3) == Fraction(-2)
    assert Activation.sigmoid().taylor_fraction(1) == Fraction(1, 4)
    assert Activation.shifted_sigmoid().taylor_fraction(0) == 0
    assert Activation.sigmoid().taylor_fraction(0) == Fraction(1, 2)
    # even tanh derivatives vanish
    for k in (0, 2, 4, 6):
        assert Activation.tanh().taylor_fraction(k) == 0


def test_polynomial_taylor_is_scaled_coeff():
    act = Activation.polynomial((2.0, 0.0, 1.5))
    assert act.taylor_fraction(0) == Fraction(2)
    assert act.taylor_fraction(1) == 0
    assert act.taylor_fraction(2) == Fraction(3)  # 1.5 * 2!
    assert act.taylor_fraction(7) == 0


def test_taylor_rejects_nonanalytic():
    for name in ("relu", "leaky_relu", "elu"):
        with pytest.raises(ValueError):
            activation_named(name).taylor_fraction(1)


# ---------------------------------------------------------------------------
# values and derivatives
# ---------------------------------------------------------------------------

def test_values_match_reference_grid():
    z = np.linspace(-6, 6, 241)
    for act in ALL_KINDS:
        got = act(z)
        if act.kind == "relu":
            want = np.where(z > 0, z, 0.0)
        elif act.kind == "leaky_relu":
            want = np.where(z > 0, z, act.slope * z)
        elif act.kind == "elu":
            want = np.where(z > 0, z, act.alpha * (np.exp(z) - 1))
        elif act.kind == "linear":
            want = z
        elif act.kind == "polynomial":
            want = sum(c * z**k for k, c in enumerate(act.coeffs))
        else:
            f = sp.lambdify(Z, sympy_expr(act), "numpy")
            want = f(z)
        assert np.allclose(got, want, atol=1e-12), act.kind


def test_extreme_arguments_do_not_overflow():
    z = np.array([-745.0, -710.0, 710.0, 745.0])
    with np.errstate(over="raise"):
        assert np.all(np.isfinite(Activation.softplus()(z)))
        assert np.all(np.isfinite(Activation.sigmoid()(z)))
        assert np.all(np.isfinite(Activation.elu()(z)))
    assert Activation.softplus()(np.array([745.0]))[0] == 745.0
    assert Activation.sigmoid()(np.array([-745.0]))[0] < 1e-300
    assert Activation.sigmoid()(np.array([745.0]))[0] == 1.0


def test_derivative_matches_fd():
    zs = np.array([-3.0, -1.2, -0.4, 0.3, 0.9, 2.5])  # away from kinks
    h = 1e-6
    for act in ALL_KINDS:
        fd = (act(zs + h) - act(zs - h)) / (2 * h)
        assert np.allclose(act.derivative(zs), fd, atol=5e-6), act.kind


def test_derivative_kink_convention():
    # documented: relu-family derivatives take the z > 0 branch at 0
    assert Activation.relu().derivative(np.array([0.0]))[0] == 0.0
    assert Activation.leaky_relu(0.3).derivative(np.array([0.0]))[0] == 0.3
    assert Activation.elu(2.0).derivative(np.array([0.0]))[0] == 2.0


def test_scalar_and_array_agree():
    for act in ALL_KINDS:
        assert float(act(0.7)) == pytest.approx(float(act(np.array([0.7]))[0]), abs=0)


# ---------------------------------------------------------------------------
# range and inversion
# ---------------------------------------------------------------------------

def test_contains():
    assert Activation.tanh().contains(0.5) and not Activation.tanh().contains(1.0)
    assert Activation.sigmoid().contains(0.25) and not Activation.sigmoid().contains(-0.1)
    assert Activation.shifted_sigmoid().contains(0.49) and not Activation.shifted_sigmoid().contains(0.5)
    assert Activation.relu().contains(0.0) and not Activation.relu().contains(-1e-9)
    assert Activation.elu(1.0).contains(-0.9) and not Activation.elu(1.0).contains(-1.0)
    assert Activation.softplus().contains(1e-8) and not Activation.softplus().contains(0.0)
    assert Activation.linear().contains(-1e9)


@given(st.floats(min_value=-20, max_value=20))
@settings(max_examples=60, deadline=None)
def test_inverse_roundtrip(z):
    for act in (Activation.tanh(), Activation.sigmoid(), Activation.shifted_sigmoid(),
                Activation.softplus(), Activation.linear(), Activation.leaky_relu(0.1),
                Activation.elu(1.3)):
        y = float(act(z))
        if not act.contains(y):  # saturation can round onto the boundary
            continue
        # value-space roundtrip is well conditioned everywhere
        assert float(act(act.inverse(y))) == pytest.approx(y, rel=1e-9, abs=1e-12), act.kind
        if abs(z) <= 5:  # z-space only where the map is not saturated
            assert act.inverse(y) == pytest.approx(z, abs=1e-6), act.kind


def test_inverse_rejects_out_of_range():
    with pytest.raises(ValueError):
        Activation.tanh().inverse(1.5)
    with pytest.raises(ValueError):
        Activation.softplus().inverse(-0.1)


# ---------------------------------------------------------------------------
# construction, lookup, serialization
# ---------------------------------------------------------------------------

def test_validation():
    with pytest.raises(ValueError):
        Activation.polynomial(())
    with pytest.raises(ValueError):
        Activation.polynomial((1.0, float("nan")))
    with pytest.raises(ValueError):
        Activation.leaky_relu(0.0)
    with pytest.raises(ValueError):
        Activation.elu(-1.0)


def test_activation_named_aliases():
    assert activation_named("LeakyReLU", slope=0.05).slope == 0.05
    assert activation_named("shifted-sigmoid").kind == "shifted_sigmoid"
    assert activation_named("Tanh").kind == "tanh"
    with pytest.raises(ValueError):
        activation_named("swish")


def test_json_roundtrip():
    for act in ALL_KINDS:
        back = Activation.from_json(act.to_json())
        assert back == act, act.kind


def test_shifted_sigmoid_identity():
    z = np.linspace(-8, 8, 101)
    assert np.allclose(Activation.shifted_sigmoid()(z), Activation.sigmoid()(z) - 0.5, atol=0)
