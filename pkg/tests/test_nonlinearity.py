import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bangbang_heat.nonlinearity import Nonlinearity, SignConditionError, TruncatedNonlinearity, from_spec

TABLE = Nonlinearity.custom([-2.0, -1.0, 0.0, 1.0, 2.0], [-3.0, -0.5, 0.0, 0.5, 3.0])
BUILTINS = [Nonlinearity.zero(), Nonlinearity.cubic(), Nonlinearity.odd_power(5), Nonlinearity.saturating(), TABLE]
kinds = st.sampled_from(BUILTINS)
reals = st.floats(-50, 50, allow_nan=False)


def test_evaluate_examples():
    assert Nonlinearity.cubic().evaluate(2.0) == 8.0
    assert Nonlinearity.saturating().evaluate(-3.0) == -9.0 / 4.0
    for f in BUILTINS:
        assert f.evaluate(0.0) == 0.0


def test_lipschitz_examples():
    cubic = Nonlinearity.cubic()
    assert cubic.lipschitz_on(1.0) == 3.0
    assert cubic.lipschitz_on(0.0) == 0.0
    assert Nonlinearity.zero().lipschitz_on(7.0) == 0.0
    assert TABLE.lipschitz_is_estimate and not cubic.lipschitz_is_estimate
    with pytest.raises(ValueError):
        cubic.lipschitz_on(-1.0)


def test_linearized_examples():
    cubic = Nonlinearity.cubic()
    assert cubic.linearized_potential(0.0, 2.0) == 4.0
    assert cubic.linearized_potential(1.0, 0.0) == 3.0


@given(f=kinds, y=reals)
def test_sign_condition(f, y):
    assert f.evaluate(y) * y >= 0


@given(f=kinds, K=st.floats(0.01, 4.0), u=st.floats(-1, 1), v=st.floats(-1, 1))
def test_local_lipschitz(f, K, u, v):
    a, b = K * u, K * v
    assert abs(f.evaluate(a) - f.evaluate(b)) <= f.lipschitz_on(K) * abs(a - b) * (1 + 1e-12) + 1e-12


@given(f=kinds, phi=st.floats(-3, 3), r=st.floats(-3, 3).filter(lambda r: abs(r) > 1e-3))
def test_quotient_identity(f, phi, r):
    a = f.linearized_potential(phi, r)
    assert math.isclose(a * r, f.evaluate(phi + r) - f.evaluate(phi), rel_tol=1e-9, abs_tol=1e-9)


@given(f=kinds, phi=st.floats(-3, 3))
def test_quotient_continuous_at_zero(f, phi):
    if f.kind == "custom":
        return  # piecewise linear: one-sided limits differ at the knots
    d = f.linearized_potential(phi, 0.0)
    assert math.isclose(f.linearized_potential(phi, 1e-6), d, rel_tol=1e-4, abs_tol=1e-4)


@given(f=kinds, P=st.floats(0, 3), phi=st.floats(-1, 1), r=st.floats(-1, 1))
def test_quotient_bounded(f, P, phi, r):
    assert abs(f.linearized_potential(P * phi, r)) <= f.lipschitz_on(P + 1) * (1 + 1e-9) + 1e-12


@given(f=kinds, r=reals)
def test_quotient_nonnegative_at_zero_background(f, r):
    assert f.linearized_potential(0.0, r) >= -1e-12


@given(cap=st.floats(0.1, 3), a=reals, b=reals)
def test_truncation(cap, a, b):
    tr = TruncatedNonlinearity(Nonlinearity.cubic(), cap)
    assert abs(tr.evaluate(a) - tr.evaluate(b)) <= tr.lipschitz * abs(a - b) * (1 + 1e-12) + 1e-12
    if abs(a) <= cap:
        assert tr.evaluate(a) == Nonlinearity.cubic().evaluate(a)
    else:
        assert tr.evaluate(a) == Nonlinearity.cubic().evaluate(math.copysign(cap, a))


def test_vectorized_matches_scalar():
    y = np.linspace(-3, 3, 41)
    for f in BUILTINS:
        np.testing.assert_array_equal(f.evaluate(y), [f.evaluate(float(v)) for v in y])


def test_custom_table_validation():
    with pytest.raises(SignConditionError):
        Nonlinearity.custom([-1.0, 0.0, 1.0], [1.0, 0.0, -1.0])
    with pytest.raises(ValueError):
        Nonlinearity.custom([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        Nonlinearity.odd_power(4)
    # held constant beyond the ends
    assert TABLE.evaluate(10.0) == 3.0


def test_from_spec():
    assert from_spec("cubic").kind == "cubic"
    assert from_spec("odd-power", power=7).power == 7
    with pytest.raises(ValueError):
        from_spec("sine")
