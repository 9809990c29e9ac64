import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlab.bounds import (
    BoundConstants,
    assemble_observability_constant,
    calibrate_shape,
    interpolation_bound,
    kappa_alpha,
    log_interpolation_bound,
)
from heatlab.timeset import TimeSet


def test_kappa_alpha_values():
    assert kappa_alpha(0.5) == pytest.approx((1.0, math.sqrt(1.5)))
    assert kappa_alpha(0.5)[1] == pytest.approx(1.2247, abs=1e-4)
    assert kappa_alpha(2 / 3) == pytest.approx((2.0, math.sqrt(4 / 3)))
    a, k = kappa_alpha(1e-12)
    assert a == pytest.approx(0, abs=1e-11) and k == pytest.approx(math.sqrt(2))
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            kappa_alpha(bad)


def test_interpolation_bound_values():
    assert interpolation_bound(1.0, 0.0) == pytest.approx(math.e ** 2)
    T = 0.7
    d = log_interpolation_bound(T, 8.0, 2.0) - log_interpolation_bound(T, 1.0, 2.0)
    assert d == pytest.approx(2.0 * (7 * T + 3))


@given(T=st.floats(0.1, 5), a=st.floats(0, 20), da=st.floats(0.01, 5), C3=st.floats(0.1, 3))
@settings(max_examples=50, deadline=None)
def test_interpolation_bound_monotone(T, a, da, C3):
    assert log_interpolation_bound(T, a + da, C3) > log_interpolation_bound(T, a, C3)
    assert log_interpolation_bound(T, a, C3 * 1.5) > log_interpolation_bound(T, a, C3)


def test_assembled_intermediates_full_interval():
    b = assemble_observability_constant(TimeSet.full(1.0))
    assert (b.l, b.l1) == pytest.approx((0.0, 0.9))
    assert b.alpha == 1.0 and b.kappa == pytest.approx(math.sqrt(1.5))
    k = math.sqrt(1.5)
    assert b.d == pytest.approx(2 * 2.0 / (k * 0.9 * (k - 1)))
    assert b.K1 == pytest.approx(math.e ** 2) and b.K2 == 2.0 and b.K3 == pytest.approx(math.e ** 2)
    # the series telescopes to its first weight exp(-(2 + alpha) d kappa^2)
    assert b.log_series == pytest.approx(-3 * b.d * 1.5, rel=1e-12)
    assert math.isfinite(b.log_constant)


def test_assembled_constant_examples():
    E = TimeSet.full(1.0)
    assert assemble_observability_constant(E, a_norm=1.0).log_constant > assemble_observability_constant(E).log_constant
    half = TimeSet.from_pairs(1.0, [(0.0, 0.5)])
    assert assemble_observability_constant(E).log_constant <= assemble_observability_constant(half).log_constant
    short = TimeSet.from_pairs(1.0, [(0.2, 0.3)])
    assert assemble_observability_constant(short).log_constant > assemble_observability_constant(E).log_constant


@given(a=st.floats(0, 10), da=st.floats(0.01, 3), theta=st.floats(0.05, 0.95), C3=st.floats(0.2, 3),
       Ct=st.floats(0, 3), w=st.floats(0.01, 1.0))
@settings(max_examples=60, deadline=None)
def test_assembled_constant_monotone_and_finite_in_log(a, da, theta, C3, Ct, w):
    E = TimeSet.from_pairs(1.0, [(0.0, w)])
    c = BoundConstants(theta, C3, 1.0, Ct)
    base = assemble_observability_constant(E, a_norm=a, consts=c)
    assert math.isfinite(base.log_constant) and base.terms >= 1
    assert assemble_observability_constant(E, a_norm=a + da, consts=c).log_constant >= base.log_constant
    assert assemble_observability_constant(E, a_norm=a, consts=BoundConstants(theta, C3 * 1.1, 1.0, Ct)).log_constant \
        >= base.log_constant
    assert assemble_observability_constant(E, a_norm=a, consts=BoundConstants(theta, C3, 1.0, Ct + 0.5)).log_constant \
        >= base.log_constant
    longer = TimeSet.from_pairs(1.0, [(0.0, min(1.0, w * 1.5))])
    assert assemble_observability_constant(longer, a_norm=a, consts=c).log_constant <= base.log_constant


def test_calibrate_shape():
    c, margins = calibrate_shape({0.0: 1.0, 1.0: math.e ** 2, 4.0: math.e ** 2}, T=1.0)
    assert c == pytest.approx(1.0)
    assert margins[1.0] == pytest.approx(0.0, abs=1e-12) and margins[4.0] < 0


def test_constants_validation():
    with pytest.raises(ValueError):
        BoundConstants(C3=0)
    with pytest.raises(ValueError):
        BoundConstants(theta=1.0)
    assert np.isinf(assemble_observability_constant(TimeSet.from_pairs(1.0, [(0.1, 0.11)])).constant)
