import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from heatlab.heat import assemble_laplacian, forward_solve
from heatlab.lattice import BoxDomain, LatticeSpec, NodeMask, SpatialGrid, control_mask
from heatlab.uc import (
    FrequencyParams,
    UndefinedFrequency,
    centered_gradient_sq,
    frequency_function,
    frequency_monotonicity_check,
    global_interpolation_report,
    interpolation_report,
)


def grid_0_2(m):
    # (0, 2) with h = 2/m
    return SpatialGrid(LatticeSpec(1, 0.2, 1.0), BoxDomain((0,), (0,)), m)


def unit_grid(m):
    return SpatialGrid(LatticeSpec(1, 0.2, 0.5), BoxDomain((0,), (0,)), m)


def continuous_frequency_of_x(s, x0=1.0, r=0.5):
    G = lambda x: s ** -0.5 * np.exp(-(x - x0) ** 2 / (4 * s))  # noqa: E731
    return quad(G, x0 - r, x0 + r)[0] / quad(lambda x: x * x * G(x), x0 - r, x0 + r)[0]


def test_frequency_of_linear_function_matches_quadrature():
    p = FrequencyParams((1.0,), 0.5, 0.1, 0.5)
    ref = continuous_frequency_of_x(0.6)
    errs = []
    for m in (64, 256):
        g = grid_0_2(m)
        errs.append(abs(frequency_function(g.coords[:, 0], g, p, 0.0) / ref - 1))
    assert errs[1] <= 2e-3
    assert errs[0] / errs[1] >= 3.5  # first order in h


def test_centered_gradient_exact_for_linear_in_interior():
    g = grid_0_2(16)
    gs = centered_gradient_sq(3 * g.coords[:, 0], g)
    np.testing.assert_allclose(gs[1:-1], 9.0)


def test_zero_mass_is_undefined():
    g = unit_grid(16)
    with pytest.raises(UndefinedFrequency):
        frequency_function(np.zeros(g.size), g, FrequencyParams((0.5,), 0.2, 0.1, 1.0), 0.0)


def eigen_run(m, K, T=1.0, lam=0.1):
    g = unit_grid(m)
    u = forward_solve(assemble_laplacian(g), None, np.sin(np.pi * g.coords[:, 0]), None, None, K, T)
    return frequency_monotonicity_check(u, g, FrequencyParams((0.5,), 0.5, lam, T))


@pytest.mark.parametrize("lam", [0.1, 0.01])
def test_eigenfunction_monotonicity(lam):
    rep = eigen_run(128, 1000, lam=lam)
    assert rep.max_violation <= 1e-2 and rep.passed
    fine = eigen_run(256, 2000, lam=lam)
    assert fine.max_violation <= 1.1 * rep.max_violation + 1e-12


def test_all_undefined_for_zero_solution():
    g = unit_grid(8)
    rep = frequency_monotonicity_check(np.zeros((5, g.size)), g, FrequencyParams((0.5,), 0.3, 0.1, 1.0))
    assert rep.all_undefined and rep.skipped == [0, 1, 2, 3]


@given(alpha=st.floats(1e-3, 1e3), lam=st.floats(0.01, 1.0), t=st.floats(0.0, 0.5))
@settings(max_examples=30, deadline=None)
def test_frequency_is_scale_invariant(alpha, lam, t):
    g = unit_grid(32)
    u = np.sin(np.pi * g.coords[:, 0]) + 0.3 * np.sin(2 * np.pi * g.coords[:, 0])
    p = FrequencyParams((0.5,), 0.4, lam, 0.5)
    assert frequency_function(alpha * u, g, p, t) == pytest.approx(frequency_function(u, g, p, t), rel=1e-10)


def test_interpolation_report_exponent_in_unit_interval():
    g = unit_grid(64)
    K = 100
    u = forward_solve(assemble_laplacian(g), None, np.sin(np.pi * g.coords[:, 0]), None, None, K, 1.0)
    rep = interpolation_report(u[-1], u[K // 2:], g, [0.5], 0.1, 0.2, 0.5, 1.0)
    assert rep.R0 == pytest.approx(0.4)
    assert rep.lhs > rep.small > 0 and rep.mid > 0
    assert rep.exponent is not None and rep.exponent < 1
    with pytest.raises(ValueError):
        interpolation_report(u[-1], u[K // 2:], g, [0.5], 0.3, 0.2, 0.5, 1.0)


def test_global_interpolation_report():
    g = unit_grid(64)
    u = forward_solve(assemble_laplacian(g), None, np.sin(np.pi * g.coords[:, 0]), None, None, 50, 0.5)
    rep = global_interpolation_report(u[0], u[-1], g, control_mask(g))
    assert rep.final < rep.initial and 0 < rep.observed < rep.final
    assert rep.theta is not None
    empty = global_interpolation_report(u[0], u[-1], g, NodeMask(np.zeros(g.size)))
    assert empty.theta is None


def test_interpolation_report_zero_field():
    g = unit_grid(16)
    rep = interpolation_report(np.zeros(g.size), np.zeros((3, g.size)), g, [0.5], 0.1, 0.2, 0.5, 1.0)
    assert rep.lhs == rep.mid == rep.small == 0.0 and rep.exponent is None


@given(r1=st.floats(0.01, 0.2), r2=st.floats(0.01, 0.2), seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_small_integral_monotone_in_radius(r1, r2, seed):
    g = unit_grid(32)
    v = np.random.default_rng(seed).standard_normal(g.size)
    late = np.zeros((2, g.size))
    lo, hi = sorted((r1, r2))
    a = interpolation_report(v, late, g, [0.5], lo, 0.25, 0.5, 1.0)
    b = interpolation_report(v, late, g, [0.5], hi, 0.25, 0.5, 1.0)
    assert a.small <= b.small
