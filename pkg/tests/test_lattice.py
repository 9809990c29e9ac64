import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlab.lattice import (
    BoxDomain,
    LatticeSpec,
    NodeMask,
    SpatialGrid,
    ball_mask,
    build_lattice_centers,
    control_mask,
)


def test_spec_rejects_r1_not_below_r2():
    with pytest.raises(ValueError, match=r"\(H1\)"):
        LatticeSpec(1, 0.5, 0.5)
    with pytest.raises(ValueError):
        LatticeSpec(3, 0.1, 0.5)


def test_centers_are_odd_multiples_of_r2():
    spec = LatticeSpec(1, 0.2, 0.5)
    c = build_lattice_centers(spec, BoxDomain((-1,), (1,)))
    np.testing.assert_array_equal(c.ravel(), [-0.5, 0.5, 1.5])
    c2 = build_lattice_centers(LatticeSpec(2, 0.2, 0.5), BoxDomain((0, 0), (1, 1)))
    assert c2.shape == (4, 2)


def test_grid_nodes_and_spacing():
    g = SpatialGrid(LatticeSpec(1, 0.2, 0.5), BoxDomain((0,), (1,)), 4)
    assert g.h == 0.25
    np.testing.assert_allclose(g.coords.ravel(), [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75])
    assert g.size == 7 and g.cell_volume == 0.25


def test_control_mask_1d_matches_hand_count():
    # centre 0.5, r1 = 0.25, h = 0.125: nodes 0.25..0.75 (ties inside)
    g = SpatialGrid(LatticeSpec(1, 0.25, 0.5), BoxDomain((0,), (0,)), 8)
    mask = control_mask(g)
    np.testing.assert_array_equal(g.coords[mask.weights > 0].ravel(), [0.25, 0.375, 0.5, 0.625, 0.75])


def test_control_mask_2d_one_ball_per_cube():
    spec = LatticeSpec(2, 0.2, 0.5)
    g = SpatialGrid(spec, BoxDomain((0, 0), (1, 1)), 10)
    mask = control_mask(g)
    c = build_lattice_centers(spec, g.domain)
    d = np.min(np.linalg.norm(g.coords[:, None, :] - c[None], axis=2), axis=1)
    np.testing.assert_array_equal(mask.weights > 0, d <= 0.2 + 1e-12)
    assert mask.count == 4 * 13


def test_empty_mask_when_r1_below_spacing_and_centres_off_grid():
    g = SpatialGrid(LatticeSpec(1, 0.01, 0.5), BoxDomain((0,), (0,)), 5)
    assert control_mask(g).empty


@given(n=st.integers(1, 12), extra=st.integers(1, 6), m=st.integers(2, 9), dim=st.sampled_from([1, 2]))
@settings(max_examples=40, deadline=None)
def test_nested_grids_share_nodes_bitwise(n, extra, m, dim):
    if dim == 2:
        n, extra, m = min(n, 4), min(extra, 3), min(m, 5)
    spec = LatticeSpec(dim, 0.2, 0.5)
    small = SpatialGrid(spec, BoxDomain.centered(n, dim), m)
    big = SpatialGrid(spec, BoxDomain.centered(n + extra, dim), m)
    assert big.domain.contains(small.domain)
    idx = big.locate(small)
    np.testing.assert_array_equal(big.coords[idx], small.coords)
    # masks agree on shared nodes away from the small box boundary cubes
    v = np.arange(small.size, dtype=float)
    np.testing.assert_array_equal(big.restrict(big.extend(v, small), small), v)


@given(n=st.integers(1, 10), m=st.integers(2, 8))
@settings(max_examples=30, deadline=None)
def test_mask_restricted_from_larger_box_is_superset(n, m):
    # a larger box can only add in-domain centres, never remove them
    spec = LatticeSpec(1, 0.3, 0.5)
    small = SpatialGrid(spec, BoxDomain.centered(n), m)
    big = SpatialGrid(spec, BoxDomain.centered(n + 2), m)
    sm = control_mask(small).weights
    bm = big.restrict(control_mask(big).weights, small)
    assert np.all(bm >= sm)


def test_ball_mask_closed():
    g = SpatialGrid(LatticeSpec(1, 0.2, 0.5), BoxDomain((0,), (0,)), 10)
    assert ball_mask(g, [0.5], 0.2).sum() == 5
    assert NodeMask.full(g).count == g.size
