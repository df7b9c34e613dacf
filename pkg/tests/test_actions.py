import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from samro.actions import (ActionGrid, augment_continuous, k_neighbors, neighbor_probabilities,
                           project, snap_nearest)

GRID = ActionGrid(n_boundaries=2, n_slices=1)


def vec(hom, ttt, grid=GRID):
    return np.tile([float(hom), float(ttt)], grid.n_boundaries * grid.n_slices)


def test_full_action_dimension():
    assert ActionGrid(34, 2).dim == 136
    assert ActionGrid(34, 1).dim == 68


def test_normalize_endpoints_and_midpoint():
    np.testing.assert_allclose(GRID.normalize(GRID.lo), -1.0)
    np.testing.assert_allclose(GRID.normalize(GRID.hi), 1.0)
    np.testing.assert_allclose(GRID.normalize(0.5 * (GRID.lo + GRID.hi)), 0.0)


def test_normalize_round_trip():
    u = np.random.default_rng(0).uniform(-1, 1, (100, GRID.dim))
    assert np.abs(GRID.normalize(GRID.denormalize(u)) - u).max() < 1e-12


def test_snap_examples():
    out = snap_nearest(vec(0.4, 70), GRID)
    assert out[0] == 0 and out[1] == 64
    assert (snap_nearest(vec(3, 1280), GRID) == vec(3, 1280)).all()
    assert snap_nearest(vec(0.5, 72), GRID)[0:2].tolist() == [0, 64]  # midpoints go down


def test_neighbor_probability_examples():
    assert neighbor_probabilities(0.5, GRID.hom_values)[2] == pytest.approx(0.5)
    lo, hi, p = neighbor_probabilities(0.25, GRID.hom_values)
    assert (lo, hi, p) == (0, 1, pytest.approx(0.25))
    assert neighbor_probabilities(6.0, GRID.hom_values) == (5.0, 5.0, 1.0)


def test_neighbors_clamp_at_the_range_ends():
    draws = k_neighbors(vec(6.0, 10.0), 50, GRID, np.random.default_rng(0))
    assert (draws[:, 0::2] == 5).all() and (draws[:, 1::2] == 40).all()


def test_neighbors_exact_grid_value_is_fixed():
    draws = k_neighbors(vec(2.0, 256.0), 50, GRID, np.random.default_rng(0))
    assert (draws == vec(2.0, 256.0)).all()


def test_neighbor_frequency_quick():
    draws = k_neighbors(vec(0.25, 100.0), 20000, GRID, np.random.default_rng(1))
    assert np.mean(draws[:, 0] == 1) == pytest.approx(0.25, abs=0.015)
    assert set(np.unique(draws[:, 0])) == {0.0, 1.0}


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        k_neighbors(vec(0, 40), 0, GRID, np.random.default_rng(0))


def test_project_with_k1_ignores_q():
    rng1, rng2 = np.random.default_rng(3), np.random.default_rng(3)
    got = project(None, vec(0.3, 90), 1, GRID, lambda s, a: 1 / 0, rng1)
    assert (got == k_neighbors(vec(0.3, 90), 1, GRID, rng2)[0]).all()


def test_project_ties_go_to_first_candidate():
    rng1, rng2 = np.random.default_rng(4), np.random.default_rng(4)
    got = project(None, vec(0.3, 90), 6, GRID, lambda s, a: 0.0, rng1)
    assert (got == k_neighbors(vec(0.3, 90), 6, GRID, rng2)[0]).all()


def test_project_matches_brute_force_argmax():
    rng = np.random.default_rng(5)
    w = rng.normal(size=GRID.dim)
    for _ in range(50):
        proto = GRID.denormalize(rng.uniform(-1, 1, GRID.dim))
        seed = int(rng.integers(1 << 30))
        got = project(None, proto, 4, GRID, lambda s, a: float(w @ a), np.random.default_rng(seed))
        cands = k_neighbors(proto, 4, GRID, np.random.default_rng(seed))
        assert (got == cands[int(np.argmax(cands @ w))]).all()


def test_project_batched_matches_scalar():
    w = np.arange(GRID.dim, dtype=float)
    a = project(None, vec(0.3, 90), 8, GRID, lambda s, a: a @ w, np.random.default_rng(6), True)
    b = project(None, vec(0.3, 90), 8, GRID, lambda s, a: a @ w, np.random.default_rng(6))
    assert (a == b).all()


def test_augment_interior_cell():
    out = augment_continuous(vec(0, 100), 2000, GRID, np.random.default_rng(7))
    hom = out[:, 0::2]
    assert hom.min() > -0.5 and hom.max() <= 0.5
    assert (snap_nearest(out, GRID) == vec(0, 100)).all()


def test_augment_endpoint_cell():
    out = augment_continuous(vec(5, 5120), 500, GRID, np.random.default_rng(8))
    assert out[:, 0].min() > 4.5 and out[:, 0].max() <= 5
    assert out[:, 1].min() > (2560 + 5120) / 2


def test_augment_rejects_off_grid():
    with pytest.raises(ValueError):
        augment_continuous(vec(0.5, 100), 3, GRID, np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10), st.integers(0, 14), st.integers(0, 2**31))
def test_augment_round_trips_through_snap(hi, ti, seed):
    a = vec(GRID.hom_values[hi], GRID.ttt_values[ti])
    out = augment_continuous(a, 16, GRID, np.random.default_rng(seed))
    assert (snap_nearest(out, GRID) == a).all()


def test_replicate_copies_across_slices():
    g1 = ActionGrid(2, 1)
    a = np.array([1.0, 40.0, 2.0, 64.0])
    assert g1.replicate(a, 2).tolist() == [1, 40, 1, 40, 2, 64, 2, 64]
    with pytest.raises(ValueError):
        ActionGrid(2, 2).replicate(np.zeros(8), 2)


def test_grid_rejects_unsorted_values():
    with pytest.raises(ValueError):
        ActionGrid(1, 1, ttt_values=np.array([64.0, 40.0]))
