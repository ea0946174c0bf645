"""Ensemble norms: L^q magnitudes, increment tables, and V^p seminorms."""

import numpy as np
import pytest

from roughsew.grids import increment_table, make_uniform_grid, p_variation
from roughsew.norms import (
    MAX_TABLE_POINTS,
    chen_residual,
    lq_norm,
    lq_table,
    mean_table,
    rough_path_distance,
    rough_path_norm,
    second_level_seminorm,
    two_param_seminorm,
    vp_lq_seminorm,
)
from roughsew.paths import ito_lift_brownian, simulate_brownian, smooth_lift


def test_lq_norm_matches_manual_moment():
    x = np.array([[1.0], [-2.0], [2.0]])
    # L^2: sqrt(mean of squares) = sqrt(3)
    assert lq_norm(x, 2.0) == pytest.approx(np.sqrt(3.0))
    # L^1: mean of magnitudes
    assert lq_norm(x, 1.0) == pytest.approx(5.0 / 3.0)


def test_lq_norm_euclidean_across_trailing_axes():
    x = np.array([[[3.0, 4.0]]])  # one member, magnitude 5
    assert lq_norm(x, 2.0) == pytest.approx(5.0)


def test_lq_norm_estimate_and_validation():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 3))
    est = lq_norm(x, 2.0, return_estimate=True)
    assert est.value == pytest.approx(lq_norm(x, 2.0))
    assert est.std_error > 0
    assert est.n_members == 500
    with pytest.raises(ValueError):
        lq_norm(x, 0.5)


def test_lq_table_known_two_member_ensemble():
    # members: 0 -> 1 -> 3 and 0 -> -1 -> 1
    vals = np.array([[0.0, 1.0, 3.0], [0.0, -1.0, 1.0]])
    tab = lq_table(vals, 2.0)
    assert tab[0, 1] == pytest.approx(1.0)  # both have |dY| = 1
    assert tab[1, 2] == pytest.approx(2.0)
    assert tab[0, 2] == pytest.approx(np.sqrt((9.0 + 1.0) / 2.0))
    assert np.all(np.diag(tab) == 0.0)


def test_mean_table_single_member_reduces_to_increments():
    vals = np.array([[0.0, 2.0, 1.0]])
    tab = mean_table(vals)
    inc = increment_table(vals[0])
    assert np.allclose(np.triu(tab), np.triu(inc))


def test_vp_lq_seminorm_monotone_single_member():
    vals = np.array([[0.0, 1.0, 2.0, 3.0]])
    # degenerate ensemble: reduces to the path's own p-variation
    assert vp_lq_seminorm(vals, 1.0, 2.0) == pytest.approx(3.0)
    assert vp_lq_seminorm(vals, 2.0, 2.0) == pytest.approx(
        p_variation(increment_table(vals[0]), 2.0)
    )


def test_two_param_seminorm_is_p_variation():
    tab = increment_table(np.array([0.0, 1.0, -1.0]))
    assert two_param_seminorm(tab, 2.0) == p_variation(tab, 2.0)


def test_table_size_guard():
    vals = np.zeros((1, MAX_TABLE_POINTS + 2))
    with pytest.raises(ValueError):
        lq_table(vals, 2.0)


def test_second_level_seminorm_smooth_lift():
    lift = smooth_lift("linear", 1.0, 8)
    # XX_{s,t} = (t-s)^2/2; the (p/2)-variation at p = 2 is additive in t-s
    val = second_level_seminorm(lift, 2.0)
    assert val == pytest.approx(0.5, rel=1e-12)


def test_rough_path_norm_positive_and_scales():
    bm = simulate_brownian(1.0, 24, seed=31, n_members=64)
    lift = ito_lift_brownian(bm)
    norm = rough_path_norm(lift, 2.5, q=2.0)
    assert norm > 0
    first = vp_lq_seminorm(bm.values, 2.5, 2.0)
    assert norm > first  # second level adds mass


def test_rough_path_distance_zero_on_identical_lifts():
    bm = simulate_brownian(1.0, 16, seed=41, n_members=8)
    lift = ito_lift_brownian(bm)
    assert rough_path_distance(lift, lift, 2.5) == 0.0


def test_rough_path_distance_detects_perturbation():
    bm = simulate_brownian(1.0, 16, seed=42, n_members=8)
    lift = ito_lift_brownian(bm)
    shifted = simulate_brownian(1.0, 16, seed=43, n_members=8)
    other = ito_lift_brownian(shifted)
    assert rough_path_distance(lift, other, 2.5) > 0.1


def test_rough_path_distance_grid_mismatch():
    a = ito_lift_brownian(simulate_brownian(1.0, 16, seed=1, n_members=2))
    b = ito_lift_brownian(simulate_brownian(1.0, 8, seed=1, n_members=2))
    with pytest.raises(ValueError):
        rough_path_distance(a, b, 2.0)


def test_chen_residual_zero_for_consistent_lift():
    lift = smooth_lift("sine_cosine_pair", 2.0, 32)
    worst = max(
        chen_residual(lift, s, u, t)
        for (s, u, t) in [(0, 8, 32), (1, 2, 3), (10, 20, 30), (0, 0, 32), (5, 5, 5)]
    )
    assert worst < 1e-12
