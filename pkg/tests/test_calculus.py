"""Controlled paths, smooth functions, brackets, and the Ito formula."""

import numpy as np
import pytest

from roughsew.calculus import (
    ControlledPath,
    bracket,
    compose,
    constant_controlled,
    controlled_from_lift,
    controlled_integral,
    integration_by_parts_residual,
    ito_formula_residual,
    mixed_bracket_check,
    remainder,
    rough_bracket,
    smooth_fn,
    smooth_fn_registry,
)
from roughsew.grids import TimeGrid
from roughsew.paths import (
    SamplePath,
    forward_lift_jump_path,
    ito_lift_brownian,
    simulate_brownian,
    simulate_compound_poisson,
    smooth_lift,
)


# ---------------------------------------------------------------------------
# smooth function registry
# ---------------------------------------------------------------------------


def _central_diff(f, y, h=1e-6):
    return (f(y + h) - f(y - h)) / (2.0 * h)


@pytest.mark.parametrize(
    "name,params",
    [
        ("linear", {"a": 1.7, "c": -0.3}),
        ("sin_bundle", {"a": 0.8, "b": 1.4, "c": 0.2}),
        ("tanh_affine", {"a": 1.2, "b": 0.9, "c": 0.1}),
        ("exp_clipped", {"r": 3.0}),
        ("polynomial_clipped", {"coeffs": (0.5, -1.0, 0.0, 2.0), "r": 8.0}),
    ],
)
def test_smooth_fn_derivatives_match_finite_differences(name, params):
    fn = smooth_fn(name, **params)
    y = np.linspace(-2.0, 2.0, 41)  # interior of every clip range
    assert np.allclose(fn.df(y), _central_diff(fn.f, y), atol=1e-7)
    assert np.allclose(fn.d2f(y), _central_diff(fn.df, y), atol=1e-5)
    assert fn.c3_bound > 0


def test_smooth_fn_registry_and_unknown_name():
    assert set(smooth_fn_registry()) == {
        "linear",
        "sin_bundle",
        "tanh_affine",
        "exp_clipped",
        "polynomial_clipped",
    }
    with pytest.raises(ValueError):
        smooth_fn("gaussian_bump")
    assert not smooth_fn("linear").bounded
    assert smooth_fn("tanh_affine").bounded


# ---------------------------------------------------------------------------
# controlled paths
# ---------------------------------------------------------------------------


def test_canonical_controlled_path_has_zero_remainder():
    bm = simulate_brownian(1.0, 32, seed=3, n_members=4)
    cp = controlled_from_lift(ito_lift_brownian(bm))
    for (s, t) in [(0, 32), (5, 6), (10, 25)]:
        assert np.max(np.abs(remainder(cp, s, t))) == 0.0


def test_compose_chain_rule():
    bm = simulate_brownian(1.0, 16, seed=5, n_members=3)
    cp = controlled_from_lift(ito_lift_brownian(bm))
    fn = smooth_fn("sin_bundle", a=1.1, b=0.7)
    out = compose(fn, cp)
    assert np.allclose(out.values, fn.f(cp.values))
    assert np.allclose(out.derivative, fn.df(cp.values)[..., None] * cp.derivative)


def test_composed_remainder_is_second_order():
    # R_{s,t} for f(X) on a smooth driver shrinks like the square of the step
    lift = smooth_lift("linear", 1.0, 64)
    cp = compose(smooth_fn("sin_bundle"), controlled_from_lift(lift))
    r_wide = np.max(np.abs(remainder(cp, 0, 32)))
    r_half = np.max(np.abs(remainder(cp, 0, 16)))
    assert r_half < 0.35 * r_wide


def test_constant_controlled_shapes_and_scalar_guard():
    bm = simulate_brownian(1.0, 8, seed=7, n_members=2, dim=2)
    lift = ito_lift_brownian(bm, seed=7)
    cp = constant_controlled(lift, 3.0)
    assert cp.values.shape == (1, 9, 1)
    assert cp.derivative.shape == (1, 9, 1, 2)
    assert np.all(cp.derivative == 0.0)
    assert cp.scalar().shape == (1, 9)
    two_channel = ControlledPath(
        lift=lift, values=np.zeros((1, 9, 2)), derivative=np.zeros((1, 9, 2, 2))
    )
    with pytest.raises(ValueError):
        two_channel.scalar()


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------


def test_canonical_bracket_recovers_time_deterministically():
    # (B, Id) against the Ito lift: the germ's second-level correction cancels
    # dB^2 leaving the bracket increment, so [B]_T = T up to roundoff,
    # member by member -- no statistics involved
    bm = simulate_brownian(1.5, 64, seed=9, n_members=16)
    cp = controlled_from_lift(ito_lift_brownian(bm))
    br = bracket(cp, cp)
    assert np.max(np.abs(br.terminal[:, 0, 0] - 1.5)) < 1e-12


def test_empirical_bracket_is_statistical():
    # derivative-free controlled path: the bracket is the raw quadratic
    # variation, which fluctuates around T
    bm = simulate_brownian(1.0, 256, seed=11, n_members=2000)
    lift = ito_lift_brownian(bm)
    cp = constant_controlled(lift, bm.values[..., 0])
    qv = bracket(cp, cp).terminal[:, 0, 0]
    se = qv.std(ddof=1) / np.sqrt(qv.shape[0])
    assert abs(qv.mean() - 1.0) < 3 * se
    assert qv.std() > 0.01  # genuinely empirical


def test_rough_bracket_geometric_lifts_vanish():
    assert np.max(np.abs(rough_bracket(smooth_lift("linear", 2.0, 32)).values)) == 0.0
    assert (
        np.max(np.abs(rough_bracket(smooth_lift("sine_cosine_pair", 3.0, 64)).values))
        < 1e-12
    )


def test_rough_bracket_pure_jump_equals_realized_jump_sum():
    res = simulate_compound_poisson(1.0, 4.0, 16, seed=13, n_members=8)
    lift = forward_lift_jump_path(res.path)
    term = rough_bracket(lift).terminal[:, 0, 0]
    dx = np.diff(res.path.values[..., 0], axis=1)
    # non-jump steps contribute exact zeros, so the full cumulative sum is the
    # jump sum itself, addend for addend
    ref = np.cumsum(dx * dx, axis=1)[:, -1]
    assert np.array_equal(term, ref)


def test_mixed_bracket_pure_jump_grid_identity():
    # M pure jump, Z controlled on M's own lift, jumps on grid columns: the
    # grid bracket and the jump-sum formula are the same finite sum
    grid = TimeGrid(np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]))
    values = np.array([[[0.0], [0.0], [0.7], [0.7], [0.7], [-0.4]]])
    path = SamplePath(grid=grid, values=values, jump_indices=np.array([2, 5]))
    lift = forward_lift_jump_path(path)
    z = compose(smooth_fn("sin_bundle", a=1.0, b=0.9), controlled_from_lift(lift))
    grid_value, jump_sum, residual = mixed_bracket_check(
        path.values, path.jump_indices, path.jump_sizes(), z
    )
    assert np.array_equal(grid_value, jump_sum)
    assert np.all(residual == 0.0)


def test_bracket_heavy_tail_warning():
    bm = simulate_brownian(1.0, 16, seed=15, n_members=8)
    vals = bm.values.copy()
    vals[0] *= 200.0  # one member dominates the fourth moment
    spiked = simulate_brownian(1.0, 16, seed=15, n_members=8)
    spiked.values[:] = vals
    lift = ito_lift_brownian(spiked)
    cp = constant_controlled(lift, spiked.values[..., 0])
    with pytest.warns(UserWarning):
        bracket(cp, cp)


# ---------------------------------------------------------------------------
# integration by parts and the Ito formula
# ---------------------------------------------------------------------------


def test_integration_by_parts_grid_identity_brownian():
    bm = simulate_brownian(1.0, 64, seed=17, n_members=8)
    cp = controlled_from_lift(ito_lift_brownian(bm))
    a = compose(smooth_fn("sin_bundle"), cp)
    b = compose(smooth_fn("tanh_affine"), cp)
    assert integration_by_parts_residual(a, b) <= 1e-12


def test_integration_by_parts_grid_identity_two_dim():
    lift = smooth_lift("sine_cosine_pair", 2.0, 32)
    cp = controlled_from_lift(lift)
    assert integration_by_parts_residual(cp, cp) <= 1e-12


def test_controlled_integral_linearity():
    bm = simulate_brownian(1.0, 32, seed=19, n_members=4)
    cp = controlled_from_lift(ito_lift_brownian(bm))
    a = compose(smooth_fn("sin_bundle"), cp)
    doubled = ControlledPath(lift=cp.lift, values=2.0 * a.values, derivative=2.0 * a.derivative)
    i1 = controlled_integral(a, cp).values
    i2 = controlled_integral(doubled, cp).values
    assert np.allclose(i2, 2.0 * i1, atol=1e-14)


def test_ito_formula_pure_jump_residual_exactly_zero():
    res = simulate_compound_poisson(1.0, 4.0, 24, seed=21, n_members=16)
    lift = forward_lift_jump_path(res.path)
    z = compose(smooth_fn("sin_bundle", a=0.9, b=1.1, c=0.2), controlled_from_lift(lift))
    fn = smooth_fn("polynomial_clipped", coeffs=(0.0, 0.0, 1.0), r=16.0)
    resid = ito_formula_residual(fn, z)
    assert np.all(resid == 0.0)


def test_ito_formula_smooth_driver_residual_small():
    lift = smooth_lift("polynomial", 1.0, 256)
    cp = controlled_from_lift(lift)
    fn = smooth_fn("tanh_affine")
    resid = ito_formula_residual(fn, cp)
    assert np.max(np.abs(resid)) < 1e-4


def test_ito_formula_brownian_square_residual_shrinks():
    fn = smooth_fn("polynomial_clipped", coeffs=(0.0, 0.0, 1.0), r=16.0)
    l1 = []
    for n in (32, 128):
        bm = simulate_brownian(1.0, n, seed=23, n_members=512)
        lift = ito_lift_brownian(bm)
        cp = constant_controlled(lift, bm.values[..., 0])
        resid = ito_formula_residual(fn, cp, bracket_path=bm.grid.times[None, :])
        l1.append(np.mean(np.abs(resid)))
    assert l1[1] < 0.75 * l1[0]
