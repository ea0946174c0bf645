"""Drivers: simulators, rough-path lifts, and their structural identities."""

import numpy as np
import pytest

from roughsew.grids import TimeGrid, make_uniform_grid
from roughsew.norms import chen_residual
from roughsew.paths import (
    DriverSpec,
    SamplePath,
    build_driver,
    forward_lift_jump_path,
    ito_lift_brownian,
    lift_from_steps,
    simulate_brownian,
    simulate_compound_poisson,
    simulate_mixed,
    smooth_lift,
    smooth_path_registry,
)
from roughsew.rng import stream

from oracles import quadrature_second_level


def _max_chen(lift, rng, n_triples=200):
    n = lift.grid.n_steps
    worst = 0.0
    for _ in range(n_triples):
        s, u, t = np.sort(rng.integers(0, n + 1, size=3))
        worst = max(worst, chen_residual(lift, int(s), int(u), int(t)))
    return worst


# ---------------------------------------------------------------------------
# Brownian ensembles
# ---------------------------------------------------------------------------


def test_brownian_shapes_and_bracket():
    bm = simulate_brownian(2.0, 16, seed=3, n_members=5, dim=2)
    assert bm.values.shape == (5, 17, 2)
    assert bm.bracket.shape == (1, 17, 2, 2)
    # analytic bracket vol vol^T t with unit vol
    assert np.allclose(bm.bracket[0, -1], 2.0 * np.eye(2))
    assert np.allclose(bm.bracket[0, 0], 0.0)


def test_brownian_seed_reproducibility():
    a = simulate_brownian(1.0, 32, seed=9, n_members=4)
    b = simulate_brownian(1.0, 32, seed=9, n_members=4)
    c = simulate_brownian(1.0, 32, seed=10, n_members=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_brownian_increment_moments():
    bm = simulate_brownian(1.0, 64, seed=21, n_members=4000)
    db = bm.increments()[..., 0]
    dt = 1.0 / 64
    # mean 0 and variance dt, each within 4 standard errors
    se_mean = np.sqrt(dt / 4000)
    assert np.abs(db.mean(axis=0)).max() < 4 * se_mean
    var = db.var(axis=0)
    se_var = dt * np.sqrt(2.0 / 4000)
    assert np.abs(var - dt).max() < 4 * se_var


def test_ito_lift_dim1_step_identity():
    bm = simulate_brownian(1.0, 32, seed=5, n_members=6)
    lift = ito_lift_brownian(bm)
    db = bm.increments()
    dt = bm.bracket_increments()
    expected = 0.5 * (db[:, :, :, None] * db[:, :, None, :] - dt)
    assert np.array_equal(lift.step_seconds(), expected)


def test_ito_lift_chen_residual_small():
    bm = simulate_brownian(1.0, 64, seed=6, n_members=8, dim=2)
    lift = ito_lift_brownian(bm, seed=6)
    rng = stream(1234, "chen-test")
    assert _max_chen(lift, rng) < 1e-10


def test_levy_area_mean_zero():
    # antisymmetric second-level part over the whole window has zero mean
    bm = simulate_brownian(1.0, 32, seed=17, n_members=4000, dim=2)
    lift = ito_lift_brownian(bm, substeps=8, seed=17)
    xx = lift.second(0, 32)
    area = 0.5 * (xx[:, 0, 1] - xx[:, 1, 0])
    se = area.std(ddof=1) / np.sqrt(area.shape[0])
    assert abs(area.mean()) < 3 * se


# ---------------------------------------------------------------------------
# smooth lifts
# ---------------------------------------------------------------------------


def test_polynomial_lift_terminal_second_level():
    # X_t = t^2 on [0, 1]: integral of (X_u - X_0) dX_u = 1/2
    lift = smooth_lift("polynomial", 1.0, 128)
    xx = lift.second(0, 128)
    assert xx.shape == (1, 1, 1)
    assert xx[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


def test_linear_lift_second_level_exact():
    lift = smooth_lift("linear", 2.0, 16)
    xx = lift.second(0, 16)
    # geometric 1-d: XX_{0,T} = (T - 0)^2 / 2
    assert xx[0, 0, 0] == pytest.approx(2.0, abs=1e-12)


def test_sine_cosine_windows_match_quadrature():
    lift = smooth_lift("sine_cosine_pair", 3.0, 48)
    x_fn = lambda u: np.stack([np.sin(u), np.cos(u)], axis=-1)
    times = lift.grid.times
    for s, t in [(0, 48), (5, 31), (17, 18)]:
        ref = quadrature_second_level(x_fn, times[s], times[t])
        assert np.allclose(lift.second(s, t)[0], ref, atol=5e-9), (s, t)


def test_smooth_lift_unknown_id():
    with pytest.raises(ValueError):
        smooth_lift("circle", 1.0, 8)
    assert set(smooth_path_registry()) == {"linear", "polynomial", "sine_cosine_pair"}


# ---------------------------------------------------------------------------
# jump paths and forward lifts
# ---------------------------------------------------------------------------


def _two_unit_jump_path():
    grid = TimeGrid(np.array([0.0, 0.4, 1.0]))
    values = np.array([[[0.0], [1.0], [2.0]]])
    return SamplePath(grid=grid, values=values, jump_indices=np.array([1, 2]))


def test_forward_lift_two_unit_jumps():
    # two unit jumps: XX_{0,T} = 0*1 + 1*1 = 1, exactly
    lift = forward_lift_jump_path(_two_unit_jump_path())
    assert lift.second(0, 2)[0, 0, 0] == 1.0
    # each step in isolation has zero second level (the jump sits at its end)
    assert np.array_equal(lift.step_seconds(), np.zeros((1, 2, 1, 1)))
    # and the lift carries no second-level jump
    assert np.array_equal(lift.jump_second, np.zeros((1, 2, 1, 1)))


def test_forward_lift_rejects_undeclared_motion():
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
    values = np.array([[[0.0], [1.0], [1.0]]])
    path = SamplePath(grid=grid, values=values, jump_indices=np.array([2]))
    with pytest.raises(ValueError):
        forward_lift_jump_path(path)


def test_compound_poisson_aligned_structure():
    res = simulate_compound_poisson(1.0, 3.0, 16, seed=2, n_members=6)
    path = res.path
    # values are piecewise constant away from declared jump columns
    dstep = np.diff(path.values[..., 0], axis=1)
    moving = np.any(dstep != 0.0, axis=0)
    cols = np.flatnonzero(moving) + 1
    assert set(cols.tolist()) <= set(path.jump_indices.tolist())
    # jump sizes are the realized increments at the jump columns
    js = path.jump_sizes()
    assert np.array_equal(
        js[..., 0], path.values[:, path.jump_indices, 0] - path.values[:, path.jump_indices - 1, 0]
    )


def test_compound_poisson_compensation():
    res = simulate_compound_poisson(2.0, 4.0, 32, seed=8, n_members=3, jump_params=(0.5, 0.2))
    times = res.path.grid.times
    comp = res.rate * res.jump_mean * times
    assert res.jump_mean == pytest.approx(0.5)
    assert np.allclose(res.martingale.values[..., 0], res.path.values[..., 0] - comp[None, :])
    # bracket accumulates the squared jumps
    qv = res.martingale.bracket[:, -1, 0, 0]
    js2 = np.sum(res.path.jump_sizes()[..., 0] ** 2, axis=1)
    assert np.allclose(qv, js2, atol=1e-12)


def test_compound_poisson_unaligned_quadratic_variation():
    # jumps interior to steps still contribute their true squares to [M]
    res = simulate_compound_poisson(
        1.0, 5.0, 8, seed=13, n_members=4, align_jumps=False
    )
    assert res.path.grid.n_steps == 8
    assert res.path.jump_indices.size == 0
    assert np.all(np.diff(res.martingale.bracket[:, :, 0, 0], axis=1) >= -1e-15)


def test_forward_lift_compound_poisson_chen():
    res = simulate_compound_poisson(1.0, 4.0, 16, seed=4, n_members=5)
    lift = forward_lift_jump_path(res.path)
    rng = stream(99, "chen-cp")
    assert _max_chen(lift, rng) < 1e-10


# ---------------------------------------------------------------------------
# custom lifts and the mixed driver
# ---------------------------------------------------------------------------


def test_lift_from_steps_chen_by_construction():
    rng = stream(7, "custom-lift")
    grid = make_uniform_grid(1.0, 10)
    values = np.cumsum(rng.normal(size=(2, 11, 1)), axis=1)
    values -= values[:, :1]
    steps = rng.normal(size=(2, 10, 1, 1))
    lift = lift_from_steps(SamplePath(grid=grid, values=values), steps, name="custom")
    assert np.array_equal(lift.step_seconds(), steps)
    worst = _max_chen(lift, stream(8, "custom-chen"))
    assert worst < 1e-10


def test_lift_from_steps_jump_second_injection():
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
    values = np.array([[[0.0], [0.2], [1.2]]])
    steps = np.zeros((1, 2, 1, 1))
    steps[0, 1, 0, 0] = 0.3
    jump_second = np.full((1, 1, 1, 1), 0.3)
    path = SamplePath(grid=grid, values=values, jump_indices=np.array([2]))
    lift = lift_from_steps(path, steps, jump_second=jump_second, name="two-step")
    assert lift.jump_second.shape == (1, 1, 1, 1)
    assert lift.second(1, 2)[0, 0, 0] == pytest.approx(0.3)


def test_mixed_driver_structure_and_chen():
    res = simulate_mixed(1.0, 32, seed=12, n_members=4, rate=3.0)
    assert res.lift.path.values.shape == res.martingale.values.shape
    # the jump-merged grid keeps at least the base resolution
    assert res.lift.grid.n_steps >= 32
    worst = _max_chen(res.lift, stream(55, "chen-mixed"))
    assert worst < 1e-10


def test_build_driver_dispatch():
    for kind, params in [
        ("brownian", {"dim": 2}),
        ("compound_poisson", {"rate": 2.0}),
        ("smooth", {"path_id": "linear"}),
        ("mixed", {"rate": 1.0}),
    ]:
        path, lift = build_driver(DriverSpec(kind, params), 1.0, 16, seed=3, n_members=2)
        assert path is not None
        if lift is not None:
            assert lift.grid.n_steps >= 16
    with pytest.raises(ValueError):
        build_driver(DriverSpec("fractional", {}), 1.0, 16, seed=3)
