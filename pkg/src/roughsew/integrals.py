"""Left-point stochastic integrals on grids: Ito, rough-stochastic, Young.

All integrals are cumulative germ sums over the full grid (the sewn limit on
a finite grid).  Integrands are sampled at the left endpoint of every step,
which is what makes the Ito isometry an exact identity at grid level and
keeps jump structure canonical: over a step that ends in a jump of a
piecewise-constant driver, the left endpoint IS the pre-jump state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conventions import map_dot, second_level_contract
from .grids import TimeGrid
from .paths import MartingalePath, RoughLift

__all__ = [
    "IntegralProcess",
    "ito_integrate",
    "rough_stoch_integrate",
    "young_integrate",
    "jump_structure_check",
]


@dataclass
class IntegralProcess:
    """A cumulative integral ensemble, zero at t_0."""

    grid: TimeGrid
    values: np.ndarray  # (N, n+1) or (N, n+1, m)
    jump_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    def jumps(self) -> np.ndarray:
        """Grid jumps Z_j - Z_{j-1} at the declared jump indices."""
        if not self.jump_indices.size:
            return np.zeros((self.values.shape[0], 0) + self.values.shape[2:])
        return (
            self.values[:, self.jump_indices]
            - self.values[:, self.jump_indices - 1]
        )


def _cumulative(grid, steps, jump_indices) -> IntegralProcess:
    n = steps.shape[0]
    zero = np.zeros((n, 1) + steps.shape[2:])
    vals = np.concatenate([zero, np.cumsum(steps, axis=1)], axis=1)
    return IntegralProcess(grid=grid, values=vals, jump_indices=jump_indices)


def ito_integrate(integrand: np.ndarray, mart: MartingalePath) -> IntegralProcess:
    """int Y dM with the left-point germ Y_s dM_{s,t} (scalar integrand, d = 1).

    The integrand must be adapted: entry [:, k] may depend on information up
    to t_k only.  E_s of each germ vanishes, so the full-grid sum is the sewn
    limit of the martingale part.
    """
    if mart.dim != 1:
        raise ValueError("ito_integrate handles one-dimensional martingales")
    y = np.asarray(integrand, dtype=float)
    if y.ndim == 3:
        y = y[..., 0]
    dm = mart.increments()[..., 0]
    if y.shape[0] == 1 and dm.shape[0] > 1:
        y = np.broadcast_to(y, (dm.shape[0], y.shape[1]))
    steps = y[:, :-1] * dm
    return _cumulative(mart.grid, steps, mart.jump_indices)


def rough_stoch_integrate(y: np.ndarray, yp: np.ndarray, lift: RoughLift) -> IntegralProcess:
    """int (Y, Y') dX against a rough lift, left-point germ Y dX + Y' XX.

    One-dimensional drivers take scalar channels: y (N, n+1) or (N, n+1, m)
    with yp of matching shape.  For dim >= 2 the integrand must be map-valued:
    y (N, n+1, m, d), yp (N, n+1, m, d, d) with the layout of `conventions`.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    x = lift.path.values
    dx = np.diff(x, axis=1)
    xx = lift.step_seconds()
    if lift.dim == 1:
        if y.ndim == 3 and y.shape[-1] == 1:
            y, yp = y[..., 0], yp[..., 0]
        dx1, xx1 = dx[..., 0], xx[..., 0, 0]
        if y.ndim == 2:
            steps = y[:, :-1] * dx1 + yp[:, :-1] * xx1
        else:  # scalar driver, m integrand channels
            steps = y[:, :-1] * dx1[..., None] + yp[:, :-1] * xx1[..., None]
    else:
        if y.ndim != 4 or y.shape[-1] != lift.dim:
            raise ValueError(
                "multi-dimensional drivers need a map-valued integrand (N, n+1, m, d)"
            )
        steps = map_dot(y[:, :-1], dx) + second_level_contract(yp[:, :-1], xx)
    return _cumulative(lift.grid, steps, lift.path.jump_indices)


def young_integrate(integrand: np.ndarray, integrator: np.ndarray, grid: TimeGrid,
                    jump_indices=None) -> IntegralProcess:
    """Left-point Stieltjes integral int Y dA for a finite-variation path A.

    integrator: (N, n+1) (e.g. a bracket component); over a pure-jump A the
    sum reduces to sum_{u <= t} Y_{u-} Delta A_u exactly, since the left
    endpoint of the jump step carries the pre-jump state.
    """
    y = np.asarray(integrand, dtype=float)
    a = np.asarray(integrator, dtype=float)
    if y.ndim == 3 and y.shape[-1] == 1:
        y = y[..., 0]
    if a.ndim == 3 and a.shape[-1] == 1:
        a = a[..., 0]
    if a.ndim == 4:  # a bracket (Nb, n+1, 1, 1)
        a = a[..., 0, 0]
    da = np.diff(a, axis=1)
    n = max(y.shape[0], a.shape[0])
    steps = np.broadcast_to(y[:, :-1], (n, da.shape[1]) + y.shape[2:]) * np.broadcast_to(
        da, (n, da.shape[1])
    )
    if jump_indices is None:
        jump_indices = np.array([], dtype=np.int64)
    return _cumulative(grid, steps, jump_indices)


def jump_structure_check(
    y: np.ndarray, yp: np.ndarray, z: IntegralProcess, lift: RoughLift
) -> float:
    """Max residual of the canonical jump structure of a rough integral:

        Delta Z_t - (Y_{t-} Delta X_t + Y'_{t-} Delta XX_t)

    over all declared jump times and members.  Left limits are previous grid
    values (exact for drivers whose jump times are grid members and whose
    integrands are constant over the jump step).  Returns the max absolute
    residual; 0 up to float identity for the built-in pure-jump lifts.
    """
    jumps = lift.path.jump_indices
    if not jumps.size:
        return 0.0
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    if y.ndim == 3 and y.shape[-1] == 1:
        y, yp = y[..., 0], yp[..., 0]
    dz = z.jumps()
    dx = lift.path.jump_sizes()
    dxx = lift.jump_second
    if lift.dim == 1:
        pred = y[:, jumps - 1] * dx[..., 0] + yp[:, jumps - 1] * dxx[..., 0, 0]
    else:
        pred = map_dot(y[:, jumps - 1], dx) + second_level_contract(yp[:, jumps - 1], dxx)
    resid = dz - pred
    return float(np.max(np.abs(resid))) if resid.size else 0.0
