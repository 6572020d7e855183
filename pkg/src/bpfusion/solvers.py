"""
Prior-constrained gradient ascent (PCGA) and the dense traversal oracle.

PCGA runs in two decoupled stages: position on the symbol-aggregated
objective, then velocity on the subcarrier-aggregated objective evaluated at
the position estimate.  Each stage is a coarse grid search over the prior box
followed by coordinate gradient ascent with central finite differences.

Objectives passed to the generic routines must accept an array of points of
shape (..., 2) and return values of shape (...).  An objective may also carry
an ``on_grid(x, y)`` method that evaluates the whole lattice x by y at once;
coarse search then uses it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyGrid, InitOutsidePrior
from .geometry import unit_sum
from .fusion import (Observation, PriorBox, observe, position_weights,
                     velocity_weights)
from .waveform import OfdmConfig

Objective = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GridSpec:
    """Equally spaced grid over ``bounds`` = (xmin, xmax, ymin, ymax).

    The realised spacing never exceeds ``dx``/``dy``; both boundaries are
    grid points.
    """

    bounds: tuple[float, float, float, float]
    dx: float
    dy: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid steps must be positive")
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    @staticmethod
    def _axis(lo, hi, step):
        if hi < lo:
            return np.empty(0)
        n = int(np.ceil((hi - lo) / step - 1e-9)) + 1
        return np.linspace(lo, hi, n) if n > 1 else np.array([lo])

    def axes(self, clip_to=None):
        x0, x1, y0, y1 = self.bounds
        if clip_to is not None:
            x0, x1 = max(x0, clip_to[0]), min(x1, clip_to[1])
            y0, y1 = max(y0, clip_to[2]), min(y1, clip_to[3])
        return self._axis(x0, x1, self.dx), self._axis(y0, y1, self.dy)


@dataclass(frozen=True)
class PcgaParams:
    """
    eta: length of the first (normalised-gradient) step; later steps use the
        learning rate it implies, eta / |grad f(init)|, shrunk on rejection.
    delta: finite-difference half step.
    growth: rate multiplier after an accepted step (1 keeps the rate fixed).
    eps: stop once the nominal coordinate change falls below this.
    """

    eta: float
    delta: float = 1e-3
    max_iter: int = 200
    eps: float = 1e-4
    backtrack_factor: float = 0.5
    backtrack_limit: int = 20
    growth: float = 1.5

    def __post_init__(self):
        if min(self.eta, self.delta, self.eps) <= 0 or self.max_iter < 1:
            raise ValueError("PCGA parameters must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")


@dataclass
class RefineResult:
    point: np.ndarray
    iterations: int
    converged: bool
    rate: float
    value: float
    gradient: np.ndarray
    trace: list = field(default_factory=list)


@dataclass
class Estimate:
    p_hat: np.ndarray
    v_hat: np.ndarray
    iterations: int = 0
    converged: bool = True
    objective_at_solution: float = float("nan")
    velocity_objective: float = float("nan")
    flat: bool = False


def default_grids(cfg: OfdmConfig, prior: PriorBox, pos_step=None, vel_step=None):
    """Half-resolution coarse grids, so the coarse peak lies inside the main lobe."""
    pos_step = cfg.range_resolution / 2 if pos_step is None else pos_step
    vel_step = cfg.speed_resolution / 2 if vel_step is None else vel_step
    return GridSpec(prior.pos, pos_step, pos_step), GridSpec(prior.vel, vel_step, vel_step)


def default_params(cfg: OfdmConfig, grids) -> tuple[PcgaParams, PcgaParams]:
    pos_grid, vel_grid = grids
    return (PcgaParams(eta=0.5 * pos_grid.dx, delta=1e-3, eps=1e-4),
            PcgaParams(eta=0.5 * vel_grid.dx, delta=1e-4, eps=1e-6))


def check_grids(cfg: OfdmConfig, grids):
    pos_grid, vel_grid = grids
    tol = 1 + 1e-9
    if max(pos_grid.dx, pos_grid.dy) > cfg.range_resolution * tol:
        raise ValueError("position grid step exceeds the range resolution c/(2 K df)")
    if max(vel_grid.dx, vel_grid.dy) > cfg.speed_resolution * tol:
        raise ValueError("velocity grid step exceeds the speed resolution lambda/(2 L Tp)")


def _grid_values(objective: Objective, grid: GridSpec, bounds):
    x, y = grid.axes(clip_to=bounds)
    if x.size == 0 or y.size == 0:
        raise EmptyGrid("grid does not intersect the prior box")
    if hasattr(objective, "on_grid"):
        return x, y, np.asarray(objective.on_grid(x, y), float)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    vals = np.asarray(objective(np.stack([xx, yy], axis=-1)), float)
    return x, y, vals


def coarse_grid_search(objective: Objective, grid: GridSpec, bounds=None,
                       return_value: bool = False):
    """Best grid point inside ``bounds``; ties go to the lowest (i, j) index."""
    x, y, vals = _grid_values(objective, grid, bounds)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    point = np.array([x[i], y[j]])
    if return_value:
        return point, float(vals[i, j]), bool(np.ptp(vals) == 0)
    return point


def _clip(q, bounds):
    if bounds is None:
        return q
    return np.array([min(max(q[0], bounds[0]), bounds[1]),
                     min(max(q[1], bounds[2]), bounds[3])])


def fd_gradient(objective: Objective, p, delta: float) -> np.ndarray:
    """Central finite-difference gradient (one batched objective call)."""
    stencil = np.array([[delta, 0.0], [-delta, 0.0], [0.0, delta], [0.0, -delta]])
    f = np.asarray(objective(np.asarray(p, float) + stencil), float)
    return np.array([f[0] - f[1], f[2] - f[3]]) / (2 * delta)


def cga_refine(objective: Objective, init, params: PcgaParams, bounds=None) -> RefineResult:
    """
    Coordinate gradient ascent from ``init``, projected onto ``bounds``.

    Steps follow p <- clip(p + rate * grad f(p)).  A step that lowers the
    objective is retried with the rate scaled by ``backtrack_factor``; only
    non-decreasing steps are accepted.  Convergence is declared once the
    nominal projected coordinate change drops below ``eps``.
    """
    p = np.asarray(init, float).copy()
    if bounds is not None and not (bounds[0] <= p[0] <= bounds[1] and bounds[2] <= p[1] <= bounds[3]):
        raise InitOutsidePrior(f"initial point {p} is outside {bounds}")
    f = float(objective(p))
    g = fd_gradient(objective, p, params.delta)
    gnorm = float(np.hypot(*g))
    rate = params.eta / gnorm if gnorm > 0 else params.eta
    trace = [f]
    converged = False
    iterations = 0
    while iterations < params.max_iter:
        accepted = False
        for _ in range(params.backtrack_limit + 1):
            cand = _clip(p + rate * g, bounds)
            if np.hypot(*(cand - p)) < params.eps:
                converged = True
                break
            fc = float(objective(cand))
            if fc >= f:
                accepted = True
                break
            rate *= params.backtrack_factor
        if converged or not accepted:
            break
        p, f = cand, fc
        rate *= params.growth
        trace.append(f)
        iterations += 1
        g = fd_gradient(objective, p, params.delta)
    return RefineResult(p, iterations, converged, rate, f, g, trace)


class GridObjective:
    """Pointwise objective bundled with a faster whole-lattice evaluator."""

    def __init__(self, func: Objective, on_grid):
        self.func = func
        self.on_grid = on_grid

    def __call__(self, q):
        return self.func(q)


def solve_two_stage(pos_objective: Objective, make_vel_objective, prior: PriorBox,
                    grids, params) -> Estimate:
    """Coarse + refine on position, then on velocity at the position estimate."""
    pos_grid, vel_grid = grids
    pos_params, vel_params = params
    p0, _, flat_p = coarse_grid_search(pos_objective, pos_grid, prior.pos, return_value=True)
    rp = cga_refine(pos_objective, p0, pos_params, prior.pos)
    vel_objective = make_vel_objective(rp.point)
    v0, _, flat_v = coarse_grid_search(vel_objective, vel_grid, prior.vel, return_value=True)
    rv = cga_refine(vel_objective, v0, vel_params, prior.vel)
    flat = flat_p or flat_v
    return Estimate(rp.point, rv.point, rp.iterations + rv.iterations,
                    rp.converged and rv.converged and not flat, rp.value, rv.value, flat)


def resolve_setup(cfg, prior, grids, params):
    grids = default_grids(cfg, prior) if grids is None else grids
    check_grids(cfg, grids)
    params = default_params(cfg, grids) if params is None else params
    return grids, params


def bayes_objectives(obs: Observation):
    """Position objective and velocity-objective factory of the decoupled MAP."""
    w1 = position_weights(obs)
    w2 = velocity_weights(obs)

    def pos(p):
        return obs.position_terms(p) @ w1

    def vel_factory(p_hat):
        return GridObjective(lambda v: obs.velocity_terms(v, p_hat) @ w2,
                             lambda x, y: obs.velocity_terms_grid(x, y, p_hat) @ w2)

    return pos, vel_factory


def pcga_estimate(frames, cfg: OfdmConfig, prior: PriorBox, grids=None, params=None) -> Estimate:
    """Bayesian probability fusion estimate of target position and velocity."""
    obs = observe(frames, cfg)
    grids, params = resolve_setup(obs.cfg, prior, grids, params)
    pos, vel_factory = bayes_objectives(obs)
    return solve_two_stage(pos, vel_factory, prior, grids, params)


def traverse(objective: Objective, bounds, step: float, chunk: int = 250_000):
    """Dense argmax of a generic objective over a closed box (lowest index wins ties)."""
    x, y = GridSpec(bounds, step, step).axes()
    best, best_val = None, -np.inf
    xx, yy = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    for s in range(0, len(pts), chunk):
        vals = np.asarray(objective(pts[s:s + chunk]), float)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best, best_val = pts[s + i], float(vals[i])
    return np.array(best), best_val


def _interp_sum(coords, lo, step, tables, weights):
    """sum_n w_n * table_n linearly interpolated at coords[n] (same-shape arrays)."""
    total = np.zeros(coords[0].shape)
    for n, w in enumerate(weights):
        pos = (coords[n] - lo[n]) / step[n]
        i0 = np.clip(pos.astype(np.int64), 0, tables.shape[1] - 2)
        frac = pos - i0
        t = tables[n]
        total += w * (t[i0] * (1 - frac) + t[i0 + 1] * frac)
    return total


def _tabulated_search(x, y, coords, node_step, table_fn, weights):
    """Argmax over the x/y grid of the tabulated, weighted per-pair profiles."""
    lo = np.array([c.min() for c in coords])
    hi = np.array([c.max() for c in coords])
    n_nodes = int(np.ceil(np.max(hi - lo) / node_step)) + 2
    step = np.maximum((hi - lo) / (n_nodes - 1), 1e-12)
    tables = table_fn(lo, lo + step * (n_nodes - 1), n_nodes)
    total = _interp_sum(coords, lo, step, tables, weights)
    i, j = np.unravel_index(int(np.argmax(total)), total.shape)
    return np.array([x[i], y[j]])


def traversal_estimate(frames, cfg: OfdmConfig, prior: PriorBox, fine_step) -> Estimate:
    """
    Dense-grid MAP over the prior boxes (oracle and complexity baseline).

    ``fine_step`` is a scalar used for both stages or a (position, velocity)
    pair.  Each pair's aggregated profile is tabulated exactly on nodes four
    times finer than the grid and linearly interpolated at every grid cell.
    """
    obs = observe(frames, cfg)
    pos_step, vel_step = (fine_step, fine_step) if np.isscalar(fine_step) else fine_step
    if not (pos_step > 0 and vel_step > 0):
        raise EmptyGrid("fine step must be positive")
    tx, rx = obs.tx, obs.rx

    x, y = GridSpec(prior.pos, pos_step, pos_step).axes()
    # squared offsets are separable, so build each range map from two 1D arrays
    ranges = [np.sqrt((x[:, None] - rx[n, 0]) ** 2 + (y[None, :] - rx[n, 1]) ** 2)
              + np.sqrt((x[:, None] - tx[n, 0]) ** 2 + (y[None, :] - tx[n, 1]) ** 2)
              for n in range(obs.n_pairs)]
    p_hat = _tabulated_search(x, y, ranges, pos_step / 4, obs.range_table,
                              position_weights(obs))
    del ranges

    vx, vy = GridSpec(prior.vel, vel_step, vel_step).axes()
    u = unit_sum(p_hat, tx, rx)
    speeds = [u[n, 0] * vx[:, None] + u[n, 1] * vy[None, :] for n in range(obs.n_pairs)]
    v_hat = _tabulated_search(vx, vy, speeds, vel_step / 4, obs.doppler_table,
                              velocity_weights(obs))

    pos, vel_factory = bayes_objectives(obs)
    return Estimate(p_hat, v_hat, 0, True, float(pos(p_hat)), float(vel_factory(p_hat)(v_hat)))
