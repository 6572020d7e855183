"""
Comparison fusion schemes: signal fusion (non-coherent / coherent), soft and
hard parameter fusion, and symbol fusion.

Every scheme is exposed as a position objective plus a velocity-objective
factory (the same decoupled structure the Bayesian estimator uses), so all of
them can be solved by the PCGA routines in ``solvers``.  Hard parameter
fusion is the exception: it is a Gauss-Newton weighted least squares fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .analysis import crlb_range, crlb_speed, prior_image
from .errors import BoundsTooNarrow, Diverged, SingularNormalEquations
from .fusion import Observation, PriorBox, observe, trig_eval
from .geometry import bistatic_ranges, unit_sum
from .scene import ReceivedFrame
from .solvers import (Estimate, GridObjective, resolve_setup, coarse_grid_search,
                      solve_two_stage)
from .waveform import OfdmConfig, freq_steering, time_steering

# clip level for symbol-fusion factors, keeps the product (and its log) finite
SYMBOL_FLOOR = 1e-12


@dataclass(frozen=True)
class PairMeasurement:
    pair_index: int
    d_hat: float
    v_hat: float
    d_var: float
    v_var: float

    def __post_init__(self):
        if not (self.d_var > 0 and self.v_var > 0):
            raise ValueError("measurement variances must be > 0")


# --- per-pair delay / Doppler estimation ------------------------------------

def _peak_1d(coef: np.ndarray, phase, lo: float, hi: float, step: float, strict: bool):
    """Argmax of one pair's trigonometric profile on [lo, hi], golden-section refined."""
    n = int(np.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, max(n, 3))
    vals = trig_eval(coef[None, :], phase(grid)[:, None])[:, 0]
    i = int(np.argmax(vals))
    if i in (0, len(grid) - 1):
        if strict:
            raise BoundsTooNarrow(f"profile peak at search edge {grid[i]:.6g}")
        return float(grid[i])

    def neg(x):
        return -trig_eval(coef[None, :], np.array([[phase(x)]]))[0, 0]

    res = minimize_scalar(neg, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                          tol=1e-10)
    x = float(res.x)
    return x if grid[i - 1] <= x <= grid[i + 1] and -res.fun >= vals[i] else float(grid[i])


def per_pair_estimates(frames, cfg: OfdmConfig, search_bounds, strict: bool = True):
    """
    Range and speed of every pair from its own 1D matched-filter profiles.

    ``search_bounds`` holds per pair ((d_lo, d_hi), (v_lo, v_hi)).  The scan
    step is a quarter resolution cell.  With ``strict`` a peak on an interval
    edge raises BoundsTooNarrow; otherwise the edge value is returned.
    """
    obs = observe(frames, cfg)
    cfg = obs.cfg
    out = []
    for n, frame in enumerate(obs.frames):
        (d_lo, d_hi), (v_lo, v_hi) = search_bounds[n]
        d_hat = _peak_1d(obs.range_coef[n], obs.range_phase, d_lo, d_hi,
                         cfg.range_resolution / 4, strict)
        v_hat = _peak_1d(obs.doppler_coef[n], obs.doppler_phase, v_lo, v_hi,
                         cfg.speed_resolution / 4, strict)
        d_var = float(crlb_range(frame.sigma2, frame.sigma_tilde2, cfg.k, cfg.l, cfg.delta_f))
        v_var = float(crlb_speed(frame.sigma2, frame.sigma_tilde2, cfg.k, cfg.l, cfg.tp,
                                 cfg.wavelength))
        out.append(PairMeasurement(frame.pair.index, d_hat, v_hat, d_var, v_var))
    return out


def per_pair_estimate(frame: ReceivedFrame, cfg: OfdmConfig, search_bounds,
                      strict: bool = True) -> PairMeasurement:
    return per_pair_estimates([frame], cfg, [search_bounds], strict)[0]


def prior_search_bounds(obs: Observation, prior: PriorBox, margin_cells: float = 1.0):
    """Per-pair 1D search intervals: image of the prior boxes plus a margin."""
    cfg = obs.cfg
    d_lo, d_hi, s_lo, s_hi = prior_image(prior, obs.tx, obs.rx)
    dm = margin_cells * cfg.range_resolution
    vm = margin_cells * cfg.speed_resolution
    return [((d_lo[n] - dm, d_hi[n] + dm), (s_lo[n] - vm, s_hi[n] + vm))
            for n in range(obs.n_pairs)]


# --- signal fusion -----------------------------------------------------------

def signal_fusion_spectrum(frames, cfg: OfdmConfig | None = None, mode: str = "noncoherent"):
    """
    Joint (p, v) signal-fusion spectrum.

    noncoherent: sum over pairs of the matched-filter moduli |psi_xy^H y|.
    coherent: |sum over pairs of psi_xy^H y|^2.
    """
    obs = observe(frames, cfg)
    if mode == "noncoherent":
        return lambda p, v: np.sum(np.abs(obs.matched_filter(p, v)), axis=-1)
    if mode == "coherent":
        return lambda p, v: np.abs(np.sum(obs.matched_filter(p, v), axis=-1)) ** 2
    raise ValueError(f"unknown signal fusion mode {mode!r}")


def noncoherent_objectives(obs: Observation):
    """Decoupled stages: sum_n sqrt(g_n), the moduli of the per-pair profiles."""

    def pos(p):
        return np.sum(np.sqrt(np.maximum(obs.position_terms(p), 0.0)), axis=-1)

    def vel_factory(p_hat):
        return GridObjective(
            lambda v: np.sum(np.sqrt(np.maximum(obs.velocity_terms(v, p_hat), 0.0)), axis=-1),
            lambda x, y: np.sum(np.sqrt(np.maximum(obs.velocity_terms_grid(x, y, p_hat), 0.0)),
                                axis=-1))

    return pos, vel_factory


def coherent_objectives(obs: Observation):
    """Per-symbol (resp. per-subcarrier) complex sums across pairs, then energy."""
    cfg = obs.cfg

    def pos(p):
        d = obs.ranges(p)  # (..., N)
        mf = np.einsum("...nk,nkl->...nl", np.conj(freq_steering(d, cfg)), obs.y)
        return np.sum(np.abs(mf.sum(axis=-2)) ** 2, axis=-1)

    def vel_factory(p_hat):
        def vel(v):
            s = obs.speeds(np.broadcast_to(np.asarray(p_hat, float), np.shape(v)), v)
            mf = np.einsum("...nl,nkl->...nk", np.conj(time_steering(s, cfg)), obs.y)
            return np.sum(np.abs(mf.sum(axis=-2)) ** 2, axis=-1)
        return vel

    return pos, vel_factory


# --- parameter fusion --------------------------------------------------------

def _meas_arrays(measurements):
    d = np.array([m.d_hat for m in measurements])
    v = np.array([m.v_hat for m in measurements])
    dv = np.array([m.d_var for m in measurements])
    vv = np.array([m.v_var for m in measurements])
    return d, v, dv, vv


def soft_objectives(measurements, tx: np.ndarray, rx: np.ndarray):
    """Gaussian reconstructions centred on the per-pair estimates (log domain)."""
    d_hat, v_hat, d_var, v_var = _meas_arrays(measurements)

    def pos(p):
        return -np.sum((bistatic_ranges(p, tx, rx) - d_hat) ** 2 / (2 * d_var), axis=-1)

    def vel_factory(p_hat):
        u = unit_sum(np.asarray(p_hat, float), tx, rx)

        def vel(v):
            s = np.asarray(v, float) @ u.T
            return -np.sum((s - v_hat) ** 2 / (2 * v_var), axis=-1)
        return vel

    return pos, vel_factory


def parameter_fusion_soft(measurements, tx, rx, prior: PriorBox, cfg: OfdmConfig,
                          grids=None, params=None) -> Estimate:
    grids, params = resolve_setup(cfg, prior, grids, params)
    pos, vel_factory = soft_objectives(measurements, tx, rx)
    return solve_two_stage(pos, vel_factory, prior, grids, params)


def _solve_normal(jac, w, resid):
    a = jac.T @ (jac * w[:, None])
    if jac.shape[0] < 2 or np.linalg.cond(a) > 1e12:
        raise SingularNormalEquations("normal equations are rank deficient")
    return np.linalg.solve(a, jac.T @ (w * resid))


def parameter_fusion_hard(measurements, tx, rx, init, max_iter: int = 50,
                          tol: float = 1e-9) -> Estimate:
    """
    Gauss-Newton weighted least squares on the bistatic ranges, then linear
    weighted least squares for velocity at the position estimate.
    """
    d_hat, v_hat, d_var, v_var = _meas_arrays(measurements)
    p = np.asarray(init, float).copy()
    scale = 1e3 * (1 + np.max(np.abs(np.vstack([tx, rx]))))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = unit_sum(p, tx, rx)
        step = _solve_normal(jac, 1 / d_var, d_hat - bistatic_ranges(p, tx, rx))
        p = p + step
        if not np.all(np.isfinite(p)) or np.max(np.abs(p)) > scale:
            raise Diverged(f"Gauss-Newton left the scene after {it} iterations")
        if np.hypot(*step) < tol:
            converged = True
            break
    jac = unit_sum(p, tx, rx)
    v = _solve_normal(jac, 1 / v_var, v_hat)
    resid = np.sum((bistatic_ranges(p, tx, rx) - d_hat) ** 2 / d_var)
    return Estimate(p, v, it, converged, float(-resid / 2))


# --- symbol fusion -----------------------------------------------------------

def symbol_vectors(obs: Observation, measurements):
    """
    Per pair: Doppler-compensate with v_hat and average over symbols (K-vector),
    and delay-compensate with d_hat and average over subcarriers (L-vector).
    Each vector is rotated so that its correlation with the steering vector at
    the per-pair estimate is real and positive.
    """
    cfg = obs.cfg
    d_hat, v_hat, _, _ = _meas_arrays(measurements)
    ps = time_steering(v_hat, cfg)  # (N, L)
    pf = freq_steering(d_hat, cfg)  # (N, K)
    yf = np.einsum("nkl,nl->nk", obs.y, np.conj(ps)) / cfg.l
    ys = np.einsum("nkl,nk->nl", obs.y, np.conj(pf)) / cfg.k
    af = np.einsum("nk,nk->n", np.conj(pf), yf)
    as_ = np.einsum("nl,nl->n", np.conj(ps), ys)
    yf *= np.exp(-1j * np.angle(af))[:, None]
    ys *= np.exp(-1j * np.angle(as_))[:, None]
    return yf, ys


def symbol_fusion_spectrum(frames, cfg: OfdmConfig | None, measurements):
    """Position spectrum prod_n max(Re{psi_f(d_n(p))^H ybar_n}, floor)."""
    obs = observe(frames, cfg)
    yf, _ = symbol_vectors(obs, measurements)

    def spectrum(p):
        s = _symbol_terms(obs, yf, obs.ranges(p), freq_steering)
        return np.prod(np.maximum(s, SYMBOL_FLOOR), axis=-1)
    return spectrum


def _symbol_terms(obs, vec, coord, steering):
    return np.einsum("...nk,nk->...n", np.conj(steering(coord, obs.cfg)), vec).real


def symbol_objectives(obs: Observation, measurements):
    """Log of the symbol-fusion products (same argmax, better conditioned)."""
    yf, ys = symbol_vectors(obs, measurements)

    def pos(p):
        s = _symbol_terms(obs, yf, obs.ranges(p), freq_steering)
        return np.sum(np.log(np.maximum(s, SYMBOL_FLOOR)), axis=-1)

    def vel_factory(p_hat):
        def vel(v):
            s = obs.speeds(np.broadcast_to(np.asarray(p_hat, float), np.shape(v)), v)
            t = _symbol_terms(obs, ys, s, time_steering)
            return np.sum(np.log(np.maximum(t, SYMBOL_FLOOR)), axis=-1)

        u = unit_sum(np.asarray(p_hat, float), obs.tx, obs.rx)

        def on_grid(x, y):
            # speed is linear in v: conj steering factors into x and y parts
            total = np.zeros((len(x), len(y)))
            for n in range(obs.n_pairs):
                ex = np.conj(time_steering(u[n, 0] * np.asarray(x, float), obs.cfg))
                ey = np.conj(time_steering(u[n, 1] * np.asarray(y, float), obs.cfg))
                t = ((ex * ys[n]) @ ey.T).real
                total += np.log(np.maximum(t, SYMBOL_FLOOR))
            return total

        return GridObjective(vel, on_grid)

    return pos, vel_factory


# --- dispatch ----------------------------------------------------------------

def soft_coarse_init(measurements, tx, rx, prior: PriorBox, cfg: OfdmConfig, grids=None):
    grids, _ = resolve_setup(cfg, prior, grids, None)
    pos, _ = soft_objectives(measurements, tx, rx)
    return coarse_grid_search(pos, grids[0], prior.pos)


def baseline_estimate(method: str, frames, cfg: OfdmConfig, prior: PriorBox,
                      grids=None, params=None, measurements=None) -> Estimate:
    """Run one comparison scheme end to end on a set of frames."""
    obs = observe(frames, cfg)
    cfg = obs.cfg
    if method in ("param_soft", "param_hard", "symbol") and measurements is None:
        measurements = per_pair_estimates(obs, cfg, prior_search_bounds(obs, prior), strict=False)
    if method == "param_hard":
        init = soft_coarse_init(measurements, obs.tx, obs.rx, prior, cfg, grids)
        return parameter_fusion_hard(measurements, obs.tx, obs.rx, init)
    grids, params = resolve_setup(cfg, prior, grids, params)
    if method == "signal_nc":
        pos, vel = noncoherent_objectives(obs)
    elif method == "signal_c":
        pos, vel = coherent_objectives(obs)
    elif method == "param_soft":
        pos, vel = soft_objectives(measurements, obs.tx, obs.rx)
    elif method == "symbol":
        pos, vel = symbol_objectives(obs, measurements)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    return solve_two_stage(pos, vel, prior, grids, params)
