"""
Bounds, weight optimality, error metrics and the transmission-overhead model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllZeroWeights, EmptyList, InvalidCounts, NonPositiveInput, SingularFisher
from .fusion import PriorBox
from .geometry import SPEED_OF_LIGHT, Scene, pair_arrays, range_jacobian, unit_sum
from .waveform import OfdmConfig


def _check_variances(*vals):
    if any(not np.all(np.asarray(v, float) > 0) for v in vals):
        raise NonPositiveInput("variances must be > 0")


def crlb_range(sigma2, sigma_tilde2, k: int, l: int, delta_f: float):
    """Bistatic-range CRLB 3 sigma^2 / (pi^2 (df/c)^2 sigma_tilde^2 K (K^2 - 1) L)."""
    if k < 2 or l < 1:
        raise InvalidCounts(f"need K >= 2 and L >= 1, got K={k}, L={l}")
    _check_variances(sigma2, sigma_tilde2)
    scale = (delta_f / SPEED_OF_LIGHT) ** 2
    return 3 * np.asarray(sigma2, float) / (np.pi**2 * scale * np.asarray(sigma_tilde2, float)
                                           * k * (k * k - 1) * l)


def crlb_speed(sigma2, sigma_tilde2, k: int, l: int, tp: float, lam: float):
    """Bistatic-speed CRLB 3 sigma^2 / (pi^2 (Tp/lambda)^2 sigma_tilde^2 L (L^2 - 1) K)."""
    if l < 2 or k < 1:
        raise InvalidCounts(f"need L >= 2 and K >= 1, got K={k}, L={l}")
    _check_variances(sigma2, sigma_tilde2)
    scale = (tp / lam) ** 2
    return 3 * np.asarray(sigma2, float) / (np.pi**2 * scale * np.asarray(sigma_tilde2, float)
                                           * l * (l * l - 1) * k)


def pair_crlbs(cfg: OfdmConfig, sigma2, sigma_tilde2):
    """(delta_d^2, delta_v^2) for the given per-pair noise and echo variances."""
    return (crlb_range(sigma2, sigma_tilde2, cfg.k, cfg.l, cfg.delta_f),
            crlb_speed(sigma2, sigma_tilde2, cfg.k, cfg.l, cfg.tp, cfg.wavelength))


def _fisher_inverse(jac: np.ndarray, var) -> np.ndarray:
    var = np.broadcast_to(np.asarray(var, float), (jac.shape[0],))
    _check_variances(var)
    if jac.shape[0] < 2:
        raise SingularFisher("need at least two pairs")
    fisher = jac.T @ (jac / var[:, None])
    # relative conditioning test so that the result does not depend on units
    if np.linalg.cond(fisher) > 1e12:
        raise SingularFisher("Fisher information is singular (collinear geometry)")
    cov = np.linalg.inv(fisher)
    return 0.5 * (cov + cov.T)


def crlb_position(p, pairs, range_var) -> np.ndarray:
    """(J^T Pi^-1 J)^-1 with J the bistatic-range Jacobian and Pi = diag(range_var)."""
    return _fisher_inverse(range_jacobian(p, pairs), range_var)


def crlb_velocity(p, pairs, speed_var) -> np.ndarray:
    # the speed Jacobian in velocity equals the range Jacobian in position
    return _fisher_inverse(range_jacobian(p, pairs), speed_var)


@dataclass
class CrlbReport:
    range_var: np.ndarray
    speed_var: np.ndarray
    position_cov: np.ndarray | None
    velocity_cov: np.ndarray | None

    @property
    def position_trace(self):
        return None if self.position_cov is None else float(np.trace(self.position_cov))

    @property
    def velocity_trace(self):
        return None if self.velocity_cov is None else float(np.trace(self.velocity_cov))


def crlb_report(scene: Scene, cfg: OfdmConfig, sigma2: np.ndarray, sigma_tilde2: np.ndarray) -> CrlbReport:
    """Per-pair bounds and fused covariances; covariances are None for degenerate geometry."""
    pairs = scene.pairs()
    dd, dv = pair_crlbs(cfg, np.asarray(sigma2, float), np.asarray(sigma_tilde2, float))
    dd = np.broadcast_to(dd, (len(pairs),)).copy()
    dv = np.broadcast_to(dv, (len(pairs),)).copy()
    try:
        pos = crlb_position(scene.target_pos, pairs, dd)
        vel = crlb_velocity(scene.target_pos, pairs, dv)
    except SingularFisher:
        pos = vel = None
    return CrlbReport(dd, dv, pos, vel)


def global_snr(xi, rho2, e2=None, sigma2=1.0) -> float:
    """
    Weighted fused SNR sum(xi sigma_tilde^2 / E^2) / sum(xi sigma^2 / E^2).

    ``e2`` defaults to equal normalisation energies, which then cancel.
    """
    xi = np.asarray(xi, float)
    rho2 = np.asarray(rho2, float)
    if np.any(xi < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(xi > 0):
        raise AllZeroWeights("at least one weight must be positive")
    e2 = np.ones_like(rho2) if e2 is None else np.asarray(e2, float)
    sigma2 = np.broadcast_to(np.asarray(sigma2, float), rho2.shape)
    num = np.sum(xi * rho2 * sigma2 / e2)
    den = np.sum(xi * sigma2 / e2)
    return float(num / den)


def _errors(estimates, truth: Scene):
    if len(estimates) == 0:
        raise EmptyList("no estimates")
    p = np.array([e.p_hat for e in estimates], float)
    v = np.array([e.v_hat for e in estimates], float)
    ep = np.hypot(*(p - truth.target_pos).T)
    ev = np.hypot(*(v - truth.target_vel).T)
    return ep, ev


def rmse(estimates: Sequence, truth: Scene) -> tuple[float, float]:
    """Root mean squared 2D error of position and of velocity."""
    ep, ev = _errors(estimates, truth)
    return float(np.sqrt(np.mean(ep**2))), float(np.sqrt(np.mean(ev**2)))


def error_cdf(errors, grid) -> np.ndarray:
    """Empirical P(error <= g) for every g in ``grid``."""
    errors = np.sort(np.asarray(errors, float))
    if errors.size == 0:
        raise EmptyList("no errors")
    grid = np.asarray(grid, float)
    return np.searchsorted(errors, grid, side="right") / errors.size


# --- transmission overhead -------------------------------------------------

OVERHEAD_MODES = ("signal", "bayes", "symbol", "soft")


def prior_image(prior: PriorBox, tx, rx, samples: int = 101):
    """Per-pair [min, max] of bistatic range and speed over the prior boxes."""
    x = np.linspace(prior.pos[0], prior.pos[1], samples)
    y = np.linspace(prior.pos[2], prior.pos[3], samples)
    pts = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1).reshape(-1, 2)
    dr = pts[:, None, :] - rx
    dt = pts[:, None, :] - tx
    d = np.hypot(dr[..., 0], dr[..., 1]) + np.hypot(dt[..., 0], dt[..., 1])
    u = unit_sum(pts, tx, rx)  # (P, N, 2)
    # speed is linear in v, so its extremes over the box sit at box corners
    corners = np.array([[prior.vel[i], prior.vel[j]] for i in (0, 1) for j in (2, 3)])
    s = np.einsum("pnc,qc->pqn", u, corners)
    return d.min(0), d.max(0), s.min((0, 1)), s.max((0, 1))


def bayes_cells(cfg: OfdmConfig, prior: PriorBox, scene: Scene) -> np.ndarray:
    """Delay-Doppler resolution cells covering the prior image, per pair."""
    tx, rx = pair_arrays(scene.pairs())
    d_lo, d_hi, s_lo, s_hi = prior_image(prior, tx, rx)
    n_range = np.floor(d_hi / cfg.range_resolution) - np.floor(d_lo / cfg.range_resolution) + 1
    n_speed = np.floor(s_hi / cfg.speed_resolution) - np.floor(s_lo / cfg.speed_resolution) + 1
    n_range = np.minimum(n_range, 2 * cfg.k)
    n_speed = np.minimum(n_speed, 2 * cfg.l)
    return n_range * n_speed


def overhead_scalars(mode: str, cfg: OfdmConfig, prior: PriorBox | None = None,
                     scene: Scene | None = None) -> float:
    """Real scalars each pair sends to the fusion centre (averaged over pairs)."""
    if mode == "signal":
        return float(2 * cfg.k * cfg.l)
    if mode == "bayes":
        if prior is None or scene is None:
            raise ValueError("Bayesian overhead needs the prior box and the AP geometry")
        return float(2 * np.mean(bayes_cells(cfg, prior, scene)))
    if mode == "symbol":
        return float(cfg.k)
    if mode == "soft":
        return 4.0
    raise ValueError(f"unknown overhead mode {mode!r}")


def overhead_bytes(mode: str, cfg: OfdmConfig, prior: PriorBox | None = None,
                   scene: Scene | None = None) -> dict:
    """Payload per pair in real scalars and in bytes at single/double precision."""
    n = overhead_scalars(mode, cfg, prior, scene)
    return {"scalars": n, "bytes_f32": 4 * n, "bytes_f64": 8 * n}


def overhead_table(cfg: OfdmConfig, prior: PriorBox, scene: Scene) -> dict:
    table = {m: overhead_bytes(m, cfg, prior, scene) for m in OVERHEAD_MODES}
    table["bayes_to_signal"] = table["bayes"]["scalars"] / table["signal"]["scalars"]
    return table
