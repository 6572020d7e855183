"""
Bayesian probability fusion objective.

For a pair n the symbol-aggregated range energy

    g_n(d) = sum_l |psi_f(d)^H y_n(:, l)|^2

is a real trigonometric polynomial of degree K-1 in ``df * d / c``; its
coefficients are the subcarrier-lag autocorrelation of the frame summed over
symbols.  The same holds for the subcarrier-aggregated Doppler energy along
the symbol axis.  ``Observation`` precomputes both coefficient sets once per
frame so that the decoupled objectives cost O(K) (resp. O(L)) per pair and
hypothesis, exactly, without re-running the matched filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import czt

from .geometry import (SPEED_OF_LIGHT, bistatic_ranges, bistatic_speeds, pair_arrays,
                       unit_sum)
from .scene import ReceivedFrame, pair_snr
from .waveform import OfdmConfig

# max number of complex exponentials materialised per evaluation chunk
_CHUNK = 2_000_000


@dataclass(frozen=True)
class PriorBox:
    """Closed rectangles for position (xmin, xmax, ymin, ymax) and velocity."""

    pos: tuple[float, float, float, float]
    vel: tuple[float, float, float, float]

    def __post_init__(self):
        for name in ("pos", "vel"):
            box = tuple(float(b) for b in getattr(self, name))
            if len(box) != 4 or not (box[0] < box[1] and box[2] < box[3]):
                raise ValueError(f"{name} box needs min < max on both axes, got {box}")
            object.__setattr__(self, name, box)

    @staticmethod
    def _inside(box, q):
        q = np.asarray(q, float)
        return ((q[..., 0] >= box[0]) & (q[..., 0] <= box[1])
                & (q[..., 1] >= box[2]) & (q[..., 1] <= box[3]))

    def contains_pos(self, p):
        return self._inside(self.pos, p)

    def contains_vel(self, v):
        return self._inside(self.vel, v)


def bayes_weight(rho2, k, l, sigma2):
    """rho^2 / (sigma^2 (K L rho^2 + 1))."""
    rho2 = np.asarray(rho2, float)
    return rho2 / (sigma2 * (k * l * rho2 + 1))


def normalization_energy(rho2, k, l, sigma2):
    """Expected matched-filter energy at the target cell, sigma^2 (K L rho^2 + 1)."""
    return sigma2 * (k * l * np.asarray(rho2, float) + 1)


def log_prior(p, v, prior: PriorBox):
    """0 inside both (closed) boxes, -inf outside; normalising constants dropped."""
    inside = prior.contains_pos(p) & prior.contains_vel(v)
    return np.where(inside, 0.0, -np.inf)


def _autocorr(y: np.ndarray, axis: int) -> np.ndarray:
    """sum over the other axis of r[m] = sum_i y[i+m] conj(y[i]), m = 0..n-1."""
    n = y.shape[axis]
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spec = np.fft.fft(y, nfft, axis=axis)
    power = np.sum(np.abs(spec) ** 2, axis=3 - axis)  # y is (N, K, L)
    return np.fft.ifft(power, axis=1)[:, :n]


def trig_eval(coef: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Evaluate c0 + 2 Re sum_{m>=1} c_m exp(j 2 pi m theta) per pair.

    ``coef`` is (N, M); ``theta`` is (..., N).  Returns (..., N), real.
    """
    theta = np.asarray(theta, float)
    n_pairs, n_coef = coef.shape
    flat = theta.reshape(-1, n_pairs)
    out = np.empty(flat.shape)
    m = np.arange(1, n_coef)
    rows = max(1, _CHUNK // (n_pairs * n_coef))
    for s in range(0, flat.shape[0], rows):
        th = flat[s:s + rows]
        e = np.exp(2j * np.pi * th[..., None] * m)
        out[s:s + rows] = coef[:, 0].real + 2 * np.einsum("pnm,nm->pn", e, coef[:, 1:]).real
    return out.reshape(theta.shape)


class Observation:
    """Stacked frames plus cached per-pair profile coefficients."""

    def __init__(self, frames: Sequence[ReceivedFrame], cfg: OfdmConfig):
        frames = list(frames)
        if not frames:
            raise ValueError("need at least one frame")
        self.frames = frames
        self.cfg = cfg
        self.tx, self.rx = pair_arrays([f.pair for f in frames])
        self.y = np.stack([f.y for f in frames])
        if self.y.shape[1:] != (cfg.k, cfg.l):
            raise ValueError(f"frames are {self.y.shape[1:]}, config expects {(cfg.k, cfg.l)}")
        self.sigma2 = np.array([f.sigma2 for f in frames], float)
        self.rho2 = np.array([pair_snr(f) for f in frames], float)
        self._range_coef = None
        self._doppler_coef = None

    @property
    def n_pairs(self) -> int:
        return len(self.frames)

    @property
    def range_coef(self) -> np.ndarray:
        if self._range_coef is None:
            self._range_coef = _autocorr(self.y, axis=1)
        return self._range_coef

    @property
    def doppler_coef(self) -> np.ndarray:
        if self._doppler_coef is None:
            self._doppler_coef = _autocorr(np.swapaxes(self.y, 1, 2), axis=1)
        return self._doppler_coef

    # phase arguments of the two trigonometric polynomials
    def range_phase(self, d):
        return np.asarray(d, float) * self.cfg.delta_f / SPEED_OF_LIGHT

    def doppler_phase(self, v):
        # psi_s^H conjugates exp(+j2pi l Tp v / lambda), hence the minus sign
        return -np.asarray(v, float) * self.cfg.tp / self.cfg.wavelength

    def ranges(self, p):
        return bistatic_ranges(p, self.tx, self.rx)

    def speeds(self, p, v):
        return bistatic_speeds(p, v, self.tx, self.rx)

    def range_energy(self, d):
        """g_n(d_n) for bistatic ranges d of shape (..., N)."""
        return trig_eval(self.range_coef, self.range_phase(d))

    def doppler_energy(self, v):
        return trig_eval(self.doppler_coef, self.doppler_phase(v))

    def position_terms(self, p):
        return self.range_energy(self.ranges(p))

    def velocity_terms(self, v, p_hat):
        p_hat = np.broadcast_to(np.asarray(p_hat, float), np.shape(v))
        return self.doppler_energy(self.speeds(p_hat, v))

    def velocity_terms_grid(self, vx, vy, p_hat):
        """
        ``velocity_terms`` on the lattice vx x vy -> (len(vx), len(vy), N).

        The Doppler phase is linear in velocity, so exp(j 2 pi m theta) factors
        into an x part and a y part and each pair costs one matrix product.
        """
        u = unit_sum(np.asarray(p_hat, float), self.tx, self.rx)
        coef = self.doppler_coef
        m = np.arange(coef.shape[1])
        out = np.empty((len(vx), len(vy), self.n_pairs))
        for n in range(self.n_pairs):
            ex = np.exp(2j * np.pi * np.outer(self.doppler_phase(u[n, 0] * np.asarray(vx, float)), m))
            ey = np.exp(2j * np.pi * np.outer(self.doppler_phase(u[n, 1] * np.asarray(vy, float)), m))
            s = (ex * coef[n]) @ ey.T
            out[..., n] = 2 * s.real - coef[n, 0].real
        return out

    def range_table(self, d_lo, d_hi, n_nodes):
        """Exact g_n on ``n_nodes`` uniform nodes of [d_lo[n], d_hi[n]] (chirp-z)."""
        out = np.empty((self.n_pairs, n_nodes))
        for i in range(self.n_pairs):
            out[i] = _czt_profile(self.range_coef[i], self.range_phase(d_lo[i]),
                                  self.range_phase(d_hi[i]), n_nodes)
        return out

    def doppler_table(self, v_lo, v_hi, n_nodes):
        out = np.empty((self.n_pairs, n_nodes))
        for i in range(self.n_pairs):
            out[i] = _czt_profile(self.doppler_coef[i], self.doppler_phase(v_lo[i]),
                                  self.doppler_phase(v_hi[i]), n_nodes)
        return out

    def matched_filter(self, p, v):
        """Complex 2D matched-filter output psi_xy^H y per pair -> (..., N)."""
        cfg = self.cfg
        d = self.ranges(p)
        s = self.speeds(p, v)
        k = np.arange(cfg.k)
        l = np.arange(cfg.l)
        conj_f = np.exp(2j * np.pi * k * self.range_phase(d)[..., None])
        conj_s = np.exp(2j * np.pi * l * self.doppler_phase(s)[..., None])
        return np.einsum("...nk,nkl,...nl->...n", conj_f, self.y, conj_s)


def _czt_profile(coef, th_lo, th_hi, n_nodes):
    if n_nodes == 1:
        return trig_eval(coef[None, :], np.array([[th_lo]]))[0]
    step = (th_hi - th_lo) / (n_nodes - 1)
    # sum_m c_m z_k^{-m} with z_k = A W^{-k} = exp(-j 2 pi (th_lo + k step))
    a = np.exp(-2j * np.pi * th_lo)
    w = np.exp(2j * np.pi * step)
    s = czt(coef, n_nodes, w, a)
    return 2 * s.real - coef[0].real


def observe(frames, cfg: OfdmConfig | None = None) -> Observation:
    if isinstance(frames, Observation):
        return frames
    if cfg is None:
        raise ValueError("an OfdmConfig is required when passing raw frames")
    return Observation(frames, cfg)


def position_weights(obs: Observation) -> np.ndarray:
    return obs.rho2 / (obs.sigma2 * (obs.cfg.k * obs.rho2 + 1))


def velocity_weights(obs: Observation) -> np.ndarray:
    return obs.rho2 / (obs.sigma2 * (obs.cfg.l * obs.rho2 + 1))


def full_weights(obs: Observation) -> np.ndarray:
    return bayes_weight(obs.rho2, obs.cfg.k, obs.cfg.l, obs.sigma2)


def fused_position_objective(p, frames, cfg: OfdmConfig | None = None):
    """Weighted symbol-aggregated range energy summed over pairs (position stage)."""
    obs = observe(frames, cfg)
    return obs.position_terms(p) @ position_weights(obs)


def fused_velocity_objective(v, p_hat, frames, cfg: OfdmConfig | None = None):
    obs = observe(frames, cfg)
    return obs.velocity_terms(v, p_hat) @ velocity_weights(obs)


def observed_term(p, v, frames, cfg: OfdmConfig | None = None):
    """sum_n rho^2 |psi_xy^H y|^2 / (sigma^2 (K L rho^2 + 1))."""
    obs = observe(frames, cfg)
    return np.abs(obs.matched_filter(p, v)) ** 2 @ full_weights(obs)


def fused_full_objective(p, v, frames, cfg: OfdmConfig | None = None, prior: PriorBox | None = None):
    """Observed term plus uniform log prior (-inf outside the boxes)."""
    val = observed_term(p, v, frames, cfg)
    if prior is None:
        return val
    return val + log_prior(p, v, prior)


def normalized_fused_spectrum(p, v, frames, cfg: OfdmConfig | None = None):
    """sum_n rho^2 |psi_xy^H y|^2 / E^2_n with E^2_n the expected peak energy."""
    obs = observe(frames, cfg)
    e2 = normalization_energy(obs.rho2, obs.cfg.k, obs.cfg.l, obs.sigma2)
    return np.abs(obs.matched_filter(p, v)) ** 2 @ (obs.rho2 / e2)


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    """Objective sampled on a rectangular grid; ``values[i, j]`` is at (x[i], y[j])."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    domain: str = "position"

    def __post_init__(self):
        if self.values.shape != (len(self.x), len(self.y)):
            raise ValueError("values shape does not match axes")
        if self.domain not in ("position", "velocity"):
            raise ValueError(f"unknown domain {self.domain!r}")

    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return np.array([self.x[i], self.y[j]])


def sample_spectrum(objective, x, y, domain="position") -> SpectrumGrid:
    xx, yy = np.meshgrid(x, y, indexing="ij")
    vals = objective(np.stack([xx, yy], axis=-1))
    return SpectrumGrid(np.asarray(x), np.asarray(y), np.asarray(vals, float), domain)
