"""
Echo synthesis under the Swerling-I fluctuation model.

Frames are produced after sequence removal, i.e. ``y = beta * Psi + z`` with
``Psi`` the outer product of the delay and Doppler steering vectors.  Every
(trial, pair) gets its own random substream derived from one master seed, so
frames do not depend on the order or concurrency in which they are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonPositiveInput
from .geometry import ApPair, Scene, bistatic_range, bistatic_speed
from .waveform import OfdmConfig, freq_steering, time_steering


@dataclass(frozen=True)
class SnrModel:
    """
    Either ``radar_equation`` (pt, g, rcs_mean) or ``fixed_snr`` with one linear
    rho^2 = sigma_tilde^2 / sigma^2 per pair.
    """

    mode: str = "fixed_snr"
    pt: float | None = None
    g: float | None = None
    rcs_mean: float | None = None
    rho2: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode == "radar_equation":
            for name in ("pt", "g", "rcs_mean"):
                val = getattr(self, name)
                if val is None or not val > 0:
                    raise NonPositiveInput(f"{name} must be > 0 in radar_equation mode")
        elif self.mode == "fixed_snr":
            if len(self.rho2) == 0 or any(not r > 0 for r in self.rho2):
                raise NonPositiveInput("fixed_snr needs a non-empty list of positive rho2")
            object.__setattr__(self, "rho2", tuple(float(r) for r in self.rho2))
        else:
            raise ValueError(f"unknown SNR mode {self.mode!r}")

    @classmethod
    def from_db(cls, rho2_db: Sequence[float]) -> "SnrModel":
        return cls(mode="fixed_snr", rho2=tuple(10 ** (np.asarray(rho2_db, float) / 10)))

    def sigma_tilde2(self, pair: ApPair, target_pos, cfg: OfdmConfig, sigma2: float) -> float:
        if self.mode == "fixed_snr":
            if pair.index >= len(self.rho2):
                raise ValueError(f"no SNR given for pair {pair.index}")
            return self.rho2[pair.index] * sigma2
        target = np.asarray(target_pos, float)
        d_t = float(np.hypot(*(target - pair.tx_pos)))
        d_r = float(np.hypot(*(target - pair.rx_pos)))
        return swerling_variance(self.pt, self.g, self.rcs_mean, cfg.wavelength, d_t, d_r)


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    pair: ApPair
    y: np.ndarray
    sigma2: float
    sigma_tilde2: float

    def __post_init__(self):
        if self.y.ndim != 2:
            raise ValueError("frame must be a K x L matrix")
        if not self.sigma2 > 0:
            raise NonPositiveInput("noise variance must be > 0")


def swerling_variance(pt, g, rcs_mean, lam, d_t, d_r) -> float:
    """Bistatic radar-equation variance Pt G^2 rcs lambda^2 / ((4 pi)^3 d_r^2 d_t^2)."""
    if min(pt, g, rcs_mean, lam, d_t, d_r) <= 0:
        raise NonPositiveInput("radar equation inputs must be positive")
    return pt * g**2 * rcs_mean * lam**2 / ((4 * np.pi) ** 3 * d_r**2 * d_t**2)


def draw_beta(sigma_tilde2: float, rng: np.random.Generator) -> complex:
    """One CN(0, sigma_tilde2) draw."""
    re, im = rng.standard_normal(2)
    return complex(re, im) * np.sqrt(sigma_tilde2 / 2)


def pair_rng(seed: int, trial: int, pair_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, pair_index)))


def noiseless_matrix(d: float, v: float, cfg: OfdmConfig) -> np.ndarray:
    return np.outer(freq_steering(d, cfg), time_steering(v, cfg))


def synthesize_frame(pair: ApPair, truth: Scene, cfg: OfdmConfig, snr: SnrModel,
                     sigma2: float, rng: np.random.Generator, beta: complex | None = None,
                     ) -> ReceivedFrame:
    """
    Draw one received frame for ``pair``.

    ``beta`` pins the channel gain (tests); otherwise it is drawn from
    CN(0, sigma_tilde2).  ``sigma2 == 0`` produces a noiseless frame, whose
    recorded noise variance is then 1 so that the fusion weights stay defined.
    """
    d = bistatic_range(truth.target_pos, pair)
    v = bistatic_speed(truth.target_pos, truth.target_vel, pair)
    declared_sigma2 = sigma2 if sigma2 > 0 else 1.0
    st2 = snr.sigma_tilde2(pair, truth.target_pos, cfg, declared_sigma2)
    if beta is None:
        beta = draw_beta(st2, rng)
    y = beta * noiseless_matrix(d, v, cfg)
    if sigma2 > 0:
        z = rng.standard_normal((cfg.k, cfg.l)) + 1j * rng.standard_normal((cfg.k, cfg.l))
        y = y + z * np.sqrt(sigma2 / 2)
    return ReceivedFrame(pair, y, declared_sigma2, st2)


def synthesize_frames(truth: Scene, cfg: OfdmConfig, snr: SnrModel, sigma2: float,
                      seed: int, trial: int = 0) -> list[ReceivedFrame]:
    """All pairs of one Monte Carlo trial."""
    return [
        synthesize_frame(pair, truth, cfg, snr, sigma2, pair_rng(seed, trial, pair.index))
        for pair in truth.pairs()
    ]


def pair_snr(frame: ReceivedFrame) -> float:
    return frame.sigma_tilde2 / frame.sigma2
