"""
OFDM grid, Zadoff-Chu sensing sequences and delay/Doppler steering vectors.

Subcarriers are indexed k = 0..K-1 and symbols l = 0..L-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import InvalidRoot, ShapeMismatch
from .geometry import SPEED_OF_LIGHT


@dataclass(frozen=True)
class OfdmConfig:
    fc: float
    delta_f: float
    tp: float
    k: int
    l: int

    def __post_init__(self):
        for name in ("fc", "delta_f", "tp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if int(self.k) < 2 or int(self.l) < 2:
            raise ValueError("need at least 2 subcarriers and 2 symbols")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def range_resolution(self) -> float:
        """Main-lobe half width of the range profile, c / (2 K df)."""
        return SPEED_OF_LIGHT / (2 * self.k * self.delta_f)

    @property
    def speed_resolution(self) -> float:
        return self.wavelength / (2 * self.l * self.tp)


@dataclass(frozen=True, eq=False)
class SensingSequence:
    values: np.ndarray
    root: int

    def __post_init__(self):
        if not np.allclose(np.abs(self.values), 1.0, atol=1e-12):
            raise ValueError("sensing sequence must have unit modulus")


def zadoff_chu_seq(root: int, length: int) -> np.ndarray:
    """
    Odd-length Zadoff-Chu sequence x[n] = exp(-j pi root n (n+1) / length).

    Raises InvalidRoot unless ``0 < root < length``, ``length`` is odd and
    ``gcd(root, length) == 1``.
    """
    if length < 1 or length % 2 == 0:
        raise InvalidRoot(f"length must be odd, got {length}")
    if not 0 < root < length or gcd(root, length) != 1:
        raise InvalidRoot(f"root {root} is not coprime with length {length}")
    n = np.arange(length)
    # n(n+1) mod 2*length keeps the phase argument small for long sequences
    phase = (n * (n + 1)) % (2 * length)
    return np.exp(-1j * np.pi * root * phase / length)


def sensing_sequence(cfg: OfdmConfig, root: int = 1) -> SensingSequence:
    """K x L sequence cut from one Zadoff-Chu sequence, filled symbol by symbol."""
    n = cfg.k * cfg.l
    length = n if n % 2 else n + 1
    x = zadoff_chu_seq(root, length)[:n]
    return SensingSequence(x.reshape(cfg.l, cfg.k).T.copy(), root)


def remove_sequence(raw: np.ndarray, seq: SensingSequence) -> np.ndarray:
    """Element-wise division by the transmitted sequence."""
    raw = np.asarray(raw)
    if raw.shape != seq.values.shape:
        raise ShapeMismatch(f"frame {raw.shape} vs sequence {seq.values.shape}")
    return raw / seq.values


def freq_steering(d, cfg: OfdmConfig) -> np.ndarray:
    """exp(-j 2 pi k df d / c) for k = 0..K-1; broadcasts over ``d``."""
    k = np.arange(cfg.k)
    d = np.asarray(d, dtype=float)[..., None]
    return np.exp(-2j * np.pi * k * cfg.delta_f * d / SPEED_OF_LIGHT)


def time_steering(v, cfg: OfdmConfig) -> np.ndarray:
    """exp(+j 2 pi l Tp v / lambda) for l = 0..L-1; broadcasts over ``v``."""
    l = np.arange(cfg.l)
    v = np.asarray(v, dtype=float)[..., None]
    return np.exp(2j * np.pi * l * cfg.tp * v / cfg.wavelength)


def dft_codebook(m: int, n_a: int) -> np.ndarray:
    """M x N_a DFT beam codebook with unit-norm columns."""
    if m < 1 or n_a < 1:
        raise ValueError("codebook dimensions must be positive")
    i = np.arange(m)[:, None]
    n = np.arange(n_a)[None, :]
    return np.exp(-2j * np.pi * i * n / n_a) / np.sqrt(m)
