"""
Bistatic geometry in the horizontal plane.

Positions and velocities are plain numpy arrays whose last axis has length 2
(x, y).  Most functions broadcast over leading axes so that whole grids of
hypotheses can be evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry

SPEED_OF_LIGHT = 299792458.0  # m/s

# below this distance the target is considered to sit on an antenna
_MIN_NORM = 1e-9


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"expected trailing dimension 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class ApPair:
    """One transmit/receive AP pair. ``index`` is the flattened pair number."""

    tx_index: int
    rx_index: int
    tx_pos: np.ndarray
    rx_pos: np.ndarray
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tx_pos", as_point(self.tx_pos))
        object.__setattr__(self, "rx_pos", as_point(self.rx_pos))


@dataclass(frozen=True, eq=False)
class Scene:
    """AP layout plus target truth for one experiment."""

    tx_aps: np.ndarray
    rx_aps: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        tx = np.atleast_2d(as_point(self.tx_aps))
        rx = np.atleast_2d(as_point(self.rx_aps))
        if tx.shape[0] < 1 or rx.shape[0] < 1:
            raise ValueError("scene needs at least one tAP and one rAP")
        target = as_point(self.target_pos)
        vel = as_point(self.target_vel)
        for ap in np.vstack([tx, rx]):
            if np.hypot(*(ap - target)) < _MIN_NORM:
                raise DegenerateGeometry(f"target {target} coincides with AP {ap}")
        object.__setattr__(self, "tx_aps", tx)
        object.__setattr__(self, "rx_aps", rx)
        object.__setattr__(self, "target_pos", target)
        object.__setattr__(self, "target_vel", vel)

    @property
    def n_pairs(self) -> int:
        return self.tx_aps.shape[0] * self.rx_aps.shape[0]

    def pairs(self) -> list[ApPair]:
        # receive index runs fastest: n = t * R + r
        out = []
        n_rx = self.rx_aps.shape[0]
        for t, tx in enumerate(self.tx_aps):
            for r, rx in enumerate(self.rx_aps):
                out.append(ApPair(t, r, tx, rx, index=t * n_rx + r))
        return out


def pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Stack pair positions into ``(N, 2)`` transmitter and receiver arrays."""
    if isinstance(pairs, ApPair):
        pairs = [pairs]
    tx = np.array([pp.tx_pos for pp in pairs], dtype=float).reshape(-1, 2)
    rx = np.array([pp.rx_pos for pp in pairs], dtype=float).reshape(-1, 2)
    return tx, rx


def _offsets(p, tx, rx):
    p = np.asarray(p, dtype=float)[..., None, :]
    return p - rx, p - tx


def bistatic_ranges(p, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    """Bistatic ranges of points ``p`` (..., 2) for N pairs -> (..., N)."""
    dr, dt = _offsets(p, tx, rx)
    return np.hypot(dr[..., 0], dr[..., 1]) + np.hypot(dt[..., 0], dt[..., 1])


def unit_sum(p, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    """Sum of unit vectors from each AP towards ``p`` -> (..., N, 2).

    This is both the gradient of the bistatic range with respect to position
    and the (linear) coefficient of the bistatic speed in the velocity.
    """
    dr, dt = _offsets(p, tx, rx)
    nr = np.hypot(dr[..., 0], dr[..., 1])[..., None]
    nt = np.hypot(dt[..., 0], dt[..., 1])[..., None]
    if np.any(nr < _MIN_NORM) or np.any(nt < _MIN_NORM):
        raise DegenerateGeometry("target position coincides with an AP")
    return dr / nr + dt / nt


def bistatic_speeds(p, v, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    """Bistatic range rates for positions ``p`` and velocities ``v`` -> (..., N)."""
    u = unit_sum(p, tx, rx)
    v = np.asarray(v, dtype=float)[..., None, :]
    return np.sum(u * v, axis=-1)


def bistatic_range(p, pair: ApPair) -> float:
    """||p - rx|| + ||p - tx||."""
    tx, rx = pair_arrays(pair)
    return float(bistatic_ranges(as_point(p), tx, rx)[0])


def bistatic_speed(p, v, pair: ApPair) -> float:
    tx, rx = pair_arrays(pair)
    return float(bistatic_speeds(as_point(p), as_point(v), tx, rx)[0])


def range_jacobian(p, pairs) -> np.ndarray:
    """N x 2 Jacobian of the bistatic ranges with respect to target position."""
    tx, rx = pair_arrays(pairs)
    return unit_sum(as_point(p), tx, rx)


def speed_jacobian(p, pairs) -> np.ndarray:
    """N x 2 Jacobian of the bistatic speeds with respect to target velocity.

    The speed is linear in velocity with the same coefficients as the range
    gradient, so this is the range Jacobian.
    """
    return range_jacobian(p, pairs)
