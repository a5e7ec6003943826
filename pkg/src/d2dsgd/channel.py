"""Wireless medium: pathloss, per-block Rayleigh fading, AWGN, and power.

Link (i, j) carries the coefficient h'_ij = sqrt(A0) (d_ij/d0)^(-gamma/2) h_ij
with h_ij ~ CN(0, 1) redrawn independently every communication block and held
constant within the block.  Blocked pairs (non-edges) carry nothing.  All
internal arithmetic is linear; dBm/dB appear only at the configuration
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .streams import substream

__all__ = [
    "ChannelConfig",
    "ChannelRealization",
    "dbm_to_watts",
    "watts_to_dbm",
    "slow_power_gain",
    "draw_block",
    "draw_complex_noise",
    "calibrate_power",
    "equal_snr_override",
]

SNR_REF_DISTANCE_M = 125.0


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(w):
    return 10.0 * math.log10(w / 1e-3)


@dataclass(frozen=True)
class ChannelConfig:
    """Static channel and resource parameters for one deployment.

    A0: power gain at reference distance d0_m; gamma: pathloss exponent;
    N0_W: AWGN power; P_W: transmit energy per channel use; N: channel uses
    per block; M: slots per block (set once a schedule is chosen).
    ``slow_gain_override`` replaces every link's pathloss power gain by one
    common constant (used to isolate topology effects from pathloss).
    """

    A0: float
    d0_m: float
    gamma: float
    N0_W: float
    P_W: float
    N: int
    M: int | None = None
    slow_gain_override: float | None = None

    def __post_init__(self):
        for name in ("A0", "d0_m", "gamma", "P_W"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.N0_W < 0:
            raise ValueError(f"N0_W must be nonnegative, got {self.N0_W}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.M is not None and not (1 <= self.M <= self.N):
            raise ValueError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")

    @classmethod
    def build(cls, *, A0, d0_m, gamma, N0_dBm, N, M=None, P_W=None,
              snr_dB=None, snr_ref_distance_m=SNR_REF_DISTANCE_M):
        """Construct from dBm noise and either P_W or a target received SNR."""
        N0 = dbm_to_watts(N0_dBm)
        if P_W is None:
            if snr_dB is None:
                raise ValueError("give either P_W or snr_dB")
            gain = A0 * (snr_ref_distance_m / d0_m) ** (-gamma)
            P_W = 10.0 ** (snr_dB / 10.0) * N0 / gain
        return cls(A0=A0, d0_m=d0_m, gamma=gamma, N0_W=N0, P_W=P_W, N=int(N), M=M)


def slow_power_gain(config, topology, i, j):
    """Pathloss power gain A0 (d_ij/d0)^(-gamma) of link (i, j), or the override."""
    if config.slow_gain_override is not None:
        return config.slow_gain_override
    d = topology.distance(i, j)
    if d <= 0:
        raise ValueError(f"nodes {i} and {j} are co-located; pathloss undefined")
    return config.A0 * (d / config.d0_m) ** (-config.gamma)


def calibrate_power(config, target_snr_db, reference_distance_m=SNR_REF_DISTANCE_M):
    """P such that the fading-averaged received SNR at the reference distance hits the target."""
    if not math.isfinite(target_snr_db):
        raise ValueError("target SNR must be finite")
    if config.slow_gain_override is not None:
        gain = config.slow_gain_override
    else:
        gain = config.A0 * (reference_distance_m / config.d0_m) ** (-config.gamma)
    return 10.0 ** (target_snr_db / 10.0) * config.N0_W / gain


def equal_snr_override(config, target_snr_db):
    """Config whose every link has the common slow gain matching the target SNR."""
    gain = 10.0 ** (target_snr_db / 10.0) * config.N0_W / config.P_W
    return replace(config, slow_gain_override=gain)


@dataclass(frozen=True)
class ChannelRealization:
    """One block's fading draw: full coefficients h' for every unblocked link."""

    block: int
    coeffs: dict

    def coeff(self, i, j):
        key = (i, j) if i < j else (j, i)
        return self.coeffs[key]

    def power_gain(self, i, j):
        c = self.coeff(i, j)
        return c.real * c.real + c.imag * c.imag

    def min_neighbor_gain(self, topology, i):
        if not topology.neighbors(i):
            raise ValueError(f"node {i} has no neighbors")
        return min(self.power_gain(i, j) for j in topology.neighbors(i))


def draw_block(config, topology, seed, t):
    """Fading realization of block t; reciprocal (h'_ij = h'_ji) and reproducible."""
    rng = substream(seed, "fading", t)
    edges = sorted(topology.edges)
    z = rng.standard_normal(2 * len(edges))
    coeffs = {}
    for k, (i, j) in enumerate(edges):
        h = complex(z[2 * k], z[2 * k + 1]) / math.sqrt(2.0)
        coeffs[(i, j)] = math.sqrt(slow_power_gain(config, topology, i, j)) * h
    return ChannelRealization(block=t, coeffs=coeffs)


def draw_complex_noise(rng, size, N0_W):
    """Circular complex Gaussian with per-entry power N0 (N0/2 per real dimension)."""
    if N0_W == 0.0:
        return np.zeros(size, dtype=complex)
    scale = math.sqrt(N0_W / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
