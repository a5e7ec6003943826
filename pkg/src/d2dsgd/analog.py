"""Analog AirComp protocol: aligned superposition, noisy broadcast, and the
consensus update with an adaptive step size.

Odd slots: every leaf of a scheduled star pre-inverts its channel so the
center receives the mixing-weighted sum of projected model differences plus
noise.  Even slots: the center broadcasts its own projection and receivers
invert their channels.  Power scaling meets the per-slot energy cap with
equality for the binding transmitter.  Each device tracks only its own
estimate and the running aggregate of neighbor contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import draw_complex_noise
from .learner import half_step
from .streams import substream

__all__ = [
    "NoiseAudit",
    "aircomp_power_factor",
    "broadcast_power_factor",
    "aircomp_slot",
    "broadcast_slot",
    "effective_noise_power",
    "analog_round",
    "adaptive_zeta",
    "ZetaSchedule",
]


def aircomp_power_factor(center, leaves, W, realization, enc_norms_sq, tx_counts, NP):
    """Alignment factor gamma: the tightest leaf meets its per-slot cap with equality.

    Leaves with zero signal are ignored; returns None when every leaf is silent.
    """
    best = None
    for i in leaves:
        if enc_norms_sq[i] <= 0.0:
            continue
        cap = NP / tx_counts[i]
        g = cap * realization.power_gain(i, center) / (W[center, i] ** 2 * enc_norms_sq[i])
        best = g if best is None else min(best, g)
    return best


def broadcast_power_factor(i, enc_norm_sq, tx_count, NP):
    """Scaling alpha that spends exactly the per-slot energy share."""
    if enc_norm_sq <= 0.0:
        return None
    return (NP / tx_count) / enc_norm_sq


def aircomp_slot(center, leaves, encoded, W, gamma, noise, codec, m, t):
    """Center's estimate from one superposition slot: decode(sum_i w_ci A u_i + Re{n}/sqrt(gamma))."""
    if gamma is not None and gamma <= 0.0:
        raise ValueError(f"non-positive alignment factor {gamma}")
    acc = np.zeros(m)
    for i in leaves:
        acc += W[center, i] * encoded[i]
    if gamma is not None and noise is not None:
        acc = acc + np.real(noise) / math.sqrt(gamma)
    return codec.decode(acc, m, t)


def broadcast_slot(tx, receiver, encoded_tx, W, realization, alpha, noise, codec, m, t):
    """Receiver's estimate of one broadcast: w * decode(A u + Re{n / (sqrt(alpha) h')})."""
    gain = realization.power_gain(tx, receiver)
    if gain <= 1e-300:
        raise ValueError(f"vanishing channel gain on link ({tx},{receiver})")
    v = encoded_tx
    if alpha is not None and noise is not None:
        v = v + np.real(noise / (math.sqrt(alpha) * realization.coeff(tx, receiver)))
    return W[receiver, tx] * codec.decode(v, m, t)


def effective_noise_power(i, topology, schedule, config, realization, u_norms_sq, W):
    """Closed-form per-coordinate power of device i's aggregated channel noise.

    (N0 / 2NP) [ sum_AR max_leaf |S^Tx| w^2 ||u||^2 / |h'|^2
                 + sum_BR |S^Tx| w^2 ||u||^2 / |h'|^2 ].
    """
    NP = config.N * config.P_W
    total = 0.0
    for r, stars in enumerate(schedule.stars):
        for c, leaves in stars:
            if c == i:
                worst = 0.0
                for j in leaves:
                    val = (schedule.tx_slot_count(j) * W[i, j] ** 2 * u_norms_sq[j]
                           / realization.power_gain(i, j))
                    worst = max(worst, val)
                total += worst
            elif i in leaves:
                total += (schedule.tx_slot_count(c) * W[i, c] ** 2 * u_norms_sq[c]
                          / realization.power_gain(i, c))
    return 0.5 * config.N0_W / NP * total


@dataclass
class NoiseAudit:
    """Per-block effective-noise and energy accounting."""

    per_device: np.ndarray
    total: float
    max_energy_ratio: float


def analog_round(state, grads, topology, schedule, config, realization, codec,
                 eta, zeta, W, t, seed, return_increments=False):
    """One analog block; mutates ``state`` and returns the noise audit.

    m = floor(N/M) projection rows (capped at the padded dimension) ride the
    slot's channel uses.  With N0 = 0 the update coincides exactly with the
    noiseless compressed round at the same seeds.
    """
    K = topology.node_count
    D = codec.padded_dim
    m = min(config.N // schedule.slot_count, D)
    if m < 1:
        raise ValueError(f"slot too short: N={config.N}, M={schedule.slot_count}")
    NP = config.N * config.P_W

    half = half_step(state, grads, eta)
    u = half - state.hat
    u_norms_sq = (u ** 2).sum(axis=1)
    encoded = codec.encode(u, m, t)
    enc_norms_sq = (encoded ** 2).sum(axis=1)
    tx_counts = [schedule.tx_slot_count(i) for i in range(K)]

    noise_rng = substream(seed, "noise", t) if config.N0_W > 0.0 else None
    received = np.zeros((K, m))  # pre-decode aggregate per receiver (decoder is linear)
    energy = np.zeros(K)

    for r, stars in enumerate(schedule.stars):
        # odd slot: superposition toward each center
        for c, leaves in sorted(stars, key=lambda s: s[0]):
            gamma = aircomp_power_factor(c, leaves, W, realization, enc_norms_sq,
                                         tx_counts, NP)
            if gamma is None:
                continue
            for i in leaves:
                if enc_norms_sq[i] > 0.0:
                    energy[i] += (gamma * W[c, i] ** 2 * enc_norms_sq[i]
                                  / realization.power_gain(i, c))
                received[c] += W[c, i] * encoded[i]
            if noise_rng is not None:
                noise = draw_complex_noise(noise_rng, m, config.N0_W)
                received[c] += np.real(noise) / math.sqrt(gamma)
        # even slot: centers broadcast back
        for c, leaves in sorted(stars, key=lambda s: s[0]):
            alpha = broadcast_power_factor(c, enc_norms_sq[c], tx_counts[c], NP)
            if alpha is None:
                continue
            energy[c] += alpha * enc_norms_sq[c]
            for j in sorted(leaves):
                received[j] += W[j, c] * encoded[c]
                if noise_rng is not None:
                    noise = draw_complex_noise(noise_rng, m, config.N0_W)
                    received[j] += W[j, c] * np.real(
                        noise / (math.sqrt(alpha) * realization.coeff(c, j)))

    ratios = energy / NP
    if ratios.max() > 1.0 + 1e-9:
        raise ValueError(f"per-block energy cap violated: ratio {ratios.max():.6f}")

    increments = codec.decode(received, m, t)
    state.hat = state.hat + codec.decode(encoded, m, t)
    state.ybar = state.ybar + increments
    w_self = np.diag(W)[:, None]
    state.theta = half + zeta * (w_self * state.hat + state.ybar - state.hat)

    per_device = np.array([
        effective_noise_power(i, topology, schedule, config, realization,
                              u_norms_sq, W) for i in range(K)])
    audit = NoiseAudit(per_device, float(per_device.sum()), float(ratios.max()))
    if return_increments:
        return audit, increments
    return audit


def adaptive_zeta(t, zeta0, n_tilde, a_prime):
    """zeta(t) = zeta0 / (N~^{1/4} t / a' + 1); constant when the noise ceiling is 0."""
    if zeta0 <= 0 or a_prime <= 0 or n_tilde < 0:
        raise ValueError("need zeta0 > 0, a_prime > 0, n_tilde >= 0")
    return zeta0 / (n_tilde ** 0.25 * t / a_prime + 1.0)


@dataclass(frozen=True)
class ZetaSchedule:
    """zeta(t) = zeta0 / (decay * t + 1), covering the constant, ceiling-adaptive,
    and literal-denominator forms."""

    zeta0: float
    decay: float = 0.0

    @classmethod
    def constant(cls, zeta0):
        return cls(zeta0, 0.0)

    @classmethod
    def adaptive(cls, zeta0, n_tilde, a_prime):
        return cls(zeta0, n_tilde ** 0.25 / a_prime)

    @classmethod
    def with_denominator(cls, zeta0, denom):
        return cls(zeta0, 1.0 / denom)

    def at(self, t):
        return self.zeta0 / (self.decay * t + 1.0)
