"""Digital broadcast protocol: fading-limited bit budgets and quantized RLC.

Per block, each device's broadcast rate is pinned by its worst-channel
neighbor; the bit budget sets how many projection rows fit at b bits per
element, every neighbor decodes the identical bits, and the consensus
correction is applied exactly as in the noiseless round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .learner import half_step
from .rlc import fwht, quantize

__all__ = ["DigitalRoundReport", "bit_budget", "rows_from_budget", "digital_round"]


def bit_budget(i, topology, config, realization, M=None):
    """Bits deliverable by node i in its slot: (N/M) log2(1 + (P/N0) M min|h'|^2)."""
    M = config.M if M is None else M
    if M is None:
        raise ValueError("slot count M is not set")
    g = realization.min_neighbor_gain(topology, i)
    snr = config.P_W / config.N0_W * M * g
    return config.N / M * math.log2(1.0 + snr)


def rows_from_budget(budget_bits, bits_per_element, max_rows):
    """floor(B/b), clamped to [1, max_rows]: one row survives any fade."""
    if budget_bits < 0:
        raise ValueError("negative bit budget")
    return int(min(max(budget_bits // bits_per_element, 1), max_rows))


@dataclass
class DigitalRoundReport:
    bit_budgets: np.ndarray
    rows: np.ndarray
    consensus_error: float
    compression_error: float


def digital_round(state, grads, topology, schedule, config, realization, codec,
                  quantizer, eta, zeta, W, t, force_rows=None):
    """One digital block: half-step, per-device quantized RLC broadcast, consensus.

    Broadcasts are error-free at the capacity-limited rate, so all receivers
    hold bit-identical estimate updates; ``force_rows`` pins m_i (the
    infinite-power limit uses force_rows = padded_dim with 64-bit elements).
    Mutates ``state`` and returns the round report.
    """
    K = topology.node_count
    D = codec.padded_dim
    half = half_step(state, grads, eta)
    budgets = np.zeros(K)
    rows = np.zeros(K, dtype=int)
    for j in range(K):
        budgets[j] = bit_budget(j, topology, config, realization, schedule.slot_count)
        if force_rows is None:
            rows[j] = rows_from_budget(budgets[j], quantizer.bits, codec.row_budget)
        else:
            rows[j] = force_rows

    # batched per-device encode/quantize/decode (each device has its own signs)
    signs = np.stack([codec.signs(t, stream=j) for j in range(K)])
    u_pad = np.zeros((K, D))
    u_pad[:, : codec.dim] = half - state.hat
    coded = fwht(u_pad * signs)
    keep = np.arange(D)[None, :] < rows[:, None]
    coded = np.where(keep, coded / np.sqrt(rows)[:, None], 0.0)
    coded = quantize(coded, quantizer)
    recon = (fwht(coded) * signs)[:, : codec.dim] * (np.sqrt(rows) / D)[:, None]
    state.hat = state.hat + recon
    state.theta = half + zeta * (W @ state.hat - state.hat)

    mean = state.theta.mean(axis=0)
    consensus = float(((state.theta - mean) ** 2).sum())
    compression = float(((state.hat - half) ** 2).sum())
    return DigitalRoundReport(budgets, rows, consensus, compression)
