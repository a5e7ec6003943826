"""Closed-form reconstruction quality and optimality-gap bounds.

Digital reconstruction quality omega comes from the fading distribution of
the worst-neighbor link through G_i(n) = exp(-(N0/P)(1/(M A0)) (2^{nbM/N}-1)
sum_j (d_ij/d0)^gamma); omega_i = (1 + sum_{n=2..D} G_i(n)) / D equals
E[m_i]/D under the row-count PMF.  The gap bounds split into a centralized
term, a consensus (disagreement) term, and, for analog transmission, an
extra channel-noise term driven by the effective-noise ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import slow_power_gain

__all__ = [
    "OmegaDigital",
    "BoundParams",
    "DigitalGapBound",
    "AnalogGapBound",
    "omega_digital",
    "row_count_pmf",
    "expected_rows",
    "p_fn",
    "zeta0_fn",
    "weight_sum",
    "digital_gap_bound",
    "p_tilde_t",
    "p_t",
    "analog_gap_bound",
    "estimate_gradient_constants",
    "estimate_noise_ceiling",
    "scale_noise_ceiling",
]


def _g_values(n, inv_gain_sum, P, N0, M, N, bits):
    """G(n) = exp(-(N0/(P M)) (2^{n b M / N} - 1) * sum_j 1/gain_j), vectorized."""
    n = np.asarray(n, dtype=float)
    with np.errstate(over="ignore"):
        growth = np.expm1(n * bits * M / N * math.log(2.0))
        expo = -(N0 / (P * M)) * growth * inv_gain_sum
        return np.exp(expo)


@dataclass(frozen=True)
class OmegaDigital:
    """Network reconstruction quality: the worst device's omega_i plus the table."""

    omega: float
    per_device: np.ndarray


def omega_digital(topology, config, bits, padded_dim, M=None):
    """Fading-averaged digital reconstruction quality, min over devices."""
    M = config.M if M is None else M
    if M is None:
        raise ValueError("slot count M is not set")
    D = padded_dim
    n = np.arange(2, D + 1)
    per = np.zeros(topology.node_count)
    for i in range(topology.node_count):
        nbrs = topology.neighbors(i)
        if not nbrs:
            raise ValueError(f"node {i} has no neighbors")
        inv = sum(1.0 / slow_power_gain(config, topology, i, j) for j in nbrs)
        g = _g_values(n, inv, config.P_W, config.N0_W, M, config.N, bits)
        per[i] = (1.0 + g.sum()) / D
    return OmegaDigital(float(per.min()), per)


def row_count_pmf(topology, config, bits, padded_dim, i, M=None):
    """PMF of the realized row count m_i over fading: index n-1 holds P(m_i = n)."""
    M = config.M if M is None else M
    D = padded_dim
    inv = sum(1.0 / slow_power_gain(config, topology, i, j) for j in topology.neighbors(i))
    if D == 1:
        return np.ones(1)
    g = _g_values(np.arange(1, D + 2), inv, config.P_W, config.N0_W, M, config.N, bits)
    pmf = np.zeros(D)
    pmf[0] = 1.0 - g[1]                      # P(m=1) = P(B/b < 2)
    pmf[1:D - 1] = g[1:D - 1] - g[2:D]       # P(m=n) = G(n) - G(n+1)
    pmf[D - 1] = g[D - 1]                    # P(m=D) = G(D)
    return pmf


def expected_rows(pmf):
    return float(np.arange(1, len(pmf) + 1) @ pmf)


def p_fn(delta, omega, beta):
    """p(delta, omega) = delta^2 omega / (2 (16 delta + delta^2 + 4 beta^2
    + 2 delta beta^2 - 8 delta omega))."""
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if not (0.0 < omega <= 1.0):
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    den = 16 * delta + delta ** 2 + 4 * beta ** 2 + 2 * delta * beta ** 2 - 8 * delta * omega
    if den <= 0.0:
        raise ValueError(f"non-positive denominator {den} in p(delta, omega)")
    return delta ** 2 * omega / (2.0 * den)


def zeta0_fn(delta, omega, beta):
    """Baseline consensus step size 2 p(delta, omega) / delta."""
    return 2.0 * p_fn(delta, omega, beta) / delta


def weight_sum(a, T):
    """S_T = sum_{t=0}^{T-1} (a + t)^2 in closed form."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    return T * a * a + a * T * (T - 1) + (T - 1) * T * (2 * T - 1) / 6.0


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the optimality-gap bounds."""

    mu: float
    L: float
    G2: float
    sigma_bar2: float
    v0: float
    a: float
    delta: float
    beta: float
    omega: float
    K: int
    dim: int = 1
    n_tilde: float = 0.0
    a_prime: float | None = None

    def __post_init__(self):
        if self.mu > self.L:
            raise ValueError(f"need mu <= L, got mu={self.mu}, L={self.L}")
        for name in ("G2", "sigma_bar2", "v0", "n_tilde"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class DigitalGapBound:
    centralized: float
    consensus: float

    @property
    def total(self):
        return self.centralized + self.consensus


@dataclass(frozen=True)
class AnalogGapBound:
    centralized: float
    noiseless_consensus: float
    awgn: float

    @property
    def total(self):
        return self.centralized + self.noiseless_consensus + self.awgn


def _centralized_term(params, T, S):
    head = params.mu / 3.25 * (params.a ** 3 - 3.25 * params.a ** 2) / S * params.v0
    tail = 1.625 * (2 * params.a + T) * T / (params.mu * S) * params.sigma_bar2 / params.K
    return head + tail


def _check_offset(params, p, enforce):
    floor = max(5.0 / p, 13.0 * params.L / params.mu)
    if enforce and params.a < floor:
        raise ValueError(
            f"learning-rate offset a={params.a:.6g} violates the hypothesis "
            f"a >= max(5/p, 13L/mu) = {floor:.6g}")


def digital_gap_bound(params, T, enforce_hypotheses=True):
    """Optimality-gap bound after T iterations of the digital protocol."""
    p = p_fn(params.delta, params.omega, params.beta)
    _check_offset(params, p, enforce_hypotheses)
    S = weight_sum(params.a, T)
    consensus = 158.45 * 24.0 * params.L * T * params.G2 / (params.mu ** 2 * p ** 2 * S)
    return DigitalGapBound(_centralized_term(params, T, S), consensus)


def p_tilde_t(t, delta, beta, omega, zeta0, n_tilde, a_prime):
    """Adaptive-step analogue of p: delta zeta(t) - (delta^2/4 + 2 beta^2/omega) zeta(t)^2."""
    den = n_tilde ** 0.25 * t / a_prime + 1.0
    z = zeta0 / den
    return delta * z - (delta ** 2 / 4.0 + 2.0 * beta ** 2 / omega) * z ** 2


def p_t(t, delta, beta, omega, n_tilde, a_prime):
    """min of the adaptive p-tilde and the static p; equals p when the ceiling is 0."""
    p = p_fn(delta, omega, beta)
    z0 = zeta0_fn(delta, omega, beta)
    if n_tilde == 0.0:
        return p
    return min(p_tilde_t(t, delta, beta, omega, z0, n_tilde, a_prime), p)


def analog_gap_bound(params, T, enforce_hypotheses=True):
    """Optimality-gap bound after T iterations of the analog protocol."""
    if params.n_tilde > 0.0 and params.a_prime is None:
        raise ValueError("a_prime is required when the noise ceiling is positive")
    a_prime = params.a_prime if params.a_prime is not None else 1.0
    if enforce_hypotheses and params.n_tilde > 0.0:
        if not a_prime > params.a * params.n_tilde ** 0.25:
            raise ValueError(
                f"a'={a_prime:.6g} violates the hypothesis a' > a * N~^(1/4) "
                f"= {params.a * params.n_tilde ** 0.25:.6g}")
    pT = p_t(T, params.delta, params.beta, params.omega, params.n_tilde, a_prime)
    if pT <= 0.0:
        raise ValueError(f"p^(T) = {pT:.6g} is non-positive; bound is vacuous")
    _check_offset(params, pT, enforce_hypotheses)
    z0 = zeta0_fn(params.delta, params.omega, params.beta)
    S = weight_sum(params.a, T)
    denom = params.mu ** 2 * pT ** 2 * S
    noiseless = 158.45 * 24.0 * params.G2 * params.L * T / denom

    za = z0 * a_prime
    A_coef = (params.delta * za ** 3 * (2.0 - params.omega) * params.omega ** 2
              * params.dim * (params.mu / 3.25) ** 2)
    D_coef = params.omega ** 2 * params.dim * params.mu / 3.25 * za ** 2
    awgn = (158.45 * (A_coef / params.K) * params.n_tilde ** 0.25 * params.L * T / denom
            + D_coef * math.sqrt(params.n_tilde) / params.K ** 2)
    return AnalogGapBound(_centralized_term(params, T, S), noiseless, awgn)


def estimate_gradient_constants(grad_sq_max, grad_var_mean):
    """(G^2, sigma_bar^2) from per-iteration trace columns."""
    g = np.asarray(grad_sq_max, dtype=float)
    v = np.asarray(grad_var_mean, dtype=float)
    if g.size == 0:
        raise ValueError("empty trace")
    return float(g.max()), float(v.mean())


def estimate_noise_ceiling(sum_noise_power):
    """Running maximum of the audited per-block effective-noise totals."""
    s = np.asarray(sum_noise_power, dtype=float)
    if s.size == 0:
        raise ValueError("empty trace")
    return float(s.max())


def scale_noise_ceiling(n_tilde_ref, snr_ref_db, snr_db):
    """Noise ceiling rescaled to another SNR point (inversely linear in SNR)."""
    return n_tilde_ref * 10.0 ** ((snr_ref_db - snr_db) / 10.0)
