"""Random linear coding: partial-Hadamard projections and the b-bit quantizer.

The iteration-t encoder is A = (1/sqrt(m)) H[0:m] R_t, where H is the D x D
Sylvester Hadamard matrix (D the model dimension padded to a power of two)
and R_t a diagonal of fresh random signs.  Rows are mutually orthogonal, so
A A^T = (D/m) I exactly, and E_R[A^T A] = I makes decode(encode(u)) an
unbiased contraction of u.  Signs are counter-based: every device rebuilds
the same A_t from (seed, stream, t) with nothing stored or communicated.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .streams import substream

__all__ = ["RlcCodec", "QuantizerSpec", "fwht", "quantize"]


def fwht(x):
    """Unnormalized Walsh-Hadamard transform (Sylvester order) along the last axis."""
    x = np.array(x, dtype=float)
    d = x.shape[-1]
    if d & (d - 1) or d == 0:
        raise ValueError(f"length must be a power of two, got {d}")
    shape = x.shape
    x = x.reshape(-1, d)
    h = 1
    while h < d:
        y = x.reshape(x.shape[0], d // (2 * h), 2, h)
        a = y[:, :, 0, :] + y[:, :, 1, :]
        b = y[:, :, 0, :] - y[:, :, 1, :]
        x = np.stack([a, b], axis=2).reshape(x.shape[0], d)
        h *= 2
    return x.reshape(shape)


@functools.lru_cache(maxsize=4096)
def _signs(seed, stream, t, D):
    rng = substream(seed, "rlc", stream, t)
    s = rng.integers(0, 2, size=D) * 2.0 - 1.0
    s.setflags(write=False)
    return s


@dataclass(frozen=True)
class QuantizerSpec:
    """Per-element IEEE-754 rounding at b bits; b=64 is simulator precision."""

    bits: int = 64

    def __post_init__(self):
        if self.bits not in (32, 64):
            raise ValueError(f"bits must be 32 or 64, got {self.bits}")

    @property
    def eps(self):
        return 2.0 ** -24 if self.bits == 32 else 2.0 ** -53


def quantize(v, spec):
    """Round each element to the nearest representable value at spec.bits."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValueError("quantizer input contains non-finite entries")
    if spec.bits == 64:
        return v
    w = v.astype(np.float32).astype(np.float64)
    if not np.isfinite(w).all():
        raise ValueError("quantizer overflow: value exceeds binary32 range")
    return w


@dataclass(frozen=True)
class RlcCodec:
    """Shared-randomness projection family over a zero-padded model vector.

    ``stream`` separates per-device matrix sequences (the digital protocol
    gives every broadcaster its own); all consumers of one stream rebuild
    identical matrices from the common seed.
    """

    dim: int
    seed: int
    stream: int | str = "shared"
    m_max: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.m_max is not None and not (1 <= self.m_max <= self.padded_dim):
            raise ValueError(f"m_max must lie in [1, {self.padded_dim}]")

    @property
    def padded_dim(self):
        return 1 << (self.dim - 1).bit_length()

    @property
    def row_budget(self):
        return self.m_max if self.m_max is not None else self.padded_dim

    def signs(self, t, stream=None):
        return _signs(self.seed, self.stream if stream is None else stream,
                      int(t), self.padded_dim)

    def _check_rows(self, m):
        if not (1 <= m <= self.row_budget):
            raise ValueError(f"row count m={m} outside [1, {self.row_budget}]")

    def _pad(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got {u.shape[-1]}")
        D = self.padded_dim
        if D == self.dim:
            return u
        pad = [(0, 0)] * (u.ndim - 1) + [(0, D - self.dim)]
        return np.pad(u, pad)

    def encode(self, u, m, t, stream=None):
        """Project u (last axis of length dim) to m coefficients: A_t u."""
        self._check_rows(m)
        x = self._pad(u) * self.signs(t, stream)
        return fwht(x)[..., :m] / math.sqrt(m)

    def decode(self, v, m, t, stream=None):
        """Reconstruct (m/D) A_t^T v back to model space."""
        self._check_rows(m)
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != m:
            raise ValueError(f"expected {m} coefficients, got {v.shape[-1]}")
        D = self.padded_dim
        pad = [(0, 0)] * (v.ndim - 1) + [(0, D - m)]
        w = fwht(np.pad(v, pad)) * self.signs(t, stream)
        return math.sqrt(m) / D * w[..., : self.dim]

    def roundtrip(self, u, m, t, stream=None):
        return self.decode(self.encode(u, m, t, stream), m, t, stream)

    def matrix(self, m, t, stream=None):
        """Dense A_t (m x padded_dim); for diagnostics and small-D identity tests."""
        self._check_rows(m)
        D = self.padded_dim
        H = fwht(np.eye(D))  # Sylvester Hadamard, symmetric
        return H[:m] * self.signs(t, stream) / math.sqrt(m)
