"""Learning substrate: softmax regression, SGD with momentum, non-IID
partitioning, and the noiseless compressed-consensus training round.

The model is a flattened C x (features+1) weight matrix (bias column last).
Each device's empirical risk is cross-entropy over its available classes
plus an l2 term, so the global objective is l2-strongly convex.  The
noiseless round is the reference every wireless protocol is checked
against: local SGD half-step, compress-the-difference estimate update,
then the mixing-matrix consensus correction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import functools

import numpy as np
from scipy.optimize import minimize

from .streams import substream

__all__ = [
    "LocalDataset",
    "OptimizerState",
    "LearningRate",
    "FleetState",
    "model_dim",
    "init_fleet",
    "loss_and_gradient",
    "predict",
    "accuracy",
    "sgd_step",
    "half_step",
    "partition_noniid",
    "minibatch_indices",
    "minibatch",
    "choco_round_ideal",
    "codec_compressor",
    "global_loss",
    "estimate_fstar",
    "synthetic_dataset",
    "load_idx",
    "smoothness_estimate",
]

LEARNER_VERSION = 1  # bump to invalidate cached optima


@dataclass(frozen=True)
class LocalDataset:
    """One device's shard: features, integer labels, available classes."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    classes: frozenset

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("features must be (n, F) with matching labels")
        if X.shape[0] == 0:
            raise ValueError("empty local dataset")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError("labels out of range")
        if not set(np.unique(y)) <= set(self.classes):
            raise ValueError("labels outside the declared class set")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def size(self):
        return self.features.shape[0]


def model_dim(n_classes, n_features):
    return n_classes * (n_features + 1)


def _with_bias(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def loss_and_gradient(theta, features, labels, n_classes, l2, classes=None):
    """Cross-entropy (+ l2/2 ||theta||^2) and its exact gradient.

    When ``classes`` is given, the softmax support is restricted to those
    classes, so weight rows of unavailable classes feel only the l2 pull.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if np.isnan(X).any():
        raise ValueError("NaN in features")
    theta = np.asarray(theta, dtype=float)
    T = theta.reshape(n_classes, X.shape[1] + 1)
    Xb = _with_bias(X)
    Z = Xb @ T.T
    if classes is not None and len(classes) < n_classes:
        keep = np.zeros(n_classes, dtype=bool)
        keep[list(classes)] = True
        if not keep[y].all():
            raise ValueError("batch labels outside the available classes")
        Z = np.where(keep, Z, -np.inf)
    zmax = Z.max(axis=1, keepdims=True)
    ez = np.exp(Z - zmax)
    sez = ez.sum(axis=1)
    n = X.shape[0]
    log_p_y = Z[np.arange(n), y] - zmax[:, 0] - np.log(sez)
    loss = float(-log_p_y.mean()) + 0.5 * l2 * float(theta @ theta)
    P = ez / sez[:, None]
    P[np.arange(n), y] -= 1.0
    G = P.T @ Xb / n + l2 * T
    return loss, G.ravel()


def predict(theta, features, n_classes):
    X = np.asarray(features, dtype=float)
    T = np.asarray(theta, dtype=float).reshape(n_classes, X.shape[1] + 1)
    return np.argmax(_with_bias(X) @ T.T, axis=1)


def accuracy(theta, features, labels, n_classes):
    return float(np.mean(predict(theta, features, n_classes) == np.asarray(labels)))


@dataclass
class OptimizerState:
    """Heavy-ball buffer for one device."""

    momentum: float = 0.9
    buffer: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def sgd_step(state, theta, grad, eta):
    """theta' = theta - eta * (momentum-filtered gradient)."""
    grad = np.asarray(grad, dtype=float)
    if state.momentum == 0.0:
        return theta - eta * grad
    if state.buffer is None:
        state.buffer = np.zeros_like(grad)
    state.buffer = state.momentum * state.buffer + grad
    return theta - eta * state.buffer


@dataclass(frozen=True)
class LearningRate:
    """eta(t) = base / (t + offset)."""

    base: float
    offset: float

    @classmethod
    def theorem_form(cls, mu, a):
        return cls(3.25 / mu, a)

    def at(self, t):
        return self.base / (t + self.offset)


# ---------------------------------------------------------------------------
# data partitioning


def partition_noniid(features, labels, K, seed, *, n_classes=10, max_missing=4):
    """Split a balanced dataset across K devices with per-device missing classes.

    Device i loses u_i ~ Uniform{0..max_missing} classes and receives an
    equal number x_i of samples from each remaining class; the x_i are grown
    uniformly (water-filling over devices) until per-class supply binds,
    which maximizes the total number of samples in use under the equal-count
    constraint.  Allocations are disjoint across devices.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    rng = substream(seed, "partition")
    omegas = []
    for _ in range(K):
        u = int(rng.integers(0, max_missing + 1))
        missing = set(rng.choice(n_classes, size=u, replace=False).tolist())
        omegas.append(frozenset(range(n_classes)) - missing)

    pools = [np.flatnonzero(y == c) for c in range(n_classes)]
    supply = np.array([len(p) for p in pools])
    if (supply == 0).any():
        raise ValueError("every class needs at least one sample")

    x = np.zeros(K, dtype=int)
    used = np.zeros(n_classes, dtype=int)
    active = set(range(K))
    while active:
        counts = np.zeros(n_classes, dtype=int)
        for i in active:
            for c in omegas[i]:
                counts[c] += 1
        present = counts > 0
        step = int(np.min((supply[present] - used[present]) // counts[present]))
        if step > 0:
            for i in active:
                x[i] += step
            used[present] += step * counts[present]
        tight = {c for c in range(n_classes)
                 if counts[c] > 0 and supply[c] - used[c] < counts[c]}
        frozen = {i for i in active if omegas[i] & tight}
        if not frozen:
            break
        active -= frozen

    if (x == 0).any():
        raise ValueError(f"dataset too small to give every one of {K} devices a share")
    for c in range(n_classes):
        take = sum(x[i] for i in range(K) if c in omegas[i])
        if take > supply[c]:
            raise ValueError("internal allocation exceeds class supply")

    shuffled = [rng.permutation(p) for p in pools]
    cursor = [0] * n_classes
    out = []
    for i in range(K):
        idx = []
        for c in sorted(omegas[i]):
            lo = cursor[c]
            cursor[c] = lo + x[i]
            idx.extend(shuffled[c][lo:cursor[c]].tolist())
        idx = np.array(sorted(idx))
        out.append(LocalDataset(X[idx], y[idx], n_classes, omegas[i]))
    return out


@functools.lru_cache(maxsize=2048)
def _epoch_permutation(seed, device, epoch, n):
    perm = substream(seed, "batch", device, epoch).permutation(n)
    perm.setflags(write=False)
    return perm


def minibatch_indices(n, size, seed, device, t):
    """Without-replacement batch t for a device; a fresh seeded shuffle per epoch."""
    if size >= n:
        return np.arange(n)
    per_epoch = n // size
    epoch, k = divmod(t, per_epoch)
    perm = _epoch_permutation(int(seed), int(device), epoch, n)
    return perm[k * size:(k + 1) * size]


def minibatch(dataset, size, seed, device, t):
    idx = minibatch_indices(dataset.size, size, seed, device, t)
    return dataset.features[idx], dataset.labels[idx]


# ---------------------------------------------------------------------------
# fleet state and the noiseless consensus round


@dataclass
class FleetState:
    """Per-device iterates stacked row-wise, plus shared estimate tables.

    ``hat[i]`` is the network's common estimate of device i's model (all
    copies are bit-identical under noiseless or digital exchange, so one row
    suffices).  ``ybar`` is the analog protocol's aggregated neighbor
    estimate; unused elsewhere.
    """

    theta: np.ndarray
    hat: np.ndarray
    momentum: float = 0.0
    buffer: np.ndarray | None = None
    ybar: np.ndarray | None = None

    @property
    def node_count(self):
        return self.theta.shape[0]

    def copy(self):
        return FleetState(
            self.theta.copy(), self.hat.copy(), self.momentum,
            None if self.buffer is None else self.buffer.copy(),
            None if self.ybar is None else self.ybar.copy())


def init_fleet(K, dim, momentum=0.0, analog=False):
    z = np.zeros((K, dim))
    return FleetState(z.copy(), z.copy(), momentum,
                      ybar=z.copy() if analog else None)


def half_step(state, grads, eta):
    """Local SGD half-step for every device; returns the K x dim half iterates."""
    grads = np.asarray(grads, dtype=float)
    if state.momentum != 0.0:
        if state.buffer is None:
            state.buffer = np.zeros_like(grads)
        state.buffer = state.momentum * state.buffer + grads
        return state.theta - eta * state.buffer
    return state.theta - eta * grads


def codec_compressor(codec, m):
    """Round-trip compressor U -> decode(encode(U)) with the shared stream."""
    def compress(U, t):
        return codec.roundtrip(U, m, t)
    return compress


def choco_round_ideal(state, W, eta, zeta, grads, compress=None, t=0):
    """One noiseless round: half-step, estimate update, consensus correction.

    ``compress`` maps the stacked difference matrix to its reconstruction
    (identity when None).  Mutates ``state`` and returns it.
    """
    half = half_step(state, grads, eta)
    u = half - state.hat
    state.hat = state.hat + (u if compress is None else compress(u, t))
    state.theta = half + zeta * (W @ state.hat - state.hat)
    return state


# ---------------------------------------------------------------------------
# global objective and its optimum


def global_loss(theta, datasets, l2):
    """F(theta): average of the devices' local empirical risks."""
    vals = [loss_and_gradient(theta, d.features, d.labels, d.n_classes, l2,
                              classes=d.classes)[0] for d in datasets]
    return float(np.mean(vals))


def estimate_fstar(datasets, l2, theta0=None, tol=1e-12):
    """Minimize the global objective to high precision; returns (F*, theta*).

    The objective is smooth and l2-strongly convex, so a quasi-Newton solve
    from any start reaches the unique optimum; deterministic for fixed data.
    """
    n_classes = datasets[0].n_classes
    dim = model_dim(n_classes, datasets[0].features.shape[1])
    if theta0 is None:
        theta0 = np.zeros(dim)

    def fg(theta):
        total_l = 0.0
        total_g = np.zeros(dim)
        for d in datasets:
            l, g = loss_and_gradient(theta, d.features, d.labels, n_classes, l2,
                                     classes=d.classes)
            total_l += l
            total_g += g
        k = len(datasets)
        return total_l / k, total_g / k

    res = minimize(fg, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": tol, "gtol": 1e-10})
    if not np.isfinite(res.fun):
        raise RuntimeError(f"optimum estimation failed: {res.message}")
    return float(res.fun), res.x


def smoothness_estimate(datasets, l2):
    """L as the largest data-Gramian eigenvalue over sample count, plus l2."""
    vals = []
    for d in datasets:
        Xb = _with_bias(d.features)
        gram = Xb.T @ Xb
        vals.append(np.linalg.eigvalsh(gram)[-1] / d.size)
    return float(max(vals) + l2)


# ---------------------------------------------------------------------------
# datasets


def synthetic_dataset(seed, *, n_classes=10, n_features=20, samples_per_class=200,
                      separation=4.0, tag="train"):
    """Gaussian class blobs with orthogonal means; separable for separation >~ 3."""
    if n_features < n_classes:
        raise ValueError("need n_features >= n_classes for orthogonal class means")
    rng = substream(seed, "synthetic", tag)
    basis, _ = np.linalg.qr(substream(seed, "synthetic-means").standard_normal(
        (n_features, n_classes)))
    means = separation * basis.T
    y = np.repeat(np.arange(n_classes), samples_per_class)
    X = means[y] + rng.standard_normal((y.size, n_features))
    perm = rng.permutation(y.size)
    return X[perm], y[perm]


def load_idx(images_path, labels_path):
    """Read big-endian IDX image/label pairs; features scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != 0x00000803:
            raise ValueError(f"bad image magic 0x{magic:08x}")
        X = np.frombuffer(f.read(n * rows * cols), dtype=np.uint8)
    with open(labels_path, "rb") as f:
        magic, m = struct.unpack(">II", f.read(8))
        if magic != 0x00000801:
            raise ValueError(f"bad label magic 0x{magic:08x}")
        y = np.frombuffer(f.read(m), dtype=np.uint8)
    if n != m:
        raise ValueError(f"image/label count mismatch: {n} vs {m}")
    return X.reshape(n, rows * cols).astype(float) / 255.0, y.astype(int)
