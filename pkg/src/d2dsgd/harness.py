"""Experiment orchestration: configs, deterministic runs, traces, figure data.

A run is fully determined by (config, seed): one master seed feeds
per-purpose substreams, so re-running produces byte-identical traces.  The
optimum F* used for gap curves is cached on disk keyed by the dataset
digest, partition seed, and regularizer.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import analog as analog_mod
from . import bounds as bounds_mod
from . import digital as digital_mod
from .analog import ZetaSchedule
from .channel import ChannelConfig, calibrate_power, draw_block, equal_snr_override
from .learner import (LEARNER_VERSION, LearningRate, accuracy, choco_round_ideal,
                      codec_compressor, estimate_fstar, global_loss, half_step,
                      init_fleet, load_idx, loss_and_gradient, minibatch,
                      model_dim, partition_noniid, synthetic_dataset)
from .rlc import QuantizerSpec, RlcCodec
from .scheduling import analog_schedule, digital_schedule, tdma_schedule
from .topology import (build_topology, default_alpha, mixing_matrix,
                       random_placement, with_positions)

__all__ = [
    "ExperimentConfig",
    "RunTrace",
    "load_config",
    "parse_config",
    "run",
    "sweep",
    "SweepCell",
    "bound_rows",
    "emit_figure_data",
    "write_csv",
]


# ---------------------------------------------------------------------------
# configuration

_SECTIONS = {
    "topology": {"kind": "chain", "nodes": 20, "rows": 0, "cols": 0, "seed": 1,
                 "placement": "random", "max_link_distance": 0.0},
    "channel": {"A0_dB": -33.5, "d0_m": 1.0, "gamma": 3.76, "N0_dBm": -169.0,
                "snr_dB": 30.0, "snr_ref_distance_m": 125.0, "N": 8000,
                "equal_snr": False},
    "protocol": {"kind": "ideal", "scheduler": "coloring", "bits": 64, "rows": 0},
    "learner": {"dataset": "synthetic", "features": 20, "classes": 10,
                "samples_per_class": 300, "separation": 4.0,
                "test_samples_per_class": 50, "idx_images": "", "idx_labels": "",
                "idx_test_images": "", "idx_test_labels": "",
                "partition_seed": 42, "batch_size": 64, "momentum": 0.0,
                "l2": 0.002},
    "schedule": {"eta_form": "rational", "eta_base": 1.0, "eta_offset": 100.0,
                 "eta_a": 200.0, "zeta_mode": "constant", "zeta0": 1.0,
                 "zeta_denominator": 1000.0, "zeta_n_tilde": 0.0,
                 "zeta_a_prime": 1.0, "zeta_pilot_rounds": 0},
    "run": {"iterations": 1000, "seed": 1, "log_every": 10,
            "divergence_factor": 1e6, "fstar": "auto", "estimate_constants": False},
}

_PROTOCOLS = ("ideal", "digital", "analog", "none")
_SCHEDULERS = ("coloring", "tdma", "analog_pairing")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: dict
    channel: dict
    protocol: dict
    learner: dict
    schedule: dict
    run: dict

    def digest(self):
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_config(raw):
    """Validate a nested config dict; unknown sections or keys are errors."""
    bad = set(raw) - set(_SECTIONS)
    if bad:
        raise ValueError(f"unknown config sections: {sorted(bad)}")
    merged = {}
    for section, defaults in _SECTIONS.items():
        given = raw.get(section, {})
        bad = set(given) - set(defaults)
        if bad:
            raise ValueError(f"unknown keys in [{section}]: {sorted(bad)}")
        vals = dict(defaults)
        vals.update(given)
        merged[section] = vals
    if merged["protocol"]["kind"] not in _PROTOCOLS:
        raise ValueError(f"protocol.kind must be one of {_PROTOCOLS}")
    if merged["protocol"]["scheduler"] not in _SCHEDULERS:
        raise ValueError(f"protocol.scheduler must be one of {_SCHEDULERS}")
    if merged["protocol"]["kind"] == "analog" and merged["protocol"]["scheduler"] != "analog_pairing":
        raise ValueError("analog protocol requires the analog_pairing scheduler")
    if merged["protocol"]["kind"] == "digital" and merged["protocol"]["scheduler"] == "analog_pairing":
        raise ValueError("digital protocol requires a coloring or tdma scheduler")
    return ExperimentConfig(**merged)


def load_config(path):
    with open(path, "rb") as f:
        return parse_config(tomllib.load(f))


# ---------------------------------------------------------------------------
# traces


@dataclass
class RunTrace:
    protocol: str
    seed: int
    columns: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    diverged: bool = False
    fstar: float | None = None

    def append(self, **kv):
        for k, v in kv.items():
            self.columns.setdefault(k, []).append(v)

    def column(self, name):
        return np.asarray(self.columns[name])

    def final(self, name):
        return self.columns[name][-1]

    def to_csv(self, path):
        write_csv(path, list(self.columns), zip(*self.columns.values()))

    def write_meta(self, path):
        meta = dict(self.meta, protocol=self.protocol, seed=self.seed,
                    diverged=self.diverged, fstar=self.fstar)
        Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# builders


def _build_topology(config):
    t = config.topology
    kind, K = t["kind"], t["nodes"]
    kw = {}
    if kind in ("grid", "grid_torus"):
        kw = dict(rows=t["rows"], cols=t["cols"])
    elif kind == "geometric":
        kw = dict(max_link_distance=t["max_link_distance"] or None)
    topo = build_topology(kind, K, t["seed"], **kw)
    if topo.positions is None and t["placement"] == "random":
        topo = with_positions(topo, random_placement(K, t["seed"]))
    return topo


def _build_channel(config, M=None):
    c = config.channel
    cfg = ChannelConfig.build(
        A0=10.0 ** (c["A0_dB"] / 10.0), d0_m=c["d0_m"], gamma=c["gamma"],
        N0_dBm=c["N0_dBm"], N=c["N"], M=M, snr_dB=c["snr_dB"],
        snr_ref_distance_m=c["snr_ref_distance_m"])
    if c["equal_snr"]:
        cfg = equal_snr_override(cfg, c["snr_dB"])
    return cfg


def _build_schedule(config, topo):
    kind = config.protocol["kind"]
    sched_name = config.protocol["scheduler"]
    if kind == "analog":
        return analog_schedule(topo)
    if kind == "digital":
        return tdma_schedule(topo) if sched_name == "tdma" else digital_schedule(topo)
    return None


def _load_data(config):
    ln = config.learner
    if ln["dataset"] == "synthetic":
        train = synthetic_dataset(ln["partition_seed"], n_classes=ln["classes"],
                                  n_features=ln["features"],
                                  samples_per_class=ln["samples_per_class"],
                                  separation=ln["separation"])
        test = synthetic_dataset(ln["partition_seed"], n_classes=ln["classes"],
                                 n_features=ln["features"],
                                 samples_per_class=ln["test_samples_per_class"],
                                 separation=ln["separation"], tag="test")
        return train, test
    if ln["dataset"] == "idx":
        train = load_idx(ln["idx_images"], ln["idx_labels"])
        if ln["idx_test_images"]:
            test = load_idx(ln["idx_test_images"], ln["idx_test_labels"])
        else:
            test = train
        return train, test
    raise ValueError(f"unknown dataset kind {ln['dataset']!r}")


def _eta_schedule(config):
    s = config.schedule
    if s["eta_form"] == "theorem":
        return LearningRate.theorem_form(config.learner["l2"], s["eta_a"])
    if s["eta_form"] == "rational":
        return LearningRate(s["eta_base"], s["eta_offset"])
    raise ValueError(f"unknown eta_form {s['eta_form']!r}")


def _zeta_schedule(config, n_tilde=None):
    s = config.schedule
    mode = s["zeta_mode"]
    if mode == "constant":
        return ZetaSchedule.constant(s["zeta0"])
    if mode == "denominator":
        return ZetaSchedule.with_denominator(s["zeta0"], s["zeta_denominator"])
    if mode == "adaptive":
        ceiling = s["zeta_n_tilde"] if n_tilde is None else n_tilde
        return ZetaSchedule.adaptive(s["zeta0"], ceiling, s["zeta_a_prime"])
    raise ValueError(f"unknown zeta_mode {mode!r}")


def _fstar_digest(train, config):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(train[0]).tobytes())
    h.update(np.ascontiguousarray(train[1]).tobytes())
    h.update(str((config.learner["partition_seed"], config.learner["l2"],
                  config.topology["nodes"], LEARNER_VERSION)).encode())
    return h.hexdigest()[:24]


def _get_fstar(train, parts, config, out_dir):
    mode = config.run["fstar"]
    if mode == "skip":
        return None, None
    cache = None
    if out_dir is not None:
        cache = Path(out_dir) / f"fstar-{_fstar_digest(train, config)}.json"
        if cache.exists():
            payload = json.loads(cache.read_text())
            return payload["fstar"], np.asarray(payload["theta"])
    fstar, theta = estimate_fstar(parts, config.learner["l2"])
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps({"fstar": fstar, "theta": theta.tolist()}))
    return fstar, theta


# ---------------------------------------------------------------------------
# the run loop


def run(config, seed=None, out_dir=None, name="run"):
    """Execute one experiment; returns the RunTrace (and writes CSV under out_dir)."""
    seed = config.run["seed"] if seed is None else seed
    protocol = config.protocol["kind"]
    ln = config.learner

    topo = _build_topology(config)
    K = topo.node_count
    W = mixing_matrix(topo, default_alpha(topo)).weights
    schedule = _build_schedule(config, topo)
    M = getattr(schedule, "slot_count", None)
    channel = _build_channel(config, M) if protocol in ("digital", "analog") else None

    train, test = _load_data(config)
    parts = partition_noniid(train[0], train[1], K, ln["partition_seed"],
                             n_classes=ln["classes"])
    dim = model_dim(ln["classes"], parts[0].features.shape[1])
    codec = RlcCodec(dim=dim, seed=seed)
    quantizer = QuantizerSpec(config.protocol["bits"])
    fstar, _ = _get_fstar(train, parts, config, out_dir)

    eta_s = _eta_schedule(config)
    n_tilde = None
    if protocol == "analog" and config.schedule["zeta_pilot_rounds"] > 0:
        n_tilde = _pilot_noise_ceiling(config, topo, W, schedule, channel, codec,
                                       parts, eta_s, seed)
    zeta_s = _zeta_schedule(config, n_tilde)

    state = init_fleet(K, dim, momentum=ln["momentum"], analog=protocol == "analog")
    trace = RunTrace(protocol=protocol, seed=seed, fstar=fstar)
    trace.meta = {"config": dataclasses.asdict(config), "name": name,
                  "slot_count": M, "dim": dim,
                  "n_tilde_pilot": n_tilde,
                  "alpha": default_alpha(topo)}

    T = config.run["iterations"]
    log_every = max(1, config.run["log_every"])
    gap0 = None
    for t in range(T):
        grads = np.stack([
            loss_and_gradient(state.theta[i],
                              *minibatch(parts[i], ln["batch_size"], seed, i, t),
                              ln["classes"], ln["l2"], classes=parts[i].classes)[1]
            for i in range(K)])
        eta, zeta = eta_s.at(t), zeta_s.at(t)
        extra = {}
        if protocol == "ideal":
            rows = config.protocol["rows"]
            comp = codec_compressor(codec, rows) if rows else None
            choco_round_ideal(state, W, eta, zeta, grads, comp, t=t)
        elif protocol == "none":
            state.theta = half_step(state, grads, eta)
        elif protocol == "digital":
            real = draw_block(channel, topo, seed, t)
            rep = digital_mod.digital_round(state, grads, topo, schedule, channel,
                                            real, codec, quantizer, eta, zeta, W, t)
            extra = {"compression_err": rep.compression_error,
                     "min_m": int(rep.rows.min()), "max_m": int(rep.rows.max()),
                     "B_min": float(rep.bit_budgets.min()),
                     "B_max": float(rep.bit_budgets.max())}
        else:
            real = draw_block(channel, topo, seed, t)
            audit = analog_mod.analog_round(state, grads, topo, schedule, channel,
                                            real, codec, eta, zeta, W, t, seed)
            extra = {"sum_noise_power": audit.total,
                     "max_tx_energy_ratio": audit.max_energy_ratio}

        blown_up = not np.isfinite(state.theta).all()
        logged = (t % log_every == 0) or (t == T - 1) or blown_up
        if not logged:
            continue

        theta_bar = state.theta.mean(axis=0)
        f_avg = global_loss(theta_bar, parts, ln["l2"]) if not blown_up else float("inf")
        gap = f_avg - fstar if fstar is not None else float("nan")
        if gap0 is None:
            gap0 = gap
        consensus = float(((state.theta - theta_bar) ** 2).sum()) if not blown_up else float("inf")
        diverge = blown_up or (
            fstar is not None and np.isfinite(gap0) and gap0 > 0
            and gap > config.run["divergence_factor"] * gap0)

        row = {"t": t, "F_avg": f_avg, "gap": gap, "consensus_err": consensus,
               "zeta": zeta}
        row.update(extra)
        if config.run["estimate_constants"] and not blown_up:
            row.update(_constants_row(state, parts, ln))
        row["acc"] = (accuracy(theta_bar, test[0], test[1], ln["classes"])
                      if not blown_up else 0.0)
        trace.append(**row)
        if diverge:
            trace.diverged = True
            break

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out / f"{name}.csv")
        trace.write_meta(out / f"{name}.meta.json")
    return trace


def _constants_row(state, parts, ln):
    """Gradient-norm ceiling and minibatch-variance samples for bound constants."""
    g2 = []
    var = []
    for i, part in enumerate(parts):
        _, full = loss_and_gradient(state.theta[i], part.features, part.labels,
                                    ln["classes"], ln["l2"], classes=part.classes)
        idx = np.arange(min(part.size, ln["batch_size"]))
        _, mini = loss_and_gradient(state.theta[i], part.features[idx],
                                    part.labels[idx], ln["classes"], ln["l2"],
                                    classes=part.classes)
        g2.append(float(mini @ mini))
        d = mini - full
        var.append(float(d @ d))
    return {"grad_sq_max": max(g2), "grad_var_mean": float(np.mean(var))}


def _pilot_noise_ceiling(config, topo, W, schedule, channel, codec, parts, eta_s, seed):
    """One short constant-step audit pass; its max noise total seeds the zeta decay."""
    ln = config.learner
    K = topo.node_count
    dim = model_dim(ln["classes"], parts[0].features.shape[1])
    state = init_fleet(K, dim, momentum=ln["momentum"], analog=True)
    worst = 0.0
    for t in range(config.schedule["zeta_pilot_rounds"]):
        grads = np.stack([
            loss_and_gradient(state.theta[i],
                              *minibatch(parts[i], ln["batch_size"], seed, i, t),
                              ln["classes"], ln["l2"], classes=parts[i].classes)[1]
            for i in range(K)])
        real = draw_block(channel, topo, seed, t)
        audit = analog_mod.analog_round(state, grads, topo, schedule, channel, real,
                                        codec, eta_s.at(t), config.schedule["zeta0"],
                                        W, t, seed)
        worst = max(worst, audit.total)
    return worst


# ---------------------------------------------------------------------------
# sweeps and figure data


@dataclass
class SweepCell:
    name: str
    trace: RunTrace | None
    error: str | None = None


def sweep(cells, out_dir=None):
    """Run every (name, config) cell; failures are recorded, not raised."""
    results = []
    for name, config in cells:
        try:
            results.append(SweepCell(name, run(config, out_dir=out_dir, name=name)))
        except Exception as exc:  # noqa: BLE001 - partial-failure policy
            results.append(SweepCell(name, None, f"{type(exc).__name__}: {exc}"))
    return results


def bound_rows(protocol, topo, channel_cfg, *, snr_grid, t_grid, bits, dim, mu, L,
               G2, sigma_bar2, v0, a, M, a_prime=None, n_tilde_ref=0.0,
               snr_ref_db=30.0, analog_m=None, enforce_hypotheses=False,
               norm_t=1):
    """Evaluate the gap bound on a (SNR, t) grid; returns CSV-ready row dicts.

    For digital transmission omega follows the fading statistics at each SNR;
    for analog it is the fixed ratio m/D and SNR only rescales the noise
    ceiling (anchored at snr_ref_db).
    """
    mix = mixing_matrix(topo, default_alpha(topo))
    D = 1 << (dim - 1).bit_length()
    rows = []
    for snr in snr_grid:
        cfg = dataclasses.replace(channel_cfg, P_W=calibrate_power(channel_cfg, snr))
        if protocol == "digital":
            om = bounds_mod.omega_digital(topo, cfg, bits, D, M=M).omega
            n_tilde = 0.0
        else:
            if analog_m is None:
                analog_m = min(cfg.N // M, D)
            om = analog_m / D
            n_tilde = bounds_mod.scale_noise_ceiling(n_tilde_ref, snr_ref_db, snr)
        params = bounds_mod.BoundParams(
            mu=mu, L=L, G2=G2, sigma_bar2=sigma_bar2, v0=v0, a=a,
            delta=mix.spectral_gap, beta=mix.beta, omega=om, K=topo.node_count,
            dim=D, n_tilde=n_tilde, a_prime=a_prime)
        for t in t_grid:
            if protocol == "digital":
                b = bounds_mod.digital_gap_bound(params, t, enforce_hypotheses)
                ref = bounds_mod.digital_gap_bound(params, norm_t, enforce_hypotheses)
                awgn = 0.0
                consensus = b.consensus
            else:
                b = bounds_mod.analog_gap_bound(params, t, enforce_hypotheses)
                ref = bounds_mod.analog_gap_bound(params, norm_t, enforce_hypotheses)
                awgn = b.awgn
                consensus = b.noiseless_consensus
            rows.append({"t": t, "snr_db": snr, "centralized": b.centralized,
                         "consensus": consensus, "awgn": awgn, "total": b.total,
                         "normalized_total": b.total / ref.total})
    return rows


def emit_figure_data(figure, payload, out_path):
    """Write one figure's backing CSV.

    figure = "bounds": payload is the output of bound_rows().
    figure = "n_sweep": payload is a list of (N, scheme, trace) triples;
    emits the terminal gap normalized by the first recorded gap.
    figure = "gap_curves": payload is a list of (label, trace) pairs.
    """
    if figure == "bounds":
        header = ["t", "snr_db", "centralized", "consensus", "awgn", "total",
                  "normalized_total"]
        write_csv(out_path, header, ([r[h] for h in header] for r in payload))
    elif figure == "n_sweep":
        header = ["N", "scheme", "normalized_gap"]
        rows = []
        for n_uses, scheme, trace in payload:
            gaps = trace.column("gap")
            rows.append([n_uses, scheme, float(gaps[-1] / gaps[0])])
        write_csv(out_path, header, rows)
    elif figure == "gap_curves":
        header = ["label", "t", "gap"]
        rows = []
        for label, trace in payload:
            for t, gap in zip(trace.columns["t"], trace.columns["gap"]):
                rows.append([label, t, gap])
        write_csv(out_path, header, rows)
    else:
        raise ValueError(f"unknown figure id {figure!r}")
