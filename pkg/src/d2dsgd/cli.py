"""Command-line front end: simulate runs, evaluate bounds, dump schedules,
and summarize partitions."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .channel import ChannelConfig
from .harness import bound_rows, emit_figure_data, load_config, run
from .learner import partition_noniid, synthetic_dataset
from .scheduling import analog_schedule, digital_schedule, dump_schedule, tdma_schedule
from .topology import build_topology, random_placement, with_positions


def _topology_from_args(args):
    kw = {}
    if args.topology in ("grid", "grid_torus"):
        kw = dict(rows=args.rows, cols=args.cols)
    topo = build_topology(args.topology, args.nodes, args.seed, **kw)
    if topo.positions is None and not getattr(args, "equal_snr", False):
        topo = with_positions(topo, random_placement(args.nodes, args.seed))
    return topo


def _add_topology_args(p):
    p.add_argument("--topology", default="grid_torus",
                   choices=["complete", "grid", "grid_torus", "star", "chain", "geometric"])
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--seed", type=int, default=1)


def cmd_simulate(args):
    config = load_config(args.config)
    trace = run(config, seed=args.seed, out_dir=args.out, name=args.name)
    last = {k: v[-1] for k, v in trace.columns.items()}
    print(f"protocol={trace.protocol} iterations={last['t'] + 1} "
          f"diverged={trace.diverged}")
    print(f"final gap={last['gap']:.6g} F_avg={last['F_avg']:.6g} "
          f"acc={last.get('acc', float('nan')):.4f}")
    if args.out:
        print(f"trace written under {args.out}")
    return 0


def cmd_bounds(args):
    topo = _topology_from_args(args)
    cfg = ChannelConfig.build(A0=10 ** (args.A0_dB / 10), d0_m=args.d0_m,
                              gamma=args.gamma, N0_dBm=args.N0_dBm, N=args.N,
                              snr_dB=args.snr_ref)
    if args.equal_snr:
        from .channel import equal_snr_override
        cfg = equal_snr_override(cfg, args.snr_ref)
    if args.M:
        M = args.M
    elif args.protocol == "analog":
        M = analog_schedule(topo).slot_count
    elif args.tdma:
        M = topo.node_count
    else:
        M = digital_schedule(topo).slot_count
    snr_grid = [float(x) for x in args.snr_grid.split(",")]
    t_grid = [int(x) for x in args.t_grid.split(",")]
    rows = bound_rows(args.protocol, topo, cfg, snr_grid=snr_grid, t_grid=t_grid,
                      bits=args.bits, dim=args.dim, mu=args.mu, L=args.L,
                      G2=args.G2, sigma_bar2=args.sigma2, v0=args.v0, a=args.a,
                      M=M, a_prime=args.a_prime, n_tilde_ref=args.n_tilde,
                      snr_ref_db=args.snr_ref)
    emit_figure_data("bounds", rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out} (M={M})")
    return 0


def cmd_schedule(args):
    topo = _topology_from_args(args)
    if args.mode == "analog":
        sched = analog_schedule(topo)
    elif args.mode == "tdma":
        sched = tdma_schedule(topo)
    else:
        sched = digital_schedule(topo)
    sys.stdout.write(dump_schedule(sched))
    return 0


def cmd_partition(args):
    if args.dataset != "synthetic":
        raise SystemExit("only the synthetic dataset is wired into this command")
    X, y = synthetic_dataset(args.seed, n_classes=args.classes,
                             samples_per_class=args.samples_per_class)
    parts = partition_noniid(X, y, args.K, args.seed, n_classes=args.classes)
    if args.summary:
        print(f"{'device':>6} {'samples':>8} {'classes':>8}  class list")
        for i, p in enumerate(parts):
            counts = np.bincount(p.labels, minlength=args.classes)
            per = counts[counts > 0]
            uniform = per.min() == per.max()
            cl = ",".join(str(c) for c in sorted(p.classes))
            print(f"{i:>6} {p.size:>8} {len(p.classes):>8}  [{cl}]"
                  + ("" if uniform else "  (unbalanced!)"))
        total = sum(p.size for p in parts)
        print(f"total samples in use: {total} / {y.size}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="d2dsgd",
                                     description="Decentralized SGD over wireless D2D links")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--name", default="run")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bounds", help="evaluate gap bounds on a (SNR, t) grid")
    _add_topology_args(p)
    p.add_argument("--protocol", choices=["digital", "analog"], default="digital")
    p.add_argument("--snr-grid", default="25,30,35,40")
    p.add_argument("--t-grid", default="2000,5000")
    p.add_argument("--N", type=int, default=10000)
    p.add_argument("--M", type=int, default=0)
    p.add_argument("--tdma", action="store_true")
    p.add_argument("--equal-snr", action="store_true")
    p.add_argument("--bits", type=int, default=32)
    p.add_argument("--dim", type=int, default=7850)
    p.add_argument("--mu", type=float, default=2e-4)
    p.add_argument("--L", type=float, default=0.16)
    p.add_argument("--G2", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--a", type=float, default=4e7)
    p.add_argument("--a-prime", type=float, default=None)
    p.add_argument("--n-tilde", type=float, default=0.0)
    p.add_argument("--snr-ref", type=float, default=30.0)
    p.add_argument("--A0-dB", type=float, default=-33.5)
    p.add_argument("--d0-m", dest="d0_m", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=3.76)
    p.add_argument("--N0-dBm", dest="N0_dBm", type=float, default=-169.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("schedule", help="print a slot schedule")
    _add_topology_args(p)
    p.add_argument("--mode", choices=["digital", "tdma", "analog"], default="digital")
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("partition", help="summarize a non-IID split")
    p.add_argument("--dataset", default="synthetic")
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples-per-class", type=int, default=300)
    p.add_argument("--summary", action="store_true")
    p.set_defaults(fn=cmd_partition)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
