"""Command-line front end: ``simulate``, ``bound``, ``dfree``, ``spectrum``, ``codesearch``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .codesearch import free_distance, search_codes, weight_spectrum
from .convcode import parse_generator, render_generator
from .sim import SimConfig, compute_bounds, emit_bounds, emit_report, load_config, run_sweep


def _load(args) -> SimConfig:
    overrides = {"seed": getattr(args, "seed", None), "workers": getattr(args, "workers", None)}
    if args.config:
        return load_config(args.config, **overrides)
    return SimConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_simulate(args) -> int:
    cfg = _load(args)
    bounds = None if args.no_bound else compute_bounds(cfg)
    points = run_sweep(cfg, bounds)
    csv_path, manifest = emit_report(points, bounds, args.out, cfg)
    for p in points:
        print(f"{p.ebno_db:6.2f} dB  BER {p.ber:.4e}  ({p.errors}/{p.bits})")
    print(f"wrote {csv_path} and {manifest}")
    return 0


def cmd_bound(args) -> int:
    cfg = _load(args)
    bounds = compute_bounds(cfg)
    path = emit_bounds(bounds, args.out)
    for b in bounds:
        if b.converged:
            print(f"{b.ebno_db:6.2f} dB  Pb_d closed-form {b.pbd_eq14:.4e}  spectrum {b.pbd_eq18:.4e}  Pb {b.pb_overall:.4e}")
        else:
            print(f"{b.ebno_db:6.2f} dB  diverged")
    print(f"wrote {path}")
    return 0


def _table(rows, header, csv_out):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(v).rjust(w) for v, w in zip(r, widths)))
    if csv_out:
        with open(csv_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def cmd_dfree(args) -> int:
    G = parse_generator(args.gen, m=args.memory)
    _table([[render_generator(G), f"{G.k}/{G.n}", G.m, free_distance(G)]],
           ["generator", "rate", "memory", "dfree"], args.csv)
    return 0


def cmd_spectrum(args) -> int:
    G = parse_generator(args.gen, m=args.memory)
    spec = weight_spectrum(G, args.depth - 1)
    rows = [[spec.d_free + i, a, c] for i, (a, c) in enumerate(zip(spec.a, spec.c))]
    print(f"{render_generator(G)}  dfree={spec.d_free}")
    _table(rows, ["weight", "a", "c"], args.csv)
    return 0


def cmd_codesearch(args) -> int:
    k, n = (int(x) for x in args.rate.split("/"))
    found = search_codes(k, n, args.memory, args.top, workers=args.workers)
    rows = []
    for G in found:
        spec = weight_spectrum(G, 0)
        rows.append([render_generator(G), spec.d_free, spec.a[0], spec.c[0]])
    _table(rows, ["generator", "dfree", "a_dfree", "c_dfree"], args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestcpfsk", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo BER sweep")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-bound", action="store_true", help="skip the analytic bound columns")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bound", help="analytic BER bounds")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.set_defaults(func=cmd_bound)

    for name, func in (("dfree", cmd_dfree), ("spectrum", cmd_spectrum)):
        p = sub.add_parser(name)
        p.add_argument("--gen", required=True, help='octal rows, e.g. "6,5,1;7,2,5"')
        p.add_argument("--memory", type=int)
        p.add_argument("--csv", type=Path)
        if name == "spectrum":
            p.add_argument("--depth", type=int, default=7, help="number of weights from dfree")
        p.set_defaults(func=func)

    p = sub.add_parser("codesearch")
    p.add_argument("--rate", required=True, help="k/n")
    p.add_argument("--memory", type=int, required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_codesearch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
