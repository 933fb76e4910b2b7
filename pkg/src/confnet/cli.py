"""Command line: ``confnet {run,sweep,optimal-alpha,report,demo-xor}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from confnet import engine, io, secrecy
from confnet.config import ConfigError, bundled_config_path, parse_config
from confnet.topology import TopologyError


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected start:stop:step")
        a, b, step = parts
        n = int(round((b - a) / step)) + 1
        return [round(a + i * step, 12) for i in range(n)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _load(args) -> engine.RunConfig:
    config = parse_config(args.config)
    changes = {}
    if getattr(args, "horizon", None):
        changes["horizon"] = args.horizon
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return replace(config, **changes) if changes else config


def _print_flat(d: dict, keys=None) -> None:
    for k, v in d.items():
        if keys is None or any(k.startswith(p) for p in keys):
            print(f"{k:32s} {io._fmt(v)}")


def cmd_run(args) -> int:
    config = replace(_load(args), record_trace=not args.no_trace)
    metrics, trace = engine.run(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = io.write_summary(metrics, out / "summary.json",
                           {"seed": config.seed, "horizon": config.horizon, "config": str(args.config)})
    if trace is not None:
        io.write_trace(trace, out / "trace.csv")
    _print_flat(doc, ("total_utility", "admitted", "confidential", "max_leakage", "outage_fraction"))
    return 0


def cmd_sweep(args) -> int:
    base = _load(args)
    res = engine.sweep(base, args.param, args.grid, seeds=args.seeds, workers=args.workers)
    rows = res.rows()
    keep = [args.param, "total_utility"] + [k for k in rows[0] if k.startswith(("admitted[", "confidential[",
                                                                                  "outage_fraction["))]
    print(",".join(keep))
    for r in rows:
        print(",".join(str(io._fmt(r[k])) for k in keep))
    if args.out:
        io.write_rows(rows, args.out)
    return 0


def cmd_optimal_alpha(args) -> int:
    base = _load(args)
    alphas, best, _ = engine.find_optimal_alpha(base, args.grid, seeds=args.seeds, workers=args.workers)
    for src, a in zip(base.topology.sources, alphas):
        print(f"alpha[{src}] {a:g}")
    print(f"total_utility {best:.9g}")
    return 0


def cmd_report(args) -> int:
    trace = io.read_trace(args.trace)
    rep = secrecy.secrecy_report(trace, args.window, args.alpha)
    for s, src in enumerate(trace.source_names):
        print(f"[{src}]")
        print(f"  service            {rep.service[s]:.9g}")
        print(f"  max leakage        {rep.max_leakage[s]:.9g}")
        print(f"  confidential rate  {rep.confidential_rate[s]:.9g}")
        print(f"  throughput         {rep.throughput[s]:.9g}")
        if rep.outage_fraction is not None:
            print(f"  outage fraction    {rep.outage_fraction[s]:.9g} over {rep.n_messages[s]} messages")
        for j, node in enumerate(trace.node_names):
            if trace.intermediate[j]:
                print(f"  leakage @ {node:8s} {rep.leakage[s, j]:.9g}")
    return 0


def cmd_demo_xor(args) -> int:
    res = secrecy.xor_demo(args.bits, args.seed)
    for k, v in res.items():
        print(f"{k:20s} {v:.6g}" if isinstance(v, float) else f"{k:20s} {v}")
    worst = min(v for k, v in res.items() if k.startswith("p_"))
    ok = res["roundtrip_failures"] == 0 and worst > 0.01
    print("uniformity: " + ("pass" if worst > 0.01 else "FAIL") + " at the 1% level")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="confnet", description="Confidential multihop network control simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", default=str(bundled_config_path()), help="YAML experiment (default: bundled diamond)")
        p.add_argument("--horizon", type=int, help="override run horizon in blocks")
        p.add_argument("--seed", type=int, help="override seed")

    p = sub.add_parser("run", help="simulate one configuration")
    with_config(p)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--no-trace", action="store_true", help="write the summary only")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one parameter")
    with_config(p)
    p.add_argument("--param", required=True, help="H, alpha, alpha1, gamma, gamma2, msg_bits, ...")
    p.add_argument("--grid", required=True, type=parse_grid, help="start:stop:step or comma list")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV table path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimal-alpha", help="coordinate search for the best secrecy fractions")
    with_config(p)
    p.add_argument("--grid", type=parse_grid, default=parse_grid("0.1:0.9:0.05"))
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_optimal_alpha)

    p = sub.add_parser("report", help="secrecy figures from a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--window", type=int, help="average over the last N blocks")
    p.add_argument("--alpha", type=float, nargs="+", help="secrecy fractions, for infinite-block throughput")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo-xor", help="two-share xor split with uniformity statistics")
    p.add_argument("--bits", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_demo_xor)
    return ap


def cli_main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, ValueError, OSError) as exc:
        print(f"confnet: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
