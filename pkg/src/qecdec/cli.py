"""Command-line entry points.

Subcommands: train, eval, weights-compare, threshold, selftest, config.
Worker count for evaluation comes from the QECDEC_WORKERS environment
variable only; there is no flag, so command lines stay reproducible.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiments as ex

__all__ = ["main", "build_parser"]


def _load_config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.default_config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "shots", None) is not None:
        cfg = replace(cfg, shots=args.shots)
    if getattr(args, "decoders", None):
        cfg = replace(cfg, decoders=tuple(d.strip() for d in args.decoders.split(",")))
    return cfg


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    trained, log = ex.train(cfg, progress=print)
    ex.save_trained(args.out, trained)
    log_path = args.out + ".log"
    with open(log_path, "w", encoding="utf-8") as f:
        f.write("sector,epoch,step,lr,lp,lc,entropy,total,accuracy\n")
        for r in log:
            f.write(
                f"{r.sector},{r.epoch},{r.step},{r.lr!r},{r.lp!r},{r.lc!r},"
                f"{r.entropy!r},{r.total!r},{r.accuracy!r}\n"
            )
    print(f"checkpoint written to {args.out}")
    print(f"training log written to {log_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    trained = ex.load_trained(args.checkpoint) if args.checkpoint else None
    rows = ex.evaluate(cfg, trained)
    out, own = _open_out(args.out)
    try:
        ex.write_ler_csv(out, rows, cfg)
    finally:
        if own:
            out.close()
            print(f"LER table written to {args.out}")
    return 0


def _cmd_weights_compare(args) -> int:
    cfg = _load_config(args)
    trained = ex.load_trained(args.checkpoint) if args.checkpoint else None
    rows = ex.weights_compare(cfg, trained=trained)
    out, own = _open_out(args.out)
    try:
        out.write(f"# config_hash={ex.config_hash(cfg)} version={ex.SCHEMA_VERSION}\n")
        out.write("p,method,shots,mean_weight,stderr\n")
        for r in rows:
            out.write(f"{r.p!r},{r.method},{r.shots},{r.mean_weight!r},{r.stderr!r}\n")
    finally:
        if own:
            out.close()
            print(f"weight table written to {args.out}")
    return 0


def _cmd_threshold(args) -> int:
    rows: list[ex.LerRow] = []
    for path in args.csv:
        file_rows, _ = ex.read_ler_csv(path)
        rows.extend(file_rows)
    wanted = tuple(d.strip() for d in args.decoders.split(",")) if args.decoders else None
    report = ex.threshold_estimate(rows)
    out, own = _open_out(args.out)
    try:
        for name in sorted(report):
            if wanted is not None and name not in wanted:
                continue
            result = report[name]
            if isinstance(result, str):
                out.write(f"{name}: {result}\n")
                continue
            out.write(
                f"{name}: threshold estimate {result['mean']:.4f} "
                f"(spread {result['spread']:.4f})\n"
            )
            for l1, l2, p in result["crossings"]:
                out.write(f"  L={l1} vs L={l2}: crossing at p={p:.4f}\n")
    finally:
        if own:
            out.close()
    return 0


def _cmd_selftest(args) -> int:
    results = ex.selftest(fast=not args.full)
    failed = [name for name, ok, _ in results if not ok]
    print()
    if failed:
        print(f"FAILED: {len(failed)}/{len(results)} checks: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_config(args) -> int:
    if not args.dump_defaults:
        print("nothing to do; use --dump-defaults", file=sys.stderr)
        return 2
    text = ex.dump_config(ex.default_config(noise=args.noise))
    out, own = _open_out(args.out)
    try:
        out.write(text)
    finally:
        if own:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qecdec",
        description="Neural decoding experiments for stabilizer codes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, checkpoint=False):
        p.add_argument("--config", help="experiment config file (flat key = value)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--shots", type=int, help="override shots per noise point")
        p.add_argument("--decoders", help="comma-separated decoder list override")
        if checkpoint:
            p.add_argument("--checkpoint", help="trained decoder checkpoint path")

    p_train = sub.add_parser("train", help="train a decoder and write a checkpoint")
    add_common(p_train)
    p_train.add_argument("--out", default="qecdec_checkpoint.qdck", help="checkpoint path")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="Monte-Carlo logical error rates to CSV")
    add_common(p_eval, checkpoint=True)
    p_eval.add_argument("--out", help="output CSV path (default stdout)")
    p_eval.set_defaults(func=_cmd_eval)

    p_w = sub.add_parser(
        "weights-compare", help="mean recovery weight per (p, method) to CSV"
    )
    add_common(p_w, checkpoint=True)
    p_w.add_argument("--out", help="output CSV path (default stdout)")
    p_w.set_defaults(func=_cmd_weights_compare)

    p_thr = sub.add_parser("threshold", help="crossing estimate from LER CSV files")
    p_thr.add_argument("csv", nargs="+", help="LER CSV files from the eval subcommand")
    p_thr.add_argument("--decoders", help="restrict the report to these decoders")
    p_thr.add_argument("--out", help="report path (default stdout)")
    p_thr.set_defaults(func=_cmd_threshold)

    p_self = sub.add_parser("selftest", help="run the invariant suite")
    p_self.add_argument("--full", action="store_true", help="larger, slower sweeps")
    p_self.set_defaults(func=_cmd_selftest)

    p_cfg = sub.add_parser("config", help="configuration utilities")
    p_cfg.add_argument("--dump-defaults", action="store_true", help="print the default config")
    p_cfg.add_argument(
        "--noise",
        default="depolarizing",
        choices=("independent", "depolarizing"),
        help="noise model for the default p grid",
    )
    p_cfg.add_argument("--out", help="write to this path instead of stdout")
    p_cfg.set_defaults(func=_cmd_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
