"""Command-line front end.

Subcommands:
  run <config>          train once, write the metrics CSV
  sweep <config>        repeat the run across --noise-rates, one CSV per rate
  grad-check            run the full gradient-oracle suite
  make-noise <dataset> <spec>   corrupt a label set and dump it for inspection

Exit codes: 0 success, 1 failed grad-check, 2 config/format problems,
3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import struct
import sys
from dataclasses import replace

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DivergenceError, FormatError, InvalidInputError
from .experiment import emit_metrics, emit_metrics_jsonl, parse_config, run_experiment
from .gradcheck import GRAD_TOL, run_full_suite
from .noise import NoiseSpec, builtin_flip_map, corrupt, empirical_noise_rate, parse_flip_map
from .numerics import LabelVector


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisylab")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--epochs", type=int, default=None)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--jsonl", action="store_true",
                       help="also write a JSON-lines mirror next to the CSV")
    run_p.add_argument("--timing", action="store_true",
                       help="record wall-clock ms in the output "
                            "(breaks byte-determinism of the files)")

    sweep_p = sub.add_parser("sweep", help="repeat a run across noise rates")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--noise-rates", required=True,
                         help="comma list of rates, e.g. 0.2,0.4,0.6,0.8")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--epochs", type=int, default=None)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--jsonl", action="store_true")
    sweep_p.add_argument("--timing", action="store_true")

    gc_p = sub.add_parser("grad-check", help="verify all analytic gradients "
                                             "against finite differences")
    gc_p.add_argument("--points", type=int, default=100)
    gc_p.add_argument("--seed", type=int, default=0)

    mn_p = sub.add_parser("make-noise", help="corrupt a label set and write "
                                             "index,clean,noisy rows")
    mn_p.add_argument("dataset", help="an NLFC feature cache or an IDX label file")
    mn_p.add_argument("spec", help="symmetric:<rate> or asymmetric:<rate>:<map>, "
                                   "map = mnist|cifar10|cifar100|'src>dst,...'")
    mn_p.add_argument("--seed", type=int, default=0)
    mn_p.add_argument("--out", default=None)
    return parser


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
        if cfg.loss.entropy_schedule is not None:
            sched = replace(cfg.loss.entropy_schedule, total_epochs=args.epochs)
            cfg = replace(cfg, loss=replace(cfg.loss, entropy_schedule=sched))
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _emit(records, out_path, jsonl: bool, timing: bool) -> None:
    emit_metrics(records, out_path, include_timing=timing)
    print(f"wrote {out_path} ({len(records)} epochs, "
          f"final test acc {records[-1].test_acc:.4f})")
    if jsonl:
        jsonl_path = os.path.splitext(out_path)[0] + ".jsonl"
        emit_metrics_jsonl(records, jsonl_path, include_timing=timing)
        print(f"wrote {jsonl_path}")


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    records = run_experiment(cfg)
    _emit(records, cfg.out, args.jsonl, args.timing)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    if cfg.noise is None:
        raise ConfigError("sweep needs a noise kind in the config (noise = ...)")
    try:
        rates = [float(tok) for tok in args.noise_rates.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --noise-rates: {exc}") from None
    if not rates:
        raise ConfigError("--noise-rates is empty")
    base, ext = os.path.splitext(cfg.out)
    for rate in rates:
        run_cfg = replace(cfg, noise=replace(cfg.noise, rate=rate))
        records = run_experiment(run_cfg)
        _emit(records, f"{base}_eta{rate:g}{ext or '.csv'}", args.jsonl, args.timing)
    return 0


def _cmd_grad_check(args) -> int:
    results = run_full_suite(points=args.points, seed=args.seed)
    failed = 0
    for res in results:
        status = "ok" if res.ok else "FAIL"
        print(f"{res.name:<16} max rel err {res.max_rel_err:.3e} "
              f"({res.points} points)  {status}")
        failed += not res.ok
    if failed:
        print(f"{failed} gradient check(s) exceeded tolerance {GRAD_TOL:g}")
        return 1
    print(f"all gradients within {GRAD_TOL:g}")
    return 0


def _load_labels_for_noise(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == data_mod.FEATURE_CACHE_MAGIC:
        return data_mod.load_feature_cache(path).labels
    if len(head) == 4 and struct.unpack(">I", head)[0] == data_mod.IDX_LABEL_MAGIC:
        with open(path, "rb") as fh:
            fh.read(8)
            raw = np.frombuffer(fh.read(), dtype=np.uint8)
        return LabelVector(raw.astype(np.int64), max(10, int(raw.max()) + 1))
    raise FormatError(f"{path} is neither an NLFC cache nor an IDX label file")


def _parse_noise_arg(text: str, num_classes: int) -> NoiseSpec:
    parts = text.split(":")
    kind = parts[0]
    if kind == "symmetric" and len(parts) == 2:
        return NoiseSpec("symmetric", float(parts[1]))
    if kind == "asymmetric" and len(parts) == 3:
        map_text = parts[2]
        if map_text in ("mnist", "cifar10", "cifar100"):
            flip = builtin_flip_map(map_text)
        else:
            flip = parse_flip_map(map_text, num_classes)
        return NoiseSpec("asymmetric", float(parts[1]), flip_map=flip)
    raise ConfigError(
        f"bad noise spec {text!r}: expected symmetric:<rate> or "
        "asymmetric:<rate>:<map>"
    )


def _cmd_make_noise(args) -> int:
    clean = _load_labels_for_noise(args.dataset)
    try:
        spec = _parse_noise_arg(args.spec, clean.num_classes)
        spec = replace(spec, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    noisy = corrupt(clean, spec)
    out = args.out or f"{args.dataset}.noisy.csv"
    lines = ["index,clean,noisy"]
    lines += [f"{i},{c},{n}" for i, (c, n) in
              enumerate(zip(clean.labels, noisy.labels))]
    lines.append(f"# empirical_rate={empirical_noise_rate(clean, noisy):.6f}")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def cli_main(argv=None) -> int:
    """Run the CLI; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "grad-check": _cmd_grad_check,
        "make-noise": _cmd_make_noise,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FormatError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
