#!/usr/bin/env python3
"""Entropy-weight schedule comparison: constant 0.01 / 0.1 / 0.2 versus the
linear 0->0.3 ramp, on the raw-pixel digit probe under symmetric noise.

Writes one metrics CSV per schedule setting into --out-dir and prints the
last-epoch test accuracies.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from entropy_gain_study import build_corpus, run  # noqa: E402
from noisylab.experiment import emit_metrics  # noqa: E402
from noisylab.losses import LambdaSchedule  # noqa: E402

SETTINGS = (("constant", 0.01), ("constant", 0.1), ("constant", 0.2),
            ("linear", 0.3))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--noise-rate", type=float, default=0.6)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--train-subset", type=int, default=10_000)
    parser.add_argument("--pool-size", type=int, default=12_000)
    parser.add_argument("--test-size", type=int, default=2_000)
    parser.add_argument("--mnist-dir", default=os.environ.get("NOISYLAB_MNIST_DIR", ""))
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    corpus = build_corpus(args)
    args.seeds = str(args.seed)  # reuse the shared run() signature

    results = {}
    for kind, lam in SETTINGS:
        sched = LambdaSchedule(kind, lam, args.epochs)
        records = run(corpus, sched, args.seed, args)
        name = f"{kind}{lam:g}"
        emit_metrics(records, f"{args.out_dir}/lambda_{name}.csv")
        results[name] = records[-1].test_acc
        print(f"{kind}:{lam:<5g} last-epoch test acc {100*records[-1].test_acc:.2f}%")

    best = max(results, key=results.get)
    print(f"\nbest setting: {best} ({100*results[best]:.2f}%)")


if __name__ == "__main__":
    main()
