#!/usr/bin/env python3
"""Run one mock-backed experiment and print its hypervolume statistics.

Handy for eyeballing the optimization dynamics without any model servers:
the mock generator and keyword classifier give a deterministic landscape,
so a given seed always reproduces the same run.
"""

import argparse
import sys

from moprompt import ObjectivePair, RunConfig, build_backends, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pair", default="joy:fear", help="objective pair, e.g. love:anger")
    parser.add_argument("--selector", default="sms_emoa", choices=["nsga2", "sms_emoa"])
    parser.add_argument("--hv-mode", default="exact", choices=["greedy", "exact"])
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--gens", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs")
    args = parser.parse_args()

    config = RunConfig(
        pair=ObjectivePair.parse(args.pair),
        generations=args.gens,
        repetitions=args.reps,
        selector=args.selector,
        hv_mode=args.hv_mode,
        seed=args.seed,
        out_dir=args.out,
    )

    def progress(rep, record):
        if record.generation_index % 10 == 0:
            print(
                f"rep {rep} gen {record.generation_index:3d} "
                f"hv {record.hypervolume:.6f} fallbacks {record.fallback_count}"
            )

    summary = run_experiment(config, build_backends(config), progress=progress)
    print()
    for result in summary.results:
        if result.status == "ok":
            print(
                f"rep {result.repetition}: final {result.final_hypervolume:.6f} "
                f"running max {result.max_hypervolume:.6f}"
            )
        else:
            print(f"rep {result.repetition}: failed ({result.error})")
    for name, stats in (("final", summary.final_stats), ("running max", summary.running_max_stats)):
        if stats:
            print(
                f"{name}: best {stats['best']:.6f} worst {stats['worst']:.6f} "
                f"mean {stats['mean']:.6f} std {stats['std_dev']:.6f}"
            )
    print(f"records under {summary.out_dir}")
    return 0 if summary.successes else 1


if __name__ == "__main__":
    sys.exit(main())
