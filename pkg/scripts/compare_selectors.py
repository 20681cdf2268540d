#!/usr/bin/env python3
"""Run both survivor-selection strategies on the same problems and print a
side-by-side table.

Every (pair, selector) cell runs the same seeds, so differences in the
table come from selection alone. Mock backends by default; pass
--backend live with EMO_LLM_URL / EMO_CLF_URL set to compare against real
model output instead.
"""

import argparse
import sys

from moprompt import ObjectivePair, RunConfig, build_backends, run_experiment
from moprompt.runner import BackendConfig

SELECTORS = ("nsga2", "sms_emoa")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--pair",
        action="append",
        dest="pairs",
        help="objective pair, repeatable (default: love:anger and joy:fear)",
    )
    parser.add_argument("--backend", default="mock", choices=["mock", "live"])
    parser.add_argument("--hv-mode", default="exact", choices=["greedy", "exact"])
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--gens", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs_compare")
    args = parser.parse_args()
    pair_specs = args.pairs or ["love:anger", "joy:fear"]

    rows = []
    failures = 0
    for spec in pair_specs:
        pair = ObjectivePair.parse(spec)
        for selector in SELECTORS:
            config = RunConfig(
                pair=pair,
                generations=args.gens,
                repetitions=args.reps,
                selector=selector,
                hv_mode=args.hv_mode,
                seed=args.seed,
                out_dir=args.out,
                backend=BackendConfig(kind=args.backend),
            )
            print(f"running {pair.slug} / {selector} ...", flush=True)
            summary = run_experiment(config, build_backends(config))
            if not summary.successes:
                failures += 1
                rows.append((pair.slug, selector, None))
                continue
            rows.append((pair.slug, selector, summary))

    header = (
        f"{'problem':<15} {'selector':<9} {'best':>9} {'worst':>9} "
        f"{'mean':>9} {'std':>9} {'max mean':>9}"
    )
    print()
    print(header)
    print("-" * len(header))
    for slug, selector, summary in rows:
        if summary is None:
            print(f"{slug:<15} {selector:<9} all repetitions failed")
            continue
        final = summary.final_stats
        print(
            f"{slug:<15} {selector:<9} {final['best']:>9.6f} {final['worst']:>9.6f} "
            f"{final['mean']:>9.6f} {final['std_dev']:>9.6f} "
            f"{summary.running_max_stats['mean']:>9.6f}"
        )
    print(f"\nrecords under {args.out}/")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
