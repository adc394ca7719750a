#!/usr/bin/env python3
"""Build the bundled DILC replica corpus and write it in canonical JSONL form.

The replica is generated deterministically from a fixed event table so that
every published corpus statistic (post counts, span counts, per-event ratios,
subset sizes) is reproduced exactly.  Point analysis or experiments at the
output file, or set DILC_PATH to a real canonical corpus to use that instead.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from impactloc import build_replica, corpus_stats, save_canonical


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/dilc_replica.jsonl",
                        help="output JSONL path (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=0,
                        help="generation seed (default: %(default)s)")
    parser.add_argument("--name", default="dilc-replica",
                        help="dataset name recorded in memory (default: %(default)s)")
    parser.add_argument("--stats", action="store_true",
                        help="print the per-event statistics table after writing")
    args = parser.parse_args(argv)

    started = time.perf_counter()
    dataset = build_replica(seed=args.seed, name=args.name)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_canonical(dataset, out_path)
    elapsed = time.perf_counter() - started

    report = corpus_stats(dataset)
    o = report.overall
    print(f"wrote {o.posts} posts to {out_path} in {elapsed:.2f}s "
          f"(impacts={o.impacts}, impacted={o.impacted_locations}, "
          f"all_locations={o.all_locations})")

    if args.stats:
        header = f"{'event':<28} {'posts':>6} {'impacts':>8} {'impacted':>9} {'all_loc':>8} {'ratio':>7}"
        print()
        print(header)
        print("-" * len(header))
        for event_id in sorted(report.per_event):
            row = report.per_event[event_id]
            ratio = row.impacted_to_all_ratio
            ratio_text = f"{100 * ratio:.1f}%" if ratio is not None else "n/a"
            print(f"{event_id:<28} {row.posts:>6} {row.impacts:>8} "
                  f"{row.impacted_locations:>9} {row.all_locations:>8} {ratio_text:>7}")
        overall_ratio = o.impacted_to_all_ratio
        print("-" * len(header))
        print(f"{'overall':<28} {o.posts:>6} {o.impacts:>8} {o.impacted_locations:>9} "
              f"{o.all_locations:>8} {100 * overall_ratio:.1f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
