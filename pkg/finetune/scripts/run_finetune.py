#!/usr/bin/env python3
"""Export instruction records from a training split and run the adapter recipe.

With no --dataset argument the bundled replica corpus is used, so the full
export -> train -> adapter pipeline runs offline end to end:

    python3 finetune/scripts/run_finetune.py --out runs/finetune --limit 50 --max-steps 10
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from impactloc import build_replica
from impactloc.corpus import Dataset, load_canonical, split_random

from impactloc_finetune import (
    FinetuneError,
    TrainRecipe,
    export_instruction_records,
    train,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", help="canonical corpus JSONL (default: built-in replica)")
    parser.add_argument("--out", default="runs/finetune", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="split and training seed")
    parser.add_argument("--limit", type=int, help="train on only the first N split posts")
    parser.add_argument("--max-steps", type=int, help="override recipe max_steps")
    parser.add_argument("--batch-size", type=int, help="override recipe batch_size")
    parser.add_argument("--records-only", action="store_true",
                        help="export the record file and stop before training")
    args = parser.parse_args(argv)

    dataset = load_canonical(args.dataset) if args.dataset else build_replica(seed=0)
    train_split, _ = split_random(dataset, 0.68, 0.20, seed=args.seed)
    if args.limit is not None:
        train_split = Dataset(train_split.name, train_split.posts[: args.limit])

    out = Path(args.out)
    records_path = out / "records.jsonl"
    records = export_instruction_records(train_split, records_path)
    print(f"exported {len(records)} records to {records_path}")
    if args.records_only:
        return 0

    overrides = {"seed": args.seed}
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    recipe = TrainRecipe(**overrides)

    result = train(records_path, recipe, out)
    print(f"adapter written to {result.out_dir / 'adapter'}")
    print(f"manifest: {result.out_dir / 'manifest.json'}")
    print(f"final loss after {len(result.losses)} steps: {result.losses[-1]:.4f}")
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except FinetuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
