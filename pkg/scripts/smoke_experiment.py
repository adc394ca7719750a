#!/usr/bin/env python3
"""Offline end-to-end smoke experiment against the built-in stub model.

Runs both extraction tasks through the full pipeline (prompt -> infer ->
parse -> ground -> evaluate) using the deterministic noisy stub endpoint,
prints the rendered reports, and checks the central post-processing claim
on the very same responses: grounding must never lower precision and must
leave recall unchanged.  Exits nonzero if either property fails.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from impactloc import build_replica, save_canonical
from impactloc.client import InferenceConfig
from impactloc.grounding import DEFAULT_POLICY
from impactloc.runner import ExperimentConfig, GridConfig, SelectionConfig, run

CELLS = (("basic", 0), ("persona", 6))


def _experiment(task: str, dataset_path: str, out_dir: str, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        name=f"smoke-{task}",
        task=task,
        seed=seed,
        dataset_path=dataset_path,
        out_dir=out_dir,
        selection=SelectionConfig(kind="random_split", train_frac=0.68,
                                  test_frac=0.20, evaluate="test"),
        grid=GridConfig(cells=CELLS, with_filter=True, without_filter=True),
        inference=InferenceConfig(endpoint_url="stub://noisy", model_id="stub-noisy"),
        policy=DEFAULT_POLICY,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default=None,
                        help="canonical JSONL corpus (default: build the replica in a temp dir)")
    parser.add_argument("--out", default=None,
                        help="output directory (default: temp dir)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    workdir = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="smoke-exp-"))
    workdir.mkdir(parents=True, exist_ok=True)
    if args.dataset:
        dataset_path = args.dataset
    else:
        dataset_path = str(workdir / "replica.jsonl")
        save_canonical(build_replica(seed=0), dataset_path)
        print(f"built replica corpus at {dataset_path}")

    failures: list[str] = []
    for task in ("all_locations", "impact_and_impacted"):
        out_dir = workdir / task
        result = run(_experiment(task, dataset_path, str(out_dir), args.seed))
        print((out_dir / "report.txt").read_text(encoding="utf-8"))

        overall = [r for r in result.rows if r["scope"] == "overall"]
        by_key = {(r["cell"], r["layer"], r["postprocessed"]): r for r in overall}
        for (cell, layer, post) in sorted(by_key):
            if post:
                continue
            raw = by_key[(cell, layer, False)]
            filt = by_key[(cell, layer, True)]
            delta = filt["precision"] - raw["precision"]
            print(f"{task}/{cell}/{layer}: precision {raw['precision']:.4f} -> "
                  f"{filt['precision']:.4f} (delta {delta:+.4f}), "
                  f"recall {raw['recall']:.4f} -> {filt['recall']:.4f}")
            if filt["precision"] < raw["precision"]:
                failures.append(f"{task}/{cell}/{layer}: filter lowered precision")
            if filt["recall"] != raw["recall"]:
                failures.append(f"{task}/{cell}/{layer}: filter changed recall")
        print()

    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return 1
    print("smoke experiment passed: grounding never lowered precision, recall unchanged")
    return 0


if __name__ == "__main__":
    sys.exit(main())
