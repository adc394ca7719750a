"""Secondary acceptance gate: export round-trip, pinned recipe, smoke train.

Also checks the structural separation: the extraction package and its test
suite carry no reference to this component, so they run with it absent.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

import impactloc
from impactloc.parsing import parse_impact_response

from impactloc_finetune import (
    TrainRecipe,
    build_records,
    load_trained_adapter,
    train,
)


def check(lines: list[str], name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" — {detail}" if detail else "")
    print(line)
    lines.append(line)
    assert ok, line


def test_secondary_export_round_trip(secondary_lines, ft_train_split):
    posts = {p.post_id: p for p in ft_train_split.posts}
    records = build_records(ft_train_split)
    bad = 0
    for record in records:
        gold = posts[record.post_id].gold
        parsed = parse_impact_response(record.response)
        if parsed.impacts != tuple(sp.surface for sp in gold.impacts) or (
            parsed.impacted_locations
            != tuple(sp.surface for sp in gold.impacted_locations)
        ):
            bad += 1
    check(
        secondary_lines,
        "export round-trip: every record re-parses to its gold lists",
        bad == 0 and len(records) == len(ft_train_split.posts),
        f"{len(records) - bad}/{len(records)} records (100%)" if not bad
        else f"{bad} of {len(records)} records failed",
    )


def test_secondary_recipe_manifest_and_smoke_adapter(
    secondary_lines, smoke_records_path, tmp_path
):
    out = tmp_path / "run"
    result = train(smoke_records_path, TrainRecipe(), out, log=lambda s: None)

    recipe = result.manifest["recipe"]
    pinned = (
        recipe["learning_rate"],
        recipe["batch_size"],
        recipe["lora_rank"],
        recipe["lora_alpha"],
        recipe["max_steps"],
    )
    check(
        secondary_lines,
        "manifest reproduces the pinned recipe (2e-4, 8, 16, 16, 80) exactly",
        pinned == (2e-4, 8, 16, 16, 80),
        f"manifest recipe: {pinned}",
    )

    manifest_on_disk = json.loads((out / "manifest.json").read_text())
    model, tokenizer = load_trained_adapter(out)
    ids = torch.tensor([tokenizer.encode("Types of Impact: flooded")])
    with torch.no_grad():
        logits = model(ids)
    loaded_ok = (
        manifest_on_disk == result.manifest
        and logits.shape == (1, ids.shape[1], tokenizer.vocab_size)
        and len(result.losses) == 80
    )
    check(
        secondary_lines,
        "20-record smoke training run produces a loadable adapter",
        loaded_ok,
        f"80 steps, final loss {result.losses[-1]:.3f}, adapter reloaded and ran",
    )


def test_secondary_primary_runs_without_this_component(secondary_lines):
    primary_pkg = Path(impactloc.__file__).parent
    primary_tests = Path(__file__).resolve().parents[2] / "tests"
    assert primary_tests.is_dir()
    offenders = [
        str(path)
        for root in (primary_pkg, primary_tests)
        for path in root.rglob("*.py")
        if "impactloc_finetune" in path.read_text(encoding="utf-8")
    ]
    check(
        secondary_lines,
        "extraction package and its suite have no reference to the finetune component",
        not offenders,
        f"references found: {offenders}" if offenders else
        f"scanned {primary_pkg.name}/ and tests/",
    )
