"""Experiment runner: declarative config, prompt grid, artifacts, reports.

A run is a grid of prompt cells (family x shots) over one task and one
dataset selection. Each cell produces raw responses, parsed predictions,
optionally grounded predictions, and per-layer evaluations; the run ends
with a machine-readable report.jsonl and a human-readable report.txt. All
artifacts are written atomically and contain no timestamps, so two runs
with the same config, seed and response cache are byte-identical. An output
directory holding a manifest from a different config is refused.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import yaml

from . import stubmodel
from .client import InferenceConfig, ResponseCache, Transport, run_batch
from .corpus import (
    Dataset,
    load_canonical,
    select_event,
    exclude_event,
    split_random,
    subset_by_disaster_type,
)
from .evaluation import LayerReport, evaluate, soft_overlap_diagnostic
from .grounding import MatchPolicy, filter_impact_prediction, filter_location_prediction
from .parsing import ImpactPrediction, LocationPrediction, parse_or_empty
from .prompts import FAMILIES, SHOT_COUNTS, TASKS, PromptSpec, build_prompt, template_checksums

log = logging.getLogger("impactloc.runner")


class RunnerError(ValueError):
    """Invalid experiment config or an unusable output directory."""


SELECTION_KINDS = ("none", "random_split", "disaster_type", "exclude_event", "select_event")


@dataclass(frozen=True)
class SelectionConfig:
    kind: str = "none"
    train_frac: float = 0.68
    test_frac: float = 0.20
    evaluate: str = "test"
    disaster_type: str | None = None
    event_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SELECTION_KINDS:
            raise RunnerError(f"unknown selection kind {self.kind!r}; expected one of {SELECTION_KINDS}")
        if self.evaluate not in ("train", "test"):
            raise RunnerError(f"selection.evaluate must be train or test, got {self.evaluate!r}")
        if self.kind == "disaster_type" and not self.disaster_type:
            raise RunnerError("selection.disaster_type is required for kind=disaster_type")
        if self.kind in ("exclude_event", "select_event") and not self.event_id:
            raise RunnerError(f"selection.event_id is required for kind={self.kind}")


@dataclass(frozen=True)
class GridConfig:
    cells: tuple[tuple[str, int], ...]
    with_filter: bool = True
    without_filter: bool = True

    def __post_init__(self) -> None:
        if not self.cells:
            raise RunnerError("grid must contain at least one cell")
        for family, shots in self.cells:
            if family not in FAMILIES or shots not in SHOT_COUNTS:
                raise RunnerError(f"invalid grid cell ({family!r}, {shots!r})")
        if len(set(self.cells)) != len(self.cells):
            raise RunnerError("duplicate grid cells")
        if not (self.with_filter or self.without_filter):
            raise RunnerError("grid disables both filtered and unfiltered evaluation")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    task: str
    seed: int
    dataset_path: str
    out_dir: str
    selection: SelectionConfig
    grid: GridConfig
    inference: InferenceConfig
    policy: MatchPolicy
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise RunnerError("experiment.name must be non-empty")
        if self.task not in TASKS:
            raise RunnerError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if not self.dataset_path:
            raise RunnerError("dataset.path must be set")
        if not self.out_dir:
            raise RunnerError("output dir must be set (config [output] dir or --out)")


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise RunnerError(f"config section {name!r} must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise RunnerError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    return sec


def load_config(
    path: str | Path,
    *,
    dataset_path: str | None = None,
    out_dir: str | None = None,
    seed: int | None = None,
    endpoint_url: str | None = None,
    model_id: str | None = None,
    no_filter: bool = False,
) -> ExperimentConfig:
    """Load a YAML experiment config, applying CLI-style overrides."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise RunnerError(f"{path}: config must be a mapping of sections")
    known_sections = {"experiment", "dataset", "selection", "grid", "inference", "match_policy", "output"}
    unknown = set(raw) - known_sections
    if unknown:
        raise RunnerError(f"unknown config sections: {sorted(unknown)}")

    exp = _section(raw, "experiment", {"name", "task", "seed"})
    ds = _section(raw, "dataset", {"path"})
    sel = _section(raw, "selection", {"kind", "train_frac", "test_frac", "evaluate", "disaster_type", "event_id"})
    grid_raw = _section(raw, "grid", {"families", "shots", "cells", "with_filter", "without_filter"})
    inf = _section(
        raw,
        "inference",
        {"endpoint_url", "model_id", "temperature", "top_p", "max_output_tokens",
         "timeout", "max_retries", "backoff_base", "max_in_flight", "api_key", "cache_dir"},
    )
    pol = _section(
        raw,
        "match_policy",
        {"case_insensitive", "strip_hash_and_at", "unicode_nfc", "word_boundary", "whole_hashtag_only"},
    )
    out = _section(raw, "output", {"dir"})

    if "cells" in grid_raw:
        cells = tuple((str(f), int(s)) for f, s in grid_raw["cells"])
    else:
        families = grid_raw.get("families", list(FAMILIES))
        shots = grid_raw.get("shots", [0])
        cells = tuple((str(f), int(s)) for f in families for s in shots)
    grid = GridConfig(
        cells=cells,
        with_filter=bool(grid_raw.get("with_filter", True)) and not no_filter,
        without_filter=bool(grid_raw.get("without_filter", True)),
    )

    cache_dir = inf.pop("cache_dir", None)
    inf.setdefault("endpoint_url", os.environ.get("ENDPOINT_URL", ""))
    inf.setdefault("api_key", os.environ.get("API_KEY") or None)
    if endpoint_url is not None:
        inf["endpoint_url"] = endpoint_url
    if model_id is not None:
        inf["model_id"] = model_id
    inf.setdefault("model_id", "")
    try:
        inference = InferenceConfig(**inf)
    except ValueError as exc:
        raise RunnerError(f"inference config: {exc}") from exc

    return ExperimentConfig(
        name=str(exp.get("name", Path(path).stem)),
        task=str(exp.get("task", "")),
        seed=int(seed if seed is not None else exp.get("seed", 0)),
        dataset_path=str(dataset_path if dataset_path is not None else ds.get("path", "")),
        out_dir=str(out_dir if out_dir is not None else out.get("dir", "")),
        selection=SelectionConfig(**sel),
        grid=grid,
        inference=inference,
        policy=MatchPolicy(**pol),
        cache_dir=cache_dir,
    )


def _select(cfg: ExperimentConfig, dataset: Dataset) -> tuple[Dataset, int, int]:
    """Apply the selection; returns (eval dataset, train size, eval size)."""
    sel = cfg.selection
    if sel.kind == "none":
        return dataset, 0, len(dataset)
    if sel.kind == "random_split":
        train, test = split_random(dataset, sel.train_frac, sel.test_frac, cfg.seed)
        chosen = test if sel.evaluate == "test" else train
        return chosen, len(train), len(chosen)
    if sel.kind == "disaster_type":
        if sel.disaster_type not in {p.disaster_type for p in dataset.posts}:
            raise RunnerError(f"selection references disaster_type {sel.disaster_type!r} absent from dataset")
        sub = subset_by_disaster_type(dataset, sel.disaster_type)
        return sub, 0, len(sub)
    events = {p.event_id for p in dataset.posts}
    if sel.event_id not in events:
        raise RunnerError(f"selection references event_id {sel.event_id!r} absent from dataset")
    if sel.kind == "exclude_event":
        sub = exclude_event(dataset, sel.event_id)
    else:
        sub = select_event(dataset, sel.event_id)
    return sub, 0, len(sub)


def _cell_id(family: str, shots: int) -> str:
    return f"{family}-{shots}shot"


def _config_fingerprint(cfg: ExperimentConfig) -> dict:
    """Everything that determines results; excludes secrets and I/O knobs."""
    return {
        "name": cfg.name,
        "task": cfg.task,
        "seed": cfg.seed,
        "dataset_path": cfg.dataset_path,
        "selection": asdict(cfg.selection),
        "grid": {"cells": [list(c) for c in cfg.grid.cells],
                 "with_filter": cfg.grid.with_filter,
                 "without_filter": cfg.grid.without_filter},
        "model": {
            "endpoint_url": cfg.inference.endpoint_url,
            "model_id": cfg.inference.model_id,
            "temperature": cfg.inference.temperature,
            "top_p": cfg.inference.top_p,
            "max_output_tokens": cfg.inference.max_output_tokens,
        },
        "match_policy": asdict(cfg.policy),
        "template_checksums": template_checksums(),
    }


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)


def _prediction_row(post_id: str, pred: LocationPrediction | ImpactPrediction, malformed: bool) -> dict:
    if isinstance(pred, LocationPrediction):
        return {
            "post_id": post_id,
            "malformed": malformed,
            "entries": [{"surface": e.surface, "count": e.count} for e in pred.entries],
        }
    return {
        "post_id": post_id,
        "malformed": malformed,
        "impacts": list(pred.impacts),
        "impacted_locations": list(pred.impacted_locations),
    }


def _entity_lists(task: str, pred: LocationPrediction | ImpactPrediction) -> dict[str, list[str]]:
    """Map evaluation layer -> predicted entity list for this task."""
    if task == "all_locations":
        assert isinstance(pred, LocationPrediction)
        return {"all_locations": [e.surface for e in pred.entries]}
    assert isinstance(pred, ImpactPrediction)
    return {"impacts": list(pred.impacts), "impacted_locations": list(pred.impacted_locations)}


def _layer_report_dict(report: LayerReport) -> dict:
    def scope_dict(s) -> dict:
        return {
            "n_posts": s.n_posts, "malformed": s.malformed,
            "tp": s.tally.tp, "fp": s.tally.fp, "fn": s.tally.fn,
            "precision": s.precision, "recall": s.recall, "f1": s.f1,
        }

    return {
        "layer": report.layer,
        "overall": scope_dict(report.overall),
        "per_event": {e: scope_dict(s) for e, s in sorted(report.per_event.items())},
    }


@dataclass(frozen=True)
class RunResult:
    out_dir: Path
    manifest: dict
    rows: tuple[dict, ...]


def run(cfg: ExperimentConfig, *, transport: Transport | None = None, dry_run: bool = False) -> RunResult:
    """Execute the experiment grid; see the module docstring for artifacts."""
    dataset = load_canonical(cfg.dataset_path)
    eval_dataset, n_train, n_eval = _select(cfg, dataset)
    if not eval_dataset.posts:
        raise RunnerError("selection produced an empty evaluation dataset")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = _config_fingerprint(cfg)
    manifest = {
        "config_sha256": hashlib.sha256(
            json.dumps(fingerprint, sort_keys=True).encode("utf-8")
        ).hexdigest(),
        "fingerprint": fingerprint,
        "dataset_posts": len(dataset),
        "train_posts": n_train,
        "eval_posts": n_eval,
        "cells": [_cell_id(f, s) for f, s in cfg.grid.cells],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if manifest_path.exists() and manifest_path.read_text(encoding="utf-8") != manifest_text:
        raise RunnerError(
            f"{manifest_path} belongs to a different experiment config; "
            "use a fresh --out directory or restore the original config"
        )
    _atomic_write(manifest_path, manifest_text)

    if transport is None:
        transport = stubmodel.transport_for_endpoint(cfg.inference.endpoint_url)
    cache = ResponseCache(cfg.cache_dir or out_dir / "cache")

    rows: list[dict] = []
    for family, shots in cfg.grid.cells:
        cell = _cell_id(family, shots)
        cell_dir = out_dir / "cells" / cell
        spec = PromptSpec.for_task(cfg.task, family, shots)
        if dry_run:
            prompt_rows = [
                {"post_id": p.post_id, "prompt": build_prompt(spec, p.text)}
                for p in eval_dataset.posts
            ]
            _atomic_write(cell_dir / "prompts.jsonl", _jsonl(prompt_rows))
            log.info("cell %s: dry run, %d prompts", cell, len(prompt_rows))
            continue

        responses = run_batch(eval_dataset.posts, spec, cfg.inference, transport=transport, cache=cache)
        _atomic_write(
            cell_dir / "responses.jsonl",
            _jsonl(
                [
                    {"post_id": r.post_id, "prompt_sha256": r.prompt_sha256,
                     "text": r.text, "error": r.error, "attempts": r.attempts}
                    for r in responses
                ]
            ),
        )

        parsed: dict[str, LocationPrediction | ImpactPrediction] = {}
        malformed: set[str] = set()
        for r in responses:
            # Error responses carry no text and parse as malformed-empty.
            pred, bad = parse_or_empty(cfg.task, r.text or "")
            parsed[r.post_id] = pred
            if bad:
                malformed.add(r.post_id)
        _atomic_write(
            cell_dir / "predictions.jsonl",
            _jsonl([_prediction_row(p.post_id, parsed[p.post_id], p.post_id in malformed)
                    for p in eval_dataset.posts]),
        )

        variants: list[tuple[str, dict[str, LocationPrediction | ImpactPrediction]]] = []
        if cfg.grid.without_filter:
            variants.append(("unfiltered", parsed))
        if cfg.grid.with_filter:
            by_id = eval_dataset.by_id()
            filtered: dict[str, LocationPrediction | ImpactPrediction] = {}
            for pid, pred in parsed.items():
                text = by_id[pid].text
                if isinstance(pred, LocationPrediction):
                    filtered[pid] = filter_location_prediction(pred, text, cfg.policy)
                else:
                    filtered[pid] = filter_impact_prediction(pred, text, cfg.policy)
            _atomic_write(
                cell_dir / "filtered.jsonl",
                _jsonl([_prediction_row(p.post_id, filtered[p.post_id], p.post_id in malformed)
                        for p in eval_dataset.posts]),
            )
            variants.append(("filtered", filtered))

        layers = ("all_locations",) if cfg.task == "all_locations" else ("impacts", "impacted_locations")
        cell_eval: dict[str, dict] = {}
        for variant, preds in variants:
            cell_eval[variant] = {}
            layer_lists = {
                pid: _entity_lists(cfg.task, pred) for pid, pred in preds.items()
            }
            for layer in layers:
                predictions = {pid: lists[layer] for pid, lists in layer_lists.items()}
                report = evaluate(eval_dataset, predictions, layer, malformed=malformed)
                cell_eval[variant][layer] = _layer_report_dict(report)

                soft_by_event: dict[str, list[float]] = {}
                softs: list[float] = []
                for p in eval_dataset.posts:
                    gold_surfaces = [sp.surface for sp in getattr(p.gold, layer)]
                    s = soft_overlap_diagnostic(predictions[p.post_id], gold_surfaces)
                    softs.append(s)
                    soft_by_event.setdefault(p.event_id, []).append(s)

                def row(scope: str, sd: dict, soft: list[float]) -> dict:
                    return {
                        "experiment": cfg.name, "task": cfg.task, "cell": cell,
                        "family": family, "shots": shots,
                        "postprocessed": variant == "filtered",
                        "layer": layer, "scope": scope,
                        "n_posts": sd["n_posts"], "malformed": sd["malformed"],
                        "tp": sd["tp"], "fp": sd["fp"], "fn": sd["fn"],
                        "precision": sd["precision"], "recall": sd["recall"], "f1": sd["f1"],
                        "mean_soft_overlap": sum(soft) / len(soft) if soft else 0.0,
                    }

                rep = cell_eval[variant][layer]
                rows.append(row("overall", rep["overall"], softs))
                for event_id in eval_dataset.event_ids():
                    if event_id in rep["per_event"]:
                        rows.append(row(f"event:{event_id}", rep["per_event"][event_id],
                                        soft_by_event.get(event_id, [])))
        _atomic_write(cell_dir / "eval.json",
                      json.dumps(cell_eval, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        log.info("cell %s: %d posts, %d malformed", cell, n_eval, len(malformed))

    if not dry_run:
        _atomic_write(out_dir / "report.jsonl", _jsonl(rows))
        _atomic_write(out_dir / "report.txt", render_report(manifest, rows))
    return RunResult(out_dir=out_dir, manifest=manifest, rows=tuple(rows))


def render_report(manifest: dict, rows: Sequence[dict]) -> str:
    """Fixed-width table with impact and location metric groups per row."""
    fp = manifest["fingerprint"]
    header = (
        f"experiment: {fp['name']}  task: {fp['task']}  model: {fp['model']['model_id']}\n"
        f"dataset: {fp['dataset_path']}  posts: {manifest['dataset_posts']}  "
        f"train: {manifest['train_posts']}  eval: {manifest['eval_posts']}\n"
    )
    overall = [r for r in rows if r["scope"] == "overall"]
    by_key: dict[tuple[str, bool], dict[str, dict]] = {}
    for r in overall:
        by_key.setdefault((r["cell"], r["postprocessed"]), {})[r["layer"]] = r

    cols = ("Disaster", "Model", "Finetuning", "Train", "Test",
            "Imp-P", "Imp-R", "Imp-F1", "Loc-P", "Loc-R", "Loc-F1")
    widths = (20, 34, 10, 6, 6, 7, 7, 7, 7, 7, 7)

    def fmt_row(values: Sequence[str]) -> str:
        return "  ".join(str(v).ljust(w) for v, w in zip(values, widths)).rstrip() + "\n"

    out = [header, "\n", fmt_row(cols), fmt_row(tuple("-" * w for w in widths))]
    disaster = fp["selection"].get("disaster_type") or Path(fp["dataset_path"]).stem
    for (cell, pp), layers in by_key.items():
        model = f"{fp['model']['model_id']}/{cell}" + ("+pp" if pp else "")
        imp = layers.get("impacts")
        loc = layers.get("impacted_locations") or layers.get("all_locations")

        def metrics(r: dict | None) -> list[str]:
            if r is None:
                return ["-", "-", "-"]
            return [f"{r['precision']:.2f}", f"{r['recall']:.2f}", f"{r['f1']:.2f}"]

        train = manifest["train_posts"] or "-"
        out.append(fmt_row([disaster, model, "none", train, manifest["eval_posts"],
                            *metrics(imp), *metrics(loc)]))
    return "".join(out)
