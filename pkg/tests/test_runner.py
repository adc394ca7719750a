"""Experiment runner: config loading, artifacts, determinism, CLI."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from impactloc import cli
from impactloc.corpus import save_canonical
from impactloc.runner import (
    ExperimentConfig,
    GridConfig,
    RunnerError,
    SelectionConfig,
    load_config,
    render_report,
    run,
)
from impactloc.client import InferenceConfig
from impactloc.grounding import DEFAULT_POLICY

BASE_YAML = """\
experiment:
  name: unit-exp
  task: all_locations
  seed: 0

dataset:
  path: {dataset}

selection:
  kind: random_split
  train_frac: 0.68
  test_frac: 0.20
  evaluate: test

grid:
  cells:
    - [basic, 0]
    - [persona, 6]

inference:
  endpoint_url: stub://noisy
  model_id: stub-noisy

match_policy: {{}}

output:
  dir: {out}
"""


@pytest.fixture(scope="module")
def corpus_path(replica, tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("corpus") / "replica.jsonl"
    save_canonical(replica, path)
    return str(path)


def write_config(tmp_path: Path, dataset: str, out: str | None = None, body: str = BASE_YAML) -> Path:
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(
        body.format(dataset=dataset, out=out or str(tmp_path / "run")), encoding="utf-8"
    )
    return cfg_path


def small_experiment(corpus_path: str, out_dir: str, **overrides) -> ExperimentConfig:
    values = dict(
        name="unit-exp",
        task="all_locations",
        seed=0,
        dataset_path=corpus_path,
        out_dir=out_dir,
        selection=SelectionConfig(kind="select_event", event_id="kaikoura_earthquake_2016"),
        grid=GridConfig(cells=(("basic", 0),)),
        inference=InferenceConfig(endpoint_url="stub://noisy", model_id="stub-noisy"),
        policy=DEFAULT_POLICY,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


class TestLoadConfig:
    def test_happy_path(self, corpus_path, tmp_path):
        cfg = load_config(write_config(tmp_path, corpus_path))
        assert cfg.name == "unit-exp"
        assert cfg.task == "all_locations"
        assert cfg.grid.cells == (("basic", 0), ("persona", 6))
        assert cfg.selection.kind == "random_split"
        assert cfg.inference.endpoint_url == "stub://noisy"

    def test_unknown_section_rejected(self, corpus_path, tmp_path):
        path = write_config(tmp_path, corpus_path)
        path.write_text(path.read_text() + "\nmystery:\n  x: 1\n", encoding="utf-8")
        with pytest.raises(RunnerError, match="unknown config sections"):
            load_config(path)

    def test_unknown_key_rejected(self, corpus_path, tmp_path):
        body = BASE_YAML.replace("  seed: 0", "  seed: 0\n  verbosity: 3")
        path = write_config(tmp_path, corpus_path, body=body)
        with pytest.raises(RunnerError, match="unknown"):
            load_config(path)

    def test_families_cross_product_defaults_to_zero_shot(self, corpus_path, tmp_path):
        body = BASE_YAML.replace(
            "  cells:\n    - [basic, 0]\n    - [persona, 6]", "  families: [basic, cot]"
        )
        cfg = load_config(write_config(tmp_path, corpus_path, body=body))
        assert cfg.grid.cells == (("basic", 0), ("cot", 0))

    def test_overrides(self, corpus_path, tmp_path):
        path = write_config(tmp_path, corpus_path)
        cfg = load_config(
            path,
            dataset_path="other.jsonl",
            out_dir="elsewhere",
            seed=9,
            endpoint_url="stub://perfect-format",
            model_id="stub-perfect",
            no_filter=True,
        )
        assert cfg.dataset_path == "other.jsonl"
        assert cfg.out_dir == "elsewhere"
        assert cfg.seed == 9
        assert cfg.inference.endpoint_url == "stub://perfect-format"
        assert cfg.inference.model_id == "stub-perfect"
        assert not cfg.grid.with_filter

    def test_invalid_grid_cell(self, corpus_path, tmp_path):
        body = BASE_YAML.replace("[basic, 0]", "[basic, 3]")
        with pytest.raises(RunnerError, match="invalid grid cell"):
            load_config(write_config(tmp_path, corpus_path, body=body))

    def test_missing_task(self, corpus_path, tmp_path):
        body = BASE_YAML.replace("  task: all_locations\n", "")
        with pytest.raises(RunnerError, match="task"):
            load_config(write_config(tmp_path, corpus_path, body=body))

    def test_selection_validation(self):
        with pytest.raises(RunnerError, match="selection.event_id"):
            SelectionConfig(kind="select_event")
        with pytest.raises(RunnerError, match="disaster_type"):
            SelectionConfig(kind="disaster_type")
        with pytest.raises(RunnerError, match="train or test"):
            SelectionConfig(kind="random_split", evaluate="validation")

    def test_grid_validation(self):
        with pytest.raises(RunnerError, match="at least one cell"):
            GridConfig(cells=())
        with pytest.raises(RunnerError, match="duplicate"):
            GridConfig(cells=(("basic", 0), ("basic", 0)))
        with pytest.raises(RunnerError, match="disables both"):
            GridConfig(cells=(("basic", 0),), with_filter=False, without_filter=False)


class TestRun:
    def test_artifacts_written(self, corpus_path, tmp_path):
        out = tmp_path / "run"
        result = run(small_experiment(corpus_path, str(out)))
        cell = out / "cells" / "basic-0shot"
        assert (out / "manifest.json").exists()
        assert (cell / "responses.jsonl").exists()
        assert (cell / "predictions.jsonl").exists()
        assert (cell / "filtered.jsonl").exists()
        assert (cell / "eval.json").exists()
        assert (out / "report.jsonl").exists()
        assert (out / "report.txt").exists()
        assert result.manifest["eval_posts"] == 60
        rows = [json.loads(l) for l in (out / "report.jsonl").read_text().splitlines()]
        overall = [r for r in rows if r["scope"] == "overall"]
        assert {r["postprocessed"] for r in overall} == {True, False}

    def test_unknown_event_refused(self, corpus_path, tmp_path):
        cfg = small_experiment(
            corpus_path, str(tmp_path / "run"),
            selection=SelectionConfig(kind="select_event", event_id="atlantis_floods_0000"),
        )
        with pytest.raises(RunnerError, match="absent from dataset"):
            run(cfg)

    def test_unknown_disaster_type_refused(self, corpus_path, tmp_path):
        cfg = small_experiment(
            corpus_path, str(tmp_path / "run"),
            selection=SelectionConfig(kind="disaster_type", disaster_type="other"),
        )
        with pytest.raises(RunnerError, match="absent from dataset"):
            run(cfg)

    def test_dry_run_writes_prompts_only(self, corpus_path, tmp_path):
        out = tmp_path / "dry"

        def exploding_transport(request, cfg):
            raise AssertionError("dry run must not call the transport")

        run(small_experiment(corpus_path, str(out)), transport=exploding_transport, dry_run=True)
        cell = out / "cells" / "basic-0shot"
        assert (cell / "prompts.jsonl").exists()
        assert not (cell / "responses.jsonl").exists()
        assert not (out / "report.txt").exists()
        prompts = [json.loads(l) for l in (cell / "prompts.jsonl").read_text().splitlines()]
        assert len(prompts) == 60
        assert all("prompt" in row and "post_id" in row for row in prompts)

    def test_manifest_mismatch_refused(self, corpus_path, tmp_path):
        out = tmp_path / "run"
        run(small_experiment(corpus_path, str(out)))
        with pytest.raises(RunnerError, match="different experiment config"):
            run(small_experiment(corpus_path, str(out), seed=1))

    def test_resume_same_config_allowed(self, corpus_path, tmp_path):
        out = tmp_path / "run"
        first = run(small_experiment(corpus_path, str(out)))
        second = run(small_experiment(corpus_path, str(out)))
        assert first.manifest == second.manifest

    def test_byte_identical_reports_across_directories(self, corpus_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cache = tmp_path / "shared-cache"
        cfg_a = small_experiment(corpus_path, str(out_a), cache_dir=str(cache))
        cfg_b = small_experiment(corpus_path, str(out_b), cache_dir=str(cache))
        run(cfg_a)

        def exploding_transport(request, cfg):
            raise AssertionError("second run must be served from the cache")

        run(cfg_b, transport=exploding_transport)
        for name in ("report.txt", "report.jsonl"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        for cell_file in ("responses.jsonl", "predictions.jsonl", "filtered.jsonl", "eval.json"):
            assert (out_a / "cells" / "basic-0shot" / cell_file).read_bytes() == (
                out_b / "cells" / "basic-0shot" / cell_file
            ).read_bytes()

    def test_impact_task_reports_two_layers(self, corpus_path, tmp_path):
        cfg = small_experiment(
            corpus_path, str(tmp_path / "run"), task="impact_and_impacted"
        )
        result = run(cfg)
        layers = {r["layer"] for r in result.rows}
        assert layers == {"impacts", "impacted_locations"}
        report = (tmp_path / "run" / "report.txt").read_text()
        assert "Imp-P" in report and "Loc-F1" in report

    def test_report_blanks_missing_metric_group(self, corpus_path, tmp_path):
        result = run(small_experiment(corpus_path, str(tmp_path / "run")))
        report = (tmp_path / "run" / "report.txt").read_text()
        data_lines = [
            l for l in report.splitlines() if l.startswith(("replica", "kaikoura"))
        ]
        assert data_lines, report
        # all_locations runs carry no impact metrics: the Imp columns show "-".
        assert all(" -  " in l or "\t-" in l or " - " in l for l in data_lines)
        assert any("+pp" in l for l in data_lines)
        rendered = render_report(result.manifest, list(result.rows))
        assert rendered == report


class TestCli:
    def test_stats(self, corpus_path, capsys):
        assert cli.main(["stats", "--dataset", corpus_path]) == 0
        out = capsys.readouterr().out
        assert "1461" in out and "3359" in out and "1831" in out and "2649" in out

    def test_prompt_preview(self, capsys):
        code = cli.main([
            "prompt-preview", "--task", "all_locations", "--family", "persona",
            "--shots", "0", "--text", "Fires in Mati today.",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "Act as an NER" in out
        assert "Tweet: Fires in Mati today." in out

    def test_parse_debug(self, capsys):
        code = cli.main([
            "parse-debug", "--task", "all_locations",
            "--response", "Locations mentioned: Mati (2), Atlantis (1)",
        ])
        assert code == 0
        assert "Mati" in capsys.readouterr().out

    def test_filter_debug(self, capsys):
        code = cli.main([
            "filter-debug", "--task", "all_locations",
            "--text", "Mati burned. Mati still burns.",
            "--response", "Locations mentioned: Mati (5), Atlantis (1)",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "Mati" in out and "Atlantis" in out

    def test_split_and_kappa(self, corpus_path, tmp_path, capsys):
        out_train = tmp_path / "train.jsonl"
        out_test = tmp_path / "test.jsonl"
        code = cli.main([
            "split", "--dataset", corpus_path, "--train-frac", "0.68",
            "--test-frac", "0.20", "--seed", "0",
            "--out-train", str(out_train), "--out-test", str(out_test),
        ])
        assert code == 0
        assert out_train.exists() and out_test.exists()
        code = cli.main([
            "kappa", "--annotator-a", corpus_path, "--annotator-b", corpus_path,
            "--layer", "impact",
        ])
        assert code == 0
        assert "1.0" in capsys.readouterr().out

    def test_run_and_report(self, corpus_path, tmp_path, capsys):
        cfg_path = write_config(tmp_path, corpus_path, out=str(tmp_path / "run"))
        body = cfg_path.read_text().replace("- [persona, 6]\n", "")
        body = body.replace("kind: random_split", "kind: select_event\n  event_id: kaikoura_earthquake_2016")
        body = "\n".join(
            l for l in body.splitlines()
            if not l.strip().startswith(("train_frac", "test_frac", "evaluate"))
        )
        cfg_path.write_text(body, encoding="utf-8")
        assert cli.main(["run", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "run" / "report.txt").exists()
        capsys.readouterr()
        assert cli.main(["report", "--run-dir", str(tmp_path / "run")]) == 0
        assert "Imp-P" in capsys.readouterr().out

    def test_error_exit_code(self, tmp_path, capsys):
        assert cli.main(["stats", "--dataset", str(tmp_path / "missing.jsonl")]) == 1
        assert "error:" in capsys.readouterr().err
