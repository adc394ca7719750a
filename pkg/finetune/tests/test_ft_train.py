"""Training loop: pinned defaults, artifacts, masking, failure modes."""

from __future__ import annotations

import dataclasses
import json
import math

import pytest
import torch

from impactloc.corpus import Dataset

from impactloc_finetune import (
    FinetuneError,
    TrainRecipe,
    WordTokenizer,
    adapter_state_dict,
    encode_example,
    export_instruction_records,
    load_trained_adapter,
    records_sha256,
    train,
)
from impactloc_finetune.train import IGNORE_INDEX

FAST = dict(max_steps=5, batch_size=4, lora_rank=4, lora_alpha=4)


def test_recipe_defaults_are_pinned():
    recipe = TrainRecipe()
    assert (
        recipe.learning_rate,
        recipe.batch_size,
        recipe.lora_rank,
        recipe.lora_alpha,
        recipe.max_steps,
    ) == (2e-4, 8, 16, 16, 80)


@pytest.mark.parametrize(
    "override",
    [
        {"learning_rate": 0.0},
        {"batch_size": 0},
        {"lora_rank": 0},
        {"max_steps": 0},
        {"target_modules": ()},
        {"lora_dropout": 1.0},
        {"max_seq_len": 4},
    ],
)
def test_recipe_validation(override):
    with pytest.raises(FinetuneError):
        TrainRecipe(**override)


def test_smoke_train_artifacts(smoke_records_path, tmp_path):
    out = tmp_path / "run"
    printed = []
    result = train(smoke_records_path, TrainRecipe(**FAST), out, log=printed.append)

    assert len(result.losses) == 5 and all(math.isfinite(x) for x in result.losses)
    assert len(printed) == 5 and printed[0].startswith("step 1/5 loss ")

    log_lines = [
        json.loads(line)
        for line in (out / "train_log.jsonl").read_text().splitlines()
    ]
    assert [entry["step"] for entry in log_lines] == [1, 2, 3, 4, 5]
    assert all(math.isfinite(entry["loss"]) for entry in log_lines)

    assert (out / "adapter" / "adapter.pt").exists()
    assert (out / "adapter" / "adapter.json").exists()
    assert (out / "vocab.json").exists()

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["recipe"] == {
        **dataclasses.asdict(TrainRecipe(**FAST)),
        "target_modules": list(TrainRecipe().target_modules),
    }
    assert manifest["records_sha256"] == records_sha256(smoke_records_path)
    assert manifest["n_records"] == 20
    assert manifest["steps_completed"] == 5


def test_rerun_reproduces_record_checksum(ft_train_split, tmp_path):
    small = Dataset("smoke20", ft_train_split.posts[:20])
    first, second = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
    export_instruction_records(small, first)
    export_instruction_records(small, second)
    a = train(first, TrainRecipe(**FAST), tmp_path / "run1", log=lambda s: None)
    b = train(second, TrainRecipe(**FAST), tmp_path / "run2", log=lambda s: None)
    assert a.manifest["records_sha256"] == b.manifest["records_sha256"]


def test_trained_adapter_is_loadable(smoke_records_path, tmp_path):
    out = tmp_path / "run"
    train(smoke_records_path, TrainRecipe(**FAST), out, log=lambda s: None)
    model, tokenizer = load_trained_adapter(out)

    state = adapter_state_dict(model)
    saved = torch.load(out / "adapter" / "adapter.pt", weights_only=True)
    assert set(state) == set(saved)
    assert all(torch.equal(state[k], saved[k]) for k in state)
    # Optimizer steps moved B off its zero init, so the adapter changes outputs.
    assert any(v.abs().sum() > 0 for k, v in state.items() if "lora_B" in k)

    ids = torch.tensor([tokenizer.encode("Types of Impact: flooded")])
    with torch.no_grad():
        logits = model(ids)
    assert logits.shape == (1, ids.shape[1], tokenizer.vocab_size)


def test_loss_trends_down(smoke_records_path, tmp_path):
    result = train(
        smoke_records_path,
        TrainRecipe(max_steps=40, batch_size=4, lora_rank=4, lora_alpha=4),
        tmp_path / "run",
        log=lambda s: None,
    )
    assert result.losses[-1] < result.losses[0]


def test_instruction_positions_are_masked():
    tokenizer = WordTokenizer.build(["list the impacts now", "flooded Mati"])
    record_type = __import__("impactloc_finetune").InstructionRecord
    record = record_type("p1", "list the impacts now", "flooded Mati")
    ids, labels = encode_example(tokenizer, record, max_seq_len=64)
    assert len(ids) == len(labels)
    prompt_len = 1 + 4  # BOS + four instruction words
    assert labels[:prompt_len] == [IGNORE_INDEX] * prompt_len
    assert labels[prompt_len:] == ids[prompt_len:]
    assert ids[-1] == tokenizer.eos_id


def test_overlong_record_fails_loudly(smoke_records_path, tmp_path):
    recipe = TrainRecipe(max_steps=1, max_seq_len=16)
    with pytest.raises(FinetuneError, match="max_seq_len"):
        train(smoke_records_path, recipe, tmp_path / "run", log=lambda s: None)


def test_empty_record_file_fails(tmp_path):
    empty = tmp_path / "none.jsonl"
    empty.write_text("")
    with pytest.raises(FinetuneError, match="no records"):
        train(empty, TrainRecipe(**FAST), tmp_path / "run", log=lambda s: None)
