"""Adapter training: instruction-masked causal LM loss over exported records.

The recipe defaults are pinned — learning rate 2e-4, batch size 8, rank 16,
alpha 16, 80 steps — and every hyperparameter, pinned or overridden, is
written to the run manifest together with the record-file checksum and
seed. Loss is computed on response tokens only (instruction positions are
masked), and records are never truncated: an over-long example fails the
run with instructions for raising ``max_seq_len``.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import FinetuneError
from .lora import apply_lora, load_adapter, save_adapter, trainable_parameters
from .records import InstructionRecord, load_records, records_sha256
from .tinybase import WordTokenizer, build_base_model

IGNORE_INDEX = -100
VOCAB_FILE = "vocab.json"
MANIFEST_FILE = "manifest.json"
LOG_FILE = "train_log.jsonl"
ADAPTER_DIR = "adapter"


@dataclass(frozen=True)
class TrainRecipe:
    """Training hyperparameters. Defaults are the pinned reference recipe;
    layer targeting, dropout, context length, and seed are unpinned extras
    with explicit documented defaults."""

    learning_rate: float = 2e-4
    batch_size: int = 8
    lora_rank: int = 16
    lora_alpha: int = 16
    max_steps: int = 80
    base_model_id: str = "tiny-causal-v1"
    target_modules: tuple[str, ...] = ("q_proj", "k_proj", "v_proj", "o_proj")
    lora_dropout: float = 0.0
    max_seq_len: int = 1024
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise FinetuneError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise FinetuneError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lora_rank < 1 or self.lora_alpha < 1:
            raise FinetuneError("lora_rank and lora_alpha must be >= 1")
        if self.max_steps < 1:
            raise FinetuneError(f"max_steps must be >= 1, got {self.max_steps}")
        if not self.target_modules:
            raise FinetuneError("target_modules must name at least one module")
        if self.max_seq_len < 8:
            raise FinetuneError(f"max_seq_len must be >= 8, got {self.max_seq_len}")
        if not (0.0 <= self.lora_dropout < 1.0):
            raise FinetuneError(f"lora_dropout must lie in [0, 1), got {self.lora_dropout}")


@dataclass(frozen=True)
class TrainResult:
    out_dir: Path
    manifest: dict
    losses: tuple[float, ...]


def encode_example(
    tokenizer: WordTokenizer, record: InstructionRecord, max_seq_len: int
) -> tuple[list[int], list[int]]:
    """Token ids plus labels; instruction positions are masked out of the loss."""
    prompt_ids = [tokenizer.bos_id] + tokenizer.encode(record.instruction)
    response_ids = tokenizer.encode("\n" + record.response) + [tokenizer.eos_id]
    ids = prompt_ids + response_ids
    if len(ids) > max_seq_len:
        raise FinetuneError(
            f"record {record.post_id} encodes to {len(ids)} tokens, over "
            f"max_seq_len={max_seq_len}; raise recipe.max_seq_len — records "
            "are never truncated"
        )
    labels = [IGNORE_INDEX] * len(prompt_ids) + list(response_ids)
    return ids, labels


def _batches(n: int, batch_size: int, seed: int):
    """Deterministic epoch-reshuffled index batches, cycling the record set."""
    rng = random.Random(seed)
    order: list[int] = []
    while True:
        while len(order) < batch_size:
            fresh = list(range(n))
            rng.shuffle(fresh)
            order.extend(fresh)
        batch, order = order[:batch_size], order[batch_size:]
        yield batch


def _collate(
    examples: list[tuple[list[int], list[int]]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids, _ in examples)
    ids = torch.full((len(examples), width), pad_id, dtype=torch.long)
    labels = torch.full((len(examples), width), IGNORE_INDEX, dtype=torch.long)
    for row, (example_ids, example_labels) in enumerate(examples):
        ids[row, : len(example_ids)] = torch.tensor(example_ids, dtype=torch.long)
        labels[row, : len(example_labels)] = torch.tensor(example_labels, dtype=torch.long)
    return ids, labels


def train(
    records_path: str | Path,
    recipe: TrainRecipe,
    out_dir: str | Path,
    *,
    log=print,
) -> TrainResult:
    """Run the recipe over a record file; writes adapter, log, and manifest."""
    records_path = Path(records_path)
    records = load_records(records_path)
    if not records:
        raise FinetuneError(f"{records_path}: no records to train on")
    checksum = records_sha256(records_path)

    tokenizer = WordTokenizer.build(
        [f"{r.instruction}\n{r.response}" for r in records]
    )
    model = build_base_model(
        recipe.base_model_id,
        vocab_size=tokenizer.vocab_size,
        max_seq_len=recipe.max_seq_len,
        seed=recipe.seed,
    )
    wrapped = apply_lora(
        model,
        recipe.target_modules,
        recipe.lora_rank,
        recipe.lora_alpha,
        recipe.lora_dropout,
    )
    encoded = [encode_example(tokenizer, r, recipe.max_seq_len) for r in records]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    optimizer = torch.optim.AdamW(trainable_parameters(model), lr=recipe.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE_INDEX)
    batches = _batches(len(records), recipe.batch_size, recipe.seed)

    losses: list[float] = []
    model.train()
    try:
        with open(out / LOG_FILE, "w", encoding="utf-8") as log_handle:
            for step in range(1, recipe.max_steps + 1):
                batch = [encoded[i] for i in next(batches)]
                ids, labels = _collate(batch, tokenizer.pad_id)
                logits = model(ids)
                loss = loss_fn(
                    logits[:, :-1].reshape(-1, logits.shape[-1]),
                    labels[:, 1:].reshape(-1),
                )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())
                entry = {
                    "step": step,
                    "loss": losses[-1],
                    "lr": recipe.learning_rate,
                    "batch_tokens": int(ids.numel()),
                }
                log_handle.write(json.dumps(entry) + "\n")
                log(f"step {step}/{recipe.max_steps} loss {losses[-1]:.4f}")
    except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
        raise FinetuneError(
            "resource exhaustion during training: reduce batch_size or "
            "max_seq_len, or pick a smaller base model — data is never "
            f"truncated to fit ({exc})"
        ) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise FinetuneError(
                "resource exhaustion during training: reduce batch_size or "
                "max_seq_len, or pick a smaller base model — data is never "
                f"truncated to fit ({exc})"
            ) from exc
        raise

    tokenizer.save(out / VOCAB_FILE)
    adapter_meta = {
        "base_model_id": recipe.base_model_id,
        "lora_rank": recipe.lora_rank,
        "lora_alpha": recipe.lora_alpha,
        "lora_dropout": recipe.lora_dropout,
        "target_modules": list(recipe.target_modules),
        "wrapped_modules": list(wrapped),
        "vocab_size": tokenizer.vocab_size,
    }
    save_adapter(model, out / ADAPTER_DIR, adapter_meta)

    manifest = {
        "recipe": _recipe_dict(recipe),
        "records_file": records_path.name,
        "records_sha256": checksum,
        "n_records": len(records),
        "vocab_size": tokenizer.vocab_size,
        "wrapped_modules": list(wrapped),
        "steps_completed": recipe.max_steps,
        "final_loss": losses[-1],
        "torch_version": torch.__version__,
    }
    (out / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    return TrainResult(out_dir=out, manifest=manifest, losses=tuple(losses))


def _recipe_dict(recipe: TrainRecipe) -> dict:
    obj = asdict(recipe)
    obj["target_modules"] = list(obj["target_modules"])
    return obj


def load_trained_adapter(out_dir: str | Path) -> tuple[nn.Module, WordTokenizer]:
    """Rebuild the wrapped model from a training run and load its adapter."""
    out = Path(out_dir)
    manifest_path = out / MANIFEST_FILE
    if not manifest_path.exists():
        raise FinetuneError(f"no training manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    recipe_obj = dict(manifest["recipe"])
    recipe_obj["target_modules"] = tuple(recipe_obj["target_modules"])
    recipe = TrainRecipe(**recipe_obj)
    tokenizer = WordTokenizer.load(out / VOCAB_FILE)
    model = build_base_model(
        recipe.base_model_id,
        vocab_size=tokenizer.vocab_size,
        max_seq_len=recipe.max_seq_len,
        seed=recipe.seed,
    )
    apply_lora(
        model,
        recipe.target_modules,
        recipe.lora_rank,
        recipe.lora_alpha,
        recipe.lora_dropout,
    )
    load_adapter(model, out / ADAPTER_DIR)
    model.eval()
    return model, tokenizer
