"""Low-rank adaptation of frozen linear layers.

``apply_lora`` freezes every parameter of the wrapped model, then replaces
each targeted ``nn.Linear`` with a ``LoRALinear`` that adds a trainable
rank-``r`` update ``B @ A`` scaled by ``alpha / r``. ``B`` starts at zero,
so a freshly wrapped model computes exactly what the base model computed.
Only the ``lora_A``/``lora_B`` matrices are saved and loaded; the base
weights are reconstructed from the model registry.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import FinetuneError

ADAPTER_WEIGHTS = "adapter.pt"
ADAPTER_META = "adapter.json"
ADAPTER_FORMAT = "lora-v1"


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank residual."""

    def __init__(self, base: nn.Linear, rank: int, alpha: int, dropout: float):
        super().__init__()
        if rank < 1:
            raise FinetuneError(f"lora rank must be >= 1, got {rank}")
        self.base = base
        for param in self.base.parameters():
            param.requires_grad_(False)
        self.lora_A = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_B = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_A, a=math.sqrt(5))
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = F.linear(F.linear(self.dropout(x), self.lora_A), self.lora_B)
        return self.base(x) + update * self.scaling


def apply_lora(
    model: nn.Module,
    target_modules: tuple[str, ...],
    rank: int,
    alpha: int,
    dropout: float = 0.0,
) -> tuple[str, ...]:
    """Freeze the model and wrap every targeted linear; returns wrapped names.

    ``target_modules`` are matched against the final component of each
    module's dotted name (e.g. ``"q_proj"`` matches ``blocks.0.attn.q_proj``).
    """
    for param in model.parameters():
        param.requires_grad_(False)
    targets = set(target_modules)
    wrapped = []
    for name, module in list(model.named_modules()):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in targets and isinstance(module, nn.Linear):
            parent = model.get_submodule(name.rsplit(".", 1)[0]) if "." in name else model
            setattr(parent, leaf, LoRALinear(module, rank, alpha, dropout))
            wrapped.append(name)
    if not wrapped:
        raise FinetuneError(
            f"no modules matched target_modules {sorted(targets)}; "
            "check the names against model.named_modules()"
        )
    return tuple(wrapped)


def trainable_parameters(model: nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    """Only the low-rank matrices, keyed by their qualified parameter names."""
    return {
        name: param.detach().clone()
        for name, param in model.named_parameters()
        if "lora_" in name
    }


def save_adapter(model: nn.Module, out_dir: str | Path, meta: dict) -> Path:
    """Write adapter weights and metadata; returns the adapter directory."""
    state = adapter_state_dict(model)
    if not state:
        raise FinetuneError("model carries no adapter parameters to save")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(state, out / ADAPTER_WEIGHTS)
    payload = {"format": ADAPTER_FORMAT, "parameters": sorted(state), **meta}
    (out / ADAPTER_META).write_text(
        json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
    )
    return out


def load_adapter(model: nn.Module, adapter_dir: str | Path) -> None:
    """Copy saved low-rank matrices into an already-wrapped model, strictly."""
    path = Path(adapter_dir) / ADAPTER_WEIGHTS
    if not path.exists():
        raise FinetuneError(f"no adapter weights at {path}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    own = {name: p for name, p in model.named_parameters() if "lora_" in name}
    if set(state) != set(own):
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        raise FinetuneError(
            f"adapter does not fit this model (missing {missing}, "
            f"unexpected {unexpected})"
        )
    with torch.no_grad():
        for name, tensor in state.items():
            if own[name].shape != tensor.shape:
                raise FinetuneError(
                    f"adapter parameter {name} has shape {tuple(tensor.shape)}, "
                    f"model expects {tuple(own[name].shape)}"
                )
            own[name].copy_(tensor)
