"""Offline trainable base: a whitespace-token vocabulary and a tiny causal LM.

Production runs point ``TrainRecipe.base_model_id`` at a served checkpoint;
this registry provides a deterministic, dependency-light stand-in so the
full export → train → adapter pipeline runs anywhere, including CPU-only
CI. The model is a standard pre-norm transformer whose attention and MLP
projections carry the conventional names (``q_proj``, ``k_proj``,
``v_proj``, ``o_proj``, ``up_proj``, ``down_proj``), so adapter targeting
works identically against real checkpoints.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import FinetuneError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
SPECIALS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)

_TOKEN_RE = re.compile(r"\S+|\n")


class WordTokenizer:
    """Deterministic whitespace tokenizer with a corpus-built vocabulary.

    Newlines are kept as their own token because the output format is
    line-structured; other whitespace is reconstructed as single spaces.
    """

    def __init__(self, vocab: tuple[str, ...]):
        if tuple(vocab[: len(SPECIALS)]) != SPECIALS:
            raise FinetuneError("vocabulary must start with the special tokens")
        if len(set(vocab)) != len(vocab):
            raise FinetuneError("vocabulary contains duplicate tokens")
        self.vocab = tuple(vocab)
        self.index = {token: i for i, token in enumerate(self.vocab)}

    @classmethod
    def build(cls, texts) -> "WordTokenizer":
        tokens = sorted({t for text in texts for t in _TOKEN_RE.findall(text)})
        return cls(SPECIALS + tuple(tokens))

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.index[PAD_TOKEN]

    @property
    def bos_id(self) -> int:
        return self.index[BOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.index[EOS_TOKEN]

    def encode(self, text: str) -> list[int]:
        unk = self.index[UNK_TOKEN]
        return [self.index.get(t, unk) for t in _TOKEN_RE.findall(text)]

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            token = self.vocab[i]
            if token in (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN):
                continue
            words.append(token)
        out = []
        for k, token in enumerate(words):
            if token == "\n":
                out.append("\n")
            else:
                if k > 0 and words[k - 1] != "\n":
                    out.append(" ")
                out.append(token)
        return "".join(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"vocab": list(self.vocab)}, ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(obj["vocab"]))


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads:
            raise FinetuneError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model, bias=False)
        self.k_proj = nn.Linear(d_model, d_model, bias=False)
        self.v_proj = nn.Linear(d_model, d_model, bias=False)
        self.o_proj = nn.Linear(d_model, d_model, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape

        def heads(proj):
            return proj(x).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

        out = F.scaled_dot_product_attention(
            heads(self.q_proj), heads(self.k_proj), heads(self.v_proj), is_causal=True
        )
        return self.o_proj(out.transpose(1, 2).reshape(b, t, d))


class MLP(nn.Module):
    def __init__(self, d_model: int, d_hidden: int):
        super().__init__()
        self.up_proj = nn.Linear(d_model, d_hidden, bias=False)
        self.down_proj = nn.Linear(d_hidden, d_model, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.down_proj(F.gelu(self.up_proj(x)))


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.attn_norm = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads)
        self.mlp_norm = nn.LayerNorm(d_model)
        self.mlp = MLP(d_model, 4 * d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.attn_norm(x))
        return x + self.mlp(self.mlp_norm(x))


class TinyCausalLM(nn.Module):
    """Pre-norm decoder-only transformer with learned positional embeddings."""

    def __init__(
        self,
        vocab_size: int,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        max_seq_len: int = 1024,
    ):
        super().__init__()
        self.max_seq_len = max_seq_len
        self.token_embed = nn.Embedding(vocab_size, d_model)
        self.pos_embed = nn.Embedding(max_seq_len, d_model)
        self.blocks = nn.ModuleList(Block(d_model, n_heads) for _ in range(n_layers))
        self.final_norm = nn.LayerNorm(d_model)
        self.lm_head = nn.Linear(d_model, vocab_size, bias=False)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        b, t = input_ids.shape
        if t > self.max_seq_len:
            raise FinetuneError(
                f"sequence length {t} exceeds the model's max_seq_len "
                f"{self.max_seq_len}"
            )
        positions = torch.arange(t, device=input_ids.device)
        x = self.token_embed(input_ids) + self.pos_embed(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.final_norm(x))


# Registered offline base models: id -> architecture hyperparameters.
BASE_MODELS: dict[str, dict] = {
    "tiny-causal-v1": {"d_model": 64, "n_heads": 4, "n_layers": 2},
}


def build_base_model(
    model_id: str, vocab_size: int, max_seq_len: int, seed: int
) -> TinyCausalLM:
    """Construct a registered base model with seed-determined weights."""
    if model_id not in BASE_MODELS:
        raise FinetuneError(
            f"unknown base model id {model_id!r}; registered ids: "
            f"{sorted(BASE_MODELS)}. Register the architecture or serve the "
            "checkpoint behind an inference endpoint instead."
        )
    torch.manual_seed(seed)
    arch = BASE_MODELS[model_id]
    return TinyCausalLM(vocab_size=vocab_size, max_seq_len=max_seq_len, **arch)
