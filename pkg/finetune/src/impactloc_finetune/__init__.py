"""Instruction-record export and LoRA adapter training for impactloc tasks."""

from .errors import ExportError, FinetuneError
from .lora import (
    LoRALinear,
    adapter_state_dict,
    apply_lora,
    load_adapter,
    save_adapter,
    trainable_parameters,
)
from .records import (
    InstructionRecord,
    build_records,
    default_spec,
    export_instruction_records,
    gold_response,
    load_records,
    records_sha256,
)
from .tinybase import BASE_MODELS, TinyCausalLM, WordTokenizer, build_base_model
from .train import (
    TrainRecipe,
    TrainResult,
    encode_example,
    load_trained_adapter,
    train,
)

__all__ = [
    "BASE_MODELS",
    "ExportError",
    "FinetuneError",
    "InstructionRecord",
    "LoRALinear",
    "TinyCausalLM",
    "TrainRecipe",
    "TrainResult",
    "WordTokenizer",
    "adapter_state_dict",
    "apply_lora",
    "build_base_model",
    "build_records",
    "default_spec",
    "encode_example",
    "export_instruction_records",
    "gold_response",
    "load_adapter",
    "load_records",
    "load_trained_adapter",
    "records_sha256",
    "save_adapter",
    "trainable_parameters",
    "train",
]
