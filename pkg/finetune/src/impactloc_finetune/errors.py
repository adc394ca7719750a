"""Error types for the finetune harness."""


class FinetuneError(RuntimeError):
    """Raised for invalid recipes, missing resources, or failed training."""


class ExportError(FinetuneError):
    """Raised when a training post cannot be serialized losslessly."""
