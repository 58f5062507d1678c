from .model import (
    ModelConfig,
    TinyModel,
    classify_markers,
    encode,
    greedy_decode,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .optim import OptimConfig, adamw_step, init_adamw_state, lr_at
from .train import (
    PretextBatch,
    SummaryBatch,
    finetune_summarize,
    grad_check,
    loss_pretext,
    make_pretext_batch,
    make_summary_batches,
    train_pretext,
)

__all__ = [
    "ModelConfig",
    "TinyModel",
    "OptimConfig",
    "PretextBatch",
    "SummaryBatch",
    "adamw_step",
    "classify_markers",
    "encode",
    "finetune_summarize",
    "grad_check",
    "greedy_decode",
    "init_adamw_state",
    "init_model",
    "load_checkpoint",
    "loss_pretext",
    "lr_at",
    "make_pretext_batch",
    "make_summary_batches",
    "save_checkpoint",
    "train_pretext",
]
