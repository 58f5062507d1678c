"""AdamW with decoupled weight decay and a linear-warmup schedule.

Updates are applied in place so tensors shared between encoder and decoder
roles keep their identity across steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfigError, ShapeMismatchError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 3e-4
    warmup_steps: int = 500
    batch_size: int = 16
    max_steps: int = 5000
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be > 0")
        if self.warmup_steps < 0:
            raise InvalidConfigError("warmup_steps must be >= 0")
        if self.batch_size < 1 or self.max_steps < 1:
            raise InvalidConfigError("batch_size and max_steps must be >= 1")


def lr_at(step: int, opt: OptimConfig) -> float:
    """Linear warmup from 0 to the base rate, then constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if opt.warmup_steps == 0 or step >= opt.warmup_steps:
        return opt.learning_rate
    return opt.learning_rate * step / opt.warmup_steps


def init_adamw_state() -> dict:
    return {"step": 0, "m": {}, "v": {}}


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    opt: OptimConfig,
    lr: float | None = None,
) -> None:
    """One AdamW update over the keys present in grads.

    Weight decay is decoupled: it shrinks weights directly instead of being
    folded into the gradient. Moments use beta1=0.9, beta2=0.999, eps=1e-8
    with bias correction. Pass lr to apply a schedule; default is the base
    rate.
    """
    if lr is None:
        lr = opt.learning_rate
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - BETA1 ** t
    c2 = 1.0 - BETA2 ** t
    for key, g in grads.items():
        p = params[key]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"{key}: grad shape {g.shape} != param shape {p.shape}")
        m = state["m"].setdefault(key, np.zeros_like(p))
        v = state["v"].setdefault(key, np.zeros_like(p))
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + EPS)
        if opt.weight_decay:
            update = update + opt.weight_decay * p
        p -= (lr * update).astype(p.dtype)
