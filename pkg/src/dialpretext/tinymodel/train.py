"""Loss-level forward/backward passes, gradient checking, and training loops.

Pretext batches score the [SEP]/[MASK] heads at labeled marker positions;
summarization batches run teacher-forced cross-entropy through the decoder
with cross-attention into the encoder. Both paths share the hand-written
backward passes from model.py, so a finite-difference check covers the
whole computation graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoLabelsError
from ..pretext import PretextExample
from ..vocab import VocabSpec
from .model import (
    TinyModel,
    _acc,
    decoder_backward,
    decoder_forward,
    encoder_backward,
    encoder_forward,
    head_backward,
    head_forward,
)
from .optim import OptimConfig, adamw_step, init_adamw_state, lr_at


@dataclass
class PretextBatch:
    """Padded marker-classification batch. labels are 0/1 for the sep head
    and person class indices for the mask head."""

    ids: np.ndarray
    keep: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    head: str
    task: str


@dataclass
class SummaryBatch:
    src_ids: np.ndarray
    src_keep: np.ndarray
    dec_ids: np.ndarray
    dec_keep: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray


def make_pretext_batch(
    examples: list[PretextExample], vocab: VocabSpec
) -> PretextBatch:
    tasks = {e.task for e in examples}
    if len(tasks) != 1:
        raise ValueError(f"batch must be homogeneous in task, got {sorted(tasks)}")
    task = tasks.pop()
    head = "mask" if task == "mask_interlocutor" else "sep"

    max_len = max(len(e.tokens) for e in examples)
    ids = np.full((len(examples), max_len), vocab.pad_id, dtype=np.int64)
    keep = np.zeros((len(examples), max_len), dtype=bool)
    rows, cols, labels = [], [], []
    for r, ex in enumerate(examples):
        ids[r, : len(ex.tokens)] = ex.tokens.ids
        keep[r, : len(ex.tokens)] = True
        if head == "sep":
            positions, targets = ex.sep_positions, ex.sep_labels
        else:
            positions = ex.mask_positions
            targets = [vocab.person_class(t) for t in ex.mask_targets]
        for pos, tgt in zip(positions, targets):
            rows.append(r)
            cols.append(pos)
            labels.append(tgt)
    return PretextBatch(
        ids=ids,
        keep=keep,
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        head=head,
        task=task,
    )


def _ce(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy; returns (loss, probs, accuracy)."""
    z = logits - logits.max(-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(-1, keepdims=True))
    logp = z - logsumexp
    n = labels.shape[0]
    loss = float(-logp[np.arange(n), labels].mean())
    acc = float((logits.argmax(-1) == labels).mean())
    return loss, np.exp(logp), acc


def _forward_pretext(model: TinyModel, batch: PretextBatch, train=False, rng=None):
    if batch.labels.shape[0] == 0:
        raise NoLabelsError("batch carries no labeled marker positions")
    enc_out, enc_cache = encoder_forward(model, batch.ids, batch.keep)
    marker_h = enc_out[batch.rows, batch.cols]
    logits, head_cache = head_forward(model, batch.head, marker_h, train, rng)
    loss, probs, acc = _ce(logits, batch.labels)
    return loss, acc, (enc_out, enc_cache, head_cache, probs)


def loss_pretext(model: TinyModel, batch: PretextBatch) -> float:
    """Eval-mode scalar loss over the batch's labeled marker positions."""
    return _forward_pretext(model, batch)[0]


def forward_backward_pretext(model: TinyModel, batch: PretextBatch, train=False, rng=None):
    loss, acc, (enc_out, enc_cache, head_cache, probs) = _forward_pretext(
        model, batch, train, rng
    )
    n = batch.labels.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), batch.labels] -= 1.0
    dlogits /= n
    grads: dict[str, np.ndarray] = {}
    dmarker = head_backward(model, batch.head, head_cache, dlogits, grads)
    denc = np.zeros_like(enc_out)
    np.add.at(denc, (batch.rows, batch.cols), dmarker)
    encoder_backward(model, enc_cache, denc, grads)
    return loss, acc, grads


# summarization ------------------------------------------------------------------


def make_summary_batches(
    pairs: list[tuple[list[int], list[int]]],
    pad_id: int,
    bos_id: int,
    eos_id: int,
    batch_size: int,
    order: np.ndarray | None = None,
) -> list[SummaryBatch]:
    """Teacher-forcing batches: decoder input is bos + summary, target is
    summary + eos."""
    if order is None:
        order = np.arange(len(pairs))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        src_len = max(len(src) for src, _ in chunk)
        dec_len = max(len(tgt) for _, tgt in chunk) + 1
        b = len(chunk)
        src_ids = np.full((b, src_len), pad_id, dtype=np.int64)
        src_keep = np.zeros((b, src_len), dtype=bool)
        dec_ids = np.full((b, dec_len), pad_id, dtype=np.int64)
        dec_keep = np.zeros((b, dec_len), dtype=bool)
        targets = np.full((b, dec_len), pad_id, dtype=np.int64)
        target_mask = np.zeros((b, dec_len), dtype=bool)
        for r, (src, tgt) in enumerate(chunk):
            src_ids[r, : len(src)] = src
            src_keep[r, : len(src)] = True
            dec_row = [bos_id] + list(tgt)
            dec_ids[r, : len(dec_row)] = dec_row
            dec_keep[r, : len(dec_row)] = True
            tgt_row = list(tgt) + [eos_id]
            targets[r, : len(tgt_row)] = tgt_row
            target_mask[r, : len(tgt_row)] = True
        batches.append(
            SummaryBatch(src_ids, src_keep, dec_ids, dec_keep, targets, target_mask)
        )
    return batches


def _forward_summarize(model: TinyModel, batch: SummaryBatch, train=False, rng=None):
    enc_out, enc_cache = encoder_forward(model, batch.src_ids, batch.src_keep)
    dec_out, dec_cache = decoder_forward(
        model, batch.dec_ids, enc_out, batch.src_keep, batch.dec_keep
    )
    logits, head_cache = head_forward(model, "lm", dec_out, train, rng)
    flat_mask = batch.target_mask.reshape(-1)
    flat_logits = logits.reshape(-1, logits.shape[-1])[flat_mask]
    flat_targets = batch.targets.reshape(-1)[flat_mask]
    loss, probs, acc = _ce(flat_logits, flat_targets)
    return loss, acc, (enc_out, enc_cache, dec_cache, head_cache, probs, logits.shape)


def forward_backward_summarize(model: TinyModel, batch: SummaryBatch, train=False, rng=None):
    loss, acc, (enc_out, enc_cache, dec_cache, head_cache, probs, logit_shape) = (
        _forward_summarize(model, batch, train, rng)
    )
    flat_mask = batch.target_mask.reshape(-1)
    n = probs.shape[0]
    dflat = probs.copy()
    dflat[np.arange(n), batch.targets.reshape(-1)[flat_mask]] -= 1.0
    dflat /= n
    dlogits = np.zeros((flat_mask.shape[0], logit_shape[-1]), dtype=dflat.dtype)
    dlogits[flat_mask] = dflat
    dlogits = dlogits.reshape(logit_shape)
    grads: dict[str, np.ndarray] = {}
    ddec_out = head_backward(model, "lm", head_cache, dlogits, grads)
    d_enc_out = decoder_backward(model, dec_cache, ddec_out, grads)
    encoder_backward(model, enc_cache, d_enc_out, grads)
    return loss, acc, grads


# gradient checking -----------------------------------------------------------------


def grad_check(
    model: TinyModel,
    batch,
    epsilon: float = 1e-4,
    n_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a float64 copy with dropout off, over n_coords randomly sampled
    parameter coordinates. The error measure is
    |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
    """
    m64 = model.astype("float64")
    if isinstance(batch, PretextBatch):
        fwd = lambda: _forward_pretext(m64, batch)[0]
        _, _, grads = forward_backward_pretext(m64, batch)
    else:
        fwd = lambda: _forward_summarize(m64, batch)[0]
        _, _, grads = forward_backward_summarize(m64, batch)

    keys = sorted(m64.params)
    sizes = np.array([m64.params[k].size for k in keys])
    bounds = np.cumsum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, bounds[-1], size=n_coords)

    worst = 0.0
    for flat in picks:
        ki = int(np.searchsorted(bounds, flat, side="right"))
        key = keys[ki]
        idx = int(flat - (bounds[ki - 1] if ki else 0))
        p = m64.params[key]
        orig = p.flat[idx]
        p.flat[idx] = orig + epsilon
        f_plus = fwd()
        p.flat[idx] = orig - epsilon
        f_minus = fwd()
        p.flat[idx] = orig
        g_num = (f_plus - f_minus) / (2 * epsilon)
        g_ana = float(grads[key].flat[idx]) if key in grads else 0.0
        rel = abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-8)
        worst = max(worst, rel)
    return worst


# training loops -----------------------------------------------------------------------


def _trainable_examples(examples):
    kept = [
        e
        for e in examples
        if (e.sep_labels if e.task != "mask_interlocutor" else e.mask_targets)
    ]
    return kept


def evaluate_pretext(
    model: TinyModel, examples: list[PretextExample], vocab: VocabSpec, batch_size: int = 64
) -> tuple[float, float]:
    """Marker-weighted eval-mode (loss, accuracy) over a dataset."""
    examples = _trainable_examples(examples)
    total_loss = total_correct = total = 0
    for start in range(0, len(examples), batch_size):
        batch = make_pretext_batch(examples[start : start + batch_size], vocab)
        loss, acc, _ = _forward_pretext(model, batch)
        n = batch.labels.shape[0]
        total_loss += loss * n
        total_correct += acc * n
        total += n
    if total == 0:
        raise NoLabelsError("no labeled markers in eval set")
    return total_loss / total, total_correct / total


def _converged(smoothed: list[float], window: int, eps: float) -> bool:
    if len(smoothed) <= window:
        return False
    return smoothed[-window - 1] - smoothed[-1] < eps


def train_pretext(
    model: TinyModel,
    examples: list[PretextExample],
    vocab: VocabSpec,
    opt: OptimConfig,
    eval_examples: list[PretextExample] | None = None,
    eval_every: int = 50,
    stop_at_acc: float | None = None,
    converge_window: int = 200,
    converge_eps: float = 1e-4,
) -> list[dict]:
    """Mini-batch AdamW training of the marker-classification objective.

    Stops at opt.max_steps or when the smoothed train loss improves by less
    than converge_eps over converge_window steps. The trace records
    step/loss/acc/lr at every eval interval; accuracy is measured on
    eval_examples when given, else on the current train batch. Fully
    deterministic in (model, examples, opt.seed).
    """
    examples = _trainable_examples(examples)
    if not examples:
        raise NoLabelsError("no trainable examples (every example lacks markers)")
    rng = np.random.default_rng(opt.seed)
    state = init_adamw_state()
    trace: list[dict] = []
    losses: list[float] = []
    smoothed: list[float] = []

    step = 0
    done = False
    while not done:
        order = rng.permutation(len(examples))
        for start in range(0, len(order), opt.batch_size):
            step += 1
            chunk = [examples[i] for i in order[start : start + opt.batch_size]]
            batch = make_pretext_batch(chunk, vocab)
            loss, acc, grads = forward_backward_pretext(model, batch, train=True, rng=rng)
            lr = lr_at(step, opt)
            adamw_step(model.params, grads, state, opt, lr=lr)
            losses.append(loss)
            smoothed.append(float(np.mean(losses[-100:])))

            should_log = step % eval_every == 0
            converged = _converged(smoothed, converge_window, converge_eps)
            hit_cap = step >= opt.max_steps
            if should_log or converged or hit_cap:
                if eval_examples is not None:
                    eval_loss, eval_acc = evaluate_pretext(
                        model, eval_examples, vocab, batch_size=opt.batch_size
                    )
                    record = {"step": step, "loss": eval_loss, "acc": eval_acc, "lr": lr}
                else:
                    record = {"step": step, "loss": loss, "acc": acc, "lr": lr}
                trace.append(record)
                if stop_at_acc is not None and record["acc"] >= stop_at_acc:
                    done = True
                    break
            if converged or hit_cap:
                done = True
                break
    return trace


def finetune_summarize(
    model: TinyModel,
    pairs: list[tuple[list[int], list[int]]],
    opt: OptimConfig,
    bos_id: int,
    eos_id: int,
    pad_id: int,
    eval_every: int = 50,
    converge_window: int = 200,
    converge_eps: float = 1e-4,
) -> list[dict]:
    """Teacher-forced sequence-to-sequence training over (source, summary)
    token pairs. The trace's accuracy is next-token accuracy on the train
    batch; exact-match evaluation belongs to the caller via greedy_decode.
    """
    if not pairs:
        raise NoLabelsError("no training pairs")
    rng = np.random.default_rng(opt.seed)
    state = init_adamw_state()
    trace: list[dict] = []
    losses: list[float] = []
    smoothed: list[float] = []

    step = 0
    done = False
    while not done:
        order = rng.permutation(len(pairs))
        batches = make_summary_batches(
            pairs, pad_id, bos_id, eos_id, opt.batch_size, order=order
        )
        for batch in batches:
            step += 1
            loss, acc, grads = forward_backward_summarize(model, batch, train=True, rng=rng)
            lr = lr_at(step, opt)
            adamw_step(model.params, grads, state, opt, lr=lr)
            losses.append(loss)
            smoothed.append(float(np.mean(losses[-100:])))
            if step % eval_every == 0 or step >= opt.max_steps:
                trace.append({"step": step, "loss": loss, "acc": acc, "lr": lr})
            if _converged(smoothed, converge_window, converge_eps) or step >= opt.max_steps:
                done = True
                break
    if not trace or trace[-1]["step"] != step:
        trace.append({"step": step, "loss": losses[-1], "acc": acc, "lr": lr})
    return trace
