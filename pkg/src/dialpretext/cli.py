"""Batch command-line front end.

Subcommands: stats, build-vocab, corrupt, eval-rouge, eval-cossim,
train-toy, ablation-grid. Every run is reproducible from its --seed and the
effective_config record written beside the outputs; all file writes are
atomic (temp + rename), so an invalid invocation never leaves partial
output behind. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import tinymodel as tm
from .corpus import Corpus, corpus_stats, load_corpus, write_examples
from .errors import DialpretextError, MissingIdError
from .evalmetrics import (
    EmbeddingFile,
    cosine_eval,
    format_report_table,
    rouge_report,
    select_longest,
)
from .pretext import TASKS, PretextConfig, generate_dataset
from .vocab import VocabSpec, build_emoji_vocab, canonicalize_names, tokenize


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def _write_config(beside: Path, subcommand: str, args: argparse.Namespace) -> None:
    record = {"subcommand": subcommand}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        record[key] = str(value) if isinstance(value, Path) else value
    beside = Path(beside)
    target = beside / "effective_config.json" if beside.is_dir() else (
        beside.parent / (beside.name + ".config.json")
    )
    _write_atomic(target, _dump(record) + "\n")


def _load_summaries(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out[record["id"]] = record["summary"]
    return out


# subcommands -------------------------------------------------------------------


def cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    vocab = VocabSpec.from_file(args.vocab)
    base = corpus_stats(corpus, vocab)
    emoji = build_emoji_vocab(corpus, budget=args.emoji_budget)
    extended = corpus_stats(corpus, vocab.extend_emoji(emoji))

    def show(tag, report):
        print(
            f"{tag}: dialogues={report.n_dialogues} utterances={report.n_utterances} "
            f"interlocutors={report.n_interlocutors} "
            f"oov={report.n_oov_utterances} ({100 * report.oov_fraction:.1f}%)"
        )

    show("base vocab", base)
    show("with emoji", extended)
    if args.out:
        lines = [
            _dump({"vocab": "base", **base.to_record()}),
            _dump({"vocab": "with_emoji", **extended.to_record()}),
        ]
        _write_atomic(Path(args.out), "\n".join(lines) + "\n")
        _write_config(Path(args.out), "stats", args)
    return 0


def cmd_build_vocab(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    vocab = VocabSpec.from_file(args.vocab)
    emoji = build_emoji_vocab(corpus, budget=args.budget)
    extended = vocab.extend_emoji(emoji)
    _write_atomic(Path(args.out), "\n".join(extended.tokens) + "\n")
    _write_config(Path(args.out), "build-vocab", args)
    print(f"vocab {vocab.size} -> {extended.size} tokens ({len(emoji)} emoji candidates)")
    return 0


_TASK_FLAGS = {
    "switch_utterance": {"pu", "pn", "mask_names", "include_summary"},
    "switch_interlocutor": {"pi", "include_summary"},
    "insert_utterance": {"k", "gap_prob", "include_summary"},
    "mask_interlocutor": set(),
}


def _corrupt_config(args) -> PretextConfig:
    provided = {
        name
        for name in ("pu", "pn", "pi", "k", "gap_prob", "include_summary", "mask_names")
        if getattr(args, name) is not None
    }
    stray = provided - _TASK_FLAGS[args.task]
    if stray:
        flags = ", ".join("--" + s.replace("_", "-") for s in sorted(stray))
        raise UsageError(f"{flags} not applicable to task {args.task}")
    for name in ("pu", "pn", "pi", "gap_prob"):
        value = getattr(args, name)
        if value is not None and not 0.0 <= value <= 1.0:
            raise UsageError(f"--{name.replace('_', '-')} must be in [0,1], got {value}")
    if args.k is not None and args.k < 0:
        raise UsageError("--k must be >= 0")
    return PretextConfig(
        task=args.task,
        switch_prob=args.pu or 0.0,
        name_mask_prob=args.pn or 0.0,
        speaker_swap_prob=args.pi or 0.0,
        insert_count=args.k if args.k is not None else 1,
        gap_insert_prob=args.gap_prob,
        include_summary=bool(args.include_summary),
        mask_names=bool(args.mask_names) or args.pn is not None,
        max_len=args.max_len,
        seed=args.seed,
    )


def cmd_corrupt(args) -> int:
    cfg = _corrupt_config(args)
    corpus = load_corpus(args.corpus, format=args.format)
    vocab = VocabSpec.from_file(args.vocab)
    dataset = generate_dataset(corpus, cfg, vocab, workers=args.workers)
    write_examples(dataset.examples, args.out)
    _write_config(Path(args.out), "corrupt", args)
    skips = " ".join(f"{k}={v}" for k, v in sorted(dataset.skipped.items())) or "none"
    print(f"wrote {len(dataset.examples)} examples to {args.out} (skipped: {skips})")
    return 0


def cmd_eval_rouge(args) -> int:
    preds = _load_summaries(Path(args.pred))
    refs = _load_summaries(Path(args.ref))
    missing = sorted(set(refs) ^ set(preds))
    if missing:
        raise MissingIdError(f"ids not aligned between files: {missing[:5]}")
    pairs = [(preds[did], refs[did]) for did in sorted(refs)]
    report = rouge_report(pairs)
    print(format_report_table(report))
    if args.out:
        _write_atomic(Path(args.out), _dump(report.to_record()) + "\n")
        _write_config(Path(args.out), "eval-rouge", args)
    return 0


def cmd_eval_cossim(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format, split="test")
    ids = select_longest(corpus, n=args.n, by=args.longest_by)
    pred = EmbeddingFile.load(args.pred)
    ref = EmbeddingFile.load(args.ref)
    score = cosine_eval(pred, ref, ids)
    print(f"mean cosine over {len(ids)} longest samples: {score:.4f}")
    if args.out:
        _write_atomic(Path(args.out), _dump({"cos": score, "n": len(ids), "ids": ids}) + "\n")
        _write_config(Path(args.out), "eval-cossim", args)
    return 0


def _model_config(args, vocab: VocabSpec) -> tm.ModelConfig:
    return tm.ModelConfig(
        vocab_size=vocab.size,
        n_persons=max(vocab.person_count, 1),
        d_model=args.d_model,
        n_heads=args.n_heads,
        n_layers=args.n_layers,
        d_ff=args.d_ff,
        max_len=args.max_len,
        dropout=args.dropout,
        share_weights=not args.no_share_weights,
    )


def _optim_config(args) -> tm.OptimConfig:
    return tm.OptimConfig(
        learning_rate=args.lr,
        warmup_steps=args.warmup,
        batch_size=args.batch_size,
        max_steps=args.steps,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )


def _split_examples(items: list, eval_frac: float, seed: int):
    if eval_frac <= 0:
        return items, None
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    n_eval = max(1, int(round(eval_frac * len(items))))
    eval_idx = set(int(i) for i in order[:n_eval])
    train = [x for i, x in enumerate(items) if i not in eval_idx]
    held = [x for i, x in enumerate(items) if i in eval_idx]
    return train, held


def _summary_pairs(corpus: Corpus, vocab: VocabSpec, max_len: int, summary_len: int):
    pairs = []
    for d in corpus:
        if not d.summary:
            continue
        canon, _ = canonicalize_names(d)
        src = [vocab.cls_id]
        for turn in canon.turns:
            src += list(tokenize(turn.speaker, vocab).ids)
            src += list(tokenize(turn.text, vocab).ids)
            src.append(vocab.sep_id)
        tgt = list(tokenize(canon.summary, vocab).ids)[:summary_len]
        if len(src) > max_len or not tgt:
            continue
        pairs.append((src, tgt))
    return pairs


def cmd_train_toy(args) -> int:
    vocab = VocabSpec.from_file(args.vocab)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = tm.init_model(_model_config(args, vocab), seed=args.seed)
    opt = _optim_config(args)

    if args.mode == "pretext":
        if not args.data:
            raise UsageError("--data is required in pretext mode")
        from .corpus import read_examples

        examples = read_examples(args.data, vocab)
        train, held = _split_examples(examples, args.eval_frac, args.seed)
        trace = tm.train_pretext(model, train, vocab, opt, eval_examples=held)
    else:
        if not args.corpus:
            raise UsageError("--corpus is required in summarize mode")
        corpus = load_corpus(args.corpus, format=args.format)
        pairs = _summary_pairs(corpus, vocab, args.max_len, args.summary_len)
        trace = tm.finetune_summarize(
            model, pairs, opt, bos_id=vocab.cls_id, eos_id=vocab.sep_id, pad_id=vocab.pad_id
        )

    _write_atomic(out_dir / "trace.jsonl", "".join(_dump(r) + "\n" for r in trace))
    tm.save_checkpoint(model, out_dir / "checkpoint.npz")
    _write_config(out_dir, "train-toy", args)
    last = trace[-1]
    print(f"finished at step {last['step']}: loss={last['loss']:.4f} acc={last['acc']:.4f}")
    return 0


def cmd_ablation_grid(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    vocab = VocabSpec.from_file(args.vocab)
    pu_list = [float(x) for x in args.pu_list.split(",") if x]
    pn_list = [float(x) for x in args.pn_list.split(",") if x]
    if not pu_list or not pn_list:
        raise UsageError("--pu-list and --pn-list must be nonempty")
    for p in pu_list + pn_list:
        if not 0.0 <= p <= 1.0:
            raise UsageError(f"grid probabilities must be in [0,1], got {p}")

    rows = []
    for ci, pu in enumerate(pu_list):
        for cj, pn in enumerate(pn_list):
            cfg = PretextConfig(
                task="switch_utterance",
                switch_prob=pu,
                name_mask_prob=pn,
                mask_names=pn > 0,
                max_len=args.max_len,
                seed=args.seed,
            )
            dataset = generate_dataset(corpus, cfg, vocab)
            train, held = _split_examples(dataset.examples, 0.2, args.seed)
            cell_seed = args.seed + ci * len(pn_list) + cj
            model = tm.init_model(_model_config(args, vocab), seed=cell_seed)
            opt = tm.OptimConfig(
                learning_rate=args.lr,
                warmup_steps=args.warmup,
                batch_size=args.batch_size,
                max_steps=args.steps,
                weight_decay=args.weight_decay,
                seed=cell_seed,
            )
            trace = tm.train_pretext(model, train, vocab, opt, eval_examples=held)
            acc = trace[-1]["acc"]
            rows.append({"pu": pu, "pn": pn, "acc": acc})
            print(f"cell pu={pu} pn={pn}: held-out acc {acc:.4f}")

    _write_atomic(Path(args.out), "".join(_dump(r) + "\n" for r in rows))
    _write_config(Path(args.out), "ablation-grid", args)
    return 0


# parser ---------------------------------------------------------------------


def _add_model_flags(p: _Parser, d_model=64, n_layers=2, d_ff=256, steps=1000):
    p.add_argument("--d-model", type=int, default=d_model)
    p.add_argument("--n-heads", type=int, default=2)
    p.add_argument("--n-layers", type=int, default=n_layers)
    p.add_argument("--d-ff", type=int, default=d_ff)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--no-share-weights", action="store_true")
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--weight-decay", type=float, default=0.01)


def build_parser() -> _Parser:
    parser = _Parser(prog="dialpretext", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("stats", help="corpus statistics with and without emoji vocab")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.add_argument("--emoji-budget", type=int, default=311)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("build-vocab", help="append most frequent emojis to a vocab file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=311)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("corrupt", help="materialize a pretext dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--out", required=True)
    p.add_argument("--pu", type=float, default=None, help="utterance switch probability")
    p.add_argument("--pn", type=float, default=None, help="speaker mask probability")
    p.add_argument("--pi", type=float, default=None, help="speaker swap probability")
    p.add_argument("--k", type=int, default=None, help="utterances to insert")
    p.add_argument("--gap-prob", type=float, default=None, help="per-gap insertion probability")
    p.add_argument("--include-summary", action="store_const", const=True, default=None)
    p.add_argument("--mask-names", action="store_const", const=True, default=None)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("eval-rouge", help="score prediction vs reference summaries")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_rouge)

    p = sub.add_parser("eval-cossim", help="mean cosine over the longest samples")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--longest-by", choices=("dialogue", "summary"), default="dialogue")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_cossim)

    p = sub.add_parser("train-toy", help="train the desk-scale model")
    p.add_argument("--mode", choices=("pretext", "summarize"), default="pretext")
    p.add_argument("--data", default=None, help="pretext examples jsonl (pretext mode)")
    p.add_argument("--corpus", default=None, help="corpus file (summarize mode)")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.add_argument("--eval-frac", type=float, default=0.0)
    p.add_argument("--summary-len", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("ablation-grid", help="switch-utterance probability grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pu-list", required=True)
    p.add_argument("--pn-list", required=True)
    p.add_argument("--format", choices=("jsonl", "plaintext-blocks"), default="jsonl")
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p, d_model=32, n_layers=1, d_ff=64, steps=150)
    p.set_defaults(func=cmd_ablation_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DialpretextError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
