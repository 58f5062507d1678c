"""ROUGE-1/2/L scoring, corpus aggregation, and a cosine-similarity harness
over externally computed sentence embeddings.

Scoring uses the plainest deterministic setting: lowercase, split on
non-alphanumeric runs, no stemming, no stopword removal. ROUGE-L is
summary-level (one LCS over the whole token sequences).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .errors import DimensionMismatchError, EmptyPairsError, MissingIdError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def rouge_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(precision=p, recall=r, f1=f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """N-gram overlap score with clipped multiset counts."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(rouge_tokenize(candidate), n)
    ref = _ngrams(rouge_tokenize(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _score(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence score over the full token sequences."""
    cand = rouge_tokenize(candidate)
    ref = rouge_tokenize(reference)
    return _score(_lcs_len(cand, ref), len(cand), len(ref))


@dataclass(frozen=True)
class EvalReport:
    r1: float
    r2: float
    rl: float
    r_avg: float
    cos: float | None
    n_pairs: int

    def to_record(self) -> dict:
        rec = {
            "r1": self.r1,
            "r2": self.r2,
            "rl": self.rl,
            "r_avg": self.r_avg,
            "n_pairs": self.n_pairs,
        }
        if self.cos is not None:
            rec["cos"] = self.cos
        return rec


def rouge_report(pairs: Sequence[tuple[str, str]]) -> EvalReport:
    """Mean per-pair f1 for ROUGE-1/2/L plus their arithmetic mean.

    Values stay unrounded here; the x100 two-decimal formatting belongs to
    the presentation layer (format_report_table).
    """
    if not pairs:
        raise EmptyPairsError("rouge_report needs at least one (candidate, reference) pair")
    r1 = r2 = rl = 0.0
    for cand, ref in pairs:
        r1 += rouge_n(cand, ref, 1).f1
        r2 += rouge_n(cand, ref, 2).f1
        rl += rouge_l(cand, ref).f1
    n = len(pairs)
    r1, r2, rl = r1 / n, r2 / n, rl / n
    return EvalReport(r1=r1, r2=r2, rl=rl, r_avg=(r1 + r2 + rl) / 3, cos=None, n_pairs=n)


def format_report_table(report: EvalReport) -> str:
    """Aligned text table with x100 scores rounded to two decimals."""
    headers = ["R-1", "R-2", "R-L", "R-AVG"]
    values = [report.r1, report.r2, report.rl, report.r_avg]
    if report.cos is not None:
        headers.append("COS.")
    cells = [f"{100 * v:.2f}" for v in values]
    if report.cos is not None:
        cells.append(f"{report.cos:.4f}")
    width = max(len(h) for h in headers) + 4
    head = "".join(h.ljust(width) for h in headers)
    row = "".join(c.ljust(width) for c in cells)
    return f"{head}\n{row}"


def dialogue_token_count(dialogue) -> int:
    return len(rouge_tokenize(dialogue.as_text()))


def select_longest(corpus: Corpus, n: int = 100, by: str = "dialogue") -> list[str]:
    """Ids of the n longest dialogues (token count, ties by id ascending).

    `by` is "dialogue" (token count over all turns) or "summary".
    """
    if by == "dialogue":
        keyed = [(dialogue_token_count(d), d.id) for d in corpus]
    elif by == "summary":
        keyed = [(len(rouge_tokenize(d.summary or "")), d.id) for d in corpus]
    else:
        raise ValueError(f"unknown length measure {by!r}")
    keyed.sort(key=lambda kv: (-kv[0], kv[1]))
    return [did for _, did in keyed[:n]]


@dataclass(frozen=True)
class EmbeddingFile:
    """Precomputed sentence vectors keyed by dialogue id."""

    vectors: dict[str, np.ndarray]
    dim: int

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingFile":
        vectors: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                vec = np.asarray(record["vector"], dtype=np.float64)
                if vec.ndim != 1 or vec.size < 1:
                    raise DimensionMismatchError(f"line {line_no}: vector must be 1-d, nonempty")
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise DimensionMismatchError(
                        f"line {line_no}: dimension {vec.size} != {dim}"
                    )
                if record["id"] in vectors:
                    raise MissingIdError(f"line {line_no}: duplicate id {record['id']!r}")
                vectors[record["id"]] = vec
        if dim is None:
            raise EmptyPairsError(f"{path}: no embedding records")
        return cls(vectors=vectors, dim=dim)


def cosine_eval(pred: EmbeddingFile, ref: EmbeddingFile, ids: Iterable[str]) -> float:
    """Mean cosine similarity over the given ids; zero vectors contribute 0."""
    if pred.dim != ref.dim:
        raise DimensionMismatchError(f"prediction dim {pred.dim} != reference dim {ref.dim}")
    sims = []
    for did in ids:
        if did not in pred.vectors:
            raise MissingIdError(f"id {did!r} missing from predictions")
        if did not in ref.vectors:
            raise MissingIdError(f"id {did!r} missing from references")
        u, v = pred.vectors[did], ref.vectors[did]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        sims.append(float(u @ v / (nu * nv)) if nu > 0 and nv > 0 else 0.0)
    if not sims:
        raise EmptyPairsError("no ids to score")
    return float(np.mean(sims))
