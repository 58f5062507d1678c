"""Self-supervised corruption generators for dialogue corpora.

Four tasks produce model-ready labeled token sequences:

- switch_utterance: turns enter a shuffle pool with some probability and are
  permuted uniformly among the selected slots; a [SEP] after each turn is
  labeled 1 iff the turn occupying that slot changed.
- switch_interlocutor: selected turns get a different speaker from the same
  dialogue; labels mark the swapped turns.
- insert_utterance: turns from other dialogues are spliced into random gaps
  with their speaker re-written to a local interlocutor (camouflage); labels
  mark the foreign turns.
- mask_interlocutor: every person token mentioned in the reference summary is
  hidden behind [MASK]; the original ids are the prediction targets.

Every generator is a pure function of (dialogue, config, derived rng), so
datasets are reproducible regardless of processing order or parallelism.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Dialogue, Utterance
from .errors import (
    InvalidConfigError,
    KTooLargeError,
    NoDonorsError,
    NoSummaryError,
    SequenceEmptyError,
    SingleSpeakerError,
    TooManySpeakersError,
)
from .vocab import MASK, SEP, TokenSeq, VocabSpec, canonicalize_names, tokenize

TASKS = ("switch_utterance", "switch_interlocutor", "insert_utterance", "mask_interlocutor")

#: Streams derived from (seed, dialogue id); any np.random.Generator works.
RngStream = np.random.Generator


def derive_rng(seed: int, dialogue_id: str) -> RngStream:
    """Deterministic per-dialogue stream from a stable 64-bit hash."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    h.update(dialogue_id.encode("utf-8"))
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


@dataclass(frozen=True)
class PretextConfig:
    """Knobs for one corruption task.

    switch_prob / name_mask_prob / speaker_swap_prob are the per-turn
    selection probabilities of the shuffle, speaker-hiding, and speaker-swap
    corruptions. insert_count is the number of foreign utterances to splice
    in; gap_insert_prob switches insertion to an independent per-gap draw
    instead of a fixed count.
    """

    task: str
    switch_prob: float = 0.0
    name_mask_prob: float = 0.0
    speaker_swap_prob: float = 0.0
    insert_count: int = 1
    gap_insert_prob: float | None = None
    include_summary: bool = False
    mask_names: bool = False
    max_len: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for name in ("switch_prob", "name_mask_prob", "speaker_swap_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0,1], got {p}")
        if self.gap_insert_prob is not None and not 0.0 <= self.gap_insert_prob <= 1.0:
            raise InvalidConfigError(f"gap_insert_prob must be in [0,1], got {self.gap_insert_prob}")
        if self.insert_count < 0:
            raise InvalidConfigError("insert_count must be >= 0")
        if self.max_len < 8:
            raise InvalidConfigError("max_len must be >= 8")


@dataclass
class PretextExample:
    """A corrupted token sequence with marker positions and labels.

    sep_positions/sep_labels are parallel (binary tasks only);
    mask_positions/mask_targets are parallel (name-recovery task only).
    """

    dialogue_id: str
    task: str
    tokens: TokenSeq
    sep_positions: list[int]
    sep_labels: list[int]
    mask_positions: list[int]
    mask_targets: list[int]
    provenance: dict

    def __post_init__(self):
        if len(self.sep_positions) != len(self.sep_labels):
            raise ValueError("sep_positions and sep_labels must be parallel")
        if len(self.mask_positions) != len(self.mask_targets):
            raise ValueError("mask_positions and mask_targets must be parallel")
        for p in self.sep_positions:
            if self.tokens.strings[p] != SEP:
                raise ValueError(f"token at sep position {p} is {self.tokens.strings[p]!r}")
        for p in self.mask_positions:
            if self.tokens.strings[p] != MASK:
                raise ValueError(f"token at mask position {p} is {self.tokens.strings[p]!r}")

    def to_record(self) -> dict:
        return {
            "id": self.dialogue_id,
            "task": self.task,
            "token_ids": list(self.tokens.ids),
            "sep_positions": self.sep_positions,
            "sep_labels": self.sep_labels,
            "mask_positions": self.mask_positions,
            "mask_targets": self.mask_targets,
            "provenance": self.provenance,
        }

    @classmethod
    def from_record(cls, record: dict, vocab: VocabSpec) -> "PretextExample":
        ids = tuple(record["token_ids"])
        return cls(
            dialogue_id=record["id"],
            task=record["task"],
            tokens=TokenSeq(ids=ids, strings=tuple(vocab.id_to_token(i) for i in ids)),
            sep_positions=list(record["sep_positions"]),
            sep_labels=list(record["sep_labels"]),
            mask_positions=list(record["mask_positions"]),
            mask_targets=list(record["mask_targets"]),
            provenance=record["provenance"],
        )


@dataclass
class CorruptedDialogue:
    """Intermediate result of a generator, before tokenization/layout."""

    dialogue_id: str
    turns: list[tuple[str, str]]
    speaker_masked: list[bool]
    labels: list[int]
    track_sep: bool
    summary: str | None
    mask_summary_names: bool
    provenance: dict


def _identity(turn: Utterance) -> tuple[str, str]:
    return (turn.speaker, turn.text)


# generators -------------------------------------------------------------------


def switch_utterances(
    d: Dialogue, cfg: PretextConfig, rng: RngStream, vocab: VocabSpec
) -> PretextExample:
    """Shuffle a random subset of turns; label displaced slots.

    Each turn enters the pool independently with probability switch_prob;
    pool members are permuted uniformly among the pooled slots, so even at
    probability 1.0 the identity arrangement can occur and then every label
    is 0. When mask_names is set, each turn's speaker is independently
    hidden behind [MASK] with probability name_mask_prob (input corruption
    only; those masks carry no prediction target).
    """
    n = len(d.turns)
    selected = [i for i in range(n) if rng.random() < cfg.switch_prob]
    perm = rng.permutation(len(selected))
    placement = list(range(n))
    for slot_idx, slot in enumerate(selected):
        placement[slot] = selected[int(perm[slot_idx])]

    turns = [_identity(d.turns[placement[i]]) for i in range(n)]
    labels = [1 if turns[i] != _identity(d.turns[i]) else 0 for i in range(n)]
    if cfg.mask_names:
        masked = [rng.random() < cfg.name_mask_prob for _ in range(n)]
    else:
        masked = [False] * n

    cd = CorruptedDialogue(
        dialogue_id=d.id,
        turns=turns,
        speaker_masked=masked,
        labels=labels,
        track_sep=True,
        summary=d.summary if cfg.include_summary else None,
        mask_summary_names=False,
        provenance={
            "selected": selected,
            "placement": placement,
            "masked_slots": [i for i, m in enumerate(masked) if m],
        },
    )
    return assemble_sequence(cd, cfg, vocab)


def switch_interlocutors(
    d: Dialogue, cfg: PretextConfig, rng: RngStream, vocab: VocabSpec
) -> PretextExample:
    """Swap speakers on a random subset of turns; label the swapped ones.

    Each selected turn gets a uniformly drawn *different* interlocutor of
    the same dialogue, so a label-1 turn always carries a wrong name. Name
    masking does not apply to this task. With include_summary the reference
    summary follows the dialogue after an unlabeled [SEP].
    """
    speakers = d.interlocutors()
    if len(speakers) < 2:
        raise SingleSpeakerError(f"dialogue {d.id!r} has a single interlocutor")

    turns: list[tuple[str, str]] = []
    labels: list[int] = []
    replacements: list[list] = []
    for i, turn in enumerate(d.turns):
        if rng.random() < cfg.speaker_swap_prob:
            others = [s for s in speakers if s != turn.speaker]
            new_speaker = others[int(rng.integers(len(others)))]
            turns.append((new_speaker, turn.text))
            labels.append(1)
            replacements.append([i, turn.speaker, new_speaker])
        else:
            turns.append(_identity(turn))
            labels.append(0)

    cd = CorruptedDialogue(
        dialogue_id=d.id,
        turns=turns,
        speaker_masked=[False] * len(turns),
        labels=labels,
        track_sep=True,
        summary=d.summary if cfg.include_summary else None,
        mask_summary_names=False,
        provenance={"replacements": replacements},
    )
    return assemble_sequence(cd, cfg, vocab)


def insert_utterances(
    d: Dialogue,
    donors: list[Dialogue],
    cfg: PretextConfig,
    rng: RngStream,
    vocab: VocabSpec,
) -> PretextExample:
    """Splice foreign turns into random gaps; label the foreign ones."""
    donors = [x for x in donors if x.id != d.id]
    if not donors:
        raise NoDonorsError(f"dialogue {d.id!r}: empty donor pool")
    return _insert_from_pool(d, donors, None, cfg, rng, vocab)


def _insert_from_pool(
    d: Dialogue,
    pool: list[Dialogue],
    skip_idx: int | None,
    cfg: PretextConfig,
    rng: RngStream,
    vocab: VocabSpec,
) -> PretextExample:
    """Insertion against a donor pool; skip_idx excludes d from a shared
    corpus-wide pool without materializing per-dialogue donor lists."""
    n = len(d.turns)
    n_donors = len(pool) - (1 if skip_idx is not None else 0)
    if n_donors < 1:
        raise NoDonorsError(f"dialogue {d.id!r}: empty donor pool")

    if cfg.gap_insert_prob is not None:
        gaps = [g for g in range(n + 1) if rng.random() < cfg.gap_insert_prob]
    else:
        if cfg.insert_count > n + 1:
            raise KTooLargeError(
                f"insert_count {cfg.insert_count} exceeds {n + 1} gaps of dialogue {d.id!r}"
            )
        gaps = sorted(int(g) for g in rng.choice(n + 1, size=cfg.insert_count, replace=False))

    speakers = d.interlocutors()
    inserted: dict[int, tuple[str, str]] = {}
    prov_inserted: list[list] = []
    for gap in gaps:
        j = int(rng.integers(n_donors))
        if skip_idx is not None and j >= skip_idx:
            j += 1
        donor = pool[j]
        t = int(rng.integers(len(donor.turns)))
        camo = speakers[int(rng.integers(len(speakers)))]
        inserted[gap] = (camo, donor.turns[t].text)
        prov_inserted.append([gap, donor.id, t, camo])

    turns: list[tuple[str, str]] = []
    labels: list[int] = []
    for i in range(n + 1):
        if i in inserted:
            turns.append(inserted[i])
            labels.append(1)
        if i < n:
            turns.append(_identity(d.turns[i]))
            labels.append(0)

    cd = CorruptedDialogue(
        dialogue_id=d.id,
        turns=turns,
        speaker_masked=[False] * len(turns),
        labels=labels,
        track_sep=True,
        summary=d.summary if cfg.include_summary else None,
        mask_summary_names=False,
        provenance={"gaps": [int(g) for g in gaps], "inserted": prov_inserted},
    )
    return assemble_sequence(cd, cfg, vocab)


def mask_interlocutors(d: Dialogue, cfg: PretextConfig, vocab: VocabSpec) -> PretextExample:
    """Hide every person token in the summary; targets are the hidden ids.

    The dialogue side stays untouched. Requires canonicalized names and a
    reference summary.
    """
    if d.summary is None:
        raise NoSummaryError(f"dialogue {d.id!r} has no reference summary")
    cd = CorruptedDialogue(
        dialogue_id=d.id,
        turns=[_identity(t) for t in d.turns],
        speaker_masked=[False] * len(d.turns),
        labels=[0] * len(d.turns),
        track_sep=False,
        summary=d.summary,
        mask_summary_names=True,
        provenance={},
    )
    return assemble_sequence(cd, cfg, vocab)


# assembly ---------------------------------------------------------------------


def assemble_sequence(
    cd: CorruptedDialogue, cfg: PretextConfig, vocab: VocabSpec
) -> PretextExample:
    """Lay out [CLS], then per turn speaker/text/[SEP], then the optional
    summary segment; truncate by dropping whole trailing turns.

    Turn labels travel with their [SEP]; truncation drops a turn's tokens
    and its label together. The summary segment (one unlabeled [SEP] plus
    summary tokens) survives turn truncation because it is the supervision
    for name recovery; as a last resort its tail is cut. Raises
    SequenceEmptyError when the first turn alone cannot fit.
    """
    turn_blocks: list[list[int]] = []
    for (speaker, text), masked in zip(cd.turns, cd.speaker_masked):
        speaker_ids = [vocab.mask_id] if masked else list(tokenize(speaker, vocab).ids)
        turn_blocks.append(speaker_ids + list(tokenize(text, vocab).ids) + [vocab.sep_id])

    summary_block: list[int] = []
    summary_masks: list[tuple[int, int]] = []  # (offset inside block, original id)
    if cd.summary is not None:
        summary_block = [vocab.sep_id] + list(tokenize(cd.summary, vocab).ids)
        if cd.mask_summary_names:
            for i, tok_id in enumerate(summary_block):
                if vocab.is_person_id(tok_id):
                    summary_masks.append((i, tok_id))
                    summary_block[i] = vocab.mask_id

    labels = list(cd.labels)
    n_kept = len(turn_blocks)
    total = 1 + sum(len(b) for b in turn_blocks) + len(summary_block)
    while total > cfg.max_len and n_kept > 1:
        n_kept -= 1
        total -= len(turn_blocks[n_kept])
    if total > cfg.max_len and summary_block:
        keep = cfg.max_len - (total - len(summary_block))
        if keep < 2:  # not even [SEP] plus one summary token
            keep = 0
        summary_block = summary_block[:keep]
        summary_masks = [(i, t) for i, t in summary_masks if i < keep]
        total = 1 + sum(len(turn_blocks[i]) for i in range(n_kept)) + len(summary_block)
    if total > cfg.max_len:
        raise SequenceEmptyError(
            f"dialogue {cd.dialogue_id!r}: first turn alone exceeds max_len {cfg.max_len}"
        )

    ids: list[int] = [vocab.cls_id]
    sep_positions: list[int] = []
    for i in range(n_kept):
        ids.extend(turn_blocks[i])
        sep_positions.append(len(ids) - 1)
    summary_offset = len(ids)
    ids.extend(summary_block)

    if cd.track_sep:
        sep_labels = labels[:n_kept]
    else:
        sep_positions, sep_labels = [], []

    mask_positions = [summary_offset + i for i, _ in summary_masks]
    mask_targets = [t for _, t in summary_masks]
    provenance = dict(cd.provenance)
    if cd.mask_summary_names:
        provenance["masked_summary_tokens"] = [vocab.id_to_token(t) for t in mask_targets]
    if n_kept < len(turn_blocks):
        provenance["truncated_turns"] = len(turn_blocks) - n_kept

    return PretextExample(
        dialogue_id=cd.dialogue_id,
        task=cfg.task,
        tokens=TokenSeq(ids=tuple(ids), strings=tuple(vocab.id_to_token(i) for i in ids)),
        sep_positions=sep_positions,
        sep_labels=sep_labels,
        mask_positions=mask_positions,
        mask_targets=mask_targets,
        provenance=provenance,
    )


# dataset generation -------------------------------------------------------------


@dataclass
class GeneratedDataset:
    examples: list[PretextExample]
    skipped: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)


_SKIP_REASONS = {
    SingleSpeakerError: "single_speaker",
    NoSummaryError: "no_summary",
    NoDonorsError: "no_donors",
    KTooLargeError: "k_too_large",
    SequenceEmptyError: "sequence_empty",
    TooManySpeakersError: "too_many_speakers",
}
_SKIP_TYPES = tuple(_SKIP_REASONS)


def generate_dataset(
    corpus: Corpus,
    cfg: PretextConfig,
    vocab: VocabSpec,
    workers: int = 1,
    canonicalize: bool = True,
) -> GeneratedDataset:
    """One example per eligible dialogue, fully determined by (corpus, cfg).

    Names are canonicalized to person tokens first (the shared preprocessing
    step), then each dialogue is corrupted under its own derived rng stream,
    so output is identical for any worker count or processing order.
    Ineligible dialogues are skipped and counted by reason.
    """
    prepared: list[Dialogue | None] = []
    skipped: dict[str, int] = {}
    for d in corpus.dialogues:
        if canonicalize:
            try:
                d = canonicalize_names(d)[0]
            except TooManySpeakersError:
                skipped["too_many_speakers"] = skipped.get("too_many_speakers", 0) + 1
                d = None
        prepared.append(d)
    pool = [d for d in prepared if d is not None]
    pool_index = {d.id: i for i, d in enumerate(pool)}

    def build(d: Dialogue | None):
        if d is None:
            return None
        rng = derive_rng(cfg.seed, d.id)
        try:
            if cfg.task == "switch_utterance":
                return switch_utterances(d, cfg, rng, vocab)
            if cfg.task == "switch_interlocutor":
                return switch_interlocutors(d, cfg, rng, vocab)
            if cfg.task == "insert_utterance":
                return _insert_from_pool(d, pool, pool_index[d.id], cfg, rng, vocab)
            return mask_interlocutors(d, cfg, vocab)
        except _SKIP_TYPES as exc:
            return _SKIP_REASONS[type(exc)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(build, prepared))
    else:
        results = [build(d) for d in prepared]

    examples: list[PretextExample] = []
    for res in results:
        if res is None:
            continue
        if isinstance(res, str):
            skipped[res] = skipped.get(res, 0) + 1
        else:
            examples.append(res)
    return GeneratedDataset(examples=examples, skipped=skipped)
