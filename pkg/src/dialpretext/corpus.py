"""SAMSum-style dialogue corpus: parsing, validation, stats, serialization.

A dialogue arrives as a block of "Name: content" lines. The speaker is
everything before the *first* colon on a line (content may itself contain
colons); a line with no usable speaker prefix continues the previous
utterance. All input is NFC-normalized before any processing so emoji and
name comparisons are stable.
"""

from __future__ import annotations

import json
import os
import tempfile
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyDialogueError, MalformedRecordError, MissingSpeakerError

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class Utterance:
    """One speaker turn: a (speaker, text) pair."""

    speaker: str
    text: str

    def __post_init__(self):
        if not self.speaker or self.speaker != self.speaker.strip():
            raise ValueError(f"speaker must be nonempty and trimmed: {self.speaker!r}")
        if "\n" in self.speaker or "\n" in self.text:
            raise ValueError("speaker/text must not contain newlines")


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Utterance, ...]
    summary: str | None = None

    def __post_init__(self):
        if not self.turns:
            raise ValueError(f"dialogue {self.id!r} has no turns")

    def interlocutors(self) -> list[str]:
        """Unique speaker names, ordered by first appearance."""
        seen: dict[str, None] = {}
        for turn in self.turns:
            seen.setdefault(turn.speaker, None)
        return list(seen)

    def as_text(self) -> str:
        return "\n".join(f"{t.speaker}: {t.text}" for t in self.turns)


@dataclass(frozen=True)
class Corpus:
    split: str
    dialogues: tuple[Dialogue, ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        ids = [d.id for d in self.dialogues]
        if len(set(ids)) != len(ids):
            dupe = next(i for i in ids if ids.count(i) > 1)
            raise ValueError(f"duplicate dialogue id {dupe!r}")

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)


@dataclass(frozen=True)
class StatsReport:
    n_dialogues: int
    n_utterances: int
    n_interlocutors: int
    n_oov_utterances: int
    oov_fraction: float

    def to_record(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "n_utterances": self.n_utterances,
            "n_interlocutors": self.n_interlocutors,
            "n_oov_utterances": self.n_oov_utterances,
            "oov_fraction": self.oov_fraction,
        }


def _normalize_text(text: str) -> str:
    # newlines inside one utterance collapse to single spaces
    return " ".join(unicodedata.normalize("NFC", text).split())


def parse_dialogue(raw: str, id: str) -> Dialogue:
    """Parse a "Name: content" block into a Dialogue.

    The speaker is the text before the first colon, trimmed; a line whose
    pre-colon part is empty or that has no colon at all continues the
    previous utterance. Raises EmptyDialogueError on blank input and
    MissingSpeakerError when the first line carries no speaker.
    """
    raw = unicodedata.normalize("NFC", raw)
    lines = [line.strip() for line in raw.splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        raise EmptyDialogueError(f"dialogue {id!r}: no parseable line")

    turns: list[tuple[str, list[str]]] = []
    for line in lines:
        head, sep, rest = line.partition(":")
        speaker = head.strip()
        if sep and speaker:
            turns.append((speaker, [rest.strip()]))
        elif turns:
            turns[-1][1].append(line)
        else:
            raise MissingSpeakerError(f"dialogue {id!r}: first line has no speaker: {line!r}")

    built = tuple(
        Utterance(speaker=spk, text=_normalize_text(" ".join(parts)))
        for spk, parts in turns
    )
    return Dialogue(id=id, turns=built)


def _dialogue_from_record(record: dict, line_no: int) -> Dialogue:
    if not isinstance(record, dict):
        raise MalformedRecordError(line_no, "record is not an object")
    did = record.get("id")
    if not isinstance(did, str) or not did:
        raise MalformedRecordError(line_no, "missing or invalid 'id'")
    body = record.get("dialogue")
    summary = record.get("summary")
    if summary is not None and not isinstance(summary, str):
        raise MalformedRecordError(line_no, "'summary' must be a string")
    if summary is not None:
        summary = _normalize_text(summary)

    if isinstance(body, str):
        try:
            dialogue = parse_dialogue(body, did)
        except (EmptyDialogueError, MissingSpeakerError) as exc:
            raise MalformedRecordError(line_no, str(exc)) from exc
    elif isinstance(body, list):
        try:
            turns = tuple(
                Utterance(
                    speaker=_normalize_text(item["speaker"]),
                    text=_normalize_text(item["text"]),
                )
                for item in body
            )
            dialogue = Dialogue(id=did, turns=turns)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(line_no, f"bad turn list: {exc}") from exc
    else:
        raise MalformedRecordError(line_no, "'dialogue' must be a string or turn list")

    if summary is not None:
        dialogue = Dialogue(id=dialogue.id, turns=dialogue.turns, summary=summary)
    return dialogue


def _load_jsonl(path: Path) -> list[Dialogue]:
    dialogues: list[Dialogue] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                raise MalformedRecordError(line_no, "blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(line_no, f"invalid json: {exc}") from exc
            dialogue = _dialogue_from_record(record, line_no)
            if dialogue.id in seen:
                raise MalformedRecordError(line_no, f"duplicate id {dialogue.id!r}")
            seen.add(dialogue.id)
            dialogues.append(dialogue)
    return dialogues


def _load_plaintext_blocks(path: Path) -> list[Dialogue]:
    text = Path(path).read_text(encoding="utf-8")
    blocks: list[list[str]] = [[]]
    for line in text.splitlines():
        if line.strip():
            blocks[-1].append(line)
        elif blocks[-1]:
            blocks.append([])
    blocks = [b for b in blocks if b]

    dialogues = []
    offset = 0
    for idx, block in enumerate(blocks):
        summary = None
        if block and block[-1].strip().startswith("SUMMARY:"):
            summary = _normalize_text(block[-1].strip()[len("SUMMARY:"):])
            block = block[:-1]
        did = f"d{idx:05d}"
        try:
            dialogue = parse_dialogue("\n".join(block), did)
        except (EmptyDialogueError, MissingSpeakerError) as exc:
            raise MalformedRecordError(idx + 1, str(exc)) from exc
        if summary:
            dialogue = Dialogue(id=did, turns=dialogue.turns, summary=summary)
        dialogues.append(dialogue)
        offset += len(block)
    return dialogues


def load_corpus(path: str | Path, format: str = "jsonl", split: str = "train") -> Corpus:
    """Load a corpus file, preserving record order.

    jsonl records look like {"id": ..., "dialogue": raw text or turn list,
    "summary": optional}. Plaintext blocks are dialogues separated by blank
    lines with an optional trailing "SUMMARY: ..." line; ids are synthesized
    sequentially.
    """
    path = Path(path)
    if format == "jsonl":
        dialogues = _load_jsonl(path)
    elif format == "plaintext-blocks":
        dialogues = _load_plaintext_blocks(path)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    return Corpus(split=split, dialogues=tuple(dialogues))


def corpus_stats(corpus: Corpus, vocab) -> StatsReport:
    """Count dialogues, utterances, unique speaker names, and OOV utterances.

    An utterance is OOV iff tokenizing its text yields at least one unknown
    token. Speaker names are counted case-sensitively, corpus-wide.
    """
    from .vocab import tokenize  # local import: vocab imports corpus types

    n_dialogues = len(corpus.dialogues)
    n_utterances = 0
    n_oov = 0
    names: set[str] = set()
    for d in corpus:
        for turn in d.turns:
            n_utterances += 1
            names.add(turn.speaker)
            if vocab.unk_id in tokenize(turn.text, vocab).ids:
                n_oov += 1
    fraction = n_oov / n_utterances if n_utterances else 0.0
    return StatsReport(
        n_dialogues=n_dialogues,
        n_utterances=n_utterances,
        n_interlocutors=len(names),
        n_oov_utterances=n_oov,
        oov_fraction=fraction,
    )


def _dump_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_examples(examples: Iterable, path: str | Path) -> None:
    """Write pretext examples as one jsonl record per line.

    The write is atomic (temp file + rename) and byte-deterministic for a
    given example list.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for example in examples:
                fh.write(_dump_record(example.to_record()))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_examples(path: str | Path, vocab) -> list:
    """Read back a pretext example file written by write_examples."""
    from .pretext import PretextExample

    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                raise MalformedRecordError(line_no, "blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(line_no, f"invalid json: {exc}") from exc
            examples.append(PretextExample.from_record(record, vocab))
    return examples
