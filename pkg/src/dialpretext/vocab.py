"""Token inventory: reserved markers, person tokens, emoji extension, and a
greedy longest-match subword tokenizer.

The vocab file format is one token per line, line number = id. Reserved
markers must appear literally; person tokens follow the [PERSON_k] pattern;
single-character tokens inside the facial-emoji ranges are classified as
emoji extension tokens. Everything else is a base subword (continuation
pieces carry a leading "##").
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Dialogue, Utterance
from .errors import TooManySpeakersError, VocabError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
RESERVED_TOKENS = (PAD, UNK, CLS, SEP, MASK)

PERSON_RE = re.compile(r"\[PERSON_(\d+)\]")
DEFAULT_PERSON_BUDGET = 64
DEFAULT_EMOJI_BUDGET = 311

# "facial" defaults to the Emoticons block; callers may widen it
FACIAL_EMOJI_RANGES: tuple[tuple[int, int], ...] = ((0x1F600, 0x1F64F),)


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    strings: tuple[str, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.strings):
            raise ValueError("ids and strings must be parallel")

    def __len__(self) -> int:
        return len(self.ids)


def _in_ranges(ch: str, ranges: Iterable[tuple[int, int]]) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in ranges)


class VocabSpec:
    """Immutable token inventory with dense ids 0..size-1."""

    def __init__(self, tokens: Sequence[str], emoji_ranges=FACIAL_EMOJI_RANGES):
        tokens = tuple(tokens)
        self.emoji_ranges = tuple(emoji_ranges)
        if len(set(tokens)) != len(tokens):
            dupe = next(t for t in tokens if tokens.count(t) > 1)
            raise VocabError(f"duplicate token {dupe!r}")
        missing = [t for t in RESERVED_TOKENS if t not in tokens]
        if missing:
            raise VocabError(f"reserved tokens missing from vocab: {missing}")

        self.tokens = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        self.pad_id = self.token_to_id[PAD]
        self.unk_id = self.token_to_id[UNK]
        self.cls_id = self.token_to_id[CLS]
        self.sep_id = self.token_to_id[SEP]
        self.mask_id = self.token_to_id[MASK]

        person: dict[int, int] = {}
        base: list[str] = []
        emoji: list[str] = []
        for i, tok in enumerate(tokens):
            if tok in RESERVED_TOKENS:
                continue
            m = PERSON_RE.fullmatch(tok)
            if m:
                person[int(m.group(1))] = i
            elif len(tok) == 1 and _in_ranges(tok, emoji_ranges):
                emoji.append(tok)
            else:
                base.append(tok)
        if person and sorted(person) != list(range(len(person))):
            raise VocabError("person tokens must be dense [PERSON_0]..[PERSON_{n-1}]")

        self._person_ids = [person[k] for k in range(len(person))]
        self._id_to_person = {v: k for k, v in person.items()}
        self.base_tokens = tuple(base)
        self.emoji_tokens = tuple(emoji)
        # special tokens are protected from lowercasing/splitting; longest first
        specials = sorted(
            RESERVED_TOKENS + tuple(tokens[i] for i in self._person_ids),
            key=len,
            reverse=True,
        )
        self._specials_re = re.compile("|".join(re.escape(s) for s in specials))

    # construction ---------------------------------------------------------

    @classmethod
    def build(
        cls,
        base_tokens: Sequence[str],
        emoji_tokens: Sequence[str] = (),
        person_count: int = DEFAULT_PERSON_BUDGET,
        emoji_ranges=FACIAL_EMOJI_RANGES,
    ) -> "VocabSpec":
        """Canonical layout: reserved, person tokens, base subwords, emoji."""
        persons = [f"[PERSON_{k}]" for k in range(person_count)]
        tokens = tuple(RESERVED_TOKENS) + tuple(persons) + tuple(base_tokens) + tuple(emoji_tokens)
        return cls(tokens, emoji_ranges=emoji_ranges)

    @classmethod
    def from_file(cls, path: str | Path) -> "VocabSpec":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        tokens = [unicodedata.normalize("NFC", line.strip()) for line in lines]
        if any(not t for t in tokens):
            raise VocabError(f"{path}: empty line in vocab file")
        return cls(tokens)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    def extend_emoji(self, emoji: Sequence[str]) -> "VocabSpec":
        """New vocab with unseen emoji appended at the end (ids stay stable)."""
        new = [e for e in emoji if e not in self.token_to_id]
        return VocabSpec(self.tokens + tuple(new), emoji_ranges=self.emoji_ranges)

    # queries ----------------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def person_count(self) -> int:
        return len(self._person_ids)

    def person_token_id(self, k: int) -> int:
        return self._person_ids[k]

    def is_person_id(self, token_id: int) -> bool:
        return token_id in self._id_to_person

    def person_class(self, token_id: int) -> int:
        """Map a person token id to its dense class index k."""
        return self._id_to_person[token_id]

    def id_to_token(self, token_id: int) -> str:
        return self.tokens[token_id]


# tokenization ---------------------------------------------------------------


def _split_word(word: str) -> list[str]:
    """Split off punctuation and symbol characters (incl. emoji) as
    standalone single-character pieces."""
    pieces: list[str] = []
    buf: list[str] = []
    for ch in word:
        if unicodedata.category(ch)[0] in ("P", "S"):
            if buf:
                pieces.append("".join(buf))
                buf = []
            pieces.append(ch)
        else:
            buf.append(ch)
    if buf:
        pieces.append("".join(buf))
    return pieces


def _pretokenize(text: str, vocab: VocabSpec) -> list[str]:
    text = unicodedata.normalize("NFC", text)
    pieces: list[str] = []
    pos = 0
    for m in vocab._specials_re.finditer(text):
        for word in text[pos:m.start()].lower().split():
            pieces.extend(_split_word(word))
        pieces.append(m.group(0))
        pos = m.end()
    for word in text[pos:].lower().split():
        pieces.extend(_split_word(word))
    return pieces


def _wordpiece(word: str, vocab: VocabSpec) -> list[str]:
    if word in vocab.token_to_id:
        return [word]
    out: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = "##" + sub
            if sub in vocab.token_to_id:
                piece = sub
                break
            end -= 1
        if piece is None:
            return [UNK]
        out.append(piece)
        start = end
    return out


def tokenize(text: str, vocab: VocabSpec) -> TokenSeq:
    """Lowercase, split on whitespace/punctuation/symbols, then greedily
    segment each word longest-match-first; a word with no valid segmentation
    becomes a single [UNK]. Reserved and person tokens pass through intact.
    """
    strings: list[str] = []
    for piece in _pretokenize(text, vocab):
        if piece in vocab.token_to_id:
            strings.append(piece)
        else:
            strings.extend(_wordpiece(piece, vocab))
    ids = tuple(vocab.token_to_id[s] for s in strings)
    return TokenSeq(ids=ids, strings=tuple(strings))


def detokenize(strings: Iterable[str]) -> str:
    """Join subword pieces back into space-separated words."""
    words: list[str] = []
    for tok in strings:
        if tok.startswith("##") and words:
            words[-1] += tok[2:]
        else:
            words.append(tok)
    return " ".join(words)


# emoji vocabulary -------------------------------------------------------------


def build_emoji_vocab(
    corpus: Corpus,
    budget: int = DEFAULT_EMOJI_BUDGET,
    ranges: Iterable[tuple[int, int]] = FACIAL_EMOJI_RANGES,
) -> list[str]:
    """Most frequent emoji characters over all utterance texts.

    Returns at most `budget` characters in descending frequency order,
    ties broken by ascending codepoint.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    ranges = tuple(ranges)
    counts: Counter[str] = Counter()
    for dialogue in corpus:
        for turn in dialogue.turns:
            for ch in unicodedata.normalize("NFC", turn.text):
                if _in_ranges(ch, ranges):
                    counts[ch] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], ord(kv[0])))
    return [ch for ch, _ in ranked[:budget]]


def build_base_vocab(corpus: Corpus, min_count: int = 1) -> list[str]:
    """Word-level base vocabulary from a corpus (convenience for demos and
    self-contained runs; real pipelines supply their own subword file)."""
    scratch = VocabSpec.build(())
    counts: Counter[str] = Counter()
    for dialogue in corpus:
        for turn in dialogue.turns:
            counts.update(_pretokenize(turn.speaker, scratch))
            counts.update(_pretokenize(turn.text, scratch))
        if dialogue.summary:
            counts.update(_pretokenize(dialogue.summary, scratch))
    kept = [(tok, n) for tok, n in counts.items() if n >= min_count and tok not in RESERVED_TOKENS]
    kept.sort(key=lambda kv: (-kv[1], kv[0]))
    return [tok for tok, _ in kept]


# name canonicalization ---------------------------------------------------------


def canonicalize_names(
    dialogue: Dialogue, person_budget: int = DEFAULT_PERSON_BUDGET
) -> tuple[Dialogue, dict[str, str]]:
    """Replace interlocutor names with [PERSON_k] tokens.

    Speakers map in order of first appearance; every whole-word,
    case-insensitive occurrence of a name inside utterance texts and the
    summary maps to the same token. The returned name_map is invertible.
    """
    names = dialogue.interlocutors()
    if len(names) > person_budget:
        raise TooManySpeakersError(
            f"dialogue {dialogue.id!r} has {len(names)} speakers (budget {person_budget})"
        )
    name_map = {name: f"[PERSON_{k}]" for k, name in enumerate(names)}
    # first-appearing speaker wins when names differ only by case
    folded: dict[str, str] = {}
    for name in names:
        folded.setdefault(name.casefold(), name_map[name])

    pattern = re.compile(
        "|".join(
            rf"(?<!\w){re.escape(name)}(?!\w)"
            for name in sorted(names, key=len, reverse=True)
        ),
        re.IGNORECASE,
    )

    def substitute(text: str) -> str:
        return pattern.sub(lambda m: folded[m.group(0).casefold()], text)

    turns = tuple(
        Utterance(speaker=name_map[t.speaker], text=substitute(t.text))
        for t in dialogue.turns
    )
    summary = substitute(dialogue.summary) if dialogue.summary is not None else None
    return Dialogue(id=dialogue.id, turns=turns, summary=summary), name_map
