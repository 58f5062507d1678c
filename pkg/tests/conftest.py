"""Shared fixtures: small vocabularies and synthetic corpora.

templated_corpus builds topically coherent dialogues: turn j of a dialogue
carries slot words tied to j plus a per-dialogue topic word, so a switched
turn breaks the slot progression and an inserted turn carries a foreign
topic — the labels are recoverable from local continuity by construction.
"""

from __future__ import annotations

import numpy as np
import pytest

from dialpretext import Corpus, Dialogue, Utterance, VocabSpec

TOPIC_WORDS = [f"topic{i}" for i in range(40)]
SLOT_WORDS = [f"p{j}" for j in range(12)] + [f"q{j}" for j in range(12)]
SPEAKERS = ["Ana", "Ben", "Cleo", "Dan"]


def templated_corpus(n_dialogues: int, seed: int = 0, min_turns=6, max_turns=10) -> Corpus:
    rng = np.random.default_rng(seed)
    dialogues = []
    for i in range(n_dialogues):
        n_turns = int(rng.integers(min_turns, max_turns + 1))
        n_speakers = int(rng.integers(2, 5))
        topic = TOPIC_WORDS[int(rng.integers(len(TOPIC_WORDS)))]
        turns = tuple(
            Utterance(
                speaker=SPEAKERS[j % n_speakers],
                text=f"p{j} q{j} {topic}",
            )
            for j in range(n_turns)
        )
        summary = f"{turns[0].speaker} talks {topic} with {turns[1].speaker}"
        dialogues.append(Dialogue(id=f"t{i:05d}", turns=turns, summary=summary))
    return Corpus(split="train", dialogues=tuple(dialogues))


def templated_vocab() -> VocabSpec:
    base = SLOT_WORDS + TOPIC_WORDS + ["talks", "with"] + [s.lower() for s in SPEAKERS]
    return VocabSpec.build(base, person_count=8)


@pytest.fixture(scope="session")
def tvocab() -> VocabSpec:
    return templated_vocab()


@pytest.fixture(scope="session")
def tcorpus() -> Corpus:
    return templated_corpus(60, seed=11)


@pytest.fixture()
def small_vocab() -> VocabSpec:
    base = ["hi", "yo", "ok", "cat", "dog", "sun", "play", "##ing", "##s", "!", "?", ","]
    return VocabSpec.build(base, person_count=4)
