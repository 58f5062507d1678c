"""Parse the bundled sample corpus and reproduce the stats workflow:
dialogue/utterance/interlocutor counts plus OOV rates before and after
extending the vocabulary with the most frequent facial emojis.
"""

from pathlib import Path

from dialpretext import (
    VocabSpec,
    build_base_vocab,
    build_emoji_vocab,
    corpus_stats,
    load_corpus,
)

ROOT = Path(__file__).resolve().parent.parent

corpus = load_corpus(ROOT / "data" / "sample_dialogues.jsonl")
print(f"loaded {len(corpus)} dialogues from the sample corpus")
first = corpus.dialogues[0]
print(f"first dialogue ({first.id}):")
for turn in first.turns:
    print(f"  {turn.speaker}: {turn.text}")
print(f"  summary: {first.summary}\n")

# word-level base vocabulary, with emoji chars left out so the extension
# has something to add
words = [t for t in build_base_vocab(corpus) if not (len(t) == 1 and ord(t) > 0x2000)]
base = VocabSpec.build(words)
print(f"base vocab: {base.size} tokens")

report = corpus_stats(corpus, base)
print(
    f"without emoji: {report.n_utterances} utterances, "
    f"{report.n_oov_utterances} OOV ({100 * report.oov_fraction:.1f}%)"
)

emoji = build_emoji_vocab(corpus, budget=311)
print(f"most frequent facial emojis in the corpus: {' '.join(emoji)}")
extended = base.extend_emoji(emoji)
report_fe = corpus_stats(corpus, extended)
print(
    f"with emoji:    {report_fe.n_utterances} utterances, "
    f"{report_fe.n_oov_utterances} OOV ({100 * report_fe.oov_fraction:.1f}%)"
)
