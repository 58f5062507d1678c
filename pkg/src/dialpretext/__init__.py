"""Self-supervised pretext tasks for dialogue summarization corpora.

Deterministic corpus transforms (utterance switching/insertion, speaker
swapping, name masking), SAMSum-style parsing and stats, a greedy subword
tokenizer with emoji vocabulary extension, ROUGE/cosine evaluation, and a
desk-scale shared-weight encoder-decoder that demonstrates the tasks are
learnable.
"""

from .corpus import (
    Corpus,
    Dialogue,
    StatsReport,
    Utterance,
    corpus_stats,
    load_corpus,
    parse_dialogue,
    read_examples,
    write_examples,
)
from .evalmetrics import (
    EmbeddingFile,
    EvalReport,
    RougeScore,
    cosine_eval,
    rouge_l,
    rouge_n,
    rouge_report,
    select_longest,
)
from .pretext import (
    GeneratedDataset,
    PretextConfig,
    PretextExample,
    RngStream,
    assemble_sequence,
    derive_rng,
    generate_dataset,
    insert_utterances,
    mask_interlocutors,
    switch_interlocutors,
    switch_utterances,
)
from .vocab import (
    TokenSeq,
    VocabSpec,
    build_base_vocab,
    build_emoji_vocab,
    canonicalize_names,
    detokenize,
    tokenize,
)

__version__ = "0.1.0"
