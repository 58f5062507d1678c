import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialpretext import (
    Corpus,
    Dialogue,
    PretextConfig,
    Utterance,
    corpus_stats,
    generate_dataset,
    load_corpus,
    parse_dialogue,
    read_examples,
    write_examples,
)
from dialpretext.errors import (
    EmptyDialogueError,
    MalformedRecordError,
    MissingSpeakerError,
)
from dialpretext.vocab import VocabSpec

from conftest import templated_corpus, templated_vocab


class TestParseDialogue:
    def test_emoji_line(self):
        d = parse_dialogue("Nadine: caaaaaat 🐈🐈", "x")
        assert d.turns == (Utterance(speaker="Nadine", text="caaaaaat 🐈🐈"),)

    def test_empty_input(self):
        with pytest.raises(EmptyDialogueError):
            parse_dialogue("", "x")
        with pytest.raises(EmptyDialogueError):
            parse_dialogue("  \n \n", "x")

    def test_first_colon_split(self):
        d = parse_dialogue("A: hi\nB: see: you", "x")
        assert len(d.turns) == 2
        assert d.turns[1] == Utterance(speaker="B", text="see: you")

    def test_missing_speaker_on_first_line(self):
        with pytest.raises(MissingSpeakerError):
            parse_dialogue("no speaker here", "x")
        with pytest.raises(MissingSpeakerError):
            parse_dialogue(": starts with colon", "x")

    def test_continuation_lines_fold_into_previous_turn(self):
        d = parse_dialogue("A: first part\nsecond part\nB: done", "x")
        assert d.turns[0].text == "first part second part"
        assert d.turns[1].speaker == "B"

    def test_speaker_is_trimmed(self):
        d = parse_dialogue("  Ann  :  spaced out  ", "x")
        assert d.turns[0].speaker == "Ann"
        assert d.turns[0].text == "spaced out"

    def test_nfc_normalization(self):
        # e + combining acute composes to the same dialogue as precomposed é
        decomposed = parse_dialogue("Zoé: hi", "x")
        composed = parse_dialogue("Zoé: hi", "x")
        assert decomposed.turns[0].speaker == composed.turns[0].speaker


names = st.text(
    alphabet="ABCab z", min_size=1, max_size=8
).map(str.strip).filter(lambda s: s)
texts = st.text(alphabet="abc xy:!😀", min_size=0, max_size=12).map(
    lambda s: " ".join(s.split())
)


@given(
    st.lists(
        st.builds(Utterance, speaker=names, text=texts), min_size=1, max_size=6
    )
)
@settings(max_examples=60, deadline=None)
def test_parse_roundtrip_idempotent(turns):
    d = Dialogue(id="x", turns=tuple(turns))
    reparsed = parse_dialogue(d.as_text(), "x")
    assert parse_dialogue(reparsed.as_text(), "x") == reparsed


class TestLoadCorpus:
    def test_jsonl_direct_mapping(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            json.dumps({"id": "x", "dialogue": "A: hi\nB: yo", "summary": "A greets B."})
            + "\n"
        )
        corpus = load_corpus(path)
        assert len(corpus) == 1
        d = corpus.dialogues[0]
        assert len(d.turns) == 2 and d.summary == "A greets B."

    def test_jsonl_turn_list_form(self, tmp_path):
        path = tmp_path / "c.jsonl"
        record = {"id": "x", "dialogue": [{"speaker": "A", "text": "hi"}]}
        path.write_text(json.dumps(record) + "\n")
        corpus = load_corpus(path)
        assert corpus.dialogues[0].turns[0] == Utterance("A", "hi")

    def test_malformed_record_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        good = json.dumps({"id": "g", "dialogue": "A: hi"})
        lines = [
            good.replace('"g"', f'"g{i}"') for i in range(3)
        ] + [json.dumps({"id": "bad", "dialogue": "no colon first line"})]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(MalformedRecordError) as err:
            load_corpus(path)
        assert err.value.line_no == 4

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        record = json.dumps({"id": "x", "dialogue": "A: hi"})
        path.write_text(record + "\n" + record + "\n")
        with pytest.raises(MalformedRecordError) as err:
            load_corpus(path)
        assert err.value.line_no == 2

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            load_corpus(tmp_path / "nope.jsonl")

    def test_plaintext_blocks_with_summary(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text(
            "A: hi\nB: yo\nSUMMARY: A greets B.\n\nC: one liner\n"
        )
        corpus = load_corpus(path, format="plaintext-blocks")
        assert len(corpus) == 2
        assert corpus.dialogues[0].summary == "A greets B."
        assert corpus.dialogues[1].summary is None

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "c.jsonl"
        lines = [json.dumps({"id": f"d{i}", "dialogue": "A: hi"}) for i in range(5)]
        path.write_text("\n".join(lines) + "\n")
        assert [d.id for d in load_corpus(path)] == [f"d{i}" for i in range(5)]


class TestCorpusStats:
    def _vocab(self):
        return VocabSpec.build(["hi", "yo", "ok", "cat"], person_count=2)

    def test_synthetic_handcount(self):
        # 2 dialogues, 5 utterances, exactly one containing an OOV glyph
        d1 = Dialogue(
            id="a",
            turns=(
                Utterance("A", "hi"),
                Utterance("B", "yo"),
                Utterance("A", "ok ∑"),
            ),
        )
        d2 = Dialogue(id="b", turns=(Utterance("C", "cat"), Utterance("A", "hi yo")))
        report = corpus_stats(Corpus(split="train", dialogues=(d1, d2)), self._vocab())
        assert report.n_dialogues == 2
        assert report.n_utterances == 5
        assert report.n_interlocutors == 3
        assert report.n_oov_utterances == 1
        assert report.oov_fraction == pytest.approx(0.2)

    def test_empty_corpus_all_zero(self):
        report = corpus_stats(Corpus(split="train", dialogues=()), self._vocab())
        assert report.n_dialogues == 0
        assert report.n_utterances == 0
        assert report.oov_fraction == 0.0

    def test_interlocutors_case_sensitive(self):
        d = Dialogue(id="a", turns=(Utterance("amanda", "hi"), Utterance("Amanda", "yo")))
        report = corpus_stats(Corpus(split="train", dialogues=(d,)), self._vocab())
        assert report.n_interlocutors == 2

    def test_order_invariant(self):
        corpus = templated_corpus(10, seed=4)
        vocab = templated_vocab()
        forward = corpus_stats(corpus, vocab)
        backward = corpus_stats(
            Corpus(split="train", dialogues=tuple(reversed(corpus.dialogues))), vocab
        )
        assert forward == backward


class TestWriteExamples:
    def _examples(self, n=5):
        corpus = templated_corpus(n, seed=2)
        vocab = templated_vocab()
        cfg = PretextConfig(task="switch_utterance", switch_prob=0.7, seed=13)
        return generate_dataset(corpus, cfg, vocab).examples, vocab

    def test_empty_list_empty_file(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_examples([], path)
        assert path.read_bytes() == b""

    def test_one_line_per_example(self, tmp_path):
        examples, _ = self._examples(7)
        path = tmp_path / "out.jsonl"
        write_examples(examples, path)
        assert len(path.read_text().splitlines()) == 7

    def test_byte_identical_rewrites(self, tmp_path):
        examples, _ = self._examples()
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_examples(examples, a)
        write_examples(examples, b)
        assert a.read_bytes() == b.read_bytes()

    def test_roundtrip_structural_equality(self, tmp_path):
        examples, vocab = self._examples()
        path = tmp_path / "out.jsonl"
        write_examples(examples, path)
        loaded = read_examples(path, vocab)
        assert len(loaded) == len(examples)
        for x, y in zip(examples, loaded):
            assert x.to_record() == y.to_record()
            assert x.tokens == y.tokens


@given(st.integers(min_value=0, max_value=2**32))
@settings(max_examples=25, deadline=None)
def test_roundtrip_random_configs(tmp_path_factory, seed):
    corpus = templated_corpus(4, seed=seed % 997)
    vocab = templated_vocab()
    cfg = PretextConfig(
        task="insert_utterance", insert_count=1, include_summary=bool(seed % 2), seed=seed
    )
    examples = generate_dataset(corpus, cfg, vocab).examples
    path = tmp_path_factory.mktemp("rt") / "out.jsonl"
    write_examples(examples, path)
    loaded = read_examples(path, vocab)
    assert [e.to_record() for e in loaded] == [e.to_record() for e in examples]
