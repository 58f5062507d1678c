import json

import pytest

from dialpretext.cli import main

from conftest import SPEAKERS, TOPIC_WORDS, templated_corpus, templated_vocab


@pytest.fixture()
def workdir(tmp_path):
    corpus = templated_corpus(20, seed=51)
    corpus_path = tmp_path / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for d in corpus:
            record = {
                "id": d.id,
                "dialogue": d.as_text(),
                "summary": d.summary,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    vocab_path = tmp_path / "vocab.txt"
    templated_vocab().to_file(vocab_path)
    return tmp_path, corpus_path, vocab_path


def read_lines(path):
    return path.read_text(encoding="utf-8").splitlines()


class TestStats:
    def test_runs_and_writes_report(self, workdir, capsys):
        tmp, corpus_path, vocab_path = workdir
        out = tmp / "stats.jsonl"
        code = main(
            ["stats", "--corpus", str(corpus_path), "--vocab", str(vocab_path), "--out", str(out)]
        )
        assert code == 0
        assert "dialogues=20" in capsys.readouterr().out
        rows = [json.loads(line) for line in read_lines(out)]
        assert {r["vocab"] for r in rows} == {"base", "with_emoji"}
        assert (tmp / "stats.jsonl.config.json").exists()

    def test_empty_corpus_is_fine(self, workdir, capsys):
        tmp, _, vocab_path = workdir
        empty = tmp / "empty.jsonl"
        empty.write_text("")
        code = main(["stats", "--corpus", str(empty), "--vocab", str(vocab_path)])
        assert code == 0
        assert "dialogues=0" in capsys.readouterr().out

    def test_missing_file_nonzero_exit(self, workdir):
        tmp, _, vocab_path = workdir
        code = main(["stats", "--corpus", str(tmp / "nope.jsonl"), "--vocab", str(vocab_path)])
        assert code == 2


class TestCorrupt:
    def test_deterministic_and_parallel_identical(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        outs = []
        for name, workers in (("a", "1"), ("b", "1"), ("c", "8")):
            out = tmp / f"{name}.jsonl"
            code = main(
                [
                    "corrupt", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                    "--task", "switch_utterance", "--pu", "1.0", "--pn", "1.0",
                    "--seed", "9", "--workers", workers, "--out", str(out),
                ]
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_flag_task_mismatch_is_usage_error(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        out = tmp / "x.jsonl"
        code = main(
            [
                "corrupt", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--task", "switch_utterance", "--pi", "0.5", "--out", str(out),
            ]
        )
        assert code == 1
        assert not out.exists()

    def test_out_of_range_probability(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        out = tmp / "x.jsonl"
        code = main(
            [
                "corrupt", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--task", "switch_utterance", "--pu", "1.5", "--out", str(out),
            ]
        )
        assert code == 1
        assert not out.exists()

    def test_effective_config_written(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        out = tmp / "d.jsonl"
        main(
            [
                "corrupt", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--task", "insert_utterance", "--k", "1", "--seed", "4", "--out", str(out),
            ]
        )
        config = json.loads((tmp / "d.jsonl.config.json").read_text())
        assert config["subcommand"] == "corrupt"
        assert config["seed"] == 4
        assert config["task"] == "insert_utterance"


class TestEvalRouge:
    def _write(self, path, rows):
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

    def test_identical_files_score_100(self, tmp_path, capsys):
        rows = [{"id": "a", "summary": "the cat sat"}, {"id": "b", "summary": "dogs run"}]
        pred, ref = tmp_path / "p.jsonl", tmp_path / "r.jsonl"
        self._write(pred, rows)
        self._write(ref, rows)
        assert main(["eval-rouge", "--pred", str(pred), "--ref", str(ref)]) == 0
        out = capsys.readouterr().out
        assert "100.00" in out

    def test_hand_fixture_means(self, tmp_path, capsys):
        pred, ref = tmp_path / "p.jsonl", tmp_path / "r.jsonl"
        self._write(pred, [{"id": "a", "summary": "the cat sat"},
                           {"id": "b", "summary": "same words"}])
        self._write(ref, [{"id": "a", "summary": "the cat ran"},
                          {"id": "b", "summary": "same words"}])
        assert main(["eval-rouge", "--pred", str(pred), "--ref", str(ref)]) == 0
        out = capsys.readouterr().out
        # R-1 mean of 2/3 and 1.0 -> 83.33
        assert "83.33" in out

    def test_id_mismatch_exit_2(self, tmp_path):
        pred, ref = tmp_path / "p.jsonl", tmp_path / "r.jsonl"
        self._write(pred, [{"id": "a", "summary": "x"}])
        self._write(ref, [{"id": "b", "summary": "x"}])
        assert main(["eval-rouge", "--pred", str(pred), "--ref", str(ref)]) == 2


class TestEvalCossim:
    def test_identical_embeddings(self, workdir, capsys):
        tmp, corpus_path, _ = workdir
        rows = [{"id": f"t{i:05d}", "vector": [1.0, float(i)]} for i in range(20)]
        pred, ref = tmp / "pe.jsonl", tmp / "re.jsonl"
        for path in (pred, ref):
            with open(path, "w") as fh:
                for row in rows:
                    fh.write(json.dumps(row) + "\n")
        code = main(
            [
                "eval-cossim", "--pred", str(pred), "--ref", str(ref),
                "--corpus", str(corpus_path), "--n", "10",
            ]
        )
        assert code == 0
        assert "1.0000" in capsys.readouterr().out


class TestBuildVocab:
    def test_grows_by_at_most_budget(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        # add emoji-bearing dialogue so there is something to append
        with open(corpus_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"id": "emo", "dialogue": "Ana: hello 😀😀 😂"}) + "\n")
        out = tmp / "vocab_fe.txt"
        code = main(
            [
                "build-vocab", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--out", str(out), "--budget", "311",
            ]
        )
        assert code == 0
        before = len(read_lines(vocab_path))
        after = len(read_lines(out))
        assert before < after <= before + 311
        assert read_lines(out)[:before] == read_lines(vocab_path)


class TestTrainToy:
    def test_pretext_mode_deterministic(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        data = tmp / "data.jsonl"
        main(
            [
                "corrupt", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--task", "switch_utterance", "--pu", "1.0", "--seed", "2",
                "--out", str(data),
            ]
        )
        traces = []
        for run in ("r1", "r2"):
            out_dir = tmp / run
            code = main(
                [
                    "train-toy", "--mode", "pretext", "--data", str(data),
                    "--vocab", str(vocab_path), "--out", str(out_dir),
                    "--seed", "7", "--steps", "12", "--d-model", "16", "--d-ff", "32",
                    "--warmup", "4", "--batch-size", "4",
                ]
            )
            assert code == 0
            traces.append((out_dir / "trace.jsonl").read_bytes())
            assert (out_dir / "checkpoint.npz").exists()
            assert (out_dir / "effective_config.json").exists()
        assert traces[0] == traces[1]

    def test_usage_error_without_data(self, workdir):
        tmp, _, vocab_path = workdir
        code = main(
            ["train-toy", "--mode", "pretext", "--vocab", str(vocab_path), "--out", str(tmp / "o")]
        )
        assert code == 1


class TestAblationGrid:
    def test_single_cell_smoke(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        out = tmp / "grid.jsonl"
        code = main(
            [
                "ablation-grid", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--pu-list", "1.0", "--pn-list", "0.0", "--out", str(out),
                "--steps", "8", "--d-model", "16", "--d-ff", "32", "--warmup", "2",
                "--batch-size", "4", "--seed", "3",
            ]
        )
        assert code == 0
        rows = [json.loads(line) for line in read_lines(out)]
        assert len(rows) == 1
        assert rows[0]["pu"] == 1.0 and rows[0]["pn"] == 0.0
        assert 0.0 <= rows[0]["acc"] <= 1.0

    def test_empty_list_usage_error(self, workdir):
        tmp, corpus_path, vocab_path = workdir
        code = main(
            [
                "ablation-grid", "--corpus", str(corpus_path), "--vocab", str(vocab_path),
                "--pu-list", "", "--pn-list", "0.5", "--out", str(tmp / "g.jsonl"),
            ]
        )
        assert code == 1
