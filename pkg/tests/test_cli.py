import json
import subprocess
import sys

import pytest

from samlm.cli import build_parser, main
from samlm.corpus import write_jsonl

import synth


@pytest.fixture(scope="module")
def corpus_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    docs = synth.two_author_corpus(120, seed=4, stop_prob=1 / 3)
    docs = [d for d in docs]
    write_jsonl(docs[:90], root / "train.jsonl")
    write_jsonl(docs[90:110], root / "valid.jsonl")
    write_jsonl(docs[110:], root / "test.jsonl")
    return root


@pytest.fixture(scope="module")
def trained_run(corpus_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(
        [
            "train",
            "--train", str(corpus_files / "train.jsonl"),
            "--valid", str(corpus_files / "valid.jsonl"),
            "--variant", "SAM-Au-Att",
            "--d", "12",
            "--dtilde", "6",
            "--max-epochs", "3",
            "--out", str(out),
        ]
    )
    assert code == 0
    return out


class TestUsage:
    def test_no_command_prints_help(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().out.lower()

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as err:
            main(["eval", "--nonsense"])
        assert err.value.code == 1

    def test_unknown_command_exits_one(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 1

    def test_every_subcommand_documents_flags(self, capsys):
        parser = build_parser()
        for command in (
            "ingest", "lda-label", "train", "eval", "word-delta",
            "ngram", "generate", "vary", "export-attn", "gradcheck",
        ):
            with pytest.raises(SystemExit) as err:
                parser.parse_args([command, "--help"])
            assert err.value.code == 0
            out = capsys.readouterr().out
            assert "--seed" in out and "--out" in out

    def test_runtime_error_exits_two(self, tmp_path, capsys):
        code = main(["ingest", "--data", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestPipeline:
    def test_ingest_writes_artifacts(self, corpus_files, tmp_path):
        code = main(["ingest", "--data", str(corpus_files / "train.jsonl"), "--out", str(tmp_path)])
        assert code == 0
        vocab_lines = (tmp_path / "vocab.txt").read_text().splitlines()
        assert vocab_lines[:3] == ["<unk>", "<eos>", "<pad>"]
        assert (tmp_path / "authors.txt").read_text().splitlines()[0] == "<unk>"
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["documents"] == 90

    def test_train_writes_run_dir(self, trained_run):
        for name in ("best.ckpt", "last.ckpt", "history.csv", "vocab.txt", "authors.txt", "categories.txt"):
            assert (trained_run / name).exists(), name

    def test_eval_idempotent(self, corpus_files, trained_run, tmp_path):
        args = [
            "eval",
            "--model", str(trained_run / "best.ckpt"),
            "--data", str(corpus_files / "test.jsonl"),
            "--out", str(tmp_path),
        ]
        assert main(args) == 0
        first = (tmp_path / "perplexity.csv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "perplexity.csv").read_bytes() == first
        assert first.decode().startswith("model_id,")

    def test_word_delta(self, corpus_files, trained_run, tmp_path):
        code = main(
            [
                "word-delta",
                "--model-a", str(trained_run / "best.ckpt"),
                "--model-b", str(trained_run / "best.ckpt"),
                "--data", str(corpus_files / "test.jsonl"),
                "--min-word-count", "1",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        body = (tmp_path / "word_delta.csv").read_text().splitlines()[1:]
        assert body and all(",alike," in line for line in body)

    def test_ngram(self, corpus_files, tmp_path):
        code = main(
            [
                "ngram",
                "--train", str(corpus_files / "train.jsonl"),
                "--data", str(corpus_files / "test.jsonl"),
                "--order", "3",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        assert (tmp_path / "kn3.counts").exists()
        assert (tmp_path / "ngram_perplexity.csv").read_text().startswith("model_id,")

    def test_generate_writes_json_payload(self, trained_run, tmp_path):
        code = main(
            [
                "generate",
                "--model", str(trained_run / "best.ckpt"),
                "--author", "alice",
                "--max-len", "8",
                "--seed", "3",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        payload = json.loads((tmp_path / "generation.json").read_text())
        assert set(payload) == {"tokens", "probabilities", "warnings", "attention_csv_path"}
        assert len(payload["tokens"]) <= 8
        assert payload["attention_csv_path"] is not None

    def test_generate_deterministic_rerun(self, trained_run, tmp_path):
        args = [
            "generate",
            "--model", str(trained_run / "best.ckpt"),
            "--author", "bob",
            "--max-len", "6",
            "--seed", "9",
            "--out", str(tmp_path),
        ]
        assert main(args) == 0
        first = (tmp_path / "generation.json").read_bytes()
        assert main(args) == 0
        assert first == (tmp_path / "generation.json").read_bytes()

    def test_vary(self, trained_run, tmp_path):
        code = main(
            [
                "vary",
                "--model", str(trained_run / "best.ckpt"),
                "--author", "alice",
                "--fake-author", "bob",
                "--seed", "7",
                "--max-len", "10",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        payload = json.loads((tmp_path / "variation.json").read_text())
        assert payload["divergence"] >= 0.0
        assert set(payload["original"]) == {"tokens", "warnings"}

    def test_export_attn(self, corpus_files, trained_run, tmp_path):
        docs = json.loads((corpus_files / "test.jsonl").read_text().splitlines()[0])
        code = main(
            [
                "export-attn",
                "--model", str(trained_run / "best.ckpt"),
                "--data", str(corpus_files / "test.jsonl"),
                "--doc-id", docs["id"],
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        files = list(tmp_path.glob("attention_*.csv"))
        assert files and files[0].read_text().startswith(",")

    def test_lda_label(self, tmp_path):
        docs, _ = synth.planted_topic_corpus(2, docs_per_topic=8, doc_len=20, seed=5)
        src = tmp_path / "unlabeled.jsonl"
        write_jsonl(docs, src)
        out = tmp_path / "lda"
        code = main(
            [
                "lda-label",
                "--data", str(src),
                "--topics", "2",
                "--iterations", "30",
                "--out", str(out),
            ]
        )
        assert code == 0
        labeled = [json.loads(line) for line in (out / "labeled.jsonl").read_text().splitlines()]
        assert all(rec["category"].startswith("topic-") for rec in labeled)
        assert (out / "topic_words.txt").read_text().startswith("topic-0:")

    def test_gradcheck_command(self, capsys):
        assert main(["gradcheck", "--dims", "tiny"]) == 0
        out = capsys.readouterr().out
        assert "SAM-Title-State-Au-Att" in out and "PASS" in out

    def test_config_file_with_flag_override(self, corpus_files, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"order": 4, "out": str(tmp_path / "from-config")}))
        code = main(
            [
                "ngram",
                "--config", str(config),
                "--train", str(corpus_files / "train.jsonl"),
                "--data", str(corpus_files / "test.jsonl"),
                "--order", "2",
                "--out", str(tmp_path / "flags-win"),
            ]
        )
        assert code == 0
        assert (tmp_path / "flags-win" / "kn2.counts").exists()

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "samlm.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "samlm" in proc.stdout
