import json

import pytest

from monoglot.cli import build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    summary = json.loads(out.out) if out.out.strip() else None
    return code, summary, out.err


@pytest.fixture()
def normalized_corpus(tmp_path, fixtures_dir, capsys):
    out = tmp_path / "corpus.jsonl"
    code, summary, _ = run(capsys, "corpus", "ingest",
                           str(fixtures_dir / "pretrain_corpus.jsonl"),
                           "--output", str(out))
    assert code == 0 and summary["documents"] > 0
    return out


@pytest.fixture()
def trained_vocab(tmp_path, normalized_corpus, capsys):
    vocab = tmp_path / "vocab.txt"
    code, summary, _ = run(capsys, "tokenizer", "train", "--input",
                           str(normalized_corpus), "--vocab-size", "220",
                           "--output", str(vocab))
    # merges can exhaust before the target size on the small fixture corpus
    assert code == 0 and 5 < summary["pieces"] <= 220
    return vocab


class TestUsage:
    def test_unknown_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["frobnicate"])
        assert exc.value.code == 2

    def test_help_everywhere(self):
        parser = build_parser()
        for args in (["--help"], ["corpus", "--help"], ["corpus", "ingest", "--help"],
                     ["tokenizer", "train", "--help"], ["pretrain", "--help"],
                     ["finetune", "--help"], ["evaluate", "--help"],
                     ["report", "--help"], ["annotate", "serve", "--help"],
                     ["mlm", "sample", "--help"]):
            with pytest.raises(SystemExit) as exc:
                parser.parse_args(args)
            assert exc.value.code == 0

    def test_runtime_error_exit_1(self, capsys, tmp_path):
        code, _, err = run(capsys, "corpus", "stats", str(tmp_path / "missing.jsonl"))
        assert code == 1
        assert "missing.jsonl" in err


class TestCorpusCommands:
    def test_stats_empty_dir(self, tmp_path, capsys):
        code, summary, err = run(capsys, "corpus", "stats", str(tmp_path))
        assert code == 0
        assert summary == {"items": 0, "sentences": 0, "tokens": 0, "unique_words": 0}

    def test_ingest_then_stats(self, normalized_corpus, tmp_path, capsys):
        stats_json = tmp_path / "stats.json"
        code, summary, err = run(capsys, "corpus", "stats", str(normalized_corpus),
                                 "--output", str(stats_json))
        assert code == 0
        assert summary["items"] == 50
        assert summary["tokens"] > 0
        assert json.loads(stats_json.read_text()) == summary
        assert "items" in err  # aligned table on stderr

    def test_ingest_dedups(self, tmp_path, capsys):
        src = tmp_path / "dup.jsonl"
        rows = [{"id": "a", "text": "Waa Maxay"}, {"id": "b", "text": "waa   maxay"}]
        src.write_text("".join(json.dumps(r) + "\n" for r in rows))
        out = tmp_path / "out.jsonl"
        code, summary, _ = run(capsys, "corpus", "ingest", str(src),
                               "--output", str(out))
        assert code == 0 and summary["documents"] == 1


class TestTokenizerCommands:
    def test_encode_text(self, trained_vocab, capsys):
        code, summary, _ = run(capsys, "tokenizer", "encode", "--vocab",
                               str(trained_vocab), "--text", "dadka tagay")
        assert code == 0
        [seq] = summary["sequences"]
        assert len(seq["ids"]) >= 2
        assert all(isinstance(i, int) for i in seq["ids"])


class TestMlmCommand:
    def test_sample(self, trained_vocab, tmp_path, capsys):
        sentences = tmp_path / "sents.txt"
        sentences.write_text("dadka tagay guriga\nwararka maanta\n")
        dump = tmp_path / "batch.json"
        code, summary, _ = run(capsys, "mlm", "sample", "--vocab", str(trained_vocab),
                               "--input", str(sentences), "--max-len", "16",
                               "--seed", "3", "--output", str(dump))
        assert code == 0 and summary["sequences"] == 2
        assert dump.exists()


class TestConfigFile:
    def test_config_supplies_flags_and_flags_win(self, tmp_path, fixtures_dir, capsys):
        cfg = tmp_path / "run.json"
        out_cfg = tmp_path / "from_cfg.jsonl"
        cfg.write_text(json.dumps({"output": str(out_cfg)}))
        code, summary, _ = run(capsys, "--config", str(cfg), "corpus", "ingest",
                               str(fixtures_dir / "pretrain_corpus.jsonl"))
        assert code == 0 and out_cfg.exists()

        out_flag = tmp_path / "from_flag.jsonl"
        code, summary, _ = run(capsys, "--config", str(cfg), "corpus", "ingest",
                               str(fixtures_dir / "pretrain_corpus.jsonl"),
                               "--output", str(out_flag))
        assert code == 0 and out_flag.exists()
        assert summary["output"] == str(out_flag)


class TestPipelineCommands:
    """Small-scale runs of pretrain/finetune/evaluate/report wiring."""

    def test_pretrain_finetune_evaluate_report(self, tmp_path, fixtures_dir,
                                               normalized_corpus, trained_vocab,
                                               capsys):
        ckpt = tmp_path / "base.ckpt"
        log = tmp_path / "train.log.jsonl"
        code, summary, _ = run(
            capsys, "pretrain", "--corpus", str(normalized_corpus),
            "--vocab", str(trained_vocab), "--output", str(ckpt),
            "--steps", "5", "--batch-size", "4", "--max-len", "16",
            "--hidden-dim", "32", "--layers", "1", "--heads", "2", "--ff-dim", "64",
            "--seed", "1", "--log", str(log))
        assert code == 0 and summary["steps"] == 5
        assert len(log.read_text().splitlines()) >= 1

        task_ckpt = tmp_path / "fake.ckpt"
        code, summary, _ = run(
            capsys, "finetune", "--checkpoint", str(ckpt), "--vocab", str(trained_vocab),
            "--train", str(fixtures_dir / "binary_separable.jsonl"),
            "--val", str(fixtures_dir / "binary_separable.jsonl"),
            "--task", "binary", "--labels", "fake,real",
            "--epochs", "2", "--max-len", "12", "--output", str(task_ckpt))
        assert code == 0 and summary["epochs_run"] == 2

        metrics_json = tmp_path / "metrics.json"
        code, summary, _ = run(
            capsys, "evaluate", "--model", str(task_ckpt), "--vocab", str(trained_vocab),
            "--data", str(fixtures_dir / "binary_separable.jsonl"),
            "--max-len", "12", "--output", str(metrics_json))
        assert code == 0
        assert 0.0 <= summary["accuracy"] <= 1.0
        assert json.loads(metrics_json.read_text())["examples"] == 32

        scores = tmp_path / "scores.json"
        scores.write_text(json.dumps({
            "columns": ["news", "toxicity-b", "toxicity-m", "fakenews"],
            "models": {
                "ours": {"size": "126 M", "tasks": {
                    "news": 94.17, "toxicity-b": 84.0,
                    "toxicity-m": 78.80, "fakenews": 95.0}},
            },
        }))
        report_md = tmp_path / "report.md"
        code, summary, _ = run(capsys, "report", "--scores", str(scores),
                               "--format", "markdown", "--output", str(report_md))
        assert code == 0
        assert "87.99" in report_md.read_text()

    def test_evaluate_fingerprint_mismatch_nonzero(self, tmp_path, fixtures_dir,
                                                   normalized_corpus, trained_vocab,
                                                   capsys):
        ckpt = tmp_path / "base.ckpt"
        run(capsys, "pretrain", "--corpus", str(normalized_corpus),
            "--vocab", str(trained_vocab), "--output", str(ckpt),
            "--steps", "0", "--max-len", "16", "--hidden-dim", "32",
            "--layers", "1", "--heads", "2", "--ff-dim", "64")
        task_ckpt = tmp_path / "task.ckpt"
        run(capsys, "finetune", "--checkpoint", str(ckpt), "--vocab", str(trained_vocab),
            "--train", str(fixtures_dir / "binary_separable.jsonl"),
            "--task", "binary", "--labels", "fake,real", "--epochs", "0",
            "--max-len", "12", "--output", str(task_ckpt))

        other_vocab = tmp_path / "other_vocab.txt"
        other_vocab.write_text("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nq\n##q\n")
        code, _, err = run(capsys, "evaluate", "--model", str(task_ckpt),
                           "--vocab", str(other_vocab),
                           "--data", str(fixtures_dir / "binary_separable.jsonl"))
        assert code == 1
        assert "fingerprint" in err


class TestAnnotateCommands:
    def seed_log(self, tmp_path, fixtures_dir):
        from monoglot.annotation.campaign import AnnotationRecord, load_campaign

        log = tmp_path / "records.jsonl"
        c = load_campaign(fixtures_dir / "campaign_items.jsonl", ["a", "b"], log)
        for k in range(10):
            c.submit_label(AnnotationRecord(f"fn-{k:03d}", "a", "fake"))
            c.submit_label(AnnotationRecord(
                f"fn-{k:03d}", "b", "fake" if k < 8 else "real"))
        return log

    def test_resolve_and_export(self, tmp_path, fixtures_dir, capsys):
        log = self.seed_log(tmp_path, fixtures_dir)
        code, summary, _ = run(capsys, "annotate", "resolve",
                               "--items", str(fixtures_dir / "campaign_items.jsonl"),
                               "--annotators", "a,b", "--log", str(log))
        assert code == 0
        assert summary["summary"] == {"retained": 8, "discarded": 2, "incomplete": 0}

        outdir = tmp_path / "exports"
        code, summary, _ = run(capsys, "annotate", "export",
                               "--items", str(fixtures_dir / "campaign_items.jsonl"),
                               "--annotators", "a,b", "--log", str(log),
                               "--task", "fakenews", "--output", str(outdir))
        assert code == 0
        rows = (outdir / "fakenews_binary.jsonl").read_text().splitlines()
        assert len(rows) == 8
