"""Command-line surface tests: each subcommand run in-process via main()."""

from __future__ import annotations

import json

import pytest

from spellkit.cli import main
from spellkit.corpus import load_pairs
from spellkit.noise import NoiseSpec
from spellkit.synth import make_corpus
from spellkit.tokenizer import TokenizerModel


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def write_eval_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


class TestMakeCorpus:
    def test_writes_requested_sentences(self, tmp_path, capsys):
        out = tmp_path / "zxa.txt"
        assert run_cli("make-corpus", "--language", "zxa", "--sentences", 12,
                       "--seed", 3, "--output", out) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 12
        assert "wrote 12 sentences" in capsys.readouterr().out

    def test_same_seed_same_corpus(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        run_cli("make-corpus", "--language", "zxb", "--sentences", 5, "--seed", 9,
                "--output", a)
        run_cli("make-corpus", "--language", "zxb", "--sentences", 5, "--seed", 9,
                "--output", b)
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_language_rejected(self, tmp_path):
        with pytest.raises(SystemExit):
            run_cli("make-corpus", "--language", "qqq", "--output", tmp_path / "x.txt")


class TestInjectNoise:
    @pytest.fixture()
    def clean(self, tmp_path):
        path = tmp_path / "clean.txt"
        path.write_text("\n".join(make_corpus("zxa", 30, 1)) + "\n", encoding="utf-8")
        return path

    def test_train_mode_expands_by_copies(self, tmp_path, clean):
        spec = tmp_path / "spec.json"
        spec.write_text(NoiseSpec(train_copies=2).to_json(), encoding="utf-8")
        out = tmp_path / "train.jsonl"
        assert run_cli("inject-noise", "--input", clean, "--locale", "zxa",
                       "--mode", "train", "--spec", spec, "--output", out) == 0
        ds = load_pairs(out)
        assert len(ds) == 60
        assert all(str(p.locale) == "zxa" for p in ds.pairs)

    def test_eval_mode_hits_target_count(self, tmp_path, clean):
        out = tmp_path / "eval.jsonl"
        assert run_cli("inject-noise", "--input", clean, "--locale", "zxa",
                       "--mode", "eval", "--target-count", 10, "--min-words", 4,
                       "--output", out) == 0
        ds = load_pairs(out)
        assert len(ds) == 10
        assert all(p.input != p.label for p in ds.pairs)


class TestTrainTokenizer:
    def test_text_input(self, tmp_path, capsys):
        src = tmp_path / "text.txt"
        src.write_text("the cat sat\nthe dog ran\n", encoding="utf-8")
        out = tmp_path / "tok.subword"
        assert run_cli("train-tokenizer", "--input", src, "--scheme", "bbpe",
                       "--vocab-size", 280, "--output", out) == 0
        tok = TokenizerModel.load(out)
        assert tok.vocab_size <= 280
        assert "bbpe" in capsys.readouterr().out

    def test_jsonl_input_uses_both_sides(self, tmp_path):
        rows = [{"input": "teh cat", "label": "the cat", "locale": "zxa"}]
        src = write_eval_jsonl(tmp_path / "pairs.jsonl", rows)
        out = tmp_path / "tok.subword"
        assert run_cli("train-tokenizer", "--input", src, "--scheme", "bpe",
                       "--vocab-size", 40, "--output", out) == 0
        tok = TokenizerModel.load(out)
        ids = tok.encode("teh cat")
        assert tok.decode(ids).text == "teh cat"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny trained checkpoint shared by the train/distill/bench/select tests."""
    base = tmp_path_factory.mktemp("cli")
    clean = base / "clean.txt"
    clean.write_text("\n".join(make_corpus("zxa", 60, 5)) + "\n", encoding="utf-8")
    spec = base / "spec.json"
    spec.write_text(NoiseSpec(train_copies=1).to_json(), encoding="utf-8")
    pairs = base / "pairs.jsonl"
    run_cli("inject-noise", "--input", clean, "--locale", "zxa", "--mode", "train",
            "--spec", spec, "--output", pairs)
    tok = base / "tok.subword"
    run_cli("train-tokenizer", "--input", pairs, "--scheme", "bbpe",
            "--vocab-size", 300, "--output", tok)
    ckpt = base / "model.ckpt"
    code = run_cli("train", "--data", pairs, "--tokenizer", tok, "--output", ckpt,
                   "--preset", "desk_student", "--encoder-layers", 1,
                   "--decoder-layers", 1, "--model-dim", 16, "--heads", 2,
                   "--ffn-dim", 32, "--epochs", 1, "--batch-size", 16,
                   "--warmup-steps", 10, "--seed", 1)
    assert code == 0
    return base, clean, tok, ckpt


class TestModelCommands:
    def test_train_writes_checkpoint(self, trained):
        _, _, _, ckpt = trained
        assert ckpt.is_file() and ckpt.stat().st_size > 0

    def test_distill_generate_labels_every_line(self, trained, tmp_path, capsys):
        base, clean, _, ckpt = trained
        out = tmp_path / "labeled.jsonl"
        assert run_cli("distill-generate", "--checkpoint", ckpt, "--input", clean,
                       "--locale", "zxa", "--output", out) == 0
        ds = load_pairs(out)
        assert len(ds) == 60
        inputs = [ln for ln in clean.read_text(encoding="utf-8").splitlines() if ln]
        assert [p.input for p in ds.pairs] == inputs
        assert "labeled 60 inputs" in capsys.readouterr().out

    def test_bench_reports_and_dumps_samples(self, trained, tmp_path, capsys):
        base, clean, _, ckpt = trained
        csv = tmp_path / "lat.csv"
        assert run_cli("bench", "--checkpoint", ckpt, "--inputs", clean,
                       "--requests", 6, "--warmup", 2, "--concurrency", 2,
                       "--timeout-ms", 30000, "--samples-csv", csv) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_samples"] == 4
        lines = csv.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "latency_s"
        assert len(lines) == 5

    def test_select_best_prefers_monolingual_on_ties(self, trained, tmp_path, capsys):
        base, clean, tok, ckpt = trained
        dev = tmp_path / "dev.jsonl"
        run_cli("inject-noise", "--input", clean, "--locale", "zxa", "--mode", "eval",
                "--target-count", 8, "--min-words", 4, "--output", dev)
        # identical checkpoints tie exactly, so kind must break the tie
        manifest = tmp_path / "cands.json"
        manifest.write_text(json.dumps({
            "zxa": {
                "dev": str(dev),
                "candidates": [
                    {"checkpoint": str(ckpt), "kind": "multilingual", "name": "big"},
                    {"checkpoint": str(ckpt), "kind": "monolingual", "name": "small"},
                ],
            }
        }), encoding="utf-8")
        out = tmp_path / "selection.json"
        assert run_cli("select-best", "--candidates", manifest, "--output", out) == 0
        chosen = json.loads(out.read_text(encoding="utf-8"))
        assert chosen["zxa"]["chosen"] == "small"
        assert chosen["zxa"]["kind"] == "monolingual"
        assert 0.0 <= chosen["zxa"]["dev_f1"] <= 1.0


GOLD_ROWS = [
    {"input": "aa bb", "output": "aa cc", "locale": "fr"},
    {"input": "dd ee", "output": "dd ff", "locale": "fr"},
    {"input": "gg hh", "output": "gg ii", "locale": "fr"},
    {"input": "jj kk", "output": "jj kk", "locale": "de"},
    {"input": "ll mm", "output": "ll mm", "locale": "de"},
]
SYS_ROWS = [
    {"input": "aa bb", "output": "aa cc"},   # AUTO, matches gold
    {"input": "dd ee", "output": "dd ee"},   # NONE, missed correction
    {"input": "gg hh", "output": "gg hh"},   # NONE, missed correction
    {"input": "jj kk", "output": "jj zz"},   # AUTO, false fire
    {"input": "ll mm", "output": "ll mm"},   # NONE, correct inaction
]


class TestEvaluate:
    def test_hand_counted_scores(self, tmp_path, capsys):
        gold = write_eval_jsonl(tmp_path / "gold.jsonl", GOLD_ROWS)
        system = write_eval_jsonl(tmp_path / "sys.jsonl", SYS_ROWS)
        assert run_cli("evaluate", "--system", system, "--gold", gold) == 0
        report = json.loads(capsys.readouterr().out)
        # system fires on 2 (1 right), gold has 3 corrections
        assert report["n_sys_auto"] == 2
        assert report["n_gold_auto"] == 3
        assert report["n_match"] == 1
        assert report["precision"] == 0.5
        assert report["recall"] == pytest.approx(1 / 3)
        assert report["f1"] == pytest.approx(0.4)

    def test_per_locale_breakdown(self, tmp_path, capsys):
        gold = write_eval_jsonl(tmp_path / "gold.jsonl", GOLD_ROWS)
        system = write_eval_jsonl(tmp_path / "sys.jsonl", SYS_ROWS)
        run_cli("evaluate", "--system", system, "--gold", gold)
        report = json.loads(capsys.readouterr().out)
        by = report["by_locale"]
        assert sorted(by) == ["de", "fr"]
        assert by["fr"]["precision"] == 1.0
        assert by["fr"]["recall"] == pytest.approx(1 / 3)
        assert "no_gold_auto" in by["de"]["degenerate_flags"]

    def test_row_count_mismatch_rejected(self, tmp_path):
        gold = write_eval_jsonl(tmp_path / "gold.jsonl", GOLD_ROWS)
        system = write_eval_jsonl(tmp_path / "sys.jsonl", SYS_ROWS[:3])
        with pytest.raises(ValueError, match="mismatch"):
            run_cli("evaluate", "--system", system, "--gold", gold)

    def test_differing_inputs_rejected(self, tmp_path):
        gold = write_eval_jsonl(tmp_path / "gold.jsonl", GOLD_ROWS[:1])
        system = write_eval_jsonl(tmp_path / "sys.jsonl",
                                  [{"input": "other", "output": "other"}])
        with pytest.raises(ValueError, match="inputs differ"):
            run_cli("evaluate", "--system", system, "--gold", gold)

    def test_missing_keys_rejected(self, tmp_path):
        gold = write_eval_jsonl(tmp_path / "gold.jsonl", [{"input": "aa bb"}])
        with pytest.raises(ValueError, match="output"):
            run_cli("evaluate", "--system", gold, "--gold", gold)


class TestPipelineCommand:
    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        corpus = tmp_path / "zxa.txt"
        corpus.write_text("\n".join(make_corpus("zxa", 5, 1)) + "\n", encoding="utf-8")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "locales": ["zxa"], "corpora": {"zxa": str(corpus)},
        }), encoding="utf-8")
        code = run_cli("pipeline", "--config", cfg, "--run-dir", tmp_path / "run")
        assert code == 1
        assert "failed at stage 'corpora'" in capsys.readouterr().err

    def test_tiny_run_prints_variant_means(self, tmp_path, capsys):
        corpus = tmp_path / "zxa.txt"
        corpus.write_text("\n".join(make_corpus("zxa", 160, 2)) + "\n", encoding="utf-8")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "locales": ["zxa"],
            "corpora": {"zxa": str(corpus)},
            "dev_sentences": 30, "test_sentences": 30,
            "dev_count": 15, "eval_count": 15, "min_words": 4,
            "teacher_copies": 1, "distill_copies": 1,
            "mono_vocab": 290, "multi_vocab": 290, "student_vocab": 290,
            "teacher_model": {"encoder_layers": 1, "decoder_layers": 1,
                              "model_dim": 24, "heads": 2, "ffn_dim": 48},
            "student_model": {"encoder_layers": 1, "decoder_layers": 1,
                              "model_dim": 16, "heads": 2, "ffn_dim": 32},
            "teacher_train": {"epochs": 1, "batch_size": 32,
                              "learning_rate": 3e-3, "warmup_steps": 10},
            "student_train": {"epochs": 1, "batch_size": 32,
                              "learning_rate": 3e-3, "warmup_steps": 10},
            "student_seeds": [1],
        }), encoding="utf-8")
        run_dir = tmp_path / "run"
        assert run_cli("pipeline", "--config", cfg, "--run-dir", run_dir) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["run_dir"] == str(run_dir)
        assert sorted(out["variant_mean_f1_pct"]) == [
            "best_teacher", "matched_monolingual", "single_multilingual"
        ]
        assert (run_dir / "report.json").is_file()
