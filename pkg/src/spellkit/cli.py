"""Command-line entry points.

Each subcommand delegates to one module; `pipeline` chains them all under a
run directory. Exit code 0 means every requested stage succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import Dataset, Locale, Manifest, load_pairs, save_pairs
from .distill import TeacherEntry, select_best_teacher, MONOLINGUAL, MULTILINGUAL
from .evaluation import judge, score
from . import bench as bench_mod
from .model import TrainConfig, decode_greedy, load_checkpoint, save_checkpoint, train
from .model.core import ModelConfig, desk_student, desk_teacher
from .noise import NoiseSpec, build_alphabet, generate_eval, generate_training
from .pipeline import PipelineError, load_config, run_pipeline
from .synth import SCRIPTS, make_corpus
from .tokenizer import TokenizerModel, train_subword


def _read_lines(path: str) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def cmd_make_corpus(args) -> int:
    sentences = make_corpus(args.language, args.sentences, args.seed)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    Path(args.output).write_text("\n".join(sentences) + "\n", encoding="utf-8")
    print(f"wrote {len(sentences)} sentences to {args.output}")
    return 0


def cmd_inject_noise(args) -> int:
    spec = NoiseSpec.from_json(Path(args.spec).read_text(encoding="utf-8")) if args.spec else NoiseSpec()
    if args.seed is not None:
        import dataclasses

        spec = dataclasses.replace(spec, seed=args.seed)
    sentences = _read_lines(args.input)
    alphabet = build_alphabet(sentences)
    locale = Locale.parse(args.locale)
    if args.mode == "train":
        ds = generate_training(sentences, spec, alphabet, locale)
    else:
        ds = generate_eval(sentences, spec, alphabet, locale, args.target_count, args.min_words)
    save_pairs(ds, args.output)
    print(f"wrote {len(ds)} pairs to {args.output}")
    return 0


def cmd_train_tokenizer(args) -> int:
    corpus: list[str] = []
    for path in args.input:
        if path.endswith(".jsonl"):
            ds = load_pairs(path)
            corpus.extend(p.input for p in ds.pairs)
            corpus.extend(p.label for p in ds.pairs)
        else:
            corpus.extend(_read_lines(path))
    model = train_subword(corpus, args.scheme, args.vocab_size)
    model.save(args.output)
    print(f"trained {args.scheme} vocab {model.vocab_size} -> {args.output}")
    return 0


def _model_config_from_args(args, vocab_size: int) -> ModelConfig:
    base = desk_student(vocab_size) if args.preset == "desk_student" else desk_teacher(vocab_size)
    d = base.to_dict()
    for name in ("encoder_layers", "decoder_layers", "model_dim", "heads", "ffn_dim", "max_positions"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    return ModelConfig.from_dict(d)


def cmd_train(args) -> int:
    tok = TokenizerModel.load(args.tokenizer)
    data = load_pairs(args.data)
    mcfg = _model_config_from_args(args, tok.vocab_size)
    tcfg = TrainConfig(
        learning_rate=args.learning_rate,
        warmup_steps=args.warmup_steps,
        batch_size=args.batch_size,
        epochs=args.epochs,
        label_smoothing=args.label_smoothing,
        seed=args.seed,
    )
    ckpt = train(data, tok, mcfg, tcfg)
    save_checkpoint(ckpt, args.output, args.tokenizer)
    losses = ", ".join(f"{l:.4f}" for l in ckpt.losses)
    print(f"trained {ckpt.step} steps (epoch losses: {losses}) -> {args.output}")
    return 0


def cmd_distill_generate(args) -> int:
    ckpt, _ = load_checkpoint(args.checkpoint, args.tokenizer)
    locale = Locale.parse(args.locale)
    inputs = _read_lines(args.input)
    from .distill import generate_labels

    ds, stats = generate_labels(ckpt, [(t, locale) for t in inputs])
    save_pairs(ds, args.output)
    print(f"labeled {stats['n']} inputs ({stats['unusable_output_fallbacks']} fallbacks) -> {args.output}")
    return 0


def cmd_select_best(args) -> int:
    candidates: dict = {}
    dev: dict = {}
    manifest = json.loads(Path(args.candidates).read_text(encoding="utf-8"))
    # manifest: {locale: {"dev": path, "candidates": [{"checkpoint":..., "tokenizer":..., "kind":...}]}}
    for code, entry in sorted(manifest.items()):
        locale = Locale.parse(code)
        dev[locale] = load_pairs(entry["dev"])
        cands = []
        for c in entry["candidates"]:
            ckpt, _ = load_checkpoint(c["checkpoint"], c.get("tokenizer"))
            kind = c.get("kind", MONOLINGUAL)
            if kind not in (MONOLINGUAL, MULTILINGUAL):
                raise ValueError(f"bad kind {kind!r} for {code}")
            cands.append(TeacherEntry(locale, ckpt, kind, c.get("name", c["checkpoint"])))
        candidates[locale] = cands
    registry = select_best_teacher(candidates, dev)
    out = {
        str(loc): {"chosen": registry[loc].name, "kind": registry[loc].kind,
                   "dev_f1": registry[loc].dev_f1}
        for loc in registry.locales()
    }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _load_eval_rows(path: str) -> list[dict]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "input" not in obj or "output" not in obj:
            raise ValueError(f"{path}: line {lineno} needs 'input' and 'output' keys")
        rows.append(obj)
    return rows


def cmd_evaluate(args) -> int:
    sys_rows = _load_eval_rows(args.system)
    gold_rows = _load_eval_rows(args.gold)
    if len(sys_rows) != len(gold_rows):
        raise ValueError(f"row count mismatch: {len(sys_rows)} system vs {len(gold_rows)} gold")
    for i, (s, g) in enumerate(zip(sys_rows, gold_rows)):
        if s["input"] != g["input"]:
            raise ValueError(f"row {i}: system and gold inputs differ")
    system = [judge(r["input"], r["output"], args.fold_case) for r in sys_rows]
    gold = [judge(r["input"], r["output"], args.fold_case) for r in gold_rows]
    report = score(system, gold, args.fold_case).to_dict()
    locales = [r.get("locale") for r in gold_rows]
    if any(locales):
        by_locale = {}
        for code in sorted({l for l in locales if l}):
            idx = [i for i, l in enumerate(locales) if l == code]
            by_locale[code] = score(
                [system[i] for i in idx], [gold[i] for i in idx], args.fold_case
            ).to_dict()
        report["by_locale"] = by_locale
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_bench(args) -> int:
    ckpt, _ = load_checkpoint(args.checkpoint, args.tokenizer)
    inputs = _read_lines(args.inputs)
    profile = bench_mod.LoadProfile(
        total_requests=args.requests,
        concurrency=args.concurrency,
        timeout_s=args.timeout_ms / 1000.0,
        warmup_requests=args.warmup,
    )
    fn = lambda text: decode_greedy(ckpt, text).text
    report = bench_mod.run_load(fn, profile, inputs)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.samples_csv:
        lines = ["latency_s"] + [f"{s:.9f}" for s in report.samples]
        Path(args.samples_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    try:
        report = run_pipeline(cfg, args.run_dir)
    except PipelineError as e:
        print(f"pipeline failed at stage {e.stage!r}: {e.cause}", file=sys.stderr)
        return 1
    means = {
        variant: data["mean_over_seeds"]["mean"]
        for variant, data in report.get("variants", {}).items()
    }
    print(json.dumps({"run_dir": str(args.run_dir), "variant_mean_f1_pct": means}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spellkit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="generate a toy-language corpus")
    p.add_argument("--language", required=True, choices=sorted(SCRIPTS))
    p.add_argument("--sentences", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_make_corpus)

    p = sub.add_parser("inject-noise", help="corrupt clean sentences into <noised, clean> pairs")
    p.add_argument("--input", required=True, help="text file, one sentence per line")
    p.add_argument("--locale", required=True)
    p.add_argument("--output", required=True, help="output JSONL path")
    p.add_argument("--mode", choices=["train", "eval"], default="train")
    p.add_argument("--spec", help="NoiseSpec JSON file (defaults to the standard spec)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target-count", type=int, default=1000, dest="target_count")
    p.add_argument("--min-words", type=int, default=6, dest="min_words")
    p.set_defaults(fn=cmd_inject_noise)

    p = sub.add_parser("train-tokenizer", help="learn a subword vocabulary")
    p.add_argument("--input", nargs="+", required=True, help="text or JSONL files")
    p.add_argument("--scheme", choices=["bpe", "bbpe"], required=True)
    p.add_argument("--vocab-size", type=int, required=True, dest="vocab_size")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_train_tokenizer)

    p = sub.add_parser("train", help="train a correction model")
    p.add_argument("--data", required=True, help="JSONL pair file")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--preset", choices=["desk_teacher", "desk_student"], default="desk_teacher")
    p.add_argument("--encoder-layers", type=int, dest="encoder_layers")
    p.add_argument("--decoder-layers", type=int, dest="decoder_layers")
    p.add_argument("--model-dim", type=int, dest="model_dim")
    p.add_argument("--heads", type=int)
    p.add_argument("--ffn-dim", type=int, dest="ffn_dim")
    p.add_argument("--max-positions", type=int, dest="max_positions")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    p.add_argument("--learning-rate", type=float, default=3e-3, dest="learning_rate")
    p.add_argument("--warmup-steps", type=int, default=200, dest="warmup_steps")
    p.add_argument("--label-smoothing", type=float, default=0.0, dest="label_smoothing")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("distill-generate", help="teacher-label a corpus (Seq-KD)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokenizer", help="override the checkpoint's tokenizer path")
    p.add_argument("--input", required=True, help="text file of inputs, one per line")
    p.add_argument("--locale", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_distill_generate)

    p = sub.add_parser("select-best", help="pick the best teacher per locale by dev F1")
    p.add_argument("--candidates", required=True,
                   help="JSON manifest: locale -> {dev, candidates:[{checkpoint, tokenizer, kind}]}")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_select_best)

    p = sub.add_parser("evaluate", help="exact-match P/R/F1 of system vs gold")
    p.add_argument("--system", required=True, help="JSONL rows {input, output}")
    p.add_argument("--gold", required=True, help="JSONL rows {input, output, locale?}")
    p.add_argument("--fold-case", action="store_true", dest="fold_case")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="latency/throughput of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokenizer")
    p.add_argument("--inputs", required=True, help="text file, one input per line")
    p.add_argument("--requests", type=int, default=100)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--timeout-ms", type=float, default=10000.0, dest="timeout_ms")
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--samples-csv", dest="samples_csv")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("pipeline", help="run the full experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", required=True, dest="run_dir")
    p.set_defaults(fn=cmd_pipeline)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
