"""End-to-end experiment runner.

Stages: corpora -> noise -> tokenizers -> teachers -> selection -> labels ->
students -> optional language addition -> optional bench -> report. Every
random draw derives from the config's root seed through named substreams, so
a rerun with the same config produces a byte-identical report.json. Wall
clock measurements (bench, stage timings) never enter report.json; they go
to bench.json and run.log.

A stage failure raises PipelineError carrying the stage name; artifacts
written by earlier stages stay on disk.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bench as bench_mod
from .corpus import Dataset, Locale, Manifest, save_pairs
from .distill import (
    MONOLINGUAL,
    MULTILINGUAL,
    DistillPlan,
    TeacherEntry,
    TeacherRegistry,
    VARIANTS,
    add_language,
    assemble_student_data,
    select_best_teacher,
    tag_input,
    write_provenance,
)
from .evaluation import judge, score
from .model import (
    ModelConfig,
    TrainConfig,
    decode_greedy,
    decode_greedy_batch,
    desk_student,
    desk_teacher,
    save_checkpoint,
    train,
)
from .noise import NoiseSpec, build_alphabet, generate_eval, generate_training
from .seeds import derive_seed, rng_for
from .tokenizer import train_subword

DEFAULT_CONFIG = {
    "root_seed": 0,
    "locales": [],
    "corpora": {},
    "noise": NoiseSpec().to_dict(),
    "dev_sentences": 250,
    "test_sentences": 250,
    "dev_count": 200,
    "eval_count": 200,
    "min_words": 6,
    "teacher_copies": 8,
    "distill_copies": 2,
    "mono_vocab": 512,
    "multi_vocab": 1024,
    "student_vocab": 1024,
    "teacher_model": {},
    "student_model": {},
    "teacher_train": {"epochs": 2, "batch_size": 64, "learning_rate": 3e-3, "warmup_steps": 150},
    "multi_teacher_train": None,
    "student_train": {"epochs": 2, "batch_size": 64, "learning_rate": 3e-3, "warmup_steps": 150},
    "variants": list(VARIANTS),
    "student_seeds": [1, 2, 3],
    "decode_batch": 96,
    "add_languages": None,
    "bench": None,
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def load_config(path: str | Path) -> dict:
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    merged = dict(DEFAULT_CONFIG)
    merged.update(cfg)
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if not merged["locales"]:
        raise ValueError("config needs at least one locale")
    if set(merged["corpora"]) != set(merged["locales"]):
        raise ValueError("corpora keys must match locales exactly")
    for locale, path in merged["corpora"].items():
        if not Path(path).is_file():
            raise ValueError(f"corpus for {locale} not found: {path}")
    for v in merged["variants"]:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    add = merged["add_languages"]
    if add:
        overlap = set(add["locales"]) & set(merged["locales"])
        if overlap:
            raise ValueError(f"add_languages locales already present: {sorted(overlap)}")
        for locale in add["locales"]:
            path = add["corpora"][locale]
            if not Path(path).is_file():
                raise ValueError(f"corpus for added locale {locale} not found: {path}")
        if "best_teacher" not in merged["variants"]:
            raise ValueError("add_languages extends the best_teacher variant; enable it")
    if not merged["student_seeds"]:
        raise ValueError("student_seeds must be non-empty")
    return merged


class CachedCorrector:
    """Batch-memoized greedy decoding for one checkpoint.

    Exposes `correct_many` so distillation batches stay batched, while the
    cache lets several plan variants share one teacher's labels without
    re-decoding.
    """

    def __init__(self, ckpt, batch_size: int = 96):
        self.ckpt = ckpt
        self.batch_size = batch_size
        self.cache: dict[str, str] = {}

    def correct_many(self, texts: Sequence[str]) -> list[str]:
        missing = [t for t in dict.fromkeys(texts) if t not in self.cache]
        if missing:
            results = decode_greedy_batch(self.ckpt, missing, batch_size=self.batch_size)
            for t, r in zip(missing, results):
                self.cache[t] = r.text
        return [self.cache[t] for t in texts]

    def __call__(self, text: str) -> str:
        return self.correct_many([text])[0]


def _model_config(base: ModelConfig, overrides: dict, vocab_size: int) -> ModelConfig:
    d = base.to_dict()
    d.update(overrides or {})
    d["vocab_size"] = vocab_size
    return ModelConfig.from_dict(d)


def _train_config(overrides: dict, seed: int) -> TrainConfig:
    d = dict(overrides or {})
    d["seed"] = seed
    return TrainConfig(**d)


def _f1_pct(system_pairs, outputs, fold_case: bool = False) -> float:
    system = [judge(p.input, out) for p, out in zip(system_pairs, outputs)]
    gold = [judge(p.input, p.label) for p in system_pairs]
    return 100.0 * score(system, gold, fold_case).f1


def _strip_tag(text: str) -> str:
    # student pairs store "<locale> raw"; evaluation needs the raw input
    if text.startswith("<"):
        close = text.find("> ")
        if close != -1:
            return text[close + 2 :]
    return text


class _Run:
    """Mutable state threaded through the stages."""

    def __init__(self, cfg: dict, run_dir: Path):
        self.cfg = cfg
        self.dir = run_dir
        self.noise_specs: dict[str, NoiseSpec] = {}
        self.sentences: dict[str, dict[str, list[str]]] = {}
        self.teacher_data: dict[str, Dataset] = {}
        self.distill_inputs: dict[str, list[str]] = {}
        self.dev: dict[Locale, Dataset] = {}
        self.test: dict[str, Dataset] = {}
        self.tokenizers: dict[str, object] = {}
        self.tokenizer_paths: dict[str, Path] = {}
        self.teachers: dict[str, object] = {}
        self.correctors: dict[str, CachedCorrector] = {}
        self.registry: TeacherRegistry | None = None
        self.selection: dict = {}
        self.variant_data: dict[str, Dataset] = {}
        self.students: dict[tuple[str, int], object] = {}
        self.report: dict = {}
        self.log_lines: list[str] = []

    def log(self, msg: str) -> None:
        self.log_lines.append(f"[{time.strftime('%H:%M:%S')}] {msg}")


def run_pipeline(cfg: dict, run_dir: str | Path) -> dict:
    """Execute all stages; returns the report dict (also written to disk)."""
    cfg = validate_config(cfg)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    state = _Run(cfg, run_dir)
    stages: list[tuple[str, Callable[[_Run], None]]] = [
        ("corpora", _stage_corpora),
        ("noise", _stage_noise),
        ("tokenizers", _stage_tokenizers),
        ("teachers", _stage_teachers),
        ("selection", _stage_selection),
        ("labels", _stage_labels),
        ("students", _stage_students),
        ("add-languages", _stage_add_languages),
        ("bench", _stage_bench),
        ("report", _stage_report),
    ]
    for name, fn in stages:
        start = time.perf_counter()
        try:
            fn(state)
        except Exception as e:
            state.log(f"stage {name} FAILED: {e}")
            _write_log(state)
            raise PipelineError(name, e) from e
        state.log(f"stage {name} done in {time.perf_counter() - start:.1f}s")
    _write_log(state)
    return state.report


def _write_log(state: _Run) -> None:
    (state.dir / "run.log").write_text("\n".join(state.log_lines) + "\n", encoding="utf-8")


def _stage_corpora(state: _Run) -> None:
    cfg = state.cfg
    for code in cfg["locales"]:
        lines = [
            ln.strip()
            for ln in Path(cfg["corpora"][code]).read_text(encoding="utf-8").splitlines()
            if ln.strip()
        ]
        need = cfg["dev_sentences"] + cfg["test_sentences"] + 1
        if len(lines) < need:
            raise ValueError(f"{code}: corpus has {len(lines)} sentences, need at least {need}")
        rng = rng_for(cfg["root_seed"], "split", code)
        perm = rng.permutation(len(lines))
        n_test, n_dev = cfg["test_sentences"], cfg["dev_sentences"]
        test_idx = sorted(int(i) for i in perm[:n_test])
        dev_idx = sorted(int(i) for i in perm[n_test : n_test + n_dev])
        rest = set(test_idx) | set(dev_idx)
        train_idx = [i for i in range(len(lines)) if i not in rest]
        state.sentences[code] = {
            "train": [lines[i] for i in train_idx],
            "dev": [lines[i] for i in dev_idx],
            "test": [lines[i] for i in test_idx],
        }
        state.log(f"{code}: {len(train_idx)} train / {n_dev} dev / {n_test} test sentences")


def _noise_for(state: _Run, code: str) -> NoiseSpec:
    base = NoiseSpec.from_dict(state.cfg["noise"])
    return dataclasses.replace(base, seed=derive_seed(state.cfg["root_seed"], "noise", code))


def _stage_noise(state: _Run) -> None:
    cfg = state.cfg
    out = state.dir / "data"
    for code in cfg["locales"]:
        spec = _noise_for(state, code)
        state.noise_specs[code] = spec
        locale = Locale.parse(code)
        sents = state.sentences[code]
        alphabet = build_alphabet(sents["train"])
        full = generate_training(sents["train"], spec, alphabet, locale)
        copies = spec.train_copies
        keep = min(cfg["teacher_copies"], copies)
        teacher_pairs = [
            p for i, p in enumerate(full.pairs) if i % copies < keep
        ]
        state.teacher_data[code] = Dataset(teacher_pairs, Manifest(source=f"noise:{code}"))
        d_copies = min(cfg["distill_copies"], copies)
        state.distill_inputs[code] = [
            p.input for i, p in enumerate(full.pairs) if i % copies < d_copies
        ]
        state.dev[locale] = generate_eval(
            sents["dev"], spec, alphabet, locale, cfg["dev_count"], cfg["min_words"]
        )
        state.test[code] = generate_eval(
            sents["test"], spec, alphabet, locale, cfg["eval_count"], cfg["min_words"]
        )
        save_pairs(state.teacher_data[code], out / f"{code}.teacher-train.jsonl")
        save_pairs(state.dev[locale], out / f"{code}.dev.jsonl")
        save_pairs(state.test[code], out / f"{code}.test.jsonl")
        state.log(
            f"{code}: {len(teacher_pairs)} teacher pairs, "
            f"{len(state.distill_inputs[code])} distill inputs"
        )


def _stage_tokenizers(state: _Run) -> None:
    cfg = state.cfg
    tok_dir = state.dir / "tokenizers"
    multi_texts: list[str] = []
    student_texts: list[str] = []
    for code in cfg["locales"]:
        locale = Locale.parse(code)
        texts = [p.input for p in state.teacher_data[code].pairs]
        texts += [p.label for p in state.teacher_data[code].pairs]
        tok = train_subword(texts, "bbpe", cfg["mono_vocab"])
        path = tok_dir / f"mono-{code}.subword"
        tok.save(path)
        state.tokenizers[f"mono-{code}"] = tok
        state.tokenizer_paths[f"mono-{code}"] = path
        multi_texts.extend(texts)
        student_texts.extend(tag_input(p.input, locale) for p in state.teacher_data[code].pairs)
        student_texts.extend(p.label for p in state.teacher_data[code].pairs)
    multi_tok = train_subword(multi_texts, "bpe", cfg["multi_vocab"])
    multi_path = tok_dir / "multi.subword"
    multi_tok.save(multi_path)
    state.tokenizers["multi"] = multi_tok
    state.tokenizer_paths["multi"] = multi_path
    student_tok = train_subword(student_texts, "bbpe", cfg["student_vocab"])
    student_path = tok_dir / "student.subword"
    student_tok.save(student_path)
    state.tokenizers["student"] = student_tok
    state.tokenizer_paths["student"] = student_path
    state.log(
        f"tokenizers: {len(cfg['locales'])} mono (bbpe {cfg['mono_vocab']}), "
        f"multi (bpe {cfg['multi_vocab']}), student (bbpe {cfg['student_vocab']})"
    )


def _train_teacher(state: _Run, name: str, data: Dataset, tok_key: str, seed_name: tuple) -> None:
    cfg = state.cfg
    tok = state.tokenizers[tok_key]
    mcfg = _model_config(desk_teacher(tok.vocab_size), cfg["teacher_model"], tok.vocab_size)
    overrides = cfg["teacher_train"]
    if name == "multi" and cfg["multi_teacher_train"]:
        overrides = cfg["multi_teacher_train"]
    tcfg = _train_config(overrides, derive_seed(cfg["root_seed"], *seed_name))
    ckpt = train(data, tok, mcfg, tcfg)
    path = state.dir / "teachers" / f"{name}.ckpt"
    save_checkpoint(ckpt, path, state.tokenizer_paths[tok_key])
    state.teachers[name] = ckpt
    state.correctors[name] = CachedCorrector(ckpt, cfg["decode_batch"])
    state.log(f"teacher {name}: {ckpt.step} steps, losses {[round(l, 4) for l in ckpt.losses]}")


def _stage_teachers(state: _Run) -> None:
    cfg = state.cfg
    for code in cfg["locales"]:
        _train_teacher(state, f"mono-{code}", state.teacher_data[code], f"mono-{code}",
                       ("teacher", code))
    multi_pairs = []
    for code in sorted(cfg["locales"]):
        multi_pairs.extend(state.teacher_data[code].pairs)
    multi_data = Dataset(multi_pairs, Manifest(source="noise:multi"))
    _train_teacher(state, "multi", multi_data, "multi", ("teacher", "multi"))


def _stage_selection(state: _Run) -> None:
    cfg = state.cfg
    candidates = {}
    for code in cfg["locales"]:
        locale = Locale.parse(code)
        candidates[locale] = [
            TeacherEntry(locale, state.correctors[f"mono-{code}"], MONOLINGUAL, f"mono-{code}"),
            TeacherEntry(locale, state.correctors["multi"], MULTILINGUAL, "multi"),
        ]
    state.registry = select_best_teacher(candidates, state.dev)
    state.selection = {
        str(loc): {
            "chosen": state.registry[loc].name,
            "kind": state.registry[loc].kind,
            "dev_f1_pct": round(100.0 * state.registry[loc].dev_f1, 4),
        }
        for loc in state.registry.locales()
    }
    (state.dir / "selection.json").write_text(
        json.dumps(state.selection, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    state.log(f"selection: { {k: v['chosen'] for k, v in state.selection.items()} }")


def _registry_for(state: _Run, variant: str) -> TeacherRegistry:
    registry = TeacherRegistry()
    for code in state.cfg["locales"]:
        locale = Locale.parse(code)
        if variant == "single_multilingual":
            entry = TeacherEntry(locale, state.correctors["multi"], MULTILINGUAL, "multi")
        elif variant == "matched_monolingual":
            entry = TeacherEntry(
                locale, state.correctors[f"mono-{code}"], MONOLINGUAL, f"mono-{code}"
            )
        else:
            chosen = state.registry[locale]
            entry = TeacherEntry(locale, chosen.corrector, chosen.kind, chosen.name, chosen.dev_f1)
        registry.add(entry)
    return registry


def _fit_for_student(state: _Run, data: Dataset) -> tuple[Dataset, int]:
    """Drop pairs whose framed encoding would not fit the student's positions.

    A weak teacher can ramble past the student's sequence budget; training
    rejects such rows outright, so the pipeline removes them up front.
    """
    tok = state.tokenizers["student"]
    limit = _student_mcfg(state).max_positions
    kept = [
        p
        for p in data.pairs
        if len(tok.encode(p.input)) + 1 <= limit and len(tok.encode(p.label)) + 1 <= limit
    ]
    dropped = len(data.pairs) - len(kept)
    return Dataset(kept, Manifest(source=data.manifest.source)), dropped


def _stage_labels(state: _Run) -> None:
    cfg = state.cfg
    corpora = {Locale.parse(c): state.distill_inputs[c] for c in cfg["locales"]}
    for variant in cfg["variants"]:
        plan = DistillPlan(variant, _registry_for(state, variant), corpora)
        data, provenance = assemble_student_data(plan, input_transform=tag_input)
        data, dropped = _fit_for_student(state, data)
        provenance["dropped_overlong"] = dropped
        state.variant_data[variant] = data
        path = state.dir / "student-data" / f"{variant}.jsonl"
        save_pairs(data, path)
        write_provenance(path.with_name(path.name + ".provenance.json"), provenance)
        state.log(f"labels[{variant}]: {len(data)} pairs ({dropped} overlong dropped)")


def _student_mcfg(state: _Run) -> ModelConfig:
    tok = state.tokenizers["student"]
    return _model_config(desk_student(tok.vocab_size), state.cfg["student_model"], tok.vocab_size)


def _eval_student(state: _Run, ckpt, codes: list[str]) -> dict:
    """Per-locale exact-match F1 (percent) of a student on the test sets."""
    out = {}
    for code in codes:
        pairs = state.test[code].pairs
        locale = Locale.parse(code)
        tagged = [tag_input(p.input, locale) for p in pairs]
        results = decode_greedy_batch(ckpt, tagged, batch_size=state.cfg["decode_batch"])
        out[code] = round(_f1_pct(pairs, [r.text for r in results]), 4)
    out["mean"] = round(sum(out[c] for c in codes) / len(codes), 4)
    return out


def _stage_students(state: _Run) -> None:
    cfg = state.cfg
    tok = state.tokenizers["student"]
    mcfg = _student_mcfg(state)
    results: dict[str, dict] = {}
    for variant in cfg["variants"]:
        per_seed = {}
        for seed in cfg["student_seeds"]:
            # seed shared across variants: same init and batch-order stream,
            # so variant comparisons reflect the distilled data alone
            tcfg = _train_config(
                cfg["student_train"], derive_seed(cfg["root_seed"], "student", seed)
            )
            ckpt = train(state.variant_data[variant], tok, mcfg, tcfg)
            state.students[(variant, seed)] = ckpt
            ckpt_path = state.dir / "students" / f"{variant}-seed{seed}.ckpt"
            ckpt_path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, ckpt_path, state.tokenizer_paths["student"])
            per_seed[str(seed)] = _eval_student(state, ckpt, cfg["locales"])
            state.log(f"student[{variant}/seed{seed}]: {per_seed[str(seed)]}")
        mean_over_seeds = {
            code: round(
                sum(per_seed[str(s)][code] for s in cfg["student_seeds"])
                / len(cfg["student_seeds"]),
                4,
            )
            for code in [*cfg["locales"], "mean"]
        }
        results[variant] = {"per_seed": per_seed, "mean_over_seeds": mean_over_seeds}
    state.report["variants"] = results


def _stage_add_languages(state: _Run) -> None:
    cfg = state.cfg
    add = cfg["add_languages"]
    if not add:
        return
    base_variant = "best_teacher"
    new_codes = list(add["locales"])
    tok = state.tokenizers["student"]
    mcfg = _student_mcfg(state)
    # Prepare each new language: split, noise, mono tokenizer + teacher, labels.
    appended = state.variant_data[base_variant]
    for code in new_codes:
        lines = [
            ln.strip()
            for ln in Path(add["corpora"][code]).read_text(encoding="utf-8").splitlines()
            if ln.strip()
        ]
        locale = Locale.parse(code)
        rng = rng_for(cfg["root_seed"], "split", code)
        perm = rng.permutation(len(lines))
        n_test = min(cfg["test_sentences"], max(1, len(lines) // 5))
        test_idx = sorted(int(i) for i in perm[:n_test])
        train_idx = [i for i in range(len(lines)) if i not in set(test_idx)]
        train_sents = [lines[i] for i in train_idx]
        test_sents = [lines[i] for i in test_idx]
        spec = _noise_for(state, code)
        alphabet = build_alphabet(train_sents)
        full = generate_training(train_sents, spec, alphabet, locale)
        keep = min(cfg["teacher_copies"], spec.train_copies)
        teacher_pairs = [p for i, p in enumerate(full.pairs) if i % spec.train_copies < keep]
        teacher_data = Dataset(teacher_pairs, Manifest(source=f"noise:{code}"))
        state.teacher_data[code] = teacher_data
        eval_target = min(cfg["eval_count"], max(1, int(0.8 * n_test)))
        state.test[code] = generate_eval(
            test_sents, spec, alphabet, locale, eval_target, cfg["min_words"]
        )
        texts = [p.input for p in teacher_pairs] + [p.label for p in teacher_pairs]
        tok_mono = train_subword(texts, "bbpe", cfg["mono_vocab"])
        tok_path = state.dir / "tokenizers" / f"mono-{code}.subword"
        tok_mono.save(tok_path)
        state.tokenizers[f"mono-{code}"] = tok_mono
        state.tokenizer_paths[f"mono-{code}"] = tok_path
        _train_teacher(state, f"mono-{code}", teacher_data, f"mono-{code}", ("teacher", code))
        d_copies = min(cfg["distill_copies"], spec.train_copies)
        inputs = [p.input for i, p in enumerate(full.pairs) if i % spec.train_copies < d_copies]
        entry = TeacherEntry(locale, state.correctors[f"mono-{code}"], MONOLINGUAL, f"mono-{code}")
        appended, stats = add_language(
            appended, entry, inputs, input_transform=lambda t, loc=locale: tag_input(t, loc)
        )
        state.log(f"add-language {code}: +{stats['n']} pairs")
    appended, dropped = _fit_for_student(state, appended)
    if dropped:
        state.log(f"add-languages: {dropped} overlong pairs dropped")
    path = state.dir / "student-data" / "best_teacher+added.jsonl"
    save_pairs(appended, path)
    all_codes = [*cfg["locales"], *new_codes]
    expanded: dict[str, dict] = {}
    for seed in cfg["student_seeds"]:
        tcfg = _train_config(
            cfg["student_train"], derive_seed(cfg["root_seed"], "student", seed)
        )
        ckpt = train(appended, tok, mcfg, tcfg)
        ckpt_path = state.dir / "students" / f"{base_variant}+added-seed{seed}.ckpt"
        ckpt_path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, ckpt_path, state.tokenizer_paths["student"])
        expanded[str(seed)] = _eval_student(state, ckpt, all_codes)
        state.log(f"student-5lang[seed{seed}]: {expanded[str(seed)]}")
    mean_over_seeds = {
        code: round(
            sum(expanded[str(s)][code] for s in cfg["student_seeds"]) / len(cfg["student_seeds"]),
            4,
        )
        for code in [*all_codes, "mean"]
    }
    before = state.report["variants"][base_variant]["mean_over_seeds"]
    deltas = {code: round(mean_over_seeds[code] - before[code], 4) for code in cfg["locales"]}
    state.report["add_languages"] = {
        "added": new_codes,
        "per_seed": expanded,
        "mean_over_seeds": mean_over_seeds,
        "original_locale_deltas": deltas,
    }


def _stage_bench(state: _Run) -> None:
    cfg = state.cfg
    if not cfg["bench"]:
        return
    b = cfg["bench"]
    code = cfg["locales"][0]
    locale = Locale.parse(code)
    inputs = [p.input for p in state.test[code].pairs]
    student = state.students[(cfg["variants"][0], cfg["student_seeds"][0])]
    teacher = state.teachers["multi"]
    profile = bench_mod.LoadProfile(
        total_requests=b.get("requests", 60),
        concurrency=b.get("concurrency", 1),
        timeout_s=b.get("timeout_s", 10.0),
        warmup_requests=b.get("warmup", 5),
    )
    student_fn = lambda t: decode_greedy(student, tag_input(t, locale)).text
    teacher_fn = lambda t: decode_greedy(teacher, t).text
    student_rep = bench_mod.run_load(student_fn, profile, inputs)
    teacher_rep = bench_mod.run_load(teacher_fn, profile, inputs)
    comparison = bench_mod.compare(student_rep, teacher_rep)
    payload = {
        "profile": {
            "total_requests": profile.total_requests,
            "concurrency": profile.concurrency,
            "timeout_s": profile.timeout_s,
            "warmup_requests": profile.warmup_requests,
        },
        "student": student_rep.to_dict(),
        "teacher": teacher_rep.to_dict(),
        "comparison": comparison,
    }
    (state.dir / "bench.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    state.log(
        f"bench: tps_ratio {comparison['tps_ratio']:.2f}, "
        f"p99 improvement {comparison['p99_improvement_pct']:.1f}%"
    )


def _stage_report(state: _Run) -> None:
    cfg = state.cfg
    from . import __version__

    report = {
        "tool_version": __version__,
        "config": cfg,
        "selection": state.selection,
        "variants": state.report.get("variants", {}),
    }
    if "add_languages" in state.report:
        report["add_languages"] = state.report["add_languages"]
    if cfg["bench"]:
        report["bench_file"] = "bench.json"
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (state.dir / "report.json").write_text(text, encoding="utf-8")
    state.report = report
