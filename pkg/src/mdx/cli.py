"""Command-line interface.

Subcommands wrap the library stages one-to-one; `run` executes the whole
pipeline from a JSON config. Exit codes: 0 success, 2 validation problem
(bad inputs, malformed files), 1 runtime failure. The MDX_SEED environment
variable overrides every seed for quick reproducibility experiments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import CorpusFormatError, LexiconFormatError, MissingTemplateError
from .lexicon import Attribute, load_lexicon, serialize_lexicon, validate
from .mcda import AugmentMode, augment_corpus, kernel_name
from .mlm import (
    MlmConfig,
    PeftConfig,
    TrainConfig,
    TuningMode,
    apply_peft,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .report import make_report, read_raw_scores, write_raw_scores
from .textproc import build_vocab, read_corpus, write_corpus

_VALIDATION_ERRORS = (
    LexiconFormatError,
    CorpusFormatError,
    MissingTemplateError,
    FileNotFoundError,
    ValueError,
    json.JSONDecodeError,
)


def seed_override() -> int | None:
    raw = os.environ.get("MDX_SEED")
    return int(raw) if raw else None


def _attributes(raw: str) -> list[Attribute]:
    return [Attribute(a.strip()) for a in raw.split(",") if a.strip()]


def _add_sd_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--self-debias", action="store_true",
                        help="rescale distributions against the diagnosis prompt")
    parser.add_argument("--lambda", dest="decay_constant", type=float, default=50.0,
                        help="suppression decay constant (default 50)")
    parser.add_argument("--templates", default=None,
                        help="prompt registry CSV (default: built-in prompts)")


def _sd_context(args):
    if not args.self_debias:
        return None
    from .biaseval import SelfDebiasScoring
    from .selfdebias import SelfDebiasConfig, TemplateRegistry, builtin_templates

    templates = TemplateRegistry.load(args.templates) if args.templates else builtin_templates()
    return SelfDebiasScoring(
        templates=templates,
        config=SelfDebiasConfig(decay_constant=args.decay_constant),
    )


# ---- subcommands -------------------------------------------------------------


def cmd_compile_terms(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    problems = validate(lexicon)
    if problems:
        for p in problems:
            print(f"violation: {p}", file=sys.stderr)
        return 2
    canonical = serialize_lexicon(lexicon)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(canonical)
    else:
        sys.stdout.write(canonical)
    return 0


def cmd_augment(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    records = list(read_corpus(args.infile))
    if not records:
        print("error: input corpus is empty", file=sys.stderr)
        return 2
    out, report = augment_corpus(
        records, lexicon, set(args.attributes), AugmentMode(args.mode)
    )
    write_corpus(args.out, out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, ensure_ascii=False)
    print(
        f"augmented {report.records_in} -> {report.records_out} records, "
        f"{report.total_replacements()} replacements ({kernel_name()} kernel)"
    )
    return 0


def cmd_train(args) -> int:
    seed = seed_override()
    records = []
    for path in args.corpus:
        records.extend(read_corpus(path))
    lexicon = load_lexicon(args.lexicon) if args.lexicon else None
    vocab = build_vocab(records, min_freq=args.min_freq, lexicon=lexicon)
    model_cfg = MlmConfig(
        vocab_size=len(vocab),
        d_model=args.d_model,
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        d_ff=args.d_ff,
        max_seq_len=args.max_seq_len,
        dropout_rate=args.dropout,
        init_seed=seed if seed is not None else args.init_seed,
    )
    peft_cfg = PeftConfig(
        adapter_bottleneck_dim=args.adapter_dim,
        prefix_length=args.prefix_length,
        prompt_length=args.prompt_length,
        peft_init_seed=seed if seed is not None else args.peft_seed,
    )
    train_cfg = TrainConfig(
        epochs=args.epochs,
        seed=seed if seed is not None else args.seed,
        batch_size=args.batch_size,
        learning_rate=args.lr,
    )
    model = apply_peft(init_model(model_cfg), TuningMode(args.tuning), peft_cfg)
    model, trace = train(model, records, vocab, train_cfg)
    save_checkpoint(args.out, model, vocab)
    means = ", ".join(f"{m:.4f}" for m in trace.epoch_means())
    print(
        f"trained {args.tuning} for {args.epochs} epochs "
        f"({model.trainable_parameter_count()}/{model.total_parameter_count()} trainable); "
        f"epoch mean loss: {means}"
    )
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_score_crowspairs(args) -> int:
    from .backend import backend_from_spec
    from .biaseval import bias_score, crows_metric, read_crows_file
    from .report import ReportEntry

    pairs = []
    for path in args.pairs:
        pairs.extend(read_crows_file(path))
    if not pairs:
        print("error: no pairs to score", file=sys.stderr)
        return 2
    sd = _sd_context(args)
    backend = backend_from_spec(args.backend)
    try:
        method = args.method or backend.name
        grouped: dict[tuple[str, Attribute], list] = {}
        for pair in pairs:
            grouped.setdefault((pair.language, pair.attribute), []).append(pair)
        entries = []
        for (lang, attribute), group in sorted(grouped.items(), key=lambda kv: kv[0]):
            metric, skipped = crows_metric(backend, group, sd)
            entries.append(ReportEntry(method, attribute, lang, metric))
            flag = f" ({len(skipped)} skipped)" if skipped else ""
            print(
                f"{method} {attribute.value} {lang}: metric {metric.value:.2f} "
                f"bias {bias_score(metric):.2f} over {metric.n_pairs} pairs{flag}"
            )
    finally:
        backend.close()
    write_raw_scores(args.out, entries)
    print(f"raw scores written to {args.out}")
    return 0


def cmd_score_mbe(args) -> int:
    from .backend import backend_from_spec
    from .biaseval import bias_score, build_mbe_pairs, mbe_score
    from .report import ReportEntry

    lexicon = load_lexicon(args.lexicon)
    records = []
    for path in args.corpus:
        records.extend(read_corpus(path))
    if not records:
        print("error: no sentences to score", file=sys.stderr)
        return 2
    by_language: dict[str, list[str]] = {}
    for r in records:
        by_language.setdefault(r.language, []).append(r.text)
    sd = _sd_context(args)
    backend = backend_from_spec(args.backend)
    entries = []
    try:
        method = args.method or backend.name
        for lang in sorted(by_language):
            pairs = build_mbe_pairs(by_language[lang], lexicon, lang)
            metric = mbe_score(backend, pairs, sd)
            entries.append(ReportEntry(method, Attribute.GENDER, lang, metric))
            print(
                f"{method} gender {lang}: metric {metric.value:.2f} "
                f"bias {bias_score(metric):.2f} over {metric.n_pairs} weighted pairs"
            )
    finally:
        backend.close()
    write_raw_scores(args.out, entries)
    print(f"raw scores written to {args.out}")
    return 0


def cmd_report(args) -> int:
    entries = []
    for path in args.infiles:
        entries.extend(read_raw_scores(path))
    if not entries:
        print("error: no raw score rows found", file=sys.stderr)
        return 2
    report = make_report(entries)
    os.makedirs(args.out, exist_ok=True)
    text = report.to_text()
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    report.to_csv(os.path.join(args.out, "report.csv"))
    report.write_figure_csvs(args.out)
    sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    from .pipeline import load_pipeline_config, run_pipeline

    config = load_pipeline_config(args.config)
    if args.label:
        config.label = args.label
        config.raw = {**config.raw, "label": args.label}
    if args.tuning:
        config.tuning = TuningMode(args.tuning)
        config.raw = {
            **config.raw,
            "train": {**config.raw.get("train", {}), "tuning": args.tuning},
        }
    if args.backend:
        config.backend_spec = args.backend
        config.raw = {**config.raw, "backend": args.backend}
    if args.self_debias:
        config.self_debias_enabled = True
        config.raw = {
            **config.raw,
            "self_debias": {**config.raw.get("self_debias", {}), "enabled": True},
        }
    seed = seed_override()
    if seed is not None:
        config.train_config = TrainConfig(
            **{**config.train_config.__dict__, "seed": seed}
        )
        config.model_config = {**config.model_config, "init_seed": seed}
        config.peft_config = PeftConfig(
            **{**config.peft_config.__dict__, "peft_init_seed": seed}
        )
        if config.downsample_config is not None:
            from .textproc import CorpusConfig

            config.downsample_config = CorpusConfig(
                per_language_token_budget=config.downsample_config.per_language_token_budget,
                sampling_seed=seed,
            )
    report = run_pipeline(config, args.out)
    sys.stdout.write(report.to_text())
    return 0


def cmd_serve_local(args) -> int:
    from .backend import serve_local

    model, vocab = load_checkpoint(args.checkpoint)
    serve_local(model, vocab, sys.stdin, sys.stdout, model_name=args.name)
    return 0


# ---- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdx",
        description="Multilingual debiasing toolkit: augment, tune, rescale, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-terms", help="validate and canonicalize a term list")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_compile_terms)

    p = sub.add_parser("augment", help="counterfactual term-swap augmentation")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--attributes", type=_attributes,
                   default=list(Attribute), metavar="gender,race,religion")
    p.add_argument("--mode", choices=[m.value for m in AugmentMode],
                   default=AugmentMode.TWO_SIDED.value)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="write per-term counts as JSON")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="train the desk-scale masked LM")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--lexicon", default=None, help="force term tokens into the vocabulary")
    p.add_argument("--tuning", choices=[m.value for m in TuningMode], default="full")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-seq-len", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--adapter-dim", type=int, default=16)
    p.add_argument("--prefix-length", type=int, default=8)
    p.add_argument("--prompt-length", type=int, default=8)
    p.add_argument("--peft-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score-crowspairs", help="stereotype-pair metric")
    p.add_argument("--pairs", action="append", required=True)
    p.add_argument("--backend", required=True, help="local:CKPT or bridge:COMMAND")
    p.add_argument("--method", default=None, help="row label (default: backend name)")
    p.add_argument("--out", required=True, help="raw score CSV")
    _add_sd_flags(p)
    p.set_defaults(fn=cmd_score_crowspairs)

    p = sub.add_parser("score-mbe", help="gendered-pair metric over a corpus")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--out", required=True)
    _add_sd_flags(p)
    p.set_defaults(fn=cmd_score_mbe)

    p = sub.add_parser("report", help="merge raw scores into the bias tables")
    p.add_argument("--in", dest="infiles", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None, help="override the method row label")
    p.add_argument("--tuning", choices=[m.value for m in TuningMode], default=None,
                   help="override the tuning mode")
    p.add_argument("--backend", default=None, help="override the backend spec")
    p.add_argument("--self-debias", action="store_true",
                   help="force self-debias scoring on")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("serve-local", help="serve a checkpoint over the scoring protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--name", default="toy-mlm")
    p.set_defaults(fn=cmd_serve_local)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures, including MdxError subclasses
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
