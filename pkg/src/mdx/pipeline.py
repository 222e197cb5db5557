"""End-to-end pipeline: augment -> train -> evaluate -> report.

A single JSON config drives all stages; every stage leaves an artifact under
the output directory and records input/artifact hashes in manifest.json, so
an unchanged rerun reuses finished stages (delete an artifact or change the
config slice feeding it and only the affected stages rerun).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .backend import ScoringBackend, backend_from_spec
from .biaseval import SelfDebiasScoring, crows_metric, mbe_score, build_mbe_pairs, read_crows_file
from .lexicon import Attribute, load_lexicon
from .mcda import AugmentMode, augment_corpus
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
from .report import BiasReport, ReportEntry, make_report, read_raw_scores, write_raw_scores
from .selfdebias import SelfDebiasConfig, TemplateRegistry, builtin_templates
from .textproc import CorpusConfig, CorpusRecord, build_vocab, downsample, read_corpus, write_corpus

CONFIG_VERSION = 1

_TUNING_LABEL = {
    TuningMode.FULL: "Full Fine-Tune",
    TuningMode.ADAPTER: "Adapter Tune",
    TuningMode.PREFIX: "Prefix Tune",
    TuningMode.PROMPT: "Prompt Tune",
}


@dataclass
class PipelineConfig:
    corpus: dict[str, str]                  # language -> corpus path
    lexicon_path: str
    attributes: list[Attribute]
    augment_enabled: bool = True
    augment_mode: AugmentMode = AugmentMode.TWO_SIDED
    downsample_config: Optional[CorpusConfig] = None
    train_enabled: bool = True
    tuning: TuningMode = TuningMode.FULL
    model_config: dict = field(default_factory=dict)   # MlmConfig overrides
    peft_config: PeftConfig = field(default_factory=PeftConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    vocab_min_freq: int = 1
    self_debias_enabled: bool = False
    self_debias_config: SelfDebiasConfig = field(default_factory=SelfDebiasConfig)
    templates_path: Optional[str] = None
    crows_files: list[str] = field(default_factory=list)
    mbe_corpus: dict[str, str] = field(default_factory=dict)
    backend_spec: Optional[str] = None
    label: Optional[str] = None
    raw: dict = field(default_factory=dict)  # canonical config document

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "PipelineConfig":
        if doc.get("version") != CONFIG_VERSION:
            raise ValueError(f"config version must be {CONFIG_VERSION}")

        def path(p: str) -> str:
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        augment = doc.get("augment", {})
        train_doc = doc.get("train", {})
        sd = doc.get("self_debias", {})
        evaluation = doc.get("evaluation", {})
        down = doc.get("downsample")
        attributes = [Attribute(a) for a in doc.get("attributes", [])]
        if not attributes:
            raise ValueError("attribute set must be non-empty")
        config = cls(
            corpus={lang: path(p) for lang, p in doc.get("corpus", {}).items()},
            lexicon_path=path(doc["lexicon"]),
            attributes=attributes,
            augment_enabled=bool(augment.get("enabled", True)),
            augment_mode=AugmentMode(augment.get("mode", "two-sided")),
            downsample_config=None
            if down is None
            else CorpusConfig(
                per_language_token_budget=int(down["per_language_token_budget"]),
                sampling_seed=int(down.get("sampling_seed", 42)),
            ),
            train_enabled=bool(train_doc.get("enabled", True)),
            tuning=TuningMode(train_doc.get("tuning", "full")),
            model_config=dict(train_doc.get("model", {})),
            peft_config=PeftConfig(**train_doc.get("peft", {})),
            train_config=TrainConfig(
                **{
                    k: (tuple(v) if k == "betas" else v)
                    for k, v in train_doc.items()
                    if k in TrainConfig.__dataclass_fields__
                }
            ),
            vocab_min_freq=int(train_doc.get("vocab_min_freq", 1)),
            self_debias_enabled=bool(sd.get("enabled", False)),
            self_debias_config=SelfDebiasConfig(
                decay_constant=float(sd.get("decay_constant", 50.0))
            ),
            templates_path=None if not sd.get("templates") else path(sd["templates"]),
            crows_files=[path(p) for p in evaluation.get("crows_pairs", [])],
            mbe_corpus={lang: path(p) for lang, p in evaluation.get("mbe_corpus", {}).items()},
            backend_spec=doc.get("backend"),
            label=doc.get("label"),
            raw=doc,
        )
        config.validate()
        return config

    def validate(self) -> None:
        for p in [self.lexicon_path, *self.corpus.values(), *self.crows_files,
                  *self.mbe_corpus.values()]:
            if not os.path.exists(p):
                raise FileNotFoundError(f"configured path does not exist: {p}")
        if self.templates_path and not os.path.exists(self.templates_path):
            raise FileNotFoundError(f"configured path does not exist: {self.templates_path}")
        if self.train_enabled and not self.corpus:
            raise ValueError("training requires at least one corpus")
        if not self.train_enabled and not self.backend_spec:
            raise ValueError("without training, a backend spec is required")
        if not self.crows_files and not self.mbe_corpus:
            raise ValueError("nothing to evaluate: no pair files and no MBE corpus")

    def method_label(self) -> str:
        if self.label:
            return self.label
        multilingual = len(self.corpus) > 1 or len(self.mbe_corpus) > 1
        aug = self.augment_enabled and self.train_enabled
        if aug and self.self_debias_enabled:
            return f"MD w/ {_TUNING_LABEL[self.tuning]}"
        if aug:
            return "MCDA" if multilingual else "CDA"
        if self.self_debias_enabled:
            return "MSD" if multilingual else "SD"
        return "baseline"

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, ensure_ascii=False)


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return PipelineConfig.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


# ---- manifest-driven stage execution ----------------------------------------


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_obj(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str).encode()
    ).hexdigest()


class _Stages:
    def __init__(self, out_dir: str, config_hash: str):
        self.out_dir = out_dir
        self.path = os.path.join(out_dir, "manifest.json")
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                self.manifest = json.load(fh)
        else:
            self.manifest = {"config_hash": config_hash, "stages": {}}
        if self.manifest.get("config_hash") != config_hash:
            self.manifest = {"config_hash": config_hash, "stages": {}}

    def _save(self) -> None:
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)

    def run(self, name: str, inputs, artifacts: list[str], fn) -> bool:
        """Execute fn unless this stage's recorded hashes still hold.

        Returns True when the stage actually ran. Raises with the stage name
        attached on failure.
        """
        inputs_hash = _hash_obj(inputs)
        record = self.manifest["stages"].get(name)
        if record and record.get("inputs_hash") == inputs_hash:
            intact = all(
                os.path.exists(p) and _sha256_file(p) == h
                for p, h in record.get("artifacts", {}).items()
            )
            if intact:
                return False
        try:
            fn()
        except Exception as err:
            raise RuntimeError(
                f"stage {name!r} failed (artifacts under {self.out_dir}): {err}"
            ) from err
        self.manifest["stages"][name] = {
            "inputs_hash": inputs_hash,
            "artifacts": {p: _sha256_file(p) for p in artifacts if os.path.exists(p)},
        }
        self._save()
        return True


def _read_all_corpora(config: PipelineConfig) -> list[CorpusRecord]:
    records: list[CorpusRecord] = []
    for lang in sorted(config.corpus):
        records.extend(read_corpus(config.corpus[lang]))
    return records


def run_pipeline(config: PipelineConfig, out_dir) -> BiasReport:
    """Execute all enabled stages; returns the final report."""
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    stages = _Stages(out_dir, _hash_obj(config.raw))
    lexicon = load_lexicon(config.lexicon_path)
    label = config.method_label()

    corpus_hashes = {lang: _sha256_file(p) for lang, p in sorted(config.corpus.items())}
    train_corpus_path = os.path.join(out_dir, "train_corpus.tsv")
    augment_report_path = os.path.join(out_dir, "augment_report.json")
    checkpoint_path = os.path.join(out_dir, "model.ckpt")
    raw_scores_path = os.path.join(out_dir, "raw_scores.csv")

    # ---- stage: corpus preparation (downsample + optional augmentation) ----
    if config.train_enabled:
        def prepare():
            records = _read_all_corpora(config)
            if config.downsample_config is not None:
                records = downsample(records, config.downsample_config)
            if config.augment_enabled:
                records, aug_report = augment_corpus(
                    records, lexicon, set(config.attributes), config.augment_mode
                )
                with open(augment_report_path, "w", encoding="utf-8") as fh:
                    json.dump(aug_report.to_dict(), fh, indent=2, ensure_ascii=False)
            write_corpus(train_corpus_path, records)

        stages.run(
            "augment",
            {
                "corpus": corpus_hashes,
                "lexicon": _sha256_file(config.lexicon_path),
                "augment": config.augment_enabled,
                "mode": config.augment_mode.value,
                "attributes": sorted(a.value for a in config.attributes),
                "downsample": None
                if config.downsample_config is None
                else [config.downsample_config.per_language_token_budget,
                      config.downsample_config.sampling_seed],
            },
            [train_corpus_path] + ([augment_report_path] if config.augment_enabled else []),
            prepare,
        )

        # ---- stage: training ------------------------------------------------
        def do_train():
            records = list(read_corpus(train_corpus_path))
            vocab = build_vocab(records, min_freq=config.vocab_min_freq, lexicon=lexicon)
            model_cfg = MlmConfig(**{**config.model_config, "vocab_size": len(vocab)})
            model = apply_peft(init_model(model_cfg), config.tuning, config.peft_config)
            train(model, records, vocab, config.train_config)
            save_checkpoint(checkpoint_path, model, vocab)

        stages.run(
            "train",
            {
                "corpus": _sha256_file(train_corpus_path),
                "tuning": config.tuning.value,
                "model": config.model_config,
                "peft": config.peft_config.__dict__,
                "train": {**config.train_config.__dict__, "betas": list(config.train_config.betas)},
                "min_freq": config.vocab_min_freq,
            },
            [checkpoint_path],
            do_train,
        )
        backend_spec = f"local:{checkpoint_path}"
    else:
        backend_spec = config.backend_spec

    # ---- stage: evaluation ---------------------------------------------------
    def evaluate():
        backend = backend_from_spec(backend_spec)
        try:
            entries = evaluate_backend(config, backend, label)
        finally:
            backend.close()
        write_raw_scores(raw_scores_path, entries)

    eval_inputs = {
        "backend": backend_spec if not config.train_enabled else _sha256_file(checkpoint_path),
        "crows": [_sha256_file(p) for p in config.crows_files],
        "mbe": {lang: _sha256_file(p) for lang, p in sorted(config.mbe_corpus.items())},
        "sd": [config.self_debias_enabled, config.self_debias_config.decay_constant,
               config.templates_path],
        "label": label,
    }
    stages.run("evaluate", eval_inputs, [raw_scores_path], evaluate)

    # ---- stage: report --------------------------------------------------------
    report_path = os.path.join(out_dir, "report.txt")
    csv_path = os.path.join(out_dir, "report.csv")
    entries = read_raw_scores(raw_scores_path)
    report = make_report(entries)

    def emit():
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
        report.to_csv(csv_path)
        report.write_figure_csvs(out_dir)

    fig_paths = [os.path.join(out_dir, f"{name}.csv") for name in report.figure_data()]
    stages.run(
        "report",
        {"raw": _sha256_file(raw_scores_path)},
        [report_path, csv_path] + fig_paths,
        emit,
    )
    return report


def evaluate_backend(
    config: PipelineConfig, backend: ScoringBackend, label: str
) -> list[ReportEntry]:
    """Score all configured evaluation data against one backend."""
    sd = None
    if config.self_debias_enabled:
        templates = (
            TemplateRegistry.load(config.templates_path)
            if config.templates_path
            else builtin_templates()
        )
        sd = SelfDebiasScoring(templates=templates, config=config.self_debias_config)
    lexicon = load_lexicon(config.lexicon_path)
    entries: list[ReportEntry] = []
    grouped: dict[tuple[str, Attribute], list] = {}
    for path in config.crows_files:
        for pair in read_crows_file(path):
            grouped.setdefault((pair.language, pair.attribute), []).append(pair)
    for (lang, attribute), pairs in sorted(grouped.items(), key=lambda kv: kv[0]):
        if attribute not in config.attributes:
            continue
        metric, _skipped = crows_metric(backend, pairs, sd)
        entries.append(ReportEntry(label, attribute, lang, metric))
    for lang in sorted(config.mbe_corpus):
        records = [r for r in read_corpus(config.mbe_corpus[lang]) if r.language == lang]
        pairs = build_mbe_pairs([r.text for r in records], lexicon, lang)
        metric = mbe_score(backend, pairs, sd)
        entries.append(ReportEntry(label, Attribute.GENDER, lang, metric))
    return entries
