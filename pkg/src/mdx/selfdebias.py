"""Self-debias rescaling: suppress tokens a diagnosis prompt makes more likely.

The model is queried twice per masked position, once on the plain sentence
and once with a bias self-diagnosis prompt prepended. Tokens whose
probability rises under the prompt are scaled down by exp(-lambda * rise)
and the distribution renormalized; everything else keeps its relative mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import MissingTemplateError
from .lexicon import Attribute, language
from .textproc import tokenize_surfaces


@dataclass(frozen=True)
class SelfDebiasTemplate:
    language: str
    attribute: Attribute
    prompt_text: str
    canonical: bool = True  # False for maintainer-translated registry rows

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise ValueError("prompt text must be non-empty")


@dataclass(frozen=True)
class SelfDebiasConfig:
    decay_constant: float = 50.0  # lambda in the suppression factor

    def __post_init__(self):
        if not self.decay_constant > 0:
            raise ValueError("decay constant must be positive")


class TemplateRegistry:
    """One prompt per (language, attribute)."""

    def __init__(self, templates: Sequence[SelfDebiasTemplate] = ()):
        self._templates: dict[tuple[str, str], SelfDebiasTemplate] = {}
        for t in templates:
            self.add(t)

    def add(self, template: SelfDebiasTemplate) -> None:
        key = (template.language, template.attribute.value)
        if key in self._templates:
            raise ValueError(f"duplicate template for {key}")
        self._templates[key] = template

    def template_for(self, language_code: str, attribute: Attribute) -> SelfDebiasTemplate:
        try:
            return self._templates[(language_code, attribute.value)]
        except KeyError:
            raise MissingTemplateError(
                f"no self-diagnosis prompt registered for ({language_code}, {attribute.value})"
            ) from None

    def __len__(self) -> int:
        return len(self._templates)

    @classmethod
    def parse(cls, content: str) -> "TemplateRegistry":
        """Rows of ``language,attribute,prompt_text``; prompt may contain commas."""
        registry = cls()
        canonical = True
        for raw in content.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "[maintainer translation]" in line:
                    canonical = False
                continue
            fields = line.split(",", 2)
            if len(fields) != 3:
                raise ValueError(f"expected 'language,attribute,prompt_text': {line!r}")
            lang_code, attr_s, prompt = (f.strip() for f in fields)
            language(lang_code)  # raises on unknown code
            registry.add(
                SelfDebiasTemplate(
                    language=lang_code,
                    attribute=Attribute(attr_s),
                    prompt_text=prompt,
                    canonical=canonical,
                )
            )
        return registry

    @classmethod
    def load(cls, path) -> "TemplateRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


_builtin: Optional[TemplateRegistry] = None


def builtin_templates() -> TemplateRegistry:
    global _builtin
    if _builtin is None:
        from importlib.resources import files

        _builtin = TemplateRegistry.parse(
            files("mdx.data").joinpath("selfdebias_templates.csv").read_text("utf-8")
        )
    return _builtin


def template_for(language_code: str, attribute: Attribute) -> SelfDebiasTemplate:
    return builtin_templates().template_for(language_code, attribute)


def rescale(
    p_plain: np.ndarray, p_diag: np.ndarray, config: SelfDebiasConfig = SelfDebiasConfig()
) -> np.ndarray:
    """Suppress tokens the diagnosis prompt promotes.

    For each token w with rise delta(w) = p_diag(w) - p_plain(w) > 0 the
    weight is p_plain(w) * exp(-lambda * delta(w)); non-promoted tokens keep
    weight p_plain(w). The result is renormalized in log space. When nothing
    is promoted the input distribution is returned unchanged.
    """
    p_plain = np.asarray(p_plain, dtype=np.float64)
    p_diag = np.asarray(p_diag, dtype=np.float64)
    if p_plain.shape != p_diag.shape:
        raise ValueError("distributions must share a vocabulary")
    for name, p in (("p_plain", p_plain), ("p_diag", p_diag)):
        if np.any(p < 0) or not np.isfinite(p).all():
            raise ValueError(f"{name} is not a distribution")
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} does not sum to 1 (got {p.sum():.8f})")
    delta = p_diag - p_plain
    penalty = np.where(delta > 0, -config.decay_constant * delta, 0.0)
    if not penalty.any():
        return p_plain.copy()
    with np.errstate(divide="ignore"):
        log_w = np.log(p_plain) + penalty
    log_norm = _logsumexp(log_w)
    if not np.isfinite(log_norm):
        raise ValueError("all probability mass suppressed")
    return np.exp(log_w - log_norm)


def _logsumexp(log_values: np.ndarray) -> float:
    hi = np.max(log_values)
    if not np.isfinite(hi):
        return float(hi)
    return float(hi + np.log(np.exp(log_values - hi).sum()))


_CJK_SENTENCE_END = "。"
_SPACE_SENTENCE_END = "."
_ENDINGS = ".!?。！？"


def prompt_prefix_tokens(template: SelfDebiasTemplate) -> list[str]:
    """The prompt as surface tokens, with sentence-final punctuation as the
    separator before the evaluated text (no extra token when the prompt
    already ends one)."""
    lang = language(template.language)
    text = template.prompt_text
    if not text.rstrip().endswith(tuple(_ENDINGS)):
        text = text.rstrip() + (_CJK_SENTENCE_END if lang.cjk else _SPACE_SENTENCE_END)
    return tokenize_surfaces(text, template.language)


def self_debiased_mask_logprobs(
    backend,
    tokens: Sequence[str],
    positions: Sequence[int],
    template: SelfDebiasTemplate,
    config: SelfDebiasConfig = SelfDebiasConfig(),
) -> tuple[list[str], np.ndarray]:
    """Debiased log-prob rows for the masked positions.

    Two backend queries per position: the sentence alone and the sentence
    with the diagnosis prompt prepended (mask index shifted by the prompt
    length). Returns (backend vocabulary, [n_positions, V] log-probs).
    """
    from .backend import MaskedScoreRequest

    prefix = prompt_prefix_tokens(template)
    offset = len(prefix)
    prompted = prefix + list(tokens)
    vocab_listing: Optional[list[str]] = None
    rows = []
    for position in positions:
        try:
            plain = backend.score(
                MaskedScoreRequest(
                    request_id=f"sd-plain-{position}",
                    text_tokens=list(tokens),
                    masked_positions=[position],
                    return_distribution=True,
                )
            ).positions[position]
            diag = backend.score(
                MaskedScoreRequest(
                    request_id=f"sd-diag-{position}",
                    text_tokens=prompted,
                    masked_positions=[position + offset],
                    return_distribution=True,
                )
            ).positions[position + offset]
        except Exception as err:
            from .errors import ScoringError

            raise ScoringError(
                f"self-debias scoring failed at position {position}: {err}"
            ) from err
        if plain.vocab != diag.vocab:
            raise ValueError("plain and prompted queries returned different vocabularies")
        if vocab_listing is None:
            vocab_listing = list(plain.vocab)
        elif vocab_listing != list(plain.vocab):
            raise ValueError("backend vocabulary changed between positions")
        p_plain = np.exp(np.asarray(plain.logprobs, dtype=np.float64))
        p_diag = np.exp(np.asarray(diag.logprobs, dtype=np.float64))
        p_plain = p_plain / p_plain.sum()
        p_diag = p_diag / p_diag.sum()
        with np.errstate(divide="ignore"):
            rows.append(np.log(rescale(p_plain, p_diag, config)))
    return vocab_listing or [], np.asarray(rows)
