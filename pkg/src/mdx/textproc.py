"""Deterministic multilingual tokenization, vocabulary construction, and the
line-oriented corpus format (``language<TAB>source_id<TAB>text``)."""

from __future__ import annotations

import random
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .errors import CorpusFormatError
from .lexicon import TermLexicon, language

PAD, UNK, MASK, CLS, SEP = "[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, MASK, CLS, SEP)
PAD_ID, UNK_ID, MASK_ID, CLS_ID, SEP_ID = range(5)

# Token budget used in the full-scale runs this toolkit models; the desk-scale
# default is what fits a laptop.
PAPER_SCALE_TOKEN_BUDGET = 26_800_000
DESK_SCALE_TOKEN_BUDGET = 50_000

_CJK_RANGES = (
    (0x3040, 0x309F),  # hiragana
    (0x30A0, 0x30FF),  # katakana
    (0x3400, 0x4DBF),  # CJK unified ideographs extension A
    (0x4E00, 0x9FFF),  # CJK unified ideographs
    (0xF900, 0xFAFF),  # CJK compatibility ideographs
)


def _is_cjk_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class Token:
    surface: str
    kind: str  # word | cjk-char | punct | special


def _split_chunk(chunk: str) -> list[Token]:
    """One whitespace-delimited chunk into leading punct, core word, trailing punct."""
    lead: list[Token] = []
    i, j = 0, len(chunk)
    while i < j and _is_punct(chunk[i]):
        lead.append(Token(chunk[i], "punct"))
        i += 1
    trail: list[Token] = []
    while j > i and _is_punct(chunk[j - 1]):
        trail.append(Token(chunk[j - 1], "punct"))
        j -= 1
    out = lead
    if i < j:
        out.append(Token(chunk[i:j], "word"))
    out.extend(reversed(trail))
    return out


def tokenize(text: str, language_code: str) -> list[Token]:
    """Deterministic tokenization.

    Space-delimited languages split on Unicode whitespace and peel leading and
    trailing punctuation off each chunk. CJK languages emit one token per CJK
    code point, keep interleaved Latin or digit runs as word tokens, and treat
    any punctuation character as its own token. Concatenating the surfaces
    always reproduces the NFC text minus its whitespace.
    """
    lang = language(language_code)
    text = unicodedata.normalize("NFC", text)
    if not lang.cjk:
        out: list[Token] = []
        for chunk in text.split():
            out.extend(_split_chunk(chunk))
        return out
    out = []
    run: list[str] = []

    def flush():
        if run:
            out.append(Token("".join(run), "word"))
            run.clear()

    for ch in text:
        if ch.isspace():
            flush()
        elif _is_cjk_char(ch):
            flush()
            out.append(Token(ch, "cjk-char"))
        elif _is_punct(ch):
            flush()
            out.append(Token(ch, "punct"))
        else:
            run.append(ch)
    flush()
    return out


def surfaces(tokens: Iterable[Token]) -> list[str]:
    return [t.surface for t in tokens]


def tokenize_surfaces(text: str, language_code: str) -> list[str]:
    return surfaces(tokenize(text, language_code))


@dataclass(frozen=True)
class Vocabulary:
    """Bijective surface/id mapping; ids 0..4 are the special tokens."""

    surfaces: tuple[str, ...]
    min_freq: int = 1
    _id_of: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if tuple(self.surfaces[:5]) != SPECIALS:
            raise ValueError("ids 0..4 must be the special tokens")
        mapping = {s: i for i, s in enumerate(self.surfaces)}
        if len(mapping) != len(self.surfaces):
            raise ValueError("duplicate surface in vocabulary")
        object.__setattr__(self, "_id_of", mapping)

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._id_of

    def id_of(self, surface: str) -> int:
        return self._id_of.get(surface, UNK_ID)

    def surface_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.surfaces):
            raise ValueError(f"unknown token id {token_id}")
        return self.surfaces[token_id]

    def encode(self, tokens: Sequence[str | Token]) -> list[int]:
        return [
            self._id_of.get(t.surface if isinstance(t, Token) else t, UNK_ID) for t in tokens
        ]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.surface_of(i) for i in ids]


@dataclass(frozen=True)
class CorpusRecord:
    language: str
    text: str
    source_id: str = ""


@dataclass(frozen=True)
class CorpusConfig:
    per_language_token_budget: int = DESK_SCALE_TOKEN_BUDGET
    sampling_seed: int = 42

    def __post_init__(self):
        if self.per_language_token_budget <= 0:
            raise ValueError("token budget must be positive")


def build_vocab(
    corpus: Iterable[CorpusRecord],
    min_freq: int = 1,
    lexicon: Optional[TermLexicon] = None,
) -> Vocabulary:
    """Frequency-thresholded vocabulary.

    Includes every surface with count >= min_freq plus all lexicon term tokens
    (so sensitive terms never collapse to UNK), ordered by descending count
    with lexicographic tie-breaks after the specials.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: dict[str, int] = {}
    empty = True
    for record in corpus:
        empty = False
        for token in tokenize(record.text, record.language):
            counts[token.surface] = counts.get(token.surface, 0) + 1
    if empty:
        raise ValueError("empty corpus")
    keep = {s for s, c in counts.items() if c >= min_freq}
    if lexicon is not None:
        for lang_code, term in lexicon.term_texts():
            keep.update(t.surface for t in tokenize(term, lang_code))
    keep -= set(SPECIALS)
    ordered = sorted(keep, key=lambda s: (-counts.get(s, 0), s))
    return Vocabulary(surfaces=SPECIALS + tuple(ordered), min_freq=min_freq)


def parse_corpus_line(line: str, lineno: int | None = None) -> CorpusRecord:
    fields = line.rstrip("\n").split("\t", 2)
    if len(fields) != 3:
        where = f" at line {lineno}" if lineno else ""
        raise CorpusFormatError(f"expected language<TAB>source_id<TAB>text{where}")
    lang_code, source_id, text = fields
    language(lang_code)  # raises on unknown code
    if not text.strip():
        where = f" at line {lineno}" if lineno else ""
        raise CorpusFormatError(f"empty text{where}")
    return CorpusRecord(language=lang_code, text=text, source_id=source_id)


def read_corpus(path) -> Iterator[CorpusRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield parse_corpus_line(line, lineno)


def write_corpus(path, records: Iterable[CorpusRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.language}\t{r.source_id}\t{r.text}\n")
            n += 1
    return n


def token_count(record: CorpusRecord) -> int:
    return len(tokenize(record.text, record.language))


def downsample(corpus: Iterable[CorpusRecord], config: CorpusConfig) -> list[CorpusRecord]:
    """Per language, uniformly sample records (seeded, without replacement)
    until the token budget is first met or exceeded. Selected records are
    emitted in their original corpus order."""
    records = list(corpus)
    by_language: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_language.setdefault(r.language, []).append(i)
    chosen: set[int] = set()
    for lang_code, indices in sorted(by_language.items()):
        rng = random.Random(f"{config.sampling_seed}|{lang_code}")
        order = list(indices)
        rng.shuffle(order)
        total = 0
        for i in order:
            if total >= config.per_language_token_budget:
                break
            chosen.add(i)
            total += token_count(records[i])
    return [records[i] for i in range(len(records)) if i in chosen]
