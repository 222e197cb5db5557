"""Sensitive-term pair lists: the language registry, parsing, validation,
and counterpart lookup.

Term lists are CSV-like UTF-8: ``attribute,language,left,right`` rows with
``#`` comments. Terms may not contain commas. For gender rows the convention
is left = male-coded term, right = female-coded term; the MBE pair builder
relies on it.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import LexiconFormatError


class Attribute(str, Enum):
    GENDER = "gender"
    RACE = "race"
    RELIGION = "religion"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True)
class Language:
    """A registered language: its code and segmentation class."""

    code: str
    cjk: bool  # True: per-character segmentation, exact-codepoint matching


_LANGUAGES: dict[str, Language] = {}


def register_language(code: str, cjk: bool) -> Language:
    lang = Language(code=code, cjk=cjk)
    _LANGUAGES[code] = lang
    return lang


def language(code: str) -> Language:
    try:
        return _LANGUAGES[code]
    except KeyError:
        raise LexiconFormatError(f"unknown language code {code!r}") from None


def known_languages() -> tuple[str, ...]:
    return tuple(_LANGUAGES)


for _code, _cjk in [("EN", False), ("DE", False), ("ES", False), ("ZH", True), ("JA", True)]:
    register_language(_code, _cjk)


class _FoldTable(dict):
    """str.translate table computing per-character lowercase lazily."""

    def __missing__(self, cp: int) -> int:
        low = chr(cp).lower()
        folded = ord(low) if len(low) == 1 else cp
        self[cp] = folded
        return folded


_FOLD_TABLE = _FoldTable()


def fold(text: str) -> str:
    """Length-preserving case fold (per-character lower).

    Characters whose lowercase form changes length are kept as-is so match
    offsets computed on the folded string stay valid on the original.
    """
    return text.translate(_FOLD_TABLE)


def match_key(term: str, lang: Language) -> str:
    """Index key for a surface: folded for space-delimited languages, exact for CJK."""
    return term if lang.cjk else fold(term)


@dataclass(frozen=True)
class TermPair:
    attribute: Attribute
    language: str
    left: str
    right: str


@dataclass(frozen=True)
class IndexEntry:
    surface: str      # canonical casing as listed
    counterpart: str  # canonical casing of the paired term
    attribute: Attribute
    side: str         # "left" or "right" column of the pair list


@dataclass(frozen=True)
class TermLexicon:
    """Immutable set of term pairs with a symmetric (language, surface) index."""

    pairs: tuple[TermPair, ...]
    _index: dict[tuple[str, str], IndexEntry] = field(
        default_factory=dict, compare=False, repr=False, hash=False
    )

    def __post_init__(self):
        # First listing wins on conflicts; validate() reports them.
        index: dict[tuple[str, str], IndexEntry] = {}
        for pair in self.pairs:
            lang = language(pair.language)
            sided = ((pair.left, pair.right, "left"), (pair.right, pair.left, "right"))
            for surface, other, side in sided:
                key = (pair.language, match_key(surface, lang))
                entry = IndexEntry(
                    surface=surface, counterpart=other, attribute=pair.attribute, side=side
                )
                index.setdefault(key, entry)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_hash", hash(self.pairs))

    def __hash__(self) -> int:
        return self._hash

    def lookup(self, term: str, language_code: str) -> Optional[IndexEntry]:
        lang = language(language_code)
        return self._index.get((language_code, match_key(term, lang)))

    def entries(self, language_code: str, attributes: Iterable[Attribute]) -> list[IndexEntry]:
        wanted = set(attributes)
        return [
            entry
            for (code, _key), entry in sorted(self._index.items())
            if code == language_code and entry.attribute in wanted
        ]

    def languages(self) -> tuple[str, ...]:
        return tuple(sorted({p.language for p in self.pairs}))

    def term_texts(self) -> list[tuple[str, str]]:
        """(language, surface) for every listed term, both sides."""
        out = []
        for pair in self.pairs:
            out.append((pair.language, pair.left))
            out.append((pair.language, pair.right))
        return out


def counterpart(
    lexicon: TermLexicon, term: str, language_code: str
) -> Optional[tuple[str, Attribute]]:
    """The paired term (canonical casing) and its attribute, or None."""
    entry = lexicon.lookup(term, language_code)
    if entry is None:
        return None
    return entry.counterpart, entry.attribute


def parse_lexicon(content: str) -> TermLexicon:
    """Parse a term-list file. Raises LexiconFormatError with the line number
    on malformed rows, unknown codes, or duplicate-term conflicts."""
    pairs: list[TermPair] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(content.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise LexiconFormatError(
                f"expected 'attribute,language,left,right', got {len(fields)} fields", lineno
            )
        attr_s, lang_s, left, right = (f.strip() for f in fields)
        try:
            attr = Attribute(attr_s)
        except ValueError:
            raise LexiconFormatError(f"unknown attribute {attr_s!r}", lineno) from None
        if lang_s not in _LANGUAGES:
            raise LexiconFormatError(f"unknown language code {lang_s!r}", lineno)
        lang = _LANGUAGES[lang_s]
        if not left or not right:
            raise LexiconFormatError("empty term", lineno)
        left = unicodedata.normalize("NFC", left)
        right = unicodedata.normalize("NFC", right)
        for surface in (left, right):
            key = (lang_s, match_key(surface, lang))
            if key in seen:
                raise LexiconFormatError(
                    f"term {surface!r} already listed for {lang_s} on line {seen[key]}", lineno
                )
            seen[key] = lineno
        pairs.append(TermPair(attribute=attr, language=lang_s, left=left, right=right))
    return TermLexicon(pairs=tuple(pairs))


def serialize_lexicon(lexicon: TermLexicon) -> str:
    """Canonical text form: sorted rows, one pair per line."""
    rows = sorted(
        lexicon.pairs, key=lambda p: (p.attribute.value, p.language, fold(p.left), p.left)
    )
    lines = ["# attribute,language,left,right"]
    lines += [f"{p.attribute.value},{p.language},{p.left},{p.right}" for p in rows]
    return "\n".join(lines) + "\n"


def validate(lexicon: TermLexicon) -> list[str]:
    """Invariant violations, empty when the lexicon is well-formed."""
    violations: list[str] = []
    seen: dict[tuple[str, str], TermPair] = {}
    for pair in lexicon.pairs:
        if pair.language not in _LANGUAGES:
            violations.append(f"unknown language {pair.language!r} in {pair}")
            continue
        lang = _LANGUAGES[pair.language]
        if not pair.left or not pair.right:
            violations.append(f"empty term in {pair}")
            continue
        if match_key(pair.left, lang) == match_key(pair.right, lang):
            violations.append(f"degenerate pair (left == right): {pair}")
        for surface in (pair.left, pair.right):
            key = (pair.language, match_key(surface, lang))
            if key in seen and seen[key] != pair:
                violations.append(
                    f"term {surface!r} appears in both {seen[key]} and {pair}"
                )
            else:
                seen[key] = pair
    return violations


def load_lexicon(path) -> TermLexicon:
    with open(path, encoding="utf-8") as fh:
        return parse_lexicon(fh.read())


def builtin_lexicon() -> TermLexicon:
    """Small illustrative term lists; production runs should supply their own."""
    from importlib.resources import files

    return parse_lexicon(files("mdx.data").joinpath("terms_builtin.csv").read_text("utf-8"))
