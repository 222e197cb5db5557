"""Counterfactual data augmentation: symmetric sensitive-term swapping.

A single left-to-right pass replaces, at each position, the longest matching
term from the selected attributes with its paired counterpart, then resumes
after the replacement, so a swapped-in term is never swapped back. Matching
is word-bounded and case-insensitive for space-delimited languages (with
case-pattern transfer onto the replacement) and literal longest-substring for
CJK. Applying the one-sided transform twice is the identity, which is what
makes the augmentation symmetric.
"""

from __future__ import annotations

import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .lexicon import Attribute, IndexEntry, TermLexicon, fold, language
from .textproc import CorpusRecord

from . import _scan_py

if os.environ.get("MDX_PURE_SCAN"):
    _scan = None
else:
    try:
        from . import _scan  # type: ignore[attr-defined]
    except ImportError:
        _scan = None


def kernel_name() -> str:
    """Which scan kernel this process selected at import."""
    return "compiled" if _scan is not None else "pure"


class AugmentMode(str, Enum):
    ONE_SIDED = "one-sided"   # rewrite records in place
    TWO_SIDED = "two-sided"   # emit original + counterfactual for matched records


def _is_word_char(ch: str) -> bool:
    return ch == "_" or unicodedata.category(ch)[0] in ("L", "N")


class _WordMaskTable(dict):
    """str.translate table mapping code points to \\x01 (word) or \\x00."""

    def __missing__(self, cp: int) -> int:
        flag = 1 if _is_word_char(chr(cp)) else 0
        self[cp] = flag
        return flag


_WORD_MASK_TABLE = _WordMaskTable()


def _word_mask(text: str) -> bytes:
    return text.translate(_WORD_MASK_TABLE).encode("latin-1")


def _to_codepoints(text: str) -> np.ndarray:
    if not text:
        return np.empty(0, dtype=np.uint32)
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


@dataclass(frozen=True, eq=False)
class _SwapTable:
    """Per-(lexicon, language, attributes) matcher state, built once."""

    cjk: bool
    entries: tuple[IndexEntry, ...]
    buckets: dict[str, list[tuple[str, int]]] = field(repr=False)
    # flattened form consumed by the compiled kernel
    terms: np.ndarray = field(repr=False)
    term_start: np.ndarray = field(repr=False)
    term_len: np.ndarray = field(repr=False)
    entry_id: np.ndarray = field(repr=False)
    bucket_key: np.ndarray = field(repr=False)
    bucket_lo: np.ndarray = field(repr=False)
    bucket_hi: np.ndarray = field(repr=False)


@lru_cache(maxsize=128)
def _swap_table(
    lexicon: TermLexicon, language_code: str, attributes: frozenset[Attribute]
) -> _SwapTable:
    lang = language(language_code)
    entries = tuple(lexicon.entries(language_code, attributes))
    keyed: list[tuple[str, int]] = []
    for idx, entry in enumerate(entries):
        key = unicodedata.normalize("NFC", entry.surface)
        if not lang.cjk:
            key = fold(key)
        keyed.append((key, idx))
    # longest first within a bucket; ties broken by key for determinism
    keyed.sort(key=lambda t: (t[0][:1], -len(t[0]), t[0]))

    buckets: dict[str, list[tuple[str, int]]] = {}
    for key, idx in keyed:
        if key:
            buckets.setdefault(key[0], []).append((key, idx))

    term_start, term_len, entry_id, flat = [], [], [], []
    bucket_key, bucket_lo, bucket_hi = [], [], []
    pos = 0
    for first in sorted(buckets, key=ord):
        bucket_key.append(ord(first))
        bucket_lo.append(len(term_len))
        for key, idx in buckets[first]:
            term_start.append(pos)
            term_len.append(len(key))
            entry_id.append(idx)
            flat.append(_to_codepoints(key))
            pos += len(key)
        bucket_hi.append(len(term_len))
    return _SwapTable(
        cjk=lang.cjk,
        entries=entries,
        buckets=buckets,
        terms=np.concatenate(flat) if flat else np.empty(0, dtype=np.uint32),
        term_start=np.asarray(term_start, dtype=np.int32),
        term_len=np.asarray(term_len, dtype=np.int32),
        entry_id=np.asarray(entry_id, dtype=np.int32),
        bucket_key=np.asarray(bucket_key, dtype=np.uint32),
        bucket_lo=np.asarray(bucket_lo, dtype=np.int32),
        bucket_hi=np.asarray(bucket_hi, dtype=np.int32),
    )


_NO_MASK = np.zeros(1, dtype=np.uint8)


def _scan_text(text: str, table: _SwapTable) -> list[tuple[int, int, int]]:
    """(start, length, entry index) for every longest-match hit in text.

    `text` must already be NFC. Folding and the word mask are derived here;
    match offsets refer to this text.
    """
    if not table.entries or not text:
        return []
    haystack = text if table.cjk else fold(text)
    mask = None if table.cjk else _word_mask(text)
    if _scan is not None:
        cps = _to_codepoints(haystack)
        mask_arr = _NO_MASK if mask is None else np.frombuffer(mask, dtype=np.uint8)
        return _scan.find_matches_flat(
            cps, mask_arr, mask is not None,
            table.terms, table.term_start, table.term_len, table.entry_id,
            table.bucket_key, table.bucket_lo, table.bucket_hi,
        )
    return _scan_py.find_matches(haystack, mask, table.buckets)


def _transfer_case(original: str, canonical: str, replacement: str) -> str:
    """Carry the original occurrence's case pattern onto the replacement.

    Exact-canonical, all-lower, ALL-UPPER, and Title patterns are preserved;
    anything else falls back to the replacement's listed casing. Those four
    patterns round-trip, which keeps double augmentation an identity.
    """
    if original == canonical:
        return replacement
    if original == original.lower():
        return replacement.lower()
    if original == original.upper():
        return replacement.upper()
    if original[0].isupper() and original[1:] == original[1:].lower():
        return replacement[0].upper() + replacement[1:].lower()
    return replacement


def _apply_matches(
    normalized: str, matches: Sequence[tuple[int, int, int]], table: _SwapTable
) -> str:
    pieces: list[str] = []
    cursor = 0
    for start, length, entry_idx in matches:
        entry = table.entries[entry_idx]
        original = normalized[start : start + length]
        pieces.append(normalized[cursor:start])
        if table.cjk:
            pieces.append(entry.counterpart)
        else:
            pieces.append(_transfer_case(original, entry.surface, entry.counterpart))
        cursor = start + length
    pieces.append(normalized[cursor:])
    return "".join(pieces)


def augment_sentence(
    text: str,
    language_code: str,
    lexicon: TermLexicon,
    attributes: Iterable[Attribute] = tuple(Attribute),
) -> tuple[str, int]:
    """Swap every matched sensitive term for its counterpart.

    Returns the rewritten text and the number of replacements. Zero-match
    texts are returned unchanged byte for byte.
    """
    table = _swap_table(lexicon, language_code, frozenset(attributes))
    normalized = unicodedata.normalize("NFC", text)
    matches = _scan_text(normalized, table)
    if not matches:
        return text, 0
    return _apply_matches(normalized, matches, table), len(matches)


def count_term_occurrences(
    text: str,
    language_code: str,
    lexicon: TermLexicon,
    attributes: Iterable[Attribute] = tuple(Attribute),
) -> Counter:
    """Occurrences per canonical term surface, under the same longest-match
    rules the augmenter uses (so shadowed substrings do not count)."""
    table = _swap_table(lexicon, language_code, frozenset(attributes))
    normalized = unicodedata.normalize("NFC", text)
    counts: Counter = Counter()
    for _start, _length, entry_idx in _scan_text(normalized, table):
        counts[table.entries[entry_idx].surface] += 1
    return counts


@dataclass
class AugmentReport:
    mode: AugmentMode
    records_in: int = 0
    records_out: int = 0
    # (language, attribute, canonical matched term) -> replacement count
    replacements: Counter = field(default_factory=Counter)

    def total_replacements(self) -> int:
        return sum(self.replacements.values())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "total_replacements": self.total_replacements(),
            "replacements": [
                {"language": lang, "attribute": attr.value, "term": term, "count": count}
                for (lang, attr, term), count in sorted(
                    self.replacements.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
                )
            ],
        }


def augment_corpus(
    corpus: Iterable[CorpusRecord],
    lexicon: TermLexicon,
    attributes: Iterable[Attribute] = tuple(Attribute),
    mode: AugmentMode = AugmentMode.TWO_SIDED,
) -> tuple[list[CorpusRecord], AugmentReport]:
    """Apply term swapping to every record.

    One-sided mode rewrites records in place. Two-sided mode keeps the
    original and appends the counterfactual right after it whenever at least
    one term matched, which balances the corpus-level counts of every pair.
    """
    attributes = frozenset(attributes)
    report = AugmentReport(mode=mode)
    out: list[CorpusRecord] = []
    for record in corpus:
        report.records_in += 1
        table = _swap_table(lexicon, record.language, attributes)
        normalized = unicodedata.normalize("NFC", record.text)
        matches = _scan_text(normalized, table)
        for _start, _length, entry_idx in matches:
            entry = table.entries[entry_idx]
            report.replacements[(record.language, entry.attribute, entry.surface)] += 1
        if not matches:
            out.append(record)
            report.records_out += 1
            continue
        swapped = _apply_matches(normalized, matches, table)
        if mode is AugmentMode.ONE_SIDED:
            out.append(CorpusRecord(record.language, swapped, record.source_id))
            report.records_out += 1
        else:
            out.append(record)
            out.append(CorpusRecord(record.language, swapped, f"{record.source_id}/cf"))
            report.records_out += 2
    return out, report
