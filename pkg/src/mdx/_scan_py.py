"""Pure-Python longest-match scan kernel.

Reference implementation of the hot loop behind term swapping; mdx._scan is
the compiled equivalent. Both must produce identical matches for identical
inputs (covered by a parity test).
"""

from __future__ import annotations


def find_matches(text, word_mask, buckets):
    """Left-to-right longest-match scan.

    text: the (possibly case-folded) text to scan.
    word_mask: per-character word-ness flags (sequence of 0/1), or None to
        disable boundary checks.
    buckets: dict mapping first character -> list of (key, entry_id) with
        each list sorted longest key first.

    Returns (start, length, entry_id) triples; matched spans never overlap
    and scanning resumes after each match.
    """
    matches = []
    i, n = 0, len(text)
    while i < n:
        bucket = buckets.get(text[i])
        if bucket is None:
            i += 1
            continue
        for key, entry_id in bucket:
            length = len(key)
            if not text.startswith(key, i):
                continue
            if word_mask is not None:
                if i > 0 and word_mask[i - 1]:
                    continue
                end = i + length
                if end < n and word_mask[end]:
                    continue
            matches.append((i, length, entry_id))
            i += length
            break
        else:
            i += 1
    return matches
