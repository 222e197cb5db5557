# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled longest-match scan kernel.

Same contract as mdx._scan_py.find_matches but over code-point arrays:
the caller flattens the term table into contiguous buffers once per
(lexicon, language, attribute-set) and reuses it across records.
"""

from libc.stdint cimport int32_t, uint8_t, uint32_t


def find_matches_flat(const uint32_t[::1] text,
                      const uint8_t[::1] word_mask,
                      bint has_mask,
                      const uint32_t[::1] terms,
                      const int32_t[::1] term_start,
                      const int32_t[::1] term_len,
                      const int32_t[::1] entry_id,
                      const uint32_t[::1] bucket_key,
                      const int32_t[::1] bucket_lo,
                      const int32_t[::1] bucket_hi):
    cdef Py_ssize_t i = 0, n = text.shape[0]
    cdef Py_ssize_t m = bucket_key.shape[0]
    cdef Py_ssize_t lo, hi, mid, j, k, length, end
    cdef uint32_t first
    cdef bint chars_ok, matched
    matches = []
    while i < n:
        first = text[i]
        # binary search for the bucket of terms starting with this code point
        lo, hi = 0, m
        while lo < hi:
            mid = (lo + hi) // 2
            if bucket_key[mid] < first:
                lo = mid + 1
            else:
                hi = mid
        if lo == m or bucket_key[lo] != first:
            i += 1
            continue
        matched = False
        for j in range(bucket_lo[lo], bucket_hi[lo]):  # longest first
            length = term_len[j]
            if i + length > n:
                continue
            chars_ok = True
            for k in range(length):
                if text[i + k] != terms[term_start[j] + k]:
                    chars_ok = False
                    break
            if not chars_ok:
                continue
            if has_mask:
                if i > 0 and word_mask[i - 1]:
                    continue
                end = i + length
                if end < n and word_mask[end]:
                    continue
            matches.append((i, length, entry_id[j]))
            i += length
            matched = True
            break
        if not matched:
            i += 1
    return matches
