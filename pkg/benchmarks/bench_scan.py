"""Benchmark: compiled scan kernel vs the pure-Python fallback.

The term-swap scan is the hot loop of corpus augmentation; at full corpus
scale it dominates the pre-processing stage. This script augments the same
synthetic multilingual corpus with both kernels and reports throughput.

Usage: python benchmarks/bench_scan.py [n_records]
"""

import random
import sys
import time

import mdx.mcda as mcda
from mdx.lexicon import Attribute, builtin_lexicon
from mdx.mcda import AugmentMode, augment_corpus
from mdx.textproc import CorpusRecord


def build_corpus(n: int, seed: int = 13) -> list[CorpusRecord]:
    rng = random.Random(seed)
    lexicon = builtin_lexicon()
    fillers = {
        "EN": "the old house stood quietly beside a long road and nobody cared".split(),
        "DE": "das alte Haus stand ruhig neben der langen Strasse im Dorf".split(),
        "ES": "la casa vieja estaba tranquila junto al camino largo ayer".split(),
        "ZH": list("房子很安静在长路旁边没有人管它了"),
        "JA": list("家は静かで長い道のそばにあった昨日"),
    }
    terms = {
        lang: [s for code, s in lexicon.term_texts() if code == lang] for lang in fillers
    }
    records = []
    languages = list(fillers)
    for i in range(n):
        lang = languages[i % len(languages)]
        cjk = lang in ("ZH", "JA")
        words = [
            rng.choice(terms[lang]) if rng.random() < 0.2 else rng.choice(fillers[lang])
            for _ in range(rng.randint(8, 40))
        ]
        text = ("" if cjk else " ").join(words)
        records.append(CorpusRecord(lang, text, str(i)))
    return records


def run(records, kernel) -> float:
    lexicon = builtin_lexicon()
    saved = mcda._scan
    mcda._scan = kernel
    mcda._swap_table.cache_clear()  # tables are kernel-independent, but be fair
    try:
        started = time.perf_counter()
        out, report = augment_corpus(records, lexicon, set(Attribute), AugmentMode.TWO_SIDED)
        elapsed = time.perf_counter() - started
    finally:
        mcda._scan = saved
    chars = sum(len(r.text) for r in records)
    print(
        f"  {len(records)} records, {chars} chars, "
        f"{report.total_replacements()} replacements: {elapsed:.3f}s "
        f"({chars / elapsed / 1e6:.1f} Mchar/s)"
    )
    return elapsed


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
    records = build_corpus(n)
    try:
        from mdx import _scan
    except ImportError:
        _scan = None
    print("pure-Python kernel:")
    pure = run(records, None)
    if _scan is None:
        print("compiled kernel not built (pip install -e . with Cython available)")
        return 1
    print("compiled kernel:")
    compiled = run(records, _scan)
    print(f"speedup: {pure / compiled:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
