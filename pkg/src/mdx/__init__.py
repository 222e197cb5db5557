"""Multilingual debiasing toolkit.

Pipeline stages: counterfactual term-swap augmentation of a multilingual
corpus, fine-tuning (full or parameter-efficient) of a desk-scale masked
language model, self-debias distribution rescaling at scoring time, and
sentence-pair bias metrics with tabular reporting. A newline-delimited JSON
protocol lets the same evaluators score external models through bridge
processes.
"""

__version__ = "0.1.0"

from .lexicon import Attribute, TermLexicon, builtin_lexicon, counterpart, parse_lexicon
from .mcda import AugmentMode, augment_corpus, augment_sentence
from .textproc import CorpusRecord, Vocabulary, build_vocab, tokenize

__all__ = [
    "Attribute",
    "TermLexicon",
    "builtin_lexicon",
    "counterpart",
    "parse_lexicon",
    "AugmentMode",
    "augment_corpus",
    "augment_sentence",
    "CorpusRecord",
    "Vocabulary",
    "build_vocab",
    "tokenize",
    "__version__",
]
