"""Synthetic bilingual corpus generator for the end-to-end debiasing check.

The generated world has a controlled gender skew: profession sentences use
male-coded words 9 times out of 10. Two kinds of gendered words carry the
skew: pronouns, which ARE in the augmentation lexicon, and royal titles,
which deliberately are NOT (real term lists never cover everything). A
fraction of the male-skewed sentences also appears with the gender
self-diagnosis prompt prepended, the way biased text and meta-commentary
about bias co-occur in real corpora. That association is what gives the
diagnosis prompt its suppression signal after the pronoun skew itself has
been balanced away by augmentation.
"""

import random

from mdx.biaseval import CrowsPair
from mdx.lexicon import Attribute, parse_lexicon
from mdx.selfdebias import builtin_templates
from mdx.textproc import CorpusRecord

LEXICON = parse_lexicon("gender,EN,he,she\ngender,ZH,他,她\n")

_EN = {
    "professions": ["doctor", "teacher", "pilot", "lawyer"],
    "adjectives": ["tired", "busy", "late", "happy"],
    "places": ["hospital", "school", "airport", "court"],
    "pronouns": ("he", "she"),
    "royals": ("king", "queen"),
}
_ZH = {
    "professions": ["医生", "老师", "飞行员", "律师"],
    "adjectives": ["累", "忙", "晚", "高兴"],
    "places": ["医院", "学校", "机场", "法院"],
    "pronouns": ("他", "她"),
    "royals": ("国王", "女王"),
}

# pronoun sentence frames: {0} profession, {1} pronoun, {2} adjective, {3} place
_EN_PRON_FRAMES = [
    "the {0} said {1} was {2} .",
    "when the {0} arrived {1} looked {2} .",
    "{1} worked as a {0} at the {3} .",
    "yesterday {1} met the {0} near the {3} .",
    "the {0} thinks {1} is {2} .",
    "everyone saw that {1} was a {2} {0} .",
    "{1} asked the {0} about the {3} .",
    "after work {1} felt {2} at the {3} .",
    "the {0} from the {3} said {1} was {2} .",
    "people say {1} became a {0} .",
]
_ZH_PRON_FRAMES = [
    "{0}说{1}很{2}。",
    "{1}是{3}的{0}。",
    "{1}在{3}见了{0}。",
    "昨天{1}觉得很{2}。",
    "{0}觉得{1}很{2}。",
    "{1}问了{0}关于{3}的事。",
    "下班后{1}在{3}很{2}。",
    "大家说{1}当了{0}。",
    "{3}的{0}说{1}很{2}。",
    "{1}帮了{3}的{0}。",
]
_EN_ROYAL_FRAMES = [
    "the {1} met the {0} at the {3} .",
    "the {1} thanked the {0} near the {3} .",
    "the {0} served the {1} at the {3} .",
]
_ZH_ROYAL_FRAMES = [
    "{1}在{3}见了{0}。",
    "{1}在{3}感谢了{0}。",
    "{0}在{3}为{1}服务。",
]


def _prompt_prefix(lang: str) -> str:
    text = builtin_templates().template_for(lang, Attribute.GENDER).prompt_text
    if lang == "EN":
        return text + " "
    return text + "。"


def _fill(frame, words, rng, gendered):
    return frame.format(
        rng.choice(words["professions"]),
        gendered,
        rng.choice(words["adjectives"]),
        rng.choice(words["places"]),
    )


def _sentence(rng, lang, kind, male):
    words = _EN if lang == "EN" else _ZH
    if kind == "pronoun":
        frames = _EN_PRON_FRAMES if lang == "EN" else _ZH_PRON_FRAMES
        return _fill(rng.choice(frames), words, rng, words["pronouns"][0 if male else 1])
    if kind == "royal":
        frames = _EN_ROYAL_FRAMES if lang == "EN" else _ZH_ROYAL_FRAMES
        return _fill(rng.choice(frames), words, rng, words["royals"][0 if male else 1])
    if lang == "EN":
        return f"the {rng.choice(words['places'])} was {rng.choice(words['adjectives'])} ."
    return f"{rng.choice(words['places'])}很{rng.choice(words['adjectives'])}。"


def make_corpus(
    seed: int,
    n_sentences: int = 2000,
    male_share: float = 0.9,
    prompt_share: float = 0.6,
) -> list[CorpusRecord]:
    """n_sentences records, half EN half ZH, 9:1 male/female skew by default.

    The diagnosis prompt is attached only to male royal sentences: its
    association survives pronoun-level augmentation, the way prompt signals
    survive term lists with partial coverage.
    """
    rng = random.Random(seed)
    records = []
    for lang in ("EN", "ZH"):
        for i in range(n_sentences // 2):
            r = rng.random()
            if r < 0.40:
                kind = "pronoun"
            elif r < 0.75:
                kind = "royal"
            else:
                kind = "filler"
            male = rng.random() < male_share
            text = _sentence(rng, lang, kind, male)
            if kind == "royal" and male and rng.random() < prompt_share:
                text = _prompt_prefix(lang) + text
            records.append(CorpusRecord(lang, text, f"{lang}-{i}"))
    return records


def make_eval_pairs(n_pronoun: int = 15, n_royal: int = 5) -> list[CrowsPair]:
    """Stereotype pairs per language: n_pronoun pronoun pairs (lexicon-covered
    skew) and n_royal royal-title pairs (skew the term list misses).

    Stereo side carries the male wording, matching the corpus majority.
    Each pronoun pair uses a different sentence frame so pair outcomes do
    not move in lockstep.
    """
    pairs = []
    for lang, frames, words in (
        ("EN", _EN_PRON_FRAMES, _EN),
        ("ZH", _ZH_PRON_FRAMES, _ZH),
    ):
        for i in range(n_pronoun):
            frame = frames[i % len(frames)]
            prof = words["professions"][i % len(words["professions"])]
            adj = words["adjectives"][(i // 2) % len(words["adjectives"])]
            place = words["places"][(i // 3) % len(words["places"])]
            male, female = words["pronouns"]
            stereo = frame.format(prof, male, adj, place)
            anti = frame.format(prof, female, adj, place)
            pairs.append(
                CrowsPair(f"{lang.lower()}-pron-{i}", lang, Attribute.GENDER, stereo, anti)
            )
    for lang, frames, words in (
        ("EN", _EN_ROYAL_FRAMES, _EN),
        ("ZH", _ZH_ROYAL_FRAMES, _ZH),
    ):
        for i in range(n_royal):
            frame = frames[i % len(frames)]
            prof = words["professions"][i % len(words["professions"])]
            adj = words["adjectives"][(i // 2) % len(words["adjectives"])]
            place = words["places"][(i // 4) % len(words["places"])]
            male, female = words["royals"]
            stereo = frame.format(prof, male, adj, place)
            anti = frame.format(prof, female, adj, place)
            pairs.append(
                CrowsPair(f"{lang.lower()}-royal-{i}", lang, Attribute.GENDER, stereo, anti)
            )
    return pairs
