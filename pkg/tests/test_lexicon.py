import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdx.errors import LexiconFormatError
from mdx.lexicon import (
    Attribute,
    TermLexicon,
    TermPair,
    builtin_lexicon,
    counterpart,
    parse_lexicon,
    serialize_lexicon,
    validate,
)


def test_parse_basic_rows():
    lex = parse_lexicon("gender,EN,he,she\ngender,ZH,他,她\n")
    assert counterpart(lex, "he", "EN") == ("she", Attribute.GENDER)
    assert counterpart(lex, "他", "ZH") == ("她", Attribute.GENDER)


def test_parse_empty_file():
    lex = parse_lexicon("")
    assert lex.pairs == ()
    assert counterpart(lex, "he", "EN") is None


def test_parse_skips_comments_and_blanks():
    lex = parse_lexicon("# header\n\ngender,EN,he,she\n")
    assert len(lex.pairs) == 1


def test_counterpart_examples(small_lexicon):
    assert counterpart(small_lexicon, "Jewish", "EN") == ("Christian", Attribute.RELIGION)
    assert counterpart(small_lexicon, "African", "EN") == ("European", Attribute.RACE)
    assert counterpart(small_lexicon, "table", "EN") is None


def test_counterpart_case_insensitive_space_delimited(small_lexicon):
    # lookup folds case, returned surface keeps the lexicon's casing
    assert counterpart(small_lexicon, "JEWISH", "EN") == ("Christian", Attribute.RELIGION)
    assert counterpart(small_lexicon, "european", "EN") == ("African", Attribute.RACE)


def test_counterpart_cjk_exact(small_lexicon):
    assert counterpart(small_lexicon, "彼女", "JA") == ("彼", Attribute.GENDER)
    assert counterpart(small_lexicon, "ユダヤ教", "JA") == ("キリスト教", Attribute.RELIGION)


@pytest.mark.parametrize(
    "content, fragment",
    [
        ("gender,EN,he", "line 1"),
        ("gender,EN,he,she,extra", "line 1"),
        ("color,EN,he,she", "unknown attribute"),
        ("gender,XX,he,she", "unknown language"),
        ("gender,EN,,she", "empty term"),
        ("gender,EN,he,she\ngender,EN,he,him", "already listed"),
        ("gender,EN,he,she\nrace,EN,she,her", "already listed"),
    ],
)
def test_parse_errors(content, fragment):
    with pytest.raises(LexiconFormatError, match=fragment):
        parse_lexicon(content)


def test_parse_reports_line_numbers():
    with pytest.raises(LexiconFormatError) as err:
        parse_lexicon("# comment\ngender,EN,he,she\nbadrow\n")
    assert err.value.line == 3


def test_symmetry_round_trip(small_lexicon):
    for lang_code, surface in small_lexicon.term_texts():
        other, _attr = counterpart(small_lexicon, surface, lang_code)
        back, _attr = counterpart(small_lexicon, other, lang_code)
        assert back == surface


def test_serialize_parse_round_trip(small_lexicon):
    text = serialize_lexicon(small_lexicon)
    again = parse_lexicon(text)
    assert set(again.pairs) == set(small_lexicon.pairs)
    assert serialize_lexicon(again) == text


def test_validate_clean(small_lexicon):
    assert validate(small_lexicon) == []


def test_validate_duplicate_term():
    lex = TermLexicon(
        pairs=(
            TermPair(Attribute.GENDER, "EN", "he", "she"),
            TermPair(Attribute.GENDER, "EN", "he", "him"),
        )
    )
    problems = validate(lex)
    assert len(problems) == 1 and "'he'" in problems[0]


def test_validate_degenerate_pair():
    lex = TermLexicon(pairs=(TermPair(Attribute.GENDER, "EN", "He", "he"),))
    problems = validate(lex)
    assert len(problems) == 1 and "degenerate" in problems[0]


def test_builtin_lexicon_is_valid():
    lex = builtin_lexicon()
    assert validate(lex) == []
    assert {"EN", "DE", "ES", "ZH", "JA"} <= set(lex.languages())


_words = st.lists(
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=6),
    min_size=4,
    max_size=12,
    unique=True,
)


@given(words=_words, data=st.data())
def test_validate_matches_invariants(words, data):
    """validate() returns [] exactly when the typed invariants hold."""
    words = words[: len(words) - len(words) % 2]
    pairs = [
        TermPair(Attribute.GENDER, "EN", words[i], words[i + 1])
        for i in range(0, len(words), 2)
    ]
    corrupt = data.draw(st.sampled_from(["none", "duplicate", "degenerate"]))
    if corrupt == "duplicate" and len(pairs) >= 2:
        pairs[1] = TermPair(Attribute.GENDER, "EN", pairs[0].left, pairs[1].right)
    elif corrupt == "degenerate":
        pairs[0] = TermPair(Attribute.GENDER, "EN", pairs[0].left, pairs[0].left.upper())
    lex = TermLexicon(pairs=tuple(pairs))
    problems = validate(lex)
    if corrupt == "none" or (corrupt == "duplicate" and len(pairs) < 2):
        assert problems == []
    else:
        assert problems
