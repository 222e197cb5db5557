import pytest

from mdx.lexicon import parse_lexicon


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {status}: {name}", flush=True)

SMALL_LEXICON_TEXT = """\
# attribute,language,left,right
gender,EN,he,she
gender,EN,him,her
gender,EN,man,woman
gender,ZH,他,她
gender,JA,彼,彼女
race,EN,African,European
race,DE,Afrikanisch,Europäisch
religion,EN,Jewish,Christian
religion,JA,ユダヤ教,キリスト教
"""


@pytest.fixture(scope="session")
def small_lexicon():
    return parse_lexicon(SMALL_LEXICON_TEXT)
