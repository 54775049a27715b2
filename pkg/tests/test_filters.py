import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusforge import filters
from corpusforge.corpus import SentencePair
from corpusforge.errors import ConfigError, DataError
from corpusforge.filters import FilterConfig, Lexicon


@pytest.fixture(scope="module")
def enpl():
    return filters.langid_train(
        {
            "en": ["the cat sat on the mat", "this is where the house stands", "we think that it works"],
            "pl": ["żółw idzie przez łąkę", "gęś pływa w stawie", "to jest mój dom i ogród", "źle się dzieje"],
        }
    )


def test_langid_obvious_separation():
    model = filters.langid_train({"en": ["the the the"], "pl": ["żółw żółw"]})
    assert filters.langid_classify("the", model)[0] == "en"


def test_langid_polish_fixture(enpl):
    lang, margin = filters.langid_classify("żółw gęś łąka", enpl)
    assert lang == "pl" and margin > 0


def test_langid_training_sentences_self_consistent(enpl):
    assert filters.langid_classify("the cat sat on the mat", enpl)[0] == "en"
    assert filters.langid_classify("gęś pływa w stawie", enpl)[0] == "pl"


def test_langid_empty_is_error(enpl):
    with pytest.raises(DataError):
        filters.langid_classify("", enpl)


def test_langid_single_language_rejected():
    with pytest.raises(ConfigError):
        filters.langid_train({"en": ["x"]})


def test_langid_identical_models_zero_margin():
    model = filters.langid_train({"a": ["same text here"], "b": ["same text here"]})
    assert filters.langid_classify("anything at all", model)[1] == 0.0


def test_langid_margin_duplication_invariant(enpl):
    # Whole-word duplication keeps the per-character mean unchanged.
    m1 = filters.langid_classify("the house", enpl)[1]
    m2 = filters.langid_classify("the house the house", enpl)[1]
    assert m1 == pytest.approx(m2, rel=1e-12)


def test_langid_conditionals_normalize(enpl):
    symbols = sorted(enpl.alphabet) + ["\x00", "\x03"]
    for lang in enpl.langs:
        for ctx in ("\x02\x02", "\x02t", "th", "zq"):
            assert sum(enpl.cond_prob(lang, ctx, c) for c in symbols) == pytest.approx(1.0, abs=1e-12)


def test_langid_json_round_trip(enpl):
    back = filters.LangIdModel.from_json(enpl.to_json())
    assert back.scores("łąka") == enpl.scores("łąka")


@pytest.mark.parametrize(
    "src, tgt, lex, expected",
    [
        ("abc def", "abc def", [], 1.0),
        ("cat", "pies", [("cat", "pies")], 1.0),
        ("cat dog", "pies", [("cat", "pies")], 0.5),
        ("in 2019", "w 2019", [], 0.5),
        ("2019", "2.019", [], 1.0),
        ("computer", "komputer", [], 1.0),
        ("telephone", "telefon", [], 0.0),
        (". ,", "word", [], 0.0),
    ],
)
def test_content_overlap(src, tgt, lex, expected):
    assert filters.content_overlap(src.split(), tgt.split(), Lexicon(lex)) == expected


def test_content_overlap_no_content_detail():
    assert filters.content_overlap_detail(["."], ["x"], Lexicon()) == (0.0, "no-content")


def test_lexicon_load(tmp_path):
    f = tmp_path / "lex.tsv"
    f.write_text("Cat\tpies\t0.5\ndog\tkot\n")
    lex = Lexicon.load(f)
    assert lex.s2t == {"cat": {"pies"}, "dog": {"kot"}}
    f.write_text("cat\tpies\tmaybe\n")
    with pytest.raises(DataError, match="line 1|:1:"):
        Lexicon.load(f)


def _fail(src, tgt, cfg=None, **kw):
    return filters.filter_pair(SentencePair(0, src, tgt), cfg or FilterConfig(), **kw).failed_rule


def test_rule_examples():
    assert _fail("", "x") == "empty"
    assert _fail(" ".join(["w"] * 200), " ".join(["v"] * 200), FilterConfig(max_tokens=128)) == "too_long"
    assert _fail("12345 !!!", "...", FilterConfig(min_letter_ratio=0.5)) == "non_letter"


def test_rules_in_order_first_failure_wins():
    # Corrupted and empty at once: corruption is checked first.
    assert _fail("\x01", "") == "corrupted"
    assert _fail("Same Thing", "same thing") == "identical"
    assert _fail("a b", "a b c d e f g h i j k l") == "length_ratio"
    assert _fail("a b", "c d e f g h i") is None  # 7 <= 3 * 2 + 5


def test_clean_pair_passes():
    v = filters.filter_pair(SentencePair(0, "the cat", "der kater"), FilterConfig())
    assert v.passed and v.failed_rule is None


def test_dedupe():
    a, b, c = SentencePair(0, "a", "b"), SentencePair(1, "a", "b"), SentencePair(2, "a", "c")
    assert filters.dedupe([a, b]) == [a]
    assert filters.dedupe([a, c]) == [a, c]


def test_dedupe_injected():
    rng = random.Random(1)
    base = [SentencePair(i, f"s{i}", f"t{i}") for i in range(900)]
    dups = [SentencePair(900 + j, p.src, p.tgt) for j, p in enumerate(rng.sample(base, 100))]
    mixed = base + dups
    rng.shuffle(mixed)
    out = filters.dedupe(mixed)
    assert len(out) == 900
    assert out == [p for p in mixed if p in set(out)]


def test_report_all_clean():
    pairs = [SentencePair(i, f"word{i} here", f"wort{i} hier") for i in range(20)]
    kept, rep = filters.run_filter_pipeline(pairs, FilterConfig())
    assert rep.retention == 1.0 and set(rep.rejected_by_rule.values()) == {0}
    assert kept == pairs


def test_report_one_violation_per_rule(enpl):
    lex = Lexicon([("cat", "kot")])
    cfg = FilterConfig(max_tokens=20, expected_src_lang="en", expected_tgt_lang="pl")
    ok = "kot i pies"
    rows = [
        ("the cat", ok),  # clean
        ("the cat", ok),  # duplicate
        ("the \x00cat", ok),  # corrupted
        ("", ok),  # empty
        ("kot", "KOT"),  # identical
        (" ".join(["cat"] * 25), " ".join(["kot"] * 25)),  # too_long
        ("the cat", " ".join(["kot"] * 12)),  # length_ratio
        ("123 456 7890", ok),  # non_letter
        ("żółw gęś łąka", ok),  # wrong_language
        ("the house", "źle się dzieje"),  # low_overlap
    ]
    pairs = [SentencePair(i, s, t) for i, (s, t) in enumerate(rows)]
    kept, rep = filters.run_filter_pipeline(pairs, cfg, enpl, lex)
    assert [p.id for p in kept] == [0]
    assert rep.rejected_by_rule == {r: 1 for r in rep.rejected_by_rule}
    assert rep.kept + sum(rep.rejected_by_rule.values()) == rep.input


pair_text = st.text(st.sampled_from(list("ab c.1!\x01")), max_size=25)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(pair_text, pair_text), max_size=40))
def test_report_conservation_and_order(rows):
    pairs = [SentencePair(i, s, t) for i, (s, t) in enumerate(rows)]
    kept, rep = filters.run_filter_pipeline(pairs, FilterConfig(max_tokens=6))
    assert rep.kept + sum(rep.rejected_by_rule.values()) == rep.input == len(pairs)
    ids = [p.id for p in kept]
    assert ids == sorted(ids)


def test_threads_do_not_change_output():
    rng = random.Random(5)
    words = ["ab", "cd", "ef", "1", "!!", "\x02"]
    pairs = [
        SentencePair(i, " ".join(rng.choices(words, k=rng.randint(0, 9))), " ".join(rng.choices(words, k=rng.randint(0, 9))))
        for i in range(400)
    ]
    single = filters.run_filter_pipeline(pairs, FilterConfig())
    multi = filters.run_filter_pipeline(pairs, FilterConfig(), threads=4)
    assert single[0] == multi[0]
    assert single[1].to_dict() == multi[1].to_dict()


def test_config_validation():
    with pytest.raises(ConfigError, match="bogus"):
        FilterConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        FilterConfig(min_overlap=2.0)
