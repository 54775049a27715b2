import itertools
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusforge import lm
from corpusforge.errors import ConfigError, DataError

GOLDEN = Path(__file__).parent / "golden"


def prob(model, w, ctx=()):
    return math.exp(model.logprob(w, list(ctx)))


def test_unigram_hand_counts():
    # Counts a:3 b:1 </s>:1, discount 0.75 (degenerate count-of-counts),
    # back-off mass 0.75*3/5 spread over {a, b, </s>, <unk>}.
    m = lm.lm_train([["a", "a", "a", "b"]], order=1)
    assert prob(m, "a") == pytest.approx(0.5625, abs=1e-15)
    assert prob(m, "b") == pytest.approx(0.1625, abs=1e-15)
    assert prob(m, "</s>") == pytest.approx(0.1625, abs=1e-15)
    assert prob(m, "<unk>") == pytest.approx(0.1125, abs=1e-15)
    assert prob(m, "a") + prob(m, "b") + prob(m, "<unk>") + prob(m, "</s>") == pytest.approx(1.0, abs=1e-15)


def test_single_token_sentence_cross_entropy():
    m = lm.lm_train([["a"]], order=2)
    assert prob(m, "a", ["<s>"]) == pytest.approx(0.53125, abs=1e-15)
    expected = -(m.logprob("a", ["<s>"]) + m.logprob("</s>", ["<s>", "a"])) / 2
    assert lm.lm_cross_entropy(["a"], m) == pytest.approx(expected, abs=1e-15)
    assert lm.lm_cross_entropy(["a"], m) == pytest.approx(-math.log(0.53125), abs=1e-14)


def test_training_sentence_beats_every_permutation():
    sent = ["we", "saw", "the", "red", "fox"]
    m = lm.lm_train([sent], order=2)
    best = lm.sentence_logprob(sent, m)[0]
    others = [lm.sentence_logprob(list(p), m)[0] for p in itertools.permutations(sent) if list(p) != sent]
    assert best > max(others)


def test_uniform_corpus_equal_probs():
    words = ["p", "q", "r", "s", "t"]
    m = lm.lm_train([words, list(reversed(words))], order=1)
    ps = [prob(m, w) for w in words]
    assert max(ps) - min(ps) < 1e-9


def test_uniform_model_closed_form():
    # k word types plus </s> are predicted; <unk> takes one more share.
    k = 9
    m = lm.uniform_model([f"w{i}" for i in range(k)])
    assert lm.lm_cross_entropy(["w1", "w2", "zzz"], m) == pytest.approx(math.log(k + 2), abs=1e-12)


def test_empty_sentence_scores_eos_only():
    m = lm.lm_train([["a", "b"]], order=2)
    assert lm.sentence_logprob([], m) == (m.logprob("</s>", ["<s>"]), 1)


def test_min_count_maps_rare_to_unk():
    m = lm.lm_train([["a", "a", "rare"], ["a", "b", "b"]], order=2, min_count=2)
    assert "rare" not in m.vocab
    assert m.logprob("rare", ["a"]) == m.logprob("<unk>", ["a"])
    assert m.logprob("never", ["<s>"]) == m.logprob("<unk>", ["<s>"])


def test_errors():
    with pytest.raises(DataError):
        lm.lm_train([])
    with pytest.raises(ConfigError):
        lm.lm_train([["a"]], order=0)
    with pytest.raises(ConfigError):
        lm.lm_train([["a"]], order=9)


def _small_corpus(seed=0, n=300):
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(40)]
    return [[vocab[min(int(rng.paretovariate(1.0)) - 1, 39)] for _ in range(rng.randint(1, 12))] for _ in range(n)]


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_conditionals_sum_to_one(order):
    corpus = _small_corpus()
    m = lm.lm_train(corpus, order=order)
    rng = random.Random(order)
    symbols = m.predictable()
    for _ in range(40):
        sent = rng.choice(corpus)
        cut = rng.randint(0, len(sent))
        ctx = ["<s>", *sent[:cut]] if rng.random() < 0.7 else rng.choices(symbols + ["oov"], k=3)
        assert math.fsum(prob(m, w, ctx) for w in symbols) == pytest.approx(1.0, abs=1e-12)


def test_discounts_in_range():
    m = lm.lm_train(_small_corpus(n=2000), order=3)
    for n, (d1, d2, d3) in m.discounts.items():
        assert 0 < d1 < 1 and 0 < d2 < 2 and 0 < d3 < 3


def test_perplexity_relations():
    corpus = _small_corpus()
    m = lm.lm_train(corpus, order=3)
    same_len = [s for s in corpus if len(s) == 5]
    h = [lm.lm_cross_entropy(s, m) for s in same_len]
    assert lm.lm_perplexity(same_len, m) == pytest.approx(math.exp(sum(h) / len(h)), rel=1e-12)
    uniform = lm.uniform_model({t for s in corpus for t in s})
    ppl = lm.lm_perplexity(corpus, m)
    assert 1 < ppl <= lm.lm_perplexity(corpus, uniform)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["w0", "w1", "w3", "w9", "w20", "new"]), max_size=15))
def test_cross_entropy_nonnegative(sent):
    assert lm.lm_cross_entropy(sent, _MODEL) >= 0


_MODEL = lm.lm_train(_small_corpus(seed=4), order=3)


def test_arpa_round_trip(tmp_path):
    corpus = _small_corpus(seed=2)
    m = lm.lm_train(corpus, order=4)
    lm.arpa_export(m, tmp_path / "m.arpa")
    back = lm.arpa_import(tmp_path / "m.arpa")
    assert back.order == 4
    for g, p in m.probs.items():
        assert back.probs[g] == pytest.approx(p, abs=1e-10)
    for s in corpus[:100] + [["oov", "w1"]]:
        assert lm.lm_cross_entropy(s, back) == pytest.approx(lm.lm_cross_entropy(s, m), abs=1e-9)


def test_arpa_data_counts(tmp_path):
    m = lm.lm_train(_small_corpus(seed=5), order=3)
    lm.arpa_export(m, tmp_path / "m.arpa")
    lines = (tmp_path / "m.arpa").read_text().splitlines()
    declared = {int(l.split()[1].split("=")[0]): int(l.split("=")[1]) for l in lines if l.startswith("ngram ")}
    assert declared == m.counts_by_order()


def test_arpa_hand_written_bigram():
    m = lm.arpa_import(GOLDEN / "bigram.arpa")
    assert prob(m, "a", ["<s>"]) == pytest.approx(10**-0.1, rel=1e-12)
    assert prob(m, "a", ["a"]) == pytest.approx(10**-0.2, rel=1e-12)
    assert prob(m, "</s>", ["<s>"]) == pytest.approx(10 ** (-0.30103 - 0.60206), rel=1e-12)
    assert prob(m, "<unk>", ["a"]) == pytest.approx(10 ** (-0.5 - 1.0), rel=1e-12)
    assert prob(m, "zebra", ["a"]) == prob(m, "<unk>", ["a"])


@pytest.mark.parametrize(
    "text, where",
    [
        ("\\data\\\nngram 1=1\n\n\\1-grams:\n-1.0\t<unk>\n", "end"),
        ("\\data\\\nngram x=1\n", ":2:"),
        ("\\data\\\nngram 1=2\n\n\\1-grams:\n-1.0\t<unk>\n\n\\end\\\n", "declared 2"),
        ("junk\n", ":1:"),
        ("\\data\\\nngram 1=1\n\n\\1-grams:\nabc\t<unk>\n\\end\\\n", ":5:"),
    ],
)
def test_arpa_malformed(tmp_path, text, where):
    f = tmp_path / "bad.arpa"
    f.write_text(text)
    with pytest.raises(DataError, match=where):
        lm.arpa_import(f)
