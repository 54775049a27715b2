import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusforge import segaug
from corpusforge.corpus import SentencePair
from corpusforge.errors import ConfigError, DataError
from corpusforge.segaug import AugmentConfig, MergeTable

GOLDEN = Path(__file__).parent / "golden"
LOW_CORPUS = [["low"]] * 5 + [["lower"]] * 2 + [["lowest"]] * 3


def test_single_dominant_pair():
    assert segaug.bpe_train([["aa", "aa", "aa"]], 1, min_frequency=1).merges == [("a", "a</w>")]


def test_low_lower_lowest_golden():
    golden = [tuple(line.split()) for line in (GOLDEN / "bpe_low_merges.txt").read_text().splitlines()]
    assert segaug.bpe_train(LOW_CORPUS, len(golden)).merges == golden


def test_min_frequency_stops_early():
    table = segaug.bpe_train(LOW_CORPUS, 100, min_frequency=3)
    assert all(m in table.merges for m in [("l", "o"), ("lo", "w")])
    assert ("lowe", "r</w>") not in table.merges


def test_boundary_blocks_merges():
    corpus = [["playing"]] * 10 + [["play"]] * 3
    bounds = {"playing": {4}}
    table = segaug.bpe_train(corpus, 50, bounds, min_frequency=1)
    pieces = segaug.bpe_apply(["playing"], table, bounds)
    assert segaug.bpe_undo(pieces) == ["playing"]
    ends, pos = set(), 0
    for p in pieces:
        pos += len(p.removesuffix("@@"))
        ends.add(pos)
    assert 4 in ends
    assert pieces[0] == "play@@"


def test_untrained_word_is_char_split():
    assert segaug.bpe_apply(["xyz"], MergeTable()) == ["x@@", "y@@", "z"]
    assert segaug.bpe_apply(["q"], MergeTable()) == ["q"]


def test_undo_example():
    assert segaug.bpe_undo(["un@@", "known"]) == ["unknown"]


@settings(max_examples=200)
@given(st.lists(st.text(st.characters(blacklist_categories=("Cs", "Zs", "Cc"), blacklist_characters="@"), min_size=1, max_size=12), max_size=8))
def test_round_trip(words):
    # '@' is excluded: a word ending in the continuation marker is ambiguous by construction.
    table = segaug.bpe_train(LOW_CORPUS + [["lowly", "slow"]], 20, min_frequency=1)
    assert segaug.bpe_undo(segaug.bpe_apply(words, table)) == words


def test_merge_table_save_load(tmp_path):
    table = segaug.bpe_train(LOW_CORPUS, 7)
    table.save(tmp_path / "codes")
    assert MergeTable.load(tmp_path / "codes").merges == table.merges


def test_load_boundaries(tmp_path):
    f = tmp_path / "b.tsv"
    f.write_text("playing\t4\nunhappy\t2,5\n")
    assert segaug.load_boundaries(f) == {"playing": frozenset({4}), "unhappy": frozenset({2, 5})}
    f.write_text("cat\t3\n")
    with pytest.raises(DataError):
        segaug.load_boundaries(f)


def test_bpe_errors():
    with pytest.raises(DataError):
        segaug.bpe_train([], 5)
    with pytest.raises(ConfigError):
        segaug.bpe_train(LOW_CORPUS, 0)


def test_augment_clamps_to_available():
    pair = SentencePair(0, "cat .", "kot .")
    conf = AugmentConfig(k_min=3, k_max=3)
    (out,) = segaug.unk_augment([pair], conf)
    assert out.src == "<unk> ." and out.tgt == "<unk> ."
    assert out.id == 1 and out.origin == "unk"


def test_augment_skips_pairs_without_content():
    assert segaug.unk_augment([SentencePair(0, "1 2 .", "a b")], AugmentConfig()) == []


def test_augment_respects_stopwords():
    conf = AugmentConfig(k_min=3, k_max=3, stopwords={"src": {"the"}, "tgt": {"der"}})
    (out,) = segaug.unk_augment([SentencePair(0, "the red cat", "der rote kater")], conf)
    assert out.src == "the <unk> <unk>" and out.tgt == "der <unk> <unk>"


def test_augment_deterministic_and_shard_independent():
    rng = random.Random(2)
    words = ["alpha", "beta", "gamma", "delta", "x", "9", ",", "of"]
    pairs = [SentencePair(i, " ".join(rng.choices(words, k=6)), " ".join(rng.choices(words, k=5))) for i in range(200)]
    conf = AugmentConfig(seed=5, output_ratio=2)
    whole = segaug.unk_augment(pairs, conf)
    assert whole == segaug.unk_augment(pairs, conf)
    halves = segaug.unk_augment(pairs[:100], conf) + segaug.unk_augment(pairs[100:], conf)
    assert [(p.src, p.tgt) for p in whole] == [(p.src, p.tgt) for p in halves]


def test_augment_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(k_min=0)
    with pytest.raises(ConfigError):
        AugmentConfig(k_min=3, k_max=2)
