import pytest

from corpusforge import rerank
from corpusforge.errors import ConfigError, DataError
from corpusforge.rerank import NBestEntry, RerankConfig


def test_parse_line():
    groups = rerank.parse_nbest_lines(["0 ||| a b ||| lm= -1.0 ||| -2.5\n"])
    (e,) = groups[0]
    assert (e.sent_id, e.tokens, e.total) == (0, "a b", -2.5)
    assert e.features == [("lm", [-1.0])]


def test_parse_empty_and_grouping():
    assert rerank.parse_nbest_lines([]) == {}
    lines = [f"{i} ||| h{j} ||| f= 0 ||| {-j}" for i in (3, 1) for j in range(12)]
    groups = rerank.parse_nbest_lines(lines)
    assert list(groups) == [3, 1]
    assert [len(g) for g in groups.values()] == [12, 12]
    assert [e.rank for e in groups[1]] == list(range(12))


@pytest.mark.parametrize("line", ["0 ||| a ||| -1", "x ||| a ||| f= 1 ||| 0", "0 ||| a ||| 3 f= ||| 0"])
def test_parse_errors_carry_line_number(line):
    with pytest.raises(DataError, match="line 2"):
        rerank.parse_nbest_lines(["0 ||| ok ||| f= 1 ||| 0", line])


def _write(tmp_path, nbest, r2l):
    (tmp_path / "nb").write_text("".join(l + "\n" for l in nbest))
    (tmp_path / "r2l").write_text("".join(l + "\n" for l in r2l))
    return rerank.parse_nbest(tmp_path / "nb"), rerank.read_r2l_scores(tmp_path / "r2l")


def test_join_annotates_all(tmp_path):
    groups, scores = _write(tmp_path, ["0 ||| a b ||| f= 1 ||| -1", "0 ||| b a ||| f= 1 ||| -2"], ["0\t-3\ta b", "0\t-1\tb a"])
    joined = rerank.join_r2l(groups, scores)
    assert [e.r2l for e in joined[0]] == [-3.0, -1.0]


def test_join_missing_names_hypothesis(tmp_path):
    groups, scores = _write(tmp_path, ["0 ||| a b ||| f= 1 ||| -1", "0 ||| lost one ||| f= 1 ||| -2"], ["0\t-3\ta b"])
    with pytest.raises(DataError, match="lost one"):
        rerank.join_r2l(groups, scores)


def test_conflicting_duplicate_scores(tmp_path):
    with pytest.raises(DataError, match="conflicting"):
        _write(tmp_path, [], ["0\t-3\ta b", "0\t-2\ta b"])


def _group(pairs):
    return [NBestEntry(0, f"h{i}", [], l2r, i, r2l) for i, (l2r, r2l) in enumerate(pairs)]


def test_arithmetic_example():
    (res,) = rerank.rerank({0: _group([(-1, -3), (-2, -1)])})
    assert [e.combined for e in res.ranked] == [-3.0, -4.0]
    assert res.best.tokens == "h1"


def test_zero_r2l_weight_keeps_order():
    g = _group([(-1, -9), (-2, -1), (-3, 0)])
    (res,) = rerank.rerank({0: g}, RerankConfig(w_r2l=0.0))
    assert [e.rank for e in res.ranked] == [0, 1, 2]


def test_constant_r2l_keeps_argmax():
    (res,) = rerank.rerank({0: _group([(-2, -5), (-1, -5), (-3, -5)])})
    assert res.best.rank == 1


def test_ties_go_to_earliest():
    (res,) = rerank.rerank({0: _group([(-2, -1), (-1, -2)])})
    assert res.best.rank == 0


def test_window_and_defaults():
    assert RerankConfig().n == 12
    g = _group([(-5, -5)] * 3 + [(0, 0)])
    (res,) = rerank.rerank({0: g}, RerankConfig(n=3))
    assert len(res.ranked) == 3 and res.best.rank == 0
    with pytest.raises(ConfigError):
        RerankConfig(n=0)
    with pytest.raises(DataError):
        rerank.rerank_group([], RerankConfig())


def test_write_nbest(tmp_path):
    results = rerank.rerank({0: _group([(-1, -3), (-2, -1)])})
    rerank.write_nbest(results, tmp_path / "out")
    back = rerank.parse_nbest(tmp_path / "out")[0]
    assert [e.tokens for e in back] == ["h1", "h0"]
    assert back[0].features == [("R2L", [-1.0])] and back[0].total == -3.0
