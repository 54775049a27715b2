"""Boundary-constrained BPE segmentation and UNK-replacement augmentation."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import SentencePair
from .errors import ConfigError, DataError

EOW = "</w>"
CONT = "@@"

Boundaries = Mapping[str, "set[int] | frozenset[int]"]


@dataclass
class MergeTable:
    merges: list[tuple[str, str]] = field(default_factory=list)
    vocab_threshold: int = 0

    def __post_init__(self) -> None:
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for left, right in self.merges:
                fh.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: str | Path) -> "MergeTable":
        merges = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if lineno == 1 and line.startswith("#version"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'left right'")
                merges.append((parts[0], parts[1]))
        return cls(merges)


def load_boundaries(path: str | Path) -> dict[str, frozenset[int]]:
    """Read ``word<TAB>pos1,pos2,...``; positions must lie strictly inside the word."""
    out: dict[str, frozenset[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            try:
                if len(parts) != 2:
                    raise ValueError
                positions = frozenset(int(x) for x in parts[1].split(",") if x)
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'word<TAB>pos,pos,...'") from None
            word = parts[0]
            if any(not 0 < p < len(word) for p in positions):
                raise DataError(f"{path}:{lineno}: boundary outside the interior of {word!r}")
            out[word] = positions
    return out


def _symbols(word: str) -> list[str]:
    return list(word[:-1]) + [word[-1] + EOW]


def _offsets(symbols: Sequence[str]) -> list[int]:
    """End offset (in word characters) of every symbol."""
    ends, pos = [], 0
    for s in symbols:
        pos += len(s) - (len(EOW) if s.endswith(EOW) else 0)
        ends.append(pos)
    return ends


def _pairs(symbols: Sequence[str], blocked: frozenset[int] | set[int]) -> Iterable[tuple[int, tuple[str, str]]]:
    ends = _offsets(symbols) if blocked else None
    for i in range(len(symbols) - 1):
        if blocked and ends[i] in blocked:
            continue
        yield i, (symbols[i], symbols[i + 1])


def _merge_word(symbols: list[str], pair: tuple[str, str], blocked) -> list[str]:
    out, i = [], 0
    ends = _offsets(symbols) if blocked else None
    while i < len(symbols):
        if (
            i + 1 < len(symbols)
            and symbols[i] == pair[0]
            and symbols[i + 1] == pair[1]
            and not (blocked and ends[i] in blocked)
        ):
            out.append(pair[0] + pair[1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def bpe_train(
    corpus: Iterable[Sequence[str]],
    num_merges: int,
    boundaries: Boundaries | None = None,
    min_frequency: int = 2,
) -> MergeTable:
    """Learn merges greedily: most frequent adjacent pair first, ties broken
    by the lexicographically smaller pair. Pairs straddling a morpheme
    boundary are never counted. Stops early once no pair reaches
    ``min_frequency``.
    """
    if num_merges < 1:
        raise ConfigError("num_merges must be >= 1")
    freq = Counter(tok for sent in corpus for tok in sent)
    if not freq:
        raise DataError("cannot learn BPE merges from an empty corpus")
    boundaries = boundaries or {}
    words = sorted(freq)
    segs = [_symbols(w) for w in words]
    blocked = [frozenset(boundaries.get(w, ())) for w in words]
    counts = [freq[w] for w in words]

    pair_count: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for wi, seg in enumerate(segs):
        for _, pair in _pairs(seg, blocked[wi]):
            pair_count[pair] += counts[wi]
            where.setdefault(pair, set()).add(wi)

    merges: list[tuple[str, str]] = []
    while len(merges) < num_merges and pair_count:
        best = min(pair_count, key=lambda p: (-pair_count[p], p))
        if pair_count[best] < min_frequency:
            break
        merges.append(best)
        for wi in sorted(where.get(best, ())):
            old = segs[wi]
            new = _merge_word(old, best, blocked[wi])
            if new == old:
                continue
            for _, pair in _pairs(old, blocked[wi]):
                pair_count[pair] -= counts[wi]
                if pair_count[pair] <= 0:
                    del pair_count[pair]
            for _, pair in _pairs(new, blocked[wi]):
                pair_count[pair] += counts[wi]
                where.setdefault(pair, set()).add(wi)
            segs[wi] = new
        pair_count.pop(best, None)
    return MergeTable(merges, min_frequency)


def segment_word(word: str, table: MergeTable, blocked: frozenset[int] | set[int] = frozenset()) -> list[str]:
    """Apply merges to one word, lowest-rank (earliest learned) pair first."""
    if not word:
        return []
    symbols = _symbols(word)
    ranks = table.ranks
    while len(symbols) > 1:
        best = None
        for i, pair in _pairs(symbols, blocked):
            r = ranks.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        symbols = _merge_word(symbols, best[1], blocked)
    symbols[-1] = symbols[-1][: -len(EOW)]
    return [s + CONT for s in symbols[:-1]] + [symbols[-1]]


def bpe_apply(tokens: Sequence[str], table: MergeTable, boundaries: Boundaries | None = None) -> list[str]:
    boundaries = boundaries or {}
    cache: dict[str, list[str]] = {}
    out: list[str] = []
    for tok in tokens:
        pieces = cache.get(tok)
        if pieces is None:
            pieces = cache[tok] = segment_word(tok, table, frozenset(boundaries.get(tok, ())))
        out.extend(pieces)
    return out


def bpe_undo(subwords: Sequence[str]) -> list[str]:
    out: list[str] = []
    buf = ""
    for piece in subwords:
        if piece.endswith(CONT):
            buf += piece[: -len(CONT)]
        else:
            out.append(buf + piece)
            buf = ""
    if buf:
        out.append(buf)
    return out


# --- UNK augmentation ---------------------------------------------------------

@dataclass
class AugmentConfig:
    k_min: int = 1
    k_max: int = 3
    unk_token: str = "<unk>"
    stopwords: dict[str, frozenset[str]] = field(default_factory=dict)
    src_lang: str = "src"
    tgt_lang: str = "tgt"
    seed: int = 0
    output_ratio: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 1 <= k_min <= k_max, got {self.k_min}, {self.k_max}")
        if self.output_ratio < 0:
            raise ConfigError("output_ratio must be >= 0")
        self.stopwords = {lang: frozenset(w.lower() for w in ws) for lang, ws in self.stopwords.items()}


def content_positions(tokens: Sequence[str], stopwords: frozenset[str] = frozenset()) -> list[int]:
    return [i for i, t in enumerate(tokens) if t.isalpha() and len(t) >= 2 and t.lower() not in stopwords]


def _replace(tokens: list[str], k: int, rng: random.Random, config: AugmentConfig, stop: frozenset[str]) -> list[str]:
    cand = content_positions(tokens, stop)
    for i in rng.sample(cand, min(k, len(cand))):
        tokens[i] = config.unk_token
    return tokens


def unk_augment(corpus: Iterable[SentencePair], config: AugmentConfig) -> list[SentencePair]:
    """Emit ``output_ratio`` synthetic copies of each pair with 1..k content
    words per side replaced by the unknown token.

    One k is drawn per synthetic pair; each side then replaces min(k,
    available) of its content words, sampled independently. Every record gets
    its own RNG seeded from (seed, record id), so output does not depend on how
    the corpus is sharded. Synthetic ids continue the input id sequence.
    """
    out: list[SentencePair] = []
    src_stop = config.stopwords.get(config.src_lang, frozenset())
    tgt_stop = config.stopwords.get(config.tgt_lang, frozenset())
    pairs = list(corpus)
    next_id = max((p.id for p in pairs), default=-1) + 1
    for p in pairs:
        src, tgt = p.src.split(), p.tgt.split()
        if not content_positions(src, src_stop) or not content_positions(tgt, tgt_stop):
            continue
        rng = random.Random(f"{config.seed}:{p.id}")
        for _ in range(config.output_ratio):
            k = rng.randint(config.k_min, config.k_max)
            new_src = _replace(list(src), k, rng, config, src_stop)
            new_tgt = _replace(list(tgt), k, rng, config, tgt_stop)
            out.append(SentencePair(next_id, " ".join(new_src), " ".join(new_tgt), "unk"))
            next_id += 1
    return out
