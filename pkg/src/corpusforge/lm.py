"""Interpolated modified Kneser-Ney n-gram language model with ARPA I/O.

The trained model is stored in back-off form (the same form ARPA files use):
``probs`` maps every stored n-gram to its interpolated log-probability and
``backoffs`` maps contexts to the log interpolation weight of the next-lower
order. Looking up an unseen n-gram by backing off reproduces the interpolated
estimate exactly. All logs are natural; ARPA files carry log10 values.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
LN10 = math.log(10.0)
FALLBACK_DISCOUNT = 0.75
# ARPA convention for the never-predicted <s> unigram.
_ARPA_NEVER = -99.0

Ngram = tuple[str, ...]


@dataclass
class NGramModel:
    order: int
    vocab: set[str] = field(default_factory=set)
    probs: dict[Ngram, float] = field(default_factory=dict)
    backoffs: dict[Ngram, float] = field(default_factory=dict)
    discounts: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    def logprob(self, word: str, context: Sequence[str]) -> float:
        """Natural-log P(word | context); OOV words are scored as <unk>."""
        if word not in self.vocab:
            word = UNK
        keep = self.order - 1
        ctx = tuple(c if c in self.vocab else UNK for c in context[max(0, len(context) - keep):]) if keep else ()
        penalty = 0.0
        while True:
            p = self.probs.get(ctx + (word,))
            if p is not None:
                return penalty + p
            if not ctx:
                raise DataError(f"model has no unigram for {word!r}")
            penalty += self.backoffs.get(ctx, 0.0)
            ctx = ctx[1:]

    def predictable(self) -> list[str]:
        """Every symbol with a probability of being generated (all but <s>)."""
        return sorted(w for w in self.vocab if w != BOS)

    def counts_by_order(self) -> dict[int, int]:
        c = Counter(len(g) for g in self.probs)
        return {n: c.get(n, 0) for n in range(1, self.order + 1)}


def _pad(tokens: Sequence[str], vocab: set[str] | None) -> list[str]:
    if vocab is None:
        return [BOS, *tokens, EOS]
    return [BOS, *(t if t in vocab else UNK for t in tokens), EOS]


def _discounts(counts: Iterable[int]) -> tuple[float, float, float]:
    """Chen-Goodman D1, D2, D3+ from count-of-counts, or 0.75 for all three
    when the statistics are degenerate (a zero count-of-count or a discount
    outside (0, k))."""
    coc = Counter(c for c in counts if c <= 4)
    n1, n2, n3, n4 = (coc.get(k, 0) for k in (1, 2, 3, 4))
    if min(n1, n2, n3, n4) == 0:
        return (FALLBACK_DISCOUNT,) * 3
    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if not all(0 < dk < k for k, dk in zip((1, 2, 3), d)):
        return (FALLBACK_DISCOUNT,) * 3
    return d


def lm_train(corpus: Iterable[Sequence[str]], order: int = 4, min_count: int = 1) -> NGramModel:
    """Train an interpolated modified Kneser-Ney model on tokenized sentences.

    Sentences are padded with a single <s> and </s>. Lower orders use
    continuation counts, except n-grams starting with <s>, which keep their
    raw counts because they cannot be extended to the left.
    """
    if not 1 <= order <= 5:
        raise ConfigError(f"order must lie in [1, 5], got {order}")
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise DataError("cannot train a language model on an empty corpus")

    vocab: set[str] | None = None
    if min_count > 1:
        freq = Counter(t for s in sentences for t in s)
        vocab = {t for t, c in freq.items() if c >= min_count}

    raw: list[Counter] = [Counter() for _ in range(order + 1)]
    for s in sentences:
        padded = _pad(s, vocab)
        for i in range(1, len(padded)):
            for n in range(1, min(order, i + 1) + 1):
                raw[n][tuple(padded[i - n + 1:i + 1])] += 1

    adjusted: list[Counter] = [Counter() for _ in range(order + 1)]
    adjusted[order] = raw[order]
    for n in range(1, order):
        adj = Counter()
        for g, c in raw[n].items():
            if g[0] == BOS:
                adj[g] = c
        for g in raw[n + 1]:
            if g[1] != BOS:
                adj[g[1:]] += 1
        adjusted[n] = adj

    words = {g[0] for g in raw[1]} | {UNK}
    model = NGramModel(order=order, vocab=words | {BOS})
    uniform = 1.0 / len(words)

    for n in range(1, order + 1):
        counts = adjusted[n]
        d1, d2, d3 = _discounts(counts.values())
        model.discounts[n] = (d1, d2, d3)
        ctx_total: Counter = Counter()
        ctx_n: dict[Ngram, list[int]] = {}
        for g, c in counts.items():
            h = g[:-1]
            ctx_total[h] += c
            bucket = ctx_n.setdefault(h, [0, 0, 0])
            bucket[min(c, 3) - 1] += 1
        gamma = {
            h: (d1 * b[0] + d2 * b[1] + d3 * b[2]) / ctx_total[h] for h, b in ctx_n.items()
        }
        for g in sorted(counts):
            c = counts[g]
            h, w = g[:-1], g[-1]
            disc = (d1, d2, d3)[min(c, 3) - 1]
            lower = uniform if n == 1 else math.exp(model.logprob(w, h[1:]))
            p = max(c - disc, 0.0) / ctx_total[h] + gamma[h] * lower
            model.probs[g] = math.log(p)
        if n == 1:
            for w in sorted(words - {g[0] for g in counts}):
                model.probs[(w,)] = math.log(gamma[()] * uniform)
        else:
            for h in sorted(gamma):
                model.backoffs[h] = math.log(gamma[h])
    model.probs[(BOS,)] = _ARPA_NEVER * LN10
    return model


def sentence_logprob(tokens: Sequence[str], model: NGramModel) -> tuple[float, int]:
    """Total natural-log probability and number of predicted events (T + 1)."""
    ctx: list[str] = [BOS]
    total = 0.0
    for w in [*tokens, EOS]:
        total += model.logprob(w, ctx)
        ctx.append(w)
    return total, len(tokens) + 1


def lm_cross_entropy(tokens: Sequence[str], model: NGramModel) -> float:
    """Per-token cross-entropy in nats, end-of-sentence event included."""
    total, n = sentence_logprob(tokens, model)
    return -total / n


def lm_perplexity(corpus: Iterable[Sequence[str]], model: NGramModel) -> float:
    total, events = 0.0, 0
    for s in corpus:
        lp, n = sentence_logprob(s, model)
        total += lp
        events += n
    if events == 0:
        raise DataError("perplexity of an empty corpus is undefined")
    return math.exp(-total / events)


def uniform_model(symbols: Iterable[str]) -> NGramModel:
    """Unigram model assigning equal mass to ``symbols`` plus </s> and <unk>."""
    words = set(symbols) | {EOS, UNK}
    words.discard(BOS)
    lp = -math.log(len(words))
    model = NGramModel(order=1, vocab=words | {BOS})
    model.probs = {(w,): lp for w in sorted(words)}
    model.probs[(BOS,)] = _ARPA_NEVER * LN10
    return model


# --- ARPA ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    v = x / LN10
    return "-99" if abs(v - _ARPA_NEVER) < 1e-9 else repr(v)


def arpa_export(model: NGramModel, path: str | Path) -> None:
    by_order: dict[int, list[Ngram]] = {n: [] for n in range(1, model.order + 1)}
    for g in model.probs:
        by_order[len(g)].append(g)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write(f"ngram {n}={len(by_order[n])}\n")
        for n in range(1, model.order + 1):
            fh.write(f"\n\\{n}-grams:\n")
            for g in sorted(by_order[n]):
                line = f"{_fmt(model.probs[g])}\t{' '.join(g)}"
                if n < model.order and g in model.backoffs:
                    line += f"\t{_fmt(model.backoffs[g])}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


_COUNT = re.compile(r"ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION = re.compile(r"\\(\d+)-grams:$")


def arpa_import(path: str | Path) -> NGramModel:
    def err(lineno: int, msg: str) -> DataError:
        return DataError(f"{path}:{lineno}: {msg}")

    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh]
    i = 0
    while i < len(lines) and lines[i] != "\\data\\":
        if lines[i]:
            raise err(i + 1, "expected \\data\\ header")
        i += 1
    if i == len(lines):
        raise err(i, "missing \\data\\ header")
    i += 1
    declared: dict[int, int] = {}
    while i < len(lines) and lines[i]:
        m = _COUNT.match(lines[i])
        if not m:
            raise err(i + 1, f"malformed count line {lines[i]!r}")
        declared[int(m.group(1))] = int(m.group(2))
        i += 1
    if not declared or sorted(declared) != list(range(1, max(declared) + 1)):
        raise err(i, "n-gram counts must cover orders 1..N")
    model = NGramModel(order=max(declared))
    seen: Counter = Counter()
    n = 0
    ended = False
    for j in range(i, len(lines)):
        line = lines[j]
        if not line:
            continue
        if line == "\\end\\":
            ended = True
            break
        m = _SECTION.match(line)
        if m:
            n = int(m.group(1))
            if n not in declared:
                raise err(j + 1, f"section for undeclared order {n}")
            continue
        if n == 0:
            raise err(j + 1, "n-gram entry outside a section")
        parts = line.split()
        if len(parts) not in (n + 1, n + 2):
            raise err(j + 1, f"expected {n}-gram entry, got {line!r}")
        try:
            lp = float(parts[0]) * LN10
            bo = float(parts[n + 1]) * LN10 if len(parts) == n + 2 else None
        except ValueError:
            raise err(j + 1, f"non-numeric score in {line!r}") from None
        g = tuple(parts[1:n + 1])
        model.probs[g] = lp
        if bo is not None:
            model.backoffs[g] = bo
        if n == 1:
            model.vocab.add(g[0])
        seen[n] += 1
    if not ended:
        raise err(len(lines), "missing \\end\\ marker")
    for k, c in declared.items():
        if seen[k] != c:
            raise err(i, f"declared {c} {k}-grams, found {seen[k]}")
    model.vocab.add(UNK)
    if (UNK,) not in model.probs:
        raise DataError(f"{path}: model has no <unk> unigram")
    return model
