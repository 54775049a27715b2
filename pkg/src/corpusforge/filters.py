"""Heuristic parallel-data filters, character n-gram language ID and the
filtering pipeline with its rejection report."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import SentencePair, chunked
from .errors import ConfigError, DataError

RULES = (
    "corrupted",
    "empty",
    "identical",
    "too_long",
    "length_ratio",
    "non_letter",
    "wrong_language",
    "low_overlap",
)
DUPLICATE = "duplicate"

_CORRUPT = re.compile("[\x00-\x08\x0b-\x1f�]")
_NUMBER = re.compile(r"[0-9]+(?:[.,][0-9]+)*")


@dataclass
class FilterConfig:
    max_tokens: int = 128
    max_len_ratio: float = 3.0
    len_slack: int = 5
    min_letter_ratio: float = 0.5
    min_overlap: float = 0.1
    expected_src_lang: str | None = None
    expected_tgt_lang: str | None = None
    langid_margin: float = 0.0

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.max_len_ratio < 1.0:
            raise ConfigError("max_len_ratio must be >= 1")
        if self.len_slack < 0:
            raise ConfigError("len_slack must be >= 0")
        for name in ("min_letter_ratio", "min_overlap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.langid_margin < 0:
            raise ConfigError("langid_margin must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "FilterConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown filter config key(s): {', '.join(unknown)}")
        return cls(**d)


@dataclass
class Verdict:
    passed: bool
    failed_rule: str | None = None
    details: dict[str, float] = field(default_factory=dict)


# --- language identification ----------------------------------------------

_BOW, _EOW, _UNK = "\x02", "\x03", "\x00"


def _words(text: str) -> list[str]:
    return [w.lower() for w in text.split()]


class LangIdModel:
    """Character 1-3 gram classifier, one multinomial model per language.

    Each word is scored independently, padded with begin/end-of-word marks.
    The per-character probability is the equal-weight mixture of the additively
    smoothed unigram, bigram and trigram conditionals, each a distribution over
    the shared training alphabet plus the unknown and end-of-word symbols.
    """

    order = 3

    def __init__(self, alpha: float = 0.1):
        self.alpha = alpha
        self.alphabet: set[str] = set()
        self.langs: list[str] = []
        # lang -> ngram-string -> count ; lang -> context -> total
        self.counts: dict[str, Counter] = {}
        self.totals: dict[str, Counter] = {}

    @property
    def vsize(self) -> int:
        return len(self.alphabet) + 2

    def _events(self, text: str) -> Iterable[tuple[str, str]]:
        for w in _words(text):
            chars = [c if c in self.alphabet else _UNK for c in w] + [_EOW]
            padded = [_BOW, _BOW] + chars
            for i in range(2, len(padded)):
                yield padded[i - 2] + padded[i - 1], padded[i]

    def cond_prob(self, lang: str, context: str, ch: str) -> float:
        counts, totals = self.counts[lang], self.totals[lang]
        a, V = self.alpha, self.vsize
        p = 0.0
        for ctx in (context, context[1:], ""):
            p += (counts[ctx + ch] + a) / (totals[ctx] + a * V)
        return p / 3.0

    def mean_loglik(self, text: str, lang: str) -> float:
        total, n = 0.0, 0
        for ctx, ch in self._events(text):
            total += math.log(self.cond_prob(lang, ctx, ch))
            n += 1
        if n == 0:
            raise DataError("language ID is undefined on empty text")
        return total / n

    def scores(self, text: str) -> dict[str, float]:
        return {lang: self.mean_loglik(text, lang) for lang in self.langs}

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "alphabet": sorted(self.alphabet),
                "langs": self.langs,
                "counts": {l: dict(sorted(c.items())) for l, c in self.counts.items()},
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, blob: str) -> "LangIdModel":
        obj = json.loads(blob)
        m = cls(obj["alpha"])
        m.alphabet = set(obj["alphabet"])
        m.langs = list(obj["langs"])
        for lang in m.langs:
            m.counts[lang] = Counter(obj["counts"][lang])
            m.totals[lang] = _context_totals(m.counts[lang])
        return m


def _context_totals(counts: Counter) -> Counter:
    totals: Counter = Counter()
    for gram, n in counts.items():
        totals[gram[:-1]] += n
    return totals


def langid_train(corpora: Mapping[str, Iterable[str]], alpha: float = 0.1) -> LangIdModel:
    if len(corpora) < 2:
        raise ConfigError("language ID needs at least two languages")
    texts = {lang: [line for line in lines if line.strip()] for lang, lines in corpora.items()}
    for lang, lines in texts.items():
        if not lines:
            raise ConfigError(f"training corpus for {lang!r} is empty")
    model = LangIdModel(alpha)
    model.alphabet = {c for lines in texts.values() for line in lines for c in "".join(_words(line))}
    model.langs = sorted(texts)
    for lang in model.langs:
        counts: Counter = Counter()
        for line in texts[lang]:
            for ctx, ch in model._events(line):
                counts[ctx + ch] += 1
                counts[ctx[1] + ch] += 1
                counts[ch] += 1
        model.counts[lang] = counts
        model.totals[lang] = _context_totals(counts)
    return model


def langid_classify(text: str, model: LangIdModel) -> tuple[str, float]:
    """Return (best language, best minus second-best mean log-likelihood).

    Ties go to the alphabetically first language.
    """
    ranked = sorted(model.scores(text).items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[0][0], ranked[0][1] - ranked[1][1]


# --- content overlap ----------------------------------------------------------

class Lexicon:
    """Bilingual word lexicon. Entries are lowercased; probabilities are validated and dropped."""

    def __init__(self, entries: Iterable[tuple[str, str]] = ()):
        self.s2t: dict[str, set[str]] = {}
        self.t2s: dict[str, set[str]] = {}
        for s, t in entries:
            self.add(s, t)

    def add(self, s: str, t: str) -> None:
        s, t = s.lower(), t.lower()
        self.s2t.setdefault(s, set()).add(t)
        self.t2s.setdefault(t, set()).add(s)

    def reversed(self) -> "Lexicon":
        rev = Lexicon()
        rev.s2t, rev.t2s = self.t2s, self.s2t
        return rev

    def __len__(self) -> int:
        return sum(len(v) for v in self.s2t.values())

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        lex = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) not in (2, 3):
                    raise DataError(f"{path}:{lineno}: expected 'src<TAB>tgt[<TAB>prob]'")
                if len(parts) == 3:
                    try:
                        float(parts[2])
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: bad probability {parts[2]!r}") from None
                lex.add(parts[0], parts[1])
        return lex


def is_content(token: str) -> bool:
    return token.isalpha() or _NUMBER.fullmatch(token) is not None


@lru_cache(maxsize=1 << 16)
def lcs_ratio(a: str, b: str) -> float:
    """Longest common subsequence length over the longer string's length."""
    if not a or not b:
        return 0.0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b):
            cur.append(prev[j] + 1 if ca == cb else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1] / max(len(a), len(b))


def _digits(token: str) -> str:
    return "".join(c for c in token if c.isdigit())


def _coverage(src: list[str], tgt: list[str], s2t: Mapping[str, set[str]]) -> float:
    tgt_set = set(tgt)
    hits = 0
    for tok in src:
        if tok in tgt_set or not s2t.get(tok, set()).isdisjoint(tgt_set):
            hits += 1
            continue
        d = _digits(tok)
        if d and any(_digits(t) == d for t in tgt_set):
            hits += 1
            continue
        n = len(tok)
        if any(0.7 * max(n, len(t)) <= min(n, len(t)) and lcs_ratio(tok, t) >= 0.7 for t in tgt_set):
            hits += 1
    return hits / len(src)


def content_overlap_detail(src: Sequence[str], tgt: Sequence[str], lexicon: Lexicon) -> tuple[float, str]:
    """Return (min of both coverage directions, detail tag)."""
    s = [t for t in src if is_content(t)]
    t = [x for x in tgt if is_content(x)]
    if not s or not t:
        return 0.0, "no-content"
    return min(_coverage(s, t, lexicon.s2t), _coverage(t, s, lexicon.t2s)), "ok"


def content_overlap(src: Sequence[str], tgt: Sequence[str], lexicon: Lexicon) -> float:
    return content_overlap_detail(src, tgt, lexicon)[0]


# --- pair filter --------------------------------------------------------------

def letter_ratio(text: str) -> float:
    chars = [c for c in text if not c.isspace()]
    if not chars:
        return 0.0
    return sum(c.isalpha() for c in chars) / len(chars)


def filter_pair(
    pair: SentencePair,
    config: FilterConfig,
    langid: LangIdModel | None = None,
    lexicon: Lexicon | None = None,
) -> Verdict:
    """Evaluate the rules in fixed order and stop at the first failure.

    ``pair`` holds normalized, space-tokenized text. The language rule is
    skipped without a model or expected language, the overlap rule without a
    lexicon.
    """
    d: dict[str, float] = {}

    def fail(rule: str) -> Verdict:
        return Verdict(False, rule, d)

    src, tgt = pair.src, pair.tgt
    d["corrupted"] = float(bool(_CORRUPT.search(src) or _CORRUPT.search(tgt)))
    if d["corrupted"]:
        return fail("corrupted")
    s_tok, t_tok = src.split(), tgt.split()
    d["empty"] = float(not s_tok or not t_tok)
    if d["empty"]:
        return fail("empty")
    d["identical"] = float(src.casefold() == tgt.casefold())
    if d["identical"]:
        return fail("identical")
    longer, shorter = max(len(s_tok), len(t_tok)), min(len(s_tok), len(t_tok))
    d["too_long"] = float(longer)
    if longer > config.max_tokens:
        return fail("too_long")
    d["length_ratio"] = longer / shorter
    if longer > config.max_len_ratio * shorter + config.len_slack:
        return fail("length_ratio")
    d["non_letter"] = min(letter_ratio(src), letter_ratio(tgt))
    if d["non_letter"] < config.min_letter_ratio:
        return fail("non_letter")
    if langid is not None:
        for side, text, expected in (("src", src, config.expected_src_lang), ("tgt", tgt, config.expected_tgt_lang)):
            if expected is None:
                continue
            lang, margin = langid_classify(text, langid)
            d[f"langid_{side}_margin"] = margin if lang == expected else -margin
            if lang != expected and margin > config.langid_margin:
                return fail("wrong_language")
    if lexicon is not None:
        d["low_overlap"] = content_overlap(src.lower().split(), tgt.lower().split(), lexicon)
        if d["low_overlap"] < config.min_overlap:
            return fail("low_overlap")
    return Verdict(True, None, d)


def dedupe(corpus: Iterable[SentencePair]) -> list[SentencePair]:
    """Drop exact (src, tgt) repeats, keeping the first occurrence."""
    seen: set[tuple[str, str]] = set()
    out = []
    for p in corpus:
        key = (p.src, p.tgt)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


@dataclass
class FilterReport:
    input: int = 0
    kept: int = 0
    rejected_by_rule: dict[str, int] = field(default_factory=lambda: {r: 0 for r in (DUPLICATE, *RULES)})

    @property
    def retention(self) -> float:
        return self.kept / self.input if self.input else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["retention"] = self.retention
        return d

    def merge(self, other: "FilterReport") -> None:
        self.input += other.input
        self.kept += other.kept
        for rule, n in other.rejected_by_rule.items():
            self.rejected_by_rule[rule] = self.rejected_by_rule.get(rule, 0) + n


def _verdicts(args) -> list[str | None]:
    pairs, config, langid, lexicon = args
    return [filter_pair(p, config, langid, lexicon).failed_rule for p in pairs]


def run_filter_pipeline(
    corpus: Iterable[SentencePair],
    config: FilterConfig,
    langid: LangIdModel | None = None,
    lexicon: Lexicon | None = None,
    remove_duplicates: bool = True,
    threads: int = 1,
) -> tuple[list[SentencePair], FilterReport]:
    """Deduplicate, then apply :func:`filter_pair` to every pair.

    With ``threads > 1`` the pairs are split into contiguous chunks scored in
    worker processes; results are reassembled in input order, so the output
    never depends on the worker count.
    """
    pairs = list(corpus)
    report = FilterReport(input=len(pairs))
    if remove_duplicates:
        unique = dedupe(pairs)
        report.rejected_by_rule[DUPLICATE] = len(pairs) - len(unique)
        pairs = unique
    if threads > 1 and len(pairs) > 1:
        chunks = chunked(pairs, threads)
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_verdicts, [(c, config, langid, lexicon) for c in chunks]))
        failed = [r for chunk in results for r in chunk]
    else:
        failed = _verdicts((pairs, config, langid, lexicon))
    kept = []
    for p, rule in zip(pairs, failed):
        if rule is None:
            kept.append(p)
        else:
            report.rejected_by_rule[rule] += 1
    report.kept = len(kept)
    return kept, report
