"""Pair scoring by dual conditional cross-entropy, monolingual domain
selection and bitext/back-translation mixture construction."""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

from .corpus import MonoSentence, SentencePair
from .errors import ConfigError, DataError
from .lm import NGramModel, lm_cross_entropy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DccefScore:
    h_fwd: float
    h_bwd: float
    dual: float
    dom_weight: float | None
    final: float


def dual_score(h_fwd: float, h_bwd: float) -> float:
    return math.exp(-(abs(h_fwd - h_bwd) + 0.5 * (h_fwd + h_bwd)))


def dccef_score(h_fwd: float, h_bwd: float, h_in: float | None = None, h_out: float | None = None) -> DccefScore:
    """Score a pair from its forward/backward per-token cross-entropies.

    With both LM entropies given, the dual score is scaled by the domain
    weight ``min(1, exp(h_out - h_in))``.
    """
    if h_fwd < 0 or h_bwd < 0:
        raise ConfigError(f"cross-entropies must be non-negative, got ({h_fwd}, {h_bwd})")
    dual = dual_score(h_fwd, h_bwd)
    weight = None
    if h_in is not None and h_out is not None:
        weight = min(1.0, math.exp(h_out - h_in))
    return DccefScore(h_fwd, h_bwd, dual, weight, dual * (1.0 if weight is None else weight))


def keep_count(fraction: float, n: int) -> int:
    """ceil(fraction * n), ignoring float noise such as 0.3 * 10 = 3.0000000000000004."""
    return math.ceil(round(fraction * n, 9))


def _top_ids(scores: Mapping[int, float], k: int) -> set[int]:
    ranked = sorted(scores, key=lambda i: (-scores[i], i))
    return set(ranked[:k])


def dccef_filter(
    pairs: Sequence[SentencePair],
    scores: Mapping[int, DccefScore],
    fraction: float | None = None,
    threshold: float | None = None,
) -> list[SentencePair]:
    """Keep the top ceil(f*N) pairs by final score, or those with final >= threshold.

    Ties are broken by lower pair id; kept pairs stay in input order.
    """
    if (fraction is None) == (threshold is None):
        raise ConfigError("give exactly one of fraction or threshold")
    missing = [p.id for p in pairs if p.id not in scores]
    if missing:
        raise DataError(f"{len(missing)} pair(s) have no score, first id {missing[0]}")
    if fraction is not None:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"keep fraction must lie in (0, 1], got {fraction}")
        keep = _top_ids({p.id: scores[p.id].final for p in pairs}, keep_count(fraction, len(pairs)))
        return [p for p in pairs if p.id in keep]
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")
    return [p for p in pairs if scores[p.id].final >= threshold]


@dataclass(frozen=True)
class MonoScore:
    h_in: float
    h_out: float
    combined: float


def mono_score(tokens: Sequence[str], lm_in: NGramModel, lm_out: NGramModel) -> MonoScore:
    h_in = lm_cross_entropy(tokens, lm_in)
    h_out = lm_cross_entropy(tokens, lm_out)
    return MonoScore(h_in, h_out, h_out - h_in)


def select_mono(
    corpus: Sequence[MonoSentence],
    scores: Mapping[int, MonoScore],
    strategy: Literal["combined_threshold", "in_domain_top"] = "combined_threshold",
    tau: float = 0.0,
    top_n: int | None = None,
) -> list[MonoSentence]:
    """Select in-domain sentences, returned in original corpus order.

    ``combined_threshold`` keeps combined >= tau; ``in_domain_top`` keeps the
    ``top_n`` sentences with the lowest in-domain cross-entropy (ties by id).
    """
    if strategy == "combined_threshold":
        return [s for s in corpus if scores[s.id].combined >= tau]
    if strategy != "in_domain_top":
        raise ConfigError(f"unknown selection strategy {strategy!r}")
    if top_n is None or top_n < 0:
        raise ConfigError("in_domain_top needs a non-negative top_n")
    if top_n > len(corpus):
        logger.warning("top_n=%d exceeds corpus size %d; keeping everything", top_n, len(corpus))
    ranked = sorted(corpus, key=lambda s: (scores[s.id].h_in, s.id))
    keep = {s.id for s in ranked[:top_n]}
    return [s for s in corpus if s.id in keep]


# --- mixtures -----------------------------------------------------------------

STRATEGIES = ("original_ratio", "upsampled_1_1", "cutoff")


@dataclass(frozen=True)
class MixtureSpec:
    strategy: str = "original_ratio"
    ratio: tuple[int, int] = (1, 1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown mixture strategy {self.strategy!r}")
        a, b = self.ratio
        if a <= 0 or b <= 0:
            raise ConfigError(f"ratio parts must be positive, got {a}:{b}")


def parse_ratio(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*:\s*(\d+)\s*", text)
    if not m:
        raise ConfigError(f"ratio must look like 1:2, got {text!r}")
    return int(m.group(1)), int(m.group(2))


@dataclass
class Mixture:
    pairs: list[SentencePair]
    n_bitext: int
    n_synthetic: int


def build_mixture(
    bitext: Sequence[SentencePair],
    synthetic: Sequence[SentencePair],
    spec: MixtureSpec,
    synthetic_scores: Mapping[int, float] | None = None,
) -> Mixture:
    """Combine bitext with back-translated pairs and shuffle with ``spec.seed``.

    For ``cutoff`` the synthetic side is ranked by ``synthetic_scores``
    (higher is better, ties by id) and truncated to floor(b/a * N_bitext).
    Output ids are renumbered 0..N-1 after shuffling; origins are preserved.
    """
    n_bit, n_syn = len(bitext), len(synthetic)
    rng = random.Random(spec.seed)
    if spec.strategy == "original_ratio":
        bit_part, syn_part = list(bitext), list(synthetic)
    elif spec.strategy == "upsampled_1_1":
        if n_bit == 0:
            raise DataError("upsampling needs a non-empty bitext")
        if n_syn < n_bit:
            raise DataError(f"cannot upsample: synthetic ({n_syn}) smaller than bitext ({n_bit})")
        copies, rest = divmod(n_syn, n_bit)
        extra = sorted(rng.sample(range(n_bit), rest))
        bit_part = list(bitext) * copies + [bitext[i] for i in extra]
        syn_part = list(synthetic)
    else:
        if synthetic_scores is None:
            raise DataError("cutoff mixing needs scored synthetic data")
        a, b = spec.ratio
        want = (b * n_bit) // a
        if want > n_syn:
            logger.warning("cutoff %d:%d wants %d synthetic pairs, only %d available", a, b, want, n_syn)
        ranked = sorted(synthetic, key=lambda p: (-synthetic_scores[p.id], p.id))
        bit_part, syn_part = list(bitext), ranked[:want]
    combined = bit_part + syn_part
    rng.shuffle(combined)
    pairs = [SentencePair(i, p.src, p.tgt, p.origin) for i, p in enumerate(combined)]
    return Mixture(pairs, len(bit_part), len(syn_part))


# --- score files --------------------------------------------------------------

def read_scores(path: str | Path) -> dict[int, float]:
    """Read an ``id<TAB>value`` score file."""
    out: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            try:
                if len(parts) != 2:
                    raise ValueError
                rid, value = int(parts[0]), float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'id<TAB>value'") from None
            if rid in out:
                raise DataError(f"{path}:{lineno}: duplicate id {rid}")
            out[rid] = value
    return out


def write_scores(scores: Iterable[tuple[int, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rid, value in scores:
            fh.write(f"{rid}\t{value!r}\n")
