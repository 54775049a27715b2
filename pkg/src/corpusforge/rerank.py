"""Right-to-left re-ranking of Moses-format n-best lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, DataError


@dataclass
class NBestEntry:
    sent_id: int
    tokens: str
    features: list[tuple[str, list[float]]] = field(default_factory=list)
    total: float = 0.0
    rank: int = 0
    r2l: float | None = None
    combined: float | None = None

    def to_line(self, score: float | None = None) -> str:
        feats = " ".join(f"{name}= " + " ".join(repr(v) for v in vals) for name, vals in self.features)
        total = self.total if score is None else score
        return f"{self.sent_id} ||| {self.tokens} ||| {feats} ||| {total!r}"


@dataclass(frozen=True)
class RerankConfig:
    n: int = 12
    w_l2r: float = 1.0
    w_r2l: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")


def _parse_features(text: str, lineno: int) -> list[tuple[str, list[float]]]:
    feats: list[tuple[str, list[float]]] = []
    for item in text.split():
        if item.endswith("="):
            feats.append((item[:-1], []))
            continue
        if not feats:
            raise DataError(f"line {lineno}: feature value {item!r} before any feature name")
        try:
            feats[-1][1].append(float(item))
        except ValueError:
            raise DataError(f"line {lineno}: bad feature value {item!r}") from None
    return feats


def parse_nbest_lines(lines: Iterable[str]) -> dict[int, list[NBestEntry]]:
    """Group entries by sentence id, preserving within-group order.

    Groups appear in first-seen order; ids need not be monotone.
    """
    groups: dict[int, list[NBestEntry]] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) < 4:
            raise DataError(f"line {lineno}: expected 'id ||| tokens ||| features ||| total'")
        try:
            sent_id = int(fields[0])
            total = float(fields[3])
        except ValueError:
            raise DataError(f"line {lineno}: bad id or total in {line!r}") from None
        group = groups.setdefault(sent_id, [])
        tokens = " ".join(fields[1].split())
        group.append(NBestEntry(sent_id, tokens, _parse_features(fields[2], lineno), total, len(group)))
    return groups


def parse_nbest(path: str | Path) -> dict[int, list[NBestEntry]]:
    with open(path, encoding="utf-8") as fh:
        return parse_nbest_lines(fh)


def read_r2l_scores(path: str | Path) -> dict[tuple[int, str], float]:
    """Read ``id<TAB>logprob<TAB>tokens``. Conflicting duplicates are an error."""
    scores: dict[tuple[int, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            try:
                if len(parts) != 3:
                    raise ValueError
                key, value = (int(parts[0]), " ".join(parts[2].split())), float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'id<TAB>logprob<TAB>tokens'") from None
            if key in scores and scores[key] != value:
                raise DataError(f"{path}:{lineno}: conflicting scores for id {key[0]} hypothesis {key[1]!r}")
            scores[key] = value
    return scores


def join_r2l(groups: Mapping[int, list[NBestEntry]], r2l_scores: Mapping[tuple[int, str], float]) -> dict[int, list[NBestEntry]]:
    """Attach right-to-left log-probabilities by exact (id, hypothesis) match."""
    missing = []
    for sent_id, entries in groups.items():
        for e in entries:
            score = r2l_scores.get((sent_id, e.tokens))
            if score is None:
                missing.append((sent_id, e.tokens))
            e.r2l = score
    if missing:
        shown = "; ".join(f"{i}: {t!r}" for i, t in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataError(f"{len(missing)} hypothesis(es) lack an R2L score: {shown}{more}")
    return dict(groups)


@dataclass
class RerankResult:
    sent_id: int
    best: NBestEntry
    ranked: list[NBestEntry]


def rerank_group(entries: Sequence[NBestEntry], config: RerankConfig) -> list[NBestEntry]:
    """Sort the first ``config.n`` entries by w_l2r*total + w_r2l*r2l, best
    first; equal scores keep their original n-best order."""
    if not entries:
        raise DataError("cannot re-rank an empty n-best group")
    window = list(entries[: config.n])
    for e in window:
        if e.r2l is None:
            raise DataError(f"entry {e.sent_id}:{e.rank} has no R2L score")
        e.combined = config.w_l2r * e.total + config.w_r2l * e.r2l
    return sorted(window, key=lambda e: (-e.combined, e.rank))


def rerank(groups: Mapping[int, list[NBestEntry]], config: RerankConfig = RerankConfig()) -> list[RerankResult]:
    """Best hypothesis per sentence, in ascending sentence-id order."""
    results = []
    for sent_id in sorted(groups):
        ranked = rerank_group(groups[sent_id], config)
        results.append(RerankResult(sent_id, ranked[0], ranked))
    return results


def write_nbest(results: Iterable[RerankResult], path: str | Path) -> None:
    """Write re-sorted lists; each line carries an ``R2L=`` feature and the combined total."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            for e in res.ranked:
                extra = NBestEntry(e.sent_id, e.tokens, e.features + [("R2L", [e.r2l])], e.total)
                fh.write(extra.to_line(e.combined) + "\n")
