"""Punctuation normalization, placeholder masking, tokenization and truecasing."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

_ENTITY = re.compile(r"&(amp|lt|gt|quot|apos);|&#([0-9]+);|&#[xX]([0-9a-fA-F]+);")
_NAMED = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}

_CHAR_MAP = str.maketrans(
    {
        "“": '"', "”": '"', "„": '"', "‟": '"',
        "«": '"', "»": '"', "‹": '"', "›": '"',
        "‘": "'", "’": "'", "‚": "'", "‛": "'", "ʼ": "'",
        "‒": "-", "–": "-", "—": "-", "―": "-",
        " ": " ",
    }
)
_SPACE = re.compile(r"\s+")


def _decode_entity(m: re.Match) -> str:
    if m.group(1):
        return _NAMED[m.group(1)]
    code = int(m.group(2)) if m.group(2) else int(m.group(3), 16)
    if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
        return m.group(0)
    return chr(code)


def decode_entities(text: str) -> str:
    # Repeat until stable so double-escaped input ("&amp;amp;") decodes fully
    # and normalize stays idempotent.
    while True:
        decoded = _ENTITY.sub(_decode_entity, text)
        if decoded == text:
            return text
        text = decoded


def normalize(text: str) -> str:
    text = decode_entities(text)
    text = text.translate(_CHAR_MAP)
    return _SPACE.sub(" ", text).strip()


# --- placeholders ---------------------------------------------------------

KINDS = ("EMAIL", "URL", "TAG")
_PATTERNS = {
    "URL": re.compile(r"(?:https?://|www\.)\S+"),
    "EMAIL": re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}"),
    "TAG": re.compile(r"<[a-zA-Z/!?][^<>]*>"),
}
_URL_TRAILING = ".,;:!?)]}'\""
PLACEHOLDER = re.compile(r"__(EMAIL|URL|TAG)_([0-9]+)__")


@dataclass(frozen=True)
class Slot:
    kind: str
    index: int
    original: str


@dataclass
class PlaceholderMap:
    slots: list[Slot] = field(default_factory=list)

    def lookup(self, kind: str, index: int) -> Slot | None:
        for s in self.slots:
            if s.kind == kind and s.index == index:
                return s
        return None

    def to_json(self) -> str:
        return json.dumps([[s.kind, s.index, s.original] for s in self.slots], ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "PlaceholderMap":
        return cls([Slot(k, int(i), o) for k, i, o in json.loads(line)])


def _candidates(text: str) -> list[tuple[int, int, str]]:
    found = []
    for kind, pat in _PATTERNS.items():
        for m in pat.finditer(text):
            start, end = m.span()
            if kind == "URL":
                while end > start and text[end - 1] in _URL_TRAILING:
                    end -= 1
                if end - start <= len("www."):
                    continue
            found.append((start, end, kind))
    return found


def mask_placeholders(text: str) -> tuple[str, PlaceholderMap]:
    """Replace emails, URLs and XML tags with ``__KIND_n__`` placeholders.

    Overlapping matches are resolved leftmost first, then longest.
    """
    chosen = []
    last_end = 0
    for start, end, kind in sorted(_candidates(text), key=lambda c: (c[0], -(c[1] - c[0]))):
        if start >= last_end:
            chosen.append((start, end, kind))
            last_end = end
    if not chosen:
        return text, PlaceholderMap()
    counters = Counter()
    pieces, slots, pos = [], [], 0
    for start, end, kind in chosen:
        counters[kind] += 1
        slots.append(Slot(kind, counters[kind], text[start:end]))
        pieces.append(text[pos:start])
        pieces.append(f"__{kind}_{counters[kind]}__")
        pos = end
    pieces.append(text[pos:])
    return "".join(pieces), PlaceholderMap(slots)


def unmask(text: str, pmap: PlaceholderMap, counter: Counter | None = None) -> str:
    """Substitute the originals back. Slots that the text no longer mentions are
    ignored and counted under ``counter["unused_slots"]``."""
    used = set()

    def repl(m: re.Match) -> str:
        slot = pmap.lookup(m.group(1), int(m.group(2)))
        if slot is None:
            raise DataError(f"no placeholder slot for {m.group(0)}")
        used.add((slot.kind, slot.index))
        return slot.original

    out = PLACEHOLDER.sub(repl, text)
    unused = len(pmap.slots) - len(used)
    if unused:
        logger.warning("%d placeholder slot(s) unused", unused)
        if counter is not None:
            counter["unused_slots"] += unused
    return out


# --- tokenization ---------------------------------------------------------

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _split_core(chunk: str, out: list[str]) -> None:
    start, end = 0, len(chunk)
    while start < end and _is_punct(chunk[start]):
        start += 1
    while end > start and _is_punct(chunk[end - 1]):
        end -= 1
    out.extend(chunk[:start])
    if start < end:
        out.append(chunk[start:end])
    out.extend(chunk[end:])


def tokenize(text: str) -> list[str]:
    """Regex tokenizer for masked, normalized text.

    Placeholders are atomic; punctuation is peeled off token edges one
    character at a time, so word-internal apostrophes, hyphens and decimal
    separators stay attached.
    """
    tokens: list[str] = []
    for chunk in text.split():
        pos = 0
        for m in PLACEHOLDER.finditer(chunk):
            if m.start() > pos:
                _split_core(chunk[pos:m.start()], tokens)
            tokens.append(m.group(0))
            pos = m.end()
        if pos < len(chunk):
            _split_core(chunk[pos:], tokens)
    return tokens


_NO_SPACE_BEFORE = re.compile(r" ([,.;:!?)\]}%])")
_NO_SPACE_AFTER = re.compile(r"([(\[{]) ")


def detokenize(tokens: Sequence[str]) -> str:
    text = " ".join(tokens)
    text = _NO_SPACE_BEFORE.sub(r"\1", text)
    text = _NO_SPACE_AFTER.sub(r"\1", text)
    return re.sub(" {2,}", " ", text).strip()


def preprocess(text: str) -> tuple[list[str], PlaceholderMap]:
    """normalize -> mask -> tokenize, the per-line chain used by the pipeline."""
    masked, pmap = mask_placeholders(normalize(text))
    return tokenize(masked), pmap


# --- truecasing -----------------------------------------------------------

@dataclass
class TruecaseModel:
    table: dict[str, str] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "TruecaseModel":
        """Build the argmax table; among equal counts the earlier key in
        ``counts`` iteration order wins."""
        table: dict[str, str] = {}
        best: dict[str, int] = {}
        for form, n in counts.items():
            key = form.lower()
            if key not in best or n > best[key]:
                best[key] = n
                table[key] = form
        return cls(table, dict(counts))

    def save(self, path: str | Path) -> None:
        order = {form: i for i, form in enumerate(self.counts)}
        rows = sorted(self.counts.items(), key=lambda kv: (kv[0].lower(), -kv[1], order[kv[0]]))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for form, n in rows:
                fh.write(f"{form}\t{n}\n")

    @classmethod
    def load(cls, path: str | Path) -> "TruecaseModel":
        counts: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2 or not parts[1].isdigit():
                    raise DataError(f"{path}:{lineno}: expected 'form<TAB>count'")
                counts[parts[0]] = int(parts[1])
        return cls.from_counts(counts)


def truecase_counts(corpus: Iterable[Sequence[str]]) -> Counter:
    """Surface-form counts over non-sentence-initial positions, in first-seen order."""
    counts: Counter = Counter()
    for sent in corpus:
        for tok in sent[1:]:
            counts[tok] += 1
    return counts


def truecase_train(corpus: Iterable[Sequence[str]]) -> TruecaseModel:
    return TruecaseModel.from_counts(truecase_counts(corpus))


def merge_truecase_counts(parts: Iterable[Counter]) -> Counter:
    """Sum shard counts. Shards must be given in corpus order so first-seen
    tie-breaking matches a single-pass count."""
    total: Counter = Counter()
    for c in parts:
        for form, n in c.items():
            total[form] += n
    return total


def truecase_apply(tokens: Sequence[str], model: TruecaseModel) -> list[str]:
    out = list(tokens)
    if out:
        cased = model.table.get(out[0].lower())
        if cased is not None:
            out[0] = cased
    return out


def detruecase(tokens: Sequence[str]) -> list[str]:
    out = list(tokens)
    if out and out[0]:
        out[0] = out[0][0].upper() + out[0][1:]
    return out
