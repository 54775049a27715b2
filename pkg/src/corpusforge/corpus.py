"""Record types and deterministic corpus I/O.

Parallel corpora are stored as UTF-8 ``src<TAB>tgt<LF>`` lines, monolingual
corpora as one sentence per line. Every writer returns a :class:`ManifestEntry`
carrying the exact line count and SHA-256 of the bytes written.

``shuffle`` keeps an in-memory index of line offsets (8 bytes per line plus
Python list overhead, roughly 40 bytes per line in total), so a 10M-line file
needs about 400 MB of index memory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal

from .errors import DataError, IntegrityError, RecordError

logger = logging.getLogger(__name__)

ROLES = ("bitext", "synthetic", "mono", "scores", "model", "report", "other")
_FORBIDDEN = ("\t", "\r", "\n")


@dataclass(frozen=True)
class SentencePair:
    id: int
    src: str
    tgt: str
    origin: str = ""


@dataclass(frozen=True)
class MonoSentence:
    id: int
    text: str
    origin: str = ""


@dataclass
class ReadStats:
    """Counts filled in by the readers when running in ``skip`` mode."""

    read: int = 0
    skipped: int = 0
    errors: list[str] = field(default_factory=list)


@dataclass
class ManifestEntry:
    path: str
    role: str
    line_count: int
    sha256: str
    created_by: str = ""


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def add(self, entry: ManifestEntry) -> None:
        self.entries.append(entry)

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries]}, indent=2, sort_keys=True) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls([ManifestEntry(**e) for e in obj["entries"]])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: malformed manifest ({exc})") from exc

    def verify(self, base: str | Path | None = None) -> None:
        """Raise IntegrityError if any file's hash or line count changed.

        Relative entry paths are resolved against ``base``. A missing file
        raises FileNotFoundError (an I/O failure, not an integrity one).
        """
        for entry in self.entries:
            p = Path(entry.path)
            if base is not None and not p.is_absolute():
                p = Path(base) / p
            digest, lines = file_digest(p)
            if digest != entry.sha256:
                raise IntegrityError(f"{entry.path}: sha256 mismatch (expected {entry.sha256}, found {digest})")
            if lines != entry.line_count:
                raise IntegrityError(f"{entry.path}: line count {lines} != recorded {entry.line_count}")


def file_digest(path: str | Path) -> tuple[str, int]:
    """Return (sha256 hex digest, number of LF characters) of a file."""
    h = hashlib.sha256()
    lines = 0
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
            lines += chunk.count(b"\n")
    return h.hexdigest(), lines


def entry_for(path: str | Path, role: str, created_by: str = "", relative_to: str | Path | None = None) -> ManifestEntry:
    if role not in ROLES:
        raise ValueError(f"unknown manifest role {role!r}")
    digest, lines = file_digest(path)
    shown = Path(path)
    if relative_to is not None:
        shown = shown.relative_to(relative_to)
    return ManifestEntry(path=shown.as_posix(), role=role, line_count=lines, sha256=digest, created_by=created_by)


def config_hash(config: object) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def _check_text(text: str, what: str, rec_id: int) -> None:
    for ch in _FORBIDDEN:
        if ch in text:
            raise DataError(f"record {rec_id}: {what} contains {ch!r}")


def _iter_lines(path: str | Path) -> Iterator[tuple[int, bytes]]:
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            yield lineno, raw[:-1] if raw.endswith(b"\n") else raw


def _handle(err: RecordError, errors: str, stats: ReadStats | None) -> None:
    if errors == "strict":
        raise err
    if stats is not None:
        stats.skipped += 1
        stats.errors.append(str(err))
    logger.debug("skipping %s", err)


def read_parallel(
    path: str | Path,
    errors: Literal["strict", "skip"] = "strict",
    stats: ReadStats | None = None,
    origin: str = "",
) -> Iterator[SentencePair]:
    """Yield pairs from a ``src<TAB>tgt`` file with ids 0..N-1 in file order.

    Ids count valid records only, so skipped lines do not leave gaps.
    """
    next_id = 0
    for lineno, raw in _iter_lines(path):
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            _handle(RecordError(f"malformed UTF-8 ({exc.reason})", lineno), errors, stats)
            continue
        if "\r" in line:
            _handle(RecordError("carriage return in record", lineno), errors, stats)
            continue
        if line.count("\t") != 1:
            _handle(RecordError(f"expected exactly one tab, found {line.count(chr(9))}", lineno), errors, stats)
            continue
        src, tgt = line.split("\t")
        if stats is not None:
            stats.read += 1
        yield SentencePair(next_id, src, tgt, origin)
        next_id += 1


def read_mono(
    path: str | Path,
    errors: Literal["strict", "skip"] = "strict",
    stats: ReadStats | None = None,
    origin: str = "",
) -> Iterator[MonoSentence]:
    next_id = 0
    for lineno, raw in _iter_lines(path):
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            _handle(RecordError(f"malformed UTF-8 ({exc.reason})", lineno), errors, stats)
            continue
        if "\r" in line or "\t" in line:
            _handle(RecordError("tab or carriage return in monolingual line", lineno), errors, stats)
            continue
        if stats is not None:
            stats.read += 1
        yield MonoSentence(next_id, line, origin)
        next_id += 1


class _HashingWriter:
    def __init__(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "wb")
        self.sha = hashlib.sha256()
        self.lines = 0

    def write_line(self, text: str) -> None:
        data = text.encode("utf-8") + b"\n"
        self._fh.write(data)
        self.sha.update(data)
        self.lines += 1

    def close(self) -> None:
        self._fh.close()


def write_parallel(
    records: Iterable[SentencePair],
    path: str | Path,
    role: str = "bitext",
    created_by: str = "",
) -> ManifestEntry:
    """Write pairs as ``src<TAB>tgt<LF>``; abort with the record id on a bad record.

    On abort the partially written file is left in place for inspection.
    """
    out = _HashingWriter(path)
    try:
        for rec in records:
            _check_text(rec.src, "src", rec.id)
            _check_text(rec.tgt, "tgt", rec.id)
            out.write_line(f"{rec.src}\t{rec.tgt}")
    finally:
        out.close()
    return ManifestEntry(Path(path).as_posix(), role, out.lines, out.sha.hexdigest(), created_by)


def write_mono(
    records: Iterable[MonoSentence | str],
    path: str | Path,
    role: str = "mono",
    created_by: str = "",
) -> ManifestEntry:
    out = _HashingWriter(path)
    try:
        for i, rec in enumerate(records):
            text = rec if isinstance(rec, str) else rec.text
            _check_text(text, "text", i if isinstance(rec, str) else rec.id)
            out.write_line(text)
    finally:
        out.close()
    return ManifestEntry(Path(path).as_posix(), role, out.lines, out.sha.hexdigest(), created_by)


def _line_offsets(path: str | Path) -> list[int]:
    offsets = []
    pos = 0
    with open(path, "rb") as fh:
        for raw in fh:
            offsets.append(pos)
            pos += len(raw)
    offsets.append(pos)
    return offsets


def _read_line(fh, offsets: list[int], i: int) -> bytes:
    fh.seek(offsets[i])
    raw = fh.read(offsets[i + 1] - offsets[i])
    return raw if raw.endswith(b"\n") else raw + b"\n"


def shuffle(path: str | Path, seed: int, out_path: str | Path | None = None) -> Path:
    """Write a seeded permutation of the lines of ``path``.

    The permutation is a Fisher-Yates shuffle of the line-offset index driven
    by ``random.Random(seed)``, so equal seeds give byte-identical output.
    """
    path = Path(path)
    out = Path(out_path) if out_path is not None else path.with_name(path.name + f".shuf{seed}")
    offsets = _line_offsets(path)
    order = list(range(len(offsets) - 1))
    random.Random(seed).shuffle(order)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "rb") as src, open(out, "wb") as dst:
        for i in order:
            dst.write(_read_line(src, offsets, i))
    return out


def shard(path: str | Path, k: int, out_dir: str | Path | None = None) -> list[Path]:
    """Split a file round-robin by line into ``k`` shards (line i goes to shard i mod k)."""
    if k < 1:
        raise ValueError(f"shard count must be >= 1, got {k}")
    path = Path(path)
    out_dir = Path(out_dir) if out_dir is not None else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = [out_dir / f"{path.name}.shard{j:03d}-of-{k:03d}" for j in range(k)]
    handles = [open(p, "wb") for p in outs]
    try:
        with open(path, "rb") as fh:
            for i, raw in enumerate(fh):
                handles[i % k].write(raw if raw.endswith(b"\n") else raw + b"\n")
    finally:
        for h in handles:
            h.close()
    return outs


def merge(paths: list[str | Path], out_path: str | Path, interleave: bool = True) -> Path:
    """Merge shards. Interleaved merge inverts :func:`shard`; otherwise concatenate."""
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    handles = [open(p, "rb") for p in paths]
    try:
        with open(out, "wb") as dst:
            if interleave:
                live = list(handles)
                while live:
                    still = []
                    for h in live:
                        raw = h.readline()
                        if raw:
                            dst.write(raw if raw.endswith(b"\n") else raw + b"\n")
                            still.append(h)
                    live = still
            else:
                for h in handles:
                    for raw in h:
                        dst.write(raw if raw.endswith(b"\n") else raw + b"\n")
    finally:
        for h in handles:
            h.close()
    return out


def chunked(items: list, n_chunks: int) -> list[list]:
    """Split a list into at most ``n_chunks`` contiguous, order-preserving chunks."""
    n_chunks = max(1, min(n_chunks, len(items) or 1))
    size, rem = divmod(len(items), n_chunks)
    out, start = [], 0
    for j in range(n_chunks):
        stop = start + size + (1 if j < rem else 0)
        out.append(items[start:stop])
        start = stop
    return out
