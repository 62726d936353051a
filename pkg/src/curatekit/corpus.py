"""Documents, line-delimited JSON ingestion, and per-subset manifests."""

from __future__ import annotations

import io
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Iterable, Iterator, Mapping, Union

from curatekit.tables import dump_json, text_table

logger = logging.getLogger(__name__)

QUALITY_LABELS = ("high", "low")
DEFAULT_MAX_RECORD_BYTES = 8 * 1024 * 1024
DEFAULT_SUBSET = "unknown"
RESERVED_FIELDS = ("id", "subset", "text", "label", "confidence")

Source = Union[str, Path, IO[bytes], IO[str], Iterable[Union[str, bytes]]]


class RecordError(ValueError):
    """A single input record failed validation."""


@dataclass(frozen=True)
class Document:
    id: str
    subset: str
    text: str
    sequence_no: int
    quality_label: str | None = None
    quality_confidence: float | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.subset, str) or not self.subset:
            raise RecordError("subset must be a non-empty string")
        if not isinstance(self.text, str):
            raise RecordError("text must be a string")
        if (self.quality_label is None) != (self.quality_confidence is None):
            raise RecordError("label and confidence must be given together")
        if self.quality_label is not None:
            if self.quality_label not in QUALITY_LABELS:
                raise RecordError(f"unknown quality label {self.quality_label!r}")
            if not 0.0 <= self.quality_confidence <= 1.0:
                raise RecordError(f"confidence {self.quality_confidence!r} outside [0, 1]")

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"id": self.id, "subset": self.subset, "text": self.text}
        if self.quality_label is not None:
            rec["label"] = self.quality_label
            rec["confidence"] = self.quality_confidence
        rec.update(self.metadata)
        return rec


@dataclass
class IngestStats:
    """Counters filled in while an ingestion generator is consumed."""

    lines: int = 0
    documents: int = 0
    malformed: int = 0
    oversize: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return self.malformed + self.oversize

    def to_dict(self) -> dict[str, Any]:
        return {
            "lines": self.lines,
            "documents": self.documents,
            "malformed": self.malformed,
            "oversize": self.oversize,
            "skipped": self.skipped,
        }


def _iter_raw_lines(source: Source) -> Iterator[bytes]:
    if isinstance(source, (str, Path)):
        if str(source) == "-":
            yield from sys.stdin.buffer
            return
        with open(source, "rb") as fh:
            yield from fh
        return
    for line in source:
        yield line.encode("utf-8") if isinstance(line, str) else line


def _parse_record(raw: bytes, sequence_no: int) -> Document:
    try:
        line = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise RecordError(f"invalid UTF-8: {exc}") from None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise RecordError("missing or non-string 'text'")
    subset = obj.get("subset", DEFAULT_SUBSET)
    if not isinstance(subset, str) or not subset:
        raise RecordError("'subset' must be a non-empty string")
    doc_id = obj.get("id")
    if doc_id is None:
        doc_id = f"{subset}-{sequence_no}"
    elif not isinstance(doc_id, str):
        doc_id = str(doc_id)
    label = obj.get("label")
    confidence = obj.get("confidence")
    if confidence is not None:
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise RecordError("'confidence' must be a number")
        confidence = float(confidence)
    metadata = {k: v for k, v in obj.items() if k not in RESERVED_FIELDS}
    return Document(
        id=doc_id,
        subset=subset,
        text=text,
        sequence_no=sequence_no,
        quality_label=label,
        quality_confidence=confidence,
        metadata=metadata,
    )


def ingest_stream(
    source: Source,
    stats: IngestStats | None = None,
    max_record_bytes: int = DEFAULT_MAX_RECORD_BYTES,
    start_sequence: int = 0,
) -> Iterator[Document]:
    """Yield documents from a JSONL source in input order.

    ``source`` is a path, ``"-"`` for stdin, or any iterable of lines.
    Malformed and oversize lines are skipped and tallied in ``stats``;
    blank lines are ignored. Sequence numbers count accepted documents.
    """
    stats = stats if stats is not None else IngestStats()
    seq = start_sequence
    for lineno, raw in enumerate(_iter_raw_lines(source), start=1):
        stats.lines += 1
        if len(raw) > max_record_bytes:
            stats.oversize += 1
            stats.errors.append((lineno, f"record exceeds {max_record_bytes} bytes"))
            logger.warning("line %d: record exceeds %d bytes, skipped", lineno, max_record_bytes)
            continue
        if not raw.strip():
            stats.lines -= 1
            continue
        try:
            doc = _parse_record(raw.rstrip(b"\r\n"), seq)
        except RecordError as exc:
            stats.malformed += 1
            stats.errors.append((lineno, str(exc)))
            logger.warning("line %d: %s, skipped", lineno, exc)
            continue
        stats.documents += 1
        seq += 1
        yield doc


def dumps_document(doc: Document) -> str:
    return json.dumps(doc.to_record(), ensure_ascii=False)


def write_documents(docs: Iterable[Document], out: str | Path | IO[str]) -> int:
    """Write documents as JSONL to a path, ``"-"``, or a text stream. Returns the count."""
    if isinstance(out, (str, Path)):
        if str(out) == "-":
            return write_documents(docs, sys.stdout)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_documents(docs, fh)
    n = 0
    for doc in docs:
        out.write(dumps_document(doc))
        out.write("\n")
        n += 1
    return n


def read_documents(path: str | Path, **kwargs: Any) -> list[Document]:
    return list(ingest_stream(path, **kwargs))


def documents_from_texts(texts: Iterable[str], subset: str = DEFAULT_SUBSET) -> list[Document]:
    lines = [json.dumps({"text": t, "subset": subset}) for t in texts]
    return list(ingest_stream(io.StringIO("\n".join(lines))))


# --- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class SubsetStats:
    subset: str
    doc_count: int
    share: float
    token_count: int | None = None


@dataclass(frozen=True)
class CorpusManifest:
    subsets: tuple[SubsetStats, ...]
    total_docs: int
    total_tokens: int | None = None

    def share_of(self, subset: str) -> float:
        for s in self.subsets:
            if s.subset == subset:
                return s.share
        raise KeyError(subset)

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_docs": self.total_docs,
            "total_tokens": self.total_tokens,
            "subsets": [
                {
                    "subset": s.subset,
                    "doc_count": s.doc_count,
                    "token_count": s.token_count,
                    "share": s.share,
                }
                for s in self.subsets
            ],
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def to_text(self) -> str:
        rows = [
            [s.subset, s.doc_count, f"{100 * s.share:.2f}%", s.token_count]
            for s in self.subsets
        ]
        rows.append(["Total", self.total_docs, "100.00%" if self.total_docs else "-", self.total_tokens])
        return text_table(["Subset", "Docs", "%", "Tokens"], rows)


class ManifestBuilder:
    """Accumulates per-subset counts; builders over shards merge associatively."""

    def __init__(self, count_tokens: Callable[[str], int] | None = None) -> None:
        self.count_tokens = count_tokens
        self.docs: Counter[str] = Counter()
        self.tokens: Counter[str] = Counter()

    def add(self, doc: Document) -> None:
        self.docs[doc.subset] += 1
        if self.count_tokens is not None:
            self.tokens[doc.subset] += self.count_tokens(doc.text)

    def merge(self, other: "ManifestBuilder") -> "ManifestBuilder":
        merged = ManifestBuilder(self.count_tokens)
        merged.docs = self.docs + other.docs
        merged.tokens = self.tokens + other.tokens
        return merged

    def build(self) -> CorpusManifest:
        token_counts = dict(self.tokens) if self.count_tokens is not None else None
        return manifest_from_counts(dict(self.docs), token_counts)


def manifest_from_counts(
    doc_counts: Mapping[str, int], token_counts: Mapping[str, int] | None = None
) -> CorpusManifest:
    """Manifest from explicit per-subset counts, ordered by descending doc count then name."""
    for name, n in doc_counts.items():
        if n < 0:
            raise ValueError(f"negative doc count for {name!r}")
    total = sum(doc_counts.values())
    order = sorted(doc_counts, key=lambda s: (-doc_counts[s], s))
    subsets = tuple(
        SubsetStats(
            subset=s,
            doc_count=doc_counts[s],
            share=doc_counts[s] / total if total else 0.0,
            token_count=None if token_counts is None else token_counts.get(s, 0),
        )
        for s in order
    )
    total_tokens = None if token_counts is None else sum(token_counts.values())
    return CorpusManifest(subsets=subsets, total_docs=total, total_tokens=total_tokens)


def build_manifest(
    docs: Iterable[Document], count_tokens: Callable[[str], int] | None = None
) -> CorpusManifest:
    builder = ManifestBuilder(count_tokens)
    for doc in docs:
        builder.add(doc)
    return builder.build()
