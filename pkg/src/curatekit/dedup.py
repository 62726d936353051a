"""Exact-hash deduplication with a keep-first policy.

Fingerprints are XXH3-128 digests of whitespace-normalized text, seeded with
an integer key. The first document (lowest ``sequence_no``) carrying a
fingerprint is kept; later ones are dropped.
"""

from __future__ import annotations

import heapq
import logging
import tempfile
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
import xxhash

from curatekit.corpus import Document
from curatekit.tables import dump_json, text_table

logger = logging.getLogger(__name__)

DEFAULT_KEY = 0
DIGEST_BITS = 128


def normalize_for_hash(text: str) -> str:
    """Trim and collapse whitespace runs to one space. Case and Unicode form are untouched."""
    return " ".join(text.split())


@dataclass(frozen=True, order=True)
class Fingerprint:
    digest: int

    @property
    def hex(self) -> str:
        return f"{self.digest:032x}"

    def shard(self, n_bits: int) -> int:
        """Index from the top ``n_bits`` of the digest."""
        return self.digest >> (DIGEST_BITS - n_bits) if n_bits else 0


def _digest(text: str, key: int) -> int:
    return xxhash.xxh3_128_intdigest(normalize_for_hash(text).encode("utf-8"), seed=key)


def fingerprint(text: str, key: int = DEFAULT_KEY) -> Fingerprint:
    return Fingerprint(_digest(text, key))


@dataclass
class DedupReport:
    input_count: int = 0
    kept_count: int = 0
    removed_count: int = 0
    removed_by_subset: dict[str, int] = field(default_factory=dict)

    def _record_removed(self, subset: str) -> None:
        self.removed_count += 1
        self.removed_by_subset[subset] = self.removed_by_subset.get(subset, 0) + 1

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "removed_count": self.removed_count,
            "removed_by_subset": dict(sorted(self.removed_by_subset.items())),
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def to_text(self) -> str:
        rows = [[s, n] for s, n in sorted(self.removed_by_subset.items())]
        head = (
            f"input={self.input_count} kept={self.kept_count} removed={self.removed_count}\n"
        )
        return head + text_table(["Subset", "Removed"], rows)


def _check_order(prev: int | None, doc: Document) -> int:
    if prev is not None and doc.sequence_no <= prev:
        raise ValueError(
            f"document {doc.id!r}: sequence_no {doc.sequence_no} is not increasing (previous {prev})"
        )
    return doc.sequence_no


def iter_unique(
    docs: Iterable[Document], report: DedupReport | None = None, key: int = DEFAULT_KEY
) -> Iterator[Document]:
    """Stream the first occurrence of each fingerprint, updating ``report`` as it goes."""
    report = report if report is not None else DedupReport()
    seen: set[int] = set()
    prev = None
    for doc in docs:
        prev = _check_order(prev, doc)
        report.input_count += 1
        d = _digest(doc.text, key)
        if d in seen:
            report._record_removed(doc.subset)
            continue
        seen.add(d)
        report.kept_count += 1
        yield doc


def deduplicate(docs: Iterable[Document], key: int = DEFAULT_KEY) -> tuple[list[Document], DedupReport]:
    report = DedupReport()
    kept = list(iter_unique(docs, report, key))
    return kept, report


def _dedup_shard(shard: list[tuple[int, int, Document]]) -> tuple[list[Document], list[str]]:
    seen: set[int] = set()
    kept: list[Document] = []
    removed: list[str] = []
    for _, d, doc in shard:
        if d in seen:
            removed.append(doc.subset)
        else:
            seen.add(d)
            kept.append(doc)
    return kept, removed


def deduplicate_sharded(
    docs: Iterable[Document],
    shard_bits: int = 4,
    threads: int = 1,
    key: int = DEFAULT_KEY,
) -> tuple[list[Document], DedupReport]:
    """Parallel dedup: partition by the top ``shard_bits`` of the digest, each
    shard owning a private seen-set, then merge kept documents by sequence_no.

    Output is identical to :func:`deduplicate` for any ``shard_bits``/``threads``.
    """
    if not 0 <= shard_bits <= 16:
        raise ValueError("shard_bits must be in [0, 16]")
    shards: list[list[tuple[int, int, Document]]] = [[] for _ in range(1 << shard_bits)]
    prev = None
    n = 0
    for doc in docs:
        prev = _check_order(prev, doc)
        d = _digest(doc.text, key)
        idx = d >> (DIGEST_BITS - shard_bits) if shard_bits else 0
        shards[idx].append((doc.sequence_no, d, doc))
        n += 1
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(_dedup_shard, shards))
    kept = list(heapq.merge(*(r[0] for r in results), key=lambda doc: doc.sequence_no))
    removed = Counter(s for r in results for s in r[1])
    report = DedupReport(
        input_count=n,
        kept_count=len(kept),
        removed_count=sum(removed.values()),
        removed_by_subset=dict(removed),
    )
    return kept, report


# --- spill-to-disk mode --------------------------------------------------------

_RUN_DTYPE = np.dtype([("hi", "<u8"), ("lo", "<u8"), ("seq", "<i8")])


class _BucketWriter:
    def __init__(self, directory: Path, n_buckets: int, prefix: str, dtype: np.dtype, flush_at: int) -> None:
        self.paths = [directory / f"{prefix}-{i:04d}.bin" for i in range(n_buckets)]
        self.buffers: list[list[tuple]] = [[] for _ in range(n_buckets)]
        self.dtype = dtype
        self.flush_at = flush_at
        for p in self.paths:
            p.write_bytes(b"")

    def add(self, bucket: int, item: tuple) -> None:
        buf = self.buffers[bucket]
        buf.append(item)
        if len(buf) >= self.flush_at:
            self._flush(bucket)

    def _flush(self, bucket: int) -> None:
        buf = self.buffers[bucket]
        if buf:
            with open(self.paths[bucket], "ab") as fh:
                np.array(buf, dtype=self.dtype).tofile(fh)
            buf.clear()

    def close(self) -> list[Path]:
        for i in range(len(self.buffers)):
            self._flush(i)
        return self.paths


def deduplicate_external(
    open_docs: Callable[[], Iterable[Document]],
    workdir: str | Path | None = None,
    bucket_bits: int = 6,
    flush_at: int = 65536,
    key: int = DEFAULT_KEY,
) -> tuple[Iterator[Document], DedupReport]:
    """Dedup for corpora whose digest set does not fit in memory.

    Pass one writes ``(digest, sequence_no)`` records to on-disk buckets keyed
    by digest prefix; each bucket is sorted and the non-first sequence numbers
    per digest are written out as drop runs partitioned by sequence range.
    Pass two re-opens the source via ``open_docs`` and skips dropped documents.
    The report is complete once the returned iterator is exhausted.
    """
    n_buckets = 1 << bucket_bits
    tmp = tempfile.TemporaryDirectory(dir=workdir, prefix="dedup-")
    root = Path(tmp.name)

    digests = _BucketWriter(root, n_buckets, "digest", _RUN_DTYPE, flush_at)
    input_count = 0
    prev = None
    max_seq = -1
    for doc in open_docs():
        prev = _check_order(prev, doc)
        d = _digest(doc.text, key)
        digests.add(d >> (DIGEST_BITS - bucket_bits), (d >> 64, d & 0xFFFFFFFFFFFFFFFF, doc.sequence_no))
        input_count += 1
        max_seq = doc.sequence_no
    digest_paths = digests.close()

    span = max(1, (max_seq + n_buckets) // n_buckets)
    drops = _BucketWriter(root, n_buckets, "drop", np.dtype("<i8"), flush_at)
    for path in digest_paths:
        run = np.fromfile(path, dtype=_RUN_DTYPE)
        path.unlink()
        if run.size == 0:
            continue
        run = run[np.lexsort((run["seq"], run["lo"], run["hi"]))]
        same = (run["hi"][1:] == run["hi"][:-1]) & (run["lo"][1:] == run["lo"][:-1])
        for seq in run["seq"][1:][same]:
            drops.add(min(int(seq) // span, n_buckets - 1), (int(seq),))
    drop_paths = drops.close()
    logger.info("external dedup: %d documents hashed into %d buckets", input_count, n_buckets)

    report = DedupReport(input_count=input_count)

    def replay() -> Iterator[Document]:
        try:
            current = -1
            drop_set: set[int] = set()
            for doc in open_docs():
                b = min(doc.sequence_no // span, n_buckets - 1)
                if b != current:
                    current = b
                    drop_set = set(np.fromfile(drop_paths[b], dtype="<i8").tolist())
                if doc.sequence_no in drop_set:
                    report._record_removed(doc.subset)
                    continue
                report.kept_count += 1
                yield doc
        finally:
            tmp.cleanup()

    return replay(), report
