"""BPE encoding from vocab/merges files and tokens-per-word compression reports.

Vocab files are JSON maps ``token -> id``; merges files hold one
space-separated pair per line, earlier lines taking priority. Text is split
on whitespace, each unit starts as a sequence of characters, and merges are
applied lowest rank first. Characters outside the vocabulary become
``<0xNN>`` byte tokens when byte fallback is on, ``unk_id`` when an unknown
token is configured, and an :class:`EncodingError` otherwise.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from curatekit.corpus import Document
from curatekit.tables import csv_table, dump_json, text_table

logger = logging.getLogger(__name__)

EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"


class FormatError(ValueError):
    pass


class EncodingError(ValueError):
    pass


def byte_token(b: int) -> str:
    return f"<0x{b:02X}>"


BYTE_TOKENS = tuple(byte_token(b) for b in range(256))


@dataclass
class BpeTokenizer:
    vocab: dict[str, int]
    merges: list[tuple[str, str]]
    unk_id: int | None = None
    eos_token: str = EOS_TOKEN
    byte_fallback: bool = False
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)
    _id_to_token: list[str] = field(init=False, repr=False)
    _cache: dict[str, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        ids = sorted(self.vocab.values())
        if len(set(ids)) != len(ids):
            raise FormatError("duplicate ids in vocab")
        if ids != list(range(len(ids))):
            raise FormatError("vocab ids must be dense in [0, V)")
        ranks: dict[tuple[str, str], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            for sym in (a, b):
                if sym not in self.vocab:
                    raise FormatError(f"merge {rank + 1} ({a} {b}): unknown symbol {sym!r}")
            if a + b not in self.vocab:
                raise FormatError(f"merge {rank + 1} ({a} {b}): result {a + b!r} not in vocab")
            ranks.setdefault((a, b), rank)
        if self.byte_fallback:
            missing = [t for t in BYTE_TOKENS if t not in self.vocab]
            if missing:
                raise FormatError(f"byte_fallback needs all 256 byte tokens; missing {missing[0]} and {len(missing) - 1} more")
        if self.unk_id is not None and not 0 <= self.unk_id < len(self.vocab):
            raise FormatError(f"unk_id {self.unk_id} out of range")
        self._ranks = ranks
        self._id_to_token = [""] * len(self.vocab)
        for tok, i in self.vocab.items():
            self._id_to_token[i] = tok
        self._cache = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def eos_id(self) -> int:
        try:
            return self.vocab[self.eos_token]
        except KeyError:
            raise EncodingError(f"tokenizer has no end-of-text token {self.eos_token!r}") from None

    def with_merge(self, a: str, b: str) -> "BpeTokenizer":
        """Copy with one more merge at the lowest priority; the result joins the vocab if new."""
        vocab = dict(self.vocab)
        vocab.setdefault(a + b, len(vocab))
        return BpeTokenizer(vocab, [*self.merges, (a, b)], self.unk_id, self.eos_token, self.byte_fallback)

    def _merge_word(self, word: str) -> list[str]:
        symbols = list(word)
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for pair in zip(symbols, symbols[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            a, b = best
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return symbols

    def tokenize_word(self, word: str) -> list[str]:
        out: list[str] = []
        for sym in self._merge_word(word):
            if sym in self.vocab:
                out.append(sym)
            elif self.byte_fallback:
                out.extend(byte_token(b) for b in sym.encode("utf-8"))
            elif self.unk_id is not None:
                out.append(self._id_to_token[self.unk_id])
            else:
                raise EncodingError(f"symbol {sym!r} in {word!r} is not in the vocabulary")
        return out

    def _encode_word(self, word: str) -> tuple[int, ...]:
        hit = self._cache.get(word)
        if hit is None:
            hit = tuple(self.vocab[t] for t in self.tokenize_word(word))
            self._cache[word] = hit
        return hit

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in text.split():
            ids.extend(self._encode_word(word))
        return ids

    def decode_word(self, ids: Sequence[int]) -> str:
        """Concatenate token strings of one pre-token unit, reassembling byte tokens."""
        buf = bytearray()
        for i in ids:
            tok = self._id_to_token[i]
            if self.byte_fallback and len(tok) == 6 and tok.startswith("<0x") and tok.endswith(">") and tok in self.vocab:
                buf.append(int(tok[3:5], 16))
            else:
                buf.extend(tok.encode("utf-8"))
        return buf.decode("utf-8")

    def save(self, vocab_file: str | Path, merges_file: str | Path) -> None:
        ordered = dict(sorted(self.vocab.items(), key=lambda kv: kv[1]))
        Path(vocab_file).write_text(json.dumps(ordered, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        Path(merges_file).write_text("".join(f"{a} {b}\n" for a, b in self.merges), encoding="utf-8")


def load_bpe(
    vocab_file: str | Path,
    merges_file: str | Path,
    byte_fallback: bool | None = None,
    unk_token: str | None = UNK_TOKEN,
    eos_token: str = EOS_TOKEN,
) -> BpeTokenizer:
    """Load and validate a tokenizer.

    ``byte_fallback=None`` enables fallback when all 256 ``<0xNN>`` tokens are
    present. ``unk_token`` is used only if it is in the vocab. Lines starting
    with ``#version`` in the merges file are skipped.
    """
    try:
        vocab = json.loads(Path(vocab_file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{vocab_file}: invalid JSON ({exc.msg})") from None
    if not isinstance(vocab, dict) or not all(isinstance(v, int) and not isinstance(v, bool) for v in vocab.values()):
        raise FormatError(f"{vocab_file}: vocab must map token strings to integer ids")
    merges = []
    for lineno, line in enumerate(Path(merges_file).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#version"):
            continue
        parts = line.split(" ")
        if len(parts) != 2 or not all(parts):
            raise FormatError(f"{merges_file}:{lineno}: expected two space-separated symbols")
        merges.append((parts[0], parts[1]))
    if byte_fallback is None:
        byte_fallback = all(t in vocab for t in BYTE_TOKENS)
    unk_id = vocab.get(unk_token) if unk_token is not None else None
    try:
        return BpeTokenizer(vocab, merges, unk_id=unk_id, eos_token=eos_token, byte_fallback=byte_fallback)
    except FormatError as exc:
        raise FormatError(f"{vocab_file} / {merges_file}: {exc}") from None


def encode_corpus(tok: BpeTokenizer, docs: Iterable[Document | str], threads: int = 1) -> int:
    """Total tokens over documents plus one end-of-text separator per document."""
    tok.eos_id  # raises EncodingError when the separator token is missing
    texts = [d.text if isinstance(d, Document) else d for d in docs]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(lambda t: len(tok.encode(t)), texts))
    else:
        counts = [len(tok.encode(t)) for t in texts]
    return sum(counts) + len(texts)


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class CompressionRow:
    tokenizer_name: str
    vocab_size: int | None
    token_count: int | None
    tokens_per_word: float | None
    source: str = "bpe"
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class CompressionReport:
    word_count: int
    rows: tuple[CompressionRow, ...]

    def to_dict(self) -> dict:
        return {
            "word_count": self.word_count,
            "rows": [
                {
                    "tokenizer": r.tokenizer_name, "vocab_size": r.vocab_size, "token_count": r.token_count,
                    "tokens_per_word": r.tokens_per_word, "source": r.source, "error": r.error,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def _rows(self) -> list[list]:
        return [
            [r.tokenizer_name, r.vocab_size, r.token_count,
             None if r.tokens_per_word is None else round(r.tokens_per_word, 4), r.source, r.error or ""]
            for r in self.rows
        ]

    def to_csv(self) -> str:
        return csv_table(["tokenizer", "vocab_size", "token_count", "tokens_per_word", "source", "error"], self._rows())

    def to_text(self) -> str:
        return f"words={self.word_count}\n" + text_table(
            ["Tokenizer", "Vocab", "Tokens", "Tokens/word", "Source", "Error"], self._rows()
        )


def compression_report(
    tokenizers: Mapping[str, BpeTokenizer] | Sequence[tuple[str, BpeTokenizer]],
    text: str,
    external_counts: Mapping[str, tuple[int, int | None]] | None = None,
) -> CompressionReport:
    """One row per tokenizer, sorted by tokens per word then vocab size; failures go last.

    ``external_counts`` maps a name to ``(token_count, vocab_size or None)`` for
    tokenizers encoded elsewhere (e.g. unigram models).
    """
    words = word_count(text)
    if words == 0:
        raise ValueError("reference text has no words")
    items = tokenizers.items() if isinstance(tokenizers, Mapping) else tokenizers
    rows: list[CompressionRow] = []
    for name, tok in items:
        try:
            n = len(tok.encode(text))
        except EncodingError as exc:
            logger.warning("tokenizer %s failed: %s", name, exc)
            rows.append(CompressionRow(name, tok.vocab_size, None, None, "bpe", str(exc)))
            continue
        rows.append(CompressionRow(name, tok.vocab_size, n, n / words, "bpe"))
    for name, (n, vsize) in (external_counts or {}).items():
        rows.append(CompressionRow(name, vsize, n, n / words, "external"))
    ok = sorted(
        (r for r in rows if not r.failed),
        key=lambda r: (r.tokens_per_word, r.vocab_size if r.vocab_size is not None else float("inf")),
    )
    return CompressionReport(words, tuple(ok + [r for r in rows if r.failed]))


def read_external_counts(path: str | Path) -> dict[str, tuple[int, int | None]]:
    """CSV with columns ``tokenizer_name,token_count[,vocab_size]`` (header optional)."""
    out: dict[str, tuple[int, int | None]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip() in ("tokenizer_name", "tokenizer", "name"):
                continue
            try:
                count = int(row[1])
                vsize = int(row[2]) if len(row) > 2 and row[2].strip() else None
            except (IndexError, ValueError):
                raise FormatError(f"{path}:{lineno}: expected name,token_count[,vocab_size]") from None
            out[row[0].strip()] = (count, vsize)
    return out
