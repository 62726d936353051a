"""Checkpoint-evaluation analytics.

Correlates benchmark scores with tokens ingested per (model, benchmark),
keeps the benchmarks whose correlation is above a threshold for every
model, averages the kept benchmarks into a leaderboard, and computes raw
pairwise win rates.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from curatekit.tables import markdown_table

DEFAULT_RELIABILITY_THRESHOLD = 0.6

# flags attached to correlation entries
INSUFFICIENT = "insufficient-points"
TWO_POINT = "two-point"
ZERO_VARIANCE = "zero-variance"
DUPLICATE_TOKENS = "duplicate-tokens"


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Sample Pearson correlation; ``None`` when either series has zero variance."""
    n = len(xs)
    if n != len(ys):
        raise ValueError(f"length mismatch: {n} vs {len(ys)}")
    if n < 2:
        raise ValueError("need at least two points")
    if min(xs) == max(xs) or min(ys) == max(ys):
        return None
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class CheckpointRecord:
    model: str
    benchmark: str
    tokens_ingested: int
    score: float

    def __post_init__(self) -> None:
        if self.tokens_ingested < 0:
            raise ValueError(f"{self.model}/{self.benchmark}: tokens_ingested must be >= 0")


@dataclass(frozen=True)
class Correlation:
    r: float | None
    n: int
    flag: str | None = None

    @property
    def defined(self) -> bool:
        return self.r is not None


@dataclass
class CorrelationTable:
    benchmarks: list[str]
    models: list[str]
    entries: dict[tuple[str, str], Correlation] = field(default_factory=dict)

    def get(self, benchmark: str, model: str) -> Correlation | None:
        return self.entries.get((benchmark, model))

    def r(self, benchmark: str, model: str) -> float | None:
        e = self.get(benchmark, model)
        return None if e is None else e.r

    def to_dict(self) -> dict[str, Any]:
        return {
            "models": self.models,
            "benchmarks": self.benchmarks,
            "entries": [
                {"benchmark": b, "model": m, "r": e.r, "n": e.n, "flag": e.flag}
                for b in self.benchmarks
                for m in self.models
                if (e := self.entries.get((b, m))) is not None
            ],
        }

    def to_markdown(self, selected: Iterable[str] = ()) -> str:
        sel = set(selected)
        rows = []
        for b in self.benchmarks:
            cells: list[Any] = [f"**{b}**" if b in sel else b]
            for m in self.models:
                e = self.entries.get((b, m))
                cells.append("n/a" if e is None or e.r is None else f"{e.r:.2f}")
            rows.append(cells)
        return markdown_table(["Benchmark", *[f"r_{m}" for m in self.models]], rows)

    @classmethod
    def from_matrix(cls, benchmarks: Sequence[str], models: Sequence[str],
                    r: Mapping[str, Mapping[str, float | None]]) -> "CorrelationTable":
        """Table from published coefficients (no per-checkpoint data behind them)."""
        entries = {}
        for b in benchmarks:
            for m in models:
                v = r[b].get(m)
                entries[(b, m)] = Correlation(None if v is None else float(v), 0,
                                              ZERO_VARIANCE if v is None else None)
        return cls(list(benchmarks), list(models), entries)


def correlate_all(
    records: Iterable[CheckpointRecord],
    models: Sequence[str] | None = None,
    benchmarks: Sequence[str] | None = None,
) -> CorrelationTable:
    """Pearson r of score against tokens ingested for every (benchmark, model) pair.

    Pairs with fewer than two checkpoints are flagged and left uncomputed;
    two-point pairs are computed but flagged as degenerate. Column and row
    order default to sorted names so the table does not depend on record order.
    """
    groups: dict[tuple[str, str], list[CheckpointRecord]] = defaultdict(list)
    for rec in records:
        groups[(rec.benchmark, rec.model)].append(rec)
    ms = list(models) if models is not None else sorted({m for _, m in groups})
    bs = list(benchmarks) if benchmarks is not None else sorted({b for b, _ in groups})
    table = CorrelationTable(bs, ms)
    for key, recs in sorted(groups.items()):
        recs = sorted(recs, key=lambda r: (r.tokens_ingested, r.score))
        toks = [r.tokens_ingested for r in recs]
        if any(a == b for a, b in zip(toks, toks[1:])):
            table.entries[key] = Correlation(None, len(recs), DUPLICATE_TOKENS)
            continue
        if len(recs) < 2:
            table.entries[key] = Correlation(None, len(recs), INSUFFICIENT)
            continue
        r = pearson([float(t) for t in toks], [r.score for r in recs])
        flag = ZERO_VARIANCE if r is None else (TWO_POINT if len(recs) == 2 else None)
        table.entries[key] = Correlation(r, len(recs), flag)
    return table


@dataclass(frozen=True)
class Selection:
    selected: tuple[str, ...]
    rejected: tuple[str, ...]
    undefined: tuple[str, ...]
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "selected": list(self.selected),
            "rejected": list(self.rejected),
            "excluded_undefined": list(self.undefined),
        }


def reliability_select(
    table: CorrelationTable,
    threshold: float = DEFAULT_RELIABILITY_THRESHOLD,
    models: Sequence[str] | None = None,
) -> Selection:
    """Benchmarks whose r is strictly above ``threshold`` for every model column.

    A benchmark with any undefined or missing coefficient is excluded and
    reported under ``undefined``.
    """
    ms = list(models) if models is not None else table.models
    selected, rejected, undefined = [], [], []
    for b in table.benchmarks:
        rs = [table.r(b, m) for m in ms]
        if any(r is None for r in rs):
            undefined.append(b)
        elif all(r > threshold for r in rs):
            selected.append(b)
        else:
            rejected.append(b)
    return Selection(tuple(selected), tuple(rejected), tuple(undefined), threshold)


@dataclass(frozen=True)
class LeaderboardRow:
    model: str
    average: float
    scores: tuple[float, ...]


@dataclass(frozen=True)
class Leaderboard:
    benchmarks: tuple[str, ...]
    rows: tuple[LeaderboardRow, ...]
    excluded: dict[str, list[str]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "benchmarks": list(self.benchmarks),
            "rows": [
                {"model": r.model, "average": r.average, "scores": dict(zip(self.benchmarks, r.scores))}
                for r in self.rows
            ],
            "excluded": {m: v for m, v in sorted(self.excluded.items())},
        }

    def to_markdown(self) -> str:
        rows = [[r.model, f"{r.average:.2f}", *[f"{s:g}" for s in r.scores]] for r in self.rows]
        return markdown_table(["Model", "Average", *self.benchmarks], rows)


def leaderboard(scores: Mapping[str, Mapping[str, float]], selected: Sequence[str]) -> Leaderboard:
    """Mean over the selected benchmarks, sorted by descending average then model name.

    Models missing any selected benchmark are left out and listed in ``excluded``.
    """
    if not selected:
        raise ValueError("no benchmarks selected")
    bench = tuple(selected)
    rows, excluded = [], {}
    for model, by_bench in scores.items():
        missing = [b for b in bench if by_bench.get(b) is None]
        if missing:
            excluded[model] = missing
            continue
        vals = tuple(float(by_bench[b]) for b in bench)
        rows.append(LeaderboardRow(model, math.fsum(vals) / len(vals), vals))
    rows.sort(key=lambda r: (-r.average, r.model))
    return Leaderboard(bench, tuple(rows), excluded)


@dataclass(frozen=True)
class WinRecord:
    model: str
    avg_length: int
    wins: int
    base_wins: int
    lc_win_rate: float | None = None
    std_err: float | None = None

    def __post_init__(self) -> None:
        if self.wins < 0 or self.base_wins < 0:
            raise ValueError(f"{self.model}: win counts must be non-negative")

    @property
    def total(self) -> int:
        return self.wins + self.base_wins


def raw_win_rate(rec: WinRecord) -> float:
    if rec.total == 0:
        raise ZeroDivisionError(f"{rec.model}: no judged prompts")
    return rec.wins / rec.total


def win_table(records: Iterable[WinRecord], total_prompts: int | None = None) -> list[dict[str, Any]]:
    """Raw win rate per model next to the externally supplied length-controlled rate."""
    out = []
    for rec in records:
        if total_prompts is not None and rec.total != total_prompts:
            raise ValueError(f"{rec.model}: wins + base_wins = {rec.total}, expected {total_prompts}")
        out.append({
            "model": rec.model,
            "avg_length": rec.avg_length,
            "wins": rec.wins,
            "base_wins": rec.base_wins,
            "raw_win_rate": raw_win_rate(rec),
            "lc_win_rate": rec.lc_win_rate,
            "std_err": rec.std_err,
        })
    return out


def win_table_markdown(rows: list[dict[str, Any]]) -> str:
    return markdown_table(
        ["Model", "Avg. Length", "Wins", "Base Wins", "Raw Win Rate (%)", "LC Win Rate (%)", "Std. Error"],
        [[r["model"], r["avg_length"], r["wins"], r["base_wins"], f"{100 * r['raw_win_rate']:.2f}",
          r["lc_win_rate"], r["std_err"]] for r in rows],
    )


# --- readers --------------------------------------------------------------------


def _opt_float(v: str | None) -> float | None:
    return float(v) if v not in (None, "") else None


def read_checkpoint_records(path: str | Path) -> list[CheckpointRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"model", "benchmark", "tokens_ingested", "score"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(CheckpointRecord(row["model"], row["benchmark"],
                                            int(float(row["tokens_ingested"])), float(row["score"])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def read_win_records(path: str | Path) -> list[WinRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out.append(WinRecord(row["model"], int(row["avg_length"]), int(row["wins"]),
                                     int(row["base_wins"]), _opt_float(row.get("lc_win_rate")),
                                     _opt_float(row.get("std_err"))))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def read_score_matrix(path: str | Path) -> dict[str, dict[str, float]]:
    """CSV with a ``model`` column and one column per benchmark; blank cells are missing."""
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "model" not in (reader.fieldnames or ()):
            raise ValueError(f"{path}: missing 'model' column")
        for lineno, row in enumerate(reader, start=2):
            scores = {}
            for k, v in row.items():
                if k == "model" or k.endswith("_reported") or v in (None, ""):
                    continue
                try:
                    scores[k] = float(v)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: column {k!r} is not a number") from None
            out[row["model"]] = scores
    return out


def read_correlation_table(path: str | Path) -> CorrelationTable:
    """JSON ``{"models": [...], "benchmarks": [...], "r": {benchmark: {model: r}}}``."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return CorrelationTable.from_matrix(obj["benchmarks"], obj["models"], obj["r"])
