"""Repeated-epoch data mixtures and token-budget arithmetic.

All token arithmetic is exact integer math, checked against the signed
64-bit range so totals that would overflow a fixed-width counter are
rejected rather than wrapped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from curatekit.tables import text_table

logger = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1
DEFAULT_REPEAT_CAP = 4
DEFAULT_TOLERANCE = 0.01


def _checked(value: int, what: str) -> int:
    if value > INT64_MAX:
        raise OverflowError(f"{what} = {value} exceeds the signed 64-bit range")
    return value


def _require_int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"{what} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class SubsetPlan:
    subset: str
    token_count: int
    repeat_factor: int = 1
    filtered_docs: int = 0

    @property
    def mixed_tokens(self) -> int:
        return self.token_count * self.repeat_factor


@dataclass(frozen=True)
class MixturePlan:
    rows: tuple[SubsetPlan, ...]
    raw_total_tokens: int
    mixed_total_tokens: int
    repeat_cap: int = DEFAULT_REPEAT_CAP
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "repeat_cap": self.repeat_cap,
            "raw_total_tokens": self.raw_total_tokens,
            "mixed_total_tokens": self.mixed_total_tokens,
            "warnings": list(self.warnings),
            "rows": [
                {
                    "subset": r.subset,
                    "filtered_docs": r.filtered_docs,
                    "token_count": r.token_count,
                    "repeat_factor": r.repeat_factor,
                    "mixed_tokens": r.mixed_tokens,
                }
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        rows = [[r.subset, r.filtered_docs, r.repeat_factor, r.token_count, r.mixed_tokens] for r in self.rows]
        rows.append(["Total", sum(r.filtered_docs for r in self.rows), None, self.raw_total_tokens, self.mixed_total_tokens])
        return text_table(["Subset", "Filtered docs", "Repeat", "Tokens", "Mixed tokens"], rows)


def plan_mixture(rows: Iterable[SubsetPlan], cap: int = DEFAULT_REPEAT_CAP) -> MixturePlan:
    """Totals for a mixture; factors above ``cap`` are warned about, not rejected."""
    rows = tuple(rows)
    notes = []
    raw = mixed = 0
    for r in rows:
        _require_int(r.token_count, f"{r.subset}: token_count")
        _require_int(r.repeat_factor, f"{r.subset}: repeat_factor")
        if r.token_count < 0:
            raise ValueError(f"{r.subset}: token_count must be non-negative")
        _checked(r.token_count, f"{r.subset}: token_count")
        if r.repeat_factor < 1:
            raise ValueError(f"{r.subset}: repeat_factor must be >= 1, got {r.repeat_factor}")
        if r.repeat_factor > cap:
            msg = f"{r.subset}: repeat factor {r.repeat_factor} exceeds the cap of {cap} epochs"
            logger.warning(msg)
            notes.append(msg)
        raw = _checked(raw + r.token_count, "raw total")
        mixed = _checked(mixed + _checked(r.mixed_tokens, f"{r.subset}: mixed tokens"), "mixed total")
    return MixturePlan(rows, raw, mixed, cap, tuple(notes))


def epochs_plan(raw_total: int, epochs: int) -> int:
    _require_int(epochs, "epochs")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if raw_total < 0:
        raise ValueError("raw_total must be non-negative")
    return _checked(raw_total * epochs, "epoch total")


def tokens_per_parameter(total_tokens: int | float, n_params: int) -> float:
    if n_params <= 0:
        raise ValueError("n_params must be positive")
    return total_tokens / n_params


def steps_to_tokens(steps: int, batch_tokens: int) -> int:
    if steps <= 0 or batch_tokens <= 0:
        raise ValueError("steps and batch_tokens must be positive")
    return _checked(steps * batch_tokens, "steps x batch")


def compare_reported(computed: float, reported: float, tolerance: float = DEFAULT_TOLERANCE) -> dict[str, Any]:
    """Delta between a computed value and a rounded published one."""
    delta = computed - reported
    rel = delta / reported if reported else float("inf")
    return {
        "computed": computed,
        "reported": reported,
        "delta": delta,
        "relative_delta": rel,
        "within_tolerance": abs(rel) <= tolerance,
    }


def rows_from_json(obj: dict | list) -> tuple[list[SubsetPlan], int | None]:
    """Parse ``{"rows": [...], "repeat_cap": N}`` or a bare row list."""
    raw_rows = obj["rows"] if isinstance(obj, dict) else obj
    cap = obj.get("repeat_cap") if isinstance(obj, dict) else None
    rows = []
    for i, r in enumerate(raw_rows):
        try:
            rows.append(
                SubsetPlan(
                    subset=str(r["subset"]),
                    token_count=r["token_count"],
                    repeat_factor=r.get("repeat_factor", 1),
                    filtered_docs=r.get("filtered_docs", 0),
                )
            )
        except (KeyError, TypeError, AttributeError):
            raise ValueError(f"row {i}: needs 'subset' and 'token_count'") from None
    return rows, cap


def load_rows(path: str | Path) -> tuple[list[SubsetPlan], int | None]:
    with open(path, encoding="utf-8") as fh:
        return rows_from_json(json.load(fh))


def plan_report(plan: MixturePlan, epochs: int | None = None, reported: dict | None = None,
                tolerance: float = DEFAULT_TOLERANCE) -> dict[str, Any]:
    out = plan.to_dict()
    if epochs is not None:
        out["epochs"] = epochs
        out["epoch_total_tokens"] = epochs_plan(plan.raw_total_tokens, epochs)
    if reported:
        cmp = {}
        if "raw_total_tokens" in reported:
            cmp["raw_total_tokens"] = compare_reported(plan.raw_total_tokens, reported["raw_total_tokens"], tolerance)
        if "mixed_total_tokens" in reported:
            cmp["mixed_total_tokens"] = compare_reported(plan.mixed_total_tokens, reported["mixed_total_tokens"], tolerance)
        if epochs is not None and "four_epoch_total_tokens" in reported and epochs == 4:
            cmp["four_epoch_total_tokens"] = compare_reported(out["epoch_total_tokens"], reported["four_epoch_total_tokens"], tolerance)
        out["reported_comparison"] = cmp
    return out

