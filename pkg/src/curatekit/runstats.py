"""Training-run measurements: FLOPs per token, MFU, emissions, cost, and loss rate of change."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from curatekit.tables import text_table

DENSE = "dense-only"
WITH_ATTENTION = "with-attention"
FlopsMode = Literal["dense-only", "with-attention"]

DEFAULT_CARBON_INTENSITY = 0.37  # kgCO2eq/kWh, German grid 2023
DEFAULT_GPU_RATE = 1.1  # USD per A100 hour
DEFAULT_SMOOTHING_WINDOW = 5
PEAK_FLOPS = {
    "A100-SXM4-80GB": 312e12,  # dense BF16
}


@dataclass(frozen=True)
class ModelDims:
    n_param: int
    n_layers: int
    d_model: int
    d_mlp: int
    n_heads: int
    n_kv_heads: int
    d_head: int
    context_length: int

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class RunLog:
    model_name: str
    gpu_count: int
    throughput_tokens_per_s: float
    duration_hours: float
    energy_kwh: float
    experiment_kwh: float

    def __post_init__(self) -> None:
        if self.gpu_count < 1:
            raise ValueError(f"{self.model_name}: gpu_count must be >= 1")
        for name in ("throughput_tokens_per_s", "duration_hours", "energy_kwh", "experiment_kwh"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{self.model_name}: {name} must be a non-negative number, got {v}")

    @property
    def total_kwh(self) -> float:
        return self.energy_kwh + self.experiment_kwh


def flops_per_token(dims: ModelDims, mode: FlopsMode = DENSE) -> float:
    """Training FLOPs per token: 6N, plus 12 * layers * d_model * context for attention."""
    dense = 6 * dims.n_param
    if mode == DENSE:
        return float(dense)
    if mode == WITH_ATTENTION:
        return float(dense + 12 * dims.n_layers * dims.d_model * dims.context_length)
    raise ValueError(f"unknown FLOPs mode {mode!r}")


def mfu(throughput: float, gpus: int, peak_flops_per_gpu: float, fpt: float) -> float:
    """Observed model FLOPs per second over aggregate hardware peak."""
    if throughput <= 0 or fpt <= 0:
        raise ValueError("throughput and FLOPs per token must be positive")
    if gpus <= 0 or peak_flops_per_gpu <= 0:
        raise ZeroDivisionError("GPU count and peak FLOPs must be positive")
    return throughput * fpt / (gpus * peak_flops_per_gpu)


def energy_to_emissions(kwh: float, intensity_kg_per_kwh: float = DEFAULT_CARBON_INTENSITY) -> float:
    if kwh < 0 or intensity_kg_per_kwh < 0:
        raise ValueError("energy and carbon intensity must be non-negative")
    return kwh * intensity_kg_per_kwh


def gpu_cost(gpu_hours: float, rate_per_hour: float = DEFAULT_GPU_RATE) -> float:
    if gpu_hours < 0 or rate_per_hour < 0:
        raise ValueError("GPU hours and rate must be non-negative")
    return gpu_hours * rate_per_hour


def loss_rate_of_change(
    tokens: Sequence[int] | Sequence[tuple[int, float]],
    losses: Sequence[float] | None = None,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
) -> list[tuple[int, float]]:
    """d(loss)/d(token) at every logged point.

    Accepts either parallel ``tokens``/``losses`` sequences or a list of
    ``(tokens, loss)`` pairs. Interior points use the second-order central
    difference for uneven spacing (the plain central difference on an even
    grid); the two ends use one-sided differences. The result is then
    smoothed with a centered moving average of ``smoothing_window`` points,
    shrinking the window at the edges so the output length matches the input.
    """
    if losses is None:
        pairs = list(tokens)
        t = np.array([p[0] for p in pairs], dtype=np.float64)
        y = np.array([p[1] for p in pairs], dtype=np.float64)
        raw_t = [p[0] for p in pairs]
    else:
        if len(tokens) != len(losses):
            raise ValueError("tokens and losses differ in length")
        t = np.asarray(tokens, dtype=np.float64)
        y = np.asarray(losses, dtype=np.float64)
        raw_t = list(tokens)
    if len(t) < 2:
        raise ValueError("need at least two points")
    if smoothing_window < 1:
        raise ValueError("smoothing_window must be >= 1")
    if not np.all(np.isfinite(y)):
        raise ValueError("losses must be finite")
    steps = np.diff(t)
    if np.any(steps == 0):
        i = int(np.argmax(steps == 0))
        raise ValueError(f"duplicate token coordinate {raw_t[i]}")
    if np.any(steps < 0):
        raise ValueError("token coordinates must be strictly increasing")

    d = np.gradient(y, t, edge_order=1)
    if smoothing_window > 1:
        lo_off = (smoothing_window - 1) // 2
        hi_off = smoothing_window // 2
        csum = np.concatenate(([0.0], np.cumsum(d)))
        n = len(d)
        idx = np.arange(n)
        lo = np.clip(idx - lo_off, 0, n)
        hi = np.clip(idx + hi_off + 1, 0, n)
        d = (csum[hi] - csum[lo]) / (hi - lo)
    return [(int(tk), float(v)) for tk, v in zip(raw_t, d)]


# --- bundled reference data and reports ----------------------------------------


def load_reference_runs() -> dict[str, Any]:
    """Model dimensions, training settings and energy logs of the four reference runs."""
    with resources.files("curatekit.data").joinpath("reference_runs.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def reference_dims() -> dict[str, ModelDims]:
    return {name: ModelDims(**d) for name, d in load_reference_runs()["dims"].items()}


RUN_LOG_COLUMNS = ("model", "gpus", "throughput_tok_s", "hours", "train_kwh", "exp_kwh")


def read_run_logs(path: str | Path) -> list[RunLog]:
    logs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RUN_LOG_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                logs.append(
                    RunLog(
                        model_name=row["model"],
                        gpu_count=int(row["gpus"]),
                        throughput_tokens_per_s=float(row["throughput_tok_s"]),
                        duration_hours=float(row["hours"]),
                        energy_kwh=float(row["train_kwh"]),
                        experiment_kwh=float(row["exp_kwh"]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return logs


def read_loss_curve(path: str | Path) -> list[tuple[int, float]]:
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"tokens", "loss"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns 'tokens,loss'")
        for lineno, row in enumerate(reader, start=2):
            try:
                points.append((int(float(row["tokens"])), float(row["loss"])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable row {row}") from None
    return points


def run_report(
    logs: Iterable[RunLog],
    dims: dict[str, ModelDims],
    peak_flops_per_gpu: float = PEAK_FLOPS["A100-SXM4-80GB"],
    intensity: float = DEFAULT_CARBON_INTENSITY,
) -> list[dict[str, Any]]:
    """Per-run MFU under both FLOPs modes, per-GPU throughput, and emissions."""
    rows = []
    for log in logs:
        row: dict[str, Any] = {
            "model": log.model_name,
            "gpus": log.gpu_count,
            "throughput_tok_s": log.throughput_tokens_per_s,
            "per_gpu_tok_s": log.throughput_tokens_per_s / log.gpu_count,
            "total_kwh": log.total_kwh,
            "emissions_kg": energy_to_emissions(log.total_kwh, intensity),
        }
        d = dims.get(log.model_name)
        if d is not None and log.throughput_tokens_per_s > 0:
            for mode in (DENSE, WITH_ATTENTION):
                fpt = flops_per_token(d, mode)
                row[f"flops_per_token_{mode}"] = fpt
                row[f"mfu_{mode}"] = mfu(log.throughput_tokens_per_s, log.gpu_count, peak_flops_per_gpu, fpt)
        rows.append(row)
    return rows


def run_report_text(rows: list[dict[str, Any]]) -> str:
    def pct(v: Any) -> str | None:
        return None if v is None else f"{100 * v:.1f}%"

    table = [
        [r["model"], r["gpus"], r["throughput_tok_s"], round(r["per_gpu_tok_s"], 1),
         pct(r.get(f"mfu_{DENSE}")), pct(r.get(f"mfu_{WITH_ATTENTION}")),
         r["total_kwh"], round(r["emissions_kg"], 2)]
        for r in rows
    ]
    return text_table(
        ["Model", "GPUs", "Tokens/s", "Tokens/s/GPU", "MFU dense", "MFU +attn", "kWh", "kgCO2eq"], table
    )
