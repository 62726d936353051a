"""Bundled reference data (corpus composition, filtered mixture, training
runs, benchmark correlations, leaderboard, win counts) and the comparison of
recomputed values against the published ones."""

from __future__ import annotations

import csv
import json
from importlib import resources
from typing import Any

from curatekit import evalstats, mixture, runstats
from curatekit.corpus import CorpusManifest, manifest_from_counts
from curatekit.quality import RetentionReport, retention_from_counts

PCT_TOLERANCE_PP = 0.01


def _data(name: str):
    return resources.files("curatekit.data").joinpath(name)


def _json(name: str) -> Any:
    with _data(name).open(encoding="utf-8") as fh:
        return json.load(fh)


def data_path(name: str):
    """Context manager yielding a filesystem path to a bundled file."""
    return resources.as_file(_data(name))


def composition() -> dict[str, Any]:
    return _json("composition.json")


def composition_manifest() -> CorpusManifest:
    return manifest_from_counts({r["subset"]: r["doc_count"] for r in composition()["subsets"]})


def filtered_mixture() -> dict[str, Any]:
    return _json("filtered_mixture.json")


def mixture_rows() -> list[mixture.SubsetPlan]:
    rows, _ = mixture.rows_from_json(filtered_mixture())
    return rows


def retention() -> RetentionReport:
    return retention_from_counts(
        (r["subset"], r["original_docs"], r["filtered_docs"]) for r in filtered_mixture()["rows"]
    )


def correlations() -> evalstats.CorrelationTable:
    obj = _json("correlations.json")
    return evalstats.CorrelationTable.from_matrix(obj["benchmarks"], obj["models"], obj["r"])


def leaderboard_scores() -> tuple[dict[str, dict[str, float]], dict[str, float], list[str]]:
    """Scores, published averages, and published row order."""
    with data_path("leaderboard.csv") as p:
        scores = evalstats.read_score_matrix(p)
        with open(p, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    reported = {r["model"]: float(r["average_reported"]) for r in rows}
    return scores, reported, [r["model"] for r in rows]


def win_records() -> list[evalstats.WinRecord]:
    with data_path("win_counts.csv") as p:
        return evalstats.read_win_records(p)


def runs() -> dict[str, Any]:
    return runstats.load_reference_runs()


def run_logs() -> list[runstats.RunLog]:
    with data_path("reference_runs.csv") as p:
        return runstats.read_run_logs(p)


def _parse_pct(text: str) -> tuple[str, float]:
    text = text.strip()
    if text.startswith("<"):
        return "<", float(text[1:])
    return "=", float(text)


def _pct_check(computed_pct: float, reported: str, tol: float = PCT_TOLERANCE_PP) -> dict[str, Any]:
    op, value = _parse_pct(reported)
    ok = computed_pct < value if op == "<" else abs(computed_pct - value) <= tol
    return {"computed_pct": computed_pct, "reported": reported, "ok": ok}


def composition_check() -> dict[str, Any]:
    m = composition_manifest()
    rows = {r["subset"]: _pct_check(100 * m.share_of(r["subset"]), r["share_pct_reported"])
            for r in composition()["subsets"]}
    return {"total_docs": m.total_docs, "rows": rows, "ok": all(r["ok"] for r in rows.values())}


def retention_check() -> dict[str, Any]:
    t3 = filtered_mixture()
    rep = retention()
    rows = {r["subset"]: _pct_check(rep.percent(r["subset"]), r["retention_pct_reported"]) for r in t3["rows"]}
    overall = _pct_check(rep.percent(), t3["reported"]["retention_pct"])
    return {
        "overall": overall,
        "rows": rows,
        "inconsistent_rows": sorted(s for s, r in rows.items() if not r["ok"]),
        "ok": overall["ok"] and all(r["ok"] for r in rows.values()),
    }


def mixture_check() -> dict[str, Any]:
    t3 = filtered_mixture()
    plan = mixture.plan_mixture(mixture_rows(), t3["repeat_cap"])
    return mixture.plan_report(plan, epochs=4, reported=t3["reported"])


def training_check(peak: float = runstats.PEAK_FLOPS["A100-SXM4-80GB"]) -> dict[str, Any]:
    ref = runs()
    dims = runstats.reference_dims()
    out = {}
    for name, t in ref["training"].items():
        d = dims[name]
        row: dict[str, Any] = {"mfu_pct_reported": t["mfu_pct_reported"]}
        for mode in (runstats.DENSE, runstats.WITH_ATTENTION):
            fpt = runstats.flops_per_token(d, mode)
            row[f"mfu_{mode}"] = runstats.mfu(t["throughput_tok_s"], t["gpu_count"], peak, fpt)
        row["mfu_within_5pp"] = any(
            abs(100 * row[f"mfu_{m}"] - t["mfu_pct_reported"]) <= 5 for m in (runstats.DENSE, runstats.WITH_ATTENTION)
        )
        row["per_gpu_tok_s"] = t["throughput_tok_s"] / t["gpu_count"]
        if "per_gpu_throughput_reported" in t:
            row["per_gpu_reported"] = t["per_gpu_throughput_reported"]
        steps_tokens = mixture.steps_to_tokens(t["total_steps"], t["batch_tokens"])
        row["steps_x_batch"] = mixture.compare_reported(steps_tokens, t["total_tokens_reported"])
        tpp = mixture.tokens_per_parameter(t["total_tokens_reported"], d.n_param)
        row["tokens_per_parameter"] = mixture.compare_reported(tpp, t["tokens_per_param_reported"], 0.015)
        out[name] = row
    return out


def energy_check() -> dict[str, Any]:
    ref = runs()
    k = ref["carbon_intensity_kg_per_kwh"]
    rows = {}
    for name, e in ref["energy"].items():
        em = runstats.energy_to_emissions(e["train_kwh"] + e["exp_kwh"], k)
        rows[name] = {"emissions_kg": em, "reported": e["emissions_kg_reported"],
                      "delta": em - e["emissions_kg_reported"]}
    tot = ref["energy_totals_reported"]
    total_em = runstats.energy_to_emissions(tot["total_kwh"], k)
    cost = runstats.gpu_cost(tot["gpu_hours"], ref["gpu_rate_usd_per_hour"])
    return {
        "rows": rows,
        "total_kwh": sum(e["train_kwh"] + e["exp_kwh"] for e in ref["energy"].values()),
        "total_emissions_kg": {"computed": total_em, "reported": tot["emissions_kg"], "delta": total_em - tot["emissions_kg"]},
        "cost_usd": mixture.compare_reported(cost, tot["cost_usd"]),
    }


def evaluation_check() -> dict[str, Any]:
    table = correlations()
    sel = evalstats.reliability_select(table)
    scores, reported, order = leaderboard_scores()
    board = evalstats.leaderboard(scores, sel.selected)
    wins = evalstats.win_table(win_records(), total_prompts=805)
    return {
        "selection": sel.to_dict(),
        "leaderboard": [
            {"model": r.model, "average": r.average, "reported": reported[r.model],
             "ok": abs(r.average - reported[r.model]) <= 0.01}
            for r in board.rows
        ],
        "order_matches": [r.model for r in board.rows] == order,
        "wins": wins,
    }


def reproduction_report() -> dict[str, Any]:
    return {
        "composition": composition_check(),
        "retention": retention_check(),
        "mixture": mixture_check(),
        "training": training_check(),
        "energy": energy_check(),
        "evaluation": evaluation_check(),
    }
