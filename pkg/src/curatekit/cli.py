"""``curatekit`` command-line entry point.

Every subcommand writes its machine-readable report as JSON to ``--out``
(``-`` for stdout), a human-readable table to stdout, and progress logs
to stderr. Settings resolve in the order: explicit flag, environment
variable (paths only), ``--config`` YAML section, built-in default.

Exit status: 0 on success, 1 on data or validation errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Iterator, TextIO

import yaml

from curatekit import corpus, dedup, evalstats, mixture, quality, reference, runstats, tokbench
from curatekit.tables import dump_json, text_table

logger = logging.getLogger("curatekit")

DEFAULT_SEED = 42

# Every configurable setting, by config-file section. Flags of the same
# name override these; ``--help`` shows them.
DEFAULTS: dict[str, dict[str, Any]] = {
    "ingest": {"max_record_bytes": corpus.DEFAULT_MAX_RECORD_BYTES},
    "dedup": {"key": dedup.DEFAULT_KEY, "shard_bits": 4, "external": False, "spill_dir": None},
    "filter": {
        "model": None,
        "threshold": 0.95,
        "use_annotations": False,
        "learning_rate": quality.TrainConfig.learning_rate,
        "epochs": quality.TrainConfig.epochs,
        "l2": quality.TrainConfig.l2,
        "feature_bits": 20,
        "hash_seed": quality.TrainConfig.hash_seed,
    },
    "plan": {"rows": None, "cap": mixture.DEFAULT_REPEAT_CAP, "epochs": None, "tolerance": mixture.DEFAULT_TOLERANCE},
    "tokbench": {"text": None, "tokenizer": [], "external_counts": None, "corpus": None, "csv": None},
    "analytics": {
        "intensity": runstats.DEFAULT_CARBON_INTENSITY,
        "rate": runstats.DEFAULT_GPU_RATE,
        "hardware": "A100-SXM4-80GB",
        "peak_flops": None,
        "window": runstats.DEFAULT_SMOOTHING_WINDOW,
    },
    "evalcorr": {
        "records": None,
        "table": None,
        "scores": None,
        "wins": None,
        "threshold": evalstats.DEFAULT_RELIABILITY_THRESHOLD,
        "total_prompts": None,
        "markdown": None,
    },
}
TOP_LEVEL_KEYS = {"seed", "threads"}
PATH_ENV = {"model": "CURATEKIT_MODEL", "spill_dir": "CURATEKIT_SPILL_DIR"}
CONFIG_ENV = "CURATEKIT_CONFIG"
SECTION_OF = {
    "ingest": "ingest", "dedup": "dedup", "filter-train": "filter", "filter-eval": "filter",
    "filter-apply": "filter", "plan": "plan", "tokbench": "tokbench", "analytics": "analytics",
    "evalcorr": "evalcorr", "report": None,
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# --- logging --------------------------------------------------------------------


class KeyValueFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        msg = record.getMessage().replace('"', "'")
        return f'level={record.levelname.lower()} logger={record.name} msg="{msg}"'


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    root = logging.getLogger("curatekit")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


# --- config ---------------------------------------------------------------------


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path}: top level must be a mapping")
    for key, value in cfg.items():
        if key in TOP_LEVEL_KEYS:
            continue
        if key not in DEFAULTS:
            raise UsageError(f"config {path}: unknown key {key!r}")
        if not isinstance(value, dict):
            raise UsageError(f"config {path}: section {key!r} must be a mapping")
        for sub in value:
            if sub not in DEFAULTS[key]:
                raise UsageError(f"config {path}: unknown key {key}.{sub}")
    return cfg


def _resolve(args: argparse.Namespace, cfg: dict[str, Any], section: str | None) -> None:
    """Fill unset option attributes from env, config, then defaults."""
    if section is not None:
        sect_cfg = cfg.get(section, {})
        for key, default in DEFAULTS[section].items():
            if not hasattr(args, key) or getattr(args, key) not in (None, []):
                continue
            env = PATH_ENV.get(key)
            if env and os.environ.get(env):
                setattr(args, key, os.environ[env])
            elif key in sect_cfg:
                setattr(args, key, sect_cfg[key])
            else:
                setattr(args, key, default)
    if args.seed is None:
        args.seed = cfg.get("seed", DEFAULT_SEED)
    if args.threads is None:
        args.threads = cfg.get("threads", os.cpu_count() or 1)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")


# --- io helpers -----------------------------------------------------------------


@contextlib.contextmanager
def _open_text_out(target: str | None) -> Iterator[TextIO | None]:
    if target is None:
        yield None
    elif target == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _emit_report(args: argparse.Namespace, report: Any) -> None:
    with _open_text_out(args.out) as fh:
        if fh is not None:
            fh.write(dump_json(report))


def _human(args: argparse.Namespace, text: str) -> None:
    """Tables go to stdout unless stdout already carries data or the report."""
    uses_stdout = args.out == "-" or getattr(args, "output", None) == "-"
    stream = sys.stderr if uses_stdout else sys.stdout
    stream.write(text)
    stream.flush()


def _read_lines(path: str) -> Iterator[str]:
    if path == "-":
        yield from sys.stdin
        return
    with open(path, encoding="utf-8") as fh:
        yield from fh


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _ingest(args: argparse.Namespace, path: str, stats: corpus.IngestStats | None = None) -> list[corpus.Document]:
    stats = stats if stats is not None else corpus.IngestStats()
    max_bytes = getattr(args, "max_record_bytes", corpus.DEFAULT_MAX_RECORD_BYTES)
    docs = list(corpus.ingest_stream(path, stats, max_record_bytes=max_bytes))
    logger.info("read %d documents from %s (%d skipped)", len(docs), path, stats.skipped)
    return docs


def _bundled(path: str) -> str:
    """``@name`` refers to a file shipped with the package."""
    if path.startswith("@"):
        name = path[1:]
        target = Path(str(reference._data(name)))
        if not target.exists():
            raise DataError(f"no bundled file named {name!r}")
        return str(target)
    return path


# --- subcommands ----------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    stats = corpus.IngestStats()
    builder = corpus.ManifestBuilder()

    def tap() -> Iterator[corpus.Document]:
        for doc in corpus.ingest_stream(args.input, stats, max_record_bytes=args.max_record_bytes):
            builder.add(doc)
            yield doc

    if args.output is not None:
        corpus.write_documents(tap(), args.output)
    else:
        for _ in tap():
            pass
    manifest = builder.build()
    _emit_report(args, {"ingest": stats.to_dict(), "manifest": manifest.to_dict()})
    _human(args, manifest.to_text() + f"skipped={stats.skipped} (malformed={stats.malformed}, oversize={stats.oversize})\n")
    return 0


def cmd_dedup(args: argparse.Namespace) -> int:
    if args.external:
        if args.input == "-":
            raise UsageError("--external needs a re-readable input file, not stdin")
        kept_iter, report = dedup.deduplicate_external(
            lambda: corpus.ingest_stream(args.input, max_record_bytes=args.max_record_bytes),
            workdir=args.spill_dir,
            key=args.key,
        )
        if args.output:
            corpus.write_documents(kept_iter, args.output)
        else:
            for _ in kept_iter:
                pass
    else:
        docs = _ingest(args, args.input)
        if args.threads > 1 or args.shard_bits:
            kept, report = dedup.deduplicate_sharded(docs, args.shard_bits, args.threads, args.key)
        else:
            kept, report = dedup.deduplicate(docs, args.key)
        if args.output:
            corpus.write_documents(kept, args.output)
    logger.info("dedup kept %d of %d", report.kept_count, report.input_count)
    _emit_report(args, {"key": args.key, **report.to_dict()})
    _human(args, report.to_text())
    return 0


def _train_config(args: argparse.Namespace) -> quality.TrainConfig:
    if not 1 <= args.feature_bits <= 30:
        raise UsageError("--feature-bits must be in [1, 30]")
    return quality.TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        seed=args.seed,
        l2=args.l2,
        feature_dim=2**args.feature_bits,
        hash_seed=args.hash_seed,
    )


def cmd_filter_train(args: argparse.Namespace) -> int:
    data = quality.read_labeled(_read_lines(args.input), args.input)
    config = _train_config(args)
    try:
        model, history = quality.train_classifier(data.pairs, config)
    except quality.TrainingError as exc:
        raise DataError(str(exc)) from None
    if args.model is None:
        raise UsageError("filter-train needs --model (output path)")
    model.save(args.model)
    train_report = quality.evaluate_classifier(model, data.pairs)
    _emit_report(args, {
        "data": data.to_dict(),
        "config": {
            "learning_rate": config.learning_rate, "epochs": config.epochs, "seed": config.seed,
            "l2": config.l2, "feature_dim": config.feature_dim, "hash_seed": config.hash_seed,
        },
        "epoch_loss": history,
        "train_metrics": train_report.to_dict(),
    })
    rows = [[i + 1, round(loss, 6)] for i, loss in enumerate(history)]
    _human(args, text_table(["Epoch", "Loss"], rows) + train_report.to_text("train"))
    return 0


def _load_model(args: argparse.Namespace, required: bool) -> quality.QualityModel | None:
    if args.model is None:
        if required:
            raise UsageError("--model is required")
        return None
    try:
        return quality.QualityModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from None


def cmd_filter_eval(args: argparse.Namespace) -> int:
    model = _load_model(args, required=True)
    data = quality.read_labeled(_read_lines(args.input), args.input)
    if not data.pairs:
        raise DataError(f"{args.input}: no labeled examples")
    report = quality.evaluate_classifier(model, data.pairs)
    _emit_report(args, {"data": data.to_dict(), "metrics": report.to_dict()})
    _human(args, report.to_text(Path(args.model).stem))
    return 0


def cmd_filter_apply(args: argparse.Namespace) -> int:
    model = _load_model(args, required=False)
    try:
        policy = quality.FilterPolicy(confidence_threshold=args.threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    docs = _ingest(args, args.input)
    try:
        kept, report = quality.apply_filter(docs, policy, model, args.use_annotations, args.threads)
    except quality.ConfigurationError as exc:
        raise DataError(str(exc)) from None
    if args.output:
        corpus.write_documents(kept, args.output)
    _emit_report(args, {"threshold": args.threshold, "use_annotations": bool(args.use_annotations),
                        **report.to_dict()})
    _human(args, report.to_text())
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    if args.rows is None:
        raise UsageError("plan needs --rows FILE")
    try:
        rows, file_cap = mixture.load_rows(_bundled(args.rows))
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.rows}: {exc}") from None
    cap = args.cap if args.cap is not None else (file_cap or mixture.DEFAULT_REPEAT_CAP)
    plan = mixture.plan_mixture(rows, cap)
    reported = None
    with contextlib.suppress(OSError, ValueError, AttributeError):
        with open(_bundled(args.rows), encoding="utf-8") as fh:
            obj = json.load(fh)
        reported = obj.get("reported") if isinstance(obj, dict) else None
    report = mixture.plan_report(plan, args.epochs, reported, args.tolerance)
    _emit_report(args, report)
    text = plan.to_text() + f"raw total: {plan.raw_total_tokens:,}\nmixed total: {plan.mixed_total_tokens:,}\n"
    if args.epochs is not None:
        text += f"{args.epochs} epochs: {report['epoch_total_tokens']:,}\n"
    for name, cmp in (report.get("reported_comparison") or {}).items():
        flag = "" if cmp["within_tolerance"] else "  (outside tolerance)"
        text += f"{name}: computed {cmp['computed']:,} vs reported {cmp['reported']:,} ({100 * cmp['relative_delta']:+.2f}%){flag}\n"
    for w in plan.warnings:
        text += f"warning: {w}\n"
    _human(args, text)
    return 0


def _parse_tokenizer_spec(spec: str) -> tuple[str, str, str]:
    try:
        name, files = spec.split("=", 1)
        vocab, merges = files.split(",", 1)
    except ValueError:
        raise UsageError(f"--tokenizer expects NAME=VOCAB,MERGES, got {spec!r}") from None
    return name, vocab, merges


def cmd_tokbench(args: argparse.Namespace) -> int:
    if not args.tokenizer and not args.external_counts:
        raise UsageError("tokbench needs at least one --tokenizer or --external-counts")
    if args.text is None:
        raise UsageError("tokbench needs --text FILE")
    toks = {}
    for spec in args.tokenizer:
        name, vocab, merges = _parse_tokenizer_spec(spec)
        toks[name] = tokbench.load_bpe(vocab, merges)
    external = tokbench.read_external_counts(args.external_counts) if args.external_counts else None
    text = _read_text(args.text)
    report = tokbench.compression_report(toks, text, external)
    out: dict[str, Any] = report.to_dict()
    if args.corpus:
        docs = _ingest(args, args.corpus)
        out["corpus_tokens"] = {}
        for name, tok in toks.items():
            try:
                out["corpus_tokens"][name] = tokbench.encode_corpus(tok, docs, args.threads)
            except tokbench.EncodingError as exc:
                out["corpus_tokens"][name] = None
                logger.warning("corpus encoding with %s failed: %s", name, exc)
    if args.csv:
        with _open_text_out(args.csv) as fh:
            fh.write(report.to_csv())
    _emit_report(args, out)
    _human(args, report.to_text())
    return 0


def cmd_analytics(args: argparse.Namespace) -> int:
    action = args.action
    if action == "emissions":
        kwh = args.kwh if args.kwh is not None else 0.0
        value = runstats.energy_to_emissions(kwh, args.intensity)
        _emit_report(args, {"kwh": kwh, "intensity_kg_per_kwh": args.intensity, "emissions_kg": value})
        _human(args, f"{value:.10g}\n")
    elif action == "cost":
        value = runstats.gpu_cost(args.gpu_hours, args.rate)
        _emit_report(args, {"gpu_hours": args.gpu_hours, "rate_per_hour": args.rate, "cost": value})
        _human(args, f"{value:.10g}\n")
    elif action == "mfu":
        peak = _peak(args)
        if args.model_name:
            dims = runstats.reference_dims()
            if args.model_name not in dims:
                raise DataError(f"unknown reference model {args.model_name!r}; known: {sorted(dims)}")
            d = dims[args.model_name]
        elif args.params:
            d = None
        else:
            raise UsageError("mfu needs --model NAME or --params N")
        rows = {}
        for mode in (runstats.DENSE, runstats.WITH_ATTENTION):
            if d is None:
                if mode == runstats.WITH_ATTENTION:
                    continue
                fpt = 6.0 * args.params
            else:
                fpt = runstats.flops_per_token(d, mode)
            rows[mode] = {"flops_per_token": fpt, "mfu": runstats.mfu(args.throughput, args.gpus, peak, fpt)}
        _emit_report(args, {"throughput_tok_s": args.throughput, "gpus": args.gpus, "peak_flops_per_gpu": peak,
                            "per_gpu_tok_s": args.throughput / args.gpus, "modes": rows})
        table = [[m, r["flops_per_token"], f"{100 * r['mfu']:.2f}%"] for m, r in rows.items()]
        _human(args, f"tokens/s per GPU: {args.throughput / args.gpus:.1f}\n" + text_table(["Mode", "FLOPs/token", "MFU"], table))
    elif action == "runs":
        path = _bundled(args.runs)
        logs = runstats.read_run_logs(path)
        rows = runstats.run_report(logs, runstats.reference_dims(), _peak(args), args.intensity)
        _emit_report(args, {"runs": rows})
        _human(args, runstats.run_report_text(rows))
    elif action == "dloss":
        points = runstats.read_loss_curve(args.loss)
        result = runstats.loss_rate_of_change(points, smoothing_window=args.window)
        _emit_report(args, {"window": args.window, "points": [{"tokens": t, "d_loss": v} for t, v in result]})
        _human(args, text_table(["Tokens", "d_loss/token"], [[t, f"{v:.6e}"] for t, v in result]))
    return 0


def _peak(args: argparse.Namespace) -> float:
    if args.peak_flops is not None:
        return float(args.peak_flops)
    try:
        return runstats.PEAK_FLOPS[args.hardware]
    except KeyError:
        raise UsageError(f"unknown hardware {args.hardware!r}; pass --peak-flops") from None


def cmd_evalcorr(args: argparse.Namespace) -> int:
    if args.records is None and args.table is None:
        raise UsageError("evalcorr needs --records CSV or --table JSON")
    if args.records is not None:
        table = evalstats.correlate_all(evalstats.read_checkpoint_records(_bundled(args.records)))
    else:
        table = evalstats.read_correlation_table(_bundled(args.table))
    selection = evalstats.reliability_select(table, args.threshold)
    out: dict[str, Any] = {"correlations": table.to_dict(), "selection": selection.to_dict()}
    md = [table.to_markdown(selection.selected)]
    if args.scores:
        if not selection.selected:
            raise DataError("no benchmark passed the reliability threshold; cannot build a leaderboard")
        board = evalstats.leaderboard(evalstats.read_score_matrix(_bundled(args.scores)), selection.selected)
        out["leaderboard"] = board.to_dict()
        md.append(board.to_markdown())
        for model, missing in board.excluded.items():
            logger.warning("model %s excluded from leaderboard: missing %s", model, ", ".join(missing))
    if args.wins:
        wins = evalstats.win_table(evalstats.read_win_records(_bundled(args.wins)), args.total_prompts)
        out["wins"] = wins
        md.append(evalstats.win_table_markdown(wins))
    if args.markdown:
        with _open_text_out(args.markdown) as fh:
            fh.write("\n".join(md))
    _emit_report(args, out)
    _human(args, "\n".join(md) + f"\nselected (r > {args.threshold}): {', '.join(selection.selected) or '-'}\n")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rep = reference.reproduction_report()
    _emit_report(args, rep)
    lines = []
    comp = rep["composition"]
    lines.append(["corpus shares", "ok" if comp["ok"] else "MISMATCH", f"{comp['total_docs']:,} docs"])
    ret = rep["retention"]
    lines.append(["retention", "ok" if ret["ok"] else "MISMATCH",
                  f"overall {ret['overall']['computed_pct']:.2f}%; inconsistent rows: {', '.join(ret['inconsistent_rows']) or '-'}"])
    mix = rep["mixture"]
    lines.append(["mixture", "ok", f"raw {mix['raw_total_tokens']:,}, mixed {mix['mixed_total_tokens']:,}, x4 {mix['epoch_total_tokens']:,}"])
    for name, row in rep["training"].items():
        lines.append([f"mfu {name}", "ok" if row["mfu_within_5pp"] else "MISMATCH",
                      f"dense {100 * row['mfu_dense-only']:.1f}%, +attn {100 * row['mfu_with-attention']:.1f}%, reported {row['mfu_pct_reported']}%"])
    en = rep["energy"]
    lines.append(["emissions", "ok" if all(abs(r["delta"]) <= 1 for r in en["rows"].values()) else "MISMATCH",
                  f"total {en['total_emissions_kg']['computed']:.2f} kg vs {en['total_emissions_kg']['reported']}"])
    lines.append(["cost", "ok" if en["cost_usd"]["within_tolerance"] else "DELTA",
                  f"{en['cost_usd']['computed']:.2f} USD vs reported {en['cost_usd']['reported']}"])
    ev = rep["evaluation"]
    lines.append(["reliable benchmarks", "ok", ", ".join(ev["selection"]["selected"])])
    lines.append(["leaderboard", "ok" if ev["order_matches"] and all(r["ok"] for r in ev["leaderboard"]) else "MISMATCH",
                  f"{len(ev['leaderboard'])} rows"])
    _human(args, text_table(["Check", "Status", "Detail"], lines))
    return 0


# --- parser ---------------------------------------------------------------------


def _help(section: str, key: str, text: str) -> str:
    default = DEFAULTS[section][key]
    return f"{text} (default: {default!r}; config: {section}.{key})"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help=f"YAML config file (env {CONFIG_ENV})")
    common.add_argument("--out", default=None, help="write the JSON report here ('-' for stdout)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count; config: threads)")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: {DEFAULT_SEED}; config: seed)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="curatekit", description="Corpus curation and training analytics.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name: str, func: Callable[[argparse.Namespace], int], help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "validate JSONL, assign ids and sequence numbers, emit a manifest")
    p.add_argument("input", help="JSONL file or '-'")
    p.add_argument("--output", default=None, help="write normalized JSONL here ('-' for stdout)")
    p.add_argument("--max-record-bytes", type=int, default=None, help=_help("ingest", "max_record_bytes", "skip longer lines"))

    p = add("dedup", cmd_dedup, "exact-hash deduplication, keeping the first occurrence")
    p.add_argument("input")
    p.add_argument("--output", default=None, help="write kept documents as JSONL ('-' for stdout)")
    p.add_argument("--key", type=int, default=None, help=_help("dedup", "key", "hash key (seed)"))
    p.add_argument("--shard-bits", type=int, default=None, help=_help("dedup", "shard_bits", "digest-prefix bits for sharded mode"))
    p.add_argument("--external", action="store_true", default=None, help=_help("dedup", "external", "spill digests to disk"))
    p.add_argument("--spill-dir", default=None, help=_help("dedup", "spill_dir", "directory for spill files (env CURATEKIT_SPILL_DIR)"))
    p.add_argument("--max-record-bytes", type=int, default=corpus.DEFAULT_MAX_RECORD_BYTES, help=argparse.SUPPRESS)

    def train_opts(p: argparse.ArgumentParser) -> None:
        p.add_argument("--learning-rate", type=float, default=None, help=_help("filter", "learning_rate", "SGD step size"))
        p.add_argument("--epochs", type=int, default=None, help=_help("filter", "epochs", "training epochs"))
        p.add_argument("--l2", type=float, default=None, help=_help("filter", "l2", "L2 decay"))
        p.add_argument("--feature-bits", type=int, default=None, help=_help("filter", "feature_bits", "log2 of hashed feature dimension"))
        p.add_argument("--hash-seed", type=int, default=None, help=_help("filter", "hash_seed", "feature hash seed"))

    p = add("filter-train", cmd_filter_train, "train the quality classifier from labeled or scored JSONL")
    p.add_argument("input", help="JSONL with 'text' and 'label' (high/low) or 'score' in [0, 1]")
    p.add_argument("--model", default=None, help=_help("filter", "model", "where to save the model (env CURATEKIT_MODEL)"))
    train_opts(p)
    p.add_argument("--threshold", type=float, default=None, help=argparse.SUPPRESS)
    p.add_argument("--use-annotations", action="store_true", default=None, help=argparse.SUPPRESS)

    p = add("filter-eval", cmd_filter_eval, "per-class precision/recall/F1 of a model on labeled JSONL")
    p.add_argument("input")
    p.add_argument("--model", default=None, help=_help("filter", "model", "model file (env CURATEKIT_MODEL)"))

    p = add("filter-apply", cmd_filter_apply, "drop documents judged low quality with confidence above the threshold")
    p.add_argument("input")
    p.add_argument("--output", default=None, help="write kept documents as JSONL ('-' for stdout)")
    p.add_argument("--model", default=None, help=_help("filter", "model", "model file (env CURATEKIT_MODEL)"))
    p.add_argument("--threshold", type=float, default=None, help=_help("filter", "threshold", "drop when confidence > this"))
    p.add_argument("--use-annotations", action="store_true", default=None,
                   help=_help("filter", "use_annotations", "prefer label/confidence fields over the model"))

    p = add("plan", cmd_plan, "token totals for a repeat-factor mixture")
    p.add_argument("--rows", default=None, help=_help("plan", "rows", "rows JSON ('@filtered_mixture.json' for the bundled one)"))
    p.add_argument("--cap", type=int, default=None, help="repeat factor above which to warn (default: file value or 4)")
    p.add_argument("--epochs", type=int, default=None, help=_help("plan", "epochs", "also report raw total x epochs"))
    p.add_argument("--tolerance", type=float, default=None, help=_help("plan", "tolerance", "relative tolerance vs reported totals"))

    p = add("tokbench", cmd_tokbench, "tokens-per-word comparison of BPE tokenizers")
    p.add_argument("--text", default=None, help="reference text file")
    p.add_argument("--tokenizer", action="append", default=[], help="NAME=VOCAB_JSON,MERGES_TXT (repeatable)")
    p.add_argument("--external-counts", default=None, help="CSV of name,token_count[,vocab_size] encoded elsewhere")
    p.add_argument("--corpus", default=None, help="JSONL corpus to count tokens for (one separator per document)")
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.add_argument("--max-record-bytes", type=int, default=corpus.DEFAULT_MAX_RECORD_BYTES, help=argparse.SUPPRESS)

    p = add("analytics", cmd_analytics, "run measurements: emissions, cost, MFU, run logs, loss rate of change")
    p.add_argument("action", choices=["emissions", "cost", "mfu", "runs", "dloss"])
    p.add_argument("--kwh", type=float, default=None, help="energy in kWh (emissions)")
    p.add_argument("--intensity", type=float, default=None, help=_help("analytics", "intensity", "kgCO2eq per kWh"))
    p.add_argument("--gpu-hours", type=float, default=0.0, help="GPU hours (cost)")
    p.add_argument("--rate", type=float, default=None, help=_help("analytics", "rate", "currency per GPU hour"))
    p.add_argument("--throughput", type=float, default=None, help="aggregate tokens/s (mfu)")
    p.add_argument("--gpus", type=int, default=1, help="GPU count (mfu)")
    p.add_argument("--model", dest="model_name", default=None, help="reference model dims: 160m, 630m, 1b1, 2b4 (mfu)")
    p.add_argument("--params", type=int, default=None, help="parameter count, dense-only FLOPs (mfu)")
    p.add_argument("--hardware", default=None, help=_help("analytics", "hardware", "peak-FLOPs table entry"))
    p.add_argument("--peak-flops", type=float, default=None, help=_help("analytics", "peak_flops", "override peak FLOPs per GPU"))
    p.add_argument("--runs", default="@reference_runs.csv", help="run-log CSV (runs; default: bundled reference runs)")
    p.add_argument("--loss", default=None, help="loss-curve CSV with tokens,loss (dloss)")
    p.add_argument("--window", type=int, default=None, help=_help("analytics", "window", "moving-average width (dloss)"))

    p = add("evalcorr", cmd_evalcorr, "score vs tokens correlations, reliable benchmarks, leaderboard, win rates")
    p.add_argument("--records", default=None, help="CSV: model,benchmark,tokens_ingested,score")
    p.add_argument("--table", default=None, help="precomputed correlation JSON ('@correlations.json' for the bundled one)")
    p.add_argument("--scores", default=None, help="CSV: model plus one column per benchmark")
    p.add_argument("--wins", default=None, help="CSV: model,avg_length,wins,base_wins[,lc_win_rate,std_err]")
    p.add_argument("--total-prompts", type=int, default=None, help="check wins + base_wins equals this")
    p.add_argument("--threshold", type=float, default=None, help=_help("evalcorr", "threshold", "select when r > this for every model"))
    p.add_argument("--markdown", default=None, help="write Markdown tables here")

    add("report", cmd_report, "recompute the bundled reference tables and compare with published values")
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log_level)
    try:
        cfg = load_config(args.config or os.environ.get(CONFIG_ENV))
        _resolve(args, cfg, SECTION_OF[args.command])
        if args.command == "analytics":
            _check_analytics(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"curatekit: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"curatekit: error: {msg}", file=sys.stderr)
        return 1


def _check_analytics(args: argparse.Namespace) -> None:
    needs = {"emissions": ["kwh"], "mfu": ["throughput"], "dloss": ["loss"]}
    for name in needs.get(args.action, []):
        if getattr(args, name) is None:
            raise UsageError(f"analytics {args.action} needs --{name}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
