"""Text-quality labels, a hashed-feature logistic classifier, and confidence-gated filtering.

Scores in [0, 1] are binarized into ``high`` (>= 0.8) and ``low`` (<= 0.6)
training labels; the band in between is left out of training. Filtering
drops a document only when it is labelled ``low`` with confidence strictly
above the policy threshold (0.95 by default).
"""

from __future__ import annotations

import base64
import json
import logging
import math
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np
import xxhash

from curatekit.corpus import Document
from curatekit.tables import dump_json, text_table

logger = logging.getLogger(__name__)

HIGH, LOW = "high", "low"
LABELS = (LOW, HIGH)
HIGH_MIN_SCORE = 0.8
LOW_MAX_SCORE = 0.6
MODEL_FORMAT = "curatekit.quality-model/1"


class TrainingError(ValueError):
    pass


class ConfigurationError(RuntimeError):
    pass


class ConflictingLabelsWarning(UserWarning):
    """Identical training texts were given both labels."""


def binarize_score(score: float) -> str | None:
    """Map a [0, 1] quality score to a training label, or None for the excluded band."""
    if not isinstance(score, (int, float)) or math.isnan(score) or not 0.0 <= score <= 1.0:
        raise ValueError(f"quality score {score!r} outside [0, 1]")
    if score >= HIGH_MIN_SCORE:
        return HIGH
    if score <= LOW_MAX_SCORE:
        return LOW
    return None


# --- features -----------------------------------------------------------------


def _tokens(text: str, word_orders: Sequence[int], char_orders: Sequence[int]) -> Iterator[str]:
    words = text.lower().split()
    for n in word_orders:
        for i in range(len(words) - n + 1):
            yield f"w{n}:" + " ".join(words[i : i + n])
    for word in words:
        padded = f"<{word}>"
        for n in char_orders:
            for i in range(len(padded) - n + 1):
                yield f"c{n}:" + padded[i : i + n]


def hash_feature(token: str, feature_dim: int, hash_seed: int) -> tuple[int, float]:
    """Bucket index from the low bits and sign from the top bit of XXH64."""
    h = xxhash.xxh64_intdigest(token.encode("utf-8"), seed=hash_seed)
    return h & (feature_dim - 1), (-1.0 if h >> 63 else 1.0)


def featurize(
    text: str,
    feature_dim: int,
    hash_seed: int,
    word_orders: Sequence[int] = (1,),
    char_orders: Sequence[int] = (3, 4, 5),
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse L2-normalized signed-count vector as (indices, values)."""
    acc: dict[int, float] = defaultdict(float)
    for tok in _tokens(text, word_orders, char_orders):
        idx, sign = hash_feature(tok, feature_dim, hash_seed)
        acc[idx] += sign
    if not acc:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    idx = np.fromiter(sorted(acc), dtype=np.int64, count=len(acc))
    val = np.array([acc[i] for i in idx.tolist()], dtype=np.float64)
    norm = math.sqrt(float(val @ val))
    if norm > 0:
        val /= norm
    return idx, val


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


# --- model --------------------------------------------------------------------


@dataclass(frozen=True)
class QualityModel:
    """Logistic model over hashed n-gram features; P(high) = sigmoid(w.x + b)."""

    feature_dim: int
    hash_seed: int
    weights: np.ndarray = field(repr=False, compare=False)
    bias: float = 0.0
    word_orders: tuple[int, ...] = (1,)
    char_orders: tuple[int, ...] = (3, 4, 5)
    version: str = MODEL_FORMAT

    def __post_init__(self) -> None:
        d = self.feature_dim
        if d < 2 or d & (d - 1):
            raise ValueError(f"feature_dim must be a power of two >= 2, got {d}")
        if self.weights.shape != (d,):
            raise ValueError(f"weights must have shape ({d},), got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    @classmethod
    def zeros(cls, feature_dim: int = 2**20, hash_seed: int = 0, **kwargs: Any) -> "QualityModel":
        return cls(feature_dim, hash_seed, np.zeros(feature_dim), **kwargs)

    def negated(self) -> "QualityModel":
        return QualityModel(
            self.feature_dim, self.hash_seed, -self.weights, -self.bias,
            self.word_orders, self.char_orders, self.version,
        )

    def features(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        return featurize(text, self.feature_dim, self.hash_seed, self.word_orders, self.char_orders)

    def logit(self, text: str) -> float:
        idx, val = self.features(text)
        return float(self.weights[idx] @ val) + self.bias

    def prob_high(self, text: str) -> float:
        return _sigmoid(self.logit(text))

    def to_dict(self) -> dict[str, Any]:
        blob = np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
        return {
            "version": self.version,
            "feature_dim": self.feature_dim,
            "hash_seed": self.hash_seed,
            "word_orders": list(self.word_orders),
            "char_orders": list(self.char_orders),
            "bias": self.bias,
            "weights_b64": base64.b64encode(blob).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "QualityModel":
        if obj.get("version") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {obj.get('version')!r}")
        weights = np.frombuffer(base64.b64decode(obj["weights_b64"]), dtype="<f8").astype(np.float64)
        return cls(
            feature_dim=int(obj["feature_dim"]),
            hash_seed=int(obj["hash_seed"]),
            weights=weights,
            bias=float(obj["bias"]),
            word_orders=tuple(obj["word_orders"]),
            char_orders=tuple(obj["char_orders"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "QualityModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict(model: QualityModel, text: str) -> tuple[str, float]:
    """Label and confidence max(p, 1 - p). Exact ties go to ``high``."""
    p = model.prob_high(text)
    return (HIGH, p) if p >= 0.5 else (LOW, 1.0 - p)


# --- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 10
    seed: int = 42
    l2: float = 1e-6
    feature_dim: int = 2**20
    hash_seed: int = 0
    word_orders: tuple[int, ...] = (1,)
    char_orders: tuple[int, ...] = (3, 4, 5)


def _log_loss(p: float, y: float) -> float:
    eps = 1e-15
    p = min(max(p, eps), 1 - eps)
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def train_classifier(
    labeled: Iterable[tuple[str, str]], config: TrainConfig = TrainConfig()
) -> tuple[QualityModel, list[float]]:
    """Fit the classifier by per-example SGD on log-loss with L2 decay.

    Examples are visited in a seeded random order each epoch. Returns the
    model and the mean training log-loss measured after every epoch.
    """
    data = [(t, lab) for t, lab in labeled]
    labels = {lab for _, lab in data}
    unknown = labels - set(LABELS)
    if unknown:
        raise TrainingError(f"unknown labels: {sorted(unknown)}")
    if labels != set(LABELS):
        raise TrainingError("training data must contain both 'high' and 'low' examples")
    if config.epochs < 1 or config.learning_rate <= 0:
        raise TrainingError("epochs must be >= 1 and learning_rate > 0")

    by_text: dict[str, set[str]] = defaultdict(set)
    for t, lab in data:
        by_text[t].add(lab)
    conflicts = sum(1 for labs in by_text.values() if len(labs) > 1)
    if conflicts:
        warnings.warn(
            f"{conflicts} distinct text(s) carry both labels; the model cannot separate them",
            ConflictingLabelsWarning,
            stacklevel=2,
        )

    dim = config.feature_dim
    feats = [featurize(t, dim, config.hash_seed, config.word_orders, config.char_orders) for t, _ in data]
    ys = np.array([1.0 if lab == HIGH else 0.0 for _, lab in data])
    w = np.zeros(dim)
    b = 0.0
    rng = np.random.default_rng(config.seed)
    lr, l2 = config.learning_rate, config.l2
    history: list[float] = []
    for epoch in range(config.epochs):
        for i in rng.permutation(len(data)).tolist():
            idx, val = feats[i]
            z = float(w[idx] @ val) + b
            g = _sigmoid(z) - ys[i]
            if l2:
                w[idx] *= 1.0 - lr * l2
            w[idx] -= lr * g * val
            b -= lr * g
        loss = sum(
            _log_loss(_sigmoid(float(w[idx] @ val) + b), y) for (idx, val), y in zip(feats, ys)
        ) / len(data)
        history.append(loss)
        logger.info("epoch %d/%d loss=%.6f", epoch + 1, config.epochs, loss)
    model = QualityModel(dim, config.hash_seed, w, b, tuple(config.word_orders), tuple(config.char_orders))
    return model, history


# --- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    tp: int
    fp: int
    fn: int
    tn: int


def _safe_div(a: int, b: int) -> float:
    return a / b if b else 0.0


def metrics_from_counts(label: str, tp: int, fp: int, fn: int, tn: int) -> ClassMetrics:
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClassMetrics(label, p, r, f1, tp + fn, tp, fp, fn, tn)


@dataclass(frozen=True)
class ClassReport:
    classes: tuple[ClassMetrics, ...]

    def __getitem__(self, label: str) -> ClassMetrics:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {
            c.label: {
                "precision": c.precision, "recall": c.recall, "f1": c.f1, "support": c.support,
                "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            }
            for c in self.classes
        }

    def to_text(self, name: str = "") -> str:
        rows = []
        for i, c in enumerate(self.classes):
            rows.append([name if i == 0 else "", c.label.capitalize(),
                         f"{c.precision:.2f}", f"{c.recall:.2f}", f"{c.f1:.2f}", c.support])
        return text_table(["Model", "Class", "Precision", "Recall", "F1-score", "Support"], rows)


def class_report(y_true: Sequence[str], y_pred: Sequence[str]) -> ClassReport:
    """Per-class precision/recall/F1 in the order (low, high)."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    if not y_true:
        raise ValueError("empty evaluation set")
    out = []
    for label in LABELS:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == label and p == label)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != label and p == label)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == label and p != label)
        tn = len(y_true) - tp - fp - fn
        out.append(metrics_from_counts(label, tp, fp, fn, tn))
    return ClassReport(tuple(out))


def evaluate_classifier(model: QualityModel, test: Iterable[tuple[str, str]]) -> ClassReport:
    pairs = list(test)
    return class_report([lab for _, lab in pairs], [predict(model, t)[0] for t, _ in pairs])


# --- filtering ----------------------------------------------------------------


@dataclass(frozen=True)
class FilterPolicy:
    confidence_threshold: float = 0.95
    drop_label: str = LOW

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in (0, 1]")
        if self.drop_label != LOW:
            raise ValueError("only the 'low' label can be dropped")

    def drops(self, label: str, confidence: float) -> bool:
        return label == self.drop_label and confidence > self.confidence_threshold


@dataclass
class RetentionReport:
    kept: dict[str, int] = field(default_factory=dict)
    total: dict[str, int] = field(default_factory=dict)

    def add(self, subset: str, kept: bool) -> None:
        self.total[subset] = self.total.get(subset, 0) + 1
        self.kept[subset] = self.kept.get(subset, 0) + int(kept)

    @property
    def kept_total(self) -> int:
        return sum(self.kept.values())

    @property
    def grand_total(self) -> int:
        return sum(self.total.values())

    def percent(self, subset: str | None = None) -> float:
        if subset is None:
            return 100.0 * _safe_div(self.kept_total, self.grand_total)
        return 100.0 * _safe_div(self.kept[subset], self.total[subset])

    def to_dict(self) -> dict[str, Any]:
        return {
            "subsets": {
                s: {"kept": self.kept[s], "total": self.total[s], "percent": self.percent(s)}
                for s in sorted(self.total)
            },
            "overall": {"kept": self.kept_total, "total": self.grand_total, "percent": self.percent()},
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def to_text(self) -> str:
        rows = [[s, self.total[s], self.kept[s], f"{self.percent(s):.2f}%"] for s in self.total]
        rows.append(["Total", self.grand_total, self.kept_total, f"{self.percent():.2f}%"])
        return text_table(["Subset", "Original", "Filtered", "%"], rows)


def retention_from_counts(rows: Iterable[tuple[str, int, int]]) -> RetentionReport:
    """Build a report from (subset, total, kept) counts, e.g. a published table."""
    rep = RetentionReport()
    for subset, total, kept in rows:
        if not 0 <= kept <= total:
            raise ValueError(f"{subset}: kept {kept} not within [0, {total}]")
        rep.total[subset] = total
        rep.kept[subset] = kept
    return rep


def _judge(doc: Document, model: QualityModel | None, use_annotations: bool) -> tuple[str, float]:
    annotated = doc.quality_label is not None
    if annotated and (use_annotations or model is None):
        return doc.quality_label, doc.quality_confidence
    if model is not None:
        return predict(model, doc.text)
    raise ConfigurationError(
        f"document {doc.id!r} (sequence_no {doc.sequence_no}) has no quality annotation and no model was given"
    )


def apply_filter(
    docs: Iterable[Document],
    policy: FilterPolicy = FilterPolicy(),
    model: QualityModel | None = None,
    use_annotations: bool = False,
    threads: int = 1,
) -> tuple[list[Document], RetentionReport]:
    """Drop documents judged ``low`` with confidence above the threshold.

    Judgements come from the document's own label/confidence fields when
    ``use_annotations`` is set (or when no model is given), otherwise from
    ``model``. Prediction may run on ``threads`` workers; output order and
    content do not depend on it.
    """
    docs = list(docs)
    if threads > 1 and model is not None:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            verdicts = list(pool.map(lambda d: _judge(d, model, use_annotations), docs))
    else:
        verdicts = [_judge(d, model, use_annotations) for d in docs]
    report = RetentionReport()
    kept = []
    for doc, (label, conf) in zip(docs, verdicts):
        keep = not policy.drops(label, conf)
        report.add(doc.subset, keep)
        if keep:
            kept.append(doc)
    return kept, report


def annotate(docs: Iterable[Document], model: QualityModel) -> Iterator[Document]:
    """Attach model label/confidence to each document."""
    for doc in docs:
        label, conf = predict(model, doc.text)
        yield replace(doc, quality_label=label, quality_confidence=conf)


@dataclass
class LabeledData:
    pairs: list[tuple[str, str]] = field(default_factory=list)
    excluded_band: int = 0

    def to_dict(self) -> dict[str, Any]:
        counts = {lab: sum(1 for _, y in self.pairs if y == lab) for lab in LABELS}
        return {"examples": len(self.pairs), "per_label": counts, "excluded_band": self.excluded_band}


def read_labeled(lines: Iterable[str], source: str = "<input>") -> LabeledData:
    """Labeled examples from JSONL with ``text`` and either ``label`` or a raw ``score``.

    Scores are binarized; those in the excluded band are counted and skipped.
    Any other malformed line raises ``ValueError`` naming the line.
    """
    out = LabeledData()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            text = obj["text"]
            if not isinstance(text, str):
                raise TypeError("'text' is not a string")
            if obj.get("label") is not None:
                label = obj["label"]
                if label not in LABELS:
                    raise ValueError(f"unknown label {label!r}")
            elif obj.get("score") is not None:
                label = binarize_score(obj["score"])
            else:
                raise KeyError("label or score")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
        if label is None:
            out.excluded_band += 1
            continue
        out.pairs.append((text, label))
    return out
