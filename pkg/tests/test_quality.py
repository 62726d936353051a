import json
import math

import numpy as np
import pytest
import xxhash
from hypothesis import given
from hypothesis import strategies as st

from curatekit.corpus import Document
from curatekit.quality import (
    ConfigurationError,
    ConflictingLabelsWarning,
    FilterPolicy,
    QualityModel,
    TrainConfig,
    TrainingError,
    apply_filter,
    binarize_score,
    class_report,
    evaluate_classifier,
    featurize,
    metrics_from_counts,
    predict,
    read_labeled,
    retention_from_counts,
    train_classifier,
)

HIGH_TEXTS = ["estudo científico sobre economia", "pesquisa apresenta dados claros",
              "governo publica relatório anual", "universidade divulga resultados"]
LOW_TEXTS = ["clique aqui compre já", "promoção grátis ganhe dinheiro",
             "compre agora oferta imperdível", "ganhe prêmios clique"]


def toy_corpus():
    return [(t, "high") for t in HIGH_TEXTS] + [(t, "low") for t in LOW_TEXTS]


@pytest.mark.parametrize(("score", "label"), [(1.0, "high"), (0.8, "high"), (0.79, None),
                                              (0.61, None), (0.6, "low"), (0.0, "low")])
def test_binarize_boundaries(score, label):
    assert binarize_score(score) == label


@pytest.mark.parametrize("score", [-0.01, 1.01, float("nan")])
def test_binarize_rejects_out_of_range(score):
    with pytest.raises(ValueError):
        binarize_score(score)


def test_featurize_hand_computed():
    # "Ab" -> w1:ab, c3:<ab, c3:ab>, c4:<ab>  (no c5: "<ab>" has 4 chars)
    dim, seed = 1 << 16, 5
    expected: dict[int, float] = {}
    for tok in ["w1:ab", "c3:<ab", "c3:ab>", "c4:<ab>"]:
        h = xxhash.xxh64_intdigest(tok.encode(), seed=seed)
        i = h % dim
        expected[i] = expected.get(i, 0.0) + (-1.0 if h >= 2**63 else 1.0)
    norm = math.sqrt(sum(v * v for v in expected.values()))
    idx, val = featurize("Ab", dim, seed)
    assert idx.tolist() == sorted(expected)
    assert val.tolist() == pytest.approx([expected[i] / norm for i in sorted(expected)], abs=1e-15)


def test_featurize_empty_text():
    idx, val = featurize("   ", 1024, 0)
    assert idx.size == 0 and val.size == 0


def test_zero_model_tie_goes_high():
    assert predict(QualityModel.zeros(1024), "qualquer texto") == ("high", 0.5)


def test_metrics_from_counts():
    m = metrics_from_counts("high", tp=2, fp=1, fn=1, tn=0)
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)
    assert round(m.f1, 3) == 0.667
    assert m.support == 3


def test_class_report_layout():
    rep = class_report(["high", "high", "low", "low"], ["high", "low", "low", "low"])
    assert rep["low"].precision == pytest.approx(2 / 3)
    assert rep["high"].recall == pytest.approx(0.5)
    lines = rep.to_text("toy").splitlines()
    assert lines[0].split() == ["Model", "Class", "Precision", "Recall", "F1-score", "Support"]
    assert lines[2].split()[:2] == ["toy", "Low"]
    assert lines[3].split()[0] == "High"


def test_train_eval_separable_f1_one():
    model, history = train_classifier(toy_corpus(), TrainConfig(feature_dim=1 << 14, epochs=20))
    rep = evaluate_classifier(model, toy_corpus())
    assert rep["high"].f1 == 1.0 and rep["low"].f1 == 1.0
    assert history[-1] < history[0]


def test_training_is_deterministic():
    cfg = TrainConfig(feature_dim=1 << 12, epochs=3, seed=7)
    a, ha = train_classifier(toy_corpus(), cfg)
    b, hb = train_classifier(list(toy_corpus()), cfg)
    assert ha == hb
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_training_errors():
    with pytest.raises(TrainingError):
        train_classifier([("a", "high")], TrainConfig(feature_dim=16))
    with pytest.raises(TrainingError):
        train_classifier([("a", "high"), ("b", "meh")], TrainConfig(feature_dim=16))


def test_conflicting_labels_warn():
    with pytest.warns(ConflictingLabelsWarning):
        model, _ = train_classifier([("same", "high"), ("same", "low")], TrainConfig(feature_dim=64))
    assert predict(model, "same")[1] == pytest.approx(0.5, abs=0.05)


def test_model_save_load_round_trip(tmp_path):
    model, _ = train_classifier(toy_corpus(), TrainConfig(feature_dim=1 << 10, epochs=2))
    p = tmp_path / "m.json"
    model.save(p)
    back = QualityModel.load(p)
    assert np.array_equal(back.weights, model.weights) and back.bias == model.bias
    for t in HIGH_TEXTS + LOW_TEXTS:
        assert predict(back, t) == predict(model, t)
    back.save(tmp_path / "m2.json")
    assert (tmp_path / "m2.json").read_bytes() == p.read_bytes()


@given(st.sampled_from(["high", "low"]), st.floats(0.5, 1.0), st.floats(0.01, 1.0))
def test_drop_rule(label, confidence, threshold):
    policy = FilterPolicy(confidence_threshold=threshold)
    assert policy.drops(label, confidence) == (label == "low" and confidence > threshold)


def test_default_threshold_is_exclusive():
    p = FilterPolicy()
    assert not p.drops("low", 0.95)
    assert p.drops("low", 0.9500001)
    assert not p.drops("high", 0.999)


def _annotated(n, seed=0):
    rng = np.random.default_rng(seed)
    return [Document(f"{i}", "ab"[i % 2], f"t{i}", i, str(rng.choice(["high", "low"])),
                     float(rng.uniform(0.5, 1.0))) for i in range(n)]


@given(st.lists(st.floats(0.5, 1.0), min_size=2, max_size=6))
def test_retention_monotone_in_threshold(thresholds):
    docs = _annotated(200)
    pct = [apply_filter(docs, FilterPolicy(t), use_annotations=True)[1].percent()
           for t in sorted(thresholds)]
    assert pct == sorted(pct)


def test_apply_filter_with_annotations_and_threads():
    docs = _annotated(300, seed=4)
    kept1, rep1 = apply_filter(docs, FilterPolicy(), use_annotations=True, threads=1)
    kept4, rep4 = apply_filter(docs, FilterPolicy(), use_annotations=True, threads=4)
    assert kept1 == kept4 and rep1.to_dict() == rep4.to_dict()
    expected = [d for d in docs if not (d.quality_label == "low" and d.quality_confidence > 0.95)]
    assert kept1 == expected


def test_apply_filter_with_model_uses_prediction():
    model, _ = train_classifier(toy_corpus(), TrainConfig(feature_dim=1 << 12, epochs=30))
    docs = [Document(str(i), "web", t, i) for i, t in enumerate(HIGH_TEXTS + LOW_TEXTS)]
    kept, rep = apply_filter(docs, FilterPolicy(0.5), model)
    assert [d.text for d in kept] == HIGH_TEXTS
    assert rep.percent() == 50.0


def test_apply_filter_needs_a_judge():
    with pytest.raises(ConfigurationError):
        apply_filter([Document("a", "w", "t", 0)], FilterPolicy())


def test_retention_from_counts():
    rep = retention_from_counts([("a", 10, 7), ("b", 4, 4)])
    assert rep.percent("a") == 70.0 and rep.percent() == pytest.approx(1100 / 14)


def test_read_labeled():
    lines = [json.dumps({"text": "a", "score": 0.9}), json.dumps({"text": "b", "score": 0.7}),
             json.dumps({"text": "c", "label": "low"}), ""]
    data = read_labeled(lines)
    assert data.pairs == [("a", "high"), ("c", "low")]
    assert data.excluded_band == 1
    with pytest.raises(ValueError, match="x.jsonl:1"):
        read_labeled([json.dumps({"text": "a", "score": 2})], "x.jsonl")
