import pytest

from curatekit.mixture import (
    INT64_MAX,
    SubsetPlan,
    compare_reported,
    epochs_plan,
    plan_mixture,
    plan_report,
    rows_from_json,
    steps_to_tokens,
    tokens_per_parameter,
)


def test_totals_are_exact_integers():
    plan = plan_mixture([SubsetPlan("a", 10**12 + 1, 2), SubsetPlan("b", 7, 1), SubsetPlan("c", 3, 4)])
    assert plan.raw_total_tokens == 10**12 + 11
    assert plan.mixed_total_tokens == 2 * (10**12 + 1) + 7 + 12
    assert isinstance(plan.mixed_total_tokens, int)
    assert plan.warnings == ()


def test_factor_above_cap_warns():
    plan = plan_mixture([SubsetPlan("big", 5, 6)], cap=4)
    assert len(plan.warnings) == 1 and "big" in plan.warnings[0]
    assert plan.mixed_total_tokens == 30


@pytest.mark.parametrize("row", [SubsetPlan("a", 5, 0), SubsetPlan("a", -1, 1)])
def test_invalid_rows(row):
    with pytest.raises(ValueError):
        plan_mixture([row])


def test_float_counts_rejected():
    with pytest.raises(TypeError):
        plan_mixture([SubsetPlan("a", 1.5, 1)])


def test_overflow_detected():
    with pytest.raises(OverflowError):
        plan_mixture([SubsetPlan("a", INT64_MAX // 2 + 1, 2)])
    with pytest.raises(OverflowError):
        plan_mixture([SubsetPlan("a", INT64_MAX, 1), SubsetPlan("b", 1, 1)])
    with pytest.raises(OverflowError):
        epochs_plan(INT64_MAX, 2)


def test_helpers():
    assert epochs_plan(10, 4) == 40
    assert steps_to_tokens(320_000, 524_288) == 167_772_160_000
    assert tokens_per_parameter(100, 4) == 25.0
    with pytest.raises(ValueError):
        epochs_plan(10, 0)


def test_compare_reported():
    c = compare_reported(129_504_151_552, 129e9)
    assert c["delta"] == pytest.approx(504_151_552)
    assert c["within_tolerance"]
    assert not compare_reported(110, 100, 0.05)["within_tolerance"]


def test_rows_from_json_and_report():
    rows, cap = rows_from_json({"repeat_cap": 3, "rows": [{"subset": "a", "token_count": 4, "repeat_factor": 2}]})
    assert cap == 3 and rows == [SubsetPlan("a", 4, 2)]
    rep = plan_report(plan_mixture(rows, cap), epochs=4, reported={"raw_total_tokens": 4})
    assert rep["epoch_total_tokens"] == 16
    assert rep["reported_comparison"]["raw_total_tokens"]["delta"] == 0
    with pytest.raises(ValueError, match="row 0"):
        rows_from_json([{"subset": "a"}])
