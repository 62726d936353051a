import math
import random
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from curatekit.evalstats import (
    DUPLICATE_TOKENS,
    INSUFFICIENT,
    TWO_POINT,
    ZERO_VARIANCE,
    CheckpointRecord,
    CorrelationTable,
    WinRecord,
    correlate_all,
    leaderboard,
    pearson,
    reliability_select,
    win_table,
)


def pearson_exact(xs, ys):
    """Definition evaluated in rational arithmetic; one rounding at the end."""
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    n = len(fx)
    mx, my = sum(fx) / n, sum(fy) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(fx, fy))
    sxx = sum((a - mx) ** 2 for a in fx)
    syy = sum((b - my) ** 2 for b in fy)
    return float(sxy) / math.sqrt(float(sxx * syy))


def test_pearson_oracle_1000_series():
    rng = random.Random(1234)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(3, 12)
        xs = [rng.uniform(-100, 100) for _ in range(n)]
        ys = [rng.uniform(-100, 100) for _ in range(n)]
        worst = max(worst, abs(pearson(xs, ys) - pearson_exact(xs, ys)))
    assert worst <= 1e-12


def test_pearson_known_value():
    # x = 1..3, y = 1, 3, 2: r = 1 / 2; x = 1..4, y = 1, 2, 4, 3: r = 0.8
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-15)
    assert pearson([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(0.8, abs=1e-15)
    # sxy = 1, sxx = 2, syy = 2/3 -> r = sqrt(3)/2
    assert pearson([1, 2, 3], [0, 1, 1]) == pytest.approx(math.sqrt(3) / 2, abs=1e-15)


def test_pearson_undefined_and_errors():
    assert pearson([1, 2, 3], [5, 5, 5]) is None
    assert pearson([4, 4], [1, 2]) is None
    with pytest.raises(ValueError):
        pearson([1], [1])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


series = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=15)


@given(series, st.data())
def test_pearson_properties(xs, data):
    ys = data.draw(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=len(xs), max_size=len(xs)))
    r = pearson(xs, ys)
    assume(r is not None)
    sx = max(xs) - min(xs)
    sy = max(ys) - min(ys)
    assume(sx > 1e-3 and sy > 1e-3)
    assert -1.0 <= r <= 1.0
    assert pearson(ys, xs) == pytest.approx(r, abs=1e-9)
    assert pearson(xs, [-y for y in ys]) == pytest.approx(-r, abs=1e-9)
    a = data.draw(st.floats(0.1, 10))
    b = data.draw(st.floats(-100, 100))
    assert pearson([a * x + b for x in xs], ys) == pytest.approx(r, abs=1e-6)


def test_correlate_all_flags_and_order():
    recs = [
        CheckpointRecord("m2", "B", 1, 0.1), CheckpointRecord("m2", "B", 2, 0.3), CheckpointRecord("m2", "B", 3, 0.2),
        CheckpointRecord("m1", "B", 1, 0.5), CheckpointRecord("m1", "B", 2, 0.5),
        CheckpointRecord("m1", "A", 1, 0.1), CheckpointRecord("m1", "A", 2, 0.2),
        CheckpointRecord("m2", "A", 5, 0.1),
        CheckpointRecord("m3", "A", 1, 0.1), CheckpointRecord("m3", "A", 1, 0.2),
    ]
    t = correlate_all(reversed(recs))
    assert t.models == ["m1", "m2", "m3"] and t.benchmarks == ["A", "B"]
    assert t.get("B", "m2").r == pytest.approx(0.5)
    assert t.get("B", "m1").flag == ZERO_VARIANCE
    assert t.get("A", "m1").flag == TWO_POINT and t.get("A", "m1").r == pytest.approx(1.0)
    assert t.get("A", "m2").flag == INSUFFICIENT
    assert t.get("A", "m3").flag == DUPLICATE_TOKENS
    assert correlate_all(recs).to_dict() == t.to_dict()


def test_reliability_select_strict_threshold():
    t = CorrelationTable.from_matrix(["A", "B", "C", "D"], ["x", "y"], {
        "A": {"x": 0.9, "y": 0.7}, "B": {"x": 0.9, "y": 0.6}, "C": {"x": 0.9, "y": None}, "D": {"x": -1, "y": 1},
    })
    sel = reliability_select(t, 0.6)
    assert sel.selected == ("A",)
    assert sel.rejected == ("B", "D")
    assert sel.undefined == ("C",)
    assert "**A**" in t.to_markdown(sel.selected)


def test_leaderboard():
    board = leaderboard({"p": {"A": 1.0, "B": 3.0}, "q": {"A": 2.0, "B": 2.0}, "r": {"A": 9.0}, "s": {"A": 4, "B": 0}},
                        ["A", "B"])
    assert [(row.model, row.average) for row in board.rows] == [("p", 2.0), ("q", 2.0), ("s", 2.0)]
    assert board.excluded == {"r": ["B"]}
    with pytest.raises(ValueError):
        leaderboard({}, [])


def test_win_table():
    rows = win_table([WinRecord("a", 10, 1, 3, 20.0, 0.1)], total_prompts=4)
    assert rows[0]["raw_win_rate"] == 0.25
    with pytest.raises(ValueError):
        win_table([WinRecord("a", 10, 1, 2)], total_prompts=4)
    with pytest.raises(ZeroDivisionError):
        win_table([WinRecord("a", 10, 0, 0)])
