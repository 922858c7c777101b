"""Pseudo-positive day generation and confidence weighting."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atrisk.augmentation import (
    AugmentationConfig,
    WeightingFunction,
    augment,
    pseudo_days,
    weight_of,
)
from atrisk.errors import ValidationError

from conftest import cohort_of, obs, student


def dropout_with(days, sid=None):
    """Dropout student observed on `days`, dropping on the final one."""
    pairs = [obs(d) for d in days[:-1]] + [obs(days[-1], kind="dropout_event")]
    return student(sid or f"d{days[-1]}", pairs, status="dropout")


def closed_form_count(t_prev, t_n, lam):
    return max(0, t_n - max(t_prev, t_n - lam) - 1)


def test_pseudo_days_open_interval():
    s = dropout_with([90, 100])
    # max(90, 93) = 93 < d < 100
    assert pseudo_days(s, 7) == [94, 95, 96, 97, 98, 99]


def test_pseudo_days_clipped_by_previous_observation():
    s = dropout_with([97, 100])
    assert pseudo_days(s, 7) == [98, 99]


def test_pseudo_days_adjacent_observation_yields_none():
    s = dropout_with([99, 100])
    assert pseudo_days(s, 7) == []


def test_pseudo_days_single_observation_clips_at_zero():
    s = student("solo", [obs(3, kind="dropout_event")], status="dropout")
    assert pseudo_days(s, 7) == [1, 2]


def test_pseudo_days_rejects_non_dropout():
    s = student("c", [obs(5)], status="completion")
    with pytest.raises(ValidationError):
        pseudo_days(s, 7)


@given(
    t_prev=st.integers(min_value=1, max_value=120),
    gap=st.integers(min_value=1, max_value=40),
    lam=st.sampled_from([3, 7, 14]),
)
def test_pseudo_day_count_matches_closed_form(t_prev, gap, lam):
    t_n = t_prev + gap
    s = dropout_with([t_prev, t_n])
    days = pseudo_days(s, lam)
    assert len(days) == closed_form_count(t_prev, t_n, lam)
    for d in days:
        assert max(t_prev, t_n - lam) < d < t_n


def test_weight_formulas_exact():
    lam = 7
    lin = WeightingFunction("linear")
    cvx = WeightingFunction("convex")
    ccv = WeightingFunction("concave")
    for d, t_n in [(99, 100), (94, 100), (96, 100)]:
        u = (t_n - d) / lam
        assert abs(weight_of(d, t_n, lam, lin) - (1 - u)) < 1e-12
        assert abs(weight_of(d, t_n, lam, cvx) - (1 - u) ** 2) < 1e-12
        assert abs(weight_of(d, t_n, lam, ccv) - (1 - u * u)) < 1e-12


def test_weight_endpoint_values():
    for tag in ("linear", "convex", "concave"):
        g = WeightingFunction(tag)
        assert g.evaluate(0.0) == 1.0
        assert g.evaluate(1.0) == 0.0


@given(u=st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_weighting_shape_ordering(u):
    lin = WeightingFunction("linear").evaluate(u)
    cvx = WeightingFunction("convex").evaluate(u)
    ccv = WeightingFunction("concave").evaluate(u)
    assert 0.0 <= cvx <= lin <= ccv <= 1.0


@given(
    tag=st.sampled_from(["linear", "convex", "concave"]),
    u1=st.floats(min_value=0.0, max_value=1.0),
    u2=st.floats(min_value=0.0, max_value=1.0),
)
def test_weightings_non_increasing(tag, u1, u2):
    g = WeightingFunction(tag)
    lo, hi = min(u1, u2), max(u1, u2)
    assert g.evaluate(lo) >= g.evaluate(hi)


def test_weight_of_rejects_out_of_window_days():
    g = WeightingFunction("linear")
    with pytest.raises(ValidationError):
        weight_of(100, 100, 7, g)  # not strictly before dropout
    with pytest.raises(ValidationError):
        weight_of(92, 100, 7, g)  # beyond the lookback


def test_unknown_weighting_rejected():
    with pytest.raises(ValidationError):
        WeightingFunction("sigmoid")
    with pytest.raises(ValidationError):
        AugmentationConfig(weighting="sigmoid")


def test_augment_counts_and_weights():
    s1 = dropout_with([90, 100], sid="a")  # 6 pseudo days under lambda=7
    s2 = dropout_with([97, 100], sid="b")  # 2 pseudo days
    comp = student("c", [obs(4), obs(9)], status="completion")
    cohort = cohort_of(s1, s2, comp)
    pairs = augment(cohort, AugmentationConfig(lookback_days=7, weighting="convex"))
    assert len(pairs) == 8
    assert all(p.provenance == "pseudo_positive" and p.label == 1 for p in pairs)
    by_student = {}
    for p in pairs:
        by_student.setdefault(p.student_id, []).append(p)
    for sid in ("a", "b"):
        for p in by_student[sid]:
            u = (100 - p.day) / 7
            assert p.weight == pytest.approx((1 - u) ** 2, abs=1e-12)


def test_augment_requires_enabled_config():
    cohort = cohort_of(dropout_with([90, 100]))
    with pytest.raises(ValidationError):
        augment(cohort, AugmentationConfig(lookback_days=None))


def test_augment_attaches_features():
    cohort = cohort_of(dropout_with([95, 100]))
    seen = []

    def fake_assemble(student_record, day):
        seen.append((student_record.student_id, day))
        return f"fv@{day}"

    pairs = augment(cohort, AugmentationConfig(), assemble_fn=fake_assemble)
    assert [p.features for p in pairs] == [f"fv@{d}" for d in (96, 97, 98, 99)]
    assert seen == [("d100", d) for d in (96, 97, 98, 99)]
