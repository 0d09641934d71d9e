"""Tests for the single-metric threshold validators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairval.baselines import (
    VALID_IF_GE,
    VALID_IF_LE,
    BaselineError,
    ThresholdValidator,
    classify,
    classify_batch,
    fit_threshold,
)

SEPARABLE = [(0.1, "invalid"), (0.2, "invalid"), (0.8, "valid"), (0.9, "valid")]


def exact_best_accuracy(values, labels, direction):
    """Optimum over every distinct labeling a real threshold can produce."""
    vs = np.sort(np.unique(values))
    # midpoints cover every boundary between observed values; one candidate
    # past the max covers the labeling that accepts or rejects everything
    cands = list(vs) + [(a + b) / 2.0 for a, b in zip(vs, vs[1:])] + [vs[-1] + 1.0]
    best = 0.0
    for t in cands:
        if direction == VALID_IF_GE:
            pred = ["valid" if x >= t else "invalid" for x in values]
        else:
            pred = ["valid" if x <= t else "invalid" for x in values]
        best = max(best, float(np.mean([p == l for p, l in zip(pred, labels)])))
    return best


class TestFit:
    def test_separable_fixture(self):
        v = fit_threshold(SEPARABLE, metric="vif")
        # any threshold in (0.2, 0.8] is perfect; the sweep keeps the
        # smallest grid point past 0.2
        assert v.threshold == pytest.approx(0.201, abs=1e-12)
        assert v.train_accuracy == 1.0
        assert v.direction == VALID_IF_GE

    def test_interleaved_values_hit_majority_rate(self):
        train = [(float(i), "valid" if i % 2 == 1 else "invalid") for i in range(1, 10)]
        v = fit_threshold(train, metric="vif")
        assert v.train_accuracy == pytest.approx(5.0 / 9.0)

    def test_identical_values_degenerate_sweep(self):
        train = [(0.5, "valid")] * 3 + [(0.5, "invalid")] * 2
        v = fit_threshold(train, metric="vif")
        assert v.threshold == 0.5
        assert v.train_accuracy == pytest.approx(0.6)

    def test_default_directions(self):
        assert fit_threshold(SEPARABLE, metric="vif").direction == VALID_IF_GE
        low_is_valid = [(v, "valid" if lab == "invalid" else "invalid") for v, lab in SEPARABLE]
        assert fit_threshold(low_is_valid, metric="vae_re").direction == VALID_IF_LE

    def test_unknown_metric_needs_explicit_direction(self):
        with pytest.raises(BaselineError, match="direction"):
            fit_threshold(SEPARABLE, metric="psnr")
        v = fit_threshold(SEPARABLE, metric="psnr", direction=VALID_IF_GE)
        assert v.metric == "psnr" and v.train_accuracy == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(BaselineError, match="single class"):
            fit_threshold([(0.1, "valid"), (0.2, "valid")], metric="vif")

    def test_non_finite_value_rejected(self):
        with pytest.raises(BaselineError, match="finite"):
            fit_threshold([(np.nan, "valid"), (0.2, "invalid")], metric="vif")

    def test_bad_label_rejected(self):
        with pytest.raises(BaselineError, match="valid/invalid"):
            fit_threshold([(0.1, "ok"), (0.2, "invalid")], metric="vif")

    def test_bad_step_rejected(self):
        with pytest.raises(BaselineError, match="step"):
            fit_threshold(SEPARABLE, metric="vif", step=0.0)

    def test_training_accuracy_is_reproducible(self):
        v = fit_threshold(SEPARABLE, metric="vif")
        pred = classify_batch(v, [x for x, _ in SEPARABLE])
        acc = np.mean([p == lab for p, (_, lab) in zip(pred, SEPARABLE)])
        assert acc == v.train_accuracy

    def test_grid_matches_exact_sweep_when_gaps_exceed_step(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            vals = rng.choice(np.arange(1000) * 0.01, size=30, replace=False)
            labs = ["valid" if rng.random() < 0.5 else "invalid" for _ in vals]
            if len(set(labs)) < 2:
                continue
            v = fit_threshold(list(zip(vals, labs)), metric="vif", step=1e-3)
            assert v.train_accuracy == exact_best_accuracy(vals, labs, VALID_IF_GE)

    def test_grid_within_one_step_of_exact_optimum(self):
        # values packed tighter than the step: the sweep may miss a boundary,
        # but only by however many labels sit inside one step-width window
        rng = np.random.default_rng(1)
        for _ in range(5):
            vals = rng.uniform(0.0, 0.01, size=40)
            labs = ["valid" if rng.random() < 0.5 else "invalid" for _ in vals]
            v = fit_threshold(list(zip(vals, labs)), metric="vif", step=1e-3)
            exact = exact_best_accuracy(vals, labs, VALID_IF_GE)
            sv = np.sort(vals)
            window = max(int(np.sum((sv >= x) & (sv < x + 1e-3))) for x in sv)
            assert v.train_accuracy <= exact + 1e-12
            assert exact - v.train_accuracy <= window / len(vals) + 1e-12


class TestClassify:
    def test_boundary_is_valid_both_directions(self):
        ge = ThresholdValidator("vif", 0.5, VALID_IF_GE, 1.0)
        le = ThresholdValidator("vae_re", 0.5, VALID_IF_LE, 1.0)
        assert classify(ge, 0.5) == "valid"
        assert classify(le, 0.5) == "valid"

    def test_below_threshold(self):
        ge = ThresholdValidator("vif", 0.5, VALID_IF_GE, 1.0)
        assert classify(ge, 0.4999) == "invalid"

    def test_non_finite_rejected(self):
        ge = ThresholdValidator("vif", 0.5, VALID_IF_GE, 1.0)
        with pytest.raises(BaselineError, match="non-finite"):
            classify(ge, float("inf"))

    @given(st.floats(-10.0, 10.0), st.floats(-10.0, 10.0), st.floats(-10.0, 10.0))
    @settings(max_examples=25, deadline=None)
    def test_monotone_in_value(self, threshold, a, b):
        ge = ThresholdValidator("vif", threshold, VALID_IF_GE, 1.0)
        lo, hi = min(a, b), max(a, b)
        if classify(ge, lo) == "valid":
            assert classify(ge, hi) == "valid"
        le = ThresholdValidator("vae_re", threshold, VALID_IF_LE, 1.0)
        if classify(le, hi) == "valid":
            assert classify(le, lo) == "valid"

    def test_batch_matches_loop(self):
        v = fit_threshold(SEPARABLE, metric="vif")
        values = [0.0, 0.2, 0.201, 0.5, 1.0]
        assert classify_batch(v, values) == [classify(v, x) for x in values]


class TestSerialization:
    def test_round_trip(self):
        v = fit_threshold(SEPARABLE, metric="vif")
        back = ThresholdValidator.from_json(v.to_json())
        assert back == v

    def test_rejects_garbage(self):
        with pytest.raises(BaselineError, match="not a serialized"):
            ThresholdValidator.from_json("{}")

    def test_validator_invariants(self):
        with pytest.raises(BaselineError, match="direction"):
            ThresholdValidator("vif", 0.5, "sideways", 1.0)
        with pytest.raises(BaselineError, match="finite"):
            ThresholdValidator("vif", float("nan"), VALID_IF_GE, 1.0)
