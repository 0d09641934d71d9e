"""Single-metric threshold validators over VIF or VAE reconstruction error.

A validator classifies a pair by comparing one metric value against a
threshold tuned on a labeled training split: the sweep walks the observed
value range in fixed increments and keeps the smallest threshold that
maximizes training accuracy.  Direction is fixed per metric — high VIF
means fidelity (valid at or above the threshold), high VAE-RE means
out-of-distribution (valid at or below).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from pairval.dataio import INVALID, VALID, LABELS

VALID_IF_GE = "valid_if_ge"
VALID_IF_LE = "valid_if_le"

#: default orientation per metric
DIRECTIONS = {"vif": VALID_IF_GE, "vae_re": VALID_IF_LE}

_CHUNK = 1_000_000  # threshold-grid chunk size, bounds sweep memory


class BaselineError(Exception):
    pass


def _n_steps(span: float, step: float) -> int:
    """ceil(span/step), tolerating float fuzz at exact multiples."""
    import math

    ratio = span / step
    r = round(ratio)
    if abs(ratio - r) < 1e-9:
        return int(r)
    return int(math.ceil(ratio))


@dataclass(frozen=True)
class ThresholdValidator:
    metric: str
    threshold: float
    direction: str
    train_accuracy: float

    def __post_init__(self):
        if self.direction not in (VALID_IF_GE, VALID_IF_LE):
            raise BaselineError(f"bad direction {self.direction!r}")
        if not np.isfinite(self.threshold):
            raise BaselineError("threshold must be finite")

    def to_json(self) -> str:
        return json.dumps({"format": "pairval-threshold", "version": 1, **asdict(self)},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdValidator":
        payload = json.loads(text)
        if payload.get("format") != "pairval-threshold":
            raise BaselineError("not a serialized threshold validator")
        return cls(metric=payload["metric"], threshold=payload["threshold"],
                   direction=payload["direction"], train_accuracy=payload["train_accuracy"])


def _accuracy_for_thresholds(values_sorted: np.ndarray, valid_sorted: np.ndarray,
                             thresholds: np.ndarray, direction: str) -> np.ndarray:
    """Training accuracy at each threshold, via prefix counts on sorted values."""
    n = values_sorted.size
    n_valid = int(valid_sorted.sum())
    valid_below = np.concatenate([[0], np.cumsum(valid_sorted)])
    idx = np.searchsorted(values_sorted, thresholds, side="left")
    if direction == VALID_IF_GE:
        # correct = valids at/above threshold + invalids below it
        correct = (n_valid - valid_below[idx]) + (idx - valid_below[idx])
    else:
        idx_le = np.searchsorted(values_sorted, thresholds, side="right")
        correct = valid_below[idx_le] + ((n - idx_le) - (n_valid - valid_below[idx_le]))
    return correct / n


def fit_threshold(train: list[tuple[float, str]], *, metric: str = "vif",
                  direction: str | None = None, step: float = 1e-3) -> ThresholdValidator:
    """Sweep thresholds from min to max of the observed values in ``step``
    increments (both endpoints included) and keep the smallest maximizer."""
    if step <= 0:
        raise BaselineError("step must be positive")
    if direction is None:
        direction = DIRECTIONS.get(metric)
        if direction is None:
            raise BaselineError(f"no default direction for metric {metric!r}; pass one")
    values = np.array([v for v, _ in train], dtype=np.float64)
    labels = [lab for _, lab in train]
    if any(lab not in LABELS for lab in labels):
        raise BaselineError("labels must be valid/invalid")
    if not np.all(np.isfinite(values)):
        raise BaselineError("metric values must be finite")
    is_valid = np.array([lab == VALID for lab in labels], dtype=np.float64)
    if is_valid.all() or not is_valid.any():
        raise BaselineError("training set contains a single class")

    vmin, vmax = float(values.min()), float(values.max())
    n_steps = _n_steps(vmax - vmin, step) if vmax > vmin else 0
    order = np.argsort(values, kind="stable")
    values_sorted = values[order]
    valid_sorted = is_valid[order]

    best_threshold = None
    best_acc = -1.0
    for start in range(0, n_steps + 1, _CHUNK):
        ks = np.arange(start, min(start + _CHUNK, n_steps + 1), dtype=np.float64)
        thresholds = vmin + ks * step
        accs = _accuracy_for_thresholds(values_sorted, valid_sorted, thresholds, direction)
        k = int(np.argmax(accs))
        if accs[k] > best_acc:
            best_acc = float(accs[k])
            best_threshold = float(thresholds[k])
    return ThresholdValidator(metric=metric, threshold=best_threshold,
                              direction=direction, train_accuracy=best_acc)


def classify(v: ThresholdValidator, value: float) -> str:
    """Label one metric value; the threshold itself counts as valid."""
    if not np.isfinite(value):
        raise BaselineError(f"non-finite metric value {value!r}")
    if v.direction == VALID_IF_GE:
        return VALID if value >= v.threshold else INVALID
    return VALID if value <= v.threshold else INVALID


def classify_batch(v: ThresholdValidator, values) -> list[str]:
    return [classify(v, float(x)) for x in np.asarray(values, dtype=np.float64)]
