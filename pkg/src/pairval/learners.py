"""Binary pair-validity classifiers with calibrated confidence.

Four families (random forest, decision tree, linear SVM, logistic
regression) share one interface: hyperparameters are tuned once by
stratified 5-fold cross-validation, the model is refit on all examples,
and every prediction carries a max-class-probability confidence in
[0.5, 1].  Probability sources per kind: vote fraction across trees for
the forest, leaf class proportion for the tree, the sigmoid output for
logistic regression, and a Platt sigmoid fit on out-of-fold margins for
the SVM.
"""

from __future__ import annotations

import base64
import hashlib
import json
import pickle
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from pairval.dataio import INVALID, VALID

KINDS = ("random_forest", "decision_tree", "svm", "logistic_regression")

LABEL_TO_INT = {INVALID: 0, VALID: 1}
INT_TO_LABEL = {0: INVALID, 1: VALID}


class LearnerError(Exception):
    pass


class SingleClassError(LearnerError):
    """Training data contains only one label (degenerate seed set)."""


@dataclass(frozen=True)
class LabeledExample:
    pair_id: str
    features: np.ndarray
    label: str

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise LearnerError(f"example {self.pair_id}: non-finite feature")
        if self.label not in LABEL_TO_INT:
            raise LearnerError(f"example {self.pair_id}: bad label {self.label!r}")
        object.__setattr__(self, "features", arr)


#: hyperparameter cells, in tie-break order (first best wins)
RF_GRID = tuple(
    {"n_estimators": 100, "max_depth": d, "min_samples_leaf": leaf}
    for d in (8, None) for leaf in (1, 5)
)
DT_GRID = tuple(
    {"max_depth": d, "min_samples_leaf": leaf}
    for d in (4, 8, None) for leaf in (1, 5)
)
SVM_GRID = tuple({"C": c} for c in (0.1, 1.0, 10.0))
LR_GRID = tuple({"l2": l2, "max_iter": 500} for l2 in (0.01, 0.1, 1.0))


@dataclass(frozen=True)
class TuneGrid:
    random_forest: tuple = RF_GRID
    decision_tree: tuple = DT_GRID
    svm: tuple = SVM_GRID
    logistic_regression: tuple = LR_GRID
    folds: int = 5

    def __post_init__(self):
        for kind in KINDS:
            if not getattr(self, kind):
                raise ValueError(f"empty grid for {kind}")

    def for_kind(self, kind: str) -> tuple:
        if kind not in KINDS:
            raise ValueError(f"unknown classifier kind {kind!r}")
        return getattr(self, kind)


DEFAULT_GRID = TuneGrid()


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float


def _make_estimator(kind: str, cell: dict, seed: int):
    rs = int(seed) % (2 ** 31 - 1)
    if kind == "random_forest":
        return RandomForestClassifier(
            n_estimators=cell["n_estimators"], max_depth=cell["max_depth"],
            min_samples_leaf=cell["min_samples_leaf"], random_state=rs,
        )
    if kind == "decision_tree":
        return DecisionTreeClassifier(
            max_depth=cell["max_depth"], min_samples_leaf=cell["min_samples_leaf"],
            random_state=rs,
        )
    if kind == "svm":
        return SVC(kernel="linear", C=cell["C"], random_state=rs)
    if kind == "logistic_regression":
        return LogisticRegression(C=1.0 / cell["l2"], max_iter=cell["max_iter"], solver="lbfgs")
    raise ValueError(f"unknown classifier kind {kind!r}")


def fit_platt(margins: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Fit p(valid | margin) = 1 / (1 + exp(A*margin + B)) by regularized NLL.

    Uses Platt's smoothed targets t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2).
    """
    margins = np.asarray(margins, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(ab):
        a, b = ab
        s = a * margins + b
        nll = np.sum(np.logaddexp(0.0, s) - (1.0 - t) * s)
        p = 1.0 / (1.0 + np.exp(np.clip(s, -500, 500)))
        resid = t - p
        return nll, np.array([np.sum(resid * margins), np.sum(resid)])

    b0 = np.log((n_neg + 1.0) / (n_pos + 1.0))
    res = minimize(objective, x0=np.array([0.0, b0]), jac=True, method="L-BFGS-B",
                   options={"maxiter": 200})
    return float(res.x[0]), float(res.x[1])


def _cv_splits(y: np.ndarray, folds: int, seed: int):
    """Stratified folds capped by the smaller class; None if CV is impossible."""
    min_class = int(np.bincount(y, minlength=2).min())
    n_splits = min(folds, min_class)
    if n_splits < 2:
        return None
    skf = StratifiedKFold(n_splits=n_splits, shuffle=True,
                          random_state=int(seed) % (2 ** 31 - 1))
    return list(skf.split(np.zeros(len(y)), y))


@dataclass
class Classifier:
    """A fitted validator; immutable once constructed, predictions are pure."""

    kind: str
    hyperparameters: dict
    seed: int
    mean: np.ndarray
    std: np.ndarray
    estimator: object
    platt: tuple[float, float] | None = None

    def _transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.mean.shape[0]:
            raise LearnerError(f"expected {self.mean.shape[0]} features, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise LearnerError("non-finite feature value")
        z = (x - self.mean) / self.std
        return z[0:1] if single else z

    def _prob_valid(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "random_forest":
            votes = np.zeros(z.shape[0])
            for tree in self.estimator.estimators_:
                votes += (np.asarray(tree.predict(z)).ravel() == 1)
            return votes / len(self.estimator.estimators_)
        if self.kind == "svm":
            a, b = self.platt
            s = a * self.estimator.decision_function(z) + b
            return 1.0 / (1.0 + np.exp(np.clip(s, -500, 500)))
        proba = self.estimator.predict_proba(z)
        col = list(self.estimator.classes_).index(1)
        return proba[:, col]

    def predict_batch(self, x: np.ndarray) -> tuple[list[str], np.ndarray]:
        z = self._transform(x)
        p_valid = self._prob_valid(z)
        labels = [VALID if p > 0.5 else INVALID for p in p_valid]
        confidence = np.maximum(p_valid, 1.0 - p_valid)
        return labels, confidence

    def predict(self, features) -> Prediction:
        labels, conf = self.predict_batch(np.asarray(features, dtype=np.float64))
        return Prediction(label=labels[0], confidence=float(conf[0]))

    def refit(self, examples: list[LabeledExample]) -> "Classifier":
        """New classifier on new data, keeping kind, hyperparameters, and seed."""
        x, y = _stack(examples)
        return _build(self.kind, self.hyperparameters, x, y, self.seed, DEFAULT_GRID.folds)

    def to_json(self) -> str:
        payload = {
            "format": "pairval-classifier",
            "version": 1,
            "kind": self.kind,
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "platt": list(self.platt) if self.platt else None,
            "estimator": base64.b64encode(pickle.dumps(self.estimator, protocol=4)).decode("ascii"),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Classifier":
        payload = json.loads(text)
        if payload.get("format") != "pairval-classifier":
            raise LearnerError("not a serialized classifier")
        return cls(
            kind=payload["kind"],
            hyperparameters=payload["hyperparameters"],
            seed=payload["seed"],
            mean=np.array(payload["mean"], dtype=np.float64),
            std=np.array(payload["std"], dtype=np.float64),
            estimator=pickle.loads(base64.b64decode(payload["estimator"])),
            platt=tuple(payload["platt"]) if payload["platt"] else None,
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _stack(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    if len(examples) < 10:
        raise LearnerError(f"need at least 10 labeled examples, got {len(examples)}")
    x = np.stack([e.features for e in examples])
    y = np.array([LABEL_TO_INT[e.label] for e in examples], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("training set contains a single class")
    return x, y


def _build(kind: str, cell: dict, x: np.ndarray, y: np.ndarray, seed: int, folds: int) -> Classifier:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    z = (x - mean) / std
    estimator = _make_estimator(kind, cell, seed)
    estimator.fit(z, y)
    platt = None
    if kind == "svm":
        splits = _cv_splits(y, folds, seed)
        if splits is None:
            margins, targets = estimator.decision_function(z), y
        else:
            margins = np.empty(len(y))
            for train_idx, hold_idx in splits:
                fold_est = _make_estimator(kind, cell, seed)
                fold_est.fit(z[train_idx], y[train_idx])
                margins[hold_idx] = fold_est.decision_function(z[hold_idx])
            targets = y
        platt = fit_platt(margins, targets)
    return Classifier(kind=kind, hyperparameters=cell, seed=seed,
                      mean=mean, std=std, estimator=estimator, platt=platt)


def fit(kind: str, examples: list[LabeledExample], grid: TuneGrid = DEFAULT_GRID,
        seed: int = 0) -> Classifier:
    """Tune by stratified CV accuracy (ties keep the first grid cell), then refit on all."""
    x, y = _stack(examples)
    cells = grid.for_kind(kind)
    best_cell = cells[0]
    splits = _cv_splits(y, grid.folds, seed)
    if splits is not None and len(cells) > 1:
        best_acc = -1.0
        for cell in cells:
            correct = 0
            for train_idx, hold_idx in splits:
                mean = x[train_idx].mean(axis=0)
                std = x[train_idx].std(axis=0)
                std = np.where(std == 0.0, 1.0, std)
                est = _make_estimator(kind, cell, seed)
                est.fit((x[train_idx] - mean) / std, y[train_idx])
                pred = est.predict((x[hold_idx] - mean) / std)
                correct += int(np.sum(pred == y[hold_idx]))
            acc = correct / len(y)
            if acc > best_acc:
                best_acc, best_cell = acc, cell
    return _build(kind, best_cell, x, y, seed, grid.folds)


def feature_importance(c: Classifier) -> np.ndarray:
    """Impurity-based importances for tree kinds; nonnegative, sums to 1."""
    if c.kind not in ("random_forest", "decision_tree"):
        raise LearnerError(f"feature_importance unsupported for {c.kind}")
    imp = np.asarray(c.estimator.feature_importances_, dtype=np.float64)
    total = imp.sum()
    if total == 0.0:
        return np.full(imp.shape, 1.0 / imp.size)  # no splits: uninformative, uniform
    return imp / total
