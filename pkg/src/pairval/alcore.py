"""The confidence-gated active-learning validation loop.

Given pairs with metric vectors and an oracle, the loop pre-validates a
seeded random subset, trains a classifier on it, then iterates: every
remaining pair whose prediction confidence reaches ``alpha`` is accepted
automatically; a random batch of ``beta_count`` pairs is routed to the
oracle; the classifier is retrained on everything validated so far.  The
loop ends when nothing is left unvalidated (or a manual-label budget runs
out, in which case the last classifier labels the remainder).

State is checkpointed atomically before every oracle call, so interactive
sessions survive interruption and ``resume`` reproduces the exact final
state of an uninterrupted run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from pairval import learners
from pairval.dataio import INVALID, LABELS, VALID, atomic_write_text, fingerprint_dict
from pairval.learners import DEFAULT_GRID, Classifier, LabeledExample, TuneGrid

PROV_PRE = "pre_validated"
PROV_AUTO = "auto"
PROV_MANUAL = "manual"


class ALError(Exception):
    pass


class DegenerateSeedError(ALError):
    """The pre-validation draw kept producing a single class."""


class OracleError(ALError):
    """The oracle returned something unusable."""


class OracleAbort(Exception):
    """Raised by an oracle to interrupt the run (state is checkpointed)."""


class RunInterrupted(ALError):
    """Run stopped mid-iteration; resume from the checkpoint."""


class CheckpointError(ALError):
    pass


@dataclass(frozen=True)
class ALConfig:
    """Inputs of the loop; ``alpha > 1`` forces fully manual validation."""

    alpha: float
    beta: float
    dv_fraction: float
    classifier: str = "random_forest"
    grid: TuneGrid = DEFAULT_GRID
    seed: int = 0
    manual_budget: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.dv_fraction < 1.0):
            raise ValueError(f"dv_fraction must be in [0, 1), got {self.dv_fraction}")
        if self.beta <= 0.0:
            raise ValueError(f"beta fraction must be > 0, got {self.beta}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.classifier not in learners.KINDS:
            raise ValueError(f"unknown classifier kind {self.classifier!r}")
        if self.manual_budget is not None and self.manual_budget < 0:
            raise ValueError("manual_budget must be >= 0")

    def fingerprint(self) -> str:
        return fingerprint_dict({
            "alpha": self.alpha,
            "beta": self.beta,
            "dv_fraction": self.dv_fraction,
            "classifier": self.classifier,
            "grid": {k: list(getattr(self.grid, k)) for k in learners.KINDS},
            "folds": self.grid.folds,
            "seed": self.seed,
            "manual_budget": self.manual_budget,
        })


@dataclass(frozen=True)
class CandidatePair:
    """One dataset row: pair id, 13-metric feature vector, optional truth."""

    id: str
    features: np.ndarray
    ground_truth: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ALError(f"pair {self.id}: non-finite feature")
        if self.ground_truth not in (None, VALID, INVALID):
            raise ALError(f"pair {self.id}: bad ground truth {self.ground_truth!r}")
        object.__setattr__(self, "features", arr)


class Oracle(Protocol):
    def label(self, ids: Sequence[str]) -> list[str]: ...


class SimulatedOracle:
    """Answers every request from a ground-truth table."""

    def __init__(self, truth: dict[str, str]):
        self.truth = dict(truth)

    def label(self, ids: Sequence[str]) -> list[str]:
        out = []
        for pair_id in ids:
            label = self.truth.get(pair_id)
            if label not in LABELS:
                raise OracleError(f"no ground truth for pair {pair_id!r}")
            out.append(label)
        return out


@dataclass
class IterationRecord:
    iteration: int
    auto: dict[str, float]
    manual: list[str]
    flushed: list[str]
    d_val_size: int
    d_nv_size: int
    classifier_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "auto": self.auto,
            "manual": self.manual,
            "flushed": self.flushed,
            "d_val_size": self.d_val_size,
            "d_nv_size": self.d_nv_size,
            "classifier_fingerprint": self.classifier_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(**d)


@dataclass
class RunLog:
    records: list[IterationRecord] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    def save(self, path) -> None:
        atomic_write_text(path, self.to_jsonl())


@dataclass
class ALState:
    """Validated labels plus what is still pending, with full provenance."""

    n_total: int
    labels: dict[str, str] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    confidences: dict[str, float] = field(default_factory=dict)
    dv_ids: list[str] = field(default_factory=list)
    d_nv: list[str] = field(default_factory=list)
    iteration: int = 0
    manual_count: int = 0
    beta_count: int = 0
    classifier: Classifier | None = None

    @property
    def d_val_size(self) -> int:
        return len(self.labels)

    @property
    def effort(self) -> float:
        """(pre-validated + manually labeled) / dataset size."""
        return (len(self.dv_ids) + self.manual_count) / self.n_total

    def summary(self) -> dict:
        """Everything that defines the outcome; used for state-equality checks."""
        return {
            "labels": dict(self.labels),
            "provenance": dict(self.provenance),
            "confidences": dict(self.confidences),
            "dv_ids": list(self.dv_ids),
            "iteration": self.iteration,
            "manual_count": self.manual_count,
            "effort": self.effort,
            "classifier_fingerprint": self.classifier.fingerprint() if self.classifier else None,
        }


def dataset_digest(pairs: Sequence[CandidatePair]) -> str:
    import hashlib

    h = hashlib.sha256()
    for p in pairs:
        h.update(p.id.encode("utf-8"))
        h.update(b"\x00")
        h.update(np.ascontiguousarray(p.features).tobytes())
    return h.hexdigest()


def _examples(state: ALState, index: dict[str, CandidatePair]) -> list[LabeledExample]:
    # sorted so the training set is order-canonical: a resumed run must
    # feed examples to the classifier in exactly the same order as an
    # uninterrupted one
    return [
        LabeledExample(pair_id=pid, features=index[pid].features, label=state.labels[pid])
        for pid in sorted(state.labels)
    ]


def _check_oracle_labels(ids: Sequence[str], labels: list[str]) -> None:
    if len(labels) != len(ids):
        raise OracleError(f"oracle returned {len(labels)} labels for {len(ids)} pairs")
    for pid, label in zip(ids, labels):
        if label not in LABELS:
            raise OracleError(f"oracle returned {label!r} for pair {pid}")


def _draw_dv(pairs: Sequence[CandidatePair], cfg: ALConfig, oracle: Oracle,
             rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Seeded pre-validation draw; resample up to 10 times if single-class."""
    ids = [p.id for p in pairs]
    dv_count = int(round(cfg.dv_fraction * len(pairs)))
    dv_count = min(dv_count, len(pairs) - 1)
    for _ in range(10):
        chosen_idx = sorted(rng.choice(len(ids), size=dv_count, replace=False))
        chosen = [ids[i] for i in chosen_idx]
        labels = oracle.label(chosen)
        _check_oracle_labels(chosen, labels)
        if len(set(labels)) == 2:
            return chosen, labels
    raise DegenerateSeedError(
        f"pre-validation draw of {dv_count} pairs produced a single class 10 times; "
        "increase dv_fraction or check the dataset"
    )


def run(pairs: Sequence[CandidatePair], cfg: ALConfig, oracle: Oracle, *,
        dv_ids: Sequence[str] | None = None,
        checkpoint_path=None) -> tuple[ALState, RunLog]:
    """Execute the loop to completion. See the module docstring for the shape."""
    if len(pairs) < 10:
        raise ALError(f"need at least 10 pairs, got {len(pairs)}")
    index = {p.id: p for p in pairs}
    if len(index) != len(pairs):
        raise ALError("duplicate pair ids in dataset")
    rng = np.random.default_rng(cfg.seed)

    if dv_ids is None:
        chosen, labels = _draw_dv(pairs, cfg, oracle, rng)
    else:
        chosen = list(dv_ids)
        missing = [i for i in chosen if i not in index]
        if missing:
            raise ALError(f"dv ids not in dataset: {missing[:3]}")
        labels = oracle.label(chosen)
        _check_oracle_labels(chosen, labels)
        if len(set(labels)) < 2:
            raise DegenerateSeedError("explicit dv_ids produced a single class")

    state = ALState(n_total=len(pairs))
    state.dv_ids = list(chosen)
    for pid, label in zip(chosen, labels):
        state.labels[pid] = label
        state.provenance[pid] = PROV_PRE
    chosen_set = set(chosen)
    state.d_nv = [p.id for p in pairs if p.id not in chosen_set]
    state.beta_count = max(1, math.ceil(cfg.beta * len(state.d_nv)))

    state.classifier = learners.fit(cfg.classifier, _examples(state, index), cfg.grid, cfg.seed)
    log = RunLog()
    return _loop(index, cfg, oracle, rng, state, log, checkpoint_path, pending=None, partial_auto=None)


def _loop(index: dict[str, CandidatePair], cfg: ALConfig, oracle: Oracle,
          rng: np.random.Generator, state: ALState, log: RunLog, checkpoint_path,
          pending: list[str] | None, partial_auto: dict[str, float] | None) -> tuple[ALState, RunLog]:
    budget = cfg.manual_budget
    while state.d_nv or pending is not None:
        if pending is None:
            state.iteration += 1
            partial_auto = {}
            feats = np.stack([index[pid].features for pid in state.d_nv])
            pred_labels, confs = state.classifier.predict_batch(feats)
            remaining: list[str] = []
            below: list[tuple[str, str, float]] = []
            for pid, lab, conf in zip(state.d_nv, pred_labels, confs):
                if conf >= cfg.alpha:
                    state.labels[pid] = lab
                    state.provenance[pid] = PROV_AUTO
                    state.confidences[pid] = float(conf)
                    partial_auto[pid] = float(conf)
                else:
                    remaining.append(pid)
                    below.append((pid, lab, float(conf)))
            state.d_nv = remaining

            if budget is not None and state.manual_count >= budget and state.d_nv:
                # budget exhausted: the last classifier labels everything left
                flushed = []
                for pid, lab, conf in below:
                    state.labels[pid] = lab
                    state.provenance[pid] = PROV_AUTO
                    state.confidences[pid] = conf
                    flushed.append(pid)
                state.d_nv = []
                log.records.append(IterationRecord(
                    iteration=state.iteration, auto=partial_auto, manual=[],
                    flushed=flushed, d_val_size=state.d_val_size, d_nv_size=0,
                    classifier_fingerprint=state.classifier.fingerprint(),
                ))
                _write_checkpoint(checkpoint_path, index, cfg, state, log, rng, None, None)
                break

            k = min(state.beta_count, len(state.d_nv))
            if budget is not None:
                k = min(k, budget - state.manual_count)
            if k > 0:
                draw = rng.choice(len(state.d_nv), size=k, replace=False)
                pending = sorted(state.d_nv[i] for i in draw)
            else:
                pending = []
            pending_set = set(pending)
            pending_conf = {pid: conf for pid, _, conf in below if pid in pending_set}
            _write_checkpoint(checkpoint_path, index, cfg, state, log, rng, pending,
                              partial_auto, pending_conf)

        if pending:
            try:
                manual_labels = oracle.label(pending)
            except OracleAbort as exc:
                raise RunInterrupted(
                    f"oracle aborted at iteration {state.iteration}; resume from checkpoint"
                ) from exc
            _check_oracle_labels(pending, manual_labels)
            pending_set = set(pending)
            for pid, label in zip(pending, manual_labels):
                state.labels[pid] = label
                state.provenance[pid] = PROV_MANUAL
            state.d_nv = [pid for pid in state.d_nv if pid not in pending_set]
            state.manual_count += len(pending)

        state.classifier = state.classifier.refit(_examples(state, index))
        log.records.append(IterationRecord(
            iteration=state.iteration, auto=partial_auto or {}, manual=list(pending or []),
            flushed=[], d_val_size=state.d_val_size, d_nv_size=len(state.d_nv),
            classifier_fingerprint=state.classifier.fingerprint(),
        ))
        pending = None
        partial_auto = None
        _write_checkpoint(checkpoint_path, index, cfg, state, log, rng, None, None)

        assert state.d_val_size + len(state.d_nv) == state.n_total, "conservation violated"
    return state, log


CHECKPOINT_FORMAT = "pairval-checkpoint"


def _write_checkpoint(path, index, cfg: ALConfig, state: ALState, log: RunLog,
                      rng: np.random.Generator, pending: list[str] | None,
                      partial_auto: dict[str, float] | None,
                      pending_conf: dict[str, float] | None = None) -> None:
    if path is None:
        return
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config_fingerprint": cfg.fingerprint(),
        "dataset_digest": dataset_digest([index[p] for p in sorted(index)]),
        "n_total": state.n_total,
        "labels": state.labels,
        "provenance": state.provenance,
        "confidences": state.confidences,
        "dv_ids": state.dv_ids,
        "d_nv": state.d_nv,
        "iteration": state.iteration,
        "manual_count": state.manual_count,
        "beta_count": state.beta_count,
        "rng_state": rng.bit_generator.state,
        "pending": pending,
        "pending_confidences": pending_conf,
        "partial_auto": partial_auto,
        "classifier": state.classifier.to_json() if state.classifier else None,
        "log": [r.to_dict() for r in log.records],
        "done": not state.d_nv and pending is None,
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a run checkpoint")
    return payload


def resume(checkpoint_path, pairs: Sequence[CandidatePair], cfg: ALConfig,
           oracle: Oracle) -> tuple[ALState, RunLog]:
    """Continue an interrupted run; a completed checkpoint is a no-op."""
    payload = load_checkpoint(checkpoint_path)
    if payload["config_fingerprint"] != cfg.fingerprint():
        raise CheckpointError(
            "checkpoint was written under a different configuration; refusing to resume"
        )
    index = {p.id: p for p in pairs}
    digest = dataset_digest([index[p] for p in sorted(index)])
    if payload["dataset_digest"] != digest:
        raise CheckpointError("checkpoint was written for a different dataset")

    state = ALState(
        n_total=payload["n_total"],
        labels=dict(payload["labels"]),
        provenance=dict(payload["provenance"]),
        confidences={k: float(v) for k, v in payload["confidences"].items()},
        dv_ids=list(payload["dv_ids"]),
        d_nv=list(payload["d_nv"]),
        iteration=payload["iteration"],
        manual_count=payload["manual_count"],
        beta_count=payload["beta_count"],
        classifier=Classifier.from_json(payload["classifier"]) if payload["classifier"] else None,
    )
    log = RunLog([IterationRecord.from_dict(d) for d in payload["log"]])
    if payload["done"]:
        return state, log
    rng = np.random.default_rng(0)
    rng.bit_generator.state = payload["rng_state"]
    pending = payload["pending"]
    partial_auto = payload["partial_auto"]
    if partial_auto is not None:
        partial_auto = {k: float(v) for k, v in partial_auto.items()}
    return _loop(index, cfg, oracle, rng, state, log, checkpoint_path,
                 pending=list(pending) if pending is not None else None,
                 partial_auto=partial_auto)
