"""Run results: scoring, persistence, and Pareto analysis.

A ``RunResult`` captures one experiment configuration with its accuracy,
precision, recall, and human effort.  Result files are JSON and exclude
wall-clock timing so that re-running a seeded experiment produces a
byte-identical file; timings stay available on the in-memory objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from pairval.dataio import INVALID, VALID, atomic_write_text, fingerprint_dict


@dataclass(frozen=True)
class Scores:
    """Accuracy/precision/recall with ``None`` marking undefined ratios."""

    accuracy: float
    precision: float | None
    recall: float | None


def score(predicted, truth) -> Scores:
    """Standard binary scores with ``valid`` as the positive class."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(truth)} truths")
    if not predicted:
        raise ValueError("empty inputs")
    for lab in (*predicted, *truth):
        if lab not in (VALID, INVALID):
            raise ValueError(f"bad label {lab!r}")
    tp = sum(p == VALID and t == VALID for p, t in zip(predicted, truth))
    fp = sum(p == VALID and t == INVALID for p, t in zip(predicted, truth))
    fn = sum(p == INVALID and t == VALID for p, t in zip(predicted, truth))
    correct = sum(p == t for p, t in zip(predicted, truth))
    accuracy = correct / len(truth)
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    return Scores(accuracy=accuracy, precision=precision, recall=recall)


@dataclass
class RunResult:
    """Outcome of one configuration; ``wall_time`` never enters result files."""

    config: dict
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    human_effort: float | None = None
    seed: int = 0
    wall_time: float = 0.0
    status: str = "ok"
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def config_fingerprint(self) -> str:
        return fingerprint_dict(self.config)

    def to_record(self) -> dict:
        return {
            "config": self.config,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "human_effort": self.human_effort,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "extra": self.extra,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RunResult":
        return cls(
            config=rec["config"], accuracy=rec["accuracy"], precision=rec["precision"],
            recall=rec["recall"], human_effort=rec["human_effort"], seed=rec["seed"],
            status=rec.get("status", "ok"), error=rec.get("error"),
            extra=rec.get("extra", {}),
        )


def save_results(results: list[RunResult], path) -> None:
    payload = {"format": "pairval-results", "version": 1,
               "results": [r.to_record() for r in results]}
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_results(path) -> list[RunResult]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "pairval-results":
        raise ValueError(f"{path}: not a results file")
    return [RunResult.from_record(rec) for rec in payload["results"]]


def _dominates(y: RunResult, x: RunResult) -> bool:
    return (
        y.accuracy >= x.accuracy and y.human_effort <= x.human_effort
        and (y.accuracy > x.accuracy or y.human_effort < x.human_effort)
    )


def pareto_front(results: list[RunResult]) -> list[RunResult]:
    """Points not dominated in (accuracy up, effort down).

    Results sharing a config fingerprint are deduplicated to the first
    occurrence; distinct configs landing on the same (accuracy, effort)
    point are all retained.  Failed runs are ignored.
    """
    seen: set[str] = set()
    candidates: list[RunResult] = []
    for r in results:
        if r.status != "ok" or r.accuracy is None or r.human_effort is None:
            continue
        fp = r.config_fingerprint()
        if fp in seen:
            continue
        seen.add(fp)
        candidates.append(r)
    if not candidates:
        raise ValueError("no successful results to analyze")

    by_effort: dict[float, list[RunResult]] = {}
    for r in candidates:
        by_effort.setdefault(r.human_effort, []).append(r)
    front: list[RunResult] = []
    best_lower = -np.inf  # best accuracy among strictly lower efforts
    for eff in sorted(by_effort):
        group = by_effort[eff]
        group_max = max(r.accuracy for r in group)
        if group_max > best_lower:
            front.extend(r for r in group if r.accuracy == group_max)
        best_lower = max(best_lower, group_max)
    order = {id(r): i for i, r in enumerate(candidates)}
    front.sort(key=lambda r: order[id(r)])
    return front


def plot_front_svg(results: list[RunResult], front: list[RunResult], path) -> None:
    """Accuracy-vs-effort scatter with the Pareto front highlighted."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in results if r.status == "ok" and r.accuracy is not None]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter([r.human_effort for r in ok], [r.accuracy for r in ok],
               s=12, c="#9aa7b0", label="runs")
    fr = sorted(front, key=lambda r: r.human_effort)
    ax.plot([r.human_effort for r in fr], [r.accuracy for r in fr],
            "o-", c="#c0392b", markersize=5, label="Pareto front")
    ax.set_xlabel("human effort")
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def results_markdown(results: list[RunResult], title: str = "Runs") -> str:
    lines = [f"## {title}", "",
             "| config | accuracy | precision | recall | effort | status |",
             "|---|---|---|---|---|---|"]
    for r in results:
        cfg = ", ".join(f"{k}={v}" for k, v in sorted(r.config.items()) if k != "grid")
        lines.append(
            f"| {cfg} | {_fmt(r.accuracy)} | {_fmt(r.precision)} | {_fmt(r.recall)} "
            f"| {_fmt(r.human_effort)} | {r.status} |"
        )
    return "\n".join(lines) + "\n"
