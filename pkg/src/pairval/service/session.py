"""Single-session engine bridging HTTP label submissions to the AL loop.

The loop runs on a worker thread and blocks inside the oracle whenever it
needs human labels; HTTP handlers feed answers in through ``submit``.  All
shared state sits behind one condition variable, so reads are cheap and
mutations are serialized.

Submitted labels are journaled next to the checkpoint.  After a restart the
engine resumes from the checkpoint (or replays the seeded pre-validation
draw) and answers already-journaled pairs without asking again, so the
pending queue picks up exactly where it stopped.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Sequence

from pairval import alcore
from pairval.alcore import ALConfig, ALState, CandidatePair, OracleAbort, RunLog
from pairval.dataio import (
    LABELS,
    METRIC_NAMES,
    DatasetManifest,
    atomic_write_text,
    fingerprint_dict,
)

AWAITING = "awaiting_labels"
COMPUTING = "computing"
DONE = "done"
FAILED = "failed"
STOPPED = "stopped"


class SessionError(Exception):
    pass


class UnknownPairError(SessionError):
    """Pair id is not in the pending queue (maps to HTTP 409)."""


class DuplicateLabelError(SessionError):
    """Pair already has a submitted label this batch (maps to HTTP 409)."""


class BadLabelError(SessionError):
    """Label outside the {valid, invalid} vocabulary (maps to HTTP 400)."""


class _Journal:
    """Append-only record of submitted labels, keyed to one session scope."""

    def __init__(self, path: Path | None, scope: str):
        self.path = path
        self.scope = scope
        self.labels: dict[str, str] = {}
        if path is not None and Path(path).exists():
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                data = {}
            if data.get("scope") == scope:
                self.labels = {
                    k: v for k, v in data.get("labels", {}).items() if v in LABELS
                }

    def record(self, pair_id: str, label: str) -> None:
        self.labels[pair_id] = label
        if self.path is not None:
            atomic_write_text(
                self.path,
                json.dumps({"scope": self.scope, "labels": self.labels}, sort_keys=True),
            )


class LabelingEngine:
    """Owns one AL run; the HTTP layer only ever talks to this object."""

    def __init__(self, manifest: DatasetManifest, pairs: Sequence[CandidatePair],
                 cfg: ALConfig, *, checkpoint_path: str | Path | None = None,
                 journal_path: str | Path | None = None):
        self.manifest = manifest
        self.pairs = list(pairs)
        self.index = {p.id: p for p in self.pairs}
        self.cfg = cfg
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        scope = fingerprint_dict({
            "config": cfg.fingerprint(),
            "dataset": alcore.dataset_digest(sorted(self.pairs, key=lambda p: p.id)),
        })
        self.session_id = scope[:16]
        if journal_path is None and self.checkpoint_path is not None:
            journal_path = self.checkpoint_path.with_suffix(".journal.json")
        self._journal = _Journal(Path(journal_path) if journal_path else None, scope)

        self._cond = threading.Condition()
        self._queue: dict[str, str | None] = {}
        self._queue_conf: dict[str, float] = {}
        self._counts = {"d_v": 0, "d_nv": len(self.pairs), "d_val": 0, "iteration": 0}
        self._status = COMPUTING
        self._abort = False
        self._error: str | None = None
        self._thread: threading.Thread | None = None
        self.submitted: list[dict] = []
        self.state: ALState | None = None
        self.log: RunLog | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            raise SessionError("engine already started")
        self._thread = threading.Thread(target=self._run, name="al-engine", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        oracle = _EngineOracle(self)
        try:
            if self.checkpoint_path is not None and self.checkpoint_path.exists():
                state, log = alcore.resume(self.checkpoint_path, self.pairs, self.cfg, oracle)
            else:
                state, log = alcore.run(self.pairs, self.cfg, oracle,
                                        checkpoint_path=self.checkpoint_path)
        except (OracleAbort, alcore.RunInterrupted):
            with self._cond:
                self._status = STOPPED
                self._cond.notify_all()
            return
        except Exception as exc:
            with self._cond:
                self._error = f"{type(exc).__name__}: {exc}"
                self._status = FAILED
                self._cond.notify_all()
            return
        with self._cond:
            self.state = state
            self.log = log
            self._status = DONE
            self._cond.notify_all()

    def stop(self, timeout: float = 10.0) -> None:
        with self._cond:
            self._abort = True
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout)

    def wait_status(self, *targets: str, timeout: float = 30.0) -> str:
        """Block until the status reaches one of ``targets`` (tests, CLI)."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._status not in targets:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(
                        f"status still {self._status!r} after {timeout}s"
                    )
                self._cond.wait(timeout=min(remaining, 0.25))
            return self._status

    # -- oracle side (engine thread) ----------------------------------------

    def _oracle_label(self, ids: Sequence[str]) -> list[str]:
        answers = {pid: self._journal.labels[pid] for pid in ids if pid in self._journal.labels}
        to_ask = [pid for pid in ids if pid not in answers]
        if to_ask:
            conf = self._checkpoint_confidences()
            counts = self._checkpoint_counts()
            with self._cond:
                if self._abort:
                    raise OracleAbort("engine stopping")
                self._queue = {pid: None for pid in to_ask}
                self._queue_conf = {p: conf[p] for p in to_ask if p in conf}
                self._counts = counts
                self._status = AWAITING
                self._cond.notify_all()
                while any(v is None for v in self._queue.values()):
                    if self._abort:
                        self._queue = {}
                        self._queue_conf = {}
                        raise OracleAbort("engine stopping")
                    self._cond.wait(timeout=0.5)
                answers.update(self._queue)
                self._queue = {}
                self._queue_conf = {}
                self._status = COMPUTING
                self._cond.notify_all()
        return [answers[pid] for pid in ids]

    def _checkpoint_confidences(self) -> dict[str, float]:
        payload = self._checkpoint_payload()
        conf = payload.get("pending_confidences") if payload else None
        return {k: float(v) for k, v in conf.items()} if conf else {}

    def _checkpoint_counts(self) -> dict:
        payload = self._checkpoint_payload()
        if not payload:
            return {"d_v": 0, "d_nv": len(self.pairs), "d_val": 0, "iteration": 0}
        return {
            "d_v": len(payload["dv_ids"]),
            "d_nv": len(payload["d_nv"]),
            "d_val": len(payload["labels"]),
            "iteration": payload["iteration"],
        }

    def _checkpoint_payload(self) -> dict | None:
        if self.checkpoint_path is None or not self.checkpoint_path.exists():
            return None
        try:
            return alcore.load_checkpoint(self.checkpoint_path)
        except alcore.CheckpointError:
            return None

    # -- HTTP side -----------------------------------------------------------

    def submit(self, pair_id: str, label: str) -> None:
        if label not in LABELS:
            raise BadLabelError(f"label must be one of {sorted(LABELS)}, got {label!r}")
        with self._cond:
            if pair_id not in self._queue:
                raise UnknownPairError(f"pair {pair_id!r} is not awaiting a label")
            if self._queue[pair_id] is not None:
                raise DuplicateLabelError(f"pair {pair_id!r} already has a submitted label")
            self._queue[pair_id] = label
            self.submitted.append(
                {"pair_id": pair_id, "label": label, "timestamp": time.time()}
            )
            self._journal.record(pair_id, label)
            if all(v is not None for v in self._queue.values()):
                # batch complete: flip synchronously so callers see the
                # transition without racing the engine thread wake-up
                self._status = COMPUTING
            self._cond.notify_all()

    def next_pair(self) -> dict | None:
        with self._cond:
            for pid, submitted in self._queue.items():
                if submitted is None:
                    return {
                        "pair_id": pid,
                        "model_confidence": self._queue_conf.get(pid),
                    }
            return None

    def metric_vector(self, pair_id: str) -> dict[str, float]:
        pair = self.index.get(pair_id)
        if pair is None:
            raise KeyError(pair_id)
        return {name: float(v) for name, v in zip(METRIC_NAMES, pair.features)}

    def image_bytes(self, pair_id: str, which: str) -> bytes:
        entry = self.manifest.entry(pair_id)
        path = entry.original_path if which == "original" else entry.transformed_path
        return Path(path).read_bytes()

    def status(self) -> dict:
        with self._cond:
            pending = sum(1 for v in self._queue.values() if v is None)
            out = {
                "session_id": self.session_id,
                "status": self._status,
                "n_total": len(self.pairs),
                "counts": {**self._counts, "pending": pending},
            }
            if self._error is not None:
                out["error"] = self._error
            if self._status == DONE and self.state is not None:
                state = self.state
                out["counts"] = {
                    "d_v": len(state.dv_ids),
                    "d_nv": len(state.d_nv),
                    "d_val": state.d_val_size,
                    "iteration": state.iteration,
                    "pending": 0,
                }
                summary = {
                    "effort": state.effort,
                    "manual_count": state.manual_count,
                    "iterations": state.iteration,
                }
                truth = {p.id: p.ground_truth for p in self.pairs if p.ground_truth}
                if truth:
                    hits = sum(
                        1 for pid, lab in state.labels.items() if truth.get(pid) == lab
                    )
                    summary["accuracy"] = hits / len(truth)
                out["summary"] = summary
            return out


class _EngineOracle:
    def __init__(self, engine: LabelingEngine):
        self.engine = engine

    def label(self, ids: Sequence[str]) -> list[str]:
        return self.engine._oracle_label(ids)
