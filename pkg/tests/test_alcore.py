"""Tests for the confidence-gated validation loop and its checkpoints."""

import math

import numpy as np
import pytest

from conftest import blob_records
from pairval.alcore import (
    ALConfig,
    ALError,
    CandidatePair,
    CheckpointError,
    DegenerateSeedError,
    OracleAbort,
    OracleError,
    RunInterrupted,
    SimulatedOracle,
    dataset_digest,
    load_checkpoint,
    resume,
    run,
)

# decision_tree keeps the loop tests fast; the kinds share all loop mechanics
DT = dict(classifier="decision_tree", seed=3)


@pytest.fixture(scope="module")
def pairs():
    return blob_records(n=60, seed=0)


@pytest.fixture(scope="module")
def truth(pairs):
    return {p.id: p.ground_truth for p in pairs}


class AbortingOracle:
    """Answers from ground truth until the n-th request, then walks away."""

    def __init__(self, truth, abort_at):
        self.inner = SimulatedOracle(truth)
        self.calls = 0
        self.abort_at = abort_at

    def label(self, ids):
        self.calls += 1
        if self.calls == self.abort_at:
            raise OracleAbort("operator left")
        return self.inner.label(ids)


def accuracy(state, truth):
    return sum(state.labels[pid] == truth[pid] for pid in truth) / len(truth)


def outcome(state):
    s = state.summary()
    s.pop("classifier_fingerprint")
    return s


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="dv_fraction"):
            ALConfig(alpha=0.9, beta=0.05, dv_fraction=1.0)
        with pytest.raises(ValueError, match="beta"):
            ALConfig(alpha=0.9, beta=0.0, dv_fraction=0.1)
        with pytest.raises(ValueError, match="alpha"):
            ALConfig(alpha=-0.1, beta=0.05, dv_fraction=0.1)
        with pytest.raises(ValueError, match="classifier"):
            ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.1, classifier="mlp")
        with pytest.raises(ValueError, match="manual_budget"):
            ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.1, manual_budget=-1)

    def test_fingerprint_tracks_settings(self):
        a = ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.1)
        assert a.fingerprint() == ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.1).fingerprint()
        assert a.fingerprint() != ALConfig(alpha=0.8, beta=0.05, dv_fraction=0.1).fingerprint()

    def test_pair_validation(self):
        with pytest.raises(ALError, match="non-finite"):
            CandidatePair("p", np.array([np.nan]))
        with pytest.raises(ALError, match="ground truth"):
            CandidatePair("p", np.array([1.0]), "unsure")

    def test_digest_is_order_insensitive_content_sensitive(self, pairs):
        assert dataset_digest(pairs) == dataset_digest(pairs)
        assert dataset_digest(pairs) != dataset_digest(pairs[:59])


class TestOracles:
    def test_simulated_answers_in_order(self, truth):
        ids = sorted(truth)[:4]
        assert SimulatedOracle(truth).label(ids) == [truth[i] for i in ids]

    def test_simulated_missing_id(self):
        with pytest.raises(OracleError, match="ghost"):
            SimulatedOracle({}).label(["ghost"])


class TestRunPreconditions:
    def test_too_few_pairs(self, pairs, truth):
        with pytest.raises(ALError, match="at least 10"):
            run(pairs[:9], ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT),
                SimulatedOracle(truth))

    def test_duplicate_ids(self, pairs, truth):
        with pytest.raises(ALError, match="duplicate"):
            run(list(pairs) + [pairs[0]],
                ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT), SimulatedOracle(truth))

    def test_unknown_dv_ids(self, pairs, truth):
        with pytest.raises(ALError, match="ghost"):
            run(pairs, ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT),
                SimulatedOracle(truth), dv_ids=["ghost"] + [p.id for p in pairs[:11]])

    def test_single_class_dv_ids(self, pairs, truth):
        valid_ids = [p.id for p in pairs if p.ground_truth == "valid"][:12]
        with pytest.raises(DegenerateSeedError):
            run(pairs, ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT),
                SimulatedOracle(truth), dv_ids=valid_ids)

    def test_degenerate_dataset_exhausts_resamples(self, pairs):
        all_valid = [CandidatePair(p.id, p.features, "valid") for p in pairs]
        with pytest.raises(DegenerateSeedError, match="10 times"):
            run(all_valid, ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT),
                SimulatedOracle({p.id: "valid" for p in pairs}))

    def test_bad_oracle_output(self, pairs):
        class Wrong:
            def label(self, ids):
                return ["maybe"] * len(ids)

        with pytest.raises(OracleError):
            run(pairs, ALConfig(alpha=0.9, beta=0.05, dv_fraction=0.2, **DT), Wrong())


class TestLoopStructure:
    def test_unreachable_alpha_goes_fully_manual(self, pairs, truth):
        # confidence can never reach 1.01, so every pair is labeled by hand
        state, log = run(pairs, ALConfig(alpha=1.01, beta=0.25, dv_fraction=0.2, **DT),
                         SimulatedOracle(truth))
        assert state.effort == 1.0
        assert accuracy(state, truth) == 1.0
        assert "auto" not in state.provenance.values()
        assert state.manual_count == 48

    def test_zero_alpha_accepts_everything_first_sweep(self, pairs, truth):
        state, log = run(pairs, ALConfig(alpha=0.0, beta=0.25, dv_fraction=0.2, **DT),
                         SimulatedOracle(truth))
        assert state.effort == 0.2  # exactly the pre-validated fraction
        assert state.manual_count == 0
        assert state.iteration == 1
        assert sum(1 for v in state.provenance.values() if v == "pre_validated") == 12
        assert sum(1 for v in state.provenance.values() if v == "auto") == 48

    def test_conservation_and_monotonic_progress(self, pairs, truth):
        state, log = run(pairs, ALConfig(alpha=0.95, beta=0.05, dv_fraction=0.2, **DT),
                         SimulatedOracle(truth))
        assert len(log.records) >= 1
        prev_val = 0
        prev_nv = state.n_total
        for rec in log.records:
            assert rec.d_val_size + rec.d_nv_size == state.n_total
            assert rec.d_val_size >= prev_val
            assert rec.d_nv_size <= prev_nv
            prev_val, prev_nv = rec.d_val_size, rec.d_nv_size
        assert len(state.labels) == state.n_total
        assert not state.d_nv

    def test_auto_labels_meet_the_gate(self, pairs, truth):
        cfg = ALConfig(alpha=0.95, beta=0.05, dv_fraction=0.2, **DT)
        state, _ = run(pairs, cfg, SimulatedOracle(truth))
        autos = [pid for pid, prov in state.provenance.items() if prov == "auto"]
        assert autos
        assert all(state.confidences[pid] >= cfg.alpha for pid in autos)

    def test_beta_count_formula(self, pairs, truth):
        state, _ = run(pairs, ALConfig(alpha=0.95, beta=0.05, dv_fraction=0.2, **DT),
                       SimulatedOracle(truth))
        assert state.beta_count == max(1, math.ceil(0.05 * 48))
        state, _ = run(pairs, ALConfig(alpha=0.95, beta=0.001, dv_fraction=0.2, **DT),
                       SimulatedOracle(truth))
        assert state.beta_count == 1

    def test_manual_batches_respect_beta_count(self, pairs, truth):
        state, log = run(pairs, ALConfig(alpha=1.01, beta=0.25, dv_fraction=0.2, **DT),
                         SimulatedOracle(truth))
        for rec in log.records:
            assert len(rec.manual) <= state.beta_count

    def test_explicit_dv_ids_are_used(self, pairs, truth):
        chosen = [p.id for p in pairs[:12]]
        state, _ = run(pairs, ALConfig(alpha=0.95, beta=0.05, dv_fraction=0.2, **DT),
                       SimulatedOracle(truth), dv_ids=chosen)
        assert state.dv_ids == chosen
        assert all(state.provenance[pid] == "pre_validated" for pid in chosen)

    def test_deterministic_given_seed(self, pairs, truth):
        cfg = ALConfig(alpha=0.95, beta=0.05, dv_fraction=0.2, **DT)
        s1, l1 = run(pairs, cfg, SimulatedOracle(truth))
        s2, l2 = run(pairs, cfg, SimulatedOracle(truth))
        assert s1.summary() == s2.summary()
        assert l1.to_jsonl() == l2.to_jsonl()


class TestManualBudget:
    def test_budget_flush(self, pairs, truth):
        # alpha unreachable, so only the budget can stop manual labeling
        cfg = ALConfig(alpha=1.01, beta=0.1, dv_fraction=0.2, manual_budget=5, **DT)
        state, log = run(pairs, cfg, SimulatedOracle(truth))
        assert state.manual_count == 5
        assert len(state.labels) == state.n_total
        assert state.effort == pytest.approx((12 + 5) / 60)
        flushed = [pid for rec in log.records for pid in rec.flushed]
        assert flushed
        assert all(state.provenance[pid] == "auto" for pid in flushed)

    def test_zero_budget(self, pairs, truth):
        cfg = ALConfig(alpha=1.01, beta=0.1, dv_fraction=0.2, manual_budget=0, **DT)
        state, _ = run(pairs, cfg, SimulatedOracle(truth))
        assert state.manual_count == 0
        assert len(state.labels) == state.n_total


class TestCheckpoints:
    CFG = ALConfig(alpha=1.01, beta=0.25, dv_fraction=0.2, **DT)

    def test_interrupt_then_resume_matches_straight_run(self, pairs, truth, tmp_path):
        ck = tmp_path / "run.checkpoint.json"
        straight, straight_log = run(pairs, self.CFG, SimulatedOracle(truth))
        with pytest.raises(RunInterrupted):
            run(pairs, self.CFG, AbortingOracle(truth, 3), checkpoint_path=ck)
        resumed, resumed_log = resume(ck, pairs, self.CFG, SimulatedOracle(truth))
        assert resumed.summary() == straight.summary()
        assert resumed_log.to_jsonl() == straight_log.to_jsonl()

    def test_resume_rejects_other_config(self, pairs, truth, tmp_path):
        ck = tmp_path / "run.checkpoint.json"
        with pytest.raises(RunInterrupted):
            run(pairs, self.CFG, AbortingOracle(truth, 3), checkpoint_path=ck)
        other = ALConfig(alpha=0.9, beta=0.25, dv_fraction=0.2, **DT)
        with pytest.raises(CheckpointError, match="configuration"):
            resume(ck, pairs, other, SimulatedOracle(truth))

    def test_resume_rejects_other_dataset(self, pairs, truth, tmp_path):
        ck = tmp_path / "run.checkpoint.json"
        with pytest.raises(RunInterrupted):
            run(pairs, self.CFG, AbortingOracle(truth, 3), checkpoint_path=ck)
        with pytest.raises(CheckpointError, match="dataset"):
            resume(ck, pairs[:50], self.CFG, SimulatedOracle(truth))

    def test_completed_checkpoint_is_a_noop(self, pairs, truth, tmp_path):
        ck = tmp_path / "done.checkpoint.json"
        straight, straight_log = run(pairs, self.CFG, SimulatedOracle(truth),
                                     checkpoint_path=ck)
        assert load_checkpoint(ck)["done"] is True

        class Exploding:
            def label(self, ids):
                raise AssertionError("oracle must not be consulted")

        resumed, resumed_log = resume(ck, pairs, self.CFG, Exploding())
        # serialized estimators do not re-pickle to identical bytes, so
        # compare the outcome fields rather than the classifier fingerprint
        assert outcome(resumed) == outcome(straight)
        assert resumed_log.to_jsonl() == straight_log.to_jsonl()

    def test_checkpoint_pending_is_sorted_with_confidences(self, pairs, truth, tmp_path):
        ck = tmp_path / "run.checkpoint.json"
        with pytest.raises(RunInterrupted):
            run(pairs, self.CFG, AbortingOracle(truth, 2), checkpoint_path=ck)
        payload = load_checkpoint(ck)
        pending = payload["pending"]
        assert pending == sorted(pending) and pending
        assert set(payload["pending_confidences"]) == set(pending)
        for conf in payload["pending_confidences"].values():
            assert 0.5 <= conf < self.CFG.alpha

    def test_garbage_checkpoint_rejected(self, tmp_path):
        p = tmp_path / "ck.json"
        p.write_text("{}", encoding="utf-8")
        with pytest.raises(CheckpointError, match="not a run checkpoint"):
            load_checkpoint(p)
