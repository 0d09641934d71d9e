"""Shared fixtures: synthetic corpora with metric caches, feature-space blobs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from pairval.alcore import CandidatePair
from pairval.dataio import INVALID, VALID, DatasetManifest, MetricCache, save_metric_cache
from pairval.evaluation.harness import build_records
from pairval.evaluation.synth import SyntheticSpec, generate_synthetic
from pairval.pipeline import MetricPipeline


@dataclass
class Corpus:
    manifest: DatasetManifest
    cache: MetricCache
    records: list
    truth: dict
    root: Path
    manifest_path: Path
    cache_path: Path


def _build_corpus(root: Path, spec: SyntheticSpec, cache_seed: int) -> Corpus:
    manifest = generate_synthetic(spec, root)
    pipeline = MetricPipeline.with_seed(cache_seed)
    cache = pipeline.compute(manifest)
    cache_path = root / "cache.csv"
    save_metric_cache(cache, cache_path)
    records = build_records(manifest, cache)
    return Corpus(
        manifest=manifest, cache=cache, records=records,
        truth={r.id: r.ground_truth for r in records},
        root=root, manifest_path=root / "manifest.csv", cache_path=cache_path,
    )


@pytest.fixture(scope="session")
def corpus40(tmp_path_factory) -> Corpus:
    """Small default-recipe corpus for fast module and service tests."""
    root = tmp_path_factory.mktemp("corpus40")
    return _build_corpus(root, SyntheticSpec(n_pairs=40, image_size=32, seed=7), cache_seed=7)


@pytest.fixture(scope="session")
def corpus500(tmp_path_factory) -> Corpus:
    """The acceptance corpus: 500 pairs, 60% valid, seed 42."""
    root = tmp_path_factory.mktemp("corpus500")
    spec = SyntheticSpec(n_pairs=500, image_size=64, valid_fraction=0.6, seed=42)
    return _build_corpus(root, spec, cache_seed=42)


@pytest.fixture(scope="session")
def corpus_xor(tmp_path_factory) -> Corpus:
    """Two-condition recipe: validity needs both low MSE and high VIF."""
    root = tmp_path_factory.mktemp("corpusxor")
    spec = SyntheticSpec(n_pairs=500, image_size=64, valid_fraction=0.6,
                         recipe="conjunction", seed=42)
    return _build_corpus(root, spec, cache_seed=42)


def blob_records(n: int = 60, seed: int = 0, n_features: int = 13,
                 separation: float = 6.0) -> list[CandidatePair]:
    """Two well-separated feature blobs; blob membership is the ground truth."""
    rng = np.random.default_rng(seed)
    n_valid = n // 2
    records = []
    for i in range(n):
        valid = i < n_valid
        center = separation if valid else -separation
        feats = rng.normal(center, 1.0, size=n_features)
        records.append(CandidatePair(
            id=f"p{i:04d}", features=feats,
            ground_truth=VALID if valid else INVALID,
        ))
    order = rng.permutation(n)
    return [records[i] for i in order]
