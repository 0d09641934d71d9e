"""Segmentation similarity via seeded k-means over (row, col, intensity).

Both images are segmented with identical seeded initialization, the two
labelings are aligned by greedy maximum-overlap matching of clusters, and
the score is the fraction of pixels whose aligned labels agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pairval.dataio import DimensionMismatchError, Image, fingerprint_dict, to_grayscale


@dataclass(frozen=True)
class SegmenterProxy:
    """Lightweight stand-in for a semantic segmenter."""

    k: int = 4
    max_iter: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def fingerprint(self) -> str:
        return fingerprint_dict({"kind": "kmeans", "k": self.k, "max_iter": self.max_iter, "seed": self.seed})

    def _features(self, img: Image) -> np.ndarray:
        gray = to_grayscale(img).data.astype(np.float64)
        h, w = gray.shape
        rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
        return np.column_stack([
            (rows / max(h - 1, 1)).ravel(),
            (cols / max(w - 1, 1)).ravel(),
            gray.ravel() / 255.0,
        ])

    def segment(self, img: Image) -> np.ndarray:
        """Label map (h*w,) from seeded Lloyd iterations.

        Initial centroids are the feature rows at ``k`` seeded pixel indices,
        so identical images produce identical labelings.  A cluster that
        loses all members keeps its previous centroid.
        """
        x = self._features(img)
        n = x.shape[0]
        k = min(self.k, n)
        rng = np.random.default_rng(self.seed)
        centroids = x[rng.choice(n, size=k, replace=False)].copy()
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(self.max_iter):
            d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(d2, axis=1)
            for j in range(k):
                members = x[new_labels == j]
                if len(members):
                    centroids[j] = members.mean(axis=0)
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
        return labels


def align_labels(ref: np.ndarray, other: np.ndarray, k: int) -> np.ndarray:
    """Relabel ``other`` onto ``ref``'s ids by greedy max-overlap matching."""
    contingency = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        mask = ref == i
        if mask.any():
            contingency[i] = np.bincount(other[mask], minlength=k)
    mapping = np.full(k, -1, dtype=np.int64)
    used_ref = set()
    work = contingency.copy()
    for _ in range(k):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        if work[i, j] < 0:
            break
        mapping[j] = i
        used_ref.add(int(i))
        work[i, :] = -1
        work[:, j] = -1
    leftover_ref = [i for i in range(k) if i not in used_ref]
    for j in range(k):
        if mapping[j] < 0:
            mapping[j] = leftover_ref.pop(0) if leftover_ref else j
    return mapping[other]


def sss(a: Image, b: Image, segmenter: SegmenterProxy | None = None) -> float:
    """Fraction of pixels whose aligned segment labels agree, in [0, 1]."""
    segmenter = segmenter or SegmenterProxy()
    ga, gb = to_grayscale(a), to_grayscale(b)
    if ga.shape != gb.shape:
        raise DimensionMismatchError(f"image shapes differ: {ga.shape} vs {gb.shape}")
    if segmenter.k == 1:
        return 1.0
    la = segmenter.segment(ga)
    lb = segmenter.segment(gb)
    k = min(segmenter.k, la.shape[0])
    aligned = align_labels(la, lb, k)
    return float(np.mean(aligned == la))
