"""Seeded synthetic (original, transformed) corpora with known ground truth.

Originals are geometric shapes over a textured background.  The default
recipe produces valid transforms that preserve structure (mild gain and
noise) and invalid ones that destroy it (heavy noise, large blanked
regions, full blur).  The ``conjunction`` recipe makes validity depend on
two conditions at once: one invalid flavor swaps in a different scene of
the same style (low fidelity, but perfectly in-distribution), the other
applies a strong uniform brightness shift (full fidelity structure-wise,
but far out of distribution) — so no single-metric threshold on either
VIF or VAE-RE can separate valid from invalid, while a multi-metric
classifier can.

Pixel values of originals stay inside [60, 160] so the conjunction
recipe's shifts never clip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from pairval.dataio import (
    INVALID,
    VALID,
    DatasetManifest,
    Image,
    ManifestEntry,
    save_image,
    save_manifest,
)

RECIPES = ("default", "conjunction")


@dataclass(frozen=True)
class SyntheticSpec:
    n_pairs: int = 500
    image_size: int = 64
    valid_fraction: float = 0.6
    recipe: str = "default"
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if not (0.0 <= self.valid_fraction <= 1.0):
            raise ValueError("valid_fraction must be in [0, 1]")
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _quantize(canvas: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def _scene(rng: np.random.Generator, size: int) -> np.ndarray:
    """One original: textured background plus 2-4 shapes, values in [60, 160]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    canvas = np.full((size, size), 110.0)
    for amplitude in (rng.uniform(12.0, 22.0), rng.uniform(5.0, 10.0)):
        fx, fy = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        canvas += amplitude * np.sin(2.0 * math.pi * (fx * xx + fy * yy) + phase)
    canvas += rng.normal(0.0, 3.0, size=canvas.shape)

    for _ in range(int(rng.integers(2, 5))):
        shade = rng.uniform(65.0, 90.0) if rng.random() < 0.5 else rng.uniform(130.0, 155.0)
        kind = rng.integers(0, 3)
        if kind == 0:  # rectangle
            h = int(rng.integers(size // 6, size // 2))
            w = int(rng.integers(size // 6, size // 2))
            r0 = int(rng.integers(0, size - h))
            c0 = int(rng.integers(0, size - w))
            canvas[r0 : r0 + h, c0 : c0 + w] = shade
        elif kind == 1:  # disk
            radius = rng.uniform(size / 10.0, size / 4.0)
            cy, cx = rng.uniform(radius, size - radius, size=2)
            mask = (np.arange(size)[:, None] - cy) ** 2 + (np.arange(size)[None, :] - cx) ** 2 <= radius ** 2
            canvas[mask] = shade
        else:  # bar
            thickness = int(rng.integers(max(2, size // 16), size // 6))
            start = int(rng.integers(0, size - thickness))
            if rng.random() < 0.5:
                canvas[start : start + thickness, :] = shade
            else:
                canvas[:, start : start + thickness] = shade
    return np.clip(canvas, 60.0, 160.0)


def _transform(rng: np.random.Generator, original: np.ndarray, spec: SyntheticSpec,
               is_valid: bool, invalid_flavor: int) -> np.ndarray:
    size = spec.image_size
    if spec.recipe == "default":
        if is_valid:
            gain = rng.uniform(0.85, 1.15)
            sigma = rng.uniform(0.0, 8.0)
            return original * gain + rng.normal(0.0, sigma, original.shape)
        flavor = invalid_flavor % 3
        if flavor == 0:  # heavy noise
            return original + rng.normal(0.0, rng.uniform(60.0, 90.0), original.shape)
        if flavor == 1:  # blank out >= 40% of the area
            area = rng.uniform(0.4, 0.6)
            h_frac = rng.uniform(math.sqrt(area), min(1.0, area / math.sqrt(area) + 0.3))
            h = min(size, max(1, int(round(h_frac * size))))
            w = min(size, max(1, int(round(area * size * size / h))))
            r0 = int(rng.integers(0, size - h + 1))
            c0 = int(rng.integers(0, size - w + 1))
            out = original.copy()
            out[r0 : r0 + h, c0 : c0 + w] = float(rng.choice([0.0, 128.0, 255.0]))
            return out
        return gaussian_filter(original, rng.uniform(6.0, 10.0))  # full blur

    # conjunction recipe
    if is_valid:
        shift = rng.uniform(-15.0, 15.0)
        sigma = rng.uniform(0.0, 5.0)
        return original + shift + rng.normal(0.0, sigma, original.shape)
    if invalid_flavor % 2 == 0:
        return _scene(rng, size)  # different scene, same style: in-distribution
    return original + rng.uniform(60.0, 90.0)  # strong shift: out-of-distribution


def generate_synthetic(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write PNGs plus ``manifest.csv``; same spec reproduces identical bytes."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    n_valid = int(round(spec.valid_fraction * spec.n_pairs))
    flags = np.array([True] * n_valid + [False] * (spec.n_pairs - n_valid))
    rng.shuffle(flags)

    entries: list[ManifestEntry] = []
    invalid_counter = 0
    width = max(4, len(str(spec.n_pairs - 1)))
    for i, is_valid in enumerate(flags):
        pair_id = f"pair{i:0{width}d}"
        original = _scene(rng, spec.image_size)
        transformed = _transform(rng, original, spec, bool(is_valid), invalid_counter)
        if not is_valid:
            invalid_counter += 1
        orig_path = images_dir / f"{pair_id}_orig.png"
        trans_path = images_dir / f"{pair_id}_tr.png"
        save_image(Image(_quantize(original)), orig_path)
        save_image(Image(_quantize(transformed)), trans_path)
        entries.append(ManifestEntry(
            id=pair_id,
            original_path=orig_path.resolve(),
            transformed_path=trans_path.resolve(),
            ground_truth=VALID if is_valid else INVALID,
        ))
    manifest = DatasetManifest(entries=entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
