"""Images, pair manifests, and the metric-vector cache.

A dataset is a CSV manifest listing (original, transformed) PNG pairs plus
an optional ground-truth label per pair.  Computed metric vectors are
persisted to a CSV cache whose header carries a fingerprint of every
parameter that influenced the values, so a stale cache is detected instead
of silently reused.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image as PILImage

VALID = "valid"
INVALID = "invalid"
LABELS = (VALID, INVALID)

#: canonical metric order used everywhere a 13-vector is serialized
METRIC_NAMES = (
    "psnr", "ssim", "mse", "tsi", "ws", "cs", "kl",
    "hist_int", "hist_cor", "cpl", "sss", "vae_re", "vif",
)

# Rec.601 luma weights
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


class DataError(Exception):
    """Base class for dataset and file-format problems."""


class ImageFormatError(DataError):
    """Unsupported or corrupt image file."""


class DimensionMismatchError(DataError):
    """Images of one pair differ in width, height, or channels."""


class ManifestError(DataError):
    """Malformed or inconsistent manifest."""


class StaleCacheError(DataError):
    """Metric cache was computed under a different configuration."""


@dataclass(frozen=True)
class Image:
    """8-bit raster image: grayscale ``(h, w)`` or RGB ``(h, w, 3)`` uint8."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise ImageFormatError(f"expected uint8 pixel data, got {arr.dtype}")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ImageFormatError(f"expected (h, w) or (h, w, 3) data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageFormatError("image must be at least 1x1")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def from_array(cls, arr) -> "Image":
        return cls(np.asarray(arr, dtype=np.uint8))


def to_grayscale(img: Image) -> Image:
    """Rec.601 luma conversion, rounded half-up. Grayscale input is returned as is."""
    if img.channels == 1:
        return img
    rgb = img.data.astype(np.float64)
    luma = _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]
    return Image(np.floor(luma + 0.5).astype(np.uint8))


def load_image(path) -> Image:
    """Load an 8-bit grayscale or RGB PNG.

    Alpha is stripped by compositing over black; palette images are expanded
    to RGB.  Bit depths other than 8 raise :class:`ImageFormatError`.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
                raise ImageFormatError(f"{path}: only 8-bit images are supported (mode {mode})")
            if mode == "P":
                pil = pil.convert("RGBA" if "transparency" in pil.info else "RGB")
                mode = pil.mode
            if mode == "1":
                pil = pil.convert("L")
                mode = "L"
            arr = np.asarray(pil)
    except FileNotFoundError:
        raise
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from exc

    if arr.dtype != np.uint8:
        raise ImageFormatError(f"{path}: only 8-bit images are supported (dtype {arr.dtype})")
    if mode in ("LA", "RGBA"):
        alpha = arr[..., -1].astype(np.float64) / 255.0
        color = arr[..., :-1].astype(np.float64)
        arr = np.floor(color * alpha[..., None] + 0.5).astype(np.uint8)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
    return Image(arr)


def save_image(img: Image, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(img.data).save(path, format="PNG")


@dataclass(frozen=True)
class ImagePair:
    """An (original, transformed) pair; images must agree in shape."""

    id: str
    original: Image
    transformed: Image
    ground_truth: str | None = None

    def __post_init__(self):
        if self.original.shape != self.transformed.shape:
            raise DimensionMismatchError(
                f"pair {self.id}: original {self.original.shape} vs "
                f"transformed {self.transformed.shape}"
            )
        if self.ground_truth not in (None, VALID, INVALID):
            raise ManifestError(f"pair {self.id}: bad label {self.ground_truth!r}")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    original_path: Path
    transformed_path: Path
    ground_truth: str | None = None


@dataclass
class DatasetManifest:
    """Ordered list of pair entries with paths resolved against ``root``."""

    entries: list[ManifestEntry]
    root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def entry(self, pair_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == pair_id:
                return e
        raise KeyError(pair_id)

    def labels(self) -> dict[str, str | None]:
        return {e.id: e.ground_truth for e in self.entries}

    def load_pair(self, entry: ManifestEntry | str) -> ImagePair:
        if isinstance(entry, str):
            entry = self.entry(entry)
        return ImagePair(
            id=entry.id,
            original=load_image(entry.original_path),
            transformed=load_image(entry.transformed_path),
            ground_truth=entry.ground_truth,
        )

    def iter_pairs(self) -> Iterator[ImagePair]:
        for e in self.entries:
            yield self.load_pair(e)


MANIFEST_HEADER = ["id", "original", "transformed", "label"]


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse a ``id,original,transformed,label`` CSV; paths are relative to it."""
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest")
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise ManifestError(f"{path}: bad header {header!r}, expected {MANIFEST_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            pair_id, orig, trans, label = (c.strip() for c in row)
            if not pair_id:
                raise ManifestError(f"{path}:{lineno}: empty pair id")
            if pair_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate pair id {pair_id!r}")
            seen.add(pair_id)
            if label == "":
                gt = None
            elif label in LABELS:
                gt = label
            else:
                raise ManifestError(f"{path}:{lineno}: label must be valid/invalid/empty, got {label!r}")
            entry = ManifestEntry(
                id=pair_id,
                original_path=(root / orig).resolve(),
                transformed_path=(root / trans).resolve(),
                ground_truth=gt,
            )
            if check_files:
                for p in (entry.original_path, entry.transformed_path):
                    if not p.is_file():
                        raise ManifestError(f"{path}:{lineno}: missing file {p}")
            entries.append(entry)
    return DatasetManifest(entries=entries, root=root)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    root = path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([
                e.id,
                os.path.relpath(e.original_path, root),
                os.path.relpath(e.transformed_path, root),
                e.ground_truth or "",
            ])


def atomic_write_text(path, text: str) -> None:
    """Write then rename, so readers never observe a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def fingerprint_dict(payload: dict) -> str:
    """Stable sha256 of a JSON-serializable dict (sorted keys)."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class MetricCache:
    """Per-pair 13-metric vectors plus the configuration fingerprint."""

    rows: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for pair_id, vec in self.rows.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (len(METRIC_NAMES),):
                raise DataError(f"cache row {pair_id}: expected {len(METRIC_NAMES)} values, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"cache row {pair_id}: non-finite metric value")
            clean[pair_id] = arr
        self.rows = clean

    @property
    def fingerprint(self) -> str | None:
        return self.metadata.get("fingerprint")

    def ids(self) -> list[str]:
        return list(self.rows)

    def matrix(self, ids: Sequence[str] | None = None) -> np.ndarray:
        ids = list(self.rows) if ids is None else list(ids)
        try:
            return np.stack([self.rows[i] for i in ids])
        except KeyError as exc:
            raise DataError(f"cache has no row for pair {exc.args[0]!r}") from None

    def column(self, metric: str, ids: Sequence[str] | None = None) -> np.ndarray:
        idx = METRIC_NAMES.index(metric)
        return self.matrix(ids)[:, idx]


def save_metric_cache(cache: MetricCache, path) -> None:
    """CSV with a ``#``-prefixed JSON metadata line; floats stored via repr."""
    lines = ["# " + json.dumps(cache.metadata, sort_keys=True)]
    lines.append(",".join(["id", *METRIC_NAMES]))
    for pair_id, vec in cache.rows.items():
        lines.append(",".join([pair_id, *(repr(float(v)) for v in vec)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_metric_cache(path, expected_fingerprint: str | None = None) -> MetricCache:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise DataError(f"{path}: missing metadata header line")
        try:
            metadata = json.loads(first[1:].strip())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad metadata header ({exc})") from exc
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header != ["id", *METRIC_NAMES]:
            raise DataError(f"{path}: bad cache header {header!r}")
        rows: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != 1 + len(METRIC_NAMES):
                raise DataError(f"{path}:{lineno}: expected {1 + len(METRIC_NAMES)} columns")
            pair_id = row[0]
            if pair_id in rows:
                raise DataError(f"{path}:{lineno}: duplicate pair id {pair_id!r}")
            try:
                rows[pair_id] = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad float ({exc})") from exc
    cache = MetricCache(rows=rows, metadata=metadata)
    if expected_fingerprint is not None and cache.fingerprint != expected_fingerprint:
        raise StaleCacheError(
            f"{path}: cache fingerprint {cache.fingerprint!r} does not match "
            f"expected {expected_fingerprint!r}; recompute the metrics"
        )
    return cache
