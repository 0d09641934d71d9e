"""Feature vectors for images plus the two feature-space comparisons.

The built-in extractor runs a small fixed filter bank (Sobel gradients and
real Gabor kernels at four orientations and two wavelengths) over the
normalized grayscale image, takes absolute responses, and average-pools
each response map on a 4x4 grid.  Alternatively, pre-computed vectors can
be supplied from a CSV and looked up by key.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from pairval.dataio import DataError, Image, fingerprint_dict, to_grayscale

GABOR_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
GABOR_WAVELENGTHS = (4.0, 8.0)


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors; 0 if either has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cpl(u, v) -> float:
    """Euclidean distance between two feature vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def _gabor_kernel(wavelength: float, theta_deg: float, sigma_ratio: float = 0.5) -> np.ndarray:
    """Real (cosine-phase) Gabor kernel with isotropic envelope."""
    sigma = sigma_ratio * wavelength
    half = int(math.ceil(3.0 * sigma))
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    theta = math.radians(theta_deg)
    xr = x * math.cos(theta) + y * math.sin(theta)
    yr = -x * math.sin(theta) + y * math.cos(theta)
    return np.exp(-(xr ** 2 + yr ** 2) / (2.0 * sigma ** 2)) * np.cos(2.0 * math.pi * xr / wavelength)


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def _convolve_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size convolution with reflect boundary handling."""
    hh, hw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(img, ((hh, hh), (hw, hw)), mode="reflect")
    return fftconvolve(padded, kernel, mode="valid")


def _pool_grid(resp: np.ndarray, grid: int) -> np.ndarray:
    """Mean of ``resp`` over a ``grid x grid`` partition, row-major."""
    out = np.empty(grid * grid)
    k = 0
    for rows in np.array_split(resp, grid, axis=0):
        for cell in np.array_split(rows, grid, axis=1):
            out[k] = cell.mean()
            k += 1
    return out


@dataclass(frozen=True)
class FilterBankExtractor:
    """Sobel + Gabor filter bank with grid average pooling.

    The output vector is 10 filters x ``pool_grid**2`` cells; slots 0 and 1
    hold the pooled Sobel-x and Sobel-y magnitudes.
    """

    pool_grid: int = 4

    @property
    def dim(self) -> int:
        return 10 * self.pool_grid ** 2

    def kernels(self) -> list[np.ndarray]:
        ks = [_SOBEL_X, _SOBEL_Y]
        for wavelength in GABOR_WAVELENGTHS:
            for theta in GABOR_ORIENTATIONS:
                ks.append(_gabor_kernel(wavelength, theta))
        return ks

    def extract(self, img: Image, key: str | None = None) -> np.ndarray:
        f = to_grayscale(img).data.astype(np.float64) / 255.0
        if f.shape[0] < self.pool_grid or f.shape[1] < self.pool_grid:
            raise ValueError(f"image {f.shape} smaller than {self.pool_grid}x{self.pool_grid} pooling grid")
        parts = [_pool_grid(np.abs(_convolve_reflect(f, k)), self.pool_grid) for k in self.kernels()]
        return np.concatenate(parts)

    def fingerprint(self) -> str:
        return fingerprint_dict({
            "kind": "filter_bank",
            "pool_grid": self.pool_grid,
            "orientations": list(GABOR_ORIENTATIONS),
            "wavelengths": list(GABOR_WAVELENGTHS),
        })


def load_external_vectors(path) -> dict[str, np.ndarray]:
    """Parse a ``id,v0..v{n-1}`` CSV of pre-computed feature vectors."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or len(header) < 2:
            raise DataError(f"{path}: expected header id,v0,..,v{{n-1}}")
        dim = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected {dim + 1} columns, got {len(row)}")
            key = row[0]
            if key in vectors:
                raise DataError(f"{path}:{lineno}: duplicate id {key!r}")
            try:
                vec = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad float ({exc})") from exc
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite vector component")
            vectors[key] = vec
    return vectors


@dataclass(frozen=True)
class ExternalVectorExtractor:
    """Looks vectors up by key (``<pair_id>/original`` or ``<pair_id>/transformed``)."""

    vectors: dict
    source: str = ""

    def extract(self, img: Image | None = None, key: str | None = None) -> np.ndarray:
        if key is None:
            raise ValueError("external extractor needs a lookup key")
        try:
            return self.vectors[key]
        except KeyError:
            raise DataError(f"no external feature vector for {key!r}") from None

    def fingerprint(self) -> str:
        return fingerprint_dict({
            "kind": "external",
            "source": self.source,
            "n": len(self.vectors),
            "keys_digest": fingerprint_dict({"keys": sorted(self.vectors)}),
        })
