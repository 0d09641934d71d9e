"""Computes the full 13-metric vector for every pair in a manifest.

Pixel metrics run on grayscale conversions; feature metrics use the
configured extractor; the VAE behind ``vae_re`` is trained once on all
original images of the manifest.  The resulting cache carries a
fingerprint over every parameter and the image bytes, so reloading under
a changed configuration fails instead of serving stale values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from pairval import metrics
from pairval.dataio import (
    DatasetManifest,
    MetricCache,
    METRIC_NAMES,
    fingerprint_dict,
    to_grayscale,
)
from pairval.features import (
    ExternalVectorExtractor,
    FilterBankExtractor,
    SegmenterProxy,
    VaeConfig,
    cosine_similarity,
    cpl,
    image_to_vae_input,
    sss,
    vae_re,
)
from pairval.features.vae import train_matrix


@dataclass
class MetricPipeline:
    metric_params: metrics.PixelMetricParams = metrics.DEFAULT_PARAMS
    extractor: object = field(default_factory=FilterBankExtractor)
    segmenter: SegmenterProxy = field(default_factory=SegmenterProxy)
    vae_config: VaeConfig = field(default_factory=VaeConfig)

    @classmethod
    def with_seed(cls, seed: int, metric_params: metrics.PixelMetricParams = metrics.DEFAULT_PARAMS,
                  extractor: object | None = None) -> "MetricPipeline":
        return cls(
            metric_params=metric_params,
            extractor=extractor or FilterBankExtractor(),
            segmenter=SegmenterProxy(seed=seed),
            vae_config=VaeConfig(seed=seed),
        )

    def _images_digest(self, manifest: DatasetManifest) -> str:
        h = hashlib.sha256()
        for entry in manifest.entries:
            h.update(entry.id.encode("utf-8"))
            for p in (entry.original_path, entry.transformed_path):
                h.update(p.read_bytes())
        return h.hexdigest()

    def fingerprint(self, manifest: DatasetManifest) -> str:
        return fingerprint_dict({
            "metric_params": self.metric_params.to_dict(),
            "extractor": self.extractor.fingerprint(),
            "segmenter": self.segmenter.fingerprint(),
            "vae_config": self.vae_config.to_dict(),
            "images": self._images_digest(manifest),
        })

    def compute(self, manifest: DatasetManifest, progress=None) -> MetricCache:
        """Two passes: train the VAE on all originals, then score each pair."""
        side = self.vae_config.input_side
        originals = np.stack([
            image_to_vae_input(manifest.load_pair(e).original, side) for e in manifest.entries
        ])
        vae_model = train_matrix(originals, self.vae_config)

        params = self.metric_params
        rows: dict[str, np.ndarray] = {}
        for i, entry in enumerate(manifest.entries):
            pair = manifest.load_pair(entry)
            ga = to_grayscale(pair.original).data
            gb = to_grayscale(pair.transformed).data
            u = self.extractor.extract(pair.original, key=f"{pair.id}/original")
            v = self.extractor.extract(pair.transformed, key=f"{pair.id}/transformed")
            values = {
                "psnr": metrics.psnr(ga, gb, params),
                "ssim": metrics.ssim(ga, gb, params),
                "mse": metrics.mse(ga, gb),
                "tsi": metrics.tsi(ga, gb, params),
                "ws": metrics.wasserstein(ga, gb, params),
                "cs": cosine_similarity(u, v),
                "kl": metrics.kl_divergence(ga, gb, params),
                "hist_int": metrics.hist_intersection(ga, gb, params),
                "hist_cor": metrics.hist_correlation(ga, gb, params),
                "cpl": cpl(u, v),
                "sss": sss(pair.original, pair.transformed, self.segmenter),
                "vae_re": vae_re(vae_model, pair.transformed),
                "vif": metrics.vif(ga, gb, params),
            }
            rows[pair.id] = np.array([values[name] for name in METRIC_NAMES])
            if progress:
                progress(i + 1, len(manifest.entries))
        return MetricCache(rows=rows, metadata={
            "format": "pairval-metric-cache",
            "version": 1,
            "fingerprint": self.fingerprint(manifest),
            "vae": {"fingerprint": vae_model.fingerprint(), "final_loss": vae_model.loss_history[-1]},
        })


def make_extractor(kind: str = "builtin", external_path=None):
    if kind == "builtin":
        return FilterBankExtractor()
    if kind == "external":
        from pairval.features.extractor import load_external_vectors

        if external_path is None:
            raise ValueError("external extractor needs a vector file path")
        return ExternalVectorExtractor(vectors=load_external_vectors(external_path),
                                       source=str(external_path))
    raise ValueError(f"unknown extractor kind {kind!r}")
