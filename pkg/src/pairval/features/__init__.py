"""Learned and engineered feature representations of image pairs.

Three metric families live here: feature-space similarity (cosine and
Euclidean distance over filter-bank or externally supplied vectors),
segmentation similarity, and the VAE reconstruction error.
"""

from pairval.features.extractor import (  # noqa: F401
    ExternalVectorExtractor,
    FilterBankExtractor,
    cosine_similarity,
    cpl,
    load_external_vectors,
)
from pairval.features.segment import SegmenterProxy, sss  # noqa: F401
from pairval.features.vae import (  # noqa: F401
    VaeConfig,
    VaeModel,
    VaeTrainingError,
    image_to_vae_input,
    train_vae,
    vae_re,
)
