"""pairval: human-in-the-loop validation of transformed image test inputs.

The package classifies (original, transformed) image pairs as valid or
invalid test inputs for vision models.  It combines a bank of thirteen
image-comparison metrics with a confidence-gated active-learning loop so
that a human only labels the pairs the classifier is unsure about.
"""

__version__ = "0.1.0"

from pairval.dataio import (  # noqa: F401
    INVALID,
    VALID,
    DataError,
    DatasetManifest,
    Image,
    ImagePair,
    MetricCache,
)
