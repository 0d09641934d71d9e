"""Pixel-level image-comparison metrics.

All functions take two grayscale images (``pairval.dataio.Image`` or plain
2-D uint8 arrays) of equal shape and return a scalar ``float``.  They are
pure and deterministic, and every metric is finite for any pair of valid
8-bit inputs, including constant images.

Identity values for ``m(a, a)``: 0 for MSE, WS, and KL; 1 for SSIM, TSI,
Hist_int, Hist_cor, and VIF; ``psnr_cap`` for PSNR.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import gaussian_filter

from pairval.dataio import DimensionMismatchError, Image

PEAK = 255.0


@dataclass(frozen=True)
class PixelMetricParams:
    """Knobs shared by the pixel metrics; defaults match 8-bit images."""

    hist_bins: int = 256
    kl_epsilon: float = 1e-10
    ssim_window: int = 8
    ssim_c1: float = (0.01 * PEAK) ** 2
    ssim_c2: float = (0.03 * PEAK) ** 2
    glcm_levels: int = 8
    glcm_offsets: tuple = ((0, 1), (1, 0))
    vif_scales: int = 4
    vif_noise_var: float = 2.0
    psnr_cap: float = 100.0

    def __post_init__(self):
        if not (1 <= self.hist_bins <= 256):
            raise ValueError(f"hist_bins must be in [1, 256], got {self.hist_bins}")
        if self.kl_epsilon <= 0:
            raise ValueError("kl_epsilon must be positive")
        if self.ssim_window < 1:
            raise ValueError("ssim_window must be >= 1")
        if not (2 <= self.glcm_levels <= 256):
            raise ValueError(f"glcm_levels must be in [2, 256], got {self.glcm_levels}")
        if self.vif_scales < 1:
            raise ValueError("vif_scales must be >= 1")
        if self.vif_noise_var <= 0:
            raise ValueError("vif_noise_var must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["glcm_offsets"] = [list(o) for o in self.glcm_offsets]
        return d


DEFAULT_PARAMS = PixelMetricParams()


def _as_gray(img) -> np.ndarray:
    arr = img.data if isinstance(img, Image) else np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    return arr


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    fa, fb = _as_gray(a), _as_gray(b)
    if fa.shape != fb.shape:
        raise DimensionMismatchError(f"image shapes differ: {fa.shape} vs {fb.shape}")
    return fa.astype(np.float64), fb.astype(np.float64)


# ---------------------------------------------------------------------------
# error metrics

def mse(a, b) -> float:
    """Mean squared pixel error."""
    fa, fb = _check_pair(a, b)
    return float(np.mean((fa - fb) ** 2))


def psnr(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Peak signal-to-noise ratio in dB, capped at ``psnr_cap`` when MSE is 0."""
    err = mse(a, b)
    if err == 0.0:
        return params.psnr_cap
    return min(params.psnr_cap, float(10.0 * np.log10(PEAK ** 2 / err)))


# ---------------------------------------------------------------------------
# SSIM

def _window_sums(f: np.ndarray, w: int) -> np.ndarray:
    """Sums over every stride-1 ``w x w`` window, via an integral image."""
    s = np.cumsum(np.cumsum(f, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Mean structural similarity over uniform stride-1 windows.

    Window statistics use the biased (divide-by-N) variance.  Images smaller
    than the window raise ``ValueError``.
    """
    fa, fb = _check_pair(a, b)
    w = params.ssim_window
    if fa.shape[0] < w or fa.shape[1] < w:
        raise ValueError(f"image {fa.shape} smaller than SSIM window {w}x{w}")
    n = float(w * w)
    mu_a = _window_sums(fa, w) / n
    mu_b = _window_sums(fb, w) / n
    var_a = _window_sums(fa * fa, w) / n - mu_a ** 2
    var_b = _window_sums(fb * fb, w) / n - mu_b ** 2
    cov = _window_sums(fa * fb, w) / n - mu_a * mu_b
    c1, c2 = params.ssim_c1, params.ssim_c2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )
    return float(np.mean(score))


# ---------------------------------------------------------------------------
# texture similarity (GLCM features)

def quantize_levels(img, levels: int) -> np.ndarray:
    """Map 8-bit intensities onto ``levels`` equal-width bins."""
    arr = _as_gray(img).astype(np.int64)
    return (arr * levels) // 256


def glcm_matrix(img, params: PixelMetricParams = DEFAULT_PARAMS) -> np.ndarray:
    """Symmetric, normalized gray-level co-occurrence matrix.

    Counts level pairs for each offset in ``glcm_offsets`` in both
    directions, sums them into one matrix, and normalizes it to sum to 1.
    """
    lev = quantize_levels(img, params.glcm_levels)
    L = params.glcm_levels
    counts = np.zeros((L, L), dtype=np.float64)
    for dr, dc in params.glcm_offsets:
        h, w = lev.shape
        if dr >= h or dc >= w:
            continue
        src = lev[: h - dr, : w - dc] if dc >= 0 else lev[: h - dr, -dc:]
        dst = lev[dr:, dc:] if dc >= 0 else lev[dr:, : w + dc]
        idx = src.ravel() * L + dst.ravel()
        pair_counts = np.bincount(idx, minlength=L * L).reshape(L, L).astype(np.float64)
        counts += pair_counts + pair_counts.T
    total = counts.sum()
    if total > 0:
        counts /= total
    return counts


def glcm_features(img, params: PixelMetricParams = DEFAULT_PARAMS) -> np.ndarray:
    """(contrast, homogeneity, energy, correlation) of the GLCM."""
    p = glcm_matrix(img, params)
    L = p.shape[0]
    i, j = np.indices((L, L))
    d = (i - j).astype(np.float64)
    contrast = float(np.sum(p * d ** 2))
    homogeneity = float(np.sum(p / (1.0 + d ** 2)))
    energy = float(np.sqrt(np.sum(p ** 2)))
    mu_i = float(np.sum(i * p))
    mu_j = float(np.sum(j * p))
    var_i = float(np.sum(p * (i - mu_i) ** 2))
    var_j = float(np.sum(p * (j - mu_j) ** 2))
    if var_i <= 0 or var_j <= 0:
        correlation = 1.0  # degenerate single-level image: perfectly correlated
    else:
        correlation = float(np.sum(p * (i - mu_i) * (j - mu_j)) / np.sqrt(var_i * var_j))
    return np.array([contrast, homogeneity, energy, correlation])


def tsi(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Texture similarity: ``1 / (1 + ||f(a) - f(b)||_2)`` on GLCM features."""
    fa, fb = _check_pair(a, b)
    va = glcm_features(fa.astype(np.uint8), params)
    vb = glcm_features(fb.astype(np.uint8), params)
    return float(1.0 / (1.0 + np.linalg.norm(va - vb)))


# ---------------------------------------------------------------------------
# histogram metrics

def intensity_histogram(img, bins: int = 256) -> np.ndarray:
    """Normalized intensity histogram with ``bins`` equal-width bins."""
    arr = _as_gray(img)
    idx = (arr.astype(np.int64) * bins) // 256
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    return counts / counts.sum()


def wasserstein_from_hist(p, q, bin_width: float = 1.0) -> float:
    """1-D earth mover's distance between two normalized histograms."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must have equal length")
    return float(np.sum(np.abs(np.cumsum(p) - np.cumsum(q))) * bin_width)


def wasserstein(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Earth mover's distance between intensity histograms (intensity units)."""
    fa, fb = _check_pair(a, b)
    bins = params.hist_bins
    ha = intensity_histogram(fa.astype(np.uint8), bins)
    hb = intensity_histogram(fb.astype(np.uint8), bins)
    return wasserstein_from_hist(ha, hb, bin_width=256.0 / bins)


def kl_from_hist(p, q, epsilon: float = 1e-10) -> float:
    """KL(p || q) with both histograms floored at ``epsilon`` and renormalized."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must have equal length")
    p = np.maximum(p, epsilon)
    q = np.maximum(q, epsilon)
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))


def kl_divergence(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """KL divergence of a's intensity histogram from b's."""
    fa, fb = _check_pair(a, b)
    bins = params.hist_bins
    ha = intensity_histogram(fa.astype(np.uint8), bins)
    hb = intensity_histogram(fb.astype(np.uint8), bins)
    return kl_from_hist(ha, hb, params.kl_epsilon)


def hist_int_from_hist(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must have equal length")
    return float(np.sum(np.minimum(p, q)))


def hist_intersection(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Sum of bin-wise minima of the two normalized histograms, in [0, 1]."""
    fa, fb = _check_pair(a, b)
    bins = params.hist_bins
    return hist_int_from_hist(
        intensity_histogram(fa.astype(np.uint8), bins),
        intensity_histogram(fb.astype(np.uint8), bins),
    )


def hist_cor_from_hist(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must have equal length")
    dp = p - p.mean()
    dq = q - q.mean()
    denom = np.sqrt(np.sum(dp ** 2) * np.sum(dq ** 2))
    if denom == 0:
        return 0.0  # a histogram uniform across bins has no correlation signal
    return float(np.clip(np.sum(dp * dq) / denom, -1.0, 1.0))


def hist_correlation(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Pearson correlation across the histogram bins, in [-1, 1]."""
    fa, fb = _check_pair(a, b)
    bins = params.hist_bins
    return hist_cor_from_hist(
        intensity_histogram(fa.astype(np.uint8), bins),
        intensity_histogram(fb.astype(np.uint8), bins),
    )


# ---------------------------------------------------------------------------
# visual information fidelity (pixel domain)

def vif(a, b, params: PixelMetricParams = DEFAULT_PARAMS) -> float:
    """Pixel-domain visual information fidelity of ``b`` given reference ``a``.

    Gaussian-weighted local statistics over ``vif_scales`` dyadic scales; the
    image is smoothed and 2x-decimated between scales.  Degenerate references
    with no spatial information at any scale score 1 when the images are
    identical and 0 otherwise.
    """
    ref, dist = _check_pair(a, b)
    scales = params.vif_scales
    while scales > 1 and min(ref.shape) < 2 ** scales:
        scales -= 1
        warnings.warn(
            f"image {ref.shape} too small for {scales + 1} VIF scales; using {scales}",
            stacklevel=2,
        )
    eps = 1e-10
    sigma_n2 = params.vif_noise_var
    num = 0.0
    den = 0.0
    for scale in range(1, scales + 1):
        kernel_size = 2 ** (scales - scale + 1) + 1
        sd = kernel_size / 5.0
        if scale > 1:
            ref = gaussian_filter(ref, sd)[::2, ::2]
            dist = gaussian_filter(dist, sd)[::2, ::2]
        mu1 = gaussian_filter(ref, sd)
        mu2 = gaussian_filter(dist, sd)
        sigma1_sq = gaussian_filter(ref * ref, sd) - mu1 * mu1
        sigma2_sq = gaussian_filter(dist * dist, sd) - mu2 * mu2
        sigma12 = gaussian_filter(ref * dist, sd) - mu1 * mu2
        sigma1_sq = np.maximum(sigma1_sq, 0.0)
        sigma2_sq = np.maximum(sigma2_sq, 0.0)

        g = sigma12 / (sigma1_sq + eps)
        sv_sq = sigma2_sq - g * sigma12
        g = np.where(sigma1_sq < eps, 0.0, g)
        sv_sq = np.where(sigma1_sq < eps, sigma2_sq, sv_sq)
        sigma1_sq = np.where(sigma1_sq < eps, 0.0, sigma1_sq)
        sv_sq = np.where(sigma2_sq < eps, 0.0, sv_sq)
        g = np.where(sigma2_sq < eps, 0.0, g)
        sv_sq = np.where(g < 0, sigma2_sq, sv_sq)
        g = np.maximum(g, 0.0)
        sv_sq = np.maximum(sv_sq, eps)

        num += float(np.sum(np.log2(1.0 + g * g * sigma1_sq / (sv_sq + sigma_n2))))
        den += float(np.sum(np.log2(1.0 + sigma1_sq / sigma_n2)))
    if den <= eps:
        fa, fb = _check_pair(a, b)
        return 1.0 if np.array_equal(fa, fb) else 0.0
    return float(num / den)
