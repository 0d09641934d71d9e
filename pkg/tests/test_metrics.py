import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pairval.dataio import DimensionMismatchError, Image
from pairval.metrics import (
    DEFAULT_PARAMS,
    PixelMetricParams,
    glcm_features,
    glcm_matrix,
    hist_cor_from_hist,
    hist_correlation,
    hist_int_from_hist,
    hist_intersection,
    intensity_histogram,
    kl_divergence,
    kl_from_hist,
    mse,
    psnr,
    quantize_levels,
    ssim,
    tsi,
    vif,
    wasserstein,
    wasserstein_from_hist,
)

gray_images = hnp.arrays(
    dtype=np.uint8,
    shape=st.tuples(st.integers(8, 14), st.integers(8, 14)),
    elements=st.integers(0, 255),
)


def rand_img(seed: int, side: int = 16) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, (side, side), dtype=np.uint8)


# ---------------------------------------------------------------------------
# MSE / PSNR

class TestMsePsnr:
    def test_identity(self):
        a = rand_img(0)
        assert mse(a, a) == 0.0
        assert psnr(a, a) == DEFAULT_PARAMS.psnr_cap == 100.0

    def test_hand_values(self):
        a = np.array([[0, 0]], dtype=np.uint8)
        b = np.array([[3, 4]], dtype=np.uint8)
        assert mse(a, b) == 12.5
        a2 = np.zeros((2, 2), dtype=np.uint8)
        b2 = np.full((2, 2), 255, dtype=np.uint8)
        assert mse(a2, b2) == 65025.0
        assert psnr(a2, b2) == 0.0

    def test_psnr_closed_form(self):
        a = np.array([[0, 0]], dtype=np.uint8)
        b = np.array([[3, 4]], dtype=np.uint8)
        expected = 10.0 * math.log10(255.0 ** 2 / 12.5)
        assert psnr(a, b) == pytest.approx(expected, abs=1e-9)
        assert psnr(a, b) == pytest.approx(37.162, abs=1e-3)

    def test_accepts_image_objects(self):
        a = Image.from_array(rand_img(1))
        assert mse(a, a.data) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mse(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 5), dtype=np.uint8))

    @given(gray_images.flatmap(
        lambda a: st.tuples(st.just(a), hnp.arrays(np.uint8, a.shape, elements=st.integers(0, 255)))
    ))
    @settings(max_examples=25, deadline=None)
    def test_symmetry(self, pair):
        a, b = pair
        assert mse(a, b) == mse(b, a)
        assert psnr(a, b) == psnr(b, a)


# ---------------------------------------------------------------------------
# SSIM

def ssim_oracle(a: np.ndarray, b: np.ndarray, w: int, c1: float, c2: float) -> float:
    """Direct per-window evaluation of the SSIM formula (independent path)."""
    fa, fb = a.astype(np.float64), b.astype(np.float64)
    scores = []
    for r in range(fa.shape[0] - w + 1):
        for c in range(fa.shape[1] - w + 1):
            x = fa[r:r + w, c:c + w].ravel()
            y = fb[r:r + w, c:c + w].ravel()
            mx, my = x.mean(), y.mean()
            vx = ((x - mx) ** 2).mean()
            vy = ((y - my) ** 2).mean()
            cov = ((x - mx) * (y - my)).mean()
            scores.append(((2 * mx * my + c1) * (2 * cov + c2))
                          / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


class TestSsim:
    def test_identity(self):
        a = rand_img(2, 16)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)

    def test_constant_pair_closed_form(self):
        a = np.full((8, 8), 100, dtype=np.uint8)
        b = np.full((8, 8), 150, dtype=np.uint8)
        c1 = DEFAULT_PARAMS.ssim_c1
        # variances and covariance vanish, so only the luminance term remains
        expected = (2 * 100 * 150 + c1) / (100 ** 2 + 150 ** 2 + c1)
        got = ssim(a, b)
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.9230923105307928, abs=1e-12)

    def test_checkerboard_vs_inverse_single_window(self):
        idx = np.indices((8, 8)).sum(axis=0) % 2
        board = (idx * 255).astype(np.uint8)
        inverse = ((1 - idx) * 255).astype(np.uint8)
        expected = ssim_oracle(board, inverse, 8, DEFAULT_PARAMS.ssim_c1, DEFAULT_PARAMS.ssim_c2)
        assert ssim(board, inverse) == pytest.approx(expected, abs=1e-9)
        assert ssim(board, inverse) < 0  # anti-correlated structure

    def test_matches_oracle_on_random_images(self):
        rng = np.random.default_rng(5)
        for trial in range(4):
            a = rng.integers(0, 256, (13, 17), dtype=np.uint8)
            b = np.clip(a.astype(int) + rng.integers(-40, 40, a.shape), 0, 255).astype(np.uint8)
            expected = ssim_oracle(a, b, 8, DEFAULT_PARAMS.ssim_c1, DEFAULT_PARAMS.ssim_c2)
            assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_image_smaller_than_window(self):
        small = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(ValueError, match="window"):
            ssim(small, small)

    @given(gray_images)
    @settings(max_examples=20, deadline=None)
    def test_bounded(self, a):
        v = ssim(a, a)
        assert v == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# GLCM / TSI

def glcm_oracle(img: np.ndarray, levels: int, offsets) -> np.ndarray:
    """Brute-force symmetric co-occurrence counting, pixel by pixel."""
    q = (img.astype(np.int64) * levels) // 256
    counts = np.zeros((levels, levels))
    h, w = q.shape
    for dr, dc in offsets:
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < h and 0 <= c2 < w:
                    counts[q[r, c], q[r2, c2]] += 1
                    counts[q[r2, c2], q[r, c]] += 1
    total = counts.sum()
    return counts / total if total > 0 else counts


class TestGlcm:
    def test_quantize_bounds(self):
        img = np.array([[0, 255, 128, 32]], dtype=np.uint8)
        q = quantize_levels(img, 8)
        assert q.tolist() == [[0, 7, 4, 1]]

    def test_matrix_matches_bruteforce_4x4(self):
        img = np.array([
            [10, 10, 200, 200],
            [10, 60, 200, 250],
            [60, 60, 120, 120],
            [60, 90, 120, 180],
        ], dtype=np.uint8)
        got = glcm_matrix(img)
        expected = glcm_oracle(img, DEFAULT_PARAMS.glcm_levels, DEFAULT_PARAMS.glcm_offsets)
        assert np.allclose(got, expected, atol=1e-12)

    def test_matrix_matches_bruteforce_random(self):
        params = PixelMetricParams(glcm_levels=4, glcm_offsets=((0, 1), (1, 0), (1, 1)))
        rng = np.random.default_rng(9)
        for _ in range(3):
            img = rng.integers(0, 256, (6, 7), dtype=np.uint8)
            got = glcm_matrix(img, params)
            expected = glcm_oracle(img, 4, params.glcm_offsets)
            assert np.allclose(got, expected, atol=1e-12)

    def test_matrix_symmetric_and_normalized(self):
        img = rand_img(11, 12)
        p = glcm_matrix(img)
        assert np.allclose(p, p.T)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_constant_image_features(self):
        img = np.full((8, 8), 77, dtype=np.uint8)
        contrast, homogeneity, energy, correlation = glcm_features(img)
        assert contrast == 0.0
        assert energy == pytest.approx(1.0, abs=1e-12)
        assert homogeneity == pytest.approx(1.0, abs=1e-12)
        assert correlation == 1.0  # degenerate single-level convention

    def test_tsi_identity_and_range(self):
        a = rand_img(4, 16)
        assert tsi(a, a) == pytest.approx(1.0, abs=1e-12)
        b = rand_img(5, 16)
        v = tsi(a, b)
        assert 0.0 < v <= 1.0


# ---------------------------------------------------------------------------
# histogram metrics

def transport_lp_oracle(p: np.ndarray, q: np.ndarray, bin_width: float) -> float:
    """1-D optimal transport cost via the LP formulation."""
    from scipy.optimize import linprog

    n = len(p)
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).ravel() * bin_width
    a_eq = []
    for i in range(n):  # row sums = p
        row = np.zeros((n, n))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(n):  # col sums = q
        col = np.zeros((n, n))
        col[:, j] = 1
        a_eq.append(col.ravel())
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.concatenate([p, q]),
                  bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


class TestHistograms:
    def test_histogram_sums_to_one_and_bin_edges(self):
        img = np.array([[0, 255]], dtype=np.uint8)
        h = intensity_histogram(img, 256)
        assert h.sum() == pytest.approx(1.0)
        assert h[0] == 0.5 and h[255] == 0.5
        h8 = intensity_histogram(img, 8)
        assert h8[0] == 0.5 and h8[7] == 0.5

    def test_wasserstein_identity_and_extremes(self):
        a = rand_img(6)
        assert wasserstein(a, a) == 0.0
        zero = np.zeros((4, 4), dtype=np.uint8)
        full = np.full((4, 4), 255, dtype=np.uint8)
        assert wasserstein(zero, full) == pytest.approx(255.0, abs=1e-9)

    def test_wasserstein_shift_property(self):
        rng = np.random.default_rng(8)
        a = rng.integers(40, 200, (16, 16), dtype=np.uint8)
        b = (a + 17).astype(np.uint8)  # no clipping by construction
        assert wasserstein(a, b) == pytest.approx(17.0, abs=1e-9)

    def test_wasserstein_matches_lp_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            p = rng.random(8)
            q = rng.random(8)
            p /= p.sum()
            q /= q.sum()
            got = wasserstein_from_hist(p, q, bin_width=1.0)
            expected = transport_lp_oracle(p, q, 1.0)
            assert got == pytest.approx(expected, abs=1e-9)

    @given(gray_images.flatmap(
        lambda a: st.tuples(st.just(a), hnp.arrays(np.uint8, a.shape, elements=st.integers(0, 255)))
    ))
    @settings(max_examples=25, deadline=None)
    def test_wasserstein_symmetric_nonnegative(self, pair):
        a, b = pair
        d = wasserstein(a, b)
        assert d >= 0.0
        assert d == pytest.approx(wasserstein(b, a), abs=1e-12)

    def test_kl_identity_and_closed_form(self):
        a = rand_img(7)
        assert kl_divergence(a, a) == pytest.approx(0.0, abs=1e-9)
        expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        got = kl_from_hist(np.array([0.5, 0.5]), np.array([0.25, 0.75]))
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.14384, abs=1e-5)

    def test_kl_empty_bin_is_finite(self):
        p = np.array([0.5, 0.5, 0.0])
        q = np.array([1.0, 0.0, 0.0])
        v = kl_from_hist(p, q)
        assert math.isfinite(v) and v > 0

    def test_kl_asymmetric(self):
        p = np.array([0.9, 0.1])
        q = np.array([0.5, 0.5])
        assert kl_from_hist(p, q) != pytest.approx(kl_from_hist(q, p), abs=1e-6)

    def test_hist_intersection(self):
        a = rand_img(3)
        assert hist_intersection(a, a) == pytest.approx(1.0, abs=1e-12)
        assert hist_int_from_hist(np.array([0.5, 0.5, 0.0]),
                                  np.array([0.0, 0.5, 0.5])) == pytest.approx(0.5)
        assert hist_int_from_hist(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_hist_correlation(self):
        a = rand_img(14)
        assert hist_correlation(a, a) == pytest.approx(1.0, abs=1e-9)
        assert hist_cor_from_hist(np.array([1, 2, 3, 4.0]),
                                  np.array([4, 3, 2, 1.0])) == pytest.approx(-1.0, abs=1e-12)
        # degenerate flat histogram has zero variance: 0 by convention
        assert hist_cor_from_hist(np.full(4, 0.25), np.array([0.1, 0.2, 0.3, 0.4])) == 0.0


# ---------------------------------------------------------------------------
# VIF

def structured(seed: int, side: int = 64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r, c = np.indices((side, side))
    img = 120 + 40 * np.sin(2 * np.pi * r / 16) * np.cos(2 * np.pi * c / 24)
    img += rng.normal(0, 3, (side, side))
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


class TestVif:
    def test_identity(self):
        a = structured(0)
        assert vif(a, a) == pytest.approx(1.0, abs=1e-6)

    def test_pure_noise_scores_low(self):
        a = structured(1)
        noise = np.random.default_rng(2).integers(0, 256, a.shape, dtype=np.uint8)
        assert vif(a, noise) < 0.1

    def test_monotone_in_noise(self):
        a = structured(3)
        rng = np.random.default_rng(4)
        small = np.clip(a + rng.normal(0, 5, a.shape), 0, 255).astype(np.uint8)
        large = np.clip(a + rng.normal(0, 60, a.shape), 0, 255).astype(np.uint8)
        assert vif(a, small) > vif(a, large)

    def test_additive_shift_keeps_information(self):
        # a pure intensity shift leaves local structure intact
        a = np.clip(structured(5), 60, 160).astype(np.uint8)
        shifted = (a + 60).astype(np.uint8)
        assert vif(a, shifted) > 0.99

    def test_small_image_reduces_scales_with_warning(self):
        a = rand_img(6, 8)
        with pytest.warns(UserWarning, match="VIF scales"):
            v = vif(a, a)
        assert v == pytest.approx(1.0, abs=1e-6)

    def test_constant_reference_convention(self):
        flat = np.full((32, 32), 90, dtype=np.uint8)
        assert vif(flat, flat) == 1.0
        other = np.full((32, 32), 200, dtype=np.uint8)
        assert vif(flat, other) == 0.0


# ---------------------------------------------------------------------------
# parameter validation

class TestParams:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PixelMetricParams(hist_bins=0)
        with pytest.raises(ValueError):
            PixelMetricParams(glcm_levels=1)
        with pytest.raises(ValueError):
            PixelMetricParams(vif_scales=0)

    def test_to_dict_json_friendly(self):
        import json

        d = DEFAULT_PARAMS.to_dict()
        json.dumps(d)
        assert d["glcm_offsets"] == [[0, 1], [1, 0]]
