"""Synthetic enhancement phantoms and intensity utilities."""

import numpy as np
import pytest

from tenca import phantom
from tenca.errors import ConfigError, DataError


# ------------------------------------------------------------------- curves

def test_enhancement_curve_zero_at_injection():
    assert phantom.enhancement_curve(0.6, 0.01, 0.001, 0.0) == 0.0


def test_enhancement_curve_hand_values():
    # A (1 - e^{-alpha t}) e^{-beta t}, evaluated independently
    A, alpha, beta, t = 0.5, 0.02, 0.001, 100.0
    expect = A * (1.0 - np.exp(-alpha * t)) * np.exp(-beta * t)
    assert phantom.enhancement_curve(A, alpha, beta, t) == pytest.approx(
        expect, rel=1e-15)


def test_enhancement_curve_vectorized():
    t = np.array([0.0, 50.0, 500.0])
    out = phantom.enhancement_curve(1.0, 0.01, 0.001, t)
    assert out.shape == (3,)
    assert out[0] == 0.0
    assert np.all(np.diff(out) != 0)


def test_peak_time_matches_dense_scan():
    A, alpha, beta = 0.7, 0.01, 0.001
    t_star = phantom.peak_time(alpha, beta)
    # analytic argmax against a fine grid
    grid = np.arange(0.0, 2000.0, 0.01)
    dense = phantom.enhancement_curve(A, alpha, beta, grid)
    assert t_star == pytest.approx(grid[np.argmax(dense)], abs=0.02)
    # rises before the peak, decays after
    assert phantom.enhancement_curve(A, alpha, beta, t_star * 0.5) < \
        phantom.enhancement_curve(A, alpha, beta, t_star)
    assert phantom.enhancement_curve(A, alpha, beta, t_star * 2.0) < \
        phantom.enhancement_curve(A, alpha, beta, t_star)


def test_peak_time_default_parameters_reference():
    # alpha = 0.01, beta = 0.001: ln((a+b)/b)/a = 100 ln(11) ~ 239.79 s
    assert phantom.peak_time(0.01, 0.001) == pytest.approx(239.789527, abs=1e-5)


def test_peak_time_no_washout():
    assert phantom.peak_time(0.01, 0.0) is None


# -------------------------------------------------------------- generation

def test_spec_validation():
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(height=8, width=64)
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(uptake_range=(0.001, 0.002),
                            washout_range=(0.002, 0.003))
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(k_range=(0, 3))
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(k_range=(2, 6))
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(time_range_s=(0.0, 500.0))
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(amplitude_range=(0.5, 0.3))


def test_generate_deterministic():
    spec = phantom.PhantomSpec(seed=5, height=24, width=24)
    a, _ = phantom.generate_phantom(spec, 3)
    b, _ = phantom.generate_phantom(spec, 3)
    c, _ = phantom.generate_phantom(spec, 4)
    assert a == b
    assert a != c
    assert a.times_s == b.times_s


def test_generate_respects_spec_bounds():
    spec = phantom.PhantomSpec(seed=0, height=24, width=24)
    for case_id in range(30):
        case, truth = phantom.generate_phantom(spec, case_id)
        assert spec.k_range[0] <= len(case.frames) <= spec.k_range[1]
        times = np.array(case.times_s)
        assert times[0] >= spec.time_range_s[0]
        assert times[-1] <= spec.time_range_s[1]
        if len(times) > 1:
            assert np.diff(times).min() >= spec.min_separation_s
        for region in truth.regions:
            assert spec.amplitude_range[0] <= region.amplitude <= spec.amplitude_range[1]
            assert region.uptake > region.washout
        assert np.all(case.pre_contrast >= 0) and np.all(case.pre_contrast <= 1)
        for f in case.frames:
            assert np.all(f >= 0) and np.all(f <= 1)


def test_time_sampler_property_loop():
    spec = phantom.PhantomSpec(seed=0, height=16, width=16)
    gen = np.random.default_rng(0)
    for _ in range(1000):
        k = int(gen.integers(1, 6))
        times = phantom._sample_times(spec, gen, k)
        assert len(times) == k
        assert all(spec.time_range_s[0] <= t <= spec.time_range_s[1] for t in times)
        if k > 1:
            assert np.diff(times).min() >= spec.min_separation_s


def test_time_sampler_impossible_window():
    spec = phantom.PhantomSpec(seed=0, height=16, width=16,
                               time_range_s=(100.0, 130.0))
    with pytest.raises(ConfigError):
        phantom._sample_times(spec, np.random.default_rng(0), 5)


def test_noise_free_frames_match_dense_truth():
    spec = phantom.PhantomSpec(seed=7, height=24, width=24, noise_sigma=0.0)
    case, truth = phantom.generate_phantom(spec, 0, times_s=[100.0, 400.0])
    for i, t in enumerate(case.times_s):
        expect = truth.frame(t).astype(np.float32)
        assert np.array_equal(case.frames[i], expect)
    assert np.array_equal(case.pre_contrast,
                          truth.pre_contrast.astype(np.float32))


def test_dense_truth_frame_zero_is_pre_contrast():
    spec = phantom.PhantomSpec(seed=8, height=24, width=24)
    _, truth = phantom.generate_phantom(spec, 0, times_s=[100.0])
    assert np.array_equal(truth.frame(0.0), truth.pre_contrast)
    with pytest.raises(ConfigError):
        truth.frame(-1.0)


def test_generate_dataset_ids_and_count():
    spec = phantom.PhantomSpec(seed=1, height=16, width=16)
    cases, truths = phantom.generate_dataset(spec, 4, id_start=10)
    assert len(cases) == len(truths) == 4
    assert [case.case_id for case in cases] == [10, 11, 12, 13]


def test_enhancing_region_raises_frame_intensity():
    spec = phantom.PhantomSpec(seed=9, height=32, width=32, noise_sigma=0.0)
    case, truth = phantom.generate_phantom(spec, 0, times_s=[240.0])
    region = truth.regions[0]
    core_pixels = region.mask > 0.9
    assert core_pixels.sum() > 0
    gain = case.frames[0][core_pixels].mean() - case.pre_contrast[core_pixels].mean()
    assert gain > 0.05


def test_footprint_scale_controls_pre_contrast_visibility():
    # Same seed, three visibility levels: the pre-contrast image differs by
    # exactly (scale_hi - scale_lo) * sum(A * mask) wherever nothing clips.
    kw = dict(seed=11, height=32, width=32, noise_sigma=0.0)
    _, t_zero = phantom.generate_phantom(
        phantom.PhantomSpec(footprint_scale=0.0, **kw), 0, times_s=[100.0])
    _, t_default = phantom.generate_phantom(phantom.PhantomSpec(**kw), 0,
                                            times_s=[100.0])
    _, t_hi = phantom.generate_phantom(
        phantom.PhantomSpec(footprint_scale=0.2, **kw), 0, times_s=[100.0])
    stack = sum(r.amplitude * r.mask for r in t_zero.regions)
    for truth, scale in ((t_default, 0.05), (t_hi, 0.2)):
        unclipped = truth.pre_contrast < 1.0
        assert np.allclose((truth.pre_contrast - t_zero.pre_contrast)[unclipped],
                           (scale * stack)[unclipped], atol=1e-12)
    with pytest.raises(ConfigError):
        phantom.PhantomSpec(footprint_scale=-0.1, **kw)


# ------------------------------------------------------------ normalization

def test_intensity_window_hand_oracle():
    values = np.arange(10, dtype=np.float64)
    lo, hi = phantom.intensity_window(values.reshape(2, 5))
    # linear-interpolation percentiles: position q/100 * (n - 1) in 0..9
    assert lo == pytest.approx(np.interp(0.02 / 100 * 9, np.arange(10), values))
    assert hi == pytest.approx(np.interp(99.98 / 100 * 9, np.arange(10), values))
    assert 0.0 < lo < hi < 9.0


def test_intensity_window_degenerate():
    with pytest.raises(DataError):
        phantom.intensity_window(np.full((4, 4), 0.5))


def test_normalize_intensity_window_mapping():
    img = np.array([[0.0, 5.0], [10.0, 20.0]])
    out = phantom.normalize_intensity(img, window=(5.0, 15.0))
    assert np.allclose(out, [[0.0, 0.0], [0.5, 1.0]])


def test_normalize_intensity_exactly_one_source():
    img = np.zeros((4, 4))
    with pytest.raises(ConfigError):
        phantom.normalize_intensity(img)
    with pytest.raises(ConfigError):
        phantom.normalize_intensity(img, reference=img, window=(0.0, 1.0))


def test_normalize_case_images_shares_pre_window(monkeypatch):
    # the pre-contrast window must be applied to every post frame
    seen = []
    real = phantom.intensity_window

    def spy(reference):
        seen.append(np.asarray(reference).copy())
        return real(reference)

    monkeypatch.setattr(phantom, "intensity_window", spy)
    pre = np.linspace(0.0, 2.0, 64).reshape(8, 8)
    frames = [pre * 1.5, pre * 0.5]
    norm_pre, norm_frames = phantom.normalize_case_images(pre, frames)
    assert len(seen) == 1  # one window, computed from pre only
    assert np.array_equal(seen[0], pre)
    lo, hi = real(pre)
    assert np.allclose(norm_frames[0],
                       np.clip((frames[0] - lo) / (hi - lo), 0.0, 1.0))
    assert norm_pre.min() >= 0.0 and norm_pre.max() <= 1.0


# ------------------------------------------------------------------ patches

def test_crop_patch_centered_oracle():
    img = np.arange(256 * 256, dtype=np.float64).reshape(256, 256)
    patch = phantom.crop_patch(img, (128, 128), 168)
    assert patch.shape == (168, 168)
    # window [44, 212) in both axes
    assert np.array_equal(patch, img[44:212, 44:212])


def test_crop_patch_clamps_to_image():
    img = np.arange(100, dtype=np.float64).reshape(10, 10)
    assert np.array_equal(phantom.crop_patch(img, (0, 0), 4), img[0:4, 0:4])
    assert np.array_equal(phantom.crop_patch(img, (9, 9), 4), img[6:10, 6:10])


def test_crop_patch_too_large():
    with pytest.raises(DataError):
        phantom.crop_patch(np.zeros((8, 8)), (4, 4), 9)
