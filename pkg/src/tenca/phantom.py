"""Synthetic contrast-enhancement phantoms with analytically known dynamics.

Each phantom is a smooth background with a few elliptical regions. Every
region enhances over time along a closed-form uptake-times-washout curve,
so the true image is known at *any* continuous time, not just at the
sampled acquisition times — which is what makes held-out-time evaluation
possible. Also home to the intensity normalization and patch cropping used
when preparing real-valued inputs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .data import MAX_FRAMES, MAX_TIME_S, TrainingCase
from .errors import ConfigError, DataError


@dataclass
class PhantomSpec:
    """Generation recipe; one spec plus a seed determines a dataset exactly."""

    height: int = 64
    width: int = 64
    background_level: float = 0.15
    n_regions_range: tuple = (1, 3)
    amplitude_range: tuple = (0.3, 0.8)        # A
    uptake_range: tuple = (0.005, 0.02)        # alpha, 1/s
    washout_range: tuple = (0.0005, 0.002)     # beta, 1/s
    noise_sigma: float = 0.01
    footprint_scale: float = 0.05      # pre-contrast visibility of regions
    k_range: tuple = (2, 5)
    time_range_s: tuple = (48.0, 1000.0)
    min_separation_s: float = 16.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ConfigError(
                f"phantom size must be at least 16x16, got {self.height}x{self.width}")
        if self.amplitude_range[0] < 0:
            raise ConfigError("amplitude_range: amplitude A must be >= 0")
        if self.washout_range[0] < 0:
            raise ConfigError("washout_range: washout rate beta must be >= 0")
        if self.uptake_range[0] <= self.washout_range[1]:
            raise ConfigError(
                "uptake_range: every uptake rate alpha must exceed every "
                f"washout rate beta (alpha >= {self.uptake_range[0]:g} vs "
                f"beta <= {self.washout_range[1]:g})")
        for name in ("n_regions_range", "amplitude_range", "uptake_range",
                     "washout_range", "k_range", "time_range_s"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if not 1 <= self.k_range[0] <= self.k_range[1] <= MAX_FRAMES:
            raise ConfigError(f"k_range must lie within [1, {MAX_FRAMES}]")
        if self.n_regions_range[0] < 1:
            raise ConfigError("n_regions_range: need at least one region")
        if not 0.0 < self.time_range_s[0] <= self.time_range_s[1] <= MAX_TIME_S:
            raise ConfigError(
                f"time_range_s must lie within (0, {MAX_TIME_S:g}]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.footprint_scale < 0:
            raise ConfigError("footprint_scale must be >= 0")


def enhancement_curve(A, alpha, beta, t_s):
    """Contrast-intensity delta A * (1 - e^(-alpha t)) * e^(-beta t).

    Zero at t = 0, rises at rate alpha, decays at rate beta; for beta > 0
    the peak sits at t* = ln((alpha + beta) / beta) / alpha. Accepts scalar
    or array t_s (values must be >= 0).
    """
    t = np.asarray(t_s, dtype=np.float64)
    out = A * (1.0 - np.exp(-alpha * t)) * np.exp(-beta * t)
    return float(out) if np.isscalar(t_s) else out


def peak_time(alpha, beta):
    """Time of maximum enhancement; None when beta = 0 (monotone curve)."""
    if beta == 0:
        return None
    return math.log((alpha + beta) / beta) / alpha


@dataclass
class Region:
    mask: np.ndarray       # (h, w) float64 in [0, 1]
    amplitude: float
    uptake: float
    washout: float


@dataclass
class DenseTruth:
    """Noise-free ground truth, evaluable at any continuous time."""

    pre_contrast: np.ndarray          # (h, w) float64
    regions: list = field(default_factory=list)

    def frame(self, t_s: float) -> np.ndarray:
        """True image at time t_s (noise-free, clamped to [0, 1])."""
        if t_s < 0:
            raise ConfigError(f"time must be >= 0, got {t_s}")
        img = self.pre_contrast.copy()
        for r in self.regions:
            img += r.mask * enhancement_curve(r.amplitude, r.uptake, r.washout, t_s)
        return np.clip(img, 0.0, 1.0)

    def peak_times(self):
        return [peak_time(r.uptake, r.washout) for r in self.regions]


def _smooth_background(spec, gen):
    h, w = spec.height, spec.width
    yy = np.linspace(0.0, 1.0, h)[:, None]
    xx = np.linspace(0.0, 1.0, w)[None, :]
    bg = np.full((h, w), spec.background_level)
    for _ in range(2):
        fy, fx = gen.uniform(0.5, 1.5, 2)
        py, px = gen.uniform(0, 2 * np.pi, 2)
        amp = gen.uniform(0.02, 0.05)
        bg = bg + amp * np.cos(2 * np.pi * fy * yy + py) * np.cos(2 * np.pi * fx * xx + px)
    return np.clip(bg, 0.02, 0.5)


def _ellipse_mask(spec, gen):
    h, w = spec.height, spec.width
    cy = gen.uniform(0.2, 0.8) * h
    cx = gen.uniform(0.2, 0.8) * w
    ry = gen.uniform(0.08, 0.22) * h
    rx = gen.uniform(0.08, 0.22) * w
    theta = gen.uniform(0, np.pi)
    yy = np.arange(h)[:, None] - cy
    xx = np.arange(w)[None, :] - cx
    u = yy * np.cos(theta) + xx * np.sin(theta)
    v = -yy * np.sin(theta) + xx * np.cos(theta)
    rho = np.sqrt((u / ry) ** 2 + (v / rx) ** 2)
    # soft edge roughly one cell wide
    edge = 1.0 / min(ry, rx)
    return 1.0 / (1.0 + np.exp((rho - 1.0) / max(edge, 0.04)))


def _sample_times(spec, gen, k):
    lo, hi = spec.time_range_s
    sep = spec.min_separation_s
    if hi - lo < (k - 1) * sep:
        raise ConfigError(
            f"time_range_s {spec.time_range_s} too narrow for {k} frames "
            f"separated by {sep:g} s")
    for _ in range(1000):
        t = np.sort(gen.uniform(lo, hi, k))
        if k == 1 or np.diff(t).min() >= sep:
            return [float(x) for x in t]
    raise ConfigError("could not sample acquisition times with the required "
                      f"separation {sep:g} s; widen time_range_s")


def generate_phantom(spec: PhantomSpec, case_id: int, times_s=None):
    """Build one case; returns (TrainingCase, DenseTruth).

    Deterministic in (spec.seed, case_id). ``times_s`` overrides the random
    acquisition-time sampler (useful for fixed experiment layouts).
    """
    gen = rng.spawn_numpy_rng(spec.seed, 0x9A17, case_id)
    pre = _smooth_background(spec, gen)
    n_regions = int(gen.integers(spec.n_regions_range[0],
                                 spec.n_regions_range[1] + 1))
    regions = []
    for _ in range(n_regions):
        mask = _ellipse_mask(spec, gen)
        A = float(gen.uniform(*spec.amplitude_range))
        alpha = float(gen.uniform(*spec.uptake_range))
        beta = float(gen.uniform(*spec.washout_range))
        regions.append(Region(mask=mask, amplitude=A, uptake=alpha, washout=beta))
        # baseline footprint so the region is visible pre-contrast, with
        # brightness proportional to how strongly it will enhance
        pre = pre + spec.footprint_scale * A * mask
    pre = np.clip(pre, 0.0, 1.0)
    truth = DenseTruth(pre_contrast=pre, regions=regions)

    if times_s is None:
        k = int(gen.integers(spec.k_range[0], spec.k_range[1] + 1))
        times_s = _sample_times(spec, gen, k)
    else:
        times_s = [float(t) for t in times_s]
    frames = []
    for t in times_s:
        img = truth.frame(t)
        if spec.noise_sigma > 0:
            img = img + gen.normal(0.0, spec.noise_sigma, img.shape)
        frames.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    case = TrainingCase(case_id=case_id,
                        pre_contrast=pre.astype(np.float32),
                        frames=frames, times_s=times_s)
    return case, truth


def generate_dataset(spec: PhantomSpec, n_cases: int, id_start: int = 0):
    """n_cases phantoms with consecutive ids; returns (cases, truths)."""
    if n_cases < 1:
        raise ConfigError(f"n_cases must be >= 1, got {n_cases}")
    cases, truths = [], []
    for cid in range(id_start, id_start + n_cases):
        case, truth = generate_phantom(spec, cid)
        cases.append(case)
        truths.append(truth)
    return cases, truths


def intensity_window(reference: np.ndarray):
    """(p_lo, p_hi): the 0.02 and 99.98 percentiles of the reference image.

    Computed once per case from the pre-contrast image and reused for every
    frame of that case.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.size == 0:
        raise DataError("reference image is empty")
    p_lo, p_hi = np.percentile(ref, [0.02, 99.98])
    if p_hi <= p_lo:
        raise DataError(
            f"reference intensity window is degenerate (p_lo={p_lo:g}, "
            f"p_hi={p_hi:g}); image is constant")
    return float(p_lo), float(p_hi)


def normalize_intensity(image, reference=None, window=None):
    """Rescale so the reference's [0.02, 99.98] percentile span maps to [0, 1].

    Pass either the reference image itself or a precomputed ``window``
    (from intensity_window) — the latter is how all post-contrast frames of
    a case reuse their pre-contrast image's window. Results are clipped to
    [0, 1].
    """
    if (reference is None) == (window is None):
        raise ConfigError("pass exactly one of reference or window")
    if window is None:
        window = intensity_window(reference)
    p_lo, p_hi = window
    img = np.asarray(image, dtype=np.float64)
    return np.clip((img - p_lo) / (p_hi - p_lo), 0.0, 1.0)


def normalize_case_images(pre_contrast, frames):
    """Normalize a pre-contrast image and its frames with one shared window."""
    window = intensity_window(pre_contrast)
    return (normalize_intensity(pre_contrast, window=window),
            [normalize_intensity(f, window=window) for f in frames])


def crop_patch(image, center, size: int):
    """size x size window around center, shifted inward at borders (no padding)."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if size > h or size > w:
        raise DataError(f"patch size {size} exceeds image size {h}x{w}")
    cy, cx = int(center[0]), int(center[1])
    r0 = min(max(cy - size // 2, 0), h - size)
    c0 = min(max(cx - size // 2, 0), w - size)
    return img[r0:r0 + size, c0:c0 + size]
