"""Image-fidelity metrics: MSE, MAE, PSNR, SSIM, MS-SSIM, and reports.

The evaluation comparator everywhere is the "pre-contrast copy" baseline:
predict every post-contrast frame as the unchanged pre-contrast image.
Model and baseline reports run through one shared code path so their rows
are directly comparable.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError, DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
# standard five-level weight set, renormalized when fewer levels are used
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

METRIC_NAMES = ("mse", "mae", "psnr_db", "ssim", "ms_ssim")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in dB; +inf when the images are identical."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(img, taps):
    """Gaussian-window local means, valid region only."""
    r = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def _ssim_maps(a, b, peak):
    """(ssim_map, cs_map) over valid windows."""
    taps = _gaussian_taps()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_a = _windowed_mean(a, taps)
    mu_b = _windowed_mean(b, taps)
    var_a = _windowed_mean(a * a, taps) - mu_a * mu_a
    var_b = _windowed_mean(b * b, taps) - mu_b * mu_b
    cov = _windowed_mean(a * b, taps) - mu_a * mu_b
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return lum * cs, cs


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean local structural similarity over valid 11x11 Gaussian windows."""
    a, b = _check_pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise DataError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    smap, _ = _ssim_maps(a, b, peak)
    return float(smap.mean())


def max_ms_ssim_levels(shape) -> int:
    """Largest usable level count: every scale must still fit the window."""
    levels = 1
    while levels < len(MS_SSIM_WEIGHTS) and min(shape) >= SSIM_WINDOW * 2 ** levels:
        levels += 1
    return levels


def _downsample2(img):
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    return img[:h2 * 2, :w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def ms_ssim(a, b, levels=None, peak: float = 1.0) -> float:
    """Multi-scale SSIM: contrast/structure at each scale, luminance at the last.

    levels=None picks the largest count (up to 5) the image size allows;
    the standard per-level weights are renormalized over the levels used.
    levels=1 reduces exactly to ssim.
    """
    a, b = _check_pair(a, b)
    if levels is None:
        levels = max_ms_ssim_levels(a.shape)
    if not 1 <= levels <= len(MS_SSIM_WEIGHTS):
        raise DataError(f"levels must lie in [1, {len(MS_SSIM_WEIGHTS)}], got {levels}")
    need = SSIM_WINDOW * 2 ** (levels - 1)
    if min(a.shape) < need:
        raise DataError(
            f"image {a.shape} too small for {levels} scales; needs min "
            f"dimension >= {need}")
    weights = np.asarray(MS_SSIM_WEIGHTS[:levels])
    weights = weights / weights.sum()
    score = 1.0
    for level in range(levels):
        smap, cs_map = _ssim_maps(a, b, peak)
        if level == levels - 1:
            term = float(smap.mean())
        else:
            term = float(cs_map.mean())
            a, b = _downsample2(a), _downsample2(b)
        score *= max(term, 0.0) ** weights[level]
    return float(score)


@dataclass
class FrameMetrics:
    case_id: int
    phase: int            # 1-based frame index within its case
    time_s: float
    mse: float
    mae: float
    psnr_db: float
    ssim: float
    ms_ssim: float

    def values(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass
class MetricReport:
    """Per-frame metric rows plus per-phase and overall mean aggregates."""

    method: str
    frames: list = field(default_factory=list)
    ms_ssim_levels: int = 0

    def add(self, case_id, phase, time_s, prediction, target, peak=1.0):
        levels = max_ms_ssim_levels(np.asarray(target).shape)
        if self.ms_ssim_levels == 0:
            self.ms_ssim_levels = levels
        self.frames.append(FrameMetrics(
            case_id=case_id, phase=phase, time_s=float(time_s),
            mse=mse(prediction, target), mae=mae(prediction, target),
            psnr_db=psnr(prediction, target, peak),
            ssim=ssim(prediction, target, peak),
            ms_ssim=ms_ssim(prediction, target, peak=peak)))

    def _mean_over(self, rows):
        return {name: float(np.mean([getattr(r, name) for r in rows]))
                for name in METRIC_NAMES}

    @property
    def phases(self):
        return sorted({r.phase for r in self.frames})

    def per_phase(self) -> dict:
        return {p: self._mean_over([r for r in self.frames if r.phase == p])
                for p in self.phases}

    def overall(self) -> dict:
        if not self.frames:
            raise ContractError("report has no frames")
        return self._mean_over(self.frames)

    def per_case(self) -> dict:
        ids = sorted({r.case_id for r in self.frames})
        return {cid: self._mean_over([r for r in self.frames if r.case_id == cid])
                for cid in ids}


def build_report(method: str, dataset, predict) -> MetricReport:
    """Shared evaluation path: predict(case) -> list of frames aligned with case.frames."""
    if not dataset:
        raise ContractError("dataset is empty")
    report = MetricReport(method=method)
    for case in dataset:
        preds = predict(case)
        if len(preds) != case.k:
            raise ContractError(
                f"case {case.case_id}: predictor returned {len(preds)} frames "
                f"for k={case.k}")
        for i, (pred, target) in enumerate(zip(preds, case.frames)):
            report.add(case.case_id, i + 1, case.times_s[i], pred,
                       target.astype(np.float64))
    return report


def baseline_report(dataset) -> MetricReport:
    """Predict every frame as an unchanged copy of the pre-contrast image."""
    return build_report(
        "baseline", dataset,
        lambda case: [case.pre_contrast.astype(np.float64)] * case.k)


def _fmt(v):
    if math.isinf(v):
        return "inf"
    return f"{v:.8g}"


def write_report_csv(path, reports):
    """One CSV for any number of reports: per-frame rows then aggregate rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# ssim: {SSIM_WINDOW}x{SSIM_WINDOW} gaussian window, "
                 f"sigma={SSIM_SIGMA}, K1={SSIM_K1}, K2={SSIM_K2}\n")
        for rep in reports:
            fh.write(f"# ms_ssim[{rep.method}]: levels={rep.ms_ssim_levels}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "case_id", "phase", "time_s"] + list(METRIC_NAMES))
        for rep in reports:
            for r in rep.frames:
                writer.writerow([rep.method, r.case_id, r.phase, _fmt(r.time_s)]
                                + [_fmt(v) for v in r.values().values()])
        for rep in reports:
            for phase, vals in rep.per_phase().items():
                writer.writerow([rep.method, "mean", phase, ""]
                                + [_fmt(vals[n]) for n in METRIC_NAMES])
            overall = rep.overall()
            writer.writerow([rep.method, "mean", "all", ""]
                            + [_fmt(overall[n]) for n in METRIC_NAMES])
