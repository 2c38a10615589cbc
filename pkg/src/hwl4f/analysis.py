"""Device fidelity (SSIM), multi-seed aggregation and the throughput model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .optics import (DeviceConfig, RngStream, ShapeError, optical_convolve_spectra,
                     transfer_function, with_noise)
from .model import software_fft_convolve


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SsimConfig:
    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = None  # None: max - min of the reference image

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("SSIM window must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over every full ``window x window`` uniform window.

    ``a`` is the reference: with ``dynamic_range=None`` the constants use its
    value range (1.0 if ``a`` is constant).  Window statistics are population
    moments.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    w = cfg.window
    if a.ndim != 2 or min(a.shape) < w:
        raise ShapeError(f"images {a.shape} smaller than the {w}x{w} window")
    L = cfg.dynamic_range
    if L is None:
        L = float(a.max() - a.min()) or 1.0
    # SSIM is invariant to a common rescaling of a, b and L; working in units
    # of L keeps the constants (k L)^2 from underflowing for tiny ranges
    a, b = a / L, b / L
    c1, c2 = cfg.k1 ** 2, cfg.k2 ** 2

    def wmean(x):
        return sliding_window_view(x, (w, w)).mean(axis=(-2, -1))

    mu_a, mu_b = wmean(a), wmean(b)
    var_a = wmean(a * a) - mu_a * mu_a
    var_b = wmean(b * b) - mu_b * mu_b
    cov = wmean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# Device-vs-software study
# ---------------------------------------------------------------------------


def device_ssim_scores(images: np.ndarray, kernel: np.ndarray, cfg: DeviceConfig,
                       seed: int = 0, ssim_cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-image SSIM of the device convolution against the software one."""
    rng = RngStream(seed)
    mask = transfer_function(kernel)
    scores = np.empty(len(images))
    for i, img in enumerate(images):
        ref = software_fft_convolve(img, kernel)
        dev = optical_convolve_spectra(img, mask, cfg, rng)
        scores[i] = ssim(ref, dev, ssim_cfg)
    return scores


def calibrate_noise_sigma(images: np.ndarray, kernel: np.ndarray, base: DeviceConfig,
                          target: float = 0.8, seed: int = 0, lo: float = 0.0,
                          hi: float = 1.0, iters: int = 30) -> float:
    """Camera noise level at which the mean device SSIM reaches ``target``.

    Bisection with common random numbers (same seed at every probe), which
    keeps the mean SSIM monotone in sigma.
    """
    def mean_at(sigma):
        return float(device_ssim_scores(images, kernel, with_noise(base, sigma), seed).mean())

    if mean_at(lo) < target:
        raise ConfigError(f"SSIM is already below {target} without camera noise")
    if mean_at(hi) > target:
        raise ConfigError(f"SSIM stays above {target} at sigma={hi}; widen the bracket")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_at(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Aggregation and throughput
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    accuracies: tuple[float, ...]
    mean: float
    std: float

    def as_dict(self) -> dict:
        return {"accuracies": list(self.accuracies), "mean": self.mean, "std": self.std}


def aggregate_runs(accuracies) -> RunSummary:
    """Mean and sample (n - 1) standard deviation; std of a single run is 0."""
    acc = [float(a) for a in accuracies]
    if not acc:
        raise ConfigError("no runs to aggregate")
    arr = np.sort(np.asarray(acc))  # summation order fixed for permutation invariance
    mean = float(math.fsum(arr) / len(arr))
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return RunSummary(tuple(acc), mean, std)


@dataclass(frozen=True)
class LatencyModel:
    slm_setup_ms: float = 25.0
    exposure_ms: float = 20.0
    os_overhead_ms: float = 0.0
    kernels_per_image: int = 1

    def __post_init__(self):
        if min(self.slm_setup_ms, self.exposure_ms, self.os_overhead_ms) < 0:
            raise ValueError("latencies must be >= 0")
        if self.kernels_per_image < 1:
            raise ValueError("kernels_per_image must be >= 1")


def throughput(model: LatencyModel) -> float:
    """Images per second for sequential device passes."""
    per_pass = model.slm_setup_ms + model.exposure_ms + model.os_overhead_ms
    if per_pass <= 0:
        raise ConfigError("total per-pass latency must be positive")
    return 1000.0 / (model.kernels_per_image * per_pass)
