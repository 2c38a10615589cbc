"""Discrete simulation of a 4f optical correlator.

The device path is encode (SLM1) -> lens Fourier transform -> point-wise
kernel mask (SLM2) -> inverse transform -> camera capture.  Optical constants
(wavelength, focal lengths, beam expansion) are folded into a unitary,
DC-centered DFT, so the simulator is indexed by pixels rather than meters.

Fields are plain ``numpy`` arrays: a spatial field is a real ``(n, n)``
array, a frequency field a complex ``(n, n)`` array with DC at
``(n // 2, n // 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np


class FieldError(ValueError):
    """Raised for non-finite or out-of-range field values."""


class ShapeError(ValueError):
    """Raised when grids that must match in size do not."""


def _check_finite(values: np.ndarray, name: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        raise FieldError(f"{name} contains non-finite values")


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(f"grid size mismatch: {a.shape} vs {b.shape}")


def check_spatial(values: np.ndarray) -> np.ndarray:
    """Validate a spatial field: square, even side >= 2, finite."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ShapeError(f"spatial field must be square 2-D, got {values.shape}")
    n = values.shape[0]
    if n < 2 or n % 2:
        raise ShapeError(f"side length must be even and >= 2, got {n}")
    _check_finite(values)
    return values


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


class RngStream:
    """Seeded random stream.

    Identical seed and identical call sequence give identical draws.
    Independent sub-streams are derived with :meth:`spawn` so that, for
    example, device noise and data shuffling never share state.
    """

    def __init__(self, seed: int, *, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, key: int) -> "RngStream":
        """Child stream keyed by ``key``; independent of this stream's draws."""
        seq = np.random.SeedSequence(self._seq.entropy,
                                     spawn_key=self._seq.spawn_key + (int(key),))
        return RngStream(self.seed, _seq=seq)

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state

    def normal(self, sigma: float, shape) -> np.ndarray:
        return sigma * self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


# ---------------------------------------------------------------------------
# Device configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlmConfig:
    bit_depth: int = 8
    quantize: bool = True
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"SLM bit_depth must be in [1, 16], got {self.bit_depth}")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError(f"value_range min must be < max, got {self.value_range}")
        object.__setattr__(self, "value_range", (float(lo), float(hi)))


Readout = Literal["ideal_real", "magnitude", "intensity"]


@dataclass(frozen=True)
class CameraConfig:
    readout: Readout = "ideal_real"
    noise_sigma: float = 0.0
    bit_depth: int = 8
    exposure_ms: float = 20.0
    saturation: float = 4.0

    def __post_init__(self):
        if self.readout not in ("ideal_real", "magnitude", "intensity"):
            raise ValueError(f"unknown camera readout {self.readout!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.bit_depth <= 16:
            raise ValueError("camera bit_depth must be in [0, 16] (0 disables the ADC)")
        if self.saturation <= 0:
            raise ValueError("saturation must be > 0")
        if self.exposure_ms < 0:
            raise ValueError("exposure_ms must be >= 0")


@dataclass(frozen=True)
class DeviceConfig:
    slm1: SlmConfig = field(default_factory=SlmConfig)
    slm2: SlmConfig = field(default_factory=SlmConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    misalignment: tuple[float, float] = (0.0, 0.0)
    slm_setup_ms: float = 25.0
    per_kernel_passes: bool = True

    def __post_init__(self):
        dx, dy = self.misalignment
        if abs(dx) > 2 or abs(dy) > 2:
            raise ValueError(f"misalignment beyond +-2 px is outside the model: {self.misalignment}")
        object.__setattr__(self, "misalignment", (float(dx), float(dy)))
        if self.slm_setup_ms < 0:
            raise ValueError("slm_setup_ms must be >= 0")

    @property
    def is_transparent(self) -> bool:
        return (not self.slm1.quantize and not self.slm2.quantize
                and self.camera.readout == "ideal_real"
                and self.camera.noise_sigma == 0.0
                and self.camera.bit_depth == 0
                and self.misalignment == (0.0, 0.0))


def transparent_config() -> DeviceConfig:
    """Device that reproduces the mathematical circular convolution."""
    return DeviceConfig(
        slm1=SlmConfig(quantize=False),
        slm2=SlmConfig(quantize=False),
        camera=CameraConfig(noise_sigma=0.0, bit_depth=0, saturation=1e300),
    )


# Found by analysis.calibrate_noise_sigma on 100 MNIST test digits with the
# edge-detection kernel (target mean SSIM 0.8); see scripts/calibrate_noise.py.
CALIBRATED_NOISE_SIGMA = 0.1176


def calibrated_config(noise_sigma: float = CALIBRATED_NOISE_SIGMA) -> DeviceConfig:
    """8-bit SLMs, 8-bit ideal_real camera and calibrated read noise."""
    return DeviceConfig(
        slm1=SlmConfig(bit_depth=8, quantize=True, value_range=(0.0, 1.0)),
        slm2=SlmConfig(bit_depth=8, quantize=True),
        camera=CameraConfig(readout="ideal_real", noise_sigma=noise_sigma,
                            bit_depth=8, exposure_ms=20.0, saturation=4.0),
    )


def with_noise(cfg: DeviceConfig, noise_sigma: float) -> DeviceConfig:
    return replace(cfg, camera=replace(cfg.camera, noise_sigma=float(noise_sigma)))


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def dft2_centered(values: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT with DC moved to the grid center.

    Works on the last two axes, so a ``(K, n, n)`` stack is transformed
    kernel by kernel.
    """
    values = np.asarray(values)
    _check_finite(values)
    return np.fft.fftshift(np.fft.fft2(values, norm="ortho"), axes=(-2, -1))


def idft2_centered(freq: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft2_centered`; returns a complex spatial grid."""
    freq = np.asarray(freq)
    _check_finite(freq, "spectrum")
    return np.fft.ifft2(np.fft.ifftshift(freq, axes=(-2, -1)), norm="ortho")


def centered_frequencies(n: int) -> np.ndarray:
    """Integer frequency index of each centered bin, ``-n/2 .. n/2 - 1``."""
    return np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n))


# ---------------------------------------------------------------------------
# Device stages
# ---------------------------------------------------------------------------


def _uniform_quantize(values: np.ndarray, lo: float, hi: float, levels: int) -> np.ndarray:
    # mid-tread on the level grid, clamp first, ties round toward +inf
    clipped = np.clip(values, lo, hi)
    idx = np.floor((clipped - lo) / (hi - lo) * (levels - 1) + 0.5)
    return lo + (hi - lo) * idx / (levels - 1)


def quantize(values: np.ndarray, cfg: SlmConfig) -> np.ndarray:
    """Clamp to ``cfg.value_range`` and snap to ``2**bit_depth`` uniform levels."""
    values = np.asarray(values, dtype=np.float64)
    if not cfg.quantize:
        return values
    lo, hi = cfg.value_range
    return _uniform_quantize(values, lo, hi, 2 ** cfg.bit_depth)


def encode_input(image: np.ndarray, cfg: SlmConfig) -> np.ndarray:
    """Amplitude-encode an image in [0, 1] on SLM1."""
    image = np.asarray(image, dtype=np.float64)
    _check_finite(image, "image")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise FieldError("input pixels must lie in [0, 1]")
    return quantize(image, cfg)


def _quantize_component(part: np.ndarray, bit_depth: int) -> np.ndarray:
    # range auto-set per kernel over the last two axes
    lo = part.min(axis=(-2, -1), keepdims=True)
    hi = part.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    levels = 2 ** bit_depth
    idx = np.floor((part - lo) / safe * (levels - 1) + 0.5)
    q = lo + safe * idx / (levels - 1)
    return np.where(span > 0, q, part)


def slm2_encode(kernel_freq: np.ndarray, cfg: SlmConfig) -> np.ndarray:
    """What SLM2 actually displays for a complex mask.

    Real and imaginary parts are quantized independently, each over its own
    observed min/max for that kernel.  ``cfg.value_range`` is not used here.
    """
    kernel_freq = np.asarray(kernel_freq, dtype=np.complex128)
    if not cfg.quantize:
        return kernel_freq
    re = _quantize_component(kernel_freq.real, cfg.bit_depth)
    im = _quantize_component(kernel_freq.imag, cfg.bit_depth)
    return re + 1j * im


def apply_kernel(freq: np.ndarray, kernel_freq: np.ndarray, cfg: SlmConfig) -> np.ndarray:
    """Point-wise product of a spectrum with the SLM2 mask."""
    freq = np.asarray(freq)
    kernel_freq = np.asarray(kernel_freq)
    if freq.shape[-2:] != kernel_freq.shape[-2:]:
        raise ShapeError(f"spectrum {freq.shape} and kernel {kernel_freq.shape} differ")
    return freq * slm2_encode(kernel_freq, cfg)


def misalignment_ramp(n: int, dx: float, dy: float) -> np.ndarray:
    """Fourier-plane phase ramp for a sub-pixel shift (dx along columns, dy along rows)."""
    u = centered_frequencies(n)
    return np.exp(-2j * np.pi * (dx * u[None, :] + dy * u[:, None]) / n)


def capture(field_: np.ndarray, cfg: CameraConfig, rng: RngStream | None = None) -> np.ndarray:
    """Camera readout, read noise, saturation and ADC quantization."""
    field_ = np.asarray(field_)
    if cfg.readout == "ideal_real":
        out = np.real(field_).astype(np.float64)
        lo, hi = -cfg.saturation, cfg.saturation
    elif cfg.readout == "magnitude":
        out = np.abs(field_)
        lo, hi = 0.0, cfg.saturation
    else:
        out = np.abs(field_) ** 2
        lo, hi = 0.0, cfg.saturation
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ValueError("a noisy camera needs an RngStream")
        out = out + rng.normal(cfg.noise_sigma, out.shape)
    out = np.clip(out, lo, hi)
    if cfg.bit_depth > 0:
        out = _uniform_quantize(out, lo, hi, 2 ** cfg.bit_depth)
    return out


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def transfer_function(kernel_spatial: np.ndarray) -> np.ndarray:
    """SLM2 mask implementing circular convolution with ``kernel_spatial``.

    The unitary transforms lose a factor ``n`` relative to the convolution
    theorem; it is restored here so the mask is the plain FFT of the kernel.
    """
    kernel_spatial = np.asarray(kernel_spatial, dtype=np.float64)
    return kernel_spatial.shape[-1] * dft2_centered(kernel_spatial)


def optical_convolve_spectra(image: np.ndarray, masks: np.ndarray, cfg: DeviceConfig,
                             rng: RngStream | None = None) -> np.ndarray:
    """Run the device for one image against one or more precomputed masks.

    ``masks`` is ``(n, n)`` or a ``(K, n, n)`` stack from
    :func:`transfer_function`; each mask is one sequential device pass and
    draws its own camera noise, in stack order.
    """
    image = check_spatial(image)
    masks = np.asarray(masks)
    _check_same_shape(image, masks)
    n = image.shape[0]
    spectrum = dft2_centered(encode_input(image, cfg.slm1))
    dx, dy = cfg.misalignment
    if dx or dy:
        spectrum = spectrum * misalignment_ramp(n, dx, dy)
    out_field = idft2_centered(apply_kernel(spectrum, masks, cfg.slm2))
    return capture(out_field, cfg.camera, rng)


def optical_convolve(image: np.ndarray, kernel_spatial: np.ndarray, cfg: DeviceConfig,
                     rng: RngStream | None = None) -> np.ndarray:
    """Circular convolution of ``image`` with ``kernel_spatial`` on the simulated device."""
    image = check_spatial(image)
    kernel_spatial = np.asarray(kernel_spatial, dtype=np.float64)
    _check_same_shape(image, kernel_spatial)
    return optical_convolve_spectra(image, transfer_function(kernel_spatial), cfg, rng)


def reference_convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct-sum circular convolution, O(n^4); ground truth for the FFT paths.

    out[x, y] = sum_{a, b} image[a, b] * kernel[(x - a) % n, (y - b) % n]
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if image.shape != kernel.shape:
        raise ShapeError(f"image {image.shape} and kernel {kernel.shape} differ")
    out = np.zeros_like(image)
    rows, cols = image.shape
    for a in range(rows):
        for b in range(cols):
            if image[a, b] != 0.0:
                out += image[a, b] * np.roll(kernel, (a, b), axis=(0, 1))
    return out


def edge_detect_kernel(n: int) -> np.ndarray:
    """3x3 Laplacian centered on the origin and wrapped onto an n x n grid."""
    lap = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    k = np.zeros((n, n))
    for i in range(3):
        for j in range(3):
            k[(i - 1) % n, (j - 1) % n] = lap[i, j]
    return k


def gaussian_kernel(n: int, sigma: float = 1.0) -> np.ndarray:
    """Normalized Gaussian blur centered on the origin, wrapped to n x n."""
    d = np.minimum(np.arange(n), n - np.arange(n)).astype(np.float64)
    g = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * sigma ** 2))
    return g / g.sum()
