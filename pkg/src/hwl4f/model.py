"""Fourier-convolution CNN with a pluggable convolution backend.

Architecture: K full-size circular convolutions (n x n kernels) -> ReLU ->
2x2 max-pool -> fully connected layer -> softmax.  The convolution runs on
whichever backend is supplied: the simulated device, the FFT software model
or the direct-sum oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fieldio
from .optics import (DeviceConfig, RngStream, ShapeError, check_spatial,
                     dft2_centered, encode_input, idft2_centered,
                     optical_convolve_spectra, reference_convolve,
                     transfer_function)


@dataclass
class ModelParams:
    kernels: np.ndarray      # (K, n, n)
    fc_weights: np.ndarray   # (K * (n // pool)**2, C)
    fc_bias: np.ndarray      # (C,)

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.fc_weights = np.asarray(self.fc_weights, dtype=np.float64)
        self.fc_bias = np.asarray(self.fc_bias, dtype=np.float64)
        if self.kernels.ndim != 3 or self.kernels.shape[1] != self.kernels.shape[2]:
            raise ShapeError(f"kernels must be (K, n, n), got {self.kernels.shape}")
        if self.fc_weights.ndim != 2 or self.fc_weights.shape[1] != self.fc_bias.shape[0]:
            raise ShapeError("fc_weights and fc_bias disagree on class count")
        for name in ("kernels", "fc_weights", "fc_bias"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def K(self) -> int:
        return self.kernels.shape[0]

    @property
    def n(self) -> int:
        return self.kernels.shape[1]

    @property
    def C(self) -> int:
        return self.fc_bias.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.kernels.copy(), self.fc_weights.copy(), self.fc_bias.copy())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.kernels, self.fc_weights, self.fc_bias


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.001
    K: int = 8
    pool: int = 2
    classes: int = 10
    epochs: int = 30
    batch_size: int = 1
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.K < 0 or self.classes < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("K, classes, epochs and batch_size out of range")
        if self.pool != 2:
            raise ValueError("only 2x2 max-pooling is supported")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.loss != "softmax_cross_entropy":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass
class ForwardTrace:
    conv_out: np.ndarray     # z_hw, (K, n, n)
    act: np.ndarray          # h, (K, n, n)
    pooled: np.ndarray       # (K, n/2, n/2)
    pool_argmax: np.ndarray  # flat index 0..3 of the max inside each 2x2 window
    logits: np.ndarray
    probs: np.ndarray

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.conv_out, self.act, self.pooled,
                                      self.pool_argmax, self.logits, self.probs))


def init_params(n: int, hp: Hyperparams, rng: RngStream) -> ModelParams:
    """Kernels ~ U(-1/n, 1/n); FC weights ~ U(+-1/sqrt(fan_in)); zero bias."""
    if n % hp.pool:
        raise ShapeError(f"pool {hp.pool} does not divide n={n}")
    kernels = rng.uniform(-1.0 / n, 1.0 / n, (hp.K, n, n))
    fan_in = hp.K * (n // hp.pool) ** 2
    bound = 1.0 / np.sqrt(fan_in) if fan_in else 0.0
    fc = rng.uniform(-bound, bound, (fan_in, hp.classes))
    return ModelParams(kernels, fc, np.zeros(hp.classes))


# ---------------------------------------------------------------------------
# Convolution backends
# ---------------------------------------------------------------------------


def software_fft_convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular convolution through the FFT software model."""
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if image.shape[-2:] != kernel.shape[-2:]:
        raise ShapeError(f"image {image.shape} and kernel {kernel.shape} differ")
    n = image.shape[-1]
    return np.real(idft2_centered(n * dft2_centered(image) * dft2_centered(kernel)))


def kernel_to_frequency(params: ModelParams) -> np.ndarray:
    """Per-kernel centered unitary spectra, shape (K, n, n)."""
    return dft2_centered(params.kernels)


class SoftwareBackend:
    """Noise-free FFT model of the correlator."""

    name = "software"

    def __call__(self, image, kernel):
        return software_fft_convolve(image, kernel)

    def input_field(self, image: np.ndarray) -> np.ndarray:
        return image

    def convolve_bank(self, image: np.ndarray, kernels: np.ndarray,
                      kernel_freq: np.ndarray | None = None) -> np.ndarray:
        if kernel_freq is None:
            kernel_freq = dft2_centered(kernels)
        n = image.shape[-1]
        return np.real(idft2_centered(n * dft2_centered(image) * kernel_freq))


class OracleBackend(SoftwareBackend):
    """Direct-sum convolution; slow, used to cross-check the others."""

    name = "oracle"

    def __call__(self, image, kernel):
        return reference_convolve(image, kernel)

    def convolve_bank(self, image, kernels, kernel_freq=None):
        return np.stack([reference_convolve(image, k) for k in kernels])


class DeviceBackend:
    """Simulated 4f correlator; owns the RngStream for camera noise."""

    name = "device"

    def __init__(self, cfg: DeviceConfig, rng: RngStream | None = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else RngStream(0)

    def __call__(self, image, kernel):
        return optical_convolve_spectra(image, transfer_function(kernel), self.cfg, self.rng)

    def input_field(self, image: np.ndarray) -> np.ndarray:
        """The amplitude actually displayed on SLM1."""
        return encode_input(image, self.cfg.slm1)

    def convolve_bank(self, image, kernels, kernel_freq=None):
        if kernel_freq is None:
            kernel_freq = dft2_centered(kernels)
        masks = kernels.shape[-1] * kernel_freq
        return optical_convolve_spectra(image, masks, self.cfg, self.rng)


# ---------------------------------------------------------------------------
# Forward pass and loss
# ---------------------------------------------------------------------------


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2(act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max-pool over the last two axes, with the winning window slot.

    Ties go to the first maximal element in row-major window order.
    """
    K, n, _ = act.shape
    m = n // 2
    windows = act.reshape(K, m, 2, m, 2).transpose(0, 1, 3, 2, 4).reshape(K, m, m, 4)
    arg = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return pooled, arg


def unpool2(grad_pooled: np.ndarray, arg: np.ndarray) -> np.ndarray:
    """Route each pooled gradient to the single cell that won its window."""
    K, m, _ = grad_pooled.shape
    windows = np.zeros((K, m, m, 4))
    np.put_along_axis(windows, arg[..., None], grad_pooled[..., None], axis=-1)
    return windows.reshape(K, m, m, 2, 2).transpose(0, 1, 3, 2, 4).reshape(K, 2 * m, 2 * m)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def forward(params: ModelParams, image: np.ndarray, backend, hp: Hyperparams | None = None,
            kernel_freq: np.ndarray | None = None) -> ForwardTrace:
    image = check_spatial(image)
    if image.shape[0] != params.n:
        raise ShapeError(f"image side {image.shape[0]} != kernel side {params.n}")
    if params.K:
        conv_out = backend.convolve_bank(image, params.kernels, kernel_freq)
    else:
        conv_out = np.zeros((0,) + image.shape)
    act = relu(conv_out)
    pooled, arg = maxpool2(act)
    logits = pooled.reshape(-1) @ params.fc_weights + params.fc_bias
    return ForwardTrace(conv_out, act, pooled, arg, logits, softmax(logits))


def loss_and_error(trace: ForwardTrace, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and output error ``probs - onehot(label)``."""
    C = trace.probs.shape[0]
    if not 0 <= label < C:
        raise ValueError(f"label {label} outside [0, {C})")
    # log-softmax from the logits avoids log(0) for confident predictions
    z = trace.logits - trace.logits.max()
    loss = float(np.log(np.exp(z).sum()) - z[label])
    e = trace.probs.copy()
    e[label] -= 1.0
    return loss, e


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: ModelParams, **kw) -> "AdamState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], **kw)


def adam_step(params: ModelParams, state: AdamState, updates, hp: Hyperparams) -> ModelParams:
    """One Adam step in place on ``params``; ``updates`` plays the gradient.

    ``updates`` is anything with ``d_kernels``, ``d_fc`` and ``d_bias``.
    """
    grads = (updates.d_kernels, updates.d_fc, updates.d_bias)
    arrays = params.arrays()
    for g, p in zip(grads, arrays):
        if g.shape != p.shape:
            raise ShapeError(f"update shape {g.shape} does not match parameter {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (g, p) in enumerate(zip(grads, arrays)):
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= hp.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: ModelParams, *, seed: int, epoch: int) -> None:
    """``path`` gets the field records; ``path.json`` the manifest."""
    path = Path(path)
    with open(path, "wb") as fh:
        fieldio.write_fields(fh, list(params.kernels) + [params.fc_weights.reshape(-1),
                                                         params.fc_bias])
    manifest = {"K": params.K, "n": params.n, "C": params.C,
                "fc_rows": params.fc_weights.shape[0], "seed": seed, "epoch": epoch}
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text())
    records = list(fieldio.read_records(path.read_bytes()))
    K = manifest["K"]
    if len(records) != K + 2:
        raise fieldio.FieldFormatError(f"expected {K + 2} records, found {len(records)}")
    kernels = np.stack(records[:K]) if K else np.zeros((0, manifest["n"], manifest["n"]))
    fc = records[K].reshape(manifest["fc_rows"], manifest["C"])
    return ModelParams(kernels, fc, records[K + 1]), manifest
