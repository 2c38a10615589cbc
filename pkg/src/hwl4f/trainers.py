"""Hardware-in-the-loop update rules: BP, PEPITA and MEMPEPITA.

BP takes the forward trace from the backend (possibly the device) and
differentiates through the FFT software model.  PEPITA needs only a second
forward pass through the same backend on an input perturbed by a fixed
random projection of the output error.  MEMPEPITA gives the same update as
PEPITA but recomputes the standard activations with a third pass instead of
keeping them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import flops
from .flops import FlopLedger
from .model import (AdamState, ForwardTrace, Hyperparams, ModelParams,
                    adam_step, forward, kernel_to_frequency, loss_and_error,
                    unpool2)
from .optics import RngStream, ShapeError, dft2_centered, idft2_centered


class ConfigurationError(ValueError):
    pass


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "pepita"
    pepita_conv_rule: str = "pointwise"
    f_scale: float = 0.05
    modulation_sign: str = "minus"

    def __post_init__(self):
        if self.algorithm not in ("bp", "pepita", "mempepita"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.pepita_conv_rule not in ("pointwise", "correlation"):
            raise ValueError(f"unknown pepita_conv_rule {self.pepita_conv_rule!r}")
        if self.modulation_sign not in ("minus", "plus"):
            raise ValueError(f"unknown modulation_sign {self.modulation_sign!r}")
        if self.f_scale < 0:
            raise ValueError("f_scale must be >= 0")


@dataclass
class UpdateSet:
    d_kernels: np.ndarray
    d_fc: np.ndarray
    d_bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "UpdateSet":
        return cls(np.zeros_like(params.kernels), np.zeros_like(params.fc_weights),
                   np.zeros_like(params.fc_bias))

    def __iadd__(self, other: "UpdateSet") -> "UpdateSet":
        self.d_kernels += other.d_kernels
        self.d_fc += other.d_fc
        self.d_bias += other.d_bias
        return self

    def scale(self, s: float) -> "UpdateSet":
        return UpdateSet(self.d_kernels * s, self.d_fc * s, self.d_bias * s)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.d_kernels, self.d_fc, self.d_bias))


class ProjectionF:
    """Fixed error-projection matrix mapping class error into input space."""

    def __init__(self, matrix: np.ndarray, scale: float):
        matrix = np.array(matrix, dtype=np.float64)
        matrix.setflags(write=False)
        self.matrix = matrix
        self.scale = float(scale)

    @property
    def n(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def checksum(self) -> str:
        return hashlib.sha256(self.matrix.tobytes()).hexdigest()


def init_projection(n: int, C: int, f_scale: float, rng: RngStream) -> ProjectionF:
    """Entries i.i.d. U(-f_scale/n, +f_scale/n), i.e. scaled by 1/sqrt(n^2)."""
    if n <= 0 or C <= 0:
        raise ValueError("n and C must be positive")
    bound = f_scale / n
    if bound == 0:
        return ProjectionF(np.zeros((n * n, C)), f_scale)
    return ProjectionF(rng.uniform(-bound, bound, (n * n, C)), f_scale)


def modulated_input(image: np.ndarray, e: np.ndarray, F: ProjectionF,
                    sign: str = "minus") -> np.ndarray:
    """x_mod = clamp(x -/+ F e) to the SLM amplitude range [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    n = image.shape[0]
    if F.matrix.shape != (n * n, e.shape[0]):
        raise ShapeError(f"projection {F.matrix.shape} incompatible with image {image.shape} "
                         f"and error {e.shape}")
    perturbation = (F.matrix @ e).reshape(n, n)
    if sign == "minus":
        return np.clip(image - perturbation, 0.0, 1.0)
    return np.clip(image + perturbation, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Update rules
# ---------------------------------------------------------------------------


def _cross_correlate(x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """out[k][s] = sum_t x[t] d[k][t + s] (circular), via the transforms."""
    n = x.shape[-1]
    return n * np.real(idft2_centered(np.conj(dft2_centered(x)) * dft2_centered(d)))


def _pepita_from_passes(x_mod, h, h_mod, pooled_mod, e, cfg: AlgoConfig) -> UpdateSet:
    diff = h - h_mod
    if cfg.pepita_conv_rule == "pointwise":
        d_kernels = diff * x_mod
    else:
        d_kernels = _cross_correlate(x_mod, diff)
    d_fc = np.outer(pooled_mod.reshape(-1), e)
    return UpdateSet(d_kernels, d_fc, e.copy())


def _charge_update(ledger: FlopLedger | None, algorithm: str, cfg: AlgoConfig,
                   params: ModelParams) -> None:
    if ledger is None:
        return
    counts = flops.count_flops(algorithm, params.n, params.K, params.C,
                               cfg.pepita_conv_rule)
    ledger.add(forward=counts.forward_flops, update=counts.update_flops,
               fft=counts.fft_flops, pointwise=counts.pointwise_flops,
               passes=counts.passes, memory=counts.peak_activation_memory)


def pepita_update(params: ModelParams, image: np.ndarray, trace: ForwardTrace,
                  e: np.ndarray, F: ProjectionF, backend, cfg: AlgoConfig,
                  ledger: FlopLedger | None = None, hp: Hyperparams | None = None,
                  kernel_freq: np.ndarray | None = None) -> UpdateSet:
    """Update from the standard pass ``trace`` and one modulated pass.

    The ledger is charged for both passes of the sample.
    """
    x_mod = modulated_input(image, e, F, cfg.modulation_sign)
    mod = forward(params, x_mod, backend, hp, kernel_freq)
    upd = _pepita_from_passes(x_mod, trace.act, mod.act, mod.pooled, e, cfg)
    _charge_update(ledger, "pepita", cfg, params)
    return upd


def mempepita_update(params: ModelParams, image: np.ndarray, trace: ForwardTrace,
                     e: np.ndarray, F: ProjectionF, backend, cfg: AlgoConfig,
                     ledger: FlopLedger | None = None, hp: Hyperparams | None = None,
                     kernel_freq: np.ndarray | None = None) -> UpdateSet:
    """As :func:`pepita_update`, but ``trace``'s activations are not reused.

    Only ``e`` survives the standard pass; after the modulated pass the
    standard activations are recomputed with a third pass.
    """
    x_mod = modulated_input(image, e, F, cfg.modulation_sign)
    mod = forward(params, x_mod, backend, hp, kernel_freq)
    h_mod, pooled_mod = mod.act, mod.pooled
    del mod
    recomputed = forward(params, image, backend, hp, kernel_freq)
    upd = _pepita_from_passes(x_mod, recomputed.act, h_mod, pooled_mod, e, cfg)
    _charge_update(ledger, "mempepita", cfg, params)
    return upd


def bp_update(params: ModelParams, image: np.ndarray, trace: ForwardTrace,
              e: np.ndarray, cfg: AlgoConfig | None = None,
              ledger: FlopLedger | None = None) -> UpdateSet:
    """Gradient of the cross-entropy loss using the software model's derivative.

    ``trace`` may come from the device; only its activations, pooling
    routes and ReLU mask are used.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != params.kernels.shape[1:]:
        raise ShapeError(f"image {image.shape} does not match kernels {params.kernels.shape}")
    d_fc = np.outer(trace.pooled.reshape(-1), e)
    d_pooled = (params.fc_weights @ e).reshape(trace.pooled.shape)
    d_act = unpool2(d_pooled, trace.pool_argmax)
    d_z = d_act * (trace.conv_out > 0)
    d_kernels = _cross_correlate(image, d_z)
    _charge_update(ledger, "bp", cfg or AlgoConfig(algorithm="bp"), params)
    return UpdateSet(d_kernels, d_fc, e.copy())


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    params: ModelParams
    adam: AdamState
    projection: ProjectionF | None = None
    ledger: FlopLedger = field(default_factory=FlopLedger)
    epoch: int = 0


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    update_flops: int
    passes: int


def compute_update(state: TrainState, image: np.ndarray, label: int, algo: AlgoConfig,
                   backend, hp: Hyperparams, kernel_freq: np.ndarray | None = None):
    """Forward, loss and the algorithm's UpdateSet for one sample."""
    params = state.params
    trace = forward(params, image, backend, hp, kernel_freq)
    loss, e = loss_and_error(trace, label)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss at epoch {state.epoch}")
    correct = int(np.argmax(trace.probs)) == label
    if algo.algorithm == "bp":
        upd = bp_update(params, backend.input_field(image), trace, e, algo, state.ledger)
    else:
        rule = pepita_update if algo.algorithm == "pepita" else mempepita_update
        upd = rule(params, image, trace, e, state.projection, backend, algo,
                   state.ledger, hp, kernel_freq)
    return upd, loss, correct


def new_train_state(params: ModelParams, algo: AlgoConfig, rng: RngStream) -> TrainState:
    projection = None
    if algo.algorithm != "bp":
        projection = init_projection(params.n, params.C, algo.f_scale, rng)
    return TrainState(params, AdamState.for_params(params), projection)


def train_epoch(state: TrainState, images: np.ndarray, labels: np.ndarray,
                algo: AlgoConfig, backend, hp: Hyperparams, rng: RngStream) -> EpochMetrics:
    """One pass over the data in an rng-shuffled order; updates ``state`` in place."""
    if len(images) == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    if algo.algorithm != "bp" and state.projection is None:
        raise ConfigurationError("PEPITA training needs a projection matrix")
    order = rng.permutation(len(images))
    kernel_freq = kernel_to_frequency(state.params)
    flops_before = state.ledger.update_flops
    total_loss = 0.0
    n_correct = 0
    batch = UpdateSet.zeros_like(state.params)
    in_batch = 0
    for count, idx in enumerate(order, start=1):
        upd, loss, correct = compute_update(state, images[idx], int(labels[idx]),
                                            algo, backend, hp, kernel_freq)
        total_loss += loss
        n_correct += correct
        batch += upd
        in_batch += 1
        if in_batch == hp.batch_size or count == len(order):
            step = batch.scale(1.0 / in_batch)
            if not step.is_finite():
                raise NumericalError("non-finite update")
            adam_step(state.params, state.adam, step, hp)
            # the device only ever sees the kernel through its spectrum
            kernel_freq = kernel_to_frequency(state.params)
            batch = UpdateSet.zeros_like(state.params)
            in_batch = 0
    state.epoch += 1
    return EpochMetrics(epoch=state.epoch, train_loss=total_loss / len(order),
                        train_acc=n_correct / len(order),
                        update_flops=state.ledger.update_flops - flops_before,
                        passes=state.ledger.passes)


def predict(params: ModelParams, images: np.ndarray, backend) -> np.ndarray:
    kernel_freq = kernel_to_frequency(params)
    # argmax breaks ties toward the lowest class index
    return np.array([int(np.argmax(forward(params, x, backend, kernel_freq=kernel_freq).logits))
                     for x in images], dtype=np.int64)


def evaluate(params: ModelParams, images: np.ndarray, labels: np.ndarray, backend) -> float:
    """Fraction of samples whose top class matches the label."""
    if len(images) == 0:
        raise ConfigurationError("cannot evaluate an empty dataset")
    return float(np.mean(predict(params, images, backend) == np.asarray(labels)))
