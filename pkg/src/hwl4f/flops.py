"""Analytic FLOP and activation-memory accounting for the update rules.

Counting convention: one multiply-add is 2 flops, a lone multiply or add is
1 flop, and a 2-D FFT of an n x n grid costs 5 n^2 log2(n) real flops.
Update counts cover the parameter-update rule only; for BP the error
propagated from downstream layers (dL/dz_hw) is left out, so BP totals are
a lower bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass
class FlopLedger:
    forward_flops: int = 0
    update_flops: int = 0
    fft_flops: int = 0
    pointwise_flops: int = 0
    passes: int = 0
    peak_activation_memory: int = 0  # bytes

    def add(self, *, forward=0, update=0, fft=0, pointwise=0, passes=0, memory=0) -> None:
        if min(forward, update, fft, pointwise, passes, memory) < 0:
            raise ValueError("ledger counters only grow")
        self.forward_flops += int(forward)
        self.update_flops += int(update)
        self.fft_flops += int(fft)
        self.pointwise_flops += int(pointwise)
        self.passes += int(passes)
        self.peak_activation_memory = max(self.peak_activation_memory, int(memory))

    def as_dict(self) -> dict:
        return asdict(self)


def fft2_flops(n: int) -> int:
    return int(round(5 * n * n * math.log2(n)))


def _check_n(n: int) -> None:
    if n < 2 or n % 2:
        raise ValueError(f"grid size must be even and >= 2, got {n}")


def fc_update_flops(n: int, K: int, C: int) -> int:
    """Outer product e * pooled^T plus the bias copy."""
    features = K * (n // 2) ** 2
    return features * C + C


def conv_update_flops(rule: str, n: int, K: int) -> tuple[int, int]:
    """(fft flops, pointwise flops) of the conv-kernel update for K kernels.

    ``pointwise``: difference, product and accumulation, n^2 each.
    ``transform`` (BP and the PEPITA correlation diagnostic): three 2-D FFTs
    plus the conjugate product and real-part extraction.
    """
    if rule == "pointwise":
        return 0, K * 3 * n * n
    if rule == "transform":
        return K * 3 * fft2_flops(n), K * 2 * n * n
    raise ValueError(f"unknown conv update rule {rule!r}")


def forward_digital_flops(n: int, K: int, C: int) -> int:
    """Digital work of one forward pass (the convolution itself is optical).

    ReLU, 3 comparisons per pooling window, FC multiply-adds and softmax.
    """
    m = n // 2
    features = K * m * m
    return K * n * n + 3 * features + 2 * features * C + C + 3 * C


def modulation_flops(n: int, C: int) -> int:
    """F @ e as multiply-adds, then subtract and clamp."""
    return 2 * n * n * C + 2 * n * n


def conv_rule_for(algorithm: str, pepita_conv_rule: str = "pointwise") -> str:
    if algorithm == "bp":
        return "transform"
    if algorithm in ("pepita", "mempepita"):
        return "pointwise" if pepita_conv_rule == "pointwise" else "transform"
    raise ValueError(f"unknown algorithm {algorithm!r}")


def count_flops(algorithm: str, n: int, K: int, C: int,
                pepita_conv_rule: str = "pointwise") -> FlopLedger:
    """Closed-form per-sample counts of one update; nothing is executed.

    PEPITA (pointwise): K * 3 n^2 + FC terms.
    BP:                 K * (3 FFT2(n) + 2 n^2) + FC terms.
    """
    _check_n(n)
    if K < 0 or C < 1:
        raise ValueError("K must be >= 0 and C >= 1")
    rule = conv_rule_for(algorithm, pepita_conv_rule)
    fft, pointwise = conv_update_flops(rule, n, K)
    fc = fc_update_flops(n, K, C)
    passes = {"bp": 1, "pepita": 2, "mempepita": 3}[algorithm]
    forward = passes * forward_digital_flops(n, K, C)
    if algorithm != "bp":
        forward += modulation_flops(n, C)
    return FlopLedger(forward_flops=forward, update_flops=fft + pointwise + fc,
                      fft_flops=fft, pointwise_flops=pointwise + fc, passes=passes,
                      peak_activation_memory=peak_memory(algorithm, n, K, C))


# ---------------------------------------------------------------------------
# Activation memory model
# ---------------------------------------------------------------------------

_F8 = 8


def trace_bytes(n: int, K: int, C: int) -> int:
    """conv_out, act, pooled, pool_argmax (int64), logits, probs."""
    m = n // 2
    return _F8 * (2 * K * n * n + 2 * K * m * m + 2 * C)


def peak_memory(algorithm: str, n: int, K: int, C: int) -> int:
    """Bytes of activations alive at the busiest point of one update.

    BP keeps one trace plus the back-propagated deltas.  PEPITA keeps the
    standard trace while the modulated trace and x_mod are built.  MEMPEPITA
    drops the standard trace once e is known, keeps only h_mod, pooled_mod
    and x_mod, then recomputes the standard trace.
    """
    m = n // 2
    trace = trace_bytes(n, K, C)
    if algorithm == "bp":
        return trace + _F8 * (K * n * n + K * m * m)
    if algorithm == "pepita":
        return 2 * trace + _F8 * n * n
    if algorithm == "mempepita":
        kept_mod = _F8 * (K * n * n + K * m * m + n * n)
        return trace + kept_mod + _F8 * C
    raise ValueError(f"unknown algorithm {algorithm!r}")
