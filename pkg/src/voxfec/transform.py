"""Analysis/synthesis transforms, scalar quantization, and rate control.

The analysis transform is an orthonormal per-frame DCT-II and the synthesis
transform its exact inverse, so frame energy is preserved and the pair
round-trips to floating-point precision. The rate index maps log-linearly
onto the rate-distortion multiplier; the quantizer step follows a
square-root law in the multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .frontend import LatentFrame

LAMBDA_MIN = 0.002
LAMBDA_MAX = 0.07
Q_NUM = 64
STEP_REF = 1.0 / 1024.0


@dataclass(frozen=True)
class RateControl:
    """Quantized rate index and the schedule it indexes into."""

    q_lambda: int
    q_num: int = Q_NUM
    lambda_min: float = LAMBDA_MIN
    lambda_max: float = LAMBDA_MAX

    def __post_init__(self):
        if not 0 <= self.q_lambda < self.q_num:
            raise ValueError(
                f"invalid rate index {self.q_lambda}, expected 0..{self.q_num - 1}"
            )
        if not self.lambda_min < self.lambda_max:
            raise ValueError("lambda_min must be below lambda_max")


@dataclass(frozen=True)
class LatentCode:
    """Transform-domain representation of one frame."""

    coeffs: np.ndarray
    frame_index: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "coeffs", coeffs)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite latent code")


@dataclass(frozen=True)
class QuantizedLatent:
    """Integer symbol vector produced by the scalar quantizer."""

    indices: np.ndarray
    frame_index: int

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))


def lambda_from_q(rc: RateControl) -> float:
    """Rate multiplier for a rate index: log-linear between the endpoints."""
    frac = rc.q_lambda / (rc.q_num - 1)
    return math.exp(
        math.log(rc.lambda_min)
        + frac * (math.log(rc.lambda_max) - math.log(rc.lambda_min))
    )


def step_from_lambda(lam: float) -> float:
    """Quantizer step for a rate multiplier: STEP_REF * sqrt(lam / LAMBDA_MIN)."""
    if lam <= 0:
        raise ValueError(f"non-positive lambda {lam}")
    return STEP_REF * math.sqrt(lam / LAMBDA_MIN)


def analysis(frame: LatentFrame) -> LatentCode:
    """Orthonormal DCT-II of a frame."""
    return LatentCode(scipy.fft.dct(frame.coeffs, type=2, norm="ortho"), frame.frame_index)


def synthesis(code: LatentCode) -> LatentFrame:
    """Inverse orthonormal DCT-II."""
    return LatentFrame(scipy.fft.idct(code.coeffs, type=2, norm="ortho"), code.frame_index)


def quantize(code: LatentCode, step: float) -> QuantizedLatent:
    """Round coefficients to the nearest step multiple, ties away from zero."""
    if step <= 0:
        raise ValueError(f"non-positive step {step}")
    c = code.coeffs
    indices = (np.sign(c) * np.floor(np.abs(c) / step + 0.5)).astype(np.int64)
    return QuantizedLatent(indices, code.frame_index)


def dequantize(yq: QuantizedLatent, step: float) -> LatentCode:
    """Map quantizer indices back to coefficient values."""
    if step <= 0:
        raise ValueError(f"non-positive step {step}")
    return LatentCode(yq.indices.astype(np.float64) * step, yq.frame_index)
