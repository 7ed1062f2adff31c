"""Stochastic uniform gradient quantizers.

The main quantizer maps each entry of a bucket onto the grid
``{-s, ..., -1, 0, 1, ..., s} * (scale / s)`` where ``scale`` is the l2 or
l-inf norm of the bucket. An entry whose magnitude-to-scale ratio falls
between two grid points is rounded stochastically so the result is unbiased.
A one-bit sign quantizer (two reconstruction values per bucket) is provided
as a baseline; stochastic ternary is the ``s=1`` / l-inf special case of the
main quantizer and needs no code of its own.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

__all__ = [
    "NormKind",
    "QuantScheme",
    "QuantizedVector",
    "OneBitVector",
    "scale_of",
    "quantize",
    "dequantize",
    "quantize_onebit",
    "dequantize_onebit",
    "bucket_slices",
]


class NormKind(enum.Enum):
    """Which norm of a bucket acts as its scaling factor."""

    L2 = 0
    LINF = 1


@dataclass(frozen=True)
class QuantScheme:
    """Configuration of the uniform quantizer.

    ``s`` is the number of nonzero levels per sign, ``bucket_size`` the number
    of consecutive entries that share one scale factor. The per-entry code
    width is always ``ceil(log2(2s+1))`` bits and is derived, never stored.
    """

    s: int
    norm_kind: NormKind = NormKind.L2
    bucket_size: int = 2**31 - 1

    def __post_init__(self) -> None:
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.bucket_size < 1:
            raise ValueError("bucket_size must be >= 1")
        if not isinstance(self.norm_kind, NormKind):
            raise TypeError("norm_kind must be a NormKind")

    @property
    def code_width_r(self) -> int:
        return math.ceil(math.log2(2 * self.s + 1))

    def num_buckets(self, dim: int) -> int:
        return -(-dim // self.bucket_size)


def bucket_slices(dim: int, bucket_size: int) -> list[slice]:
    """Consecutive buckets covering [0, dim); the last one may be short."""
    return [slice(lo, min(lo + bucket_size, dim)) for lo in range(0, dim, bucket_size)]


@dataclass
class QuantizedVector:
    """A quantized gradient: integer level codes plus one scale per bucket."""

    dim: int
    scheme: QuantScheme
    scales: np.ndarray  # float, one per bucket
    codes: np.ndarray  # int, in [-s, s], length dim

    def __post_init__(self) -> None:
        self.scales = np.asarray(self.scales, dtype=np.float64)
        self.codes = np.asarray(self.codes, dtype=np.int32)
        if self.codes.shape != (self.dim,):
            raise ValueError("codes length must equal dim")
        if self.scales.shape != (self.scheme.num_buckets(self.dim),):
            raise ValueError("one scale per bucket required")
        if np.any(self.scales < 0) or not np.all(np.isfinite(self.scales)):
            raise ValueError("scales must be finite and nonnegative")
        if np.max(np.abs(self.codes), initial=0) > self.scheme.s:
            raise ValueError("codes must lie in [-s, s]")
        for k, sl in enumerate(bucket_slices(self.dim, self.scheme.bucket_size)):
            if self.scales[k] == 0.0 and np.any(self.codes[sl]):
                raise ValueError("zero-scale bucket must have all-zero codes")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.scheme == other.scheme
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.codes, other.codes)
        )


def scale_of(v: np.ndarray, norm_kind: NormKind) -> float:
    """The scaling factor of a bucket: its l2 or l-inf norm."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite gradient")
    if norm_kind is NormKind.L2:
        return float(np.linalg.norm(v))
    return float(np.max(np.abs(v), initial=0.0))


def quantize(v: np.ndarray, scheme: QuantScheme, rng: RngStream) -> QuantizedVector:
    """Stochastically round ``v`` onto the level grid, bucket by bucket.

    An entry with magnitude ratio u = |v_i| / scale in [l/s, (l+1)/s) maps to
    level l with probability l + 1 - s*u and to l + 1 otherwise, preserving
    the sign. u == 1 maps to level s deterministically, a zero-scale bucket
    emits all-zero codes. Exactly ``dim`` uniform draws are consumed per call
    regardless of the data, so stream positions are schedule-independent.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite gradient")
    dim = v.shape[0]
    draws = rng.uniforms(dim)
    s = scheme.s
    scales = np.zeros(scheme.num_buckets(dim))
    codes = np.zeros(dim, dtype=np.int32)
    for k, sl in enumerate(bucket_slices(dim, scheme.bucket_size)):
        sigma = scale_of(v[sl], scheme.norm_kind)
        scales[k] = sigma
        if sigma == 0.0:
            continue
        # u can exceed 1 by one ulp when the norm rounds down; clamp.
        u = np.minimum(np.abs(v[sl]) / sigma, 1.0)
        lo = np.floor(u * s)
        frac = u * s - lo  # P(round up to lo + 1)
        level = np.minimum(lo + (draws[sl] < frac), s).astype(np.int32)
        codes[sl] = np.sign(v[sl]).astype(np.int32) * level
    return QuantizedVector(dim=dim, scheme=scheme, scales=scales, codes=codes)


def dequantize(qv: QuantizedVector) -> np.ndarray:
    """Reconstruct the real vector: entry i is bucket_scale * code_i / s."""
    sizes = [sl.stop - sl.start for sl in bucket_slices(qv.dim, qv.scheme.bucket_size)]
    per_entry_scale = np.repeat(qv.scales, sizes)
    return per_entry_scale * qv.codes / qv.scheme.s


@dataclass
class OneBitVector:
    """Sign-quantized gradient with per-bucket mean reconstruction values.

    Positive entries reconstruct to the mean of the bucket's positives,
    nonpositive entries to the mean of its nonpositives; an empty sign class
    reconstructs to 0.
    """

    dim: int
    bucket_size: int
    pos_values: np.ndarray  # one per bucket
    neg_values: np.ndarray
    bits: np.ndarray  # uint8, 1 where the entry was positive

    def __post_init__(self) -> None:
        self.pos_values = np.asarray(self.pos_values, dtype=np.float64)
        self.neg_values = np.asarray(self.neg_values, dtype=np.float64)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        n_buckets = -(-self.dim // self.bucket_size)
        if self.pos_values.shape != (n_buckets,) or self.neg_values.shape != (n_buckets,):
            raise ValueError("one reconstruction value pair per bucket required")
        if self.bits.shape != (self.dim,):
            raise ValueError("bits length must equal dim")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OneBitVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.bucket_size == other.bucket_size
            and np.array_equal(self.pos_values, other.pos_values)
            and np.array_equal(self.neg_values, other.neg_values)
            and np.array_equal(self.bits, other.bits)
        )


def quantize_onebit(v: np.ndarray, bucket_size: int) -> OneBitVector:
    """Deterministic sign quantization with per-sign-class mean values."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite gradient")
    dim = v.shape[0]
    slices = bucket_slices(dim, bucket_size)
    pos_values = np.zeros(len(slices))
    neg_values = np.zeros(len(slices))
    bits = (v > 0).astype(np.uint8)
    for k, sl in enumerate(slices):
        chunk = v[sl]
        pos = chunk[chunk > 0]
        nonpos = chunk[chunk <= 0]
        if pos.size:
            pos_values[k] = pos.mean()
        if nonpos.size:
            neg_values[k] = nonpos.mean()
    return OneBitVector(
        dim=dim, bucket_size=bucket_size, pos_values=pos_values,
        neg_values=neg_values, bits=bits,
    )


def dequantize_onebit(ob: OneBitVector) -> np.ndarray:
    slices = bucket_slices(ob.dim, ob.bucket_size)
    out = np.empty(ob.dim)
    for k, sl in enumerate(slices):
        out[sl] = np.where(ob.bits[sl], ob.pos_values[k], ob.neg_values[k])
    return out
