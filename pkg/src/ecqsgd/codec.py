"""Bit-exact serialization of quantized gradients and cost accounting.

Wire layout for a quantized vector (magic ``ECQ1``), all integers
little-endian:

    magic        4 bytes  b"ECQ1"
    dim          u32
    s            u8
    norm_kind    u8       0 = l2, 1 = l-inf
    bucket_size  u32
    per bucket:  scale    IEEE-754 binary32
                 codes    dim_bucket fields of r = ceil(log2(2s+1)) bits,
                          value code + s, packed LSB-first, zero-padded to a
                          byte boundary per bucket

Two sibling formats cover the baselines: ``ECB1`` for one-bit sign messages
(two binary32 reconstruction values per bucket, one bit per entry) and
``ECF1`` for uncompressed binary32 gradients.

Cost accounting is separate from the wire bytes: ``plain_cost_bits`` is the
idealized 32 + dim_bucket * r bits per bucket (no padding), and
``entropy_cost_bits`` the analytic bound sum_k d_k * log2(dim / d_k) over
level occupancies plus the scale overhead. The wire size is a few padding
bits larger than plain cost by design.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .quantizer import (
    NormKind,
    OneBitVector,
    QuantScheme,
    QuantizedVector,
    bucket_slices,
    dequantize,
    dequantize_onebit,
)

__all__ = [
    "CodecError",
    "BadMagicError",
    "TruncatedPayloadError",
    "CodeRangeError",
    "UnsupportedSchemeError",
    "CostReport",
    "encode",
    "decode",
    "encode_onebit",
    "decode_onebit",
    "encode_fp32",
    "decode_fp32",
    "decode_any",
    "payload_dequantize",
    "payload_plain_bits",
    "payload_entropy_bits",
    "plain_cost_bits",
    "entropy_cost_bits",
    "onebit_plain_cost_bits",
    "wire_size_bytes",
    "cost_report",
]

MAGIC_QUANT = b"ECQ1"
MAGIC_ONEBIT = b"ECB1"
MAGIC_FP32 = b"ECF1"

_HEADER = struct.Struct("<4sIBBI")


class CodecError(ValueError):
    """Base class for malformed or unsupported wire data."""


class BadMagicError(CodecError):
    pass


class TruncatedPayloadError(CodecError):
    pass


class CodeRangeError(CodecError):
    pass


class UnsupportedSchemeError(CodecError):
    pass


@dataclass(frozen=True)
class CostReport:
    """Communication cost of one message under both accounting rules."""

    plain_bits: int
    entropy_bits: float
    ratio_vs_fp32: float


def _pack_fields(values: np.ndarray, width: int) -> bytes:
    """Pack unsigned ints of ``width`` bits each, LSB-first, byte-padded."""
    bits = (values[:, None] >> np.arange(width)) & 1
    return np.packbits(bits.astype(np.uint8).ravel(), bitorder="little").tobytes()


def _unpack_fields(buf: bytes, count: int, width: int) -> np.ndarray:
    raw = np.frombuffer(buf, dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little", count=count * width)
    return bits.reshape(count, width) @ (1 << np.arange(width, dtype=np.int64))


def encode(qv: QuantizedVector) -> bytes:
    """Serialize a quantized vector; scales are materialized as binary32."""
    s = qv.scheme.s
    if s > 127:
        raise UnsupportedSchemeError(f"s = {s} exceeds the 8-bit wire field (max 127)")
    r = qv.scheme.code_width_r
    out = bytearray(
        _HEADER.pack(MAGIC_QUANT, qv.dim, s, qv.scheme.norm_kind.value, qv.scheme.bucket_size)
    )
    for k, sl in enumerate(bucket_slices(qv.dim, qv.scheme.bucket_size)):
        scale32 = np.float32(qv.scales[k])
        if scale32 == 0.0 and qv.scales[k] != 0.0:
            raise UnsupportedSchemeError("bucket scale underflows binary32")
        if not np.isfinite(scale32):
            raise UnsupportedSchemeError("bucket scale overflows binary32")
        out += struct.pack("<f", scale32)
        out += _pack_fields(qv.codes[sl].astype(np.int64) + s, r)
    return bytes(out)


def decode(msg: bytes) -> QuantizedVector:
    """Exact inverse of :func:`encode` (scales at binary32 precision)."""
    if len(msg) < _HEADER.size:
        raise TruncatedPayloadError("truncated payload: header incomplete")
    magic, dim, s, norm_flag, bucket_size = _HEADER.unpack_from(msg)
    if magic != MAGIC_QUANT:
        raise BadMagicError(f"bad magic {magic!r}")
    if s < 1 or bucket_size < 1:
        raise CodecError("invalid header fields")
    try:
        norm_kind = NormKind(norm_flag)
    except ValueError:
        raise CodecError(f"unknown norm flag {norm_flag}") from None
    scheme = QuantScheme(s=s, norm_kind=norm_kind, bucket_size=bucket_size)
    r = scheme.code_width_r
    scales = np.zeros(scheme.num_buckets(dim))
    codes = np.zeros(dim, dtype=np.int32)
    pos = _HEADER.size
    for k, sl in enumerate(bucket_slices(dim, bucket_size)):
        n_b = sl.stop - sl.start
        packed_len = -(-n_b * r // 8)
        if pos + 4 + packed_len > len(msg):
            raise TruncatedPayloadError("truncated payload: bucket incomplete")
        scales[k] = struct.unpack_from("<f", msg, pos)[0]
        pos += 4
        raw = _unpack_fields(msg[pos : pos + packed_len], n_b, r)
        pos += packed_len
        if np.any(raw > 2 * s):
            raise CodeRangeError(f"code value exceeds 2s = {2 * s}")
        codes[sl] = raw.astype(np.int32) - s
    if pos != len(msg):
        raise CodecError("trailing bytes after payload")
    return QuantizedVector(dim=dim, scheme=scheme, scales=scales, codes=codes)


def encode_onebit(ob: OneBitVector) -> bytes:
    out = bytearray(_HEADER.pack(MAGIC_ONEBIT, ob.dim, 1, 0, ob.bucket_size))
    for k, sl in enumerate(bucket_slices(ob.dim, ob.bucket_size)):
        out += struct.pack("<ff", np.float32(ob.pos_values[k]), np.float32(ob.neg_values[k]))
        out += np.packbits(ob.bits[sl], bitorder="little").tobytes()
    return bytes(out)


def decode_onebit(msg: bytes) -> OneBitVector:
    if len(msg) < _HEADER.size:
        raise TruncatedPayloadError("truncated payload: header incomplete")
    magic, dim, _, _, bucket_size = _HEADER.unpack_from(msg)
    if magic != MAGIC_ONEBIT:
        raise BadMagicError(f"bad magic {magic!r}")
    slices = bucket_slices(dim, bucket_size)
    pos_values = np.zeros(len(slices))
    neg_values = np.zeros(len(slices))
    bits = np.zeros(dim, dtype=np.uint8)
    pos = _HEADER.size
    for k, sl in enumerate(slices):
        n_b = sl.stop - sl.start
        packed_len = -(-n_b // 8)
        if pos + 8 + packed_len > len(msg):
            raise TruncatedPayloadError("truncated payload: bucket incomplete")
        pos_values[k], neg_values[k] = struct.unpack_from("<ff", msg, pos)
        pos += 8
        raw = np.frombuffer(msg[pos : pos + packed_len], dtype=np.uint8)
        bits[sl] = np.unpackbits(raw, bitorder="little", count=n_b)
        pos += packed_len
    if pos != len(msg):
        raise CodecError("trailing bytes after payload")
    return OneBitVector(
        dim=dim, bucket_size=bucket_size, pos_values=pos_values,
        neg_values=neg_values, bits=bits,
    )


def encode_fp32(v: np.ndarray) -> bytes:
    v = np.asarray(v, dtype=np.float64)
    out = bytearray(_HEADER.pack(MAGIC_FP32, v.shape[0], 0, 0, 0))
    out += v.astype("<f4").tobytes()
    return bytes(out)


def decode_fp32(msg: bytes) -> np.ndarray:
    if len(msg) < _HEADER.size:
        raise TruncatedPayloadError("truncated payload: header incomplete")
    magic, dim, _, _, _ = _HEADER.unpack_from(msg)
    if magic != MAGIC_FP32:
        raise BadMagicError(f"bad magic {magic!r}")
    body = msg[_HEADER.size :]
    if len(body) != 4 * dim:
        raise TruncatedPayloadError("truncated payload: body length mismatch")
    return np.frombuffer(body, dtype="<f4").astype(np.float64)


def decode_any(msg: bytes) -> QuantizedVector | OneBitVector | np.ndarray:
    """Dispatch on the magic; returns the decoded payload object."""
    if len(msg) < 4:
        raise TruncatedPayloadError("truncated payload: no magic")
    magic = msg[:4]
    if magic == MAGIC_QUANT:
        return decode(msg)
    if magic == MAGIC_ONEBIT:
        return decode_onebit(msg)
    if magic == MAGIC_FP32:
        return decode_fp32(msg)
    raise BadMagicError(f"bad magic {magic!r}")


def payload_dequantize(payload: QuantizedVector | OneBitVector | np.ndarray) -> np.ndarray:
    if isinstance(payload, QuantizedVector):
        return dequantize(payload)
    if isinstance(payload, OneBitVector):
        return dequantize_onebit(payload)
    return payload


def plain_cost_bits(dim: int, scheme: QuantScheme) -> int:
    """Idealized cost: 32 bits for the scale plus r bits per entry, per bucket."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    r = scheme.code_width_r
    return 32 * scheme.num_buckets(dim) + dim * r


def onebit_plain_cost_bits(dim: int, bucket_size: int) -> int:
    n_buckets = -(-dim // bucket_size)
    return 64 * n_buckets + dim


def entropy_cost_bits(qv: QuantizedVector) -> float:
    """Analytic entropy-coded length bound plus 32 bits per bucket scale."""
    d = qv.dim
    counts = np.bincount(qv.codes + qv.scheme.s, minlength=2 * qv.scheme.s + 1)
    nonzero = counts[counts > 0].astype(np.float64)
    code_bits = float(np.sum(nonzero * np.log2(d / nonzero)))
    return code_bits + 32.0 * qv.scheme.num_buckets(d)


def onebit_entropy_cost_bits(ob: OneBitVector) -> float:
    d = ob.dim
    ones = int(ob.bits.sum())
    counts = np.array([d - ones, ones], dtype=np.float64)
    nonzero = counts[counts > 0]
    code_bits = float(np.sum(nonzero * np.log2(d / nonzero)))
    return code_bits + 64.0 * (-(-d // ob.bucket_size))


def payload_plain_bits(payload: QuantizedVector | OneBitVector | np.ndarray) -> int:
    if isinstance(payload, QuantizedVector):
        return plain_cost_bits(payload.dim, payload.scheme)
    if isinstance(payload, OneBitVector):
        return onebit_plain_cost_bits(payload.dim, payload.bucket_size)
    return 32 * payload.shape[0]


def payload_entropy_bits(payload: QuantizedVector | OneBitVector | np.ndarray) -> float:
    if isinstance(payload, QuantizedVector):
        return entropy_cost_bits(payload)
    if isinstance(payload, OneBitVector):
        return onebit_entropy_cost_bits(payload)
    return 32.0 * payload.shape[0]


def wire_size_bytes(dim: int, scheme: QuantScheme) -> int:
    """Actual encoded size, including header and per-bucket byte padding."""
    r = scheme.code_width_r
    total = _HEADER.size
    for sl in bucket_slices(dim, scheme.bucket_size):
        total += 4 + (-(-(sl.stop - sl.start) * r // 8))
    return total


def cost_report(qv: QuantizedVector) -> CostReport:
    plain = plain_cost_bits(qv.dim, qv.scheme)
    return CostReport(
        plain_bits=plain,
        entropy_bits=entropy_cost_bits(qv),
        ratio_vs_fp32=32.0 * qv.dim / plain,
    )
