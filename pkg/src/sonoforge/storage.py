"""Binary persistence for feature matrices and grayscale renderings.

FTR1 layout, all integers little-endian:

    bytes 0..3    magic b"FTR1"
    byte  4       kind code (1-based index into FEATURE_KINDS)
    bytes 5..24   rows, cols, sample_rate_hz, n_fft, hop as uint32
    bytes 25..    rows * cols float32 values, row-major

The payload round-trips bit-exactly. Renderings are binary PGM (P5)
with frequency increasing upward, so image row 0 is the highest bin.
"""
from __future__ import annotations

import struct

import numpy as np

from .features import FEATURE_KINDS, FeatureMatrix, FeatureParams

FEATURE_MAGIC = b"FTR1"
HEADER_LEN = 25  # magic + kind byte + five uint32 fields
KIND_CODES = {kind: i + 1 for i, kind in enumerate(FEATURE_KINDS)}
_KIND_OF_CODE = {code: kind for kind, code in KIND_CODES.items()}


class FeatureFormatError(ValueError):
    """File is not a readable FTR1 feature container."""


def save_feature(feature: FeatureMatrix, path) -> None:
    """Write a feature matrix with its kind and extraction parameters."""
    rows, cols = feature.values.shape
    header = FEATURE_MAGIC + struct.pack(
        "<BIIIII",
        KIND_CODES[feature.kind],
        rows,
        cols,
        feature.params.sample_rate_hz,
        feature.params.n_fft,
        feature.params.hop,
    )
    payload = np.ascontiguousarray(feature.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_feature(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic, not a feature file")
    if len(raw) < HEADER_LEN:
        raise FeatureFormatError(f"{path}: truncated header")
    code, rows, cols, sample_rate, n_fft, hop = struct.unpack_from("<BIIIII", raw, 4)
    kind = _KIND_OF_CODE.get(code)
    if kind is None:
        raise FeatureFormatError(f"{path}: unknown kind code {code}")
    expect = HEADER_LEN + rows * cols * 4
    if len(raw) != expect:
        raise FeatureFormatError(
            f"{path}: payload is {len(raw) - HEADER_LEN} bytes, want {rows * cols * 4}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=HEADER_LEN).reshape(rows, cols)
    return FeatureMatrix(
        values.copy(), kind, FeatureParams(sample_rate, n_fft, hop)
    )


def render_pgm(feature: FeatureMatrix, path) -> None:
    """Render as 8-bit binary PGM, min-max normalized, low bins at the bottom."""
    values = np.asarray(feature.values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi > lo:
        pixels = np.rint((values - lo) / (hi - lo) * 255.0)
    else:
        pixels = np.full(values.shape, 128.0)
    image = pixels[::-1].astype(np.uint8)  # row 0 of the file = highest bin
    rows, cols = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
