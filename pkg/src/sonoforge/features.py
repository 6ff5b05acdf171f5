"""Shared feature-matrix types produced by every extractor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEATURE_KINDS = (
    "mel",
    "mfcc",
    "tempogram",
    "chroma_stft",
    "chroma_cqt",
    "chroma_cens",
)


@dataclass(frozen=True)
class FeatureParams:
    """Extraction parameters carried alongside a feature matrix."""

    sample_rate_hz: int
    n_fft: int
    hop: int


@dataclass
class FeatureMatrix:
    """2-D feature image: rows are feature bins, columns are time frames."""

    values: np.ndarray
    kind: str
    params: FeatureParams

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError("feature values must be a nonempty 2-D matrix")
        if not np.isfinite(self.values).all():
            raise ValueError("feature values must be finite")

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]
