"""Pitch-class features: STFT chroma, constant-Q transform, and CENS."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dsp
from .audio_io import AudioClip
from .features import FeatureMatrix, FeatureParams

# C0 in equal temperament anchored at A4 = 440 Hz.
PITCH_CLASS_REF_HZ = 16.3516
PITCH_CLASS_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

DEFAULT_CQT_FMIN_HZ = 32.7032  # C1
DEFAULT_CQT_BINS = 84
DEFAULT_BINS_PER_OCTAVE = 12

CENS_THRESHOLDS = (0.05, 0.1, 0.2, 0.4)
DEFAULT_CENS_SMOOTH = 41
DEFAULT_CENS_DOWNSAMPLE = 10

NORM_STATES = ("raw", "l1", "cens")


class AtomLengthError(ValueError):
    """The longest analysis atom does not fit inside the signal."""


@dataclass
class PitchClassProfile:
    """12-row pitch-class matrix, rows ordered C, C#, D, ..., B."""

    values: np.ndarray
    norm_state: str = "raw"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != 12:
            raise ValueError("pitch-class profile must have exactly 12 rows")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("pitch-class values must be finite and nonnegative")
        if self.norm_state not in NORM_STATES:
            raise ValueError(f"unknown norm state {self.norm_state!r}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def pitch_class_of_hz(freq_hz):
    """Nearest pitch class 0..11 of a frequency, C = 0. Vectorized."""
    f = np.asarray(freq_hz, dtype=np.float64)
    if (f <= 0).any():
        raise ValueError("frequencies must be positive")
    cls = np.rint(12.0 * np.log2(f / PITCH_CLASS_REF_HZ)).astype(np.int64) % 12
    return cls if cls.ndim else int(cls)


def _max_normalize_frames(values: np.ndarray) -> np.ndarray:
    peaks = values.max(axis=0)
    scale = np.where(peaks > 0, peaks, 1.0)
    return values / scale


def chroma_stft(
    clip: AudioClip,
    n_fft: int = dsp.DEFAULT_N_FFT,
    hop: int = dsp.DEFAULT_HOP,
) -> FeatureMatrix:
    """STFT-power chromagram, shape (12, n_frames), frames max-normalized.

    Every positive-frequency FFT bin contributes its power to the pitch
    class nearest its center frequency; octave information collapses by
    the mod-12 fold.
    """
    sr = clip.sample_rate_hz
    spectra = dsp.stft(clip.samples, n_fft=n_fft, hop=hop)
    power = np.abs(spectra) ** 2
    n_bins = power.shape[0]
    freqs = np.arange(1, n_bins) * sr / n_fft
    classes = pitch_class_of_hz(freqs)
    fold = np.zeros((12, n_bins))
    fold[classes, np.arange(1, n_bins)] = 1.0  # DC carries no pitch
    values = _max_normalize_frames(fold @ power)
    return FeatureMatrix(values, "chroma_stft", FeatureParams(sr, n_fft, hop))


@dataclass
class CqtKernelBank:
    """Per-bin time-domain analysis atoms for a constant-Q transform.

    Bandwidth of bin k is the spacing to the next bin center, so the
    ratio center / bandwidth is the same q_factor for every bin.
    """

    center_freqs_hz: np.ndarray
    q_factor: float
    kernels: list
    bins_per_octave: int
    fmin_hz: float
    sample_rate_hz: int

    def __post_init__(self):
        if (np.diff(self.center_freqs_hz) <= 0).any():
            raise ValueError("center frequencies must be strictly increasing")
        lengths = self.atom_lengths
        if (np.diff(lengths) > 0).any():
            raise ValueError("atom lengths must not increase with frequency")

    @property
    def n_bins(self) -> int:
        return len(self.kernels)

    @property
    def bandwidths_hz(self) -> np.ndarray:
        return self.center_freqs_hz * (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    @property
    def atom_lengths(self) -> np.ndarray:
        return np.array([len(k) for k in self.kernels])


def build_cqt_kernels(
    sample_rate_hz: int,
    fmin_hz: float = DEFAULT_CQT_FMIN_HZ,
    n_bins: int = DEFAULT_CQT_BINS,
    bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
) -> CqtKernelBank:
    """Hann-windowed complex exponentials, one per log-spaced frequency bin.

    Atom k has length ceil(q * sr / f_k) so every bin spans the same
    number of cycles; time resolution improves with frequency.
    """
    if fmin_hz <= 0 or n_bins < 1 or bins_per_octave < 1:
        raise ValueError("fmin, n_bins and bins_per_octave must be positive")
    if fmin_hz * 2.0 ** (n_bins / bins_per_octave) > sample_rate_hz / 2:
        raise ValueError("bin range exceeds the Nyquist frequency")
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    freqs = fmin_hz * 2.0 ** (np.arange(n_bins) / bins_per_octave)
    kernels = []
    for f in freqs:
        length = math.ceil(q * sample_rate_hz / f)
        t = (np.arange(length) - length // 2) / sample_rate_hz
        kernels.append(dsp.hann_symmetric(length) * np.exp(2j * np.pi * f * t))
    return CqtKernelBank(
        freqs, q, kernels, bins_per_octave, fmin_hz, sample_rate_hz
    )


def cqt(
    clip: AudioClip,
    fmin_hz: float = DEFAULT_CQT_FMIN_HZ,
    n_bins: int = DEFAULT_CQT_BINS,
    bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
    hop: int = dsp.DEFAULT_HOP,
) -> np.ndarray:
    """Constant-Q transform, complex matrix (n_bins, n_frames).

    Frame j is centered on sample j * hop; each entry is the inner
    product of the signal (zero-padded at the edges) with that bin's
    atom. Frame count matches the STFT so the features align in time.
    """
    bank = build_cqt_kernels(clip.sample_rate_hz, fmin_hz, n_bins, bins_per_octave)
    x = clip.samples
    longest = int(bank.atom_lengths[0])
    if longest > x.shape[0]:
        raise AtomLengthError(
            f"longest atom ({longest} samples) exceeds the {x.shape[0]}-sample signal;"
            " raise fmin or use a longer clip"
        )
    n_frames = 1 + x.shape[0] // hop
    pad = longest // 2 + 1
    xp = np.pad(x, pad)
    centers = np.arange(n_frames) * hop + pad
    out = np.empty((n_bins, n_frames), dtype=np.complex128)
    for k, atom in enumerate(bank.kernels):
        length = len(atom)
        idx = centers[None, :] + (np.arange(length) - length // 2)[:, None]
        out[k] = np.conj(atom) @ xp[idx]
    return out


def fold_to_pitch_classes(magnitudes: np.ndarray, bins_per_octave: int = 12) -> np.ndarray:
    """Collapse an (n_bins, n_frames) log-frequency matrix across octaves."""
    if magnitudes.shape[0] % bins_per_octave:
        raise ValueError("bin count must be a whole number of octaves")
    out = np.zeros((12, magnitudes.shape[1]))
    for c in range(12):
        out[c] = magnitudes[c::bins_per_octave].sum(axis=0)
    return out


def cqt_pitch_profile(clip: AudioClip, hop: int = dsp.DEFAULT_HOP) -> PitchClassProfile:
    """Raw (unnormalized) pitch-class profile from folded CQT magnitudes."""
    mags = np.abs(cqt(clip, hop=hop))
    return PitchClassProfile(fold_to_pitch_classes(mags), "raw")


def chroma_cqt(clip: AudioClip, hop: int = dsp.DEFAULT_HOP) -> FeatureMatrix:
    """CQT chromagram, shape (12, n_frames), frames max-normalized."""
    profile = cqt_pitch_profile(clip, hop=hop)
    values = _max_normalize_frames(profile.values)
    params = FeatureParams(clip.sample_rate_hz, dsp.DEFAULT_N_FFT, hop)
    return FeatureMatrix(values, "chroma_cqt", params)


def quantize_cens(values: np.ndarray) -> np.ndarray:
    """Map L1-normalized chroma onto codes 0..4 via fixed thresholds."""
    codes = np.zeros(values.shape)
    for t in CENS_THRESHOLDS:
        codes += values > t
    return codes


def cens(
    chroma: PitchClassProfile,
    smooth_len: int = DEFAULT_CENS_SMOOTH,
    downsample: int = DEFAULT_CENS_DOWNSAMPLE,
    params: FeatureParams | None = None,
) -> FeatureMatrix:
    """Chroma energy normalized statistics from a raw pitch-class profile.

    Pipeline: per-frame L1 normalization, threshold quantization, Hann
    smoothing along time, temporal downsampling, then per-frame unit
    Euclidean norm. Zero frames stay zero at both normalization steps.
    """
    if not isinstance(chroma, PitchClassProfile):
        raise TypeError("cens expects a PitchClassProfile")
    if smooth_len < 1 or downsample < 1:
        raise ValueError("smooth_len and downsample must be positive")
    v = chroma.values
    l1 = v.sum(axis=0)
    v = v / np.where(l1 > 0, l1, 1.0)
    codes = quantize_cens(v)
    window = dsp.hann_symmetric(smooth_len)
    smoothed = np.stack([np.convolve(row, window, mode="same") for row in codes])
    kept = smoothed[:, ::downsample]
    l2 = np.linalg.norm(kept, axis=0)
    out = kept / np.where(l2 > 0, l2, 1.0)
    if params is None:
        params = FeatureParams(22050, dsp.DEFAULT_N_FFT, dsp.DEFAULT_HOP)
    return FeatureMatrix(out, "chroma_cens", params)


def chroma_cens(
    clip: AudioClip,
    smooth_len: int = DEFAULT_CENS_SMOOTH,
    downsample: int = 1,
    hop: int = dsp.DEFAULT_HOP,
) -> FeatureMatrix:
    """CENS chromagram of a clip, built on the CQT pitch-class profile.

    Downsampling defaults to 1 here so all chroma variants share one
    time axis; pass the classic factor 10 for compact sequence matching.
    """
    profile = cqt_pitch_profile(clip, hop=hop)
    params = FeatureParams(clip.sample_rate_hz, dsp.DEFAULT_N_FFT, hop)
    return cens(profile, smooth_len, downsample, params)
