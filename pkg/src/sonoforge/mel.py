"""Mel filterbanks, mel-scaled spectrograms, and MFCCs."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import dsp
from .audio_io import AudioClip
from .features import FeatureMatrix, FeatureParams

DEFAULT_N_MELS = 128
DEFAULT_N_MFCC = 40

# Perceptual scale: linear below 1 kHz, logarithmic above.
_BREAK_HZ = 1000.0
_BREAK_MEL = 15.0  # 3 * 1000 / 200
_SLOPE = 3.0 / 200.0  # mel per Hz on the linear branch
_LOGSTEP = math.log(6.4) / 27.0  # log growth rate above the break


class DegenerateFilterbankError(ValueError):
    """A filter row received no FFT bins (n_mels too large for n_fft)."""


def hz_to_mel(f):
    """Frequency in Hz to mel. Accepts scalars or arrays, f >= 0."""
    f = np.asarray(f, dtype=np.float64)
    if (f < 0).any():
        raise ValueError("frequencies must be nonnegative")
    out = np.where(
        f <= _BREAK_HZ,
        _SLOPE * f,
        _BREAK_MEL + np.log(np.maximum(f, _BREAK_HZ) / _BREAK_HZ) / _LOGSTEP,
    )
    return out if out.ndim else float(out)


def mel_to_hz(m):
    """Exact inverse of :func:`hz_to_mel`."""
    m = np.asarray(m, dtype=np.float64)
    if (m < 0).any():
        raise ValueError("mel values must be nonnegative")
    out = np.where(
        m <= _BREAK_MEL,
        m / _SLOPE,
        _BREAK_HZ * np.exp(_LOGSTEP * (np.maximum(m, _BREAK_MEL) - _BREAK_MEL)),
    )
    return out if out.ndim else float(out)


@dataclass
class MelFilterBank:
    """Triangular filters mapping FFT bins onto mel bands.

    ``break_freqs_hz`` holds the n_mels + 2 triangle breakpoints; filter i
    rises over (i, i+1) and falls over (i+1, i+2), so its peak sits at
    ``break_freqs_hz[i + 1]``.
    """

    weights: np.ndarray
    n_mels: int
    fmin_hz: float
    fmax_hz: float
    sample_rate_hz: int
    n_fft: int
    break_freqs_hz: np.ndarray

    @property
    def peak_freqs_hz(self) -> np.ndarray:
        return self.break_freqs_hz[1:-1]


def _bin_mel_widths(sr: int, n_fft: int) -> np.ndarray:
    """Mel-scale width of each FFT bin, from bin-edge frequencies."""
    df = sr / n_fft
    centers = np.arange(n_fft // 2 + 1) * df
    lo = hz_to_mel(np.maximum(centers - df / 2, 0.0))
    hi = hz_to_mel(centers + df / 2)
    return hi - lo


def build_mel_filterbank(
    sample_rate_hz: int,
    n_fft: int,
    n_mels: int = DEFAULT_N_MELS,
    fmin_hz: float = 0.0,
    fmax_hz: float | None = None,
) -> MelFilterBank:
    """Construct an area-normalized triangular mel filterbank.

    Breakpoints are equally spaced on the mel axis between fmin and fmax.
    Each row is scaled so the summed weight-times-mel-bin-width is 1,
    making per-band energies comparable across the bank.
    """
    if fmax_hz is None:
        fmax_hz = sample_rate_hz / 2
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if not 0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2:
        raise ValueError("need 0 <= fmin < fmax <= sr/2")

    mels = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2)
    break_hz = mel_to_hz(mels)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft

    lower = break_hz[:-2, None]
    center = break_hz[1:-1, None]
    upper = break_hz[2:, None]
    if (center <= lower).any() or (upper <= center).any():
        raise DegenerateFilterbankError("coincident breakpoints")
    rising = (bin_freqs - lower) / (center - lower)
    falling = (upper - bin_freqs) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    band_area = weights @ _bin_mel_widths(sample_rate_hz, n_fft)
    if (band_area == 0).any():
        raise DegenerateFilterbankError(
            f"{int((band_area == 0).sum())} of {n_mels} rows have no FFT bins"
        )
    weights /= band_area[:, None]
    return MelFilterBank(
        weights, n_mels, fmin_hz, fmax_hz, sample_rate_hz, n_fft, break_hz
    )


def mel_spectrogram(
    clip: AudioClip,
    n_mels: int = DEFAULT_N_MELS,
    fmin_hz: float = 0.0,
    fmax_hz: float | None = None,
    n_fft: int = dsp.DEFAULT_N_FFT,
    hop: int = dsp.DEFAULT_HOP,
    top_db: float = dsp.DEFAULT_TOP_DB,
) -> FeatureMatrix:
    """Decibel-scaled mel spectrogram, shape (n_mels, n_frames)."""
    sr = clip.sample_rate_hz
    bank = build_mel_filterbank(sr, n_fft, n_mels, fmin_hz, fmax_hz)
    power = dsp.power_spectrogram(
        dsp.stft(clip.samples, n_fft=n_fft, hop=hop),
        n_fft=n_fft,
        hop=hop,
        sample_rate_hz=sr,
    )
    values = dsp.power_to_db(bank.weights @ power.values, top_db=top_db)
    return FeatureMatrix(values, "mel", FeatureParams(sr, n_fft, hop))


@functools.lru_cache(maxsize=8)
def _dct_matrix(n_out: int, n: int) -> np.ndarray:
    """Orthonormal DCT-II analysis matrix, shape (n_out, n)."""
    k = np.arange(n_out)[:, None]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (np.arange(n) + 0.5) * k / n)
    m[0] *= math.sqrt(0.5)
    return m


def dct_ii(x, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II of a vector, keeping the first n_out coefficients."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D input")
    if not 1 <= n_out <= x.size:
        raise ValueError("need 1 <= n_out <= len(x)")
    return _dct_matrix(n_out, x.size) @ x


def mfcc(
    clip: AudioClip,
    n_mfcc: int = DEFAULT_N_MFCC,
    n_mels: int = DEFAULT_N_MELS,
    n_fft: int = dsp.DEFAULT_N_FFT,
    hop: int = dsp.DEFAULT_HOP,
) -> FeatureMatrix:
    """Mel-frequency cepstral coefficients, shape (n_mfcc, n_frames).

    Each frame is the DCT-II of its decibel mel-spectrogram column, which
    decorrelates the band energies into a compact envelope description.
    """
    if n_mfcc > n_mels:
        raise ValueError("n_mfcc cannot exceed n_mels")
    mel_db = mel_spectrogram(clip, n_mels=n_mels, n_fft=n_fft, hop=hop)
    values = _dct_matrix(n_mfcc, n_mels) @ mel_db.values
    return FeatureMatrix(values, "mfcc", mel_db.params)
