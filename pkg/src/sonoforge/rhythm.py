"""Onset novelty curves and cyclic tempograms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dsp, mel
from .audio_io import AudioClip
from .features import FeatureMatrix, FeatureParams

DEFAULT_TEMPOGRAM_WIN = 384
DEFAULT_REF_TEMPO_BPM = 60.0
DEFAULT_TEMPO_BINS = 64


@dataclass
class NoveltyCurve:
    """Per-frame onset strength, sampled at sr / hop frames per second."""

    values: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("novelty curve must be a nonempty vector")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("novelty values must be finite and nonnegative")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame rate must be positive")

    @property
    def n_frames(self) -> int:
        return self.values.size


@dataclass
class CyclicTempogram:
    """Octave-folded tempo salience, rows spanning [ref, 2*ref) BPM."""

    values: np.ndarray
    ref_tempo_bpm: float
    n_tempo_bins: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.n_tempo_bins:
            raise ValueError("row count must equal n_tempo_bins")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("tempogram values must be finite and nonnegative")
        if self.ref_tempo_bpm <= 0 or self.n_tempo_bins < 1:
            raise ValueError("reference tempo and bin count must be positive")

    @property
    def bin_tempos_bpm(self) -> np.ndarray:
        exponents = np.arange(self.n_tempo_bins) / self.n_tempo_bins
        return self.ref_tempo_bpm * 2.0**exponents


def onset_novelty(
    clip: AudioClip,
    n_fft: int = dsp.DEFAULT_N_FFT,
    hop: int = dsp.DEFAULT_HOP,
) -> NoveltyCurve:
    """Spectral-flux novelty: summed positive change of the dB mel bands.

    The first frame has no predecessor and is fixed at 0.
    """
    mel_db = mel.mel_spectrogram(clip, n_fft=n_fft, hop=hop).values
    flux = np.maximum(np.diff(mel_db, axis=1), 0.0).sum(axis=0)
    values = np.concatenate([[0.0], flux])
    return NoveltyCurve(values, clip.sample_rate_hz / hop)


def autocorrelation_tempogram(
    nov: NoveltyCurve, win_len: int = DEFAULT_TEMPOGRAM_WIN
) -> np.ndarray:
    """Local windowed autocorrelation, shape (win_len, n_frames).

    Column j autocorrelates the Hann-windowed novelty segment centered
    on frame j (zero-padded past the ends) over lags 0 .. win_len - 1,
    then divides by its lag-0 value so every live column peaks at 1.
    """
    if win_len < 2:
        raise ValueError("win_len must be at least 2")
    v = nov.values
    pad = win_len // 2
    vp = np.pad(v, pad)
    window = dsp.make_window(dsp.WindowSpec("hann", win_len))
    out = np.empty((win_len, v.size))
    for j in range(v.size):
        seg = vp[j : j + win_len] * window
        out[:, j] = np.correlate(seg, seg, mode="full")[win_len - 1 :]
    zero = out[0] <= 0.0
    out[:, zero] = 0.0
    out[:, ~zero] /= out[0, ~zero]
    return out


def cyclic_fold_weights(
    win_len: int,
    frame_rate_hz: float,
    ref_tempo_bpm: float = DEFAULT_REF_TEMPO_BPM,
    n_tempo_bins: int = DEFAULT_TEMPO_BINS,
) -> np.ndarray:
    """Matrix mapping autocorrelation lags onto cyclic tempo bins.

    Bin b sits at ref * 2^(b / n_bins) BPM. Every octave shift of that
    tempo that lands inside the representable lag range contributes via
    linear interpolation on the log-tempo axis, and the contributions
    sum, folding octaves together.
    """
    lags = np.arange(1, win_len)
    src = np.log2(60.0 * frame_rate_hz / lags)[::-1]  # ascending log-tempo
    src_lag = lags[::-1]
    base = math.log2(ref_tempo_bpm) + np.arange(n_tempo_bins) / n_tempo_bins
    weights = np.zeros((n_tempo_bins, win_len))
    o_lo = math.floor(src[0] - base.max())
    o_hi = math.ceil(src[-1] - base.min())
    for o in range(o_lo, o_hi + 1):
        t = base + o
        inside = (t >= src[0]) & (t <= src[-1])
        if not inside.any():
            continue
        pos = np.searchsorted(src, t[inside], side="right") - 1
        pos = np.clip(pos, 0, src.size - 2)
        frac = (t[inside] - src[pos]) / (src[pos + 1] - src[pos])
        rows = np.flatnonzero(inside)
        np.add.at(weights, (rows, src_lag[pos]), 1.0 - frac)
        np.add.at(weights, (rows, src_lag[pos + 1]), frac)
    return weights


def cyclic_tempogram(
    clip: AudioClip,
    ref_tempo_bpm: float = DEFAULT_REF_TEMPO_BPM,
    n_tempo_bins: int = DEFAULT_TEMPO_BINS,
    win_len: int = DEFAULT_TEMPOGRAM_WIN,
    n_fft: int = dsp.DEFAULT_N_FFT,
    hop: int = dsp.DEFAULT_HOP,
) -> FeatureMatrix:
    """Octave-folded tempogram image, shape (n_tempo_bins, n_frames)."""
    nov = onset_novelty(clip, n_fft=n_fft, hop=hop)
    acorr = autocorrelation_tempogram(nov, win_len)
    weights = cyclic_fold_weights(
        win_len, nov.frame_rate_hz, ref_tempo_bpm, n_tempo_bins
    )
    folded = CyclicTempogram(weights @ acorr, ref_tempo_bpm, n_tempo_bins)
    params = FeatureParams(clip.sample_rate_hz, n_fft, hop)
    return FeatureMatrix(folded.values, "tempogram", params)
