"""Windowing, FFT/STFT and spectrogram scaling shared by all feature extractors.

Frames are laid out as columns throughout: a framed signal is
``(frame_len, n_frames)`` and a spectrogram is ``(n_bins, n_frames)``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

# Analysis defaults shared by every spectral feature: 5 s at 22,050 Hz
# comes out to 216 frames, the fixed input width of the classifier.
DEFAULT_N_FFT = 2048
DEFAULT_HOP = 512

# Floor applied before taking log10 so silence stays finite.
DB_FLOOR_EPS = 1e-10
DEFAULT_TOP_DB = 80.0

WINDOW_KINDS = ("hann", "hamming", "rectangular")


@dataclass(frozen=True)
class WindowSpec:
    """Analysis window: one of 'hann', 'hamming', 'rectangular'."""

    kind: str
    length: int

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("window length must be positive")
        if self.kind != "rectangular" and self.length < 2:
            raise ValueError(f"{self.kind} window needs length >= 2")


def make_window(spec: WindowSpec) -> np.ndarray:
    """Sample the window function (periodic convention, values in [0, 1])."""
    n = np.arange(spec.length)
    if spec.kind == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / spec.length)
    if spec.kind == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / spec.length)
    return np.ones(spec.length)


def hann_symmetric(length: int) -> np.ndarray:
    """Symmetric Hann window, zero at both endpoints.

    Used where a window tapers a finite kernel (filter prototypes,
    smoothing kernels) rather than an analysis frame. Length 1 is the
    identity kernel [1].
    """
    if length < 1:
        raise ValueError("window length must be positive")
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (length - 1))


def frame_signal(samples, frame_len: int, hop: int, center: bool) -> np.ndarray:
    """Slice a signal into overlapping frames, one frame per column.

    With ``center=True`` the signal is reflect-padded by ``frame_len // 2``
    on both ends so frame ``j`` is centered on sample ``j * hop``.
    Returns an array of shape ``(frame_len, n_frames)`` with
    ``n_frames = 1 + (padded_len - frame_len) // hop``.
    """
    if frame_len < 1 or hop < 1:
        raise ValueError("frame_len and hop must be positive")
    x = np.asarray(samples)
    if x.ndim != 1:
        raise ValueError("expected a 1-D signal")
    if center:
        pad = frame_len // 2
        x = np.pad(x, pad, mode="reflect")
    if frame_len > x.shape[0]:
        raise ValueError(
            f"frame_len {frame_len} exceeds (padded) signal length {x.shape[0]}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]
    return frames.T.copy()


@functools.lru_cache(maxsize=2)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp((-2j * np.pi / n) * np.outer(k, k))


def dft_naive(x) -> np.ndarray:
    """Direct O(N^2) evaluation of X[k] = sum_n x[n] exp(-2*pi*i*k*n/N).

    Deliberately independent of :func:`fft`; used as its oracle in tests.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError("expected a nonempty 1-D input")
    return _dft_matrix(x.shape[0]) @ x


@functools.lru_cache(maxsize=16)
def _fft_tables(n: int):
    """Bit-reversal permutation and per-stage twiddles for a size-n transform."""
    rev = np.zeros(n, dtype=np.intp)
    bits = n.bit_length() - 1
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        rev[i] = r
    twiddles = []
    m = 2
    while m <= n:
        twiddles.append(np.exp((-2j * np.pi / m) * np.arange(m // 2)))
        m *= 2
    return rev, tuple(twiddles)


def fft(x) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along axis 0.

    Input length must be a power of two; callers zero-pad if needed.
    A 2-D input transforms every column independently.
    """
    x = np.asarray(x, dtype=np.complex128)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("expected a vector or a matrix of column signals")
    n = x.shape[0]
    if n == 0 or n & (n - 1):
        raise ValueError(f"FFT size must be a power of two, got {n}")
    rev, twiddles = _fft_tables(n)
    out = x[rev].copy()
    m = 2
    for w in twiddles:
        half = m // 2
        view = out.reshape(n // m, m, -1)
        t = view[:, half:] * w[:, None]
        view[:, half:] = view[:, :half] - t
        view[:, :half] += t
        m *= 2
    return out[:, 0] if squeeze else out


def stft(
    samples,
    n_fft: int = DEFAULT_N_FFT,
    hop: int = DEFAULT_HOP,
    window: WindowSpec | None = None,
) -> np.ndarray:
    """Short-time Fourier transform, keeping bins 0 .. n_fft/2.

    Returns a complex matrix of shape ``(n_fft // 2 + 1, n_frames)``.
    Frames are centered (reflect padding) and multiplied by the window
    before the transform.
    """
    if window is None:
        window = WindowSpec("hann", n_fft)
    if window.length != n_fft:
        raise ValueError("window length must equal n_fft")
    frames = frame_signal(samples, n_fft, hop, center=True)
    spectra = fft(frames * make_window(window)[:, None])
    return spectra[: n_fft // 2 + 1]


@dataclass
class Spectrogram:
    """Power or decibel spectrogram with its analysis parameters."""

    values: np.ndarray
    n_fft: int
    hop: int
    sample_rate_hz: int
    scale: str = "power"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.scale not in ("power", "decibel"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.values.ndim != 2:
            raise ValueError("spectrogram values must be 2-D")
        if self.values.shape[0] != self.n_fft // 2 + 1:
            raise ValueError("bin count must equal n_fft // 2 + 1")
        if not np.isfinite(self.values).all():
            raise ValueError("spectrogram values must be finite")
        if self.scale == "power" and (self.values < 0).any():
            raise ValueError("power spectrogram must be nonnegative")


def power_spectrogram(
    spectra: np.ndarray,
    *,
    n_fft: int = DEFAULT_N_FFT,
    hop: int = DEFAULT_HOP,
    sample_rate_hz: int = 22050,
) -> Spectrogram:
    """Squared magnitude of an STFT matrix."""
    s = np.asarray(spectra)
    values = s.real**2 + s.imag**2
    return Spectrogram(values, n_fft, hop, sample_rate_hz, scale="power")


def power_to_db(
    values: np.ndarray, ref: float = 1.0, top_db: float = DEFAULT_TOP_DB
) -> np.ndarray:
    """Decibel scaling of nonnegative power values relative to ``ref``.

    Values are floored at ``DB_FLOOR_EPS`` before the log and clamped
    below at ``max - top_db`` afterwards, so the output spread never
    exceeds ``top_db``.
    """
    if ref <= 0 or top_db <= 0:
        raise ValueError("ref and top_db must be positive")
    db = 10.0 * np.log10(np.maximum(values, DB_FLOOR_EPS) / ref)
    return np.maximum(db, db.max() - top_db)


def amplitude_to_db(
    power: Spectrogram, ref: float = 1.0, top_db: float = DEFAULT_TOP_DB
) -> Spectrogram:
    """Convert a power spectrogram to decibels relative to ``ref``."""
    if power.scale != "power":
        raise ValueError("input must be in power scale")
    db = power_to_db(power.values, ref=ref, top_db=top_db)
    return Spectrogram(db, power.n_fft, power.hop, power.sample_rate_hz, scale="decibel")
