"""WAV ingestion, resampling, and ESC-50-style metadata handling.

Clips are canonicalized to mono float64 in [-1, 1]. All feature extractors
expect :func:`canonicalize` output: 22,050 Hz and exactly 5 seconds.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CANONICAL_RATE = 22050
CANONICAL_DURATION_S = 5.0

N_CLASSES = 50

# Windowed-sinc support, in zero crossings per side of the prototype filter.
_FILTER_HALF_CROSSINGS = 16


class WavFormatError(Exception):
    """Malformed RIFF/WAVE container."""


class UnsupportedWavError(WavFormatError):
    """Well-formed WAV using a codec or layout we do not decode."""


class TruncatedWavError(WavFormatError):
    """Data chunk shorter than its declared size."""


@dataclass
class AudioClip:
    """Mono floating-point signal plus its provenance.

    ``label``/``fold`` are None for clips loaded outside a dataset index.
    """

    samples: np.ndarray
    sample_rate_hz: int
    label: int | None = None
    fold: int | None = None
    source_name: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples must be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.label is not None and not 0 <= self.label < N_CLASSES:
            raise ValueError(f"label {self.label} outside 0..{N_CLASSES - 1}")
        if self.fold is not None and not 1 <= self.fold <= 5:
            raise ValueError(f"fold {self.fold} outside 1..5")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def load_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE file into a mono clip.

    Accepts PCM 16-bit (format code 1) and IEEE float 32-bit (format
    code 3), 1 or 2 channels. 16-bit samples are scaled by 1/32768;
    stereo is mixed down by the per-sample mean.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path.name}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path.name}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedWavError(
                    f"{path.name}: data chunk declares {size} bytes, "
                    f"{len(body)} present"
                )
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise WavFormatError(f"{path.name}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, block_align, bits = fmt
    if audio_format not in (1, 3):
        raise UnsupportedWavError(f"{path.name}: format code {audio_format}")
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path.name}: {channels} channels")
    if audio_format == 1 and bits != 16:
        raise UnsupportedWavError(f"{path.name}: PCM with {bits} bits")
    if audio_format == 3 and bits != 32:
        raise UnsupportedWavError(f"{path.name}: float WAV with {bits} bits")
    if block_align == 0 or len(data) % block_align:
        raise TruncatedWavError(f"{path.name}: partial sample frame in data chunk")
    if len(data) == 0:
        raise WavFormatError(f"{path.name}: empty data chunk")

    if audio_format == 1:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    else:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, sample_rate, source_name=path.stem)


def _write_riff(path, sr: int, audio_format: int, bits: int, payload: bytes):
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        1,  # mono
        sr,
        sr * bits // 8,
        bits // 8,
        bits,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


def save_wav_float32(path, samples, sample_rate_hz: int):
    """Write a mono IEEE-float 32-bit WAV (format code 3)."""
    payload = np.asarray(samples, dtype="<f4").tobytes()
    _write_riff(path, sample_rate_hz, 3, 32, payload)


def save_wav_pcm16(path, samples, sample_rate_hz: int):
    """Write a mono PCM 16-bit WAV, clipping to the representable range."""
    scaled = np.clip(np.asarray(samples, dtype=np.float64) * 32768.0, -32768, 32767)
    payload = np.round(scaled).astype("<i2").tobytes()
    _write_riff(path, sample_rate_hz, 1, 16, payload)


def _symmetric_hann(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited rational resampling by a polyphase windowed sinc.

    Output length is round(len * target / source). Equal rates return
    the samples unchanged.
    """
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    src = clip.sample_rate_hz
    if target_rate_hz == src:
        return replace(clip)

    g = math.gcd(src, target_rate_hz)
    up, down = target_rate_hz // g, src // g
    x = clip.samples
    n = x.size
    out_len = (2 * n * up + down) // (2 * down)  # round half up

    # Prototype lowpass at the fictitious up-sampled rate: cutoff at the
    # tighter of the input/output Nyquists, gain `up` to undo zero stuffing.
    m = max(up, down)
    half = _FILTER_HALF_CROSSINGS * m
    idx = np.arange(-half, half + 1)
    h = (up / m) * np.sinc(idx / m) * _symmetric_hann(2 * half + 1)

    taps_total = h.size
    out = np.empty(out_len)
    i_up = np.arange(out_len) * down
    phases = i_up % up
    bases = i_up // up
    for p in range(up):
        sel = np.nonzero(phases == p)[0]
        if sel.size == 0:
            continue
        t_min = -((half + p) // up)
        t_max = (taps_total - 1 - half - p) // up
        taps = h[half + p + np.arange(t_min, t_max + 1) * up]
        conv = np.convolve(x, taps)
        out[sel] = conv[bases[sel] - t_min]

    return AudioClip(
        out,
        target_rate_hz,
        label=clip.label,
        fold=clip.fold,
        source_name=clip.source_name,
    )


def canonicalize(
    clip: AudioClip,
    rate_hz: int = CANONICAL_RATE,
    duration_s: float = CANONICAL_DURATION_S,
) -> AudioClip:
    """Resample to the working rate and force an exact duration.

    Short clips are zero-padded at the end, long ones truncated, so every
    canonical clip shares the classifier's input geometry.
    """
    clip = resample(clip, rate_hz)
    want = int(round(rate_hz * duration_s))
    x = clip.samples
    if x.size < want:
        x = np.concatenate([x, np.zeros(want - x.size)])
    elif x.size > want:
        x = x[:want]
    return replace(clip, samples=x)


@dataclass(frozen=True)
class IndexEntry:
    path: Path
    label: int
    fold: int
    category: str


@dataclass
class DatasetIndex:
    """Parsed ESC-50-style metadata: one entry per audio file."""

    entries: list[IndexEntry]
    class_names: dict[int, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def load_index(csv_path, audio_dir) -> DatasetIndex:
    """Read metadata CSV (filename, fold, target, category) and verify files.

    Raises ValueError for schema problems, out-of-range labels, or an
    empty index; FileNotFoundError for referenced files that are absent.
    """
    csv_path = Path(csv_path)
    audio_dir = Path(audio_dir)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        missing = {"filename", "fold", "target", "category"} - header
        if missing:
            raise ValueError(f"{csv_path.name}: missing columns {sorted(missing)}")
        entries = []
        class_names: dict[int, str] = {}
        for row in reader:
            label = int(row["target"])
            if not 0 <= label < N_CLASSES:
                raise ValueError(
                    f"{csv_path.name}: label {label} outside 0..{N_CLASSES - 1}"
                )
            category = row["category"]
            known = class_names.setdefault(label, category)
            if known != category:
                raise ValueError(
                    f"{csv_path.name}: label {label} maps to both "
                    f"{known!r} and {category!r}"
                )
            path = audio_dir / row["filename"]
            if not path.exists():
                raise FileNotFoundError(f"indexed file missing: {path}")
            entries.append(IndexEntry(path, label, int(row["fold"]), category))
    if not entries:
        raise ValueError(f"{csv_path.name}: empty index")
    return DatasetIndex(entries, class_names)
