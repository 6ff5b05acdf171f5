"""Deterministic synthetic corpus: one octave-wide noise band per class.

Every clip is colored noise confined to a one-octave band in log
frequency. The band position separates classes cleanly along a mel
axis, while the uniform octave-wide coverage spreads energy over all
twelve pitch classes, so chroma-style features carry little class
signal. That contrast is exactly what the feature-comparison
experiment needs from its data, without shipping any recordings.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .audio_io import save_wav_pcm16

DEFAULT_N_CLASSES = 10
DEFAULT_CLIPS_PER_CLASS = 40
BAND_LO_HZ = 75.0
BAND_HI_HZ = 7500.0  # times sqrt(2) stays below the 11025 Hz Nyquist
EDGE_WIDTH_OCTAVES = 0.08
TARGET_RMS = 0.1


def band_center_hz(class_index: int, n_classes: int = DEFAULT_N_CLASSES,
                   lo_hz: float = BAND_LO_HZ, hi_hz: float = BAND_HI_HZ) -> float:
    """Log-spaced band centers from lo_hz to hi_hz inclusive."""
    if not 0 <= class_index < n_classes:
        raise ValueError(f"class_index {class_index} outside 0..{n_classes - 1}")
    if n_classes == 1:
        return lo_hz
    return lo_hz * (hi_hz / lo_hz) ** (class_index / (n_classes - 1))


def synth_clip(class_index: int, rng, n_classes: int = DEFAULT_N_CLASSES,
               duration_s: float = 5.0, sample_rate_hz: int = 22050) -> np.ndarray:
    """One noise-band clip with a small per-clip detune and gain jitter."""
    n = int(round(duration_s * sample_rate_hz))
    center = band_center_hz(class_index, n_classes)
    center *= 2.0 ** rng.uniform(-0.1, 0.1)
    gain_db = rng.uniform(-3.0, 3.0)

    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    octaves = np.log2(np.maximum(freqs, 1e-6) / center)
    # flat across one octave, then gaussian rolloff at the edges
    overshoot = np.maximum(np.abs(octaves) - 0.5, 0.0)
    shape = np.exp(-0.5 * (overshoot / EDGE_WIDTH_OCTAVES) ** 2)
    shape[0] = 0.0
    samples = np.fft.irfft(spec * shape, n)

    rms = np.sqrt(np.mean(samples**2))
    samples *= TARGET_RMS / max(rms, 1e-12) * 10.0 ** (gain_db / 20.0)
    samples += rng.standard_normal(n) * 1e-4  # broadband floor around -60 dB
    return np.clip(samples, -0.999, 0.999)


def write_corpus(out_dir, n_classes: int = DEFAULT_N_CLASSES,
                 clips_per_class: int = DEFAULT_CLIPS_PER_CLASS, seed: int = 0,
                 duration_s: float = 5.0, sample_rate_hz: int = 22050):
    """Write wav files plus an index CSV; returns (csv_path, audio_dir).

    The CSV follows the dataset-index schema: filename, fold, target,
    category. Folds cycle 1..5 so the index stays drop-in compatible
    with fold-aware tooling even though the pipeline splits by seed.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "index.csv"
    rng = np.random.default_rng(seed)
    rows = []
    for cls in range(n_classes):
        category = f"band{int(round(band_center_hz(cls, n_classes)))}hz"
        for i in range(clips_per_class):
            name = f"{category}_{i:03d}.wav"
            samples = synth_clip(cls, rng, n_classes, duration_s, sample_rate_hz)
            save_wav_pcm16(audio_dir / name, samples, sample_rate_hz)
            rows.append((name, i % 5 + 1, cls, category))
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "fold", "target", "category"])
        writer.writerows(rows)
    return csv_path, audio_dir
