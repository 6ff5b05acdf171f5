"""Glue between the extractors, the dataset index, and the classifier.

Feature kinds are spelled with hyphens on the command line
("chroma-cens") and with underscores inside the package
("chroma_cens"); the two helpers below translate.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import chroma, mel, rhythm
from .audio_io import AudioClip, canonicalize, load_wav
from .config import CliConfig
from .features import FEATURE_KINDS, FeatureMatrix
from .nn import GeometryError
from .training import ClipSet

CLI_KIND_TOKENS = tuple(kind.replace("_", "-") for kind in FEATURE_KINDS)


def internal_kind(token: str) -> str:
    kind = token.replace("-", "_")
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {token!r}")
    return kind


def cli_token(kind: str) -> str:
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    return kind.replace("_", "-")


def feature_filename(stem: str, kind: str) -> str:
    return f"{stem}.{cli_token(kind)}.ftr"


def extract_feature(clip: AudioClip, kind: str, config: CliConfig) -> FeatureMatrix:
    """Run one extractor on an already-canonical clip."""
    n_fft = config.dsp.n_fft
    hop = config.dsp.hop
    f = config.features
    if kind == "mel":
        return mel.mel_spectrogram(clip, n_mels=f.n_mels, n_fft=n_fft, hop=hop)
    if kind == "mfcc":
        return mel.mfcc(clip, n_mfcc=f.n_mfcc, n_mels=f.n_mels, n_fft=n_fft, hop=hop)
    if kind == "tempogram":
        return rhythm.cyclic_tempogram(
            clip,
            n_tempo_bins=f.tempo_bins,
            win_len=f.tempogram_window,
            n_fft=n_fft,
            hop=hop,
        )
    if kind == "chroma_stft":
        return chroma.chroma_stft(clip, n_fft=n_fft, hop=hop)
    if kind == "chroma_cqt":
        return chroma.chroma_cqt(clip, hop=hop)
    if kind == "chroma_cens":
        return chroma.chroma_cens(
            clip, smooth_len=f.cens_smooth, downsample=f.cens_downsample, hop=hop
        )
    raise ValueError(f"unknown feature kind {kind!r}")


def extract_wav_file(wav_path, kind: str, config: CliConfig) -> FeatureMatrix:
    """Load, canonicalize (rate and duration), extract one feature image."""
    clip = load_wav(wav_path)
    clip = canonicalize(clip, rate_hz=config.dsp.sample_rate_hz)
    return extract_feature(clip, kind, config)


def load_feature_set(entries, kind: str, features_dir) -> ClipSet:
    """Assemble a ClipSet from per-clip FTR1 files for the given entries.

    Raises FileNotFoundError listing every missing file, ValueError on a
    stored kind mismatch, and GeometryError when shapes disagree.
    """
    from .storage import load_feature  # local import keeps module load light

    features_dir = Path(features_dir)
    paths = [features_dir / feature_filename(e.path.stem, kind) for e in entries]
    missing = [p for p in paths if not p.is_file()]
    if missing:
        shown = ", ".join(str(p) for p in missing[:3])
        raise FileNotFoundError(
            f"{len(missing)} feature file(s) missing under {features_dir} "
            f"(e.g. {shown})"
        )
    stack = []
    shape = None
    for path, entry in zip(paths, entries):
        f = load_feature(path)
        if f.kind != kind:
            raise ValueError(f"{path}: stores kind {f.kind!r}, expected {kind!r}")
        if shape is None:
            shape = f.values.shape
        elif f.values.shape != shape:
            raise GeometryError(
                f"{path}: shape {f.values.shape} differs from {shape}"
            )
        stack.append(f.values)
    return ClipSet(
        np.stack(stack).astype(np.float32),
        np.array([e.label for e in entries]),
        ids=tuple(e.path.name for e in entries),
    )
