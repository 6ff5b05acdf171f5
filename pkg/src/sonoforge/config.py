"""INI-style configuration shared by every CLI command.

One document, five sections: dataset, dsp, features, training, output.
Every key is optional and falls back to the package default, but keys
and sections outside the schema are rejected outright so typos cannot
silently change an experiment.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from . import dsp, mel, rhythm
from .chroma import DEFAULT_CENS_SMOOTH


class ConfigError(ValueError):
    """Configuration file is malformed or inconsistent."""


@dataclass(frozen=True)
class DspSettings:
    sample_rate_hz: int = 22050
    n_fft: int = dsp.DEFAULT_N_FFT
    hop: int = dsp.DEFAULT_HOP

    def __post_init__(self):
        if self.sample_rate_hz <= 0 or self.n_fft <= 0 or self.hop <= 0:
            raise ConfigError("dsp values must be positive")


@dataclass(frozen=True)
class FeatureSettings:
    n_mels: int = mel.DEFAULT_N_MELS
    n_mfcc: int = mel.DEFAULT_N_MFCC
    cens_smooth: int = DEFAULT_CENS_SMOOTH
    cens_downsample: int = 1
    tempo_bins: int = rhythm.DEFAULT_TEMPO_BINS
    tempogram_window: int = rhythm.DEFAULT_TEMPOGRAM_WIN

    def __post_init__(self):
        for name, value in vars(self).items():
            if value <= 0:
                raise ConfigError(f"features.{name} must be positive")


@dataclass(frozen=True)
class CliConfig:
    dataset_csv: Path | None = None
    audio_dir: Path | None = None
    dsp: DspSettings = field(default_factory=DspSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    training: dict = field(default_factory=dict)
    features_dir: Path | None = None
    runs_dir: Path | None = None


_SCHEMA = {
    "dataset": {"csv": str, "audio_dir": str},
    "dsp": {"sample_rate": int, "n_fft": int, "hop": int},
    "features": {
        "n_mels": int,
        "n_mfcc": int,
        "cens_smooth": int,
        "cens_downsample": int,
        "tempo_bins": int,
        "tempogram_window": int,
    },
    "training": {
        "batch_size": int,
        "initial_lr": float,
        "lr_patience": int,
        "lr_factor": float,
        "min_lr": float,
        "stop_patience": int,
        "max_epochs": int,
    },
    "output": {"features_dir": str, "runs_dir": str},
}


def _typed(section: str, key: str, raw: str):
    try:
        return _SCHEMA[section][key](raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path) -> CliConfig:
    """Parse and validate a config file; paths are checked immediately."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[section][key] = _typed(section, key, raw)

    dataset = values.get("dataset", {})
    base = path.parent  # relative paths resolve against the config file

    def resolve(raw):
        return (base / raw).resolve() if raw is not None else None

    dataset_csv = resolve(dataset.get("csv"))
    audio_dir = resolve(dataset.get("audio_dir"))
    if dataset_csv is not None and not dataset_csv.is_file():
        raise ConfigError(f"dataset csv not found: {dataset_csv}")
    if audio_dir is not None and not audio_dir.is_dir():
        raise ConfigError(f"audio dir not found: {audio_dir}")

    dsp_vals = values.get("dsp", {})
    dsp_settings = DspSettings(
        sample_rate_hz=dsp_vals.get("sample_rate", 22050),
        n_fft=dsp_vals.get("n_fft", dsp.DEFAULT_N_FFT),
        hop=dsp_vals.get("hop", dsp.DEFAULT_HOP),
    )
    feature_settings = FeatureSettings(**values.get("features", {}))
    output = values.get("output", {})
    return CliConfig(
        dataset_csv=dataset_csv,
        audio_dir=audio_dir,
        dsp=dsp_settings,
        features=feature_settings,
        training=dict(values.get("training", {})),
        features_dir=resolve(output.get("features_dir")),
        runs_dir=resolve(output.get("runs_dir")),
    )
