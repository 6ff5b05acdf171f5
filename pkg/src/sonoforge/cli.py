"""Command-line front door: extract, render, split, train, evaluate, report.

Exit codes are a stable contract: 0 on success, 1 for runtime failures
(I/O, bad data, diverged training), 2 for usage and configuration
errors. Existing output files are never overwritten; they are reported
as "exists" and left alone, which makes every command safe to re-run.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import load_index
from .config import CliConfig, ConfigError, load_config
from .nn import ModelSpec, build_model, load_checkpoint, save_checkpoint
from .pipeline import (
    CLI_KIND_TOKENS,
    cli_token,
    extract_wav_file,
    feature_filename,
    internal_kind,
    load_feature_set,
)
from .storage import load_feature, render_pgm, save_feature
from .training import (
    TrainConfig,
    evaluate,
    report_from_text,
    split_dataset,
    train,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

REPORT_SUFFIX = ".report.txt"
CHECKPOINT_SUFFIX = ".sfm"


def _worker_count() -> int:
    """Pool size: machine default, capped by SONOFORGE_THREADS."""
    workers = os.cpu_count() or 1
    cap = os.environ.get("SONOFORGE_THREADS")
    if cap is not None:
        try:
            cap_n = int(cap)
        except ValueError:
            raise ConfigError(f"SONOFORGE_THREADS={cap!r} is not an integer")
        if cap_n < 1:
            raise ConfigError("SONOFORGE_THREADS must be >= 1")
        workers = min(workers, cap_n)
    return workers


def _load_cli_config(args) -> CliConfig:
    return load_config(args.config) if args.config else CliConfig()


def _refuse(path) -> None:
    print(f"exists: {path}", file=sys.stderr)


def cmd_extract(args) -> int:
    config = _load_cli_config(args)
    kind = internal_kind(args.feature)
    source = Path(args.input)
    if source.is_dir():
        wavs = sorted(source.glob("*.wav"))
    elif source.is_file():
        wavs = [source]
    else:
        print(f"error: input not found: {source}", file=sys.stderr)
        return EXIT_RUNTIME
    if not wavs:
        print(f"error: no .wav files under {source}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(wav):
        target = out_dir / feature_filename(wav.stem, kind)
        if target.exists():
            return ("exists", target, None)
        try:
            save_feature(extract_wav_file(wav, kind, config), target)
        except Exception as exc:  # per-file isolation; the rest continue
            return ("failed", wav, exc)
        return ("ok", target, None)

    failures = []
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        for status, path, exc in pool.map(work, wavs):
            if status == "exists":
                _refuse(path)
            elif status == "failed":
                failures.append((path, exc))
    for path, exc in failures:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_render(args) -> int:
    source = Path(args.input)
    if source.is_dir():
        inputs = sorted(source.glob("*.ftr"))
    elif source.is_file():
        inputs = [source]
    else:
        print(f"error: input not found: {source}", file=sys.stderr)
        return EXIT_RUNTIME
    if not inputs:
        print(f"error: no .ftr files under {source}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    for path in inputs:
        target = out_dir / (path.name[: -len(".ftr")] + ".pgm")
        if target.exists():
            _refuse(target)
            continue
        try:
            render_pgm(load_feature(path), target)
        except Exception as exc:
            failures.append((path, exc))
    for path, exc in failures:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def _require(config: CliConfig, *fields) -> None:
    missing = [name for name in fields if getattr(config, name) is None]
    if missing:
        raise ConfigError(
            "config is missing required settings: " + ", ".join(missing)
        )


def _split_index(config: CliConfig, seed: int, train_frac: float, stratified: bool):
    index = load_index(config.dataset_csv, config.audio_dir)
    labels = [e.label for e in index.entries]
    train_entries, val_entries = split_dataset(
        index.entries, train_frac, seed, labels=labels, stratified=stratified
    )
    return index, train_entries, val_entries


def cmd_split(args) -> int:
    config = _load_cli_config(args)
    _require(config, "dataset_csv", "audio_dir")
    _, train_entries, val_entries = _split_index(
        config, args.seed, args.train_frac, args.stratified
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"split.seed{args.seed}.txt"
    if target.exists():
        _refuse(target)
        return EXIT_OK
    lines = [
        f"# sonoforge split seed={args.seed} train_frac={args.train_frac} "
        f"train={len(train_entries)} val={len(val_entries)}"
    ]
    for side, entries in (("train", train_entries), ("val", val_entries)):
        for e in sorted(entries, key=lambda e: e.path.name):
            lines.append(f"{side}\t{e.path.name}\t{e.label}\t{e.category}")
    target.write_text("\n".join(lines) + "\n")
    print(f"wrote {target}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_cli_config(args)
    _require(config, "dataset_csv", "audio_dir", "features_dir")
    token = args.feature
    kind = internal_kind(token)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"{token}.seed{args.seed}{REPORT_SUFFIX}"
    ckpt_path = out_dir / f"{token}.seed{args.seed}{CHECKPOINT_SUFFIX}"
    if report_path.exists() and ckpt_path.exists():
        _refuse(report_path)
        _refuse(ckpt_path)
        return EXIT_OK

    index, train_entries, val_entries = _split_index(
        config, args.seed, 0.8, stratified=False
    )
    try:
        train_clips = load_feature_set(train_entries, kind, config.features_dir)
        val_clips = load_feature_set(val_entries, kind, config.features_dir)
    except FileNotFoundError as exc:
        print(
            f"error: {exc}\nrun `sonoforge extract --feature {token} "
            f"--input {config.audio_dir} --out {config.features_dir}` first",
            file=sys.stderr,
        )
        return EXIT_RUNTIME

    height, width = train_clips.features.shape[1:]
    n_classes = int(max(e.label for e in index.entries)) + 1
    model = build_model(
        ModelSpec(height, width, n_classes), np.random.default_rng(args.seed)
    )
    train_config = TrainConfig(
        feature_kind=kind, seed=args.seed, **config.training
    )
    report = train(model, train_clips, val_clips, train_config)

    if report_path.exists():
        _refuse(report_path)
    else:
        report_path.write_text(report.to_text())
    if ckpt_path.exists():
        _refuse(ckpt_path)
    else:
        save_checkpoint(model, ckpt_path)
    final = report.final
    print(
        f"{token} seed={args.seed}: {report.n_epochs} epochs, "
        f"train_acc={final.train_acc:.4f} val_acc={final.val_acc:.4f}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_cli_config(args)
    _require(config, "dataset_csv", "audio_dir", "features_dir")
    kind = internal_kind(args.feature)
    model = load_checkpoint(args.checkpoint)
    _, _, val_entries = _split_index(config, args.seed, 0.8, stratified=False)
    val_clips = load_feature_set(val_entries, kind, config.features_dir)
    loss, acc = evaluate(model, val_clips)
    print(f"val_loss={loss!r} val_acc={acc!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    paths = sorted(runs_dir.glob(f"*{REPORT_SUFFIX}")) if runs_dir.is_dir() else []
    if not paths:
        print(f"error: no run reports under {runs_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    rows = []
    for path in paths:
        report = report_from_text(path.read_text())
        final = report.final
        rows.append(
            (
                cli_token(report.feature_kind),
                final.train_acc * 100.0,
                final.val_acc * 100.0,
                final.train_loss,
                final.val_loss,
                report.n_epochs,
            )
        )
    rows.sort(key=lambda r: (-r[2], r[0]))
    name_width = max(7, *(len(r[0]) for r in rows))
    header = (
        f"{'feature':<{name_width}}  {'train_acc':>9}  {'val_acc':>7}  "
        f"{'train_loss':>10}  {'val_loss':>8}  {'epochs':>6}"
    )
    print(header)
    for kind, train_acc, val_acc, train_loss, val_loss, epochs in rows:
        print(
            f"{kind:<{name_width}}  {train_acc:>9.2f}  {val_acc:>7.2f}  "
            f"{train_loss:>10.2f}  {val_loss:>8.2f}  {epochs:>6d}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonoforge",
        description="Audio feature extraction and CNN classification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract feature images from wav files")
    p.add_argument("--feature", required=True, choices=CLI_KIND_TOKENS)
    p.add_argument("--input", required=True, help="wav file or directory")
    p.add_argument("--out", required=True, help="output directory for .ftr files")
    p.add_argument("--config", help="INI config file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("render", help="render feature files as PGM images")
    p.add_argument("--input", required=True, help=".ftr file or directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("split", help="write the seeded train/validation partition")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="split, train, and write report + checkpoint")
    p.add_argument("--feature", required=True, choices=CLI_KIND_TOKENS)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for report and checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the validation split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--feature", required=True, choices=CLI_KIND_TOKENS)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print the feature comparison table")
    p.add_argument("--runs", required=True, help="directory of *.report.txt files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
