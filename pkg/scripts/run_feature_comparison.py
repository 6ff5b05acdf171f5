"""Run the desk-scale feature comparison end to end.

Builds the synthetic corpus (if absent), extracts the requested feature
kinds, trains one classifier per (kind, seed) through the CLI, and
prints the comparison table plus the mel-versus-chroma margins.

Everything is resumable: existing wavs, feature files, and run reports
are left untouched, so an interrupted invocation picks up where it
stopped.

Usage:
    python scripts/run_feature_comparison.py --workdir data/comparison
"""
import argparse
import sys
from pathlib import Path

from sonoforge.cli import main as cli_main
from sonoforge.synth import write_corpus
from sonoforge.training import report_from_text

DEFAULT_KINDS = ("mel", "mfcc", "chroma-cens")
DEFAULT_SEEDS = (0, 1, 2)


def as_config_text(workdir: Path, max_epochs: int) -> str:
    return (
        "[dataset]\n"
        "csv = corpus/index.csv\n"
        "audio_dir = corpus/audio\n"
        "\n"
        "[training]\n"
        f"max_epochs = {max_epochs}\n"
        "\n"
        "[output]\n"
        "features_dir = features\n"
        "runs_dir = runs\n"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--kinds", nargs="+", default=list(DEFAULT_KINDS))
    parser.add_argument("--seeds", nargs="+", type=int, default=list(DEFAULT_SEEDS))
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--clips-per-class", type=int, default=40)
    parser.add_argument("--max-epochs", type=int, default=30)
    parser.add_argument("--corpus-seed", type=int, default=0)
    args = parser.parse_args(argv)

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    corpus = workdir / "corpus"
    if not (corpus / "index.csv").is_file():
        print("building corpus ...")
        write_corpus(
            corpus,
            n_classes=args.classes,
            clips_per_class=args.clips_per_class,
            seed=args.corpus_seed,
        )
    config_path = workdir / "config.ini"
    config_path.write_text(as_config_text(workdir, args.max_epochs))

    features_dir = workdir / "features"
    runs_dir = workdir / "runs"
    for kind in args.kinds:
        print(f"extracting {kind} ...")
        code = cli_main(
            [
                "extract",
                "--feature",
                kind,
                "--input",
                str(corpus / "audio"),
                "--out",
                str(features_dir),
                "--config",
                str(config_path),
            ]
        )
        if code != 0:
            return code

    for kind in args.kinds:
        for seed in args.seeds:
            print(f"training {kind} seed {seed} ...")
            code = cli_main(
                [
                    "train",
                    "--feature",
                    kind,
                    "--config",
                    str(config_path),
                    "--seed",
                    str(seed),
                    "--out",
                    str(runs_dir),
                ]
            )
            if code != 0:
                return code

    print()
    code = cli_main(["report", "--runs", str(runs_dir)])
    if code != 0:
        return code

    # margin summary over seeds, per kind
    val_acc = {}
    for path in sorted(runs_dir.glob("*.report.txt")):
        report = report_from_text(path.read_text())
        kind = report.feature_kind.replace("_", "-")
        val_acc.setdefault(kind, []).append(report.final.val_acc * 100.0)
    print()
    for kind, accs in sorted(val_acc.items()):
        mean = sum(accs) / len(accs)
        listed = ", ".join(f"{a:.2f}" for a in accs)
        print(f"{kind}: val acc per seed [{listed}], mean {mean:.2f}")
    if "mel" in val_acc and "chroma-cens" in val_acc:
        margins = [
            m - c for m, c in zip(val_acc["mel"], val_acc["chroma-cens"])
        ]
        listed = ", ".join(f"{m:+.2f}" for m in margins)
        print(f"mel minus chroma-cens margin per seed: [{listed}]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
