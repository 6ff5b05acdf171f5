"""Generate the synthetic noise-band corpus used by the comparison runs.

Writes <out>/audio/*.wav plus <out>/index.csv (filename, fold, target,
category). The corpus is fully determined by --seed.

Usage:
    python scripts/make_synthetic_corpus.py --out data/corpus --seed 0
"""
import argparse
import sys

from sonoforge.synth import (
    DEFAULT_CLIPS_PER_CLASS,
    DEFAULT_N_CLASSES,
    write_corpus,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="corpus directory")
    parser.add_argument("--classes", type=int, default=DEFAULT_N_CLASSES)
    parser.add_argument("--clips-per-class", type=int, default=DEFAULT_CLIPS_PER_CLASS)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--duration", type=float, default=5.0)
    parser.add_argument("--rate", type=int, default=22050)
    args = parser.parse_args(argv)
    csv_path, audio_dir = write_corpus(
        args.out,
        n_classes=args.classes,
        clips_per_class=args.clips_per_class,
        seed=args.seed,
        duration_s=args.duration,
        sample_rate_hz=args.rate,
    )
    total = args.classes * args.clips_per_class
    print(f"wrote {total} clips to {audio_dir}")
    print(f"wrote index to {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
