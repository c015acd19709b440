"""Command line for training and prediction over corpus files."""

from __future__ import annotations

import argparse
import sys

from .data import DataError
from .encoder import EncoderUnavailable
from .predict import predict
from .train import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ner-trainer", description=__doc__.splitlines()[0]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune a token classifier")
    p.add_argument("--train", required=True, help="training corpus JSONL")
    p.add_argument("--val", required=True, help="validation corpus JSONL")
    p.add_argument("--labels", required=True, help="labelset JSON")
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--encoder", default="tiny-de")
    p.add_argument("--learning-rate", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="annotate a corpus with a trained model")
    p.add_argument("--model", required=True, help="model directory from train")
    p.add_argument("--input", required=True, help="corpus JSONL to annotate")
    p.add_argument("--out", required=True, help="predictions JSONL")
    p.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "train":
            cfg = TrainConfig(
                encoder=args.encoder,
                learning_rate=args.learning_rate,
                batch_size=args.batch_size,
                max_epochs=args.epochs,
                seed=args.seed,
            )
            result = train(args.train, args.val, args.labels, args.out, cfg)
            print(
                f"selected epoch {result.selected_epoch} "
                f"(val_f1 {result.best_val_f1:.4f})",
                file=sys.stderr,
            )
        else:
            count = predict(args.model, args.input, args.out, args.batch_size)
            print(f"annotated {count} sentences", file=sys.stderr)
    except (DataError, EncoderUnavailable, ValueError, OSError) as exc:
        print(f"ner-trainer: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
