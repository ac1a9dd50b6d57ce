"""Command line entry point: `senti embeddings|run|curve|synth`."""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from senti.config import load_config
from senti.exceptions import ConfigError, CorpusError, SentiError, StageFailed
from senti.SentimentExperiment import SentimentExperiment
from senti.synthetic import generate_lexicons, generate_reviews, write_lexicon, write_reviews

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="senti", description="Sentiment classifier comparison and combination toolkit"
    )
    parser.add_argument(
        "--log-level",
        default=None,
        help="logging level (default: SENTI_LOG_LEVEL or INFO)",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("embeddings", "train the dense and CNN word embeddings"),
        ("run", "train the nine bases, combine them and write report.tsv"),
        ("curve", "learning curves with stability flags"),
    ):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="YAML experiment config")
        command.add_argument("--seed", type=int, default=None)
        command.add_argument("--workers", type=int, default=None)
        command.add_argument("--models", default=None, help="comma-separated base models")
        command.add_argument("--out", default=None, help="output directory")
        command.add_argument("--plot", action="store_true", default=None, help="write SVG plot")

    synth = commands.add_parser("synth", help="write a synthetic review corpus")
    synth.add_argument("--out", required=True, help="corpus file (.tsv or .jsonl)")
    synth.add_argument("--docs", type=int, default=5000)
    synth.add_argument("--vocab", type=int, default=2000)
    synth.add_argument("--noise", type=float, default=0.1)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--lexicons", action="store_true", help="also write two word lists")
    return parser


def configure_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get("SENTI_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
    )


def _synth(args) -> int:
    out = Path(args.out)
    corpus_format = "jsonl" if out.suffix == ".jsonl" else "tsv"
    reviews = generate_reviews(args.docs, args.vocab, args.noise, args.seed)
    write_reviews(out, reviews, corpus_format)
    logging.info(f"Wrote {len(reviews)} reviews to {out}")
    if args.lexicons:
        positive, negative = generate_lexicons(args.vocab, seed=args.seed)
        write_lexicon(out.with_name(f"{out.stem}.positive.txt"), positive)
        write_lexicon(out.with_name(f"{out.stem}.negative.txt"), negative)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if args.command == "synth":
        return _synth(args)

    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "models": args.models,
        "out": args.out,
        "plot": args.plot,
    }
    try:
        config = load_config(args.config, overrides)
        if not Path(config.corpus).exists():
            raise CorpusError(config.corpus, "no such file")
    except (ConfigError, CorpusError) as exc:
        logging.error(str(exc))
        return EXIT_USAGE

    try:
        with SentimentExperiment(config) as experiment:
            if args.command == "embeddings":
                experiment.train_embeddings()
            elif args.command == "run":
                for name, report in experiment.run():
                    print(f"{name}\t{report.macro_f1:.4f}")
            else:
                for point in experiment.curve():
                    print(f"{point.model}\t{point.corpus_size}\t{point.mean_f1:.4f}")
    except StageFailed as exc:
        logging.error(f"{exc} (stage {exc.stage})")
        return EXIT_FAILED
    except SentiError as exc:
        logging.error(str(exc))
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
