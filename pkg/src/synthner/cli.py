"""Command-line entry point.

One binary, one subcommand per pipeline stage, explicit files between
stages so every intermediate is inspectable and diffable:

    synthner prompt   render the few-shot prompt
    synthner synth    run a sampling campaign against a backend
    synthner curate   cleanse raw samples into a corpus + report
    synthner split    seeded train/validation/test split
    synthner stats    corpus statistics
    synthner export   corpus as JSONL or token/tag (BIO) lines
    synthner eval     score predictions against gold

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error. All
randomness flows from explicit ``--seed`` flags; output files are
written atomically, never partially.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import backend as backend_mod
from . import curation, evaluation, prompting
from ._util import atomic_write
from .backend import AuthError, BackendError, ConfigError
from .corpus import (
    DataFormatError,
    read_corpus_jsonl,
    read_labelset,
    validate_corpus,
    write_corpus_jsonl,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for data
    # errors, so remap.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require_files(parser: argparse.ArgumentParser, *paths: str | None) -> None:
    """Input paths are validated before any stage runs."""
    for path in paths:
        if path is not None and not os.path.exists(path):
            parser.error(f"no such file: {path}")


def build_parser() -> _Parser:
    parser = _Parser(prog="synthner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompt", parents=[], help="render the few-shot prompt")
    p.add_argument(
        "--examples",
        help="markup lines file, or a corpus .jsonl to encode; default: bundled examples",
    )
    p.add_argument(
        "--repaired",
        action="store_true",
        help="use the bundled example set with its malformed line repaired",
    )

    p = sub.add_parser("synth", help="run a sampling campaign")
    p.add_argument("--config", required=True, help="campaign TOML file")
    p.add_argument("--out", help="override the config's output path")
    p.add_argument("--seed", type=int, help="default seed for stages without one")
    p.add_argument("--jobs", type=int, help="override the config's concurrency")
    p.add_argument("--resume", action="store_true", help="only request missing sample indices")

    p = sub.add_parser("curate", help="cleanse raw samples into a corpus")
    p.add_argument("--raw", required=True, help="raw-sample JSONL from synth")
    p.add_argument("--labels", required=True, help="labelset JSON")
    p.add_argument("--out", required=True, help="curated corpus JSONL")
    p.add_argument("--report", help="accounting report JSON")
    p.add_argument("--report-tsv", help="accounting report TSV")
    p.add_argument(
        "--stage-order",
        choices=["default", "dedup-last"],
        default="default",
        help="run deduplication before (default) or after the per-sentence filters",
    )

    p = sub.add_parser("split", help="seeded train/validation/test split")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--labels", required=True, help="labelset JSON")
    p.add_argument("--out-dir", required=True, help="directory for the three output files")
    p.add_argument("--train", type=float, default=0.8)
    p.add_argument("--validation", type=float, default=0.1)
    p.add_argument("--test", type=float, default=0.1)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--labels", required=True, help="labelset JSON")
    p.add_argument("--json", dest="json_out", help="also write the stats as JSON")

    p = sub.add_parser("export", help="export the corpus")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--labels", required=True, help="labelset JSON")
    p.add_argument("--format", choices=["jsonl", "bio"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", required=True, help="gold corpus JSONL")
    p.add_argument("--pred", required=True, help="prediction corpus JSONL")
    p.add_argument("--labels", required=True, help="gold labelset JSON")
    p.add_argument("--alias", help="label alias JSON, e.g. {\"Drug\": \"Medikation\"}")
    p.add_argument("--weighting", choices=["chars", "entities"], default="chars")
    p.add_argument("--span-exact", action="store_true", help="exact-boundary entity scoring")
    p.add_argument("--json", dest="json_out", help="also write the report as JSON")

    return parser


def _read_corpus(path, ls):
    """Read a corpus that must conform to the declared labelset."""
    corpus = read_corpus_jsonl(path, ls)
    violations = validate_corpus(corpus)
    if violations:
        shown = "; ".join(violations[:3])
        raise DataFormatError(f"{path}: {len(violations)} violation(s), e.g. {shown}")
    return corpus


def cmd_prompt(args, parser) -> int:
    if args.examples is None:
        name = (
            prompting.BUNDLED_EXAMPLES_CORRECTED
            if args.repaired
            else prompting.BUNDLED_EXAMPLES
        )
        lines = prompting.load_bundled_examples(name)
        prompt = prompting.build_prompt_from_markup(lines)
    elif args.examples.endswith(".jsonl"):
        with open(args.examples, encoding="utf-8") as f:
            if not any(line.strip() for line in f):
                parser.error(f"no sentences in {args.examples}")
        corpus = read_corpus_jsonl(args.examples)
        prompt = prompting.build_prompt(corpus.sentences)
    else:
        with open(args.examples, encoding="utf-8") as f:
            lines = [l for l in f.read().splitlines() if l.strip()]
        if not lines:
            parser.error(f"no examples in {args.examples}")
        prompt = prompting.build_prompt_from_markup(lines)
    sys.stdout.write(prompt.text)
    return EXIT_OK


def cmd_synth(args, parser) -> int:
    config = backend_mod.load_campaign_config(args.config, default_seed=args.seed)
    if config.examples is not None:
        _require_files(parser, config.examples)
        with open(config.examples, encoding="utf-8") as f:
            lines = [l for l in f.read().splitlines() if l.strip()]
        if not lines:
            parser.error(f"no examples in {config.examples}")
        prompt = prompting.build_prompt_from_markup(lines)
    else:
        prompt = prompting.build_prompt_from_markup(prompting.load_bundled_examples())
    spec = backend_mod.CampaignSpec(
        stages=config.stages, prompt=prompt, backend_id=config.backend_id
    )
    client = backend_mod.build_backend(config)
    out_path = args.out or config.output
    workers = args.jobs if args.jobs is not None else config.concurrency
    print(
        f"requesting {spec.total_samples} samples from {config.backend_id} "
        f"({workers} workers) -> {out_path}",
        file=sys.stderr,
    )
    samples = backend_mod.run_campaign(
        spec, client, out_path, workers=workers, resume=args.resume
    )
    print(f"persisted {len(samples)} samples", file=sys.stderr)
    return EXIT_OK


def cmd_curate(args, parser) -> int:
    ls = read_labelset(args.labels)
    raws = backend_mod.read_raw_samples(args.raw)
    order = (
        curation.DEDUP_LAST_STAGE_ORDER
        if args.stage_order == "dedup-last"
        else curation.DEFAULT_STAGE_ORDER
    )
    corpus, report = curation.apply_filters(raws, ls, order)
    write_corpus_jsonl(corpus, args.out)
    if args.report:
        curation.write_report_json(report, args.report)
    if args.report_tsv:
        curation.write_report_tsv(report, args.report_tsv)
    sys.stdout.write(curation.format_report_tsv(report))
    return EXIT_OK


def cmd_split(args, parser) -> int:
    corpus = _read_corpus(args.corpus, read_labelset(args.labels))
    spec = curation.SplitSpec(args.train, args.validation, args.test, args.seed)
    train, validation, test = curation.split(corpus, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", train), ("validation", validation), ("test", test)):
        write_corpus_jsonl(part, os.path.join(args.out_dir, f"{name}.jsonl"))
    print(
        f"split {len(corpus.sentences)} sentences into "
        f"{len(train.sentences)}/{len(validation.sentences)}/{len(test.sentences)}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_stats(args, parser) -> int:
    corpus = _read_corpus(args.corpus, read_labelset(args.labels))
    stats = curation.corpus_stats(corpus)
    lines = [f"sentences\t{stats.sentence_count}", f"tokens\t{stats.token_count}"]
    for label, count in stats.entity_counts:
        lines.append(f"{label}\t{count}")
    sys.stdout.write("\n".join(lines) + "\n")
    if args.json_out:
        with atomic_write(args.json_out) as f:
            json.dump(
                {
                    "sentence_count": stats.sentence_count,
                    "token_count": stats.token_count,
                    "entity_counts": dict(stats.entity_counts),
                },
                f,
                ensure_ascii=False,
                indent=2,
            )
            f.write("\n")
    return EXIT_OK


def cmd_export(args, parser) -> int:
    corpus = _read_corpus(args.corpus, read_labelset(args.labels))
    curation.export(corpus, args.format, args.out)
    return EXIT_OK


def cmd_eval(args, parser) -> int:
    ls = read_labelset(args.labels)
    gold = _read_corpus(args.gold, ls)
    # Prediction files may carry out-of-distribution labels (aliasing and
    # foreign-label dropping happen inside score()), so the conformance
    # check applies to gold only.
    pred = read_corpus_jsonl(args.pred, ls)
    alias = evaluation.read_alias_map(args.alias) if args.alias else None
    report = evaluation.score(
        gold, pred, alias, weighting=args.weighting, span_exact=args.span_exact
    )
    sys.stdout.write(evaluation.format_score_table(report))
    if args.json_out:
        evaluation.write_score_report_json(report, args.json_out)
    return EXIT_OK


_INPUT_PATHS = {
    "prompt": ("examples",),
    "synth": ("config",),
    "curate": ("raw", "labels"),
    "split": ("corpus", "labels"),
    "stats": ("corpus", "labels"),
    "export": ("corpus", "labels"),
    "eval": ("gold", "pred", "labels", "alias"),
}

_COMMANDS = {
    "prompt": cmd_prompt,
    "synth": cmd_synth,
    "curate": cmd_curate,
    "split": cmd_split,
    "stats": cmd_stats,
    "export": cmd_export,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    _require_files(
        parser, *(getattr(args, name, None) for name in _INPUT_PATHS[args.command])
    )
    try:
        return _COMMANDS[args.command](args, parser)
    except ConfigError as exc:
        print(f"synthner: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"synthner: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AuthError as exc:
        print(f"synthner: authentication error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"synthner: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValueError as exc:
        print(f"synthner: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"synthner: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
