"""Standalone entry point: ``ccqg-annotate`` with flags mirroring AdaptorJob.

Exit status: 0 on success, 1 when the annotation model is unavailable,
2 on corpus or filesystem errors (argparse uses 2 for usage errors too).
"""

from __future__ import annotations

import argparse
import sys
import time

from .adaptor import AdaptorJob, annotate_corpus
from .corpus import FORMATS, CorpusError
from .pipeline import BUILTIN_MODEL, PipelineUnavailable


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccqg-annotate",
        description="Annotate a QA corpus into CoNLL-U + NER interchange "
                    "files plus a manifest.",
    )
    parser.add_argument("--corpus", required=True,
                        help="input corpus file")
    parser.add_argument("--format", required=True, choices=FORMATS,
                        help="corpus shape")
    parser.add_argument("--output", required=True,
                        help="directory for passages.conllu, "
                             "questions.conllu, manifest.json")
    parser.add_argument("--model", default=BUILTIN_MODEL,
                        help=f"annotation pipeline (default: {BUILTIN_MODEL})")
    parser.add_argument("--batch-size", type=int, default=32,
                        help="records per annotation batch (default: 32)")
    return parser


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        job = AdaptorJob(corpus=args.corpus, format=args.format,
                         output_dir=args.output, model=args.model,
                         batch_size=args.batch_size)
        manifest = annotate_corpus(job)
    except PipelineUnavailable as exc:
        print(f"ccqg-annotate: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, OSError, ValueError) as exc:
        print(f"ccqg-annotate: {exc}", file=sys.stderr)
        return 2
    elapsed_ms = int((time.perf_counter() - started) * 1000)
    counts = manifest["counts"]
    print(f"annotate ok instances={counts['annotated']} "
          f"skipped={counts['skipped']} out={args.output} {elapsed_ms}ms")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
