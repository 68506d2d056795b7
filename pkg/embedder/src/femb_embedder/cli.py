"""femb-embed: turn sentence documents into a FEMB corpus file.

Input is JSONL with one document per line:

    {"meeting_id": "1998-05-19", "member_id": "M011",
     "sentences": ["Inflation is rising.", "..."]}

Sentences should already be cleaned and filtered; order is preserved in
the embedding matrix. Documents beyond 256 sentences are truncated and
counted in the manifest written next to the output file.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderError
from .writer import embed_corpus, read_docs_jsonl


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="femb-embed", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--in", dest="input", required=True, help="documents JSONL")
    parser.add_argument("--model", default="hash",
                        help="encoder: 'hash' or a 768-dim sentence-transformers name")
    parser.add_argument("--out", required=True, help="output corpus (.femb)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        docs = read_docs_jsonl(args.input)
        report = embed_corpus(docs, args.model, args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, EncoderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {report.n_documents} documents "
          f"({report.n_skipped_empty} empty skipped, {report.n_truncated} truncated)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
