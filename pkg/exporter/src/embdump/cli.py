"""Command-line entry point: embdump CORPUS --model ID -o OUT.bin"""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embdump",
        description="Dump per-token encoder embeddings for a dialogue corpus "
        "into the grounding engine's binary format.",
    )
    parser.add_argument("corpus", help="JSONL dialogue corpus")
    parser.add_argument("--model", required=True, help="encoder id or local path")
    parser.add_argument("-o", "--output", required=True, help="output .bin path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_embeddings(args.corpus, args.model, args.output)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(
        f"{len(manifest.entry_ids)} entries at d={manifest.d} -> {args.output} "
        f"({manifest.checksum})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
