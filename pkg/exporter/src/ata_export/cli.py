"""CLI: ``ata-export export --source PATH --out PATH [--include GLOB ...]``."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ata-export",
        description="Export PyTorch checkpoint conv kernels into an ATA archive.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_export = sub.add_parser("export", help="convert a checkpoint to ATA")
    p_export.add_argument("--source", required=True, help="checkpoint path (.pt/.pth)")
    p_export.add_argument("--out", required=True, help="output ATA path")
    p_export.add_argument(
        "--include",
        action="append",
        metavar="GLOB",
        help="only export parameter names matching this glob (repeatable)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export(args.source, args.out, args.include)
    except ExportError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 1
    sys.stdout.write(json.dumps(manifest.to_json_dict(), indent=2) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
