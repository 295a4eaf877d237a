"""Command line for the bank exporter."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ManifestError, export, load_manifest, selftest


def cmd_export(args: argparse.Namespace) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    try:
        result = export(manifest)
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(
        f"{result.output}  N={result.n_images} D={result.dim} "
        f"C={result.n_classes} skipped={len(result.skipped)}"
    )
    for path in result.skipped:
        print(f"skipped: {path}")
    return 0


def cmd_selftest(_: argparse.Namespace) -> int:
    if selftest():
        print("selftest passed")
        return 0
    print("selftest FAILED", file=sys.stderr)
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fembexport",
        description="Export embedding banks from image folders",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_export = sub.add_parser("export", help="run an export manifest")
    p_export.add_argument("--manifest", required=True)
    p_export.set_defaults(fn=cmd_export)
    p_self = sub.add_parser("selftest", help="verify the writer against the bundled reader")
    p_self.set_defaults(fn=cmd_selftest)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
