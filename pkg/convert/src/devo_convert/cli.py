"""Command-line exporter: `convert` a checkpoint, `verify` the result."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .convert import convert_checkpoint
from .mapping import ConversionMap, MappingError
from .verify import (
    EngineNotFoundError,
    VerificationError,
    read_wav_float32,
    verify_conversion,
)


def cmd_convert(args) -> int:
    cmap = ConversionMap.from_json(Path(args.mapping).read_text(encoding="utf-8"))
    shapes = convert_checkpoint(cmap, args.checkpoint, args.out)
    print(f"exported {len(shapes)} tensors -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    probe = read_wav_float32(args.probe)
    report = verify_conversion(args.bundle, args.checkpoint, probe, engine=args.engine,
                               threshold=args.threshold)
    print(f"max abs diff: {report.max_abs_diff:.3e} over {report.samples_compared} samples "
          f"(threshold {report.threshold:.1e})")
    if not report.passed:
        print("verification FAILED", file=sys.stderr)
        return 1
    print("verification passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="devo-convert",
                                     description="Export checkpoints to DEVO bundles")
    sub = parser.add_subparsers(dest="command", required=True)

    convert = sub.add_parser("convert", help="export a checkpoint per a mapping document")
    convert.add_argument("--mapping", required=True, help="JSON mapping document")
    convert.add_argument("--checkpoint", required=True)
    convert.add_argument("--out", required=True)
    convert.set_defaults(fn=cmd_convert)

    verify = sub.add_parser("verify", help="compare engine output against the reference")
    verify.add_argument("--bundle", required=True)
    verify.add_argument("--checkpoint", required=True)
    verify.add_argument("--probe", required=True, help="float32 WAV probe signal")
    verify.add_argument("--engine", default="devo")
    verify.add_argument("--threshold", type=float, default=1e-4)
    verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (MappingError, VerificationError, EngineNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
