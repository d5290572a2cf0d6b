"""Command-line surface: enhance, stream, mix, eval, inspect, adapt.

Flags are long-form; a config file with key=value lines (keys named after the
flags) can pre-set any of them, with explicit flags taking precedence. The
DEVO_LOG environment variable selects the log level. Streaming I/O is raw
little-endian float32 mono at 16 kHz in 160-sample blocks: WAV headers want a
known length up front, which an open-ended stream cannot give.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .audio import (
    ENGINE_RATE,
    AudioBuffer,
    frames_to_bytes,
    read_stream_blocks,
    read_wav,
    write_wav,
)
from .errors import DevoError
from .metrics import EnhancementTriple, MetricReport, compute_metrics
from .mix import run_manifest
from .model import (
    BLOCK_SAMPLES,
    Model,
    ModelConfig,
    adapt_bundle,
    build_model,
    enhance_offline,
    open_stream,
)
from .weights import load_bundle, save_bundle

log = logging.getLogger("devo")


def _load_model(path: str) -> Model:
    bundle = load_bundle(path)
    config = ModelConfig.from_dict(bundle.config)
    return build_model(config, bundle)


def _enhance_streaming(model: Model, noisy: AudioBuffer) -> tuple:
    """Block-by-block enhancement; returns (output, real-time factor)."""
    session = open_stream(model)
    n = len(noisy)
    step = session.block_samples
    padded = ((n + step - 1) // step) * step
    x = np.zeros(padded, dtype=np.float32)
    x[:n] = noisy.samples
    out = np.empty(padded, dtype=np.float32)
    started = time.perf_counter()
    for lo in range(0, padded, step):
        out[lo:lo + step] = session.push(x[lo:lo + step])
    elapsed = time.perf_counter() - started
    audio_seconds = padded / ENGINE_RATE
    rtf = elapsed / audio_seconds if audio_seconds else 0.0
    return AudioBuffer(out[:n], ENGINE_RATE), rtf


def cmd_enhance(args) -> int:
    model = _load_model(args.model)
    noisy = read_wav(getattr(args, "in"))
    if args.mode == "streaming":
        enhanced, rtf = _enhance_streaming(model, noisy)
        print(f"real-time-factor: {rtf:.4f}")
    else:
        enhanced = enhance_offline(model, noisy)
    write_wav(args.out, enhanced, args.encoding)
    return 0


def cmd_stream(args) -> int:
    model = _load_model(args.model)
    session = open_stream(model)
    stdout = sys.stdout.buffer
    blocks = read_stream_blocks(sys.stdin.buffer, BLOCK_SAMPLES)
    processed = 0
    started = time.perf_counter()
    while True:
        try:
            block = next(blocks)
        except StopIteration as stop:
            if stop.value:
                log.warning("dropping %d trailing bytes (not a whole %d-sample block)",
                            stop.value, BLOCK_SAMPLES)
            break
        out = session.push(block)
        stdout.write(frames_to_bytes(out))
        stdout.flush()
        processed += 1
    elapsed = time.perf_counter() - started
    if processed:
        rtf = elapsed / (processed * BLOCK_SAMPLES / ENGINE_RATE)
        log.info("processed %d blocks, real-time-factor %.4f", processed, rtf)
    return 0


def cmd_mix(args) -> int:
    summary = run_manifest(args.manifest, args.seed)
    print(f"mixed {summary.succeeded} items, {summary.failed} failures")
    for index, message in summary.failures:
        log.error("line %d: %s", index, message)
    return 0 if summary.failed == 0 else 1


def _parse_eval_line(line: str):
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise DevoError(f"eval manifest line needs 4 tab-separated fields, got {len(parts)}")
    return parts


def cmd_eval(args) -> int:
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    resynth_model = None
    if args.reference == "resynth":
        if not args.model:
            raise DevoError("--reference resynth needs --model")
        resynth_model = _load_model(args.model)

    rows = []
    failures = 0
    text = Path(args.manifest).read_text(encoding="utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            utt_id, clean_path, noisy_path, enhanced_path = _parse_eval_line(line)
            clean = read_wav(clean_path)
            noisy = read_wav(noisy_path)
            enhanced = read_wav(enhanced_path)
            if resynth_model is not None:
                clean = enhance_offline(resynth_model, clean)
            triple = EnhancementTriple(clean=clean, noisy=noisy, enhanced=enhanced)
            rows.append((utt_id, compute_metrics(triple, metric_names)))
        except (DevoError, OSError) as exc:
            failures += 1
            log.error("eval item failed: %s", exc)
    report = MetricReport.from_results(rows, metric_names)
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    print(f"evaluated {len(rows)} items, {failures} failures -> {args.out}")
    return 0 if failures == 0 else 1


def cmd_inspect(args) -> int:
    bundle = load_bundle(args.model)
    config = ModelConfig.from_dict(bundle.config)
    config.validate()
    print(f"format version: {bundle.version}")
    print(f"causal: {config.causal}")
    print(f"encoder downsample: {config.encoder_downsample}x"
          f" | feature upsample: {config.feature_upsample}x"
          f" | vocoder upsample: {config.vocoder_upsample}x")
    print("tensors:")
    section_params = {}
    for name, tensor in bundle.tensors.items():
        print(f"  {name}  {tuple(tensor.shape)}")
        section = name.split(".")[0]
        section_params[section] = section_params.get(section, 0) + int(tensor.size)
    for section in sorted(section_params):
        print(f"{section} parameters: {section_params[section]}")
    print(f"total parameters: {bundle.parameter_count()}")
    return 0


def cmd_adapt(args) -> int:
    bundle = load_bundle(args.model)
    adapted = adapt_bundle(bundle, args.new_in)
    save_bundle(adapted, args.out)
    print(f"adapted input layer to {args.new_in} channels -> {args.out}")
    return 0


# Flags a subcommand cannot run without; enforced after the config-file merge
# so a config file may supply them.
_REQUIRED = {
    "enhance": ("model", "in", "out"),
    "stream": ("model",),
    "mix": ("manifest",),
    "eval": ("manifest", "out"),
    "inspect": ("model",),
    "adapt": ("model", "new_in", "out"),
}
_CONFIG_TYPES = {"seed": int, "new_in": int}


def _apply_config_file(args: argparse.Namespace, argv) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
                for a in argv if a.startswith("--")}
    for raw in Path(args.config).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DevoError(f"config line {line!r} is not key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("command", "fn", "config"):
            raise DevoError(f"unknown config key {key!r}")
        if dest in explicit:
            continue  # explicit flags win
        setattr(args, dest, _CONFIG_TYPES.get(dest, str)(value))
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="devo",
                                     description="Streaming denoising-vocoder engine")
    sub = parser.add_subparsers(dest="command", required=True)

    enhance = sub.add_parser("enhance", help="enhance one WAV file")
    enhance.add_argument("--model")
    enhance.add_argument("--in")
    enhance.add_argument("--out")
    enhance.add_argument("--mode", choices=("offline", "streaming"), default="offline")
    enhance.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    enhance.add_argument("--config")
    enhance.set_defaults(fn=cmd_enhance)

    stream = sub.add_parser("stream", help="enhance raw float32 stdin to stdout")
    stream.add_argument("--model")
    stream.add_argument("--config")
    stream.set_defaults(fn=cmd_stream)

    mix = sub.add_parser("mix", help="build mixtures from a manifest")
    mix.add_argument("--manifest")
    mix.add_argument("--seed", type=int, default=0)
    mix.add_argument("--config")
    mix.set_defaults(fn=cmd_mix)

    evaluate = sub.add_parser("eval", help="run metrics over a triples manifest")
    evaluate.add_argument("--manifest")
    evaluate.add_argument("--metrics", default=",".join(metrics_mod.METRIC_NAMES))
    evaluate.add_argument("--out")
    evaluate.add_argument("--model")
    evaluate.add_argument("--reference", choices=("clean", "resynth"), default="clean")
    evaluate.add_argument("--config")
    evaluate.set_defaults(fn=cmd_eval)

    inspect = sub.add_parser("inspect", help="print bundle config and tensors")
    inspect.add_argument("--model")
    inspect.add_argument("--config")
    inspect.set_defaults(fn=cmd_inspect)

    adapt = sub.add_parser("adapt", help="re-init the input layer for a new channel count")
    adapt.add_argument("--model")
    adapt.add_argument("--new-in", type=int)
    adapt.add_argument("--out")
    adapt.add_argument("--config")
    adapt.set_defaults(fn=cmd_adapt)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=os.environ.get("DEVO_LOG", "INFO").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, argv)
        missing = [name for name in _REQUIRED[args.command]
                   if getattr(args, name) is None]
        if missing:
            raise DevoError(
                f"{args.command} is missing required flags: "
                + ", ".join("--" + m.replace("_", "-") for m in missing)
            )
        return args.fn(args)
    except (DevoError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
