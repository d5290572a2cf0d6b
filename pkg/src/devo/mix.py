"""Dataset mixture generation: loudness-matched speech/noise mixing.

Target SNR is a difference of integrated loudness values, so impulsive noise
does not dominate the level calculation the way a peak- or RMS-based gain
would let it. Unset SNRs draw from U(-5, 15) dB. Every line of a manifest
derives its own RNG seed from (global seed, line index), making runs
reproducible byte-for-byte and lines order-independent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .audio import ENGINE_RATE, AudioBuffer, read_wav, resample, write_wav
from .dsp import gain_for_snr
from .errors import DevoError, MixError

SNR_LOW_DB = -5.0
SNR_HIGH_DB = 15.0
PEAK_LIMIT = 0.99


@dataclass
class MixSpec:
    speech_path: str
    noise_path: str
    snr_db: Optional[float] = None  # None: sample from U(-5, 15)
    seed: int = 0
    output_stem: Optional[str] = None

    def resolve_snr(self, rng: np.random.Generator) -> float:
        if self.snr_db is not None:
            if not np.isfinite(self.snr_db):
                raise MixError(f"non-finite target SNR {self.snr_db}")
            return float(self.snr_db)
        return float(rng.uniform(SNR_LOW_DB, SNR_HIGH_DB))


def _load_at_engine_rate(path: str) -> AudioBuffer:
    buf = read_wav(path)
    if buf.sample_rate != ENGINE_RATE:
        buf = resample(buf, ENGINE_RATE)
    return buf


def _loop_to_length(noise: AudioBuffer, length: int) -> AudioBuffer:
    """Trim or tile noise to `length` samples, looping at a zero crossing."""
    samples = noise.samples
    if len(samples) >= length:
        return AudioBuffer(samples[:length], noise.sample_rate)
    if len(samples) == 0:
        raise MixError("noise file is empty")
    # Cut the loop segment at the last sign change so repeats do not click.
    signs = np.signbit(samples)
    crossings = np.nonzero(signs[1:] != signs[:-1])[0]
    cut = int(crossings[-1]) + 1 if len(crossings) else len(samples)
    segment = samples[:cut]
    reps = -(-length // len(segment))
    tiled = np.tile(segment, reps)[:length]
    return AudioBuffer(tiled, noise.sample_rate)


def make_mixture(spec: MixSpec,
                 rng: Optional[np.random.Generator] = None
                 ) -> Tuple[AudioBuffer, AudioBuffer, AudioBuffer, float]:
    """Build (mixture, clean, scaled_noise) plus the realized target SNR.

    Mixing runs in float64; the emitted noise buffer is the exact float32
    residual mixture - clean, so the additive identity holds bit-for-bit on
    the outputs (normalization included).
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    clean = _load_at_engine_rate(spec.speech_path)
    noise = _load_at_engine_rate(spec.noise_path)
    noise = _loop_to_length(noise, len(clean))
    target = spec.resolve_snr(rng)

    gain = gain_for_snr(clean, noise, target)
    clean64 = clean.samples.astype(np.float64)
    scaled64 = gain * noise.samples.astype(np.float64)
    mix64 = clean64 + scaled64

    peak = float(np.max(np.abs(mix64))) if len(mix64) else 0.0
    if peak > PEAK_LIMIT:
        norm = PEAK_LIMIT / peak
        clean64 = clean64 * norm
        mix64 = mix64 * norm

    clean_out = AudioBuffer(clean64.astype(np.float32), ENGINE_RATE)
    mixture = AudioBuffer(mix64.astype(np.float32), ENGINE_RATE)
    residual = mixture.samples - clean_out.samples
    return mixture, clean_out, AudioBuffer(residual, ENGINE_RATE), target


def line_seed(global_seed: int, line_index: int) -> int:
    """Stable per-line seed; independent of processing order."""
    digest = hashlib.sha256(f"{global_seed}:{line_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ManifestSummary:
    succeeded: int = 0
    failed: int = 0
    failures: List[Tuple[int, str]] = None

    def __post_init__(self):
        if self.failures is None:
            self.failures = []


def parse_manifest_line(line: str) -> Tuple[str, str, Optional[float], str]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise MixError(f"expected 4 tab-separated fields, got {len(parts)}")
    speech, noise, snr_text, stem = parts
    if snr_text == "rand":
        snr = None
    else:
        try:
            snr = float(snr_text)
        except ValueError as exc:
            raise MixError(f"bad SNR field {snr_text!r}") from exc
    return speech, noise, snr, stem


def run_manifest(manifest_path, global_seed: int = 0) -> ManifestSummary:
    """One mixture triple per line; per-line failures are recorded, not fatal.

    Outputs land at <stem>.mix.wav / <stem>.clean.wav / <stem>.noise.wav as
    float32 WAV so the mixture identity mixture = clean + noise is exact.
    """
    summary = ManifestSummary()
    text = Path(manifest_path).read_text(encoding="utf-8")
    for index, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            speech, noise, snr, stem = parse_manifest_line(line)
            spec = MixSpec(speech_path=speech, noise_path=noise, snr_db=snr,
                           seed=line_seed(global_seed, index), output_stem=stem)
            mixture, clean, scaled_noise, _ = make_mixture(spec)
            write_wav(f"{stem}.mix.wav", mixture, "float32")
            write_wav(f"{stem}.clean.wav", clean, "float32")
            write_wav(f"{stem}.noise.wav", scaled_noise, "float32")
            summary.succeeded += 1
        except (DevoError, OSError) as exc:
            summary.failed += 1
            summary.failures.append((index, str(exc)))
    return summary
