"""Deterministic signal analysis: STFT, log-Mel features, BS.1770 loudness.

The loudness meter follows ITU-R BS.1770-4 (K-weighting, 400 ms blocks with
75 % overlap, absolute -70 LUFS gate, relative -10 LU gate). Filter
coefficients are re-derived analytically for the input sample rate since the
standard only tabulates 48 kHz; the derivation reproduces the published
48 kHz table to full precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer
from .errors import LoudnessUnavailableError, ShortInputError

LUFS_OFFSET = -0.691
ABSOLUTE_GATE_LUFS = -70.0
RELATIVE_GATE_LU = 10.0


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT split into real/imag planes, both T x F."""

    real: np.ndarray
    imag: np.ndarray
    frame_len: int
    hop_len: int

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError("real/imag shape mismatch")

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


@dataclass(frozen=True)
class MelConfig:
    """Log-Mel front-end settings; defaults give the 100 Hz / 128-band layout."""

    frame_len: int = 1024
    hop_len: int = 160
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (0 <= self.fmin < self.fmax):
            raise ValueError("need 0 <= fmin < fmax")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


@dataclass(frozen=True)
class LoudnessReading:
    lufs: float
    gated_block_count: int


@dataclass(frozen=True)
class FeatureMap:
    """Time-major T x C feature matrix at a known frame rate."""

    data: np.ndarray
    frame_rate: float

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"feature map must be 2-D, got shape {self.data.shape}")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")


def frame_count(n_samples: int, frame_len: int, hop_len: int) -> int:
    return (n_samples - frame_len) // hop_len + 1


def stft(x: AudioBuffer, frame_len: int, hop_len: int) -> Spectrogram:
    """Hann-windowed one-sided STFT with non-centered frames.

    Frame t covers samples [t*hop, t*hop + frame_len); there is no padding, so
    the analysis is strictly causal.
    """
    n = len(x)
    if n < frame_len:
        raise ShortInputError(f"input of {n} samples is shorter than one {frame_len}-sample frame")
    t = frame_count(n, frame_len, hop_len)
    samples = x.samples.astype(np.float64)
    idx = np.arange(t)[:, None] * hop_len + np.arange(frame_len)[None, :]
    frames = samples[idx]
    window = _hann(frame_len)
    spec = np.fft.rfft(frames * window, axis=1)
    return Spectrogram(np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag),
                       frame_len, hop_len)


def _hann(n: int) -> np.ndarray:
    # Periodic Hann, the standard analysis window for STFT front-ends.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, frame_len: int, sample_rate: int,
                   fmin: float, fmax: float) -> np.ndarray:
    """Triangular peak-1 mel filters evaluated on the one-sided FFT bin grid."""
    n_bins = frame_len // 2 + 1
    bin_freqs = np.arange(n_bins) * (sample_rate / frame_len)
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_center_freqs(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each mel band."""
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def log_mel(x: AudioBuffer, cfg: MelConfig = MelConfig()) -> FeatureMap:
    """Log-mel spectrogram: magnitude STFT -> mel filterbank -> ln(max(v, floor))."""
    spec = stft(x, cfg.frame_len, cfg.hop_len)
    fb = mel_filterbank(cfg.n_mels, cfg.frame_len, x.sample_rate, cfg.fmin, cfg.fmax)
    mel = spec.magnitude @ fb.T
    out = np.log(np.maximum(mel, cfg.log_floor))
    return FeatureMap(out, x.sample_rate / cfg.hop_len)


def k_weighting_coeffs(sample_rate: int):
    """BS.1770 pre-filter biquads (high-shelf, then high-pass) for any rate.

    Analytic re-derivation of the stage-1 shelf and stage-2 RLB high-pass;
    plugging in 48 kHz reproduces the coefficient table printed in the
    standard.
    """
    # Stage 1: spherical-head high shelf.
    f0 = 1681.974450955533
    gain_db = 3.999843853973347
    q = 0.7071752369554196
    k = math.tan(math.pi * f0 / sample_rate)
    vh = 10.0 ** (gain_db / 20.0)
    vb = vh ** 0.4996667741545416
    a0 = 1.0 + k / q + k * k
    shelf_b = np.array([(vh + vb * k / q + k * k) / a0,
                        2.0 * (k * k - vh) / a0,
                        (vh - vb * k / q + k * k) / a0])
    shelf_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])

    # Stage 2: RLB high-pass.
    f0 = 38.13547087602444
    q = 0.5003270373238773
    k = math.tan(math.pi * f0 / sample_rate)
    a0 = 1.0 + k / q + k * k
    hp_b = np.array([1.0, -2.0, 1.0])
    hp_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])
    return (shelf_b, shelf_a), (hp_b, hp_a)


def k_weight(x: AudioBuffer) -> AudioBuffer:
    """Apply the BS.1770 K-weighting pre-filter cascade."""
    (sb, sa), (hb, ha) = k_weighting_coeffs(x.sample_rate)
    y = lfilter(sb, sa, x.samples.astype(np.float64))
    y = lfilter(hb, ha, y)
    return AudioBuffer(y.astype(np.float32), x.sample_rate)


def k_weighting_gain_db(sample_rate: int, freq: float) -> float:
    """Cascade magnitude response at one frequency, in dB."""
    (sb, sa), (hb, ha) = k_weighting_coeffs(sample_rate)
    z = np.exp(-2j * np.pi * freq / sample_rate)
    h1 = (sb[0] + sb[1] * z + sb[2] * z * z) / (sa[0] + sa[1] * z + sa[2] * z * z)
    h2 = (hb[0] + hb[1] * z + hb[2] * z * z) / (ha[0] + ha[1] * z + ha[2] * z * z)
    return 20.0 * math.log10(abs(h1 * h2))


def _gating_block_powers(x: AudioBuffer) -> np.ndarray:
    """Mean-square power of K-weighted 400 ms blocks at 75 % overlap."""
    block = int(round(0.400 * x.sample_rate))
    hop = int(round(0.100 * x.sample_rate))
    if len(x) < block:
        raise ShortInputError(
            f"need at least 400 ms of audio ({block} samples at {x.sample_rate} Hz), got {len(x)}"
        )
    weighted = k_weight(x).samples.astype(np.float64)
    n_blocks = (len(weighted) - block) // hop + 1
    idx = np.arange(n_blocks)[:, None] * hop + np.arange(block)[None, :]
    return np.mean(weighted[idx] ** 2, axis=1)


def _power_to_lufs(power: float) -> float:
    return LUFS_OFFSET + 10.0 * math.log10(power)


def integrated_lufs(x: AudioBuffer) -> Optional[LoudnessReading]:
    """BS.1770-4 integrated loudness; None when every block is gated out."""
    powers = _gating_block_powers(x)
    block_lufs = np.full(len(powers), -np.inf)
    nonzero = powers > 0
    block_lufs[nonzero] = LUFS_OFFSET + 10.0 * np.log10(powers[nonzero])

    above_abs = block_lufs > ABSOLUTE_GATE_LUFS
    if not np.any(above_abs):
        return None
    relative_gate = _power_to_lufs(np.mean(powers[above_abs])) - RELATIVE_GATE_LU
    gated = above_abs & (block_lufs > relative_gate)
    if not np.any(gated):
        return None
    return LoudnessReading(_power_to_lufs(np.mean(powers[gated])), int(np.count_nonzero(gated)))


def require_lufs(x: AudioBuffer, label: str = "signal") -> float:
    reading = integrated_lufs(x)
    if reading is None:
        raise LoudnessUnavailableError(f"{label} has no measurable loudness (gated out)")
    return reading.lufs


def gain_for_snr(speech: AudioBuffer, noise: AudioBuffer, target_snr_db: float) -> float:
    """Linear gain g with LUFS(speech) - LUFS(g*noise) = target."""
    speech_lufs = require_lufs(speech, "speech")
    noise_lufs = require_lufs(noise, "noise")
    return 10.0 ** ((speech_lufs - noise_lufs - target_snr_db) / 20.0)
