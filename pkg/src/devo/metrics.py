"""Objective evaluation: spectral losses, STOI, SNR, and delta reporting.

The spectral magnitude loss averages the absolute difference of |real|+|imag|
STFT planes (1024/160 framing); the phase-constrained loss splits it evenly
between the speech estimate and the implied noise estimate. STOI follows
Taal et al. (2011): 10 kHz analysis, 25.6 ms Hann frames at 50 % overlap
zero-padded to 512 FFT points, 15 one-third-octave bands from 150 Hz, 384 ms
segments, -15 dB SDR clipping.

PESQ and the DNN-based quality predictors stay external tools; the CSV report
keeps labeled columns for them so full result tables can still be assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio import AudioBuffer, resample
from .dsp import MelConfig, log_mel, stft
from .errors import MetricInputError

LOSS_FRAME_LEN = 1024
LOSS_HOP_LEN = 160

STOI_RATE = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_HOP = 128
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT_FRAMES = 30  # 384 ms at the 12.8 ms hop
STOI_DYN_RANGE_DB = 40.0
STOI_BETA_DB = -15.0
_EPS = 1e-15

METRIC_NAMES = ("stoi", "snr", "lsm", "pcm", "mel_l1")
DELTA_METRICS = ("stoi", "snr")
EXTERNAL_COLUMNS = ("pesq", "nisqa", "dnsmos_sig", "dnsmos_bak", "dnsmos_ovl",
                    "csig", "cbak", "covl")


@dataclass(frozen=True)
class EnhancementTriple:
    """Clean reference, noisy mixture, and enhanced output of one utterance."""

    clean: AudioBuffer
    noisy: AudioBuffer
    enhanced: AudioBuffer

    def __post_init__(self):
        lengths = {len(self.clean), len(self.noisy), len(self.enhanced)}
        if len(lengths) != 1:
            raise MetricInputError(f"triple buffers differ in length: {sorted(lengths)}")
        rates = {self.clean.sample_rate, self.noisy.sample_rate, self.enhanced.sample_rate}
        if len(rates) != 1:
            raise MetricInputError(f"triple buffers differ in sample rate: {sorted(rates)}")

    @property
    def noise(self) -> AudioBuffer:
        """Ground-truth noise: mixture minus clean speech."""
        return AudioBuffer(self.noisy.samples - self.clean.samples, self.clean.sample_rate)

    @property
    def noise_estimate(self) -> AudioBuffer:
        """Implied noise estimate: mixture minus enhanced speech."""
        return AudioBuffer(self.noisy.samples - self.enhanced.samples, self.clean.sample_rate)


def _check_pair(a: AudioBuffer, b: AudioBuffer) -> None:
    if len(a) != len(b):
        raise MetricInputError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.sample_rate != b.sample_rate:
        raise MetricInputError(f"sample-rate mismatch: {a.sample_rate} vs {b.sample_rate}")


def spectral_magnitude_loss(a: AudioBuffer, b: AudioBuffer) -> float:
    """Mean absolute difference of the |real|+|imag| STFT planes."""
    _check_pair(a, b)
    spec_a = stft(a, LOSS_FRAME_LEN, LOSS_HOP_LEN)
    spec_b = stft(b, LOSS_FRAME_LEN, LOSS_HOP_LEN)
    mag_a = np.abs(spec_a.real) + np.abs(spec_a.imag)
    mag_b = np.abs(spec_b.real) + np.abs(spec_b.imag)
    return float(np.mean(np.abs(mag_a - mag_b)))


def pcm_loss(triple: EnhancementTriple) -> float:
    """Phase-constrained magnitude loss: spectral loss split over speech and noise."""
    speech_term = spectral_magnitude_loss(triple.clean, triple.enhanced)
    noise_term = spectral_magnitude_loss(triple.noise, triple.noise_estimate)
    return 0.5 * speech_term + 0.5 * noise_term


def mel_l1_loss(triple: EnhancementTriple, cfg: MelConfig = MelConfig()) -> float:
    """L1 log-mel distance with the same speech/noise split as the PCM loss."""
    def l1(a: AudioBuffer, b: AudioBuffer) -> float:
        return float(np.mean(np.abs(log_mel(a, cfg).data - log_mel(b, cfg).data)))

    return 0.5 * l1(triple.clean, triple.enhanced) + 0.5 * l1(triple.noise, triple.noise_estimate)


def snr_db(clean: AudioBuffer, degraded: AudioBuffer) -> float:
    """Plain energy SNR; +inf when the residual is exactly zero."""
    _check_pair(clean, degraded)
    signal = clean.samples.astype(np.float64)
    residual = degraded.samples.astype(np.float64) - signal
    res_energy = float(np.sum(residual ** 2))
    if res_energy == 0.0:
        return math.inf
    sig_energy = float(np.sum(signal ** 2))
    if sig_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(sig_energy / res_energy)


# --- STOI ------------------------------------------------------------------

def _stoi_window() -> np.ndarray:
    # Symmetric Hann without the zero endpoints, as in the reference meter.
    return np.hanning(STOI_FRAME + 2)[1:-1]


def _remove_silent_frames(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Drop frames 40 dB below the loudest clean frame; overlap-add the rest.

    The mask comes from the clean signal only and is applied to both.
    """
    w = _stoi_window()
    starts = np.arange(0, len(x) - STOI_FRAME + 1, STOI_HOP)
    if len(starts) == 0:
        raise MetricInputError("signal shorter than one analysis frame")
    idx = starts[:, None] + np.arange(STOI_FRAME)[None, :]
    x_frames = x[idx] * w
    y_frames = y[idx] * w
    energies_db = 20.0 * np.log10(np.linalg.norm(x_frames, axis=1) + _EPS)
    mask = energies_db > energies_db.max() - STOI_DYN_RANGE_DB
    x_frames, y_frames = x_frames[mask], y_frames[mask]

    n = len(x_frames)
    out_len = STOI_HOP * (n - 1) + STOI_FRAME if n else 0
    x_out = np.zeros(out_len)
    y_out = np.zeros(out_len)
    for i in range(n):
        x_out[i * STOI_HOP:i * STOI_HOP + STOI_FRAME] += x_frames[i]
        y_out[i * STOI_HOP:i * STOI_HOP + STOI_FRAME] += y_frames[i]
    return x_out, y_out


def third_octave_band_matrix() -> Tuple[np.ndarray, np.ndarray]:
    """(bands x bins) membership matrix and band center frequencies."""
    bin_freqs = np.arange(STOI_NFFT // 2 + 1) * (STOI_RATE / STOI_NFFT)
    centers = STOI_MIN_FREQ * 2.0 ** (np.arange(STOI_BANDS) / 3.0)
    lows = centers * 2.0 ** (-1.0 / 6.0)
    highs = centers * 2.0 ** (1.0 / 6.0)
    obm = np.zeros((STOI_BANDS, len(bin_freqs)))
    for band in range(STOI_BANDS):
        lo = int(np.argmin(np.square(bin_freqs - lows[band])))
        hi = int(np.argmin(np.square(bin_freqs - highs[band])))
        obm[band, lo:hi] = 1.0
    return obm, centers


def _stoi_band_envelopes(sig: np.ndarray, obm: np.ndarray) -> np.ndarray:
    w = _stoi_window()
    starts = np.arange(0, len(sig) - STOI_FRAME + 1, STOI_HOP)
    idx = starts[:, None] + np.arange(STOI_FRAME)[None, :]
    spec = np.fft.rfft(sig[idx] * w, n=STOI_NFFT, axis=1)
    return np.sqrt((np.abs(spec) ** 2) @ obm.T)  # (frames, bands)


def stoi(clean: AudioBuffer, processed: AudioBuffer) -> float:
    """Short-time objective intelligibility of `processed` given `clean`."""
    _check_pair(clean, processed)
    if clean.sample_rate != STOI_RATE:
        clean = resample(clean, STOI_RATE)
        processed = resample(processed, STOI_RATE)
    x, y = _remove_silent_frames(clean.samples.astype(np.float64),
                                 processed.samples.astype(np.float64))
    obm, _ = third_octave_band_matrix()
    if len(x) < STOI_FRAME:
        raise MetricInputError("too little active signal for one analysis frame")
    bx = _stoi_band_envelopes(x, obm)
    by = _stoi_band_envelopes(y, obm)
    n_frames = bx.shape[0]
    if n_frames < STOI_SEGMENT_FRAMES:
        raise MetricInputError(
            f"need {STOI_SEGMENT_FRAMES} active frames for one segment, got {n_frames}"
        )

    clip_gain = 1.0 + 10.0 ** (-STOI_BETA_DB / 20.0)
    total = 0.0
    count = 0
    for end in range(STOI_SEGMENT_FRAMES, n_frames + 1):
        seg_x = bx[end - STOI_SEGMENT_FRAMES:end].T  # (bands, 30)
        seg_y = by[end - STOI_SEGMENT_FRAMES:end].T
        alpha = np.sqrt(np.sum(seg_x ** 2, axis=1, keepdims=True)
                        / (np.sum(seg_y ** 2, axis=1, keepdims=True) + _EPS))
        y_prime = np.minimum(seg_y * alpha, seg_x * clip_gain)
        xn = seg_x - seg_x.mean(axis=1, keepdims=True)
        yn = y_prime - y_prime.mean(axis=1, keepdims=True)
        xn /= np.linalg.norm(xn, axis=1, keepdims=True) + _EPS
        yn /= np.linalg.norm(yn, axis=1, keepdims=True) + _EPS
        total += float(np.sum(xn * yn))
        count += STOI_BANDS
    return total / count


def delta_metric(metric, triple: EnhancementTriple) -> float:
    """metric(enhanced vs clean) minus metric(noisy vs clean)."""
    return metric(triple.clean, triple.enhanced) - metric(triple.clean, triple.noisy)


# --- reporting ---------------------------------------------------------------

_PAIR_METRICS = {
    "stoi": stoi,
    "snr": snr_db,
    "lsm": spectral_magnitude_loss,
}
_TRIPLE_METRICS = {
    "pcm": pcm_loss,
    "mel_l1": mel_l1_loss,
}


def compute_metrics(triple: EnhancementTriple,
                    metrics: Sequence[str] = METRIC_NAMES) -> Dict[str, float]:
    """Per-utterance values, with a delta column for every eligible metric."""
    out: Dict[str, float] = {}
    for name in metrics:
        if name in _PAIR_METRICS:
            fn = _PAIR_METRICS[name]
            out[name] = fn(triple.clean, triple.enhanced)
            if name in DELTA_METRICS:
                out[f"delta_{name}"] = out[name] - fn(triple.clean, triple.noisy)
        elif name in _TRIPLE_METRICS:
            out[name] = _TRIPLE_METRICS[name](triple)
        else:
            raise MetricInputError(f"unknown metric {name!r}")
    return out


@dataclass
class MetricReport:
    """Per-utterance metric rows plus the corpus mean."""

    columns: List[str]
    rows: List[Tuple[str, Dict[str, float]]]

    @classmethod
    def from_results(cls, results: Sequence[Tuple[str, Dict[str, float]]],
                     metrics: Sequence[str] = METRIC_NAMES) -> "MetricReport":
        columns = []
        for name in metrics:
            columns.append(name)
            if name in DELTA_METRICS:
                columns.append(f"delta_{name}")
        return cls(columns=columns, rows=list(results))

    def corpus_mean(self) -> Dict[str, float]:
        means = {}
        for col in self.columns:
            values = [row[1][col] for row in self.rows if col in row[1]]
            means[col] = float(np.mean(values)) if values else float("nan")
        return means

    def to_csv(self) -> str:
        header = ["utterance"] + self.columns + list(EXTERNAL_COLUMNS)
        lines = [",".join(header)]
        for utt_id, values in self.rows:
            cells = [utt_id]
            cells += [_format_value(values.get(col)) for col in self.columns]
            cells += ["" for _ in EXTERNAL_COLUMNS]
            lines.append(",".join(cells))
        means = self.corpus_mean()
        mean_cells = ["mean"] + [_format_value(means.get(col)) for col in self.columns]
        mean_cells += ["" for _ in EXTERNAL_COLUMNS]
        lines.append(",".join(mean_cells))
        return "\n".join(lines) + "\n"


def _format_value(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.6f}" if math.isfinite(value) else str(value)
