"""Plain-loop reference implementation of the 2011 short-time intelligibility
measure, used once to compute the committed golden values.

Deliberately written with explicit loops and its own brute-force resampler so
it shares no computation path with the production metric: 10 kHz analysis,
256-sample Hann frames at 50 % overlap padded to a 512-point FFT, 40 dB
silent-frame gate from the clean signal, 15 one-third-octave bands starting at
150 Hz, 30-frame segments, -15 dB SDR clipping, mean band/segment correlation.

The measure is only defined up to its prescribed anti-alias front end, so the
resampler here uses the same fixed filter design the engine documents (64 taps
per phase, Kaiser beta 7) but computes the resampling by explicit zero-stuffed
convolution rather than a polyphase routine.
"""

import math

import numpy as np

FS = 10000
FRAME = 256
NFFT = 512
HOP = 128
BANDS = 15
MIN_FREQ = 150.0
SEG = 30
DYN_RANGE = 40.0
BETA = -15.0

TAPS_PER_PHASE = 64
KAISER_BETA = 7.0


def _resample_bruteforce(x, fs_from, fs_to):
    """Zero-stuff, convolve with the documented Kaiser-windowed sinc, decimate."""
    g = math.gcd(fs_from, fs_to)
    up, down = fs_to // g, fs_from // g
    if up == down:
        return np.asarray(x, dtype=np.float64)
    half = (TAPS_PER_PHASE * up) // 2
    n = np.arange(-half, half + 1)
    cutoff = 1.0 / max(up, down)
    taps = cutoff * np.sinc(cutoff * n) * np.kaiser(2 * half + 1, KAISER_BETA)
    taps *= up / taps.sum()

    stuffed = np.zeros(len(x) * up)
    stuffed[::up] = x
    full = np.convolve(stuffed, taps)  # index k corresponds to up-rate time k - half
    out_len = int(round(len(x) * fs_to / fs_from))
    out = np.zeros(out_len)
    for m in range(out_len):
        k = m * down + half
        if k < len(full):
            out[m] = full[k]
    return out


def _frames(sig):
    starts = range(0, len(sig) - FRAME + 1, HOP)
    w = np.hanning(FRAME + 2)[1:-1]
    return [w * sig[s:s + FRAME] for s in starts]


def _remove_silence(x, y):
    xf = _frames(x)
    yf = _frames(y)
    energies = [20.0 * np.log10(np.linalg.norm(f) + 1e-15) for f in xf]
    threshold = max(energies) - DYN_RANGE
    keep = [i for i, e in enumerate(energies) if e > threshold]
    n = len(keep)
    if n == 0:
        return np.zeros(0), np.zeros(0)
    out_len = HOP * (n - 1) + FRAME
    xs = np.zeros(out_len)
    ys = np.zeros(out_len)
    for j, i in enumerate(keep):
        xs[j * HOP:j * HOP + FRAME] += xf[i]
        ys[j * HOP:j * HOP + FRAME] += yf[i]
    return xs, ys


def _band_matrix():
    freqs = np.arange(NFFT // 2 + 1) * FS / NFFT
    obm = np.zeros((BANDS, len(freqs)))
    for band in range(BANDS):
        center = MIN_FREQ * 2.0 ** (band / 3.0)
        lo_edge = center / 2.0 ** (1.0 / 6.0)
        hi_edge = center * 2.0 ** (1.0 / 6.0)
        lo = int(np.argmin((freqs - lo_edge) ** 2))
        hi = int(np.argmin((freqs - hi_edge) ** 2))
        obm[band, lo:hi] = 1.0
    return obm


def _band_envelopes(sig, obm):
    rows = []
    for frame in _frames(sig):
        spec = np.fft.rfft(frame, NFFT)
        power = np.abs(spec) ** 2
        rows.append([np.sqrt(np.sum(power[obm[b] > 0])) for b in range(BANDS)])
    return np.array(rows)  # (frames, bands)


def reference_stoi(clean, processed, fs):
    clean = np.asarray(clean, dtype=np.float64)
    processed = np.asarray(processed, dtype=np.float64)
    if fs != FS:
        clean = _resample_bruteforce(clean, fs, FS)
        processed = _resample_bruteforce(processed, fs, FS)
    x, y = _remove_silence(clean, processed)
    obm = _band_matrix()
    bx = _band_envelopes(x, obm)
    by = _band_envelopes(y, obm)
    if bx.shape[0] < SEG:
        raise ValueError("too short for one segment")

    clip_gain = 1.0 + 10.0 ** (-BETA / 20.0)
    values = []
    for end in range(SEG, bx.shape[0] + 1):
        for band in range(BANDS):
            xv = bx[end - SEG:end, band]
            yv = by[end - SEG:end, band]
            scale = np.sqrt(np.sum(xv ** 2) / (np.sum(yv ** 2) + 1e-15))
            yc = np.minimum(yv * scale, xv * clip_gain)
            xn = xv - xv.mean()
            yn = yc - yc.mean()
            denom = (np.linalg.norm(xn) + 1e-15) * (np.linalg.norm(yn) + 1e-15)
            values.append(np.dot(xn, yn) / denom)
    return float(np.mean(values))
