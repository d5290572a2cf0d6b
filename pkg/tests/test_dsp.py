import math

import numpy as np
import pytest

import siggen
from devo.audio import AudioBuffer
from devo.dsp import (
    MelConfig,
    gain_for_snr,
    integrated_lufs,
    k_weight,
    k_weighting_coeffs,
    k_weighting_gain_db,
    log_mel,
    mel_center_freqs,
    stft,
)
from devo.errors import LoudnessUnavailableError, ShortInputError


def _buf(x, fs=16000):
    return AudioBuffer(np.asarray(x, np.float32), fs)


class TestStft:
    def test_zero_input(self):
        spec = stft(_buf(np.zeros(2048)), 1024, 160)
        assert not spec.real.any() and not spec.imag.any()

    def test_frame_count_formula(self):
        spec = stft(_buf(np.zeros(1184)), 1024, 160)
        assert spec.real.shape == (2, 513)

    def test_impulse_against_direct_dft(self):
        # 4-point frame, direct DFT oracle on the windowed frame
        x = np.zeros(8, np.float32)
        x[0] = 1.0
        spec = stft(_buf(x), 4, 4)
        window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(4) / 4)
        frame = x[:4] * window
        oracle = np.fft.rfft(frame)
        np.testing.assert_allclose(spec.real[0], oracle.real, atol=1e-12)
        np.testing.assert_allclose(spec.imag[0], oracle.imag, atol=1e-12)
        # impulse at sample 0 sees only window[0] == 0: whole frame-0 row is zero
        assert np.max(np.abs(spec.real[0])) == 0.0

    def test_linearity(self, rng):
        x = rng.normal(0, 0.3, 4000).astype(np.float32)
        y = rng.normal(0, 0.3, 4000).astype(np.float32)
        a, b = 0.7, -1.3
        combo = stft(_buf(a * x + b * y), 1024, 160)
        sx = stft(_buf(x), 1024, 160)
        sy = stft(_buf(y), 1024, 160)
        np.testing.assert_allclose(combo.real, a * sx.real + b * sy.real, atol=1e-5)
        np.testing.assert_allclose(combo.imag, a * sx.imag + b * sy.imag, atol=1e-5)

    def test_parseval_per_frame(self, rng):
        x = rng.normal(0, 0.3, 3000)
        spec = stft(_buf(x), 1024, 160)
        window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024)
        for t in range(spec.real.shape[0]):
            frame = x[t * 160:t * 160 + 1024] * window
            time_energy = np.sum(frame ** 2)
            power = spec.real[t] ** 2 + spec.imag[t] ** 2
            spec_energy = (power[0] + power[-1] + 2 * np.sum(power[1:-1])) / 1024
            assert abs(spec_energy - time_energy) / time_energy < 1e-4

    def test_too_short(self):
        with pytest.raises(ShortInputError):
            stft(_buf(np.zeros(100)), 1024, 160)


class TestLogMel:
    def test_all_zero_hits_floor(self):
        cfg = MelConfig()
        fm = log_mel(_buf(np.zeros(4000)), cfg)
        assert np.allclose(fm.data, math.log(cfg.log_floor))

    def test_output_shape(self):
        fm = log_mel(_buf(np.zeros(16000)), MelConfig())
        frames = (16000 - 1024) // 160 + 1
        assert fm.data.shape == (frames, 128)
        assert fm.frame_rate == 100.0

    def test_sine_peaks_in_nearest_band(self):
        cfg = MelConfig()
        centers = mel_center_freqs(cfg)
        expected_band = int(np.argmin(np.abs(centers - 1000.0)))
        fm = log_mel(_buf(siggen.sine(1000, 0.5, 16000, amplitude=0.5)), cfg)
        for row in fm.data:
            assert abs(int(np.argmax(row)) - expected_band) <= 1

    def test_monotone_under_gain(self, rng):
        x = rng.normal(0, 0.1, 6000).astype(np.float32)
        lo = log_mel(_buf(x), MelConfig()).data
        hi = log_mel(_buf(4.0 * x), MelConfig()).data
        assert np.all(hi >= lo - 1e-12)


class TestKWeighting:
    def test_zero_in_zero_out(self):
        out = k_weight(_buf(np.zeros(1000)))
        assert not out.samples.any()

    def test_derivation_matches_published_48k_table(self):
        (shelf_b, shelf_a), _ = k_weighting_coeffs(48000)
        np.testing.assert_allclose(
            shelf_b, [1.53512485958697, -2.69169618940638, 1.19839281085285], atol=1e-10)
        np.testing.assert_allclose(
            shelf_a, [1.0, -1.69065929318241, 0.73248077421585], atol=1e-10)

    def test_997_hz_gain_near_unity(self):
        # transfer-function oracle, then measured steady-state gain
        oracle_db = k_weighting_gain_db(16000, 997.0)
        assert abs(oracle_db) < 0.75  # shelf sits at ~+0.73 dB here
        x = siggen.sine(997, 1.0, 16000, amplitude=0.5)
        y = k_weight(_buf(x)).samples[4000:]
        measured_db = 20 * np.log10(np.sqrt(np.mean(y.astype(np.float64) ** 2))
                                    / np.sqrt(np.mean(x[4000:].astype(np.float64) ** 2)))
        assert abs(measured_db - oracle_db) < 0.1

    def test_38_hz_attenuated(self):
        oracle_db = k_weighting_gain_db(16000, 38.0)
        x = siggen.sine(38, 2.0, 16000, amplitude=0.5)
        y = k_weight(_buf(x)).samples[16000:]
        measured_db = 20 * np.log10(np.sqrt(np.mean(y.astype(np.float64) ** 2))
                                    / np.sqrt(np.mean(x[16000:].astype(np.float64) ** 2)))
        # the RLB high-pass corner sits at 38 Hz: ~5.9 dB down, not more
        assert measured_db < -5.0
        assert abs(measured_db - oracle_db) < 0.2
        # an octave below the corner the rolloff is much deeper (oracle: -13.9 dB)
        assert k_weighting_gain_db(16000, 19.0) < -13.0


class TestIntegratedLufs:
    def test_silence_is_absent(self):
        assert integrated_lufs(_buf(np.zeros(16000))) is None

    def test_full_scale_997_sine(self):
        reading = integrated_lufs(_buf(siggen.sine(997, 2.0, 16000)))
        # analytic oracle: -0.691 + 10 log10(0.5 * |H(997)|^2)
        expected = -0.691 + 10 * math.log10(0.5) + k_weighting_gain_db(16000, 997.0)
        assert abs(expected - -3.01) < 0.1
        assert abs(reading.lufs - expected) < 0.05
        assert abs(reading.lufs - -3.01) < 0.1

    def test_gain_equivariance(self):
        x = siggen.speech_like(2.0, seed=5, level=0.2)
        full = integrated_lufs(_buf(x)).lufs
        half = integrated_lufs(_buf(0.5 * x)).lufs
        assert abs((full - half) - 6.02) < 0.02

    def test_too_short(self):
        with pytest.raises(ShortInputError):
            integrated_lufs(_buf(np.zeros(1000)))

    def test_block_count_positive(self):
        reading = integrated_lufs(_buf(siggen.sine(440, 1.0, 16000, amplitude=0.3)))
        assert reading.gated_block_count > 0


class TestGainForSnr:
    def test_identical_signals_zero_snr(self, speech_buf):
        assert gain_for_snr(speech_buf, speech_buf, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_closed_form(self):
        # LUFS(speech) == LUFS(noise) and target 10 dB -> g = 10^(-1/2)
        x = siggen.sine(440, 1.0, 16000, amplitude=0.25)
        buf = _buf(x)
        assert gain_for_snr(buf, buf, 10.0) == pytest.approx(10 ** -0.5, rel=1e-9)

    def test_self_consistency_remeasured(self, rng):
        for trial in range(5):
            speech = _buf(siggen.speech_like(1.5, seed=100 + trial, level=0.15))
            noise = _buf(siggen.modulated_noise(1.5, seed=200 + trial, level=0.08))
            target = float(rng.uniform(-5, 15))
            g = gain_for_snr(speech, noise, target)
            scaled = _buf(g * noise.samples.astype(np.float64))
            realized = integrated_lufs(speech).lufs - integrated_lufs(scaled).lufs
            assert abs(realized - target) < 0.1

    def test_silent_input_raises(self, speech_buf):
        with pytest.raises(LoudnessUnavailableError):
            gain_for_snr(speech_buf, _buf(np.zeros(16000)), 0.0)
