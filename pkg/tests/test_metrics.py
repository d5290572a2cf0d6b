import math

import numpy as np
import pytest

import siggen
from devo.audio import AudioBuffer, read_wav
from devo.dsp import log_mel
from devo.errors import MetricInputError
from devo.metrics import (
    EnhancementTriple,
    MetricReport,
    compute_metrics,
    delta_metric,
    mel_l1_loss,
    pcm_loss,
    snr_db,
    spectral_magnitude_loss,
    stoi,
)
from conftest import GOLDEN_DIR


def _buf(x, fs=16000):
    return AudioBuffer(np.asarray(x, np.float32), fs)


def random_triple(rng, n=4000):
    clean = rng.normal(0, 0.2, n).astype(np.float32)
    noise = rng.normal(0, 0.1, n).astype(np.float32)
    noisy = clean + noise
    enhanced = clean + 0.3 * noise + rng.normal(0, 0.02, n).astype(np.float32)
    return EnhancementTriple(_buf(clean), _buf(noisy), _buf(enhanced))


class TestSpectralMagnitudeLoss:
    def test_zero_on_identity(self, speech_buf):
        assert spectral_magnitude_loss(speech_buf, speech_buf) == 0.0

    def test_symmetry(self, rng):
        a = _buf(rng.normal(0, 0.2, 3000))
        b = _buf(rng.normal(0, 0.2, 3000))
        assert spectral_magnitude_loss(a, b) == spectral_magnitude_loss(b, a)

    def test_impulse_against_direct_stft_oracle(self):
        zero = _buf(np.zeros(2048))
        impulse = np.zeros(2048, np.float32)
        impulse[500] = 1.0
        got = spectral_magnitude_loss(zero, _buf(impulse))
        # direct oracle: mean of |Br| + |Bi| over the 1024/160 grid
        window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024)
        frames = (2048 - 1024) // 160 + 1
        total = 0.0
        count = 0
        for t in range(frames):
            frame = impulse[t * 160:t * 160 + 1024] * window
            spec = np.fft.rfft(frame)
            total += np.sum(np.abs(spec.real) + np.abs(spec.imag))
            count += len(spec)
        assert got == pytest.approx(total / count, rel=1e-10)

    def test_nonnegative(self, rng):
        for _ in range(5):
            a = _buf(rng.normal(0, 0.3, 2000))
            b = _buf(rng.normal(0, 0.3, 2000))
            assert spectral_magnitude_loss(a, b) >= 0.0

    def test_length_mismatch(self, rng):
        with pytest.raises(MetricInputError):
            spectral_magnitude_loss(_buf(np.zeros(2000)), _buf(np.zeros(2001)))


class TestPcmLoss:
    def test_perfect_enhancement(self, rng):
        clean = _buf(rng.normal(0, 0.2, 3000))
        noisy = _buf(rng.normal(0, 0.3, 3000))
        triple = EnhancementTriple(clean, noisy, clean)
        assert pcm_loss(triple) == 0.0

    def test_noop_enhancer_identity(self, rng):
        clean = rng.normal(0, 0.2, 3000).astype(np.float32)
        noisy = (clean + rng.normal(0, 0.1, 3000)).astype(np.float32)
        triple = EnhancementTriple(_buf(clean), _buf(noisy), _buf(noisy))
        noise = _buf(noisy - clean)
        expected = 0.5 * spectral_magnitude_loss(_buf(clean), _buf(noisy)) \
            + 0.5 * spectral_magnitude_loss(noise, _buf(np.zeros(3000)))
        assert pcm_loss(triple) == pytest.approx(expected, rel=1e-12)

    def test_recomposition_exact(self, rng):
        for _ in range(10):
            triple = random_triple(rng)
            expected = 0.5 * (
                spectral_magnitude_loss(triple.clean, triple.enhanced)
                + spectral_magnitude_loss(
                    _buf(triple.noisy.samples - triple.clean.samples),
                    _buf(triple.noisy.samples - triple.enhanced.samples),
                )
            )
            assert pcm_loss(triple) == expected


class TestMelL1Loss:
    def test_zero_on_identity(self, rng):
        clean = _buf(rng.normal(0, 0.2, 3000))
        noisy = _buf(rng.normal(0, 0.3, 3000))
        assert mel_l1_loss(EnhancementTriple(clean, noisy, clean)) == 0.0

    def test_compositional_recompute(self, rng):
        triple = random_triple(rng)
        expected = 0.5 * float(np.mean(np.abs(
            log_mel(triple.clean).data - log_mel(triple.enhanced).data))) \
            + 0.5 * float(np.mean(np.abs(
                log_mel(triple.noise).data - log_mel(triple.noise_estimate).data)))
        assert mel_l1_loss(triple) == pytest.approx(expected, rel=1e-12)


class TestStoi:
    def test_self_score(self):
        x = _buf(siggen.speech_like(1.5, seed=21))
        assert stoi(x, x) >= 0.999

    def test_gain_invariance(self):
        x = _buf(siggen.speech_like(1.5, seed=22))
        noisy = _buf(siggen.mix_at_plain_snr(x.samples, siggen.pink_noise(1.5, seed=23), 5.0))
        base = stoi(x, noisy)
        for gain in (0.25, 2.0):
            scaled = _buf(np.clip(gain * noisy.samples.astype(np.float64), -32, 32))
            assert abs(stoi(x, scaled) - base) < 1e-6

    def test_golden_pairs_within_tolerance(self, stoi_goldens):
        for rec in stoi_goldens:
            clean = read_wav(GOLDEN_DIR / rec["clean"])
            proc = read_wav(GOLDEN_DIR / rec["processed"])
            assert stoi(clean, proc) == pytest.approx(rec["reference_stoi"], abs=1e-3)

    def test_snr_ordering_on_goldens(self, stoi_goldens):
        by_noise = {}
        for rec in stoi_goldens:
            clean = read_wav(GOLDEN_DIR / rec["clean"])
            proc = read_wav(GOLDEN_DIR / rec["processed"])
            by_noise.setdefault(rec["noise"], []).append((rec["snr_db"], stoi(clean, proc)))
        for pairs in by_noise.values():
            pairs.sort()
            assert pairs[-1][1] > pairs[0][1]  # +10 dB beats -5 dB

    def test_too_short_raises(self):
        x = _buf(np.ones(1000) * 0.1)
        with pytest.raises(MetricInputError):
            stoi(x, x)


class TestSnr:
    def test_identical_is_infinite(self, speech_buf):
        assert math.isinf(snr_db(speech_buf, speech_buf))

    def test_residual_equal_to_signal(self, speech_buf):
        doubled = _buf(2.0 * speech_buf.samples.astype(np.float64))
        assert snr_db(speech_buf, doubled) == pytest.approx(0.0, abs=1e-9)

    def test_log_law(self, speech_buf):
        plus = _buf(1.5 * speech_buf.samples.astype(np.float64))
        half = _buf(1.25 * speech_buf.samples.astype(np.float64))
        assert snr_db(speech_buf, half) - snr_db(speech_buf, plus) \
            == pytest.approx(6.0206, abs=1e-3)


class TestDelta:
    def test_zero_when_enhanced_equals_noisy(self, rng):
        clean = _buf(rng.normal(0, 0.2, 20000))
        noisy = _buf(rng.normal(0, 0.25, 20000))
        triple = EnhancementTriple(clean, noisy, noisy)
        assert delta_metric(snr_db, triple) == 0.0
        assert delta_metric(stoi, triple) == 0.0

    def test_substitution_identity(self, rng):
        triple = random_triple(rng, n=24000)
        perfect = EnhancementTriple(triple.clean, triple.noisy, triple.clean)
        got = delta_metric(stoi, perfect)
        expected = stoi(perfect.clean, perfect.clean) - stoi(perfect.clean, perfect.noisy)
        assert got == expected

    def test_delta_stoi_compositional_on_golden(self, stoi_goldens):
        rec = stoi_goldens[0]
        clean = read_wav(GOLDEN_DIR / rec["clean"])
        noisy = read_wav(GOLDEN_DIR / rec["processed"])
        enhanced = _buf(
            0.7 * clean.samples.astype(np.float64) + 0.3 * noisy.samples.astype(np.float64))
        triple = EnhancementTriple(clean, noisy, enhanced)
        expected = stoi(clean, enhanced) - stoi(clean, noisy)
        assert delta_metric(stoi, triple) == expected


class TestReport:
    def test_compute_metrics_columns(self, rng):
        triple = random_triple(rng, n=24000)
        values = compute_metrics(triple, ("stoi", "snr", "pcm"))
        assert set(values) == {"stoi", "delta_stoi", "snr", "delta_snr", "pcm"}

    def test_csv_layout_and_mean(self, rng):
        rows = [
            ("utt1", {"snr": 10.0, "delta_snr": 1.0}),
            ("utt2", {"snr": 20.0, "delta_snr": 3.0}),
        ]
        report = MetricReport.from_results(rows, ("snr",))
        csv = report.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0].startswith("utterance,snr,delta_snr,pesq,")
        assert lines[1].startswith("utt1,10.000000,1.000000")
        assert lines[-1].startswith("mean,15.000000,2.000000")

    def test_corpus_mean_is_arithmetic_mean(self, rng):
        triples = [("u%d" % i, compute_metrics(random_triple(rng), ("lsm",)))
                   for i in range(3)]
        report = MetricReport.from_results(triples, ("lsm",))
        values = [row[1]["lsm"] for row in report.rows]
        assert report.corpus_mean()["lsm"] == pytest.approx(float(np.mean(values)))

    def test_unknown_metric(self, rng):
        with pytest.raises(MetricInputError):
            compute_metrics(random_triple(rng), ("bogus",))


class TestTripleValidation:
    def test_length_mismatch(self, rng):
        with pytest.raises(MetricInputError):
            EnhancementTriple(_buf(np.zeros(100)), _buf(np.zeros(101)), _buf(np.zeros(100)))

    def test_noise_definition(self, rng):
        triple = random_triple(rng)
        assert np.array_equal(triple.noise.samples,
                              triple.noisy.samples - triple.clean.samples)
        assert np.array_equal(triple.noise_estimate.samples,
                              triple.noisy.samples - triple.enhanced.samples)
