"""Generate the committed STOI golden files and their reference values.

Writes PCM16 WAV pairs to tests/golden/ and a JSON file of reference scores
computed with tools/reference_stoi.py on the decoded file contents. Run once;
outputs are committed so the test suite never regenerates them.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
sys.path.insert(0, str(ROOT / "tools"))

import siggen  # noqa: E402
from reference_stoi import reference_stoi  # noqa: E402

from devo.audio import AudioBuffer, read_wav, write_wav  # noqa: E402

GOLDEN_DIR = ROOT / "tests" / "golden"
FS = 16000
DURATION = 2.0


def build_cases():
    cases = []
    noises = {
        "white": siggen.white_noise,
        "pink": siggen.pink_noise,
        "mod": siggen.modulated_noise,
    }
    snrs = [-5.0, 0.0, 5.0, 10.0]
    index = 0
    for noise_name, noise_fn in noises.items():
        for snr in snrs:
            speech = siggen.speech_like(DURATION, FS, seed=40 + index)
            noise = noise_fn(DURATION, FS, seed=70 + index)
            mix = siggen.mix_at_plain_snr(speech, noise, snr)
            cases.append((f"{noise_name}_snr{int(snr):+d}", speech, mix, snr, noise_name))
            index += 1
    return cases


def main():
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    records = []
    for name, speech, mix, snr, noise_name in build_cases():
        clean_path = GOLDEN_DIR / f"{name}.clean.wav"
        proc_path = GOLDEN_DIR / f"{name}.proc.wav"
        write_wav(clean_path, AudioBuffer(speech, FS), "pcm16")
        write_wav(proc_path, AudioBuffer(mix, FS), "pcm16")
        # score what the files actually contain, post-quantization
        clean = read_wav(clean_path)
        proc = read_wav(proc_path)
        score = reference_stoi(clean.samples, proc.samples, FS)
        records.append({
            "name": name,
            "clean": clean_path.name,
            "processed": proc_path.name,
            "snr_db": snr,
            "noise": noise_name,
            "reference_stoi": round(score, 8),
        })
        print(f"{name}: {score:.6f}")

    # sanity: ordering within each noise type must be monotone in SNR
    by_noise = {}
    for rec in records:
        by_noise.setdefault(rec["noise"], []).append((rec["snr_db"], rec["reference_stoi"]))
    for noise_name, pairs in by_noise.items():
        pairs.sort()
        scores = [score for _, score in pairs]
        assert scores == sorted(scores), f"{noise_name}: scores not monotone in SNR: {scores}"

    (GOLDEN_DIR / "stoi_golden.json").write_text(
        json.dumps(records, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(records)} golden pairs to {GOLDEN_DIR}")


if __name__ == "__main__":
    main()
