"""Forward-pass parity between a converted bundle and its source checkpoint.

The engine side runs through the installed command-line tool on a probe WAV;
the reference side is the PyTorch model restored from the checkpoint. Both
see the identical float32 probe. Divergence above the threshold fails, since
summation-order differences between frameworks should stay far below it.
"""

from __future__ import annotations

import shutil
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .bundle_format import read_bundle_file
from .reference import ReferenceModel

PASS_THRESHOLD = 1e-4
ENGINE_RATE = 16000


class EngineNotFoundError(Exception):
    pass


class VerificationError(Exception):
    pass


@dataclass
class VerificationReport:
    max_abs_diff: float
    threshold: float
    samples_compared: int

    @property
    def passed(self) -> bool:
        return self.max_abs_diff <= self.threshold


def write_wav_float32(path, samples: np.ndarray, rate: int = ENGINE_RATE) -> None:
    payload = np.asarray(samples, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, rate, rate * 4, 4, 32)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


def read_wav_float32(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise VerificationError(f"{path}: engine emitted something that is not WAV")
    pos = 12
    while pos + 8 <= len(raw):
        chunk, length = raw[pos:pos + 4], struct.unpack_from("<I", raw, pos + 4)[0]
        if chunk == b"data":
            return np.frombuffer(raw, dtype="<f4", count=length // 4, offset=pos + 8).copy()
        pos += 8 + length + (length & 1)
    raise VerificationError(f"{path}: no data chunk")


def _run_engine(engine: str, bundle_path, probe: np.ndarray, workdir: Path) -> np.ndarray:
    exe = shutil.which(engine)
    if exe is None:
        raise EngineNotFoundError(
            f"engine binary {engine!r} not found on PATH; install the engine package"
        )
    in_wav = workdir / "probe.wav"
    out_wav = workdir / "enhanced.wav"
    write_wav_float32(in_wav, probe)
    result = subprocess.run(
        [exe, "enhance", "--model", str(bundle_path), "--in", str(in_wav),
         "--out", str(out_wav), "--mode", "offline"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, timeout=600,
    )
    if result.returncode != 0:
        raise VerificationError(f"engine run failed: {result.stderr.strip()}")
    return read_wav_float32(out_wav)


def verify_conversion(bundle_path, checkpoint_path, probe: np.ndarray,
                      engine: str = "devo",
                      threshold: float = PASS_THRESHOLD) -> VerificationReport:
    """Compare engine output against the checkpoint's reference forward pass."""
    config, _tensors = read_bundle_file(bundle_path)
    probe = np.asarray(probe, dtype=np.float32)

    model = ReferenceModel(config)
    state = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()

    step = 1
    for layer in config["encoder_layers"]:
        step *= layer.get("stride", 1)
    padded_len = -(-len(probe) // step) * step
    padded = np.zeros(padded_len, dtype=np.float32)
    padded[:len(probe)] = probe
    with torch.no_grad():
        reference = model(torch.from_numpy(padded)[None, None, :])[0, 0].numpy()
    reference = reference[:len(probe)]

    with tempfile.TemporaryDirectory() as tmp:
        engine_out = _run_engine(engine, bundle_path, probe, Path(tmp))

    if engine_out.shape != reference.shape:
        raise VerificationError(
            f"length mismatch: engine {engine_out.shape} vs reference {reference.shape}"
        )
    diff = float(np.max(np.abs(engine_out - reference))) if len(reference) else 0.0
    return VerificationReport(max_abs_diff=diff, threshold=threshold,
                              samples_compared=len(reference))
