"""Streaming denoising-vocoder speech enhancement engine.

A convolutional feature encoder feeds a HiFiGAN-style generator that
synthesizes clean speech directly from noisy audio. The causal configuration
runs on 10 ms blocks with no lookahead, and the package ships the measurement
tooling that goes with it: spectral losses, STOI, BS.1770 loudness, and
loudness-matched dataset mixing.
"""

from .audio import ENGINE_RATE, AudioBuffer, read_wav, resample, write_wav
from .dsp import (
    FeatureMap,
    LoudnessReading,
    MelConfig,
    Spectrogram,
    gain_for_snr,
    integrated_lufs,
    k_weight,
    log_mel,
    stft,
)
from .errors import DevoError
from .metrics import (
    EnhancementTriple,
    MetricReport,
    delta_metric,
    mel_l1_loss,
    pcm_loss,
    snr_db,
    spectral_magnitude_loss,
    stoi,
)
from .mix import MixSpec, make_mixture, run_manifest
from .model import (
    BLOCK_SAMPLES,
    Model,
    ModelConfig,
    MrfBranchSpec,
    StreamSession,
    adapt_input_layer,
    build_model,
    default_config,
    enhance_offline,
    open_stream,
    push_block,
    random_bundle,
)
from .nn import (
    ConvLayerSpec,
    LayerState,
    activation,
    conv1d,
    conv_transpose1d,
    layer_push,
    nn_upsample,
    weighted_sum,
)
from .weights import WeightBundle, load_bundle, save_bundle, validate_bundle

__version__ = "0.1.0"
