"""Model assembly and execution: encoder -> aggregator -> vocoder.

The graph is a convolutional feature encoder feeding a HiFiGAN-style
generator (transposed-convolution upsampling stages, each followed by a
multi-receptive-field stack of residual convolutions, then a tanh output
layer). In causal mode every convolution is left-padded and the model can run
as a 10 ms block stream: each 160-sample push emits exactly 160 samples that
depend only on audio pushed so far, and concatenated pushes are bit-identical
to the offline pass.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import nn
from .audio import ENGINE_RATE, AudioBuffer
from .errors import ConfigError, SampleRateError, ShapeMismatchError, StreamContractError
from .nn import ConvLayerSpec
from .weights import WeightBundle, validate_bundle

BLOCK_SAMPLES = 160  # 10 ms at 16 kHz

_LRELU_SLOPE = np.float32(0.1)


def _lrelu(arr: np.ndarray, alpha: np.float32 = _LRELU_SLOPE) -> np.ndarray:
    # For 0 <= alpha < 1 this equals the where()-based definition bit-for-bit
    # and runs as a single ufunc pass.
    return np.maximum(arr, alpha * arr)


@dataclass(frozen=True)
class MrfBranchSpec:
    """One residual stack of the multi-receptive-field block."""

    kernel: int
    dilations: Tuple[int, ...] = (1, 3, 5)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "dilations": list(self.dilations)}

    @classmethod
    def from_dict(cls, d: dict) -> "MrfBranchSpec":
        return cls(kernel=int(d["kernel"]), dilations=tuple(int(v) for v in d["dilations"]))


def _spec_to_dict(spec: ConvLayerSpec) -> dict:
    return {
        "in_ch": spec.in_ch, "out_ch": spec.out_ch, "kernel": spec.kernel,
        "stride": spec.stride, "dilation": spec.dilation, "causal": spec.causal,
        "bias": spec.bias, "transposed": spec.transposed,
        "activation": spec.activation, "act_alpha": spec.act_alpha,
    }


def _spec_from_dict(d: dict) -> ConvLayerSpec:
    return ConvLayerSpec(
        in_ch=int(d["in_ch"]), out_ch=int(d["out_ch"]), kernel=int(d["kernel"]),
        stride=int(d.get("stride", 1)), dilation=int(d.get("dilation", 1)),
        causal=bool(d.get("causal", False)), bias=bool(d.get("bias", True)),
        transposed=bool(d.get("transposed", False)),
        activation=str(d.get("activation", "none")), act_alpha=float(d.get("act_alpha", 0.1)),
    )


@dataclass(frozen=True)
class ModelConfig:
    """Declarative layer graph for the whole enhancement model."""

    encoder_layers: Tuple[ConvLayerSpec, ...]
    vocoder_pre: ConvLayerSpec
    upsample_stages: Tuple[ConvLayerSpec, ...]
    mrf_blocks: Tuple[Tuple[MrfBranchSpec, ...], ...]
    vocoder_post: ConvLayerSpec
    aggregator_weights: Optional[Tuple[float, ...]] = None
    feature_upsample: int = 1
    causal: bool = False

    @property
    def encoder_downsample(self) -> int:
        prod = 1
        for layer in self.encoder_layers:
            prod *= layer.stride
        return prod

    @property
    def vocoder_upsample(self) -> int:
        prod = 1
        for layer in self.upsample_stages:
            prod *= layer.stride
        return prod

    @property
    def block_samples(self) -> int:
        """Input samples consumed (and output samples produced) per model step."""
        return self.encoder_downsample

    def validate(self) -> None:
        if not self.encoder_layers:
            raise ConfigError("encoder has no layers")
        if self.feature_upsample < 1:
            raise ConfigError("feature_upsample must be >= 1")

        if self.feature_upsample * self.vocoder_upsample != self.encoder_downsample:
            raise ConfigError(
                f"stride law violated: feature_upsample ({self.feature_upsample}) x "
                f"vocoder upsampling ({self.vocoder_upsample}) != "
                f"encoder downsampling ({self.encoder_downsample})"
            )
        if self.causal and self.encoder_downsample != BLOCK_SAMPLES:
            raise ConfigError(
                f"streaming model needs a stride product of {BLOCK_SAMPLES}, "
                f"got {self.encoder_downsample}"
            )

        prev = self.encoder_layers[0].out_ch
        for i, layer in enumerate(self.encoder_layers):
            if layer.transposed:
                raise ConfigError(f"encoder layer {i} must not be transposed")
            if i > 0 and layer.in_ch != prev:
                raise ConfigError(
                    f"encoder layer {i} expects {layer.in_ch} channels, "
                    f"previous layer emits {prev}"
                )
            prev = layer.out_ch

        if self.aggregator_weights is not None:
            taps = len(self.aggregator_weights)
            if taps < 1:
                raise ConfigError("aggregator weight list is empty")
            if taps > len(self.encoder_layers):
                raise ConfigError(f"aggregator taps {taps} exceed encoder depth")
            tapped = self.encoder_layers[-taps:]
            if taps > 1 and any(l.stride != 1 or l.out_ch != prev for l in tapped):
                raise ConfigError(
                    "aggregated encoder layers must all be stride 1 with equal channels"
                )

        if self.vocoder_pre.in_ch != prev:
            raise ConfigError(
                f"vocoder pre-conv expects {self.vocoder_pre.in_ch} channels, "
                f"encoder emits {prev}"
            )
        if self.vocoder_pre.transposed or self.vocoder_post.transposed:
            raise ConfigError("vocoder pre/post layers must not be transposed")
        if len(self.mrf_blocks) != len(self.upsample_stages):
            raise ConfigError(
                f"{len(self.upsample_stages)} upsample stages but "
                f"{len(self.mrf_blocks)} MRF block groups"
            )
        prev = self.vocoder_pre.out_ch
        for i, stage in enumerate(self.upsample_stages):
            if not stage.transposed:
                raise ConfigError(f"upsample stage {i} must be transposed")
            if stage.in_ch != prev:
                raise ConfigError(
                    f"upsample stage {i} expects {stage.in_ch} channels, got {prev}"
                )
            if not self.mrf_blocks[i]:
                raise ConfigError(f"upsample stage {i} has no MRF branches")
            prev = stage.out_ch
        if self.vocoder_post.in_ch != prev:
            raise ConfigError(
                f"vocoder post-conv expects {self.vocoder_post.in_ch} channels, got {prev}"
            )
        if self.vocoder_post.out_ch != 1:
            raise ConfigError("vocoder post-conv must emit one channel")

        if self.causal:
            for i, layer in enumerate(self.encoder_layers):
                if not layer.causal:
                    raise ConfigError(f"causal model has non-causal encoder layer {i}")
            for name, layer in (("pre", self.vocoder_pre), ("post", self.vocoder_post)):
                if not layer.causal:
                    raise ConfigError(f"causal model has non-causal vocoder {name} conv")

    def _mrf_conv_spec(self, channels: int, kernel: int, dilation: int) -> ConvLayerSpec:
        return ConvLayerSpec(
            in_ch=channels, out_ch=channels, kernel=kernel,
            dilation=dilation, causal=self.causal,
        )

    def mrf_conv_specs(self, stage: int) -> List[Tuple[ConvLayerSpec, ConvLayerSpec]]:
        """Per branch, the (dilated, unit-dilation) conv pair list, flattened."""
        channels = self.upsample_stages[stage].out_ch
        out = []
        for branch in self.mrf_blocks[stage]:
            pairs = []
            for dilation in branch.dilations:
                pairs.append((
                    self._mrf_conv_spec(channels, branch.kernel, dilation),
                    self._mrf_conv_spec(channels, branch.kernel, 1),
                ))
            out.append(pairs)
        return out

    def expected_tensor_shapes(self) -> Dict[str, tuple]:
        shapes: Dict[str, tuple] = {}

        def put(name: str, spec: ConvLayerSpec) -> None:
            shapes[f"{name}.weight"] = spec.weight_shape()
            if spec.bias:
                shapes[f"{name}.bias"] = (spec.out_ch,)

        for i, layer in enumerate(self.encoder_layers):
            put(f"encoder.{i}", layer)
        put("vocoder.pre", self.vocoder_pre)
        for i, stage in enumerate(self.upsample_stages):
            put(f"vocoder.up.{i}", stage)
            for b, pairs in enumerate(self.mrf_conv_specs(i)):
                for j, (dilated, unit) in enumerate(pairs):
                    put(f"vocoder.mrf.{i}.{b}.conv1.{j}", dilated)
                    put(f"vocoder.mrf.{i}.{b}.conv2.{j}", unit)
        put("vocoder.post", self.vocoder_post)
        return shapes

    def to_dict(self) -> dict:
        return {
            "encoder_layers": [_spec_to_dict(l) for l in self.encoder_layers],
            "aggregator_weights": (
                list(self.aggregator_weights) if self.aggregator_weights is not None else None
            ),
            "feature_upsample": self.feature_upsample,
            "vocoder_pre": _spec_to_dict(self.vocoder_pre),
            "upsample_stages": [_spec_to_dict(l) for l in self.upsample_stages],
            "mrf_blocks": [[b.to_dict() for b in stage] for stage in self.mrf_blocks],
            "vocoder_post": _spec_to_dict(self.vocoder_post),
            "causal": self.causal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        agg = d.get("aggregator_weights")
        return cls(
            encoder_layers=tuple(_spec_from_dict(x) for x in d["encoder_layers"]),
            aggregator_weights=tuple(float(v) for v in agg) if agg is not None else None,
            feature_upsample=int(d.get("feature_upsample", 1)),
            vocoder_pre=_spec_from_dict(d["vocoder_pre"]),
            upsample_stages=tuple(_spec_from_dict(x) for x in d["upsample_stages"]),
            mrf_blocks=tuple(
                tuple(MrfBranchSpec.from_dict(b) for b in stage) for stage in d["mrf_blocks"]
            ),
            vocoder_post=_spec_from_dict(d["vocoder_post"]),
            causal=bool(d.get("causal", False)),
        )


def default_config(causal: bool = False, encoder_dim: int = 256,
                   vocoder_base: int = 128, feature_upsample: int = 1) -> ModelConfig:
    """Desk-scale default: 5-layer 256-dim encoder, 128-channel generator.

    Encoder kernels (10, 8, 4, 4, 4) with strides (5, 4, 2, 2, 2) give the
    160-sample hop; generator strides (5, 4, 4, 2) build it back up.
    """
    enc_kernels = (10, 8, 4, 4, 4)
    enc_strides = (5, 4, 2, 2, 2)
    encoder = []
    in_ch = 1
    for k, s in zip(enc_kernels, enc_strides):
        encoder.append(ConvLayerSpec(
            in_ch=in_ch, out_ch=encoder_dim, kernel=k, stride=s,
            causal=causal, activation="leaky_relu", act_alpha=0.0,
        ))
        in_ch = encoder_dim

    up_strides = (5, 4, 4, 2)
    stages = []
    ch = vocoder_base
    for s in up_strides:
        stages.append(ConvLayerSpec(
            in_ch=ch, out_ch=ch // 2, kernel=2 * s, stride=s,
            causal=causal, transposed=True,
        ))
        ch //= 2
    mrf = tuple(
        tuple(MrfBranchSpec(kernel=k) for k in (3, 7, 11)) for _ in up_strides
    )
    return ModelConfig(
        encoder_layers=tuple(encoder),
        vocoder_pre=ConvLayerSpec(in_ch=encoder_dim, out_ch=vocoder_base, kernel=7,
                                  causal=causal),
        upsample_stages=tuple(stages),
        mrf_blocks=mrf,
        vocoder_post=ConvLayerSpec(in_ch=ch, out_ch=1, kernel=7, causal=causal),
        aggregator_weights=None,
        feature_upsample=feature_upsample,
        causal=causal,
    )


class _Conv:
    """Pre-validated convolution node shared by offline and streaming paths."""

    __slots__ = ("spec", "weights", "bias", "alpha")

    def __init__(self, spec: ConvLayerSpec, weights: np.ndarray, bias: Optional[np.ndarray]):
        self.spec = spec
        self.weights = np.ascontiguousarray(weights, dtype=np.float32)
        if bias is None:
            bias = np.zeros(spec.out_ch, dtype=np.float32)
        self.bias = np.ascontiguousarray(bias, dtype=np.float32)
        self.alpha = np.float32(spec.act_alpha)

    def _act(self, out: np.ndarray) -> np.ndarray:
        if self.spec.activation == "leaky_relu":
            if 0.0 <= self.alpha < 1.0:
                return _lrelu(out, self.alpha)
            return np.where(out >= 0, out, self.alpha * out)
        if self.spec.activation == "tanh":
            return np.tanh(out)
        return out

    def forward(self, h: np.ndarray) -> np.ndarray:
        if self.spec.transposed:
            buf = nn._tconv_scatter(h, self.spec, self.weights, None)
            out = buf[:h.shape[0] * self.spec.stride] + self.bias
        else:
            out = nn._conv_core(nn._pad_for_mode(h, self.spec), self.spec,
                                self.weights, self.bias)
        return self._act(out)

    def open_state(self):
        if self.spec.transposed:
            return [np.zeros((self.spec.tail, self.spec.out_ch), np.float32), None]
        return [np.zeros((self.spec.context, self.spec.in_ch), np.float32), None]

    def push(self, state, h: np.ndarray) -> np.ndarray:
        spec = self.spec
        if spec.transposed:
            buf = nn._tconv_scatter(h, spec, self.weights, state[0])
            emit = h.shape[0] * spec.stride
            out = buf[:emit] + self.bias
            if spec.tail:
                state[0] = buf[emit:].copy()
            return self._act(out)
        ctx = spec.context
        if ctx:
            # Reusable extension buffer: [carried context | new block].
            ext = state[1]
            if ext is None or ext.shape[0] != ctx + h.shape[0]:
                ext = np.empty((ctx + h.shape[0], spec.in_ch), np.float32)
                state[1] = ext
            ext[:ctx] = state[0]
            ext[ctx:] = h
        else:
            ext = h
        out = nn._conv_core(ext, spec, self.weights, self.bias)
        if ctx:
            state[0][:] = ext[ext.shape[0] - ctx:]
        return self._act(out)


class _Mrf:
    """Multi-receptive-field block: parallel residual stacks, averaged."""

    __slots__ = ("branches",)

    def __init__(self, branches: List[List[Tuple[_Conv, _Conv]]]):
        self.branches = branches

    def _run(self, h: np.ndarray, states=None) -> np.ndarray:
        acc = None
        si = 0
        for pairs in self.branches:
            x = h
            for dilated, unit in pairs:
                t = _lrelu(x)
                t = dilated.push(states[si], t) if states is not None else dilated.forward(t)
                si += 1
                t = _lrelu(t)
                t = unit.push(states[si], t) if states is not None else unit.forward(t)
                si += 1
                x = x + t
            acc = x if acc is None else acc + x
        return acc / np.float32(len(self.branches))

    def forward(self, h: np.ndarray) -> np.ndarray:
        return self._run(h)

    def open_state(self):
        states = []
        for pairs in self.branches:
            for dilated, unit in pairs:
                states.append(dilated.open_state())
                states.append(unit.open_state())
        return states

    def push(self, states, h: np.ndarray) -> np.ndarray:
        return self._run(h, states)


class Model:
    """Immutable runnable model: validated config plus resolved weights."""

    def __init__(self, config: ModelConfig, encoder: List[_Conv], pre: _Conv,
                 stages: List[Tuple[_Conv, _Mrf]], post: _Conv):
        self.config = config
        self._encoder = encoder
        self._pre = pre
        self._stages = stages
        self._post = post

    # -- shared graph ------------------------------------------------------

    def _aggregate(self, feats: List[np.ndarray]) -> np.ndarray:
        agg = self.config.aggregator_weights
        if agg is None or len(agg) == 1:
            return feats[-1]
        coeffs = nn.softmax_weights(agg)
        tapped = feats[-len(agg):]
        out = np.zeros_like(tapped[0])
        for coeff, fm in zip(coeffs, tapped):
            out += coeff * fm
        return out

    def _run(self, h: np.ndarray, states=None) -> np.ndarray:
        idx = 0

        def step(node, x):
            nonlocal idx
            out = node.push(states[idx], x) if states is not None else node.forward(x)
            idx += 1
            return out

        feats = []
        for node in self._encoder:
            h = step(node, h)
            feats.append(h)
        h = self._aggregate(feats)
        if self.config.feature_upsample > 1:
            h = np.repeat(h, self.config.feature_upsample, axis=0)
        h = step(self._pre, h)
        for up, mrf in self._stages:
            h = _lrelu(h)
            h = step(up, h)
            h = step(mrf, h)
        h = _lrelu(h)
        h = step(self._post, h)
        return np.tanh(h)

    def _open_states(self):
        states = [node.open_state() for node in self._encoder]
        states.append(self._pre.open_state())
        for up, mrf in self._stages:
            states.append(up.open_state())
            states.append(mrf.open_state())
        states.append(self._post.open_state())
        return states


def build_model(config: ModelConfig, bundle: WeightBundle) -> Model:
    """Validate config and bundle together, then assemble a runnable model."""
    config.validate()
    reports = validate_bundle(bundle, config)
    if reports:
        raise ShapeMismatchError("bundle does not match config: " + "; ".join(reports))

    def conv(name: str, spec: ConvLayerSpec) -> _Conv:
        bias = bundle.tensors.get(f"{name}.bias") if spec.bias else None
        return _Conv(spec, bundle.tensors[f"{name}.weight"], bias)

    encoder = [conv(f"encoder.{i}", l) for i, l in enumerate(config.encoder_layers)]
    pre = conv("vocoder.pre", config.vocoder_pre)
    stages = []
    for i, stage_spec in enumerate(config.upsample_stages):
        branches = []
        for b, pairs in enumerate(config.mrf_conv_specs(i)):
            branch = []
            for j, (dilated_spec, unit_spec) in enumerate(pairs):
                branch.append((
                    conv(f"vocoder.mrf.{i}.{b}.conv1.{j}", dilated_spec),
                    conv(f"vocoder.mrf.{i}.{b}.conv2.{j}", unit_spec),
                ))
            branches.append(branch)
        stages.append((conv(f"vocoder.up.{i}", stage_spec), _Mrf(branches)))
    post = conv("vocoder.post", config.vocoder_post)
    return Model(config, encoder, pre, stages, post)


def enhance_offline(model: Model, noisy: AudioBuffer) -> AudioBuffer:
    """Run the full model over a file; output length equals input length."""
    if noisy.sample_rate != ENGINE_RATE:
        raise SampleRateError(
            f"model runs at {ENGINE_RATE} Hz, input is {noisy.sample_rate} Hz"
        )
    n = len(noisy)
    step = model.config.block_samples
    padded_len = ((n + step - 1) // step) * step if n else 0
    x = np.zeros((padded_len, 1), dtype=np.float32)
    x[:n, 0] = noisy.samples
    if padded_len == 0:
        return AudioBuffer(np.zeros(0, np.float32), ENGINE_RATE)
    y = model._run(x)
    return AudioBuffer(y[:n, 0], ENGINE_RATE)


class StreamSession:
    """Single-owner causal stream: one 160-sample block in, one out, 10 ms latency."""

    def __init__(self, model: Model):
        if not model.config.causal:
            raise StreamContractError("streaming requires a causal model")
        self.model = model
        self.block_samples = model.config.block_samples
        self._states = model._open_states()
        self.blocks_in = 0
        self.blocks_out = 0

    def push(self, block) -> np.ndarray:
        block = np.asarray(block, dtype=np.float32)
        if block.shape != (self.block_samples,):
            raise StreamContractError(
                f"push_block needs exactly {self.block_samples} samples, got {block.shape}"
            )
        self.blocks_in += 1
        out = self.model._run(block[:, None], self._states)
        self.blocks_out += 1
        return out[:, 0]


def open_stream(model: Model) -> StreamSession:
    return StreamSession(model)


def push_block(session: StreamSession, block) -> np.ndarray:
    return session.push(block)


def adapt_input_layer(kernel: np.ndarray, new_in: int) -> np.ndarray:
    """Channel-mean cross-modality re-initialization of an input convolution.

    Averages the pretrained kernel over its input-channel axis and replicates
    the mean across `new_in` channels; bias is untouched by construction.
    """
    kernel = np.asarray(kernel, dtype=np.float32)
    if kernel.ndim != 3:
        raise ShapeMismatchError(f"expected (out, in, kernel) tensor, got shape {kernel.shape}")
    if new_in < 1:
        raise ValueError("new_in must be >= 1")
    mean = kernel.mean(axis=1, keepdims=True, dtype=np.float64).astype(np.float32)
    return np.repeat(mean, new_in, axis=1)


def adapt_bundle(bundle: WeightBundle, new_in: int) -> WeightBundle:
    """Rewrite a bundle's first encoder layer for a new input-channel count."""
    config = ModelConfig.from_dict(bundle.config)
    first = config.encoder_layers[0]
    new_first = replace(first, in_ch=new_in)
    new_config = replace(config, encoder_layers=(new_first,) + config.encoder_layers[1:])
    out = WeightBundle(config=new_config.to_dict())
    for name, tensor in bundle.tensors.items():
        if name == "encoder.0.weight":
            out.add(name, adapt_input_layer(tensor, new_in))
        else:
            out.add(name, tensor)
    return out


def random_bundle(config: ModelConfig, seed: int = 0, scale: float = 0.1) -> WeightBundle:
    """Gaussian-initialized bundle for tests and demos; N(0, scale) weights."""
    rng = np.random.default_rng(seed)
    bundle = WeightBundle(config=config.to_dict())
    for name, shape in config.expected_tensor_shapes().items():
        bundle.add(name, rng.normal(0.0, scale, size=shape).astype(np.float32))
    return bundle
