"""Minimal 1-D neural kernels with exact streaming counterparts.

Every kernel here has one defining property: processing a signal in blocks
through the stateful path produces bit-identical output to the offline call.
That only holds if the floating-point accumulation per output element never
depends on how many frames a call sees, so all reductions go through a single
einsum contraction (channel-major, tap-minor) whose per-element summation is a
function of the reduction length alone, and transposed-convolution scatter
passes run tap-descending so contributions always land in input-frame order.
Weights and activations are float32 end-to-end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dsp import FeatureMap
from .errors import ShapeMismatchError, StreamContractError

# Patch buffers are processed in chunks of at most this many float32 elements
# so long offline signals do not materialize giant im2col arrays. Chunking is
# output-frame aligned and therefore invisible bit-wise.
_PATCH_CHUNK_ELEMS = 1 << 20

ACTIVATIONS = ("none", "leaky_relu", "tanh")


@dataclass(frozen=True)
class ConvLayerSpec:
    """Shape and behavior of one (possibly transposed) 1-D convolution layer."""

    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    dilation: int = 1
    causal: bool = False
    bias: bool = True
    transposed: bool = False
    activation: str = "none"
    act_alpha: float = 0.1

    def __post_init__(self):
        if min(self.in_ch, self.out_ch, self.kernel, self.stride, self.dilation) < 1:
            raise ValueError("in_ch, out_ch, kernel, stride, dilation must all be >= 1")
        if self.transposed and self.kernel < self.stride:
            raise ValueError(f"transposed layer needs kernel >= stride, got {self.kernel} < {self.stride}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def context(self) -> int:
        """Input frames of left context a causal convolution carries."""
        return (self.kernel - 1) * self.dilation

    @property
    def tail(self) -> int:
        """Partial output frames a transposed convolution carries."""
        return self.kernel - self.stride

    def weight_shape(self) -> tuple:
        if self.transposed:
            return (self.in_ch, self.out_ch, self.kernel)
        return (self.out_ch, self.in_ch, self.kernel)


def _check_weights(spec: ConvLayerSpec, weights: np.ndarray, bias) -> tuple:
    weights = np.asarray(weights, dtype=np.float32)
    if weights.shape != spec.weight_shape():
        raise ShapeMismatchError(
            f"weight shape {weights.shape} does not match spec {spec.weight_shape()}"
        )
    if not np.all(np.isfinite(weights)):
        raise ShapeMismatchError("weights contain non-finite values")
    if bias is None:
        bias = np.zeros(spec.out_ch, dtype=np.float32)
    else:
        bias = np.asarray(bias, dtype=np.float32)
        if bias.shape != (spec.out_ch,):
            raise ShapeMismatchError(f"bias shape {bias.shape}, expected ({spec.out_ch},)")
        if not np.all(np.isfinite(bias)):
            raise ShapeMismatchError("bias contains non-finite values")
    return weights, bias


def _conv_core(ext: np.ndarray, spec: ConvLayerSpec, weights: np.ndarray,
               bias: np.ndarray) -> np.ndarray:
    """Convolve a context-extended input. ext: (T_ext, in_ch) float32.

    Output frame j reads ext[j*stride : j*stride + span : dilation]. The
    einsum contracts the flattened (in_ch, kernel) axis row-major, fixing the
    accumulation order per output element regardless of how many frames this
    call covers; that makes blockwise and whole-signal runs bit-identical.
    """
    span = spec.context + 1
    t_out = (ext.shape[0] - span) // spec.stride + 1
    if t_out <= 0:
        return np.zeros((0, spec.out_ch), dtype=np.float32)
    reduced = spec.in_ch * spec.kernel
    w2 = weights.reshape(spec.out_ch, reduced)
    out = np.empty((t_out, spec.out_ch), dtype=np.float32)
    max_rows = max(1, _PATCH_CHUNK_ELEMS // reduced)
    row_stride, ch_stride = ext.strides
    for lo in range(0, t_out, max_rows):
        hi = min(lo + max_rows, t_out)
        window = np.lib.stride_tricks.as_strided(
            ext[lo * spec.stride:],
            shape=(hi - lo, spec.in_ch, spec.kernel),
            strides=(spec.stride * row_stride, ch_stride, spec.dilation * row_stride),
        )
        patches = np.ascontiguousarray(window).reshape(hi - lo, reduced)
        np.einsum("tr,or->to", patches, w2, out=out[lo:hi], optimize=False)
    out += bias
    return out


def _pad_for_mode(x: np.ndarray, spec: ConvLayerSpec) -> np.ndarray:
    ctx = spec.context
    if spec.causal:
        left, right = ctx, 0
    else:
        left = ctx // 2
        right = ctx - left
    if left == 0 and right == 0:
        return x
    return np.concatenate([
        np.zeros((left, x.shape[1]), np.float32),
        x,
        np.zeros((right, x.shape[1]), np.float32),
    ])


def _require_channels(x: FeatureMap, expected: int) -> np.ndarray:
    data = np.asarray(x.data, dtype=np.float32)
    if data.shape[1] != expected:
        raise ShapeMismatchError(f"input has {data.shape[1]} channels, spec expects {expected}")
    return data


def conv1d(x: FeatureMap, spec: ConvLayerSpec, weights, bias=None) -> FeatureMap:
    """1-D convolution; causal mode left-pads, symmetric mode splits the padding."""
    if spec.transposed:
        raise ShapeMismatchError("spec is transposed; use conv_transpose1d")
    weights, bias = _check_weights(spec, weights, bias)
    data = _require_channels(x, spec.in_ch)
    out = _conv_core(_pad_for_mode(data, spec), spec, weights, bias)
    return FeatureMap(out, x.frame_rate / spec.stride)


def _tconv_scatter(block: np.ndarray, spec: ConvLayerSpec, weights: np.ndarray,
                   carried: Optional[np.ndarray]) -> np.ndarray:
    """Scatter-add one run of input frames into a fresh output buffer.

    Buffer covers [0, B*stride + tail); `carried` pre-loads the first `tail`
    positions. Tap passes run k descending so every output position receives
    contributions in ascending input-frame order, matching stream arrival.
    """
    b = block.shape[0]
    tail = spec.tail
    buf = np.zeros((b * spec.stride + tail, spec.out_ch), dtype=np.float32)
    if carried is not None and tail:
        buf[:tail] = carried
    for k in range(spec.kernel - 1, -1, -1):
        contrib = np.einsum("ti,io->to", block, weights[:, :, k], optimize=False)
        seg = buf[k:k + b * spec.stride:spec.stride]
        seg += contrib[:seg.shape[0]]
    return buf


def conv_transpose1d(x: FeatureMap, spec: ConvLayerSpec, weights, bias=None) -> FeatureMap:
    """Transposed 1-D convolution; frame n feeds outputs [n*stride, n*stride + kernel).

    Output length is exactly T*stride; contributions past it are discarded so
    offline and streaming lengths agree.
    """
    if not spec.transposed:
        raise ShapeMismatchError("spec is not transposed; use conv1d")
    weights, bias = _check_weights(spec, weights, bias)
    data = _require_channels(x, spec.in_ch)
    buf = _tconv_scatter(data, spec, weights, None)
    out = buf[:data.shape[0] * spec.stride]
    out = out + bias
    return FeatureMap(out, x.frame_rate * spec.stride)


def activation(x: FeatureMap, kind: str, alpha: float = 0.1) -> FeatureMap:
    """Elementwise leaky ReLU or tanh; 'none' passes through."""
    if kind == "none":
        return x
    data = np.asarray(x.data, dtype=np.float32)
    if kind == "leaky_relu":
        out = np.where(data >= 0, data, np.float32(alpha) * data)
    elif kind == "tanh":
        out = np.tanh(data)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return FeatureMap(out.astype(np.float32), x.frame_rate)


def nn_upsample(x: FeatureMap, factor: int) -> FeatureMap:
    """Nearest-neighbor temporal upsampling: each frame repeated `factor` times."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    return FeatureMap(np.repeat(x.data, factor, axis=0), x.frame_rate * factor)


def softmax_weights(raw_weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(raw_weights, dtype=np.float64)
    if w.size == 0:
        raise ValueError("need at least one aggregation weight")
    e = np.exp(w - w.max())
    return (e / e.sum()).astype(np.float32)


def weighted_sum(layers: Sequence[FeatureMap], raw_weights: Sequence[float]) -> FeatureMap:
    """Softmax-normalized convex combination of equally shaped feature maps."""
    if len(layers) == 0:
        raise ValueError("need at least one layer")
    if len(layers) != len(raw_weights):
        raise ShapeMismatchError(f"{len(layers)} layers vs {len(raw_weights)} weights")
    shape = layers[0].data.shape
    for fm in layers[1:]:
        if fm.data.shape != shape:
            raise ShapeMismatchError(f"layer shapes differ: {fm.data.shape} vs {shape}")
    coeffs = softmax_weights(raw_weights)
    out = np.zeros(shape, dtype=np.float32)
    for coeff, fm in zip(coeffs, layers):
        out += coeff * np.asarray(fm.data, dtype=np.float32)
    return FeatureMap(out, layers[0].frame_rate)


@dataclass
class LayerState:
    """Per-stream carryover for one layer; zero-initialized at stream open.

    Convolutions keep the last (kernel-1)*dilation input frames; transposed
    convolutions keep the kernel-stride partial output rows past the last
    emitted frame.
    """

    spec: ConvLayerSpec
    left_context: Optional[np.ndarray] = None
    overlap_tail: Optional[np.ndarray] = None

    @classmethod
    def open(cls, spec: ConvLayerSpec) -> "LayerState":
        if spec.transposed:
            return cls(spec, overlap_tail=np.zeros((spec.tail, spec.out_ch), np.float32))
        if not spec.causal:
            raise StreamContractError("streaming convolution layers must be causal")
        return cls(spec, left_context=np.zeros((spec.context, spec.in_ch), np.float32))


def layer_push(state: LayerState, weights, bias, block: np.ndarray) -> np.ndarray:
    """Push a block of frames through one layer, emitting every final frame.

    block: (B, in_ch) float32. Convolutions require B divisible by stride and
    emit B/stride frames; transposed layers emit B*stride frames.
    """
    spec = state.spec
    weights, bias = _check_weights(spec, weights, bias)
    block = np.asarray(block, dtype=np.float32)
    if block.ndim != 2 or block.shape[1] != spec.in_ch:
        raise ShapeMismatchError(f"block shape {block.shape}, expected (B, {spec.in_ch})")

    if spec.transposed:
        buf = _tconv_scatter(block, spec, weights, state.overlap_tail)
        emit_len = block.shape[0] * spec.stride
        out = buf[:emit_len] + bias
        if spec.tail:
            state.overlap_tail = buf[emit_len:].copy()
        return out

    if not spec.causal:
        raise StreamContractError("streaming convolution layers must be causal")
    if block.shape[0] % spec.stride != 0:
        raise StreamContractError(
            f"block of {block.shape[0]} frames not divisible by stride {spec.stride}"
        )
    ext = np.concatenate([state.left_context, block]) if spec.context else block
    out = _conv_core(ext, spec, weights, bias)
    if spec.context:
        state.left_context = ext[ext.shape[0] - spec.context:].copy()
    return out
