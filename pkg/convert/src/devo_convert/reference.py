"""PyTorch reference model implementing the engine's documented semantics.

Used two ways: randomly initialized as a stand-in "trained checkpoint" in
tests, and as the reference forward pass that converted bundles are verified
against. Convolutions are padded explicitly (left-only when causal), and
transposed convolutions run unpadded with the output cut to T*stride so frame
n only feeds samples at n*stride and later.
"""

from __future__ import annotations

from typing import List

import torch
import torch.nn.functional as F
from torch import nn


def _pad_amounts(kernel: int, dilation: int, causal: bool):
    context = (kernel - 1) * dilation
    if causal:
        return context, 0
    left = context // 2
    return left, context - left


class PaddedConv(nn.Module):
    def __init__(self, layer: dict):
        super().__init__()
        self.left, self.right = _pad_amounts(layer["kernel"], layer.get("dilation", 1),
                                             layer.get("causal", False))
        self.conv = nn.Conv1d(layer["in_ch"], layer["out_ch"], layer["kernel"],
                              stride=layer.get("stride", 1),
                              dilation=layer.get("dilation", 1),
                              bias=layer.get("bias", True))
        self.activation = layer.get("activation", "none")
        self.alpha = layer.get("act_alpha", 0.1)

    def forward(self, x):
        x = F.pad(x, (self.left, self.right))
        x = self.conv(x)
        if self.activation == "leaky_relu":
            x = F.leaky_relu(x, self.alpha)
        elif self.activation == "tanh":
            x = torch.tanh(x)
        return x


class TrimmedConvTranspose(nn.Module):
    def __init__(self, layer: dict):
        super().__init__()
        self.stride = layer["stride"]
        self.conv = nn.ConvTranspose1d(layer["in_ch"], layer["out_ch"], layer["kernel"],
                                       stride=layer["stride"],
                                       bias=layer.get("bias", True))

    def forward(self, x):
        t = x.shape[-1]
        return self.conv(x)[..., :t * self.stride]


class ResidualStack(nn.Module):
    def __init__(self, channels: int, kernel: int, dilations, causal: bool):
        super().__init__()
        self.dilated = nn.ModuleList()
        self.unit = nn.ModuleList()
        self.pads: List[tuple] = []
        for d in dilations:
            self.dilated.append(nn.Conv1d(channels, channels, kernel, dilation=d))
            self.unit.append(nn.Conv1d(channels, channels, kernel))
            self.pads.append((_pad_amounts(kernel, d, causal),
                              _pad_amounts(kernel, 1, causal)))
    def forward(self, x):
        for dilated, unit, (dpad, upad) in zip(self.dilated, self.unit, self.pads):
            t = F.leaky_relu(x, 0.1)
            t = dilated(F.pad(t, dpad))
            t = F.leaky_relu(t, 0.1)
            t = unit(F.pad(t, upad))
            x = x + t
        return x


class ReferenceModel(nn.Module):
    """Encoder -> optional weighted-sum -> nearest-neighbor upsample -> generator."""

    def __init__(self, config: dict):
        super().__init__()
        self.config = config
        self.encoder = nn.ModuleList(PaddedConv(l) for l in config["encoder_layers"])
        self.pre = PaddedConv(config["vocoder_pre"])
        self.ups = nn.ModuleList(TrimmedConvTranspose(s)
                                 for s in config["upsample_stages"])
        causal = config.get("causal", False)
        self.mrf = nn.ModuleList()
        for stage, branches in zip(config["upsample_stages"], config["mrf_blocks"]):
            self.mrf.append(nn.ModuleList(
                ResidualStack(stage["out_ch"], b["kernel"], b["dilations"], causal)
                for b in branches
            ))
        self.post = PaddedConv(config["vocoder_post"])

    def forward(self, x):
        """x: (1, 1, n_samples), length a multiple of the encoder downsampling."""
        feats = []
        h = x
        for layer in self.encoder:
            h = layer(h)
            feats.append(h)
        agg = self.config.get("aggregator_weights")
        if agg is not None and len(agg) > 1:
            coeffs = torch.softmax(torch.tensor(agg, dtype=torch.float64), dim=0)
            tapped = feats[-len(agg):]
            h = sum(c.to(torch.float32) * f for c, f in zip(coeffs, tapped))
        factor = self.config.get("feature_upsample", 1)
        if factor > 1:
            h = torch.repeat_interleave(h, factor, dim=-1)
        h = self.pre(h)
        for up, branches in zip(self.ups, self.mrf):
            h = F.leaky_relu(h, 0.1)
            h = up(h)
            acc = None
            for branch in branches:
                out = branch(h)
                acc = out if acc is None else acc + out
            h = acc / len(branches)
        h = F.leaky_relu(h, 0.1)
        h = self.post(h)
        return torch.tanh(h)


def identity_conversion_map(config: dict):
    """Map from a ReferenceModel state_dict onto the bundle tensor table.

    ReferenceModel parameter names differ from bundle names (module nesting,
    'conv.' infixes), which is exactly the situation a real exporter faces.
    """
    from .mapping import ConversionMap, TensorRule, expected_tensor_shapes

    rules = {}
    for name in expected_tensor_shapes(config):
        head, leaf = name.rsplit(".", 1)  # leaf: weight|bias
        parts = head.split(".")
        if parts[0] == "encoder":
            src = f"encoder.{parts[1]}.conv.{leaf}"
        elif parts[1] == "pre":
            src = f"pre.conv.{leaf}"
        elif parts[1] == "post":
            src = f"post.conv.{leaf}"
        elif parts[1] == "up":
            src = f"ups.{parts[2]}.conv.{leaf}"
        else:  # vocoder.mrf.<stage>.<branch>.conv1|conv2.<j>
            stage, branch, which, j = parts[2], parts[3], parts[4], parts[5]
            attr = "dilated" if which == "conv1" else "unit"
            src = f"mrf.{stage}.{branch}.{attr}.{j}.{leaf}"
        rules[name] = TensorRule(source=src)
    return ConversionMap(target_config=config, tensors=rules)
