"""Conversion maps: which checkpoint entry feeds which bundle tensor.

The mapping document is UTF-8 JSON:

    {
      "target_config": { ... engine model-config document ... },
      "source_root": "generator",        # optional: descend into the checkpoint
      "tensors": {
        "<bundle tensor name>": {"source": "<checkpoint key>", "permute": [1, 0, 2]}
      }
    }

"permute" is optional and reorders source axes before the shape check. The
map must cover every tensor the target config requires, and no checkpoint
entry may feed two bundle tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional


class MappingError(Exception):
    pass


def _conv_shapes(name: str, layer: dict) -> Dict[str, tuple]:
    if layer.get("transposed", False):
        weight = (layer["in_ch"], layer["out_ch"], layer["kernel"])
    else:
        weight = (layer["out_ch"], layer["in_ch"], layer["kernel"])
    shapes = {f"{name}.weight": weight}
    if layer.get("bias", True):
        shapes[f"{name}.bias"] = (layer["out_ch"],)
    return shapes


def expected_tensor_shapes(config: dict) -> Dict[str, tuple]:
    """Tensor table implied by an engine config document."""
    shapes: Dict[str, tuple] = {}
    for i, layer in enumerate(config["encoder_layers"]):
        shapes.update(_conv_shapes(f"encoder.{i}", layer))
    shapes.update(_conv_shapes("vocoder.pre", config["vocoder_pre"]))
    for i, stage in enumerate(config["upsample_stages"]):
        shapes.update(_conv_shapes(f"vocoder.up.{i}", stage))
        channels = stage["out_ch"]
        for b, branch in enumerate(config["mrf_blocks"][i]):
            kernel = branch["kernel"]
            for j, _dilation in enumerate(branch["dilations"]):
                base = {"in_ch": channels, "out_ch": channels, "kernel": kernel,
                        "bias": True, "transposed": False}
                shapes.update(_conv_shapes(f"vocoder.mrf.{i}.{b}.conv1.{j}", base))
                shapes.update(_conv_shapes(f"vocoder.mrf.{i}.{b}.conv2.{j}", base))
    shapes.update(_conv_shapes("vocoder.post", config["vocoder_post"]))
    return shapes


@dataclass
class TensorRule:
    source: str
    permute: Optional[List[int]] = None


@dataclass
class ConversionMap:
    target_config: dict
    tensors: Dict[str, TensorRule]
    source_root: Optional[str] = None

    @classmethod
    def from_json(cls, text: str) -> "ConversionMap":
        doc = json.loads(text)
        rules = {
            name: TensorRule(source=entry["source"], permute=entry.get("permute"))
            for name, entry in doc["tensors"].items()
        }
        return cls(target_config=doc["target_config"], tensors=rules,
                   source_root=doc.get("source_root"))

    def to_json(self) -> str:
        doc = {
            "target_config": self.target_config,
            "tensors": {
                name: ({"source": rule.source, "permute": rule.permute}
                       if rule.permute is not None else {"source": rule.source})
                for name, rule in self.tensors.items()
            },
        }
        if self.source_root is not None:
            doc["source_root"] = self.source_root
        return json.dumps(doc, indent=2, sort_keys=True)

    def validate(self) -> Dict[str, tuple]:
        """Check totality and injectivity; return the expected shape table."""
        expected = expected_tensor_shapes(self.target_config)
        missing = [name for name in expected if name not in self.tensors]
        if missing:
            raise MappingError(f"mapping not total; unmapped target tensors: {missing}")
        extra = [name for name in self.tensors if name not in expected]
        if extra:
            raise MappingError(f"mapping names unknown target tensors: {extra}")
        seen: Dict[str, str] = {}
        for name, rule in self.tensors.items():
            if rule.source in seen:
                raise MappingError(
                    f"source tensor {rule.source!r} mapped twice "
                    f"(to {seen[rule.source]!r} and {name!r})"
                )
            seen[rule.source] = name
        return expected
