"""Checkpoint -> bundle conversion."""

from __future__ import annotations

from typing import Dict

import numpy as np
import torch

from .bundle_format import write_bundle_file
from .mapping import ConversionMap, MappingError


def _load_state_dict(path, source_root=None) -> Dict[str, torch.Tensor]:
    state = torch.load(path, map_location="cpu", weights_only=True)
    if source_root is not None:
        for key in source_root.split("."):
            if key not in state:
                raise MappingError(f"source_root {source_root!r}: no entry {key!r}")
            state = state[key]
    if not isinstance(state, dict):
        raise MappingError("checkpoint did not resolve to a tensor dictionary")
    return state


def convert_checkpoint(cmap: ConversionMap, checkpoint_path, out_path) -> Dict[str, tuple]:
    """Emit a bundle the engine will accept; returns the exported shape table.

    Float32 source tensors pass through bit-for-bit; other dtypes are cast.
    Fails naming both sides whenever a source entry is absent or, after the
    optional permute, does not match the shape the target config requires.
    """
    expected = cmap.validate()
    state = _load_state_dict(checkpoint_path, cmap.source_root)

    tensors: Dict[str, np.ndarray] = {}
    for name in expected:
        rule = cmap.tensors[name]
        if rule.source not in state:
            raise MappingError(
                f"target {name!r}: checkpoint has no tensor {rule.source!r}"
            )
        value = state[rule.source].detach().cpu()
        array = value.numpy() if value.dtype == torch.float32 \
            else value.to(torch.float32).numpy()
        if rule.permute is not None:
            array = np.transpose(array, rule.permute)
        if array.shape != expected[name]:
            raise MappingError(
                f"target {name!r} from {rule.source!r}: shape {tuple(array.shape)} "
                f"does not match required {expected[name]}"
            )
        tensors[name] = np.ascontiguousarray(array, dtype=np.float32)

    write_bundle_file(out_path, cmap.target_config, tensors)
    return {name: tuple(t.shape) for name, t in tensors.items()}
