"""Checkpoint exporter for the DEVO engine.

Converts externally trained PyTorch checkpoints (HiFiGAN-style generators,
CPC-style convolutional encoders) into the engine's single-file weight-bundle
format, and verifies numerical agreement by running the engine binary on a
probe signal next to a PyTorch reference forward pass. The engine itself is
only touched through its published interfaces: the bundle byte format and the
command-line tool.
"""

from .bundle_format import read_bundle_file, write_bundle_file
from .mapping import ConversionMap, expected_tensor_shapes
from .convert import convert_checkpoint
from .verify import VerificationReport, verify_conversion

__version__ = "0.1.0"
