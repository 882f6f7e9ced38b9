"""Desk-scale CNN-Transformer hybrid for self-supervised monocular depth.

A from-scratch stack: float64 tensor autodiff, a convolutional stem feeding
a token encoder, attention-weighted skip connections into a gated fusion
decoder, photometric training on procedural multi-view scenes, the standard
depth metric suite, texture-shift generators, and a shape/texture bias probe.
"""

from .model import HybridDepthNet, ModelConfig

__version__ = "0.1.0"

__all__ = ["HybridDepthNet", "ModelConfig", "__version__"]
