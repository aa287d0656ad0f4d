"""Frequency-domain video super-resolution at desk scale.

Subpackages cover the dense tensor core with reverse-mode differentiation,
block DCT spectral maps, frequency tokenization, frequency/video attention,
the recurrent restoration model, a synthetic degradation pipeline, and
PSNR/SSIM evaluation. The `ftvsr` console script ties them together.
"""

from ftvsr.tensor import Tensor, NumericsError, ShapeError, concat

__all__ = ["Tensor", "NumericsError", "ShapeError", "concat"]
__version__ = "0.1.0"
