"""Low-light image restoration with a linear-attention recurrence core.

The package is self-contained on numpy: a small reverse-mode autodiff engine
(`autodiff`), bidirectional WKV token mixing with a compiled kernel and a
numpy fallback (`wkv`), luminance-adaptive normalization (`luminance_norm`),
state-aware skip fusion (`fusion`), the encoder-decoder model (`model`), and
a training/evaluation harness (`training`, `data`, `metrics`, `cli`).
"""

from .autodiff import Tensor, no_grad
from .config import LossWeights, TrainSettings, UrwkvConfig
from .model import RestorationModel
from .wkv import HAVE_COMPILED, active_backend

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "UrwkvConfig",
    "LossWeights",
    "TrainSettings",
    "RestorationModel",
    "HAVE_COMPILED",
    "active_backend",
    "__version__",
]
