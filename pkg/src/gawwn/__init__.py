"""Text- and location-conditional image synthesis on a numpy autodiff core.

The package splits into a small differentiable-computation stack
(:mod:`gawwn.tensor`, :mod:`gawwn.layers`, :mod:`gawwn.optim`,
:mod:`gawwn.spatial`) and the models built on it: bbox- and
keypoint-conditional image GANs (:mod:`gawwn.nets`), a switch-gated
keypoint completion model (:mod:`gawwn.keypoints`), and a character-level
text embedding trained against images (:mod:`gawwn.text`). Training loops
live in :mod:`gawwn.training`, the synthetic bird benchmark in
:mod:`gawwn.toydata`, and the HTTP inference service in
:mod:`gawwn.server`.
"""

from .errors import (
    DimensionError,
    FormatError,
    GawwnError,
    GeometryError,
    InputError,
    NumericsError,
    TrainingError,
    UsageError,
)
from .tensor import Tensor, backward, grad_check
from .spatial import BBox
from .keypoints import KeypointSet
from .nets import (
    DiscriminatorBBox,
    DiscriminatorKeypoint,
    GeneratorBBox,
    GeneratorKeypoint,
    NetConfig,
    FULL_SCALE_CONFIG,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DimensionError",
    "DiscriminatorBBox",
    "DiscriminatorKeypoint",
    "FormatError",
    "GawwnError",
    "GeneratorBBox",
    "GeneratorKeypoint",
    "GeometryError",
    "InputError",
    "KeypointSet",
    "NetConfig",
    "NumericsError",
    "FULL_SCALE_CONFIG",
    "Tensor",
    "TrainConfig",
    "TrainingError",
    "UsageError",
    "backward",
    "grad_check",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
