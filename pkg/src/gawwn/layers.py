"""Parameterized building blocks over the tensor core.

A Module owns named parameter Tensors and child Modules; `parameters()`
flattens the tree into "child/name" keys, which is also the naming scheme
used by checkpoints. Weights start from N(0, 0.02) (biases zero, batch-norm
scale one), the initialization that keeps early GAN training stable.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError, UsageError
from .tensor import Tensor

INIT_STD = 0.02


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def add_param(self, name: str, data: np.ndarray, requires_grad: bool = True) -> Tensor:
        t = Tensor(data, requires_grad=requires_grad)
        self._params[name] = t
        return t

    def add_child(self, name: str, child: "Module") -> "Module":
        self._children[name] = child
        return child

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self._params)
        for cname, child in self._children.items():
            for pname, p in child.parameters().items():
                out[f"{cname}/{pname}"] = p
        return out

    def load_parameters(self, named: dict[str, np.ndarray]) -> None:
        """Copy values into existing parameters; names and shapes must match."""
        own = self.parameters()
        missing = sorted(set(own) - set(named))
        extra = sorted(set(named) - set(own))
        if missing or extra:
            raise UsageError(
                f"parameter name mismatch: missing {missing[:3]}, extra {extra[:3]}"
            )
        for name, p in own.items():
            arr = np.asarray(named[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"parameter {name}: stored shape {arr.shape}, "
                    f"model expects {p.data.shape}"
                )
            p.data = arr.copy()

    def freeze(self) -> None:
        for p in self.parameters().values():
            p.requires_grad = False

    def train(self, flag: bool = True) -> None:
        self.training = flag
        for child in self._children.values():
            child.train(flag)

    def eval(self) -> None:
        self.train(False)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.w = self.add_param(
            "w", rng.normal(0.0, INIT_STD, size=(in_features, out_features))
        )
        self.b = self.add_param("b", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_row(T.matmul(x, self.w), self.b)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.w = self.add_param(
            "w", rng.normal(0.0, INIT_STD, size=(out_channels, in_channels, kernel, kernel))
        )
        self.b = self.add_param("b", np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_channel(T.conv2d(x, self.w, self.stride, self.pad), self.b)


class Deconv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.w = self.add_param(
            "w", rng.normal(0.0, INIT_STD, size=(in_channels, out_channels, kernel, kernel))
        )
        self.b = self.add_param("b", np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_channel(T.deconv2d(x, self.w, self.stride, self.pad), self.b)


class BatchNorm2d(Module):
    """Batch normalization with affine scale/shift.

    Training mode normalizes with the current batch's statistics and folds
    them into running estimates; inference mode normalizes with the running
    estimates instead, so a sample's output does not depend on what else
    happens to share its batch.
    """

    def __init__(self, channels: int, momentum: float = 0.1):
        super().__init__()
        self.momentum = momentum
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        # running statistics ride along in _params so checkpoints carry them,
        # but never receive gradients
        self.running_mean = self.add_param(
            "running_mean", np.zeros(channels), requires_grad=False
        )
        self.running_var = self.add_param(
            "running_var", np.ones(channels), requires_grad=False
        )

    def __call__(self, x: Tensor) -> Tensor:
        if self.training:
            m = self.momentum
            self.running_mean.data *= 1.0 - m
            self.running_mean.data += m * x.data.mean(axis=(0, 2, 3))
            self.running_var.data *= 1.0 - m
            self.running_var.data += m * x.data.var(axis=(0, 2, 3))
            return T.batch_norm(x, self.gamma, self.beta)
        return T.batch_norm_inference(
            x, self.gamma, self.beta, self.running_mean.data, self.running_var.data
        )


class GRUCell(Module):
    """Single gated-recurrent step: h' = u*h + (1-u)*tanh(Wc x + Uc (r*h))."""

    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.wr = self.add_child("wr", Linear(in_features, hidden, rng))
        self.ur = self.add_child("ur", Linear(hidden, hidden, rng))
        self.wu = self.add_child("wu", Linear(in_features, hidden, rng))
        self.uu = self.add_child("uu", Linear(hidden, hidden, rng))
        self.wc = self.add_child("wc", Linear(in_features, hidden, rng))
        self.uc = self.add_child("uc", Linear(hidden, hidden, rng))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        r = T.sigmoid(T.add(self.wr(x), self.ur(h)))
        u = T.sigmoid(T.add(self.wu(x), self.uu(h)))
        c = T.tanh(T.add(self.wc(x), self.uc(T.mul(r, h))))
        one_minus_u = T.add(T.mul(u, -1.0), 1.0)
        return T.add(T.mul(u, h), T.mul(one_minus_u, c))
