"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is define-by-run: every operation that receives at least one
``requires_grad`` input records its parents and a local vector-Jacobian
closure on the output tensor.  ``backward`` walks the recorded graph once in
reverse topological order and accumulates gradients into the leaves.

Only scalar-tensor broadcasting is allowed.  Everything else (bias addition,
spatial replication) goes through explicit ops with explicit gradient rules,
which keeps shape bugs loud.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GeometryError, NumericsError, UsageError

# Forward outputs are validated against NaN/Inf: overflow is an error, never a
# silent value.  Flip this off only for throwaway experiments.
CHECK_FINITE = True


def _check_finite(data: np.ndarray, op: str) -> None:
    if CHECK_FINITE and not np.isfinite(data).all():
        raise NumericsError(f"non-finite values produced by op '{op}'")


class Tensor:
    """N-dimensional float64 array with optional autodiff linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar; scalar operands are the only permitted broadcast
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def from_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    vjp: Callable[[np.ndarray], tuple],
    op: str,
) -> Tensor:
    """Wrap an op result, recording graph linkage when any parent needs grads.

    ``vjp`` maps the output gradient to a tuple of parent gradients (entries
    may be None for parents that do not require gradients).
    """
    _check_finite(data, op)
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# pointwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        out = a.data + float(b)
        return from_op(out, [a], lambda g: (g,), "add_scalar")
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return from_op(a.data + b.data, [a, b], lambda g: (g, g), "add")


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        return from_op(a.data - float(b), [a], lambda g: (g,), "sub_scalar")
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return from_op(a.data - b.data, [a, b], lambda g: (g, -g), "sub")


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        s = float(b)
        return from_op(a.data * s, [a], lambda g: (g * s,), "mul_scalar")
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "mul")
    return from_op(
        a.data * b.data, [a, b], lambda g: (g * b.data, g * a.data), "mul"
    )


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = (x.data > 0).astype(np.float64)
    return from_op(out, [x], lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, alpha)
    return from_op(x.data * slope, [x], lambda g: (g * slope,), "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return from_op(t, [x], lambda g: (g * (1.0 - t * t),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    return from_op(s, [x], lambda g: (g * s * (1.0 - s),), "sigmoid")


def log(x: Tensor) -> Tensor:
    return from_op(np.log(x.data), [x], lambda g: (g / x.data,), "log")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through only inside the range."""
    out = np.clip(x.data, lo, hi)
    mask = ((x.data >= lo) & (x.data <= hi)).astype(np.float64)
    return from_op(out, [x], lambda g: (g * mask,), "clamp")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size and -1 not in shape:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    in_shape = x.shape
    return from_op(
        x.data.reshape(shape), [x], lambda g: (g.reshape(in_shape),), "reshape"
    )


def tsum(x: Tensor) -> Tensor:
    """Sum of all entries (scalar output)."""
    return from_op(
        np.asarray(x.data.sum()),
        [x],
        lambda g: (np.full(x.shape, float(g)),),
        "sum",
    )


def tmean(x: Tensor) -> Tensor:
    """Mean of all entries (scalar output)."""
    n = x.size
    return from_op(
        np.asarray(x.data.mean()),
        [x],
        lambda g: (np.full(x.shape, float(g) / n),),
        "mean",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ {a.shape} @ {b.shape}")
    return from_op(
        a.data @ b.data,
        [a, b],
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose2d expects a matrix, got {x.shape}")
    return from_op(x.data.T.copy(), [x], lambda g: (g.T,), "transpose2d")


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise UsageError("concat of zero tensors")
    base = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis % len(base)
        ):
            raise DimensionError(f"concat: incompatible shapes {[x.shape for x in xs]}")
    sizes = [x.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(xs))
        )

    return from_op(np.concatenate([x.data for x in xs], axis=axis), xs, vjp, "concat")


def concat_depth(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis (axis 1 for N,C,H,W and N,F)."""
    return concat(xs, axis=1)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; gradient scatters back zero-padded."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        gx = np.zeros(x.shape)
        gx[idx] = g
        return (gx,)

    return from_op(x.data[idx].copy(), [x], vjp, "narrow")


def add_row(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-M vector to every row of an [N, M] matrix."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_row: {x.shape} + {b.shape}")
    return from_op(
        x.data + b.data[None, :],
        [x, b],
        lambda g: (g, g.sum(axis=0)),
        "add_row",
    )


def add_channel(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias to an [N, C, H, W] tensor."""
    if x.data.ndim != 4 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_channel: {x.shape} + {b.shape}")
    return from_op(
        x.data + b.data[None, :, None, None],
        [x, b],
        lambda g: (g, g.sum(axis=(0, 2, 3))),
        "add_channel",
    )


def mean_pool(x: Tensor, kh: int, kw: int | None = None) -> Tensor:
    """Non-overlapping average pooling over the two trailing spatial axes."""
    kw = kh if kw is None else kw
    if x.data.ndim != 4:
        raise DimensionError(f"mean_pool expects N,C,H,W, got {x.shape}")
    n, c, h, w = x.shape
    if h % kh or w % kw:
        raise DimensionError(f"mean_pool: {h}x{w} not divisible by {kh}x{kw}")
    ho, wo = h // kh, w // kw
    out = x.data.reshape(n, c, ho, kh, wo, kw).mean(axis=(3, 5))

    def vjp(g):
        gx = np.broadcast_to(
            g[:, :, :, None, :, None] / (kh * kw), (n, c, ho, kh, wo, kw)
        )
        return (gx.reshape(n, c, h, w).copy(),)

    return from_op(out, [x], vjp, "mean_pool")


# ---------------------------------------------------------------------------
# convolution / transposed convolution
# ---------------------------------------------------------------------------

def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[N,C,Hp,Wp] -> [N,C,Ho,Wo,kh,kw] view of strided kh x kw patches."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _scatter(y: np.ndarray, w: np.ndarray, stride: int, pad: int,
             out_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of the strided patch extraction used by _windows.

    y: [N,A,Hy,Wy], w: [A,B,kh,kw] -> out: [N,B,H,W] where each y entry
    spreads a scaled kernel copy at (hy*stride - pad, wy*stride - pad).
    """
    n, a, hy, wy = y.shape
    _, b, kh, kw = w.shape
    h, wdt = out_hw
    buf = np.zeros((n, b, h + 2 * pad, wdt + 2 * pad))
    # [n,a,hy,wy] x [a,b,kh,kw] -> [n,hy,wy,b,kh,kw] through one dgemm
    t = np.tensordot(y, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i : i + hy * stride : stride, j : j + wy * stride : stride] += t[
                ..., i, j
            ]
    return buf[:, :, pad : pad + h, pad : pad + wdt]


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Strided 2-D cross-correlation: [N,C,H,W] * [F,C,kh,kw] -> [N,F,H',W']."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D operands, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {cw}")
    if stride < 1:
        raise GeometryError(f"conv2d: stride must be >= 1, got {stride}")
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise GeometryError(
            f"conv2d: kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * pad}x{wd + 2 * pad}"
        )
    win = _windows(_pad_hw(x.data, pad), kh, kw, stride)
    # contract (c,kh,kw) against the weight through dgemm
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def vjp(g):
        gx = _scatter(g, w.data, stride, pad, (h, wd))
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        return (gx, gw)

    return from_op(out, [x, w], vjp, "conv2d")


def deconv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed convolution: [N,C,H,W] * [C,F,kh,kw] -> [N,F,H',W'].

    Exactly the adjoint of conv2d with the same weight and geometry:
    H' = (H-1)*stride - 2*pad + kh.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(f"deconv2d expects 4-D operands, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    cw, f, kh, kw = w.shape
    if c != cw:
        raise DimensionError(f"deconv2d: input has {c} channels, weight expects {cw}")
    if stride < 1:
        raise GeometryError(f"deconv2d: stride must be >= 1, got {stride}")
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (wd - 1) * stride - 2 * pad + kw
    if ho <= 0 or wo <= 0:
        raise GeometryError(f"deconv2d: output extent {ho}x{wo} is not positive")
    out = _scatter(x.data, w.data, stride, pad, (ho, wo))

    def vjp(g):
        gwin = _windows(_pad_hw(g, pad), kh, kw, stride)
        gx = np.tensordot(gwin, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, gwin, axes=([0, 2, 3], [0, 2, 3]))
        return (gx, gw)

    return from_op(out, [x, w], vjp, "deconv2d")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W) with affine scale/shift."""
    if x.data.ndim != 4:
        raise DimensionError(f"batch_norm expects N,C,H,W, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: affine params must be length {c}")
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def vjp(g):
        dbeta = g.sum(axis=axes)
        dgamma = (g * xhat).sum(axis=axes)
        gxhat = g * gamma.data[None, :, None, None]
        gx = (
            inv
            / m
            * (
                m * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        )
        return (gx, dgamma, dbeta)

    return from_op(out, [x, gamma, beta], vjp, "batch_norm")


def batch_norm_inference(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization with fixed statistics.

    Unlike `batch_norm`, mean and var are constants, so each sample's output
    is independent of whatever else shares its batch.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"batch_norm expects N,C,H,W, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: affine params must be length {c}")
    if mean.shape != (c,) or var.shape != (c,):
        raise DimensionError(f"batch_norm: statistics must be length {c}")
    axes = (0, 2, 3)
    inv = (1.0 / np.sqrt(var + eps))[None, :, None, None]
    xhat = (x.data - mean[None, :, None, None]) * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def vjp(g):
        dbeta = g.sum(axis=axes)
        dgamma = (g * xhat).sum(axis=axes)
        gx = g * gamma.data[None, :, None, None] * inv
        return (gx, dgamma, dbeta)

    return from_op(out, [x, gamma, beta], vjp, "batch_norm_inference")


# ---------------------------------------------------------------------------
# backward engine
# ---------------------------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss."""
    if loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("backward on a tensor with no graph attached")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_toposort(loss)):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


def grad_check(fn: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar-valued fn against central differences.

    Returns max over entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise UsageError("grad_check: eps must be positive")
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = fn(probe)
    if out.data.size != 1:
        raise UsageError(f"grad_check: fn output must be scalar, got shape {out.shape}")
    backward(out)
    analytic = (
        probe.grad.copy() if probe.grad is not None else np.zeros_like(probe.data)
    )

    numeric = np.zeros_like(probe.data)
    flat = probe.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(Tensor(probe.data)).item()
        flat[i] = orig - eps
        lo = fn(Tensor(probe.data)).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
