"""Location-conditional generators and discriminators.

All four networks share one shape grammar: a "what" vector (text embedding,
noise) meets a "where" signal (bounding box or keypoint grid) through paired
local and global pathways. The local pathway is spatially restricted to the
conditioned region: masked to the box in the bbox generator, cropped to the
box in the bbox discriminator, and multiplicatively gated by the keypoint
mask in the keypoint pair. Pathways merge at an M x M working resolution and
deconvolve up to the output size.

Architectures are resolution-parametric: stage counts derive from
log2 ratios, so (S=32, M=8) and (S=64, M=16) build without code changes.
Generators use relu and batch norm on hidden layers with a final tanh;
discriminators use leaky-relu and skip batch norm on their input layer and
both networks skip it at outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .keypoints import grid_to_binary_mask
from .layers import BatchNorm2d, Conv2d, Deconv2d, Linear, Module
from .spatial import BBox, crop_batch_to_bbox, mask_outside_bbox, replicate_spatial, warp_into_bbox
from .tensor import Tensor


@dataclass(frozen=True)
class NetConfig:
    image_size: int = 32        # S, output resolution
    grid_size: int = 8          # M, working resolution of the merge
    num_parts: int = 5          # K
    hidden_channels: int = 32   # H, per-pathway channels at the merge
    z_dim: int = 16
    t_dim: int = 64

    def __post_init__(self):
        for name in ("image_size", "grid_size", "num_parts", "hidden_channels",
                     "z_dim", "t_dim"):
            if getattr(self, name) < 1:
                raise DimensionError(f"{name} must be positive")
        s, m = self.image_size, self.grid_size
        if s % m or (s // m) & (s // m - 1) or m & (m - 1) or m < 2:
            raise DimensionError(
                f"image size {s} must be a power-of-two multiple of grid size {m}"
            )


# Full-scale setting: 128 px output, 16 x 16 grid, 15 parts, wide embeddings.
FULL_SCALE_CONFIG = NetConfig(
    image_size=128, grid_size=16, num_parts=15, hidden_channels=64,
    z_dim=100, t_dim=1024,
)


def _log2(n: int) -> int:
    return n.bit_length() - 1


class _UpToGrid(Module):
    """Vector [N,V] -> [N,H,M,M] deconv stack, channels 128 halving to H."""

    def __init__(self, v_dim: int, m: int, h: int, rng: np.random.Generator):
        super().__init__()
        stages = _log2(m)
        outs = [max(128 >> i, h) for i in range(stages - 1)] + [h]
        self.v_dim = v_dim
        self.blocks: list[tuple[Deconv2d, BatchNorm2d]] = []
        c_in = v_dim
        for i, c_out in enumerate(outs):
            if i == 0:
                deconv = Deconv2d(c_in, c_out, 2, rng)  # 1 -> 2
            else:
                deconv = Deconv2d(c_in, c_out, 4, rng, stride=2, pad=1)
            self.add_child(f"up{i}", deconv)
            bn = self.add_child(f"bn{i}", BatchNorm2d(c_out))
            self.blocks.append((deconv, bn))
            c_in = c_out

    def __call__(self, v: Tensor) -> Tensor:
        x = T.reshape(v, (v.shape[0], self.v_dim, 1, 1))
        for deconv, bn in self.blocks:
            x = T.relu(bn(deconv(x)))
        return x


class _DownToVector(Module):
    """[N,C,size,size] -> [N,out_dim] strided conv stack.

    Discriminator-flavored: leaky-relu, no batch norm on the first conv.
    Generators reuse it with relu/batch norm via flags.
    """

    def __init__(self, c_in: int, size: int, out_dim: int, rng: np.random.Generator,
                 base: int = 32, leaky: bool = True, bn_first: bool = False):
        super().__init__()
        self.leaky = leaky
        self.blocks: list[tuple[Conv2d, BatchNorm2d | None]] = []
        i = 0
        while size > 4:
            c_out = min(base << i, 128)
            conv = self.add_child(f"down{i}", Conv2d(c_in, c_out, 4, rng, stride=2, pad=1))
            use_bn = bn_first or i > 0
            bn = self.add_child(f"bn{i}", BatchNorm2d(c_out)) if use_bn else None
            self.blocks.append((conv, bn))
            c_in, size, i = c_out, size // 2, i + 1
        self.final = self.add_child("final", Conv2d(c_in, out_dim, size, rng))
        self.final_bn = self.add_child("final_bn", BatchNorm2d(out_dim)) if bn_first else None
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        act = (lambda v: T.leaky_relu(v)) if self.leaky else T.relu
        for conv, bn in self.blocks:
            x = conv(x)
            if bn is not None:
                x = bn(x)
            x = act(x)
        x = self.final(x)
        if self.final_bn is not None:
            x = act(self.final_bn(x))
        return T.reshape(x, (x.shape[0], self.out_dim))


class _TextToVector(Module):
    """[N,T,M,M] -> [N,out_dim] via same-size convs with mean pooling."""

    def __init__(self, t_dim: int, m: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.blocks: list[tuple[Conv2d, BatchNorm2d]] = []
        c_in, size, i = t_dim, m, 0
        while size > 4:
            conv = self.add_child(f"conv{i}", Conv2d(c_in, 64, 3, rng, pad=1))
            bn = self.add_child(f"bn{i}", BatchNorm2d(64))
            self.blocks.append((conv, bn))
            c_in, size, i = 64, size // 2, i + 1
        self.final = self.add_child("final", Conv2d(c_in, out_dim, size, rng))
        self.final_bn = self.add_child("final_bn", BatchNorm2d(out_dim))
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        for conv, bn in self.blocks:
            x = T.mean_pool(T.relu(bn(conv(x))), 2)
        x = T.relu(self.final_bn(self.final(x)))
        return T.reshape(x, (x.shape[0], self.out_dim))


class _UpToImage(Module):
    """[N,C,M,M] -> [N,3,S,S] deconv stack ending in tanh."""

    def __init__(self, c_in: int, m: int, s: int, rng: np.random.Generator):
        super().__init__()
        stages = _log2(s // m)
        self.blocks: list[tuple[Deconv2d, BatchNorm2d | None]] = []
        for i in range(stages):
            last = i == stages - 1
            c_out = 3 if last else max(c_in // 2, 16)
            deconv = self.add_child(f"up{i}", Deconv2d(c_in, c_out, 4, rng, stride=2, pad=1))
            bn = None if last else self.add_child(f"bn{i}", BatchNorm2d(c_out))
            self.blocks.append((deconv, bn))
            c_in = c_out

    def __call__(self, x: Tensor) -> Tensor:
        for deconv, bn in self.blocks:
            x = deconv(x)
            if bn is not None:
                x = T.relu(bn(x))
        return T.tanh(x)


def _check_zt(cfg: NetConfig, z: Tensor, t: Tensor, who: str) -> int:
    n = z.shape[0]
    if z.shape != (n, cfg.z_dim) or t.shape != (n, cfg.t_dim):
        raise DimensionError(
            f"{who}: z {z.shape} / t {t.shape} do not match Z={cfg.z_dim}, T={cfg.t_dim}"
        )
    return n


def _replicate_mask(grid: Tensor, channels: int) -> Tensor:
    """Binary any-part mask of a [N,K,M,M] grid, repeated to [N,C,M,M]."""
    mask = grid_to_binary_mask(grid)
    return Tensor(np.repeat(mask.data[:, None], channels, axis=1))


class GeneratorBBox(Module):
    """Text warped into the box -> shared vector -> masked local + global
    pathways -> depth merge -> image."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        m, h = cfg.grid_size, cfg.hidden_channels
        self.text_down = self.add_child(
            "text_down", _TextToVector(cfg.t_dim, m, 128, rng)
        )
        v_dim = 128 + cfg.z_dim
        self.global_up = self.add_child("global_up", _UpToGrid(v_dim, m, h, rng))
        self.local_up = self.add_child("local_up", _UpToGrid(v_dim, m, h, rng))
        self.render = self.add_child("render", _UpToImage(2 * h, m, cfg.image_size, rng))

    def forward(self, z: Tensor, t: Tensor, boxes: list[BBox],
                probes: dict | None = None) -> Tensor:
        cfg = self.cfg
        n = _check_zt(cfg, z, t, "bbox generator")
        if len(boxes) != n:
            raise DimensionError(f"{n} samples but {len(boxes)} boxes")
        spread = replicate_spatial(t, cfg.grid_size)
        warped = warp_into_bbox(spread, boxes, cfg.grid_size)
        vec = T.concat([self.text_down(warped), z], axis=1)
        global_path = self.global_up(vec)
        local_path = mask_outside_bbox(self.local_up(vec), boxes)
        if probes is not None:
            probes["local_premerge"] = local_path
        return self.render(T.concat_depth([global_path, local_path]))


class DiscriminatorBBox(Module):
    """Local path crops its features to the box; global path reduces the
    whole image and adds a projected text embedding; scores combine
    additively into a sigmoid."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        s, m = cfg.image_size, cfg.grid_size
        stages = _log2(s // m)
        self.local_convs: list[tuple[Conv2d, BatchNorm2d | None]] = []
        c_in = 3
        for i in range(stages):
            c_out = min(32 << i, 64)
            conv = self.add_child(f"local{i}", Conv2d(c_in, c_out, 4, rng, stride=2, pad=1))
            bn = self.add_child(f"local_bn{i}", BatchNorm2d(c_out)) if i > 0 else None
            self.local_convs.append((conv, bn))
            c_in = c_out
        self.fuse = self.add_child("fuse", Conv2d(c_in + cfg.t_dim, 64, 1, rng))
        self.fuse_bn = self.add_child("fuse_bn", BatchNorm2d(64))
        self.local_out = self.add_child(
            "local_out", _DownToVector(64, m // 2, 128, rng)
        )
        self.global_down = self.add_child(
            "global_down", _DownToVector(3, s, 128, rng)
        )
        self.t_proj = self.add_child("t_proj", Linear(cfg.t_dim, 128, rng))
        self.score = self.add_child("score", Linear(128, 1, rng))

    def forward(self, x: Tensor, t: Tensor, boxes: list[BBox]) -> Tensor:
        cfg = self.cfg
        n = x.shape[0]
        if x.shape != (n, 3, cfg.image_size, cfg.image_size):
            raise DimensionError(
                f"bbox discriminator expects [N,3,{cfg.image_size},{cfg.image_size}], "
                f"got {x.shape}"
            )
        if t.shape != (n, cfg.t_dim):
            raise DimensionError(f"t {t.shape} does not match T={cfg.t_dim}")
        feat = x
        for conv, bn in self.local_convs:
            feat = conv(feat)
            if bn is not None:
                feat = bn(feat)
            feat = T.leaky_relu(feat)
        feat = T.concat_depth([feat, replicate_spatial(t, cfg.grid_size)])
        feat = T.leaky_relu(self.fuse_bn(self.fuse(feat)))
        cropped = crop_batch_to_bbox(feat, boxes, cfg.grid_size // 2)
        local_vec = self.local_out(cropped)
        global_vec = T.add(self.global_down(x), self.t_proj(t))
        merged = T.leaky_relu(T.add(local_vec, global_vec))
        return T.sigmoid(self.score(merged))


class GeneratorKeypoint(Module):
    """Keypoint grid reduces to a vector joined with (z, t); the local
    pathway is gated by the any-part mask; grid, local, and global tensors
    merge by depth concatenation."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        m, h, k = cfg.grid_size, cfg.hidden_channels, cfg.num_parts
        self.grid_down = self.add_child(
            "grid_down",
            _DownToVector(k, m, 128, rng, base=64, leaky=False, bn_first=True),
        )
        v_dim = 128 + cfg.z_dim + cfg.t_dim
        self.global_up = self.add_child("global_up", _UpToGrid(v_dim, m, h, rng))
        self.local_up = self.add_child("local_up", _UpToGrid(v_dim, m, h, rng))
        self.render = self.add_child("render", _UpToImage(2 * h + k, m, cfg.image_size, rng))

    def forward(self, z: Tensor, t: Tensor, grid: Tensor,
                probes: dict | None = None) -> Tensor:
        cfg = self.cfg
        n = _check_zt(cfg, z, t, "keypoint generator")
        if grid.shape != (n, cfg.num_parts, cfg.grid_size, cfg.grid_size):
            raise DimensionError(
                f"keypoint grid {grid.shape} does not match "
                f"K={cfg.num_parts}, M={cfg.grid_size}"
            )
        vec = T.concat([self.grid_down(grid), z, t], axis=1)
        global_path = self.global_up(vec)
        gate = _replicate_mask(grid, cfg.hidden_channels)
        local_path = T.mul(self.local_up(vec), gate)
        if probes is not None:
            probes["local_postgate"] = local_path
            probes["gate"] = gate
        return self.render(T.concat_depth([global_path, local_path, grid]))


class DiscriminatorKeypoint(Module):
    """Local path fuses image features with replicated text and the grid,
    gated by the any-part mask; global path mirrors the bbox discriminator."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        s, m, k = cfg.image_size, cfg.grid_size, cfg.num_parts
        stages = _log2(s // m)
        self.local_convs: list[tuple[Conv2d, BatchNorm2d | None]] = []
        c_in = 3
        for i in range(stages):
            c_out = min(32 << i, 64)
            conv = self.add_child(f"local{i}", Conv2d(c_in, c_out, 4, rng, stride=2, pad=1))
            bn = self.add_child(f"local_bn{i}", BatchNorm2d(c_out)) if i > 0 else None
            self.local_convs.append((conv, bn))
            c_in = c_out
        self.fuse = self.add_child("fuse", Conv2d(c_in + cfg.t_dim + k, 64, 1, rng))
        self.fuse_bn = self.add_child("fuse_bn", BatchNorm2d(64))
        self.local_out = self.add_child("local_out", _DownToVector(64, m, 128, rng))
        self.global_down = self.add_child("global_down", _DownToVector(3, s, 128, rng))
        self.t_proj = self.add_child("t_proj", Linear(cfg.t_dim, 128, rng))
        self.score = self.add_child("score", Linear(128, 1, rng))

    def forward(self, x: Tensor, t: Tensor, grid: Tensor) -> Tensor:
        cfg = self.cfg
        n = x.shape[0]
        if x.shape != (n, 3, cfg.image_size, cfg.image_size):
            raise DimensionError(
                f"keypoint discriminator expects [N,3,{cfg.image_size},"
                f"{cfg.image_size}], got {x.shape}"
            )
        if grid.shape != (n, cfg.num_parts, cfg.grid_size, cfg.grid_size):
            raise DimensionError(
                f"keypoint grid {grid.shape} does not match "
                f"K={cfg.num_parts}, M={cfg.grid_size}"
            )
        feat = x
        for conv, bn in self.local_convs:
            feat = conv(feat)
            if bn is not None:
                feat = bn(feat)
            feat = T.leaky_relu(feat)
        feat = T.concat_depth([feat, replicate_spatial(t, cfg.grid_size), grid])
        feat = T.leaky_relu(self.fuse_bn(self.fuse(feat)))
        feat = T.mul(feat, _replicate_mask(grid, 64))
        local_vec = self.local_out(feat)
        global_vec = T.add(self.global_down(x), self.t_proj(t))
        merged = T.leaky_relu(T.add(local_vec, global_vec))
        return T.sigmoid(self.score(merged))
