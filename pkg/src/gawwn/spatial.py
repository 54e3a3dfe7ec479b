"""Bounding-box warping, bilinear grid sampling, replication, masking, cropping.

Coordinate conventions (used by every caller, defined only here):

- Boxes are (x0, y0, w, h) in [0,1] with a top-left origin.
- Sampling happens in [-1,1] normalized space; an affine maps *output*
  coordinates to *input* coordinates.
- Pixel i of an M-pixel axis has its center at (i + 0.5) / M, i.e. the
  [-1,1] coordinate (2i + 1) / M - 1.  Box membership tests use pixel
  centers.
- Out-of-range bilinear samples contribute zero (zero padding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, GeometryError
from .tensor import Tensor, concat, from_op, reshape


@dataclass(frozen=True)
class BBox:
    """Normalized object bounding box, top-left origin."""

    x0: float
    y0: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(f"degenerate box: w={self.w}, h={self.h}")
        eps = 1e-9
        if self.x0 < -eps or self.y0 < -eps:
            raise GeometryError(f"box origin out of range: ({self.x0}, {self.y0})")
        if self.x0 + self.w > 1 + eps or self.y0 + self.h > 1 + eps:
            raise GeometryError(
                f"box exceeds unit square: ({self.x0}+{self.w}, {self.y0}+{self.h})"
            )

    def center(self) -> tuple[float, float]:
        return (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)

    @staticmethod
    def lerp(a: "BBox", b: "BBox", t: float) -> "BBox":
        return BBox(
            a.x0 + (b.x0 - a.x0) * t,
            a.y0 + (b.y0 - a.y0) * t,
            a.w + (b.w - a.w) * t,
            a.h + (b.h - a.h) * t,
        )


@dataclass(frozen=True)
class AffineParams:
    """2x3 matrix mapping output sampling coords to input coords in [-1,1]^2."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise DimensionError(f"affine params must be 2x3, got {m.shape}")
        if not np.isfinite(m).all():
            raise GeometryError("affine params contain non-finite entries")
        object.__setattr__(self, "matrix", m)


def bbox_to_affine_into(b: BBox) -> AffineParams:
    """Affine that paints a full source image into the box region of the output.

    Output pixels inside the box sample the source across its whole extent;
    pixels outside map beyond [-1,1] and read zero padding.
    """
    cx = 2.0 * b.x0 + b.w - 1.0
    cy = 2.0 * b.y0 + b.h - 1.0
    return AffineParams(
        np.array([[1.0 / b.w, 0.0, -cx / b.w], [0.0, 1.0 / b.h, -cy / b.h]])
    )


def bbox_to_affine_crop(b: BBox) -> AffineParams:
    """Affine whose output spans exactly the box region of the input."""
    cx = 2.0 * b.x0 + b.w - 1.0
    cy = 2.0 * b.y0 + b.h - 1.0
    return AffineParams(np.array([[b.w, 0.0, cx], [0.0, b.h, cy]]))


def _out_grid(out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    xo = (2.0 * np.arange(out_w) + 1.0) / out_w - 1.0
    yo = (2.0 * np.arange(out_h) + 1.0) / out_h - 1.0
    return np.meshgrid(xo, yo)


def grid_sample_bilinear(x: Tensor, theta, out_h: int, out_w: int) -> Tensor:
    """Bilinear sampling of a [C,H,W] tensor through an affine-mapped grid.

    ``theta`` may be an AffineParams, a 2x3 array, or a 2x3 Tensor; passing a
    Tensor makes the result differentiable w.r.t. the transform as well.
    """
    if x.data.ndim != 3:
        raise DimensionError(f"grid_sample expects C,H,W input, got {x.shape}")
    theta_t = theta if isinstance(theta, Tensor) else None
    th = (
        theta.data
        if isinstance(theta, Tensor)
        else theta.matrix
        if isinstance(theta, AffineParams)
        else np.asarray(theta, dtype=np.float64)
    )
    if th.shape != (2, 3):
        raise DimensionError(f"theta must be 2x3, got {th.shape}")
    c, h, w = x.shape
    grid_x, grid_y = _out_grid(out_h, out_w)
    xi = th[0, 0] * grid_x + th[0, 1] * grid_y + th[0, 2]
    yi = th[1, 0] * grid_x + th[1, 1] * grid_y + th[1, 2]
    u = (xi + 1.0) * 0.5 * w - 0.5
    v = (yi + 1.0) * 0.5 * h - 0.5
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    du = u - u0
    dv = v - v0

    def gathered(vv, uu):
        valid = (vv >= 0) & (vv < h) & (uu >= 0) & (uu < w)
        vals = x.data[:, np.clip(vv, 0, h - 1), np.clip(uu, 0, w - 1)]
        return vals * valid, valid

    x00, m00 = gathered(v0, u0)
    x01, m01 = gathered(v0, u0 + 1)
    x10, m10 = gathered(v0 + 1, u0)
    x11, m11 = gathered(v0 + 1, u0 + 1)
    w00 = (1.0 - dv) * (1.0 - du)
    w01 = (1.0 - dv) * du
    w10 = dv * (1.0 - du)
    w11 = dv * du
    out = w00 * x00 + w01 * x01 + w10 * x10 + w11 * x11

    corners = ((v0, u0, w00, m00), (v0, u0 + 1, w01, m01),
               (v0 + 1, u0, w10, m10), (v0 + 1, u0 + 1, w11, m11))

    def vjp(g):
        gx = None
        if x.requires_grad:
            acc = np.zeros((h * w, c))
            for vv, uu, wt, valid in corners:
                iv = vv[valid]
                iu = uu[valid]
                contrib = (g * wt)[:, valid]
                np.add.at(acc, iv * w + iu, contrib.T)
            gx = acc.T.reshape(c, h, w)
        gth = None
        if theta_t is not None and theta_t.requires_grad:
            dval_du = (1.0 - dv) * (x01 - x00) + dv * (x11 - x10)
            dval_dv = (1.0 - du) * (x10 - x00) + du * (x11 - x01)
            gu = (g * dval_du).sum(axis=0) * (0.5 * w)
            gv = (g * dval_dv).sum(axis=0) * (0.5 * h)
            gth = np.array(
                [
                    [(gu * grid_x).sum(), (gu * grid_y).sum(), gu.sum()],
                    [(gv * grid_x).sum(), (gv * grid_y).sum(), gv.sum()],
                ]
            )
        return (gx, gth) if theta_t is not None else (gx,)

    parents = [x, theta_t] if theta_t is not None else [x]
    return from_op(out, parents, vjp, "grid_sample")


def replicate_spatial(v: Tensor, m: int) -> Tensor:
    """Copy a feature vector into every cell of an m x m spatial map.

    [T] -> [T,m,m] and [N,T] -> [N,T,m,m]; the gradient sums over locations.
    """
    if m < 1:
        raise GeometryError(f"replicate_spatial: m must be >= 1, got {m}")
    if v.data.ndim == 1:
        out = np.broadcast_to(v.data[:, None, None], (v.shape[0], m, m)).copy()
        return from_op(out, [v], lambda g: (g.sum(axis=(1, 2)),), "replicate_spatial")
    if v.data.ndim == 2:
        n, t = v.shape
        out = np.broadcast_to(v.data[:, :, None, None], (n, t, m, m)).copy()
        return from_op(out, [v], lambda g: (g.sum(axis=(2, 3)),), "replicate_spatial")
    raise DimensionError(f"replicate_spatial expects [T] or [N,T], got {v.shape}")


def bbox_pixel_mask(b: BBox, m: int) -> np.ndarray:
    """0/1 array of shape [m,m]; 1 where the pixel center lies inside the box."""
    centers = (np.arange(m) + 0.5) / m
    in_x = (centers >= b.x0) & (centers <= b.x0 + b.w)
    in_y = (centers >= b.y0) & (centers <= b.y0 + b.h)
    return (in_y[:, None] & in_x[None, :]).astype(np.float64)


def mask_outside_bbox(x: Tensor, b: BBox | Sequence[BBox]) -> Tensor:
    """Zero every entry whose pixel center falls outside the box.

    Accepts [C,M,M] with one box or [N,C,M,M] with one box per sample.
    The gradient is the same 0/1 mask.
    """
    if x.data.ndim == 3:
        mask = bbox_pixel_mask(b, x.shape[-1])[None, :, :]
    elif x.data.ndim == 4:
        boxes = list(b) if not isinstance(b, BBox) else [b] * x.shape[0]
        if len(boxes) != x.shape[0]:
            raise DimensionError(f"{len(boxes)} boxes for batch of {x.shape[0]}")
        mask = np.stack([bbox_pixel_mask(bb, x.shape[-1]) for bb in boxes])[:, None]
    else:
        raise DimensionError(f"mask_outside_bbox expects 3-D or 4-D input, got {x.shape}")
    if x.shape[-1] != x.shape[-2]:
        raise DimensionError(f"mask_outside_bbox expects square maps, got {x.shape}")
    return from_op(x.data * mask, [x], lambda g: (g * mask,), "mask_bbox")


def crop_to_bbox(x: Tensor, b: BBox, out_m: int) -> Tensor:
    """Resample the box region of a [C,M,M] tensor to fill an out_m square."""
    return grid_sample_bilinear(x, bbox_to_affine_crop(b), out_m, out_m)


def stack(xs: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    return concat([reshape(x, (1,) + x.shape) for x in xs], axis=0)


def warp_into_bbox(x: Tensor, boxes: Sequence[BBox], out_m: int) -> Tensor:
    """Per-sample warp of [N,C,H,W] feature maps into their boxes at out_m."""
    if x.data.ndim != 4:
        raise DimensionError(f"warp_into_bbox expects N,C,H,W, got {x.shape}")
    if len(boxes) != x.shape[0]:
        raise DimensionError(f"{len(boxes)} boxes for batch of {x.shape[0]}")
    rows = []
    for i, bb in enumerate(boxes):
        sample = narrow_sample(x, i)
        rows.append(grid_sample_bilinear(sample, bbox_to_affine_into(bb), out_m, out_m))
    return stack(rows)


def crop_batch_to_bbox(x: Tensor, boxes: Sequence[BBox], out_m: int) -> Tensor:
    """Per-sample crop of [N,C,M,M] maps to their boxes at out_m resolution."""
    if len(boxes) != x.shape[0]:
        raise DimensionError(f"{len(boxes)} boxes for batch of {x.shape[0]}")
    return stack(
        [crop_to_bbox(narrow_sample(x, i), bb, out_m) for i, bb in enumerate(boxes)]
    )


def narrow_sample(x: Tensor, i: int) -> Tensor:
    """View sample i of a batched tensor as [C,H,W]."""
    from .tensor import narrow

    return reshape(narrow(x, 0, i, 1), x.shape[1:])
