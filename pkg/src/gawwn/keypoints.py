"""Keypoint encodings and the switch-gated conditional keypoint model.

A pose is K parts, each (x, y, v) with coordinates in [0,1] and a visibility
bit; invisible parts carry x == y == 0 so the encoding never leaks stale
positions. The completion generator fills in unobserved parts: observed rows
(switch bit 1) pass through untouched, the rest come from a small MLP over
(z, text, masked keypoints).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, InputError
from .layers import Linear, Module
from .tensor import Tensor


@dataclass(frozen=True)
class KeypointSet:
    """K rows of (x, y, v); v in {0,1}; v == 0 forces x == y == 0."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DimensionError(f"keypoints must be [K,3], got {arr.shape}")
        x, y, v = arr[:, 0], arr[:, 1], arr[:, 2]
        if not np.isin(v, (0.0, 1.0)).all():
            raise InputError("visibility bits must be 0 or 1")
        if (x < 0).any() or (x > 1).any() or (y < 0).any() or (y > 1).any():
            raise InputError("keypoint coordinates must lie in [0,1]")
        hidden = v == 0.0
        if (x[hidden] != 0).any() or (y[hidden] != 0).any():
            raise InputError("invisible parts must have x == y == 0")
        object.__setattr__(self, "rows", arr)

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    def visible(self) -> np.ndarray:
        return self.rows[:, 2] == 1.0


def keypoints_to_grid(kp: KeypointSet, m: int) -> Tensor:
    """One channel per part; a visible part puts a 1 at its grid cell.

    Cell indices are floor(coord * m), clamped to m - 1 so coordinate 1.0
    lands in the last cell.
    """
    if m < 1:
        raise DimensionError(f"grid size must be >= 1, got {m}")
    g = np.zeros((kp.k, m, m))
    for i, (x, y, v) in enumerate(kp.rows):
        if v == 1.0:
            col = min(int(x * m), m - 1)
            row = min(int(y * m), m - 1)
            g[i, row, col] = 1.0
    return Tensor(g)


def grid_to_binary_mask(g: Tensor) -> Tensor:
    """[K,M,M] or [N,K,M,M] -> 0/1 mask over cells occupied by any part."""
    if g.data.ndim == 3:
        mask = (g.data.sum(axis=0) > 0).astype(np.float64)
    elif g.data.ndim == 4:
        mask = (g.data.sum(axis=1) > 0).astype(np.float64)
    else:
        raise DimensionError(f"keypoint grid must be [K,M,M] or [N,K,M,M], got {g.shape}")
    return Tensor(mask)


def sample_switches(kp: KeypointSet, p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(p) bits, forced to 0 for invisible parts."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"switch probability must be in [0,1], got {p}")
    s = (rng.random(kp.k) < p).astype(np.float64)
    s[~kp.visible()] = 0.0
    return s


def _gate_mask(s: np.ndarray, k: int) -> np.ndarray:
    """[K] or [N,K] switch bits -> [?,3K] mask repeating each bit over (x,y,v)."""
    s = np.asarray(s, dtype=np.float64)
    return np.repeat(s, 3, axis=-1).reshape(*s.shape[:-1], 3 * k)


class CompletionGenerator(Module):
    """s ⊙ k + (1 − s) ⊙ f(z, t, s ⊙ k), with f a 3-layer MLP.

    f sees only the masked keypoints, so unobserved ground truth cannot leak
    into its prediction; its raw output is squashed by a sigmoid so every
    coordinate (and the continuous visibility score) lies in (0,1).
    """

    def __init__(self, k: int, z_dim: int, t_dim: int, rng: np.random.Generator,
                 hidden: int = 256):
        super().__init__()
        self.k = k
        self.z_dim = z_dim
        self.t_dim = t_dim
        self.fc1 = self.add_child("fc1", Linear(z_dim + t_dim + 3 * k, hidden, rng))
        self.fc2 = self.add_child("fc2", Linear(hidden, hidden, rng))
        self.fc3 = self.add_child("fc3", Linear(hidden, 3 * k, rng))

    def forward(self, z: Tensor, t: Tensor, kp_flat: Tensor, s: np.ndarray) -> Tensor:
        """Batched continuous output [N, 3K]; rows gated per Eq. of the class doc."""
        n = z.shape[0]
        if z.shape != (n, self.z_dim) or t.shape != (n, self.t_dim):
            raise DimensionError(
                f"completion generator: z {z.shape} / t {t.shape} do not match "
                f"Z={self.z_dim}, T={self.t_dim}"
            )
        if kp_flat.shape != (n, 3 * self.k):
            raise DimensionError(
                f"completion generator: keypoints {kp_flat.shape}, expected {(n, 3 * self.k)}"
            )
        gate = Tensor(_gate_mask(s, self.k))
        if gate.shape != kp_flat.shape:
            raise DimensionError(f"switches {np.shape(s)} do not match K={self.k}")
        inv_gate = Tensor(1.0 - gate.data)
        masked = T.mul(kp_flat, gate)
        h = T.relu(self.fc1(T.concat([z, t, masked], axis=1)))
        h = T.relu(self.fc2(h))
        predicted = T.sigmoid(self.fc3(h))
        return T.add(T.mul(gate, kp_flat), T.mul(inv_gate, predicted))

    def sample(self, z: np.ndarray, t: np.ndarray, kp: KeypointSet,
               s: np.ndarray) -> KeypointSet:
        """Single completion: threshold v at 0.5, zero coordinates of hidden parts."""
        out = self.forward(
            Tensor(z.reshape(1, -1)),
            Tensor(t.reshape(1, -1)),
            Tensor(kp.rows.reshape(1, -1)),
            np.asarray(s, dtype=np.float64).reshape(1, -1),
        ).data.reshape(self.k, 3)
        rows = out.copy()
        observed = np.asarray(s, dtype=np.float64) == 1.0
        vis = rows[:, 2] >= 0.5
        rows[:, 2] = np.where(vis, 1.0, 0.0)
        rows[~vis & ~observed, 0:2] = 0.0
        # observed rows were echoed bitwise by the gate; leave them untouched
        rows[observed] = kp.rows[observed]
        return KeypointSet(rows)


class CompletionDiscriminator(Module):
    """Scores (keypoints, text) pairs: 3-layer MLP to a sigmoid scalar."""

    def __init__(self, k: int, t_dim: int, rng: np.random.Generator, hidden: int = 256):
        super().__init__()
        self.k = k
        self.t_dim = t_dim
        self.fc1 = self.add_child("fc1", Linear(3 * k + t_dim, hidden, rng))
        self.fc2 = self.add_child("fc2", Linear(hidden, hidden, rng))
        self.fc3 = self.add_child("fc3", Linear(hidden, 1, rng))

    def forward(self, kp_flat: Tensor, t: Tensor) -> Tensor:
        n = kp_flat.shape[0]
        if kp_flat.shape != (n, 3 * self.k) or t.shape != (n, self.t_dim):
            raise DimensionError(
                f"completion discriminator: keypoints {kp_flat.shape} / t {t.shape} "
                f"do not match K={self.k}, T={self.t_dim}"
            )
        h = T.leaky_relu(self.fc1(T.concat([kp_flat, t], axis=1)))
        h = T.leaky_relu(self.fc2(h))
        return T.sigmoid(self.fc3(h))

    def score(self, kp: KeypointSet, t: np.ndarray) -> float:
        out = self.forward(
            Tensor(kp.rows.reshape(1, -1)), Tensor(t.reshape(1, -1))
        )
        return float(out.data[0, 0])
