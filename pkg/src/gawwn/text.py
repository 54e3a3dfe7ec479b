"""Character-level text encoder, image encoder, and their joint embedding.

Captions are lowercase sequences over a fixed 70-symbol alphabet, padded or
truncated to 201 characters (padding one-hots to the zero column). The text
side is a character CNN feeding a gated-recurrent unit; the image side is a
strided conv stack. Both project into a shared T-dimensional space scored by
inner products, trained with a symmetric margin-1 ranking loss so matched
(image, caption) pairs outscore mismatched classes. Encoders are trained
once, then frozen for adversarial training.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, InputError, UsageError
from .layers import GRUCell, Linear, Module
from .tensor import Tensor

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 " + string.punctuation + "\n"
ALPHABET_INDEX = {c: i for i, c in enumerate(ALPHABET)}
MAX_CAPTION_LEN = 201

assert len(ALPHABET) == 70


@dataclass(frozen=True)
class Caption:
    text: str
    class_id: int

    def __post_init__(self):
        bad = sorted({c for c in self.text if c not in ALPHABET_INDEX})
        if bad:
            raise InputError(f"characters outside the caption alphabet: {bad}")


def caption_to_onehot(text: str) -> np.ndarray:
    """[70, MAX_CAPTION_LEN]; positions past the text are all-zero padding."""
    bad = sorted({c for c in text if c not in ALPHABET_INDEX})
    if bad:
        raise InputError(f"characters outside the caption alphabet: {bad}")
    out = np.zeros((len(ALPHABET), MAX_CAPTION_LEN))
    for pos, c in enumerate(text[:MAX_CAPTION_LEN]):
        out[ALPHABET_INDEX[c], pos] = 1.0
    return out


class TextEncoder(Module):
    """One-hot characters -> temporal convs with pooling -> GRU -> length-T vector."""

    def __init__(self, t_dim: int, rng: np.random.Generator,
                 channels: tuple[int, int, int] = (48, 64, 64), hidden: int = 64):
        super().__init__()
        self.t_dim = t_dim
        self.hidden = hidden
        c1, c2, c3 = channels
        self.w1 = self.add_param("conv1/w", rng.normal(0, 0.02, (c1, len(ALPHABET), 1, 4)))
        self.b1 = self.add_param("conv1/b", np.zeros(c1))
        self.w2 = self.add_param("conv2/w", rng.normal(0, 0.02, (c2, c1, 1, 4)))
        self.b2 = self.add_param("conv2/b", np.zeros(c2))
        self.w3 = self.add_param("conv3/w", rng.normal(0, 0.02, (c3, c2, 1, 4)))
        self.b3 = self.add_param("conv3/b", np.zeros(c3))
        self.gru = self.add_child("gru", GRUCell(c3, hidden, rng))
        self.proj = self.add_child("proj", Linear(hidden, t_dim, rng))

    def __call__(self, onehots: Tensor) -> Tensor:
        """[N, 70, 1, 201] -> [N, T]."""
        n = onehots.shape[0]
        x = T.relu(T.add_channel(T.conv2d(onehots, self.w1), self.b1))  # len 198
        x = T.mean_pool(x, 1, 2)                                        # len 99
        x = T.relu(T.add_channel(T.conv2d(x, self.w2), self.b2))        # len 96
        x = T.mean_pool(x, 1, 2)                                        # len 48
        x = T.relu(T.add_channel(T.conv2d(x, self.w3), self.b3))        # len 45
        x = T.mean_pool(x, 1, 3)                                        # len 15
        steps = x.shape[3]
        c = x.shape[1]
        h = Tensor(np.zeros((n, self.hidden)))
        for i in range(steps):
            xi = T.reshape(T.narrow(x, 3, i, 1), (n, c))
            h = self.gru(xi, h)
        return self.proj(h)

    def encode(self, texts: list[str]) -> Tensor:
        if not texts:
            raise UsageError("encode of zero captions")
        onehots = np.stack([caption_to_onehot(t) for t in texts])[:, :, None, :]
        return self(Tensor(onehots))

    def encode_one(self, text: str) -> np.ndarray:
        return self.encode([text]).data[0]


class ImageEncoder(Module):
    """[-1,1] image -> length-T vector via a strided conv stack (no pooling
    to a scalar, so spatial structure survives into the embedding)."""

    def __init__(self, t_dim: int, image_size: int, rng: np.random.Generator,
                 base_channels: int = 32):
        super().__init__()
        self.t_dim = t_dim
        self.image_size = image_size
        size = image_size
        if size < 8 or size & (size - 1):
            raise DimensionError(f"image size must be a power of two >= 8, got {size}")
        self.convs: list[tuple[Tensor, Tensor]] = []
        c_in = 3
        i = 0
        while size > 4:
            c_out = min(base_channels * (2 ** i), 64)
            w = self.add_param(f"conv{i}/w", rng.normal(0, 0.02, (c_out, c_in, 4, 4)))
            b = self.add_param(f"conv{i}/b", np.zeros(c_out))
            self.convs.append((w, b))
            c_in = c_out
            size //= 2
            i += 1
        self.w_out = self.add_param("out/w", rng.normal(0, 0.02, (t_dim, c_in, 4, 4)))
        self.b_out = self.add_param("out/b", np.zeros(t_dim))

    def __call__(self, images: Tensor) -> Tensor:
        """[N, 3, S, S] -> [N, T]."""
        n = images.shape[0]
        if images.shape[1:] != (3, self.image_size, self.image_size):
            raise DimensionError(
                f"image encoder expects [N,3,{self.image_size},{self.image_size}], "
                f"got {images.shape}"
            )
        x = images
        for w, b in self.convs:
            x = T.relu(T.add_channel(T.conv2d(x, w, stride=2, pad=1), b))
        x = T.add_channel(T.conv2d(x, self.w_out), self.b_out)  # 4x4 valid -> 1x1
        return T.reshape(x, (n, self.t_dim))

    def encode_one(self, image: np.ndarray) -> np.ndarray:
        return self(Tensor(image[None])).data[0]


def compatibility(iv: np.ndarray, te: np.ndarray) -> float:
    iv = np.asarray(iv, dtype=np.float64)
    te = np.asarray(te, dtype=np.float64)
    if iv.shape != te.shape or iv.ndim != 1:
        raise DimensionError(f"compatibility of {iv.shape} vs {te.shape}")
    return float(iv @ te)


def ranking_loss(img_emb: Tensor, txt_emb: Tensor, class_ids, margin: float = 1.0) -> Tensor:
    """Symmetric hinge over the [N,N] compatibility matrix.

    For each pair (n, m) with different classes, penalizes
    max(0, margin + C[n,m] - C[n,n]) on the image side and the transposed
    term on the text side, each averaged over that row's mismatches.
    """
    y = np.asarray(class_ids)
    n = y.shape[0]
    if img_emb.shape[0] != n or txt_emb.shape != img_emb.shape:
        raise DimensionError(
            f"ranking_loss: {img_emb.shape} images, {txt_emb.shape} texts, {n} labels"
        )
    mismatched = (y[:, None] != y[None, :]).astype(np.float64)
    if not mismatched.any():
        raise UsageError("ranking loss needs at least two distinct classes in the batch")
    weights = Tensor(mismatched / mismatched.sum(axis=1, keepdims=True))

    c = T.matmul(img_emb, T.transpose2d(txt_emb))
    diag_col = T.matmul(T.mul(c, Tensor(np.eye(n))), Tensor(np.ones((n, 1))))
    matched = T.matmul(diag_col, Tensor(np.ones((1, n))))  # row n holds C[n,n]
    image_side = T.tsum(T.mul(T.relu(T.add(T.sub(c, matched), margin)), weights))
    text_side = T.tsum(
        T.mul(T.relu(T.add(T.sub(T.transpose2d(c), matched), margin)), weights)
    )
    return T.mul(T.add(image_side, text_side), 1.0 / n)


def joint_embedding_loss(
    images: Tensor,
    captions: list[list[str]],
    class_ids,
    image_encoder: ImageEncoder,
    text_encoder: TextEncoder,
    rng: np.random.Generator,
    captions_per_image: int = 4,
) -> Tensor:
    """Batch loss with text expectations estimated by sampled captions per image."""
    n = images.shape[0]
    if len(captions) != n:
        raise DimensionError(f"{n} images but {len(captions)} caption groups")
    img_emb = image_encoder(images)
    picked: list[str] = []
    for group in captions:
        if not group:
            raise UsageError("caption group is empty")
        idx = rng.integers(len(group), size=captions_per_image)
        picked.extend(group[i] for i in idx)
    flat = text_encoder.encode(picked)  # [N * captions_per_image, T]
    averaged = average_embedding_groups(flat, captions_per_image)
    return ranking_loss(img_emb, averaged, class_ids)


def average_embedding_groups(flat: Tensor, group: int) -> Tensor:
    """[N*group, T] -> [N, T], averaging each consecutive group of rows."""
    total = flat.shape[0]
    if total % group:
        raise DimensionError(f"{total} rows do not split into groups of {group}")
    n = total // group
    pool = np.zeros((n, total))
    for i in range(n):
        pool[i, i * group : (i + 1) * group] = 1.0 / group
    return T.matmul(Tensor(pool), flat)


def average_caption_embeddings(embeddings: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of caption embeddings."""
    if not embeddings:
        raise UsageError("average of zero caption embeddings")
    stacked = np.stack([np.asarray(e, dtype=np.float64) for e in embeddings])
    return stacked.mean(axis=0)


def classify_image(image_emb: np.ndarray, text_pools: list[np.ndarray]) -> int:
    """argmax over classes of mean compatibility with each class's caption pool."""
    return _classify(image_emb, text_pools)


def classify_text(text_emb: np.ndarray, image_pools: list[np.ndarray]) -> int:
    """argmax over classes of mean compatibility with each class's image pool."""
    return _classify(text_emb, image_pools)


def _classify(emb: np.ndarray, pools: list[np.ndarray]) -> int:
    if not pools:
        raise UsageError("no class pools given")
    scores = []
    for class_id, pool in enumerate(pools):
        pool = np.asarray(pool, dtype=np.float64)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise UsageError(f"class {class_id} has an empty embedding pool")
        scores.append(float(pool.mean(axis=0) @ np.asarray(emb, dtype=np.float64)))
    return int(np.argmax(scores))
