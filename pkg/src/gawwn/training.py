"""Adversarial and embedding training loops.

One discriminator step ascends
    log D(x, c) + log(1 - D(G(z, c), c)) + 0.5 * log(1 - D(x, c_mismatched))
and one generator step ascends log D(G(z, c), c). For the image models each
step draws one of two deliberately orthogonal mismatch pairings: wrong text
with the right location, or the right text with a wrong location. Each
pairing leaves exactly one agreement cue broken, so the discriminator
cannot satisfy the term through the easier cue alone: were text and
location mismatched together, it could flag the pair by color and ignore
placement entirely, and nothing would ever push the generator to bind
parts to their conditioning. The completion pair conditions only on text,
so it always mismatches the text. Both use ADAM. Scores are clamped to
[1e-7, 1 - 1e-7] before logs so no step can produce an infinite loss.

Metrics stream to newline-delimited JSON; checkpoints are written on a fixed
cadence and at the end, with tensors namespaced per network (gen_bbox/*,
disc_bbox/*, gen_kp/*, disc_kp/*, gk/*, dk/*, txt/*). GAN checkpoints embed
the frozen text encoder so a single file suffices for inference.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import TrainingError, UsageError
from .keypoints import (
    CompletionDiscriminator,
    CompletionGenerator,
    keypoints_to_grid,
    sample_switches,
)
from .nets import (
    DiscriminatorBBox,
    DiscriminatorKeypoint,
    GeneratorBBox,
    GeneratorKeypoint,
    NetConfig,
)
from .optim import Adam
from .spatial import BBox
from .tensor import Tensor
from .text import ImageEncoder, TextEncoder, joint_embedding_loss
from .toydata import Dataset, load_dataset

MODEL_KINDS = ("bbox", "keypoint", "keypoint-completion", "joint-embedding")

PROB_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    model: str
    dataset_dir: str
    checkpoint_path: str
    total_steps: int
    batch_size: int = 16
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    switch_prob: float = 0.1
    zero_keypoints: bool = False
    text_checkpoint: str | None = None
    metrics_path: str | None = None
    checkpoint_every: int = 500
    grid_size: int = 8
    hidden_channels: int = 32
    z_dim: int = 16
    t_dim: int = 64

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise UsageError(f"unknown model kind {self.model!r}, know {MODEL_KINDS}")
        if self.batch_size < 2:
            raise UsageError(f"batch size must be >= 2, got {self.batch_size}")
        if self.lr <= 0:
            raise UsageError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise UsageError(f"switch probability must be in [0,1], got {self.switch_prob}")
        if self.total_steps < 0:
            raise UsageError(f"total steps must be >= 0, got {self.total_steps}")


@dataclass
class TrainMetrics:
    step: int
    d_loss: float
    g_loss: float
    d_acc_real: float
    d_acc_fake: float
    wall_ms: float

    def row(self) -> dict:
        return {
            "step": self.step,
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
            "d_acc_real": self.d_acc_real,
            "d_acc_fake": self.d_acc_fake,
            "wall_ms": self.wall_ms,
        }


@dataclass
class GanBatch:
    """Matched (image or pose, conditioning) pairs, immutable once built."""

    t_emb: np.ndarray                     # [N, T]
    images: np.ndarray | None = None      # [N, 3, S, S]
    boxes: list[BBox] | None = None       # bbox conditioning
    grids: np.ndarray | None = None       # [N, K, M, M] keypoint conditioning
    keypoints: np.ndarray | None = None   # [N, K, 3] for the completion pair
    switches: np.ndarray | None = None    # [N, K]


def _neg_mean_log(p: Tensor) -> Tensor:
    return T.mul(T.tmean(T.log(T.clamp(p, PROB_EPS, 1.0 - PROB_EPS))), -1.0)


def _neg_mean_log_complement(p: Tensor) -> Tensor:
    flipped = T.add(T.mul(p, -1.0), 1.0)
    return T.mul(T.tmean(T.log(T.clamp(flipped, PROB_EPS, 1.0 - PROB_EPS))), -1.0)


def _mismatch_shift(n: int, rng: np.random.Generator) -> int:
    # cyclic shift by 1..n-1: a derangement, so no image keeps its own text
    return int(rng.integers(1, n))


def _check_finite_loss(value: float, step: int, who: str) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {who} loss at step {step}: {value}")


def gan_step(gen, disc, batch: GanBatch, opt_g: Adam, opt_d: Adam,
             rng: np.random.Generator, step: int = 0) -> TrainMetrics:
    """One alternating update on either image GAN or the completion pair."""
    t0 = time.monotonic()
    n = batch.t_emb.shape[0]
    t = Tensor(batch.t_emb)
    z = rng.standard_normal((n, gen.cfg.z_dim if hasattr(gen, "cfg") else gen.z_dim))
    shift = _mismatch_shift(n, rng)
    t_mis = Tensor(np.roll(batch.t_emb, shift, axis=0))

    if isinstance(gen, CompletionGenerator):
        kp_flat = Tensor(batch.keypoints.reshape(n, -1))
        fake = gen.forward(Tensor(z), t, kp_flat, batch.switches)
        d_real = disc.forward(kp_flat, t)
        d_fake_detached = disc.forward(Tensor(fake.data.copy()), t)
        d_mis = disc.forward(kp_flat, t_mis)

        def rescore_fake():
            fresh = gen.forward(Tensor(z), t, kp_flat, batch.switches)
            return disc.forward(fresh, t)
    else:
        if batch.boxes is not None:
            cond = batch.boxes
            cond_mis = [batch.boxes[(i - shift) % n] for i in range(n)]
        else:
            cond = Tensor(batch.grids)
            cond_mis = Tensor(np.roll(batch.grids, shift, axis=0))
        x = Tensor(batch.images)
        fake = gen.forward(Tensor(z), t, cond)
        d_real = disc.forward(x, t, cond)
        d_fake_detached = disc.forward(Tensor(fake.data.copy()), t, cond)
        if rng.random() < 0.5:
            d_mis = disc.forward(x, t_mis, cond)
        else:
            d_mis = disc.forward(x, t, cond_mis)

        def rescore_fake():
            fresh = gen.forward(Tensor(z), t, cond)
            return disc.forward(fresh, t, cond)

    d_loss = T.add(
        T.add(_neg_mean_log(d_real), _neg_mean_log_complement(d_fake_detached)),
        T.mul(_neg_mean_log_complement(d_mis), 0.5),
    )
    _check_finite_loss(float(d_loss.data), step, "discriminator")
    opt_d.zero_grad()
    T.backward(d_loss)
    opt_d.step()

    d_on_fake = rescore_fake()
    g_loss = _neg_mean_log(d_on_fake)
    _check_finite_loss(float(g_loss.data), step, "generator")
    opt_g.zero_grad()
    T.backward(g_loss)
    opt_g.step()

    return TrainMetrics(
        step=step,
        d_loss=float(d_loss.data),
        g_loss=float(g_loss.data),
        d_acc_real=float((d_real.data > 0.5).mean()),
        d_acc_fake=float((d_fake_detached.data < 0.5).mean()),
        wall_ms=(time.monotonic() - t0) * 1000.0,
    )


def encode_dataset_captions(dataset: Dataset, encoder: TextEncoder,
                            chunk: int = 64) -> np.ndarray:
    """Mean embedding of each record's captions, encoded in batches."""
    texts: list[str] = []
    counts: list[int] = []
    for rec in dataset.records:
        texts.extend(rec.captions)
        counts.append(len(rec.captions))
    embs = np.zeros((len(texts), encoder.t_dim))
    for start in range(0, len(texts), chunk):
        part = texts[start : start + chunk]
        embs[start : start + len(part)] = encoder.encode(part).data
    out = np.zeros((len(dataset), encoder.t_dim))
    pos = 0
    for i, c in enumerate(counts):
        out[i] = embs[pos : pos + c].mean(axis=0)
        pos += c
    return out


def _net_config(cfg: TrainConfig, manifest: dict) -> NetConfig:
    return NetConfig(
        image_size=manifest["image_size"],
        grid_size=cfg.grid_size,
        num_parts=manifest["k"],
        hidden_channels=cfg.hidden_channels,
        z_dim=cfg.z_dim,
        t_dim=cfg.t_dim,
    )


def load_text_encoder(path: str, t_dim: int, image_size: int
                      ) -> tuple[TextEncoder, ImageEncoder | None]:
    """Rebuild frozen encoders from a checkpoint holding txt/* tensors.

    GAN checkpoints embed only the text side; the image encoder comes back
    None for those.
    """
    tensors, _ = load_checkpoint(path)
    rng = np.random.default_rng(0)
    text_enc = TextEncoder(t_dim, rng)
    text_enc.load_parameters(
        {k[len("txt/text/"):]: v for k, v in tensors.items() if k.startswith("txt/text/")}
    )
    text_enc.freeze()
    img_named = {
        k[len("txt/image/"):]: v for k, v in tensors.items() if k.startswith("txt/image/")
    }
    img_enc = None
    if img_named:
        img_enc = ImageEncoder(t_dim, image_size, rng)
        img_enc.load_parameters(img_named)
        img_enc.freeze()
    return text_enc, img_enc


class _MetricsWriter:
    def __init__(self, path: str | None):
        self.path = path
        self.rows: list[dict] = []
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self._fh = open(path, "w")
        else:
            self._fh = None

    def write(self, row: dict) -> None:
        self.rows.append(row)
        if self._fh:
            self._fh.write(json.dumps(row) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()


def _namespaced(prefix: str, module) -> dict[str, Tensor]:
    return {f"{prefix}/{name}": p for name, p in module.parameters().items()}


def train(cfg: TrainConfig) -> str:
    """Run cfg.total_steps of the configured model; returns the final
    checkpoint path. Deterministic given cfg (wall times aside)."""
    dataset = load_dataset(cfg.dataset_dir)
    if cfg.model == "joint-embedding":
        return _train_embedding(cfg, dataset)
    return _train_gan(cfg, dataset)


def _train_embedding(cfg: TrainConfig, dataset: Dataset) -> str:
    rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng(cfg.seed + 1)
    manifest = dataset.manifest
    text_enc = TextEncoder(cfg.t_dim, init_rng)
    img_enc = ImageEncoder(cfg.t_dim, manifest["image_size"], init_rng)
    params = {**_namespaced("txt/text", text_enc), **_namespaced("txt/image", img_enc)}
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    images = np.stack([r.image for r in dataset.records])
    labels = np.array([r.class_id for r in dataset.records])
    captions = [list(r.captions) for r in dataset.records]

    writer = _MetricsWriter(cfg.metrics_path)
    try:
        for step in range(cfg.total_steps):
            t0 = time.monotonic()
            idx = _batch_with_two_classes(labels, cfg.batch_size, rng)
            loss = joint_embedding_loss(
                Tensor(images[idx]),
                [captions[i] for i in idx],
                labels[idx],
                img_enc,
                text_enc,
                rng,
            )
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite embedding loss at step {step}")
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            writer.write(
                {"step": step, "loss": value,
                 "wall_ms": (time.monotonic() - t0) * 1000.0}
            )
            _maybe_checkpoint(cfg, step, params, manifest)
    finally:
        writer.close()
    _save(cfg, cfg.total_steps, params, manifest)
    return cfg.checkpoint_path


def _batch_with_two_classes(labels: np.ndarray, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    while True:
        idx = rng.integers(0, len(labels), size)
        if np.unique(labels[idx]).size >= 2:
            return idx


def _train_gan(cfg: TrainConfig, dataset: Dataset) -> str:
    if cfg.text_checkpoint is None:
        raise UsageError(f"{cfg.model} training needs text_checkpoint for conditioning")
    manifest = dataset.manifest
    net_cfg = _net_config(cfg, manifest)
    text_enc, _ = load_text_encoder(
        cfg.text_checkpoint, cfg.t_dim, manifest["image_size"]
    )
    t_emb = encode_dataset_captions(dataset, text_enc)

    rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng(cfg.seed + 1)

    if cfg.model == "bbox":
        gen = GeneratorBBox(net_cfg, init_rng)
        disc = DiscriminatorBBox(net_cfg, init_rng)
        g_prefix, d_prefix = "gen_bbox", "disc_bbox"
    elif cfg.model == "keypoint":
        gen = GeneratorKeypoint(net_cfg, init_rng)
        disc = DiscriminatorKeypoint(net_cfg, init_rng)
        g_prefix, d_prefix = "gen_kp", "disc_kp"
    else:
        gen = CompletionGenerator(net_cfg.num_parts, cfg.z_dim, cfg.t_dim, init_rng)
        disc = CompletionDiscriminator(net_cfg.num_parts, cfg.t_dim, init_rng)
        g_prefix, d_prefix = "gk", "dk"

    g_params = _namespaced(g_prefix, gen)
    d_params = _namespaced(d_prefix, disc)
    opt_g = Adam(g_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_d = Adam(d_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    all_params = {**g_params, **d_params}
    all_params.update(_namespaced("txt/text", text_enc))

    images = np.stack([r.image for r in dataset.records])
    keypoint_rows = np.stack([r.keypoints.rows for r in dataset.records])
    boxes = [r.bbox for r in dataset.records]
    grids = np.stack(
        [keypoints_to_grid(r.keypoints, cfg.grid_size).data for r in dataset.records]
    )
    if cfg.zero_keypoints:
        grids = np.zeros_like(grids)

    writer = _MetricsWriter(cfg.metrics_path)
    try:
        for step in range(cfg.total_steps):
            idx = rng.integers(0, len(dataset), cfg.batch_size)
            if cfg.model == "bbox":
                batch = GanBatch(
                    t_emb=t_emb[idx], images=images[idx], boxes=[boxes[i] for i in idx]
                )
            elif cfg.model == "keypoint":
                batch = GanBatch(t_emb=t_emb[idx], images=images[idx], grids=grids[idx])
            else:
                switches = np.stack(
                    [
                        sample_switches(dataset.records[i].keypoints, cfg.switch_prob, rng)
                        for i in idx
                    ]
                )
                batch = GanBatch(
                    t_emb=t_emb[idx], keypoints=keypoint_rows[idx], switches=switches
                )
            metrics = gan_step(gen, disc, batch, opt_g, opt_d, rng, step)
            writer.write(metrics.row())
            _maybe_checkpoint(cfg, step, all_params, manifest)
    finally:
        writer.close()
    _save(cfg, cfg.total_steps, all_params, manifest)
    return cfg.checkpoint_path


def _maybe_checkpoint(cfg: TrainConfig, step: int, params: dict, manifest: dict) -> None:
    done = step + 1
    if cfg.checkpoint_every > 0 and done % cfg.checkpoint_every == 0 and done < cfg.total_steps:
        _save(cfg, done, params, manifest, suffix=f".step{done:06d}")


def _save(cfg: TrainConfig, step: int, params: dict, manifest: dict,
          suffix: str = "") -> None:
    meta = {
        "model": cfg.model,
        "step": step,
        "config": asdict(cfg),
        "manifest": manifest,
    }
    save_checkpoint(cfg.checkpoint_path + suffix, params, meta)
