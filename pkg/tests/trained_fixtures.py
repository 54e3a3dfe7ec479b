"""Train-once fixtures shared by the acceptance suite.

Training artifacts are cached under tests/.cache keyed by a hash of the
exact TrainConfig (and dataset recipe), so a green run can be repeated
without re-spending the training budget, while any config change
invalidates the cache.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time

import numpy as np

from gawwn.toydata import ToySceneSpec, gen_toy_scene, write_dataset
from gawwn.training import TrainConfig, train

CACHE_DIR = os.path.join(os.path.dirname(__file__), ".cache")


def _key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def dataset_pair(name: str, train_count: int, test_count: int, seed: int,
                 image_size: int = 32) -> tuple[str, str]:
    """Build (or reuse) a train/test dataset split drawn from one stream."""
    spec = ToySceneSpec(image_size=image_size)
    key = _key({"name": name, "train": train_count, "test": test_count,
                "seed": seed, "image_size": image_size})
    train_dir = os.path.join(CACHE_DIR, f"data_{name}_train_{key}")
    test_dir = os.path.join(CACHE_DIR, f"data_{name}_test_{key}")
    if not (os.path.exists(os.path.join(train_dir, "manifest.json"))
            and os.path.exists(os.path.join(test_dir, "manifest.json"))):
        rng = np.random.default_rng(seed)
        records = [gen_toy_scene(rng, spec) for _ in range(train_count + test_count)]
        write_dataset(train_dir, records[:train_count], spec)
        write_dataset(test_dir, records[train_count:], spec)
    return train_dir, test_dir


def trained_checkpoint(name: str, cfg: TrainConfig) -> str:
    """Return a checkpoint path for cfg, training it if not cached.

    Output paths are excluded from the cache key; everything that affects
    the learned weights is included.
    """
    payload = dataclasses.asdict(cfg)
    payload.pop("checkpoint_path")
    payload.pop("metrics_path")
    key = _key(payload)
    path = os.path.join(CACHE_DIR, f"{name}_{key}.ckpt")
    if not os.path.exists(path):
        os.makedirs(CACHE_DIR, exist_ok=True)
        t0 = time.monotonic()
        final = train(dataclasses.replace(
            cfg, checkpoint_path=path, metrics_path=path + ".metrics.ndjson"
        ))
        with open(path + ".train_seconds", "w") as fh:
            json.dump({"train_seconds": time.monotonic() - t0}, fh)
        assert final == path
    return path


def training_seconds(ckpt_path: str) -> float:
    """Wall time spent producing a cached checkpoint.

    Prefers the sidecar written at training time; falls back to summing the
    per-step wall_ms metrics (which misses dataset-loading setup).
    """
    sidecar = ckpt_path + ".train_seconds"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            return float(json.load(fh)["train_seconds"])
    with open(ckpt_path + ".metrics.ndjson") as fh:
        return sum(json.loads(line)["wall_ms"] for line in fh) / 1000.0
