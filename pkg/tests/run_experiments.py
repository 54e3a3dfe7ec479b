"""Convergence experiments feeding the acceptance-suite step budgets.

Run from the repo root:  python3 tests/run_experiments.py
Trains each model through the shared fixture cache and prints the metric
each acceptance criterion will assert, including intermediate-checkpoint
sweeps so step budgets can be chosen from evidence.
"""

from __future__ import annotations

import glob
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from probes import (
    beak_region_centroid,
    bird_region_centroid_x,
    class_of_caption,
    dominant_part_color,
    satisfies_facing_rule,
)
from trained_fixtures import dataset_pair, trained_checkpoint

from gawwn.checkpoint import load_checkpoint
from gawwn.keypoints import CompletionGenerator, KeypointSet, keypoints_to_grid
from gawwn.nets import GeneratorBBox, GeneratorKeypoint, NetConfig
from gawwn.spatial import BBox
from gawwn.tensor import Tensor
from gawwn.text import (
    ImageEncoder,
    TextEncoder,
    average_caption_embeddings,
    classify_image,
    classify_text,
)
from gawwn.toydata import CLASS_NAMES, PART_NAMES, load_dataset
from gawwn.training import TrainConfig

T_DIM = 64


def stamp(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def eval_embedding(ckpt_path: str, test_dir: str) -> tuple[float, float]:
    tensors, _ = load_checkpoint(ckpt_path)
    test = load_dataset(test_dir)
    txt = TextEncoder(T_DIM, np.random.default_rng(0))
    txt.load_parameters({k[len("txt/text/"):]: v for k, v in tensors.items()
                         if k.startswith("txt/text/")})
    img = ImageEncoder(T_DIM, test.manifest["image_size"], np.random.default_rng(0))
    img.load_parameters({k[len("txt/image/"):]: v for k, v in tensors.items()
                         if k.startswith("txt/image/")})

    img_emb = [img.encode_one(r.image) for r in test.records]
    txt_emb = [average_caption_embeddings([txt.encode_one(c) for c in r.captions])
               for r in test.records]
    labels = [r.class_id for r in test.records]
    n_classes = len(CLASS_NAMES)
    pools = [np.stack([e for e, y in zip(img_emb, labels) if y == c])
             for c in range(n_classes)]
    tpools = [np.stack([te for te, y in zip(txt_emb, labels) if y == c])
              for c in range(n_classes)]
    f_v = np.mean([classify_image(e, tpools) == y for e, y in zip(img_emb, labels)])
    f_t = np.mean([classify_text(te, pools) == y for te, y in zip(txt_emb, labels)])
    return float(f_v), float(f_t)


def load_gan(ckpt_path: str, kind: str):
    tensors, meta = load_checkpoint(ckpt_path)
    manifest = meta["manifest"]
    cfg_row = meta["config"]
    net_cfg = NetConfig(
        image_size=manifest["image_size"], grid_size=cfg_row["grid_size"],
        num_parts=manifest["k"], hidden_channels=cfg_row["hidden_channels"],
        z_dim=cfg_row["z_dim"], t_dim=cfg_row["t_dim"],
    )
    rng = np.random.default_rng(0)
    txt = TextEncoder(net_cfg.t_dim, rng)
    txt.load_parameters({k[len("txt/text/"):]: v for k, v in tensors.items()
                         if k.startswith("txt/text/")})
    if kind == "keypoint":
        gen = GeneratorKeypoint(net_cfg, rng)
        gen.load_parameters({k[len("gen_kp/"):]: v for k, v in tensors.items()
                             if k.startswith("gen_kp/")})
    elif kind == "bbox":
        gen = GeneratorBBox(net_cfg, rng)
        gen.load_parameters({k[len("gen_bbox/"):]: v for k, v in tensors.items()
                             if k.startswith("gen_bbox/")})
    else:
        gen = CompletionGenerator(net_cfg.num_parts, net_cfg.z_dim,
                                  net_cfg.t_dim, rng)
        gen.load_parameters({k[len("gk/"):]: v for k, v in tensors.items()
                             if k.startswith("gk/")})
    gen.eval()
    txt.eval()
    return gen, txt, net_cfg


def eval_location_control(ckpt_path: str, test_dir: str,
                          samples_per_pair: int = 2,
                          seed: int = 9) -> tuple[float, float]:
    gen, txt, cfg = load_gan(ckpt_path, "keypoint")
    test = load_dataset(test_dir)
    rng = np.random.default_rng(seed)
    centroid_ok = []
    color_ok = []
    for rec in test.records:
        t_emb = average_caption_embeddings([txt.encode_one(c) for c in rec.captions])
        grid = keypoints_to_grid(rec.keypoints, cfg.grid_size).data
        beak_kp = rec.keypoints.rows[PART_NAMES.index("beak")]
        class_name = CLASS_NAMES[rec.class_id]
        n = samples_per_pair
        z = rng.standard_normal((n, cfg.z_dim))
        out = gen.forward(
            Tensor(z), Tensor(np.tile(t_emb, (n, 1))),
            Tensor(np.repeat(grid[None], n, axis=0)),
        ).data
        for i in range(n):
            c = beak_region_centroid(out[i], class_name)
            if c is None:
                centroid_ok.append(False)
            else:
                d = np.hypot(c[0] - beak_kp[0], c[1] - beak_kp[1])
                centroid_ok.append(bool(d <= 0.15))
            dom = dominant_part_color(out[i], class_name, rec.bbox)
            color_ok.append(dom == class_of_caption(rec.captions[0]))
    return float(np.mean(centroid_ok)), float(np.mean(color_ok))


def eval_completion(ckpt_path: str, test_dir: str, positions: int = 20,
                    samples_each: int = 5, seed: int = 17) -> tuple[float, float]:
    gen, txt, cfg = load_gan(ckpt_path, "completion")
    test = load_dataset(test_dir)
    rng = np.random.default_rng(seed)
    k = len(PART_NAMES)
    beak_i = PART_NAMES.index("beak")
    facing = []
    in_range = []
    for rec in test.records[:positions]:
        t_emb = average_caption_embeddings([txt.encode_one(c) for c in rec.captions])
        rows = np.zeros((k, 3))
        rows[beak_i] = rec.keypoints.rows[beak_i]
        observed = KeypointSet(rows)
        s = np.zeros(k)
        s[beak_i] = 1.0
        for _ in range(samples_each):
            z = rng.standard_normal(cfg.z_dim)
            done = gen.sample(z, t_emb, observed, s)
            facing.append(satisfies_facing_rule(done))
            vis = done.rows[done.rows[:, 2] == 1.0]
            in_range.append(bool((vis[:, :2] >= 0.0).all() and (vis[:, :2] <= 1.0).all()))
    return float(np.mean(facing)), float(np.mean(in_range))


def eval_bbox_interpolation(ckpt_path: str, seed: int = 3) -> list[tuple]:
    gen, txt, cfg = load_gan(ckpt_path, "bbox")
    results = []
    for class_name in CLASS_NAMES:
        t_emb = average_caption_embeddings(
            [txt.encode_one(f"a {class_name} bird facing right")]
        )
        a = BBox(0.02, 0.25, 0.45, 0.5)
        b = BBox(0.53, 0.25, 0.45, 0.5)
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((1, cfg.z_dim))
        xs = []
        for step in range(3):
            box = BBox.lerp(a, b, step / 2.0)
            out = gen.forward(Tensor(z), Tensor(t_emb[None]), [box]).data[0]
            xs.append(bird_region_centroid_x(out, class_name))
        results.append((class_name, xs, xs[0] is not None and xs[2] is not None
                        and None not in xs and xs[0] < xs[1] < xs[2]))
    return results


def main() -> None:
    stamp("building datasets")
    emb_train, emb_test = dataset_pair("emb", 500, 100, seed=101)
    gan_train, gan_test = dataset_pair("gan", 2000, 50, seed=202)
    stamp(f"datasets ready: {emb_train} | {gan_train}")

    stamp("training joint embedding (2000 steps)")
    text_cfg = TrainConfig(
        model="joint-embedding", dataset_dir=emb_train, checkpoint_path="",
        total_steps=2000, checkpoint_every=250,
    )
    t0 = time.time()
    text_ckpt = trained_checkpoint("text", text_cfg)
    stamp(f"text encoder at {text_ckpt} ({time.time()-t0:.0f}s)")
    for inter in sorted(glob.glob(text_ckpt + ".step*")) + [text_ckpt]:
        f_v, f_t = eval_embedding(inter, emb_test)
        stamp(f"  {os.path.basename(inter):46s} f_v={f_v:.3f} f_t={f_t:.3f}")

    stamp("training keypoint completion (8000 steps)")
    comp_cfg = TrainConfig(
        model="keypoint-completion", dataset_dir=gan_train, checkpoint_path="",
        total_steps=8000, text_checkpoint=text_ckpt, checkpoint_every=1000,
    )
    t0 = time.time()
    comp_ckpt = trained_checkpoint("completion", comp_cfg)
    stamp(f"completion at {comp_ckpt} ({time.time()-t0:.0f}s)")
    for inter in sorted(glob.glob(comp_ckpt + ".step*")) + [comp_ckpt]:
        facing, rng_ok = eval_completion(inter, gan_test)
        stamp(f"  {os.path.basename(inter):46s} facing={facing:.2f} in01={rng_ok:.2f}")

    stamp("training bbox GAN (3000 steps)")
    bbox_cfg = TrainConfig(
        model="bbox", dataset_dir=gan_train, checkpoint_path="",
        total_steps=3000, text_checkpoint=text_ckpt, checkpoint_every=500,
    )
    t0 = time.time()
    bbox_ckpt = trained_checkpoint("bbox", bbox_cfg)
    stamp(f"bbox GAN at {bbox_ckpt} ({time.time()-t0:.0f}s)")
    for inter in sorted(glob.glob(bbox_ckpt + ".step*"))[-3:] + [bbox_ckpt]:
        rows = eval_bbox_interpolation(inter)
        mono = sum(1 for _, _, ok in rows if ok)
        stamp(f"  {os.path.basename(inter):46s} monotone {mono}/5 "
              f"{[(c, [None if x is None else round(x,2) for x in xs]) for c, xs, _ in rows]}")

    stamp("training keypoint GAN (8000 steps)")
    kp_cfg = TrainConfig(
        model="keypoint", dataset_dir=gan_train, checkpoint_path="",
        total_steps=8000, text_checkpoint=text_ckpt, checkpoint_every=1000,
        grid_size=16,
    )
    t0 = time.time()
    kp_ckpt = trained_checkpoint("keypoint", kp_cfg)
    stamp(f"keypoint GAN at {kp_ckpt} ({time.time()-t0:.0f}s)")
    for inter in sorted(glob.glob(kp_ckpt + ".step*")) + [kp_ckpt]:
        cen, col = eval_location_control(inter, gan_test)
        stamp(f"  {os.path.basename(inter):46s} centroid={cen:.2f} color={col:.2f}")

    stamp("experiments complete")


if __name__ == "__main__":
    main()
