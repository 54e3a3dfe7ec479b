"""Command line entry point.

Subcommands:

    gen-data   render a synthetic bird dataset to a directory
    train      run one of the four training loops
    gradcheck  finite-difference audit of every differentiable op
    sample     generate PPM images from a trained checkpoint
    serve      start the HTTP inference service
    report     turn a metrics NDJSON stream into CSV plus figures
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import GawwnError


def _cmd_gen_data(args: argparse.Namespace) -> int:
    from .toydata import ToySceneSpec, gen_toy_scene, write_dataset

    spec = ToySceneSpec(image_size=args.image_size)
    rng = np.random.default_rng(args.seed)
    records = [gen_toy_scene(rng, spec) for _ in range(args.count)]
    write_dataset(args.out, records, spec)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from .training import TrainConfig, train

    cfg = TrainConfig(
        model=args.model,
        dataset_dir=args.dataset,
        checkpoint_path=args.checkpoint,
        total_steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        switch_prob=args.switch_prob,
        zero_keypoints=args.zero_keypoints,
        text_checkpoint=args.text_checkpoint,
        metrics_path=args.metrics,
        checkpoint_every=args.checkpoint_every,
        grid_size=args.grid_size,
        hidden_channels=args.hidden_channels,
        z_dim=args.z_dim,
        t_dim=args.t_dim,
    )
    final_path = train(cfg)
    print(f"saved {final_path}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    from .gradcheck import run_gradcheck

    results = run_gradcheck(seed=args.seed)
    worst = 0.0
    failed = False
    for name, err, tol in results:
        status = "ok" if err < tol else "FAIL"
        failed |= err >= tol
        worst = max(worst, err)
        print(f"{status:4s} {name:32s} max_rel_error={err:.3e} tol={tol:.0e}")
    print(f"{'FAIL' if failed else 'ok'}: {len(results)} checks, worst {worst:.3e}")
    return 1 if failed else 0


def _cmd_sample(args: argparse.Namespace) -> int:
    from .server import InferenceService, RequestError

    service = InferenceService(args.checkpoint_dir)
    body: dict = {
        "captions": args.caption,
        "num_samples": args.num_samples,
        "seed": args.seed,
    }
    if args.bbox is not None:
        x0, y0, w, h = args.bbox
        body["bbox"] = {"x0": x0, "y0": y0, "w": w, "h": h}
    if args.keypoint:
        body["keypoints"] = [
            {"part": p, "x": float(x), "y": float(y)} for p, x, y in args.keypoint
        ]
    try:
        result = service.generate(body)
    except RequestError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    import base64

    os.makedirs(args.out, exist_ok=True)
    paths = []
    for i, blob in enumerate(result["images"]):
        path = os.path.join(args.out, f"sample_{i:04d}.ppm")
        with open(path, "wb") as f:
            f.write(base64.b64decode(blob))
        paths.append(path)
    print(f"wrote {len(paths)} images to {args.out} (seed {result['seed']})")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve_forever

    print(f"serving on http://127.0.0.1:{args.port}")
    serve_forever(port=args.port, checkpoint_dir=args.checkpoint_dir)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import write_report

    paths = write_report(args.metrics, args.out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _parse_keypoint(value: str) -> tuple[str, float, float]:
    try:
        part, x, y = value.split(",")
        return part, float(x), float(y)
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"keypoint must be part,x,y (got {value!r})"
        ) from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gawwn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=256)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=int, default=32)
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--model", required=True,
                   choices=("bbox", "keypoint", "keypoint-completion",
                            "joint-embedding"))
    t.add_argument("--dataset", required=True)
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=2e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--switch-prob", type=float, default=0.1)
    t.add_argument("--zero-keypoints", action="store_true",
                   help="ablation: feed an all-zero keypoint grid")
    t.add_argument("--text-checkpoint", default=None,
                   help="frozen text encoder (required for GAN models)")
    t.add_argument("--metrics", default=None, help="NDJSON metrics stream path")
    t.add_argument("--checkpoint-every", type=int, default=500)
    t.add_argument("--grid-size", type=int, default=8)
    t.add_argument("--hidden-channels", type=int, default=32)
    t.add_argument("--z-dim", type=int, default=16)
    t.add_argument("--t-dim", type=int, default=64)
    t.set_defaults(fn=_cmd_train)

    c = sub.add_parser("gradcheck", help="finite-difference audit of all ops")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=_cmd_gradcheck)

    s = sub.add_parser("sample", help="generate images from a checkpoint")
    s.add_argument("--checkpoint-dir", required=True)
    s.add_argument("--caption", action="append", required=True,
                   help="repeatable; all captions are averaged")
    s.add_argument("--bbox", type=float, nargs=4, metavar=("X0", "Y0", "W", "H"))
    s.add_argument("--keypoint", action="append", type=_parse_keypoint,
                   default=[], metavar="PART,X,Y")
    s.add_argument("--num-samples", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_sample)

    v = sub.add_parser("serve", help="start the HTTP inference service")
    v.add_argument("--port", type=int, default=8642)
    v.add_argument("--checkpoint-dir", default=None)
    v.set_defaults(fn=_cmd_serve)

    r = sub.add_parser("report", help="metrics NDJSON -> CSV + figures")
    r.add_argument("--metrics", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=_cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except GawwnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
