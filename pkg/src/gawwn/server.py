"""HTTP inference service over trained checkpoints.

Endpoints (JSON bodies, snake_case fields):

    GET  /api/manifest            -> {parts, classes, image_size, models_loaded}
    POST /api/generate            -> {images: [base64 PPM, ...], seed, steps}
    POST /api/complete-keypoints  -> {keypoint_sets: [...], seed}

Generation requests carry captions plus exactly one location mode: a bbox
{x0,y0,w,h} or a keypoints list [{part,x,y}]; an optional interpolate block
{from_location, to_location, steps} sweeps the location while reusing the
same noise row per sample. Validation failures return 400 with {error,
field}; requesting a mode whose model is not loaded returns 409.

Checkpoints are discovered as <kind>.ckpt (bbox, keypoint, completion, text)
in the directory given by --checkpoint-dir or $GAWWN_CHECKPOINT_DIR. Loaded
weights are immutable; reload() swaps the whole bundle atomically, so
concurrent requests see either the old set or the new one.
"""

from __future__ import annotations

import base64
import json
import os
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .checkpoint import load_checkpoint
from .errors import GawwnError, GeometryError, InputError
from .keypoints import CompletionGenerator, KeypointSet, keypoints_to_grid
from .nets import GeneratorBBox, GeneratorKeypoint, NetConfig
from .spatial import BBox
from .tensor import Tensor
from .text import TextEncoder, average_caption_embeddings
from .toydata import CLASS_NAMES, PART_NAMES, ppm_bytes

DEFAULT_PORT = 8642
CHECKPOINT_DIR_ENV = "GAWWN_CHECKPOINT_DIR"

DEFAULT_MANIFEST = {
    "parts": list(PART_NAMES),
    "classes": list(CLASS_NAMES),
    "image_size": 32,
    "k": len(PART_NAMES),
}


class RequestError(Exception):
    def __init__(self, message: str, field: str | None = None, status: int = 400):
        super().__init__(message)
        self.field = field
        self.status = status


def _strip_prefix(tensors: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


@dataclass
class _LoadedModel:
    generator: object
    text_encoder: TextEncoder
    net_config: NetConfig


class ModelBundle:
    """Immutable snapshot of every checkpoint found in a directory."""

    def __init__(self, checkpoint_dir: str | None):
        self.models: dict[str, _LoadedModel] = {}
        self.manifest = dict(DEFAULT_MANIFEST)
        if not checkpoint_dir:
            return
        for kind in ("bbox", "keypoint", "completion"):
            path = os.path.join(checkpoint_dir, f"{kind}.ckpt")
            if os.path.exists(path):
                self.models[kind] = self._load(kind, path)

    def _load(self, kind: str, path: str) -> _LoadedModel:
        tensors, meta = load_checkpoint(path)
        manifest = meta.get("manifest") or DEFAULT_MANIFEST
        cfg_row = meta.get("config", {})
        net_cfg = NetConfig(
            image_size=manifest["image_size"],
            grid_size=cfg_row.get("grid_size", 8),
            num_parts=manifest["k"],
            hidden_channels=cfg_row.get("hidden_channels", 32),
            z_dim=cfg_row.get("z_dim", 16),
            t_dim=cfg_row.get("t_dim", 64),
        )
        self.manifest = {
            "parts": manifest["parts"],
            "classes": manifest["classes"],
            "image_size": manifest["image_size"],
            "k": manifest["k"],
        }
        rng = np.random.default_rng(0)
        text_enc = TextEncoder(net_cfg.t_dim, rng)
        text_enc.load_parameters(_strip_prefix(tensors, "txt/text/"))
        text_enc.freeze()
        text_enc.eval()
        if kind == "bbox":
            gen = GeneratorBBox(net_cfg, rng)
            gen.load_parameters(_strip_prefix(tensors, "gen_bbox/"))
        elif kind == "keypoint":
            gen = GeneratorKeypoint(net_cfg, rng)
            gen.load_parameters(_strip_prefix(tensors, "gen_kp/"))
        else:
            gen = CompletionGenerator(
                net_cfg.num_parts, net_cfg.z_dim, net_cfg.t_dim, rng
            )
            gen.load_parameters(_strip_prefix(tensors, "gk/"))
        gen.freeze()
        gen.eval()
        return _LoadedModel(generator=gen, text_encoder=text_enc, net_config=net_cfg)


class InferenceService:
    """Request handling, independent of HTTP plumbing (and directly testable)."""

    def __init__(self, checkpoint_dir: str | None = None):
        self.bundle = ModelBundle(checkpoint_dir)

    def reload(self, checkpoint_dir: str | None) -> None:
        # build the new bundle fully, then swap the reference in one assignment
        self.bundle = ModelBundle(checkpoint_dir)

    def manifest(self) -> dict:
        bundle = self.bundle
        return {
            "parts": bundle.manifest["parts"],
            "classes": bundle.manifest["classes"],
            "image_size": bundle.manifest["image_size"],
            "models_loaded": sorted(bundle.models.keys()),
        }

    # -- request parsing -------------------------------------------------

    def _captions(self, body: dict) -> list[str]:
        caps = body.get("captions")
        if caps is None and "caption" in body:
            caps = [body["caption"]]
        if not isinstance(caps, list) or not caps or not all(
            isinstance(c, str) and c for c in caps
        ):
            raise RequestError("captions must be a non-empty list of strings", "captions")
        return caps

    def _num_samples(self, body: dict) -> int:
        n = body.get("num_samples", 1)
        if not isinstance(n, int) or isinstance(n, bool) or not 1 <= n <= 64:
            raise RequestError("num_samples must be an integer in [1,64]", "num_samples")
        return n

    def _seed(self, body: dict) -> int:
        seed = body.get("seed")
        if seed is None:
            return int.from_bytes(os.urandom(4), "little")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise RequestError("seed must be a non-negative integer", "seed")
        return seed

    def _parse_bbox(self, raw, field: str) -> BBox:
        if not isinstance(raw, dict):
            raise RequestError("bbox must be an object {x0,y0,w,h}", field)
        try:
            return BBox(
                float(raw["x0"]), float(raw["y0"]), float(raw["w"]), float(raw["h"])
            )
        except KeyError as e:
            raise RequestError(f"bbox is missing {e.args[0]!r}", field) from e
        except (TypeError, ValueError) as e:
            raise RequestError(f"bbox fields must be numbers: {e}", field) from e
        except GeometryError as e:
            raise RequestError(str(e), field) from e

    def _parse_keypoints(self, raw, field: str) -> KeypointSet:
        parts = list(self.bundle.manifest["parts"])
        if not isinstance(raw, list) or not raw:
            raise RequestError("keypoints must be a non-empty list of {part,x,y}", field)
        rows = np.zeros((len(parts), 3))
        for item in raw:
            if not isinstance(item, dict) or "part" not in item:
                raise RequestError("each keypoint needs a part name", field)
            name = item["part"]
            if name not in parts:
                raise RequestError(f"unknown part {name!r}", field)
            try:
                x, y = float(item["x"]), float(item["y"])
            except (KeyError, TypeError, ValueError) as e:
                raise RequestError(f"keypoint {name!r} needs numeric x and y", field) from e
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise RequestError(f"keypoint {name!r} must lie in [0,1]", field)
            rows[parts.index(name)] = (x, y, 1.0)
        try:
            return KeypointSet(rows)
        except InputError as e:
            raise RequestError(str(e), field) from e

    def _parse_location(self, body: dict, field_prefix: str = "") -> tuple[str, object]:
        has_bbox = "bbox" in body and body["bbox"] is not None
        has_kp = "keypoints" in body and body["keypoints"] is not None
        if has_bbox and has_kp:
            raise RequestError(
                "request carries both bbox and keypoints; exactly one location "
                "mode is allowed",
                field_prefix + "bbox",
            )
        if not has_bbox and not has_kp:
            raise RequestError(
                "request needs a location: bbox or keypoints", field_prefix + "bbox"
            )
        if has_bbox:
            return "bbox", self._parse_bbox(body["bbox"], field_prefix + "bbox")
        return "keypoint", self._parse_keypoints(
            body["keypoints"], field_prefix + "keypoints"
        )

    # -- endpoints --------------------------------------------------------

    def generate(self, body: dict) -> dict:
        bundle = self.bundle
        captions = self._captions(body)
        num_samples = self._num_samples(body)
        seed = self._seed(body)

        interp = body.get("interpolate")
        if interp is not None:
            if not isinstance(interp, dict):
                raise RequestError("interpolate must be an object", "interpolate")
            try:
                steps = int(interp["steps"])
            except (KeyError, TypeError, ValueError) as e:
                raise RequestError("interpolate.steps must be an integer", "interpolate.steps") from e
            if steps < 2:
                raise RequestError("interpolate.steps must be >= 2", "interpolate.steps")
            from_raw = interp.get("from_location")
            to_raw = interp.get("to_location")
            if not isinstance(from_raw, dict) or not isinstance(to_raw, dict):
                raise RequestError(
                    "interpolate needs from_location and to_location objects",
                    "interpolate.from_location",
                )
            mode_a, loc_a = self._parse_location(from_raw, "interpolate.from_location.")
            mode_b, loc_b = self._parse_location(to_raw, "interpolate.to_location.")
            if mode_a != mode_b:
                raise RequestError(
                    "interpolation endpoints must share one location mode",
                    "interpolate.to_location",
                )
            locations = [
                _lerp_location(mode_a, loc_a, loc_b, i / (steps - 1))
                for i in range(steps)
            ]
            mode = mode_a
        else:
            mode, loc = self._parse_location(body)
            locations = [loc]
            steps = 1

        model = bundle.models.get(mode)
        if model is None:
            raise RequestError(f"no {mode} model loaded", status=409)

        t_emb = average_caption_embeddings(
            [model.text_encoder.encode_one(c) for c in captions]
        )
        cfg = model.net_config
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((num_samples, cfg.z_dim))  # fixed per sample row
        t = Tensor(np.tile(t_emb, (num_samples, 1)))

        images: list[str] = []
        for loc in locations:
            if mode == "bbox":
                out = model.generator.forward(Tensor(z), t, [loc] * num_samples)
            else:
                grid = keypoints_to_grid(loc, cfg.grid_size).data
                out = model.generator.forward(
                    Tensor(z), t, Tensor(np.repeat(grid[None], num_samples, axis=0))
                )
            images.extend(
                base64.b64encode(ppm_bytes(out.data[i])).decode("ascii")
                for i in range(num_samples)
            )
        return {"images": images, "seed": seed, "steps": steps}

    def complete_keypoints(self, body: dict) -> dict:
        bundle = self.bundle
        captions = self._captions(body)
        num_samples = self._num_samples(body)
        seed = self._seed(body)
        model = bundle.models.get("completion")
        if model is None:
            raise RequestError("no completion model loaded", status=409)

        parts = list(bundle.manifest["parts"])
        observed_raw = body.get("observed", [])
        if not isinstance(observed_raw, list):
            raise RequestError("observed must be a list of {part,x,y}", "observed")
        rows = np.zeros((len(parts), 3))
        switches = np.zeros(len(parts))
        if observed_raw:
            kp = self._parse_keypoints(observed_raw, "observed")
            rows = kp.rows
            switches = (rows[:, 2] == 1.0).astype(np.float64)
        kp_set = KeypointSet(rows)

        t_emb = average_caption_embeddings(
            [model.text_encoder.encode_one(c) for c in captions]
        )
        rng = np.random.default_rng(seed)
        gen: CompletionGenerator = model.generator
        sets = []
        for _ in range(num_samples):
            z = rng.standard_normal(gen.z_dim)
            completed = gen.sample(z, t_emb, kp_set, switches)
            sets.append(
                [
                    {"part": parts[i], "x": float(r[0]), "y": float(r[1]),
                     "v": int(r[2])}
                    for i, r in enumerate(completed.rows)
                ]
            )
        return {"keypoint_sets": sets, "seed": seed}


def _lerp_location(mode: str, a, b, alpha: float):
    if mode == "bbox":
        return BBox.lerp(a, b, alpha)
    rows = np.array(a.rows)
    rows_b = np.array(b.rows)
    both = (a.rows[:, 2] == 1.0) & (rows_b[:, 2] == 1.0)
    out = np.zeros_like(rows)
    out[both, 0:2] = (1 - alpha) * rows[both, 0:2] + alpha * rows_b[both, 0:2]
    out[both, 2] = 1.0
    # parts visible at only one endpoint snap at the halfway point
    only_a = (a.rows[:, 2] == 1.0) & ~both
    only_b = (rows_b[:, 2] == 1.0) & ~both
    if alpha < 0.5:
        out[only_a] = rows[only_a]
    else:
        out[only_b] = rows_b[only_b]
    return KeypointSet(out)


class _Handler(BaseHTTPRequestHandler):
    service: InferenceService  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        if self.path == "/api/manifest":
            self._send(200, self.service.manifest())
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(body, dict):
                raise RequestError("request body must be a JSON object")
        except json.JSONDecodeError as e:
            self._send(400, {"error": f"malformed JSON: {e}", "field": None})
            return
        except RequestError as e:
            self._send(e.status, {"error": str(e), "field": e.field})
            return

        try:
            if self.path == "/api/generate":
                self._send(200, self.service.generate(body))
            elif self.path == "/api/complete-keypoints":
                self._send(200, self.service.complete_keypoints(body))
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except RequestError as e:
            self._send(e.status, {"error": str(e), "field": e.field})
        except GawwnError as e:
            self._send(400, {"error": str(e), "field": None})


def make_server(port: int = DEFAULT_PORT,
                checkpoint_dir: str | None = None) -> ThreadingHTTPServer:
    service = InferenceService(
        checkpoint_dir if checkpoint_dir is not None
        else os.environ.get(CHECKPOINT_DIR_ENV)
    )
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve_forever(port: int = DEFAULT_PORT, checkpoint_dir: str | None = None) -> None:
    server = make_server(port, checkpoint_dir)
    try:
        server.serve_forever()
    finally:
        server.server_close()
