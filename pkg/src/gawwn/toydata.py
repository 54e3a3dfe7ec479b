"""Procedural "toy bird" scenes with exact ground-truth annotations.

Each scene is a five-part bird (body, head, beak, tail, wing) drawn from
ellipses on a gray background. Part colors are class-determined and the five
class palettes are disjoint, so a single body pixel identifies the class.
Birds face right in canonical pose (beak ahead of head, tail behind body)
and are mirrored with probability one half, keypoints included; the beak
position therefore encodes the facing direction, which is what makes pose
completion from a beak observation a learnable task.

On-disk layout written by write_dataset:

    manifest.json     part names, class names, image size, K, record count,
                      per-record class ids, and the color tables
    images/NNNN.ppm   binary P6, values mapped [-1,1] -> [0,255]
    keypoints.csv     image_id, then K triples x,y,v
    bboxes.csv        image_id,x0,y0,w,h
    captions/NNNN.txt one caption per line

Coordinates use the convention of the spatial module: x right, y down,
normalized to [0,1].
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, InputError, UsageError
from .keypoints import KeypointSet
from .spatial import BBox

PART_NAMES = ("body", "head", "beak", "tail", "wing")

# 15-part naming for full-scale bird datasets converted into this layout.
FULL_PART_NAMES = (
    "back", "beak", "belly", "breast", "crown", "forehead", "left eye",
    "left leg", "left wing", "nape", "right eye", "right leg", "right wing",
    "tail", "throat",
)

CLASS_NAMES = ("red", "green", "blue", "yellow", "purple")

# PALETTES[class][part] = (color name, rgb in [0,1]); all 25 colors distinct
# and beak colors far apart, since beak hue is how tests localize the beak.
PALETTES: dict[str, dict[str, tuple[str, tuple[float, float, float]]]] = {
    "red": {
        "body": ("red", (0.90, 0.10, 0.10)),
        "head": ("crimson", (0.65, 0.05, 0.20)),
        "beak": ("orange", (0.95, 0.55, 0.05)),
        "tail": ("maroon", (0.45, 0.08, 0.08)),
        "wing": ("salmon", (0.95, 0.45, 0.40)),
    },
    "green": {
        "body": ("green", (0.10, 0.75, 0.15)),
        "head": ("olive", (0.50, 0.55, 0.10)),
        "beak": ("white", (0.95, 0.95, 0.95)),
        "tail": ("forest", (0.05, 0.40, 0.12)),
        "wing": ("mint", (0.55, 0.95, 0.70)),
    },
    "blue": {
        "body": ("blue", (0.10, 0.20, 0.90)),
        "head": ("navy", (0.05, 0.05, 0.50)),
        "beak": ("cyan", (0.05, 0.90, 0.95)),
        "tail": ("teal", (0.05, 0.45, 0.50)),
        "wing": ("sky", (0.50, 0.75, 0.95)),
    },
    "yellow": {
        "body": ("yellow", (0.95, 0.85, 0.10)),
        "head": ("gold", (0.80, 0.65, 0.05)),
        "beak": ("black", (0.00, 0.00, 0.00)),
        "tail": ("khaki", (0.75, 0.70, 0.40)),
        "wing": ("cream", (0.95, 0.90, 0.65)),
    },
    "purple": {
        "body": ("purple", (0.60, 0.10, 0.80)),
        "head": ("violet", (0.45, 0.15, 0.85)),
        "beak": ("pink", (0.95, 0.45, 0.75)),
        "tail": ("plum", (0.55, 0.25, 0.55)),
        "wing": ("lavender", (0.75, 0.60, 0.95)),
    },
}

SUPERSAMPLE = 4


@dataclass(frozen=True)
class ToySceneSpec:
    image_size: int = 32
    body_rx: tuple[float, float] = (0.14, 0.18)
    body_ry: tuple[float, float] = (0.10, 0.13)
    head_r: tuple[float, float] = (0.07, 0.09)
    beak_r: tuple[float, float] = (0.045, 0.055)
    tail_rx: tuple[float, float] = (0.06, 0.08)
    tail_ry: tuple[float, float] = (0.035, 0.05)
    wing_r: tuple[float, float] = (0.055, 0.075)
    body_cx: tuple[float, float] = (0.42, 0.58)
    body_cy: tuple[float, float] = (0.42, 0.58)
    background_gray: tuple[float, float] = (0.35, 0.55)

    @property
    def k(self) -> int:
        return len(PART_NAMES)


@dataclass(frozen=True)
class ScenePart:
    name: str
    cx: float
    cy: float
    rx: float
    ry: float
    rgb: tuple[float, float, float]
    visible: bool = True


@dataclass(frozen=True)
class SceneParams:
    parts: tuple[ScenePart, ...]  # in PART_NAMES order
    background: float
    facing: int  # +1 right, -1 left
    class_id: int


@dataclass(frozen=True)
class DatasetRecord:
    image: np.ndarray  # [3,S,S] in [-1,1]
    bbox: BBox
    keypoints: KeypointSet
    captions: tuple[str, ...]
    class_id: int
    scene: SceneParams | None = None


def _ellipse_hits(xs: np.ndarray, ys: np.ndarray, p: ScenePart) -> np.ndarray:
    return ((xs - p.cx) / p.rx) ** 2 + ((ys - p.cy) / p.ry) ** 2 <= 1.0


def render_scene(params: SceneParams, s: int) -> tuple[np.ndarray, BBox]:
    """Rasterize with 4x supersampling; returns image [3,S,S] in [-1,1] and
    the tight pixel-aligned bbox of everything drawn."""
    n = s * SUPERSAMPLE
    coords = (np.arange(n) + 0.5) / n
    xs, ys = np.meshgrid(coords, coords)  # [n,n], x right / y down
    canvas = np.full((n, n, 3), params.background)
    covered = np.zeros((n, n), dtype=bool)
    order = ("tail", "body", "wing", "head", "beak")
    by_name = {p.name: p for p in params.parts}
    for name in order:
        p = by_name[name]
        if not p.visible:
            continue
        hit = _ellipse_hits(xs, ys, p)
        canvas[hit] = p.rgb
        covered |= hit

    fine = canvas.reshape(s, SUPERSAMPLE, s, SUPERSAMPLE, 3)
    image = fine.mean(axis=(1, 3)).transpose(2, 0, 1) * 2.0 - 1.0

    cov = covered.reshape(s, SUPERSAMPLE, s, SUPERSAMPLE).any(axis=(1, 3))
    rows = np.where(cov.any(axis=1))[0]
    cols = np.where(cov.any(axis=0))[0]
    if rows.size == 0:
        raise UsageError("scene rendered nothing; cannot derive a bbox")
    bbox = BBox(
        cols[0] / s,
        rows[0] / s,
        (cols[-1] - cols[0] + 1) / s,
        (rows[-1] - rows[0] + 1) / s,
    )
    return image, bbox


def _keypoints_from(params: SceneParams) -> KeypointSet:
    rows = np.zeros((len(PART_NAMES), 3))
    for i, p in enumerate(params.parts):
        if p.visible:
            rows[i] = (p.cx, p.cy, 1.0)
    return KeypointSet(rows)


_CAPTION_TEMPLATES = (
    "a {body} bird with a {beak} beak facing {direction}",
    "the {body} bird has a {wing} wing and a {beak} beak",
    "a small {body} bird facing {direction} with a {tail} tail",
    "this {body} bird with a {head} head faces {direction}",
    "a {body} bird with a {tail} tail and a {beak} beak facing {direction}",
    "the bird is {body} with a {wing} wing facing {direction}",
)


def _make_captions(class_name: str, facing: int, rng: np.random.Generator) -> tuple[str, ...]:
    palette = PALETTES[class_name]
    slots = {part: palette[part][0] for part in PART_NAMES}
    slots["direction"] = "right" if facing == 1 else "left"
    picks = rng.choice(len(_CAPTION_TEMPLATES), size=4, replace=False)
    return tuple(_CAPTION_TEMPLATES[i].format(**slots) for i in picks)


def gen_toy_scene(rng: np.random.Generator, spec: ToySceneSpec = ToySceneSpec()) -> DatasetRecord:
    class_id = int(rng.integers(len(CLASS_NAMES)))
    class_name = CLASS_NAMES[class_id]
    palette = PALETTES[class_name]
    facing = 1 if rng.random() < 0.5 else -1
    f = float(facing)

    u = lambda lo_hi: float(rng.uniform(*lo_hi))
    body_rx, body_ry = u(spec.body_rx), u(spec.body_ry)
    head_r = u(spec.head_r)
    beak_r = u(spec.beak_r)
    tail_rx, tail_ry = u(spec.tail_rx), u(spec.tail_ry)
    wing_r = u(spec.wing_r)
    bx, by = u(spec.body_cx), u(spec.body_cy)

    head_cx = bx + f * body_rx * 0.85
    head_cy = by - body_ry * 0.8
    beak_cx = head_cx + f * (head_r + beak_r * 0.8)
    beak_cy = head_cy
    tail_cx = bx - f * (body_rx + tail_rx * 0.8)
    tail_cy = by - body_ry * 0.2
    wing_cx = bx - f * body_rx * 0.15
    wing_cy = by - body_ry * 0.15

    parts = (
        ScenePart("body", bx, by, body_rx, body_ry, palette["body"][1]),
        ScenePart("head", head_cx, head_cy, head_r, head_r, palette["head"][1]),
        ScenePart("beak", beak_cx, beak_cy, beak_r, beak_r, palette["beak"][1]),
        ScenePart("tail", tail_cx, tail_cy, tail_rx, tail_ry, palette["tail"][1]),
        ScenePart("wing", wing_cx, wing_cy, wing_r, wing_r, palette["wing"][1]),
    )
    params = SceneParams(
        parts=parts,
        background=u(spec.background_gray),
        facing=facing,
        class_id=class_id,
    )
    image, bbox = render_scene(params, spec.image_size)
    return DatasetRecord(
        image=image,
        bbox=bbox,
        keypoints=_keypoints_from(params),
        captions=_make_captions(class_name, facing, rng),
        class_id=class_id,
        scene=params,
    )


def occlude_parts(record: DatasetRecord, rng: np.random.Generator, q: float,
                  image_size: int | None = None) -> DatasetRecord:
    """Hide each non-body part with probability q and re-render without it."""
    if not 0.0 <= q < 1.0:
        raise InputError(f"occlusion probability must be in [0,1), got {q}")
    if q == 0.0:
        return record
    if record.scene is None:
        raise UsageError("cannot occlude a record without scene parameters")
    s = image_size or record.image.shape[1]
    parts = tuple(
        replace(p, visible=False) if p.name != "body" and rng.random() < q else p
        for p in record.scene.parts
    )
    params = replace(record.scene, parts=parts)
    image, bbox = render_scene(params, s)
    return replace(
        record,
        image=image,
        bbox=bbox,
        keypoints=_keypoints_from(params),
        scene=params,
    )


def write_dataset(directory: str, records: list[DatasetRecord],
                  spec: ToySceneSpec = ToySceneSpec()) -> None:
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    os.makedirs(os.path.join(directory, "captions"), exist_ok=True)

    manifest = {
        "parts": list(PART_NAMES),
        "classes": list(CLASS_NAMES),
        "image_size": spec.image_size,
        "k": spec.k,
        "count": len(records),
        "class_ids": [r.class_id for r in records],
        "palette": {
            cls: {part: {"name": name, "rgb": list(rgb)}
                  for part, (name, rgb) in PALETTES[cls].items()}
            for cls in CLASS_NAMES
        },
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)

    with open(os.path.join(directory, "keypoints.csv"), "w", newline="") as kf, \
         open(os.path.join(directory, "bboxes.csv"), "w", newline="") as bf:
        kw = csv.writer(kf)
        bw = csv.writer(bf)
        for idx, rec in enumerate(records):
            image_id = f"{idx:04d}"
            write_ppm(os.path.join(directory, "images", f"{image_id}.ppm"), rec.image)
            with open(os.path.join(directory, "captions", f"{image_id}.txt"), "w") as cf:
                cf.write("\n".join(rec.captions) + "\n")
            kw.writerow([image_id] + [repr(float(v)) for v in rec.keypoints.rows.ravel()])
            b = rec.bbox
            bw.writerow(
                [image_id] + [repr(float(v)) for v in (b.x0, b.y0, b.w, b.h)]
            )


@dataclass
class Dataset:
    records: list[DatasetRecord]
    manifest: dict

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> DatasetRecord:
        return self.records[i]


def load_dataset(directory: str) -> Dataset:
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.exists(manifest_path):
        raise InputError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    count = manifest["count"]
    k = manifest["k"]
    class_ids = manifest.get("class_ids", [0] * count)

    keypoint_rows = _read_csv_rows(
        os.path.join(directory, "keypoints.csv"), 1 + 3 * k
    )
    bbox_rows = _read_csv_rows(os.path.join(directory, "bboxes.csv"), 5)
    if len(keypoint_rows) != count or len(bbox_rows) != count:
        raise FormatError(
            f"{directory}: manifest says {count} records but found "
            f"{len(keypoint_rows)} keypoint rows and {len(bbox_rows)} bbox rows"
        )

    records = []
    for idx in range(count):
        image_id = f"{idx:04d}"
        kp_line = keypoint_rows[idx]
        bb_line = bbox_rows[idx]
        if kp_line[0] != image_id or bb_line[0] != image_id:
            raise FormatError(
                f"{directory}: row {idx} is for image {kp_line[0]!r}/{bb_line[0]!r}, "
                f"expected {image_id!r} (records must be ordered by image_id)"
            )
        image = read_ppm(os.path.join(directory, "images", f"{image_id}.ppm"))
        caption_path = os.path.join(directory, "captions", f"{image_id}.txt")
        try:
            with open(caption_path) as cf:
                captions = tuple(line.rstrip("\n") for line in cf if line.strip())
        except OSError as e:
            raise InputError(f"cannot read captions: {e}") from e
        records.append(
            DatasetRecord(
                image=image,
                bbox=BBox(*(float(v) for v in bb_line[1:])),
                keypoints=KeypointSet(
                    np.array([float(v) for v in kp_line[1:]]).reshape(k, 3)
                ),
                captions=captions,
                class_id=int(class_ids[idx]),
            )
        )
    return Dataset(records=records, manifest=manifest)


def _read_csv_rows(path: str, expected_fields: int) -> list[list[str]]:
    if not os.path.exists(path):
        raise InputError(f"missing file: {path}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != expected_fields:
                raise FormatError(
                    f"{path}:{lineno}: expected {expected_fields} fields, got {len(row)}"
                )
            rows.append(row)
    return rows


def ppm_bytes(image: np.ndarray) -> bytes:
    """image [3,H,W] in [-1,1] -> binary P6 bytes."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise InputError(f"expected [3,H,W] image, got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    scaled = np.clip(np.rint((image + 1.0) * 0.5 * 255.0), 0, 255).astype(np.uint8)
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + scaled.transpose(1, 2, 0).tobytes()


def write_ppm(path: str, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(ppm_bytes(image))


def read_ppm(path: str) -> np.ndarray:
    """Binary P6 -> image [3,H,W] in [-1,1]."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise InputError(f"cannot read image: {e}") from e
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header at byte {pos}")
        fields.append(blob[start:pos])
    if fields[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: unsupported max value {maxval}")
    pos += 1  # single whitespace after maxval
    raw = blob[pos : pos + 3 * w * h]
    if len(raw) != 3 * w * h:
        raise FormatError(
            f"{path}: expected {3 * w * h} pixel bytes at offset {pos}, got {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0 * 2.0 - 1.0
