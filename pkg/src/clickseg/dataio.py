"""Dataset ingestion, mask codecs and the synthetic-shapes generator.

Directory schema for ingested datasets::

    <root>/<class>/images/<name>.<ext>
    <root>/<class>/masks/<name>_<k>.png      # one binary mask per instance

Masks are single-channel images; values >= 128 count as foreground.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

SHAPE_FAMILIES = ("disk", "ellipse", "polygon", "thin-bar")
DOMAIN_SHIFTS = ("none", "intensity", "texture")


class DatasetError(ValueError):
    """Raised when a dataset fails validation; message lists every problem."""


@dataclass
class InstanceEntry:
    instance_id: str
    image_path: Path
    mask_path: Path


@dataclass
class ClassEntry:
    name: str
    instances: list[InstanceEntry] = field(default_factory=list)


@dataclass
class DatasetManifest:
    root: Path
    classes: list[ClassEntry] = field(default_factory=list)

    @property
    def n_masks(self) -> int:
        return sum(len(c.instances) for c in self.classes)

    @property
    def n_images(self) -> int:
        return len(
            {e.image_path for c in self.classes for e in c.instances}
        )

    def to_json(self) -> str:
        doc = {
            "root": str(self.root),
            "classes": [
                {
                    "name": c.name,
                    "instances": [
                        {
                            "instance_id": e.instance_id,
                            "image_path": str(e.image_path),
                            "mask_path": str(e.mask_path),
                        }
                        for e in c.instances
                    ],
                }
                for c in self.classes
            ],
            "n_masks": self.n_masks,
            "n_images": self.n_images,
        }
        return json.dumps(doc, indent=2)


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def load_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return (np.asarray(img.convert("L")) >= 128).astype(np.uint8)


def load_dataset(root: str | Path, validate: bool = True) -> DatasetManifest:
    """Scan the directory schema and (optionally) validate every mask.

    Validation checks that each image has at least one mask, that every
    mask is readable, nonempty, and dimension-matched to its image; all
    problems are collected and reported together, each with its path.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    manifest = DatasetManifest(root=root)
    problems: list[str] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        images_dir = class_dir / "images"
        masks_dir = class_dir / "masks"
        if not images_dir.is_dir():
            continue
        entry = ClassEntry(name=class_dir.name)
        for image_path in sorted(images_dir.iterdir()):
            if image_path.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            stem = image_path.stem
            mask_paths = sorted(masks_dir.glob(f"{stem}_*.png")) if masks_dir.is_dir() else []
            if not mask_paths:
                problems.append(f"missing mask for image: {image_path}")
                continue
            for mask_path in mask_paths:
                suffix = mask_path.stem[len(stem) + 1 :]
                entry.instances.append(
                    InstanceEntry(f"{class_dir.name}/{stem}_{suffix}", image_path, mask_path)
                )
        if entry.instances:
            manifest.classes.append(entry)

    if validate:
        for c in manifest.classes:
            for e in c.instances:
                try:
                    image = load_image(e.image_path)
                except OSError as exc:
                    problems.append(f"unreadable image: {e.image_path} ({exc})")
                    continue
                try:
                    mask = load_mask(e.mask_path)
                except OSError as exc:
                    problems.append(f"unreadable mask: {e.mask_path} ({exc})")
                    continue
                if mask.shape != image.shape[:2]:
                    problems.append(
                        f"dimension mismatch: {e.mask_path} is {mask.shape}, "
                        f"image {e.image_path} is {image.shape[:2]}"
                    )
                elif not mask.any():
                    problems.append(f"empty mask: {e.mask_path}")
        if problems:
            raise DatasetError("dataset validation failed:\n" + "\n".join(problems))
    return manifest


def to_memory(manifest: DatasetManifest) -> dict[str, list[tuple[str, np.ndarray, np.ndarray]]]:
    """Materialize a manifest into the in-memory layout the benchmark uses."""
    return {
        c.name: [
            (e.instance_id, load_image(e.image_path), load_mask(e.mask_path))
            for e in c.instances
        ]
        for c in manifest.classes
    }


def class_stats(manifest: DatasetManifest) -> dict[str, float]:
    """Mean mask-area fraction per class, in percent of the image area."""
    stats: dict[str, float] = {}
    for c in manifest.classes:
        fractions = []
        for e in c.instances:
            mask = load_mask(e.mask_path)
            fractions.append(100.0 * mask.sum() / mask.size)
        stats[c.name] = float(np.mean(fractions))
    return stats


# ---------------------------------------------------------------------------
# run-length codec

@dataclass(frozen=True)
class RleMask:
    """Row-major run lengths, alternating and starting with background.

    The leading background run may be zero-length, which makes decoding
    unambiguous for masks that start with foreground.
    """

    height: int
    width: int
    runs: tuple[int, ...]


def rle_encode(mask: np.ndarray) -> RleMask:
    m = np.asarray(mask).reshape(-1).astype(np.uint8)
    h, w = np.asarray(mask).shape
    changes = np.flatnonzero(np.diff(m)) + 1
    boundaries = np.concatenate(([0], changes, [m.size]))
    runs = list(np.diff(boundaries))
    if m.size and m[0] == 1:
        runs = [0] + runs
    if not runs:
        runs = [0]
    return RleMask(h, w, tuple(int(r) for r in runs))


def rle_decode(rle: RleMask) -> np.ndarray:
    total = sum(rle.runs)
    if total != rle.height * rle.width:
        raise ValueError(
            f"run lengths sum to {total}, expected {rle.height * rle.width}"
        )
    values = np.zeros(total, dtype=np.uint8)
    pos = 0
    fg = False
    for run in rle.runs:
        if fg:
            values[pos : pos + run] = 1
        pos += run
        fg = not fg
    return values.reshape(rle.height, rle.width)


# ---------------------------------------------------------------------------
# synthetic shapes

def _draw_shape(draw: ImageDraw.ImageDraw, family: str, h: int, w: int,
                rng: np.random.Generator) -> None:
    margin = max(4, min(h, w) // 8)
    cy = int(rng.integers(margin + 4, h - margin - 4))
    cx = int(rng.integers(margin + 4, w - margin - 4))
    scale = min(h, w)
    if family == "disk":
        r = int(rng.integers(scale // 8, scale // 4))
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=255)
    elif family == "ellipse":
        rx = int(rng.integers(scale // 9, scale // 4))
        ry = int(rng.integers(scale // 9, scale // 4))
        draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=255)
    elif family == "polygon":
        n = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
        radii = rng.uniform(scale / 9, scale / 4, size=n)
        points = [
            (cx + r * np.cos(a), cy + r * np.sin(a))
            for a, r in zip(angles, radii)
        ]
        draw.polygon(points, fill=255)
    elif family == "thin-bar":
        length = int(rng.integers(scale // 3, int(scale * 0.6)))
        angle = rng.uniform(0, np.pi)
        dx, dy = np.cos(angle) * length / 2, np.sin(angle) * length / 2
        draw.line([(cx - dx, cy - dy), (cx + dx, cy + dy)],
                  fill=255, width=max(2, scale // 16))
    else:
        raise ValueError(f"unknown shape family {family!r}")


def synth_instance(
    rng: np.random.Generator,
    family: str,
    shift: str,
    height: int = 48,
    width: int = 48,
) -> tuple[np.ndarray, np.ndarray]:
    """One synthetic (image, gt) pair.

    In the base domain the object is brighter than the background. The
    intensity shift inverts this relationship and the texture shift adds
    strong high-frequency texture to the object, so models pretrained on
    the base domain degrade and adaptation has something to recover.
    """
    if shift not in DOMAIN_SHIFTS:
        raise ValueError(f"unknown domain shift {shift!r}")
    mask_img = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(mask_img)
    for _ in range(10):
        _draw_shape(draw, family, height, width, rng)
        if np.asarray(mask_img).any():
            break
    gt = (np.asarray(mask_img) >= 128).astype(np.uint8)

    if shift == "intensity":
        fg_level = rng.uniform(0.10, 0.30)
        bg_level = rng.uniform(0.65, 0.85)
    else:
        fg_level = rng.uniform(0.65, 0.85)
        bg_level = rng.uniform(0.10, 0.30)

    rows = np.linspace(0, 1, height)[:, None]
    cols = np.linspace(0, 1, width)[None, :]
    gradient = 0.08 * (rng.uniform(-1, 1) * rows + rng.uniform(-1, 1) * cols)
    base = np.where(gt == 1, fg_level, bg_level) + gradient
    base = base + rng.normal(0.0, 0.02, size=(height, width))
    if shift == "texture":
        checker = ((np.add.outer(np.arange(height), np.arange(width)) % 2) * 2 - 1)
        base = base + np.where(gt == 1, 0.25 * checker, 0.0)
    tint = rng.uniform(-0.04, 0.04, size=3)
    rgb = np.clip(base[:, :, None] + tint[None, None, :], 0.0, 1.0)
    return (rgb * 255).astype(np.uint8), gt


def synth_dataset(
    seed: int,
    n_instances: int,
    shape_family: str = "disk",
    domain_shift: str = "none",
    height: int = 48,
    width: int = 48,
) -> dict[str, list[tuple[str, np.ndarray, np.ndarray]]]:
    """Deterministic in-memory dataset keyed by a single class name."""
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    if shape_family not in SHAPE_FAMILIES:
        raise ValueError(f"unknown shape family {shape_family!r}")
    rng = np.random.default_rng(seed)
    class_name = shape_family
    instances = []
    for i in range(n_instances):
        image, gt = synth_instance(rng, shape_family, domain_shift, height, width)
        instances.append((f"{class_name}/{i:04d}", image, gt))
    return {class_name: instances}


def write_dataset(dataset, out_dir: str | Path) -> None:
    """Write an in-memory dataset using the on-disk directory schema."""
    out = Path(out_dir)
    for class_name, instances in dataset.items():
        images_dir = out / class_name / "images"
        masks_dir = out / class_name / "masks"
        images_dir.mkdir(parents=True, exist_ok=True)
        masks_dir.mkdir(parents=True, exist_ok=True)
        for instance_id, image, gt in instances:
            stem = instance_id.split("/")[-1]
            Image.fromarray(image).save(images_dir / f"{stem}.png")
            Image.fromarray((gt * 255).astype(np.uint8)).save(
                masks_dir / f"{stem}_0.png"
            )
