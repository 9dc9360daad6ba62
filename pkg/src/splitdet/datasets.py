"""Dataset loading, class maps, letterboxing and a synthetic shapes generator.

Loaders never download anything: the marine-debris datasets (Trash-ICRA19,
WPBB) are external; this module ships their class maps plus VOC-XML and JSON
manifest readers.  For desk-scale training and tests, :func:`synth_shapes`
renders a deterministic detection dataset of colored shapes.
"""

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image

from .structures import GroundTruthBox
from .validation import check_rgb_image, check_seed

logger = logging.getLogger(__name__)

VOC2012_CLASSES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)


@dataclass(frozen=True)
class ClassMap:
    """Ordered class names with contiguous ids starting at 0."""

    names: tuple

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        if not self.names:
            raise ValueError("class map must have at least one class")

    def __len__(self):
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name {name!r}") from None

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.names):
            raise KeyError(f"class id {class_id} out of range for {len(self.names)} classes")
        return self.names[class_id]


def builtin_class_maps() -> dict:
    """Class maps for the bundled dataset conventions."""
    return {
        "trash_icra19": ClassMap(("bio", "plastic", "rov")),
        "wpbb": ClassMap(("bag", "bottle")),
        "voc2012": ClassMap(VOC2012_CLASSES),
    }


@dataclass
class AnnotatedSample:
    """An image (on disk or in memory) with its ground-truth boxes."""

    key: str
    boxes: list
    image_path: str | None = None
    image: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.image_path is None) == (self.image is None):
            raise ValueError("exactly one of image_path or image must be set")
        if self.image is not None:
            check_rgb_image(self.image)


def load_image(sample: AnnotatedSample) -> np.ndarray:
    """The sample's pixels as an (H, W, 3) uint8 array."""
    if sample.image is not None:
        return sample.image
    with Image.open(sample.image_path) as img:
        return np.asarray(img.convert("RGB"))


def take_first(samples: list, n: int) -> list:
    """The first n samples in loader order; the whole list if it is shorter."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n > len(samples):
        logger.info("requested first %d samples but only %d available", n, len(samples))
        return list(samples)
    return list(samples[:n])


# ---------------------------------------------------------------------------
# VOC XML loading
# ---------------------------------------------------------------------------

def _parse_voc_file(xml_path: Path, class_map: ClassMap) -> AnnotatedSample:
    root = ET.parse(xml_path).getroot()
    size = root.find("size")
    width = int(size.findtext("width")) if size is not None else None
    height = int(size.findtext("height")) if size is not None else None

    boxes = []
    for obj in root.iter("object"):
        name = (obj.findtext("name") or "").strip()
        bnd = obj.find("bndbox")
        if bnd is None:
            raise ValueError(f"object {name!r} has no bndbox")
        coords = tuple(float(bnd.findtext(tag)) for tag in ("xmin", "ymin", "xmax", "ymax"))
        if width is not None and not (
            0 <= coords[0] and 0 <= coords[1] and coords[2] <= width and coords[3] <= height
        ):
            raise ValueError(f"box {coords} outside image bounds {width}x{height}")
        boxes.append(GroundTruthBox(coords, class_map.id_of(name)))

    filename = (root.findtext("filename") or xml_path.stem).strip()
    image_path = str(xml_path.parent / filename)
    return AnnotatedSample(key=xml_path.stem, boxes=boxes, image_path=image_path)


def load_voc_xml(directory, class_map: ClassMap) -> list:
    """Parse all VOC-style XML annotation files in a directory.

    Files with malformed geometry or unknown class names are skipped with a
    warning.  Ordering is lexicographic by filename, so it is stable across
    runs and platforms.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"not a readable directory: {directory}")
    samples = []
    for xml_path in sorted(directory.glob("*.xml")):
        try:
            samples.append(_parse_voc_file(xml_path, class_map))
        except (ValueError, KeyError, ET.ParseError) as exc:
            logger.warning("skipping %s: %s", xml_path.name, exc)
    return samples


# ---------------------------------------------------------------------------
# JSON manifest format (schema shipped in splitdet/schemas/manifest.schema.json)
# ---------------------------------------------------------------------------

def manifest_schema() -> dict:
    with resources.files("splitdet.schemas").joinpath("manifest.schema.json").open() as fh:
        return json.load(fh)


def load_manifest(path, class_map: ClassMap) -> list:
    """Load samples from a JSON manifest; image paths resolve relative to it."""
    path = Path(path)
    with open(path) as fh:
        entries = json.load(fh)
    jsonschema.validate(entries, manifest_schema())
    samples = []
    for entry in entries:
        try:
            boxes = [
                GroundTruthBox(
                    (b["xmin"], b["ymin"], b["xmax"], b["ymax"]), class_map.id_of(b["class"])
                )
                for b in entry["boxes"]
            ]
        except (ValueError, KeyError) as exc:
            logger.warning("skipping %s: %s", entry["image"], exc)
            continue
        image_path = str((path.parent / entry["image"]).resolve())
        samples.append(AnnotatedSample(key=entry["image"], boxes=boxes, image_path=image_path))
    return samples


def save_manifest(samples: list, path, class_map: ClassMap) -> None:
    """Write samples (which must reference image files) as a JSON manifest."""
    path = Path(path)
    entries = []
    for sample in samples:
        if sample.image_path is None:
            raise ValueError(f"sample {sample.key} has no image file; materialize it first")
        rel = Path(sample.image_path)
        try:
            rel = rel.relative_to(path.parent.resolve())
        except ValueError:
            pass
        entries.append(
            {
                "image": str(rel),
                "boxes": [
                    {
                        "xmin": b.box[0],
                        "ymin": b.box[1],
                        "xmax": b.box[2],
                        "ymax": b.box[3],
                        "class": class_map.name_of(b.class_id),
                    }
                    for b in sample.boxes
                ],
            }
        )
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def materialize_samples(samples: list, directory, class_map: ClassMap) -> Path:
    """Write in-memory samples to PNG files plus a manifest; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    on_disk = []
    for sample in samples:
        image_path = directory / f"{sample.key}.png"
        Image.fromarray(load_image(sample)).save(image_path)
        on_disk.append(
            AnnotatedSample(key=sample.key, boxes=sample.boxes, image_path=str(image_path))
        )
    manifest_path = directory / "manifest.json"
    save_manifest(on_disk, manifest_path, class_map)
    return manifest_path


# ---------------------------------------------------------------------------
# Synthetic shapes dataset
# ---------------------------------------------------------------------------

_PALETTE = (
    ("red", (220, 50, 45)),
    ("green", (55, 205, 75)),
    ("blue", (60, 95, 235)),
    ("yellow", (235, 220, 70)),
)
# Interleaved shape/color combos so small class counts mix both shapes.
_SHAPE_COMBOS = tuple(
    (shape, _PALETTE[i]) for i, shape in enumerate(["box", "blob", "box", "blob"])
) + tuple((shape, _PALETTE[i]) for i, shape in enumerate(["blob", "box", "blob", "box"]))


def synth_class_map(num_classes: int) -> ClassMap:
    """Class map for the synthetic shapes dataset (shape+color combinations)."""
    if not 1 <= num_classes <= len(_SHAPE_COMBOS):
        raise ValueError(f"num_classes must be in 1..{len(_SHAPE_COMBOS)}, got {num_classes}")
    return ClassMap(
        tuple(f"{color_name}_{shape}" for shape, (color_name, _) in _SHAPE_COMBOS[:num_classes])
    )


def _draw_shape(image, shape, color, box, rng):
    x0, y0, x1, y1 = (int(v) for v in box)
    h, w = y1 - y0, x1 - x0
    patch = np.asarray(color, dtype=np.float64) + rng.normal(0.0, 6.0, size=(h, w, 3))
    if shape == "box":
        mask = np.ones((h, w), dtype=bool)
    else:
        ys, xs = np.mgrid[0:h, 0:w]
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        mask = ((xs - cx) / (w / 2.0)) ** 2 + ((ys - cy) / (h / 2.0)) ** 2 <= 1.0
    region = image[y0:y1, x0:x1].astype(np.float64)
    region[mask] = patch[mask]
    image[y0:y1, x0:x1] = np.clip(region, 0, 255).astype(np.uint8)


def synth_shapes(num_images: int, resolution: int, num_classes: int, seed: int) -> list:
    """Render a deterministic detection dataset of colored shapes.

    Each image gets 1-3 shapes (class = shape+color combination) on a noisy
    background, with exact box annotations.  Identical seeds give
    byte-identical pixels and annotations.
    """
    if resolution < 64:
        raise ValueError(f"resolution must be at least 64, got {resolution}")
    synth_class_map(num_classes)  # validates the class count
    rng = np.random.default_rng(check_seed(seed))
    samples = []
    for index in range(num_images):
        image = rng.integers(35, 115, size=(resolution, resolution, 3)).astype(np.uint8)
        boxes = []
        for _ in range(int(rng.integers(1, 4))):
            class_id = int(rng.integers(0, num_classes))
            shape, (_, color) = _SHAPE_COMBOS[class_id]
            side_w = int(rng.integers(int(0.18 * resolution), int(0.5 * resolution) + 1))
            side_h = int(rng.integers(int(0.18 * resolution), int(0.5 * resolution) + 1))
            x0 = int(rng.integers(2, resolution - side_w - 2))
            y0 = int(rng.integers(2, resolution - side_h - 2))
            box = (x0, y0, x0 + side_w, y0 + side_h)
            _draw_shape(image, shape, color, box, rng)
            boxes.append(GroundTruthBox(box, class_id))
        samples.append(AnnotatedSample(key=f"synth-{index:05d}", boxes=boxes, image=image))
    return samples


# ---------------------------------------------------------------------------
# Letterboxing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving resize-with-padding map between image coordinates."""

    scale: float
    pad_x: float
    pad_y: float
    original_width: int
    original_height: int

    def apply_box(self, box: tuple) -> tuple:
        x0, y0, x1, y1 = box
        return (
            x0 * self.scale + self.pad_x,
            y0 * self.scale + self.pad_y,
            x1 * self.scale + self.pad_x,
            y1 * self.scale + self.pad_y,
        )

    def invert_box(self, box: tuple) -> tuple:
        x0, y0, x1, y1 = box
        x0 = (x0 - self.pad_x) / self.scale
        x1 = (x1 - self.pad_x) / self.scale
        y0 = (y0 - self.pad_y) / self.scale
        y1 = (y1 - self.pad_y) / self.scale
        return (
            min(max(x0, 0.0), self.original_width),
            min(max(y0, 0.0), self.original_height),
            min(max(x1, 0.0), self.original_width),
            min(max(y1, 0.0), self.original_height),
        )


def letterbox_image(image: np.ndarray, target_side: int):
    """Resize to fit a square of target_side, padding symmetrically.

    Returns the padded uint8 image and the coordinate transform.
    """
    image = check_rgb_image(image)
    height, width = image.shape[:2]
    scale = target_side / max(width, height)
    new_w = max(1, round(width * scale))
    new_h = max(1, round(height * scale))
    if (new_w, new_h) != (width, height):
        resized = np.asarray(
            Image.fromarray(image).resize((new_w, new_h), Image.Resampling.BILINEAR)
        )
    else:
        resized = image
    pad_x = (target_side - new_w) // 2
    pad_y = (target_side - new_h) // 2
    canvas = np.zeros((target_side, target_side, 3), dtype=np.uint8)
    canvas[pad_y : pad_y + new_h, pad_x : pad_x + new_w] = resized
    transform = LetterboxTransform(
        scale=scale,
        pad_x=float(pad_x),
        pad_y=float(pad_y),
        original_width=width,
        original_height=height,
    )
    return canvas, transform


def letterbox_sample(sample: AnnotatedSample, target_side: int):
    """Letterbox a sample's image and map its boxes; returns (image, boxes, transform)."""
    image, transform = letterbox_image(load_image(sample), target_side)
    boxes = [GroundTruthBox(transform.apply_box(b.box), b.class_id) for b in sample.boxes]
    return image, boxes, transform
