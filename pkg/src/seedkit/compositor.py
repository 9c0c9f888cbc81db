"""Domain-randomised scene synthesis with paired instance masks.

Sprites (tight RGBA cut-outs of single seeds or coins) are scaled, rotated
and brightness-jittered, then pasted onto a background in placement order.
Later placements cover earlier ones, and the instance mask records only the
pixels of each object that remain visible.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import __version__
from ._io import atomic_output_dir, list_pngs, read_rgb, read_rgba, write_png
from ._validation import check_image, check_int_range, check_range
from .geometry import AlignedBox, connected_components

__all__ = [
    "Sprite", "SynthConfig", "Placement", "InstanceRecord", "LabeledImage",
    "PlacementError", "extract_sprites", "transform_sprite", "plan_scene",
    "render_scene", "prepare_background", "generate_dataset",
    "encode_color", "decode_colors", "SpriteExtractor", "SceneSynthesizer",
]

DEFAULT_ALPHA_THRESHOLD = 128


class PlacementError(ValueError):
    """A sprite could not be placed fully inside the canvas."""


@dataclass
class Sprite:
    """Tight-cropped RGBA cut-out; alpha is binary (0 or 255)."""

    pixels: np.ndarray
    class_label: str = "seed"
    source_id: str = ""

    def __post_init__(self):
        self.pixels = check_image(self.pixels, 4, "sprite pixels")
        fp = self.footprint
        if not fp.any():
            raise ValueError(f"sprite {self.source_id!r} has no footprint pixels")
        if not (fp[0].any() and fp[-1].any() and fp[:, 0].any() and fp[:, -1].any()):
            raise ValueError(f"sprite {self.source_id!r} is not tightly cropped")

    @property
    def footprint(self):
        return self.pixels[..., 3] >= DEFAULT_ALPHA_THRESHOLD

    @property
    def footprint_px(self):
        return int(np.count_nonzero(self.footprint))

    @property
    def shape(self):
        return self.pixels.shape[:2]


@dataclass
class SynthConfig:
    """Scene-generation settings.

    Sampling ranges for scale, rotation and brightness are assumptions;
    object counts, image counts and canvas size default to the values used
    for the 768 px models (use ``canvas_size=(416, 416)`` for tiny models).
    """

    canvas_size: tuple = (768, 768)
    images_per_class: int = 275
    count_range: tuple = (450, 600)
    class_count_ranges: dict = field(default_factory=lambda: {"penny": (50, 100)})
    scale_range: tuple = (0.7, 1.3)
    rotation_range: tuple = (0.0, 360.0)
    brightness_range: tuple = (0.8, 1.2)
    min_visible_fraction: float = 0.0
    max_place_retries: int = 100
    master_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        w, h = self.canvas_size
        if int(w) != w or int(h) != h or w < 1 or h < 1:
            raise ValueError(f"canvas_size must be two positive integers, got {self.canvas_size!r}")
        self.canvas_size = (int(w), int(h))
        if int(self.images_per_class) != self.images_per_class or self.images_per_class < 0:
            raise ValueError(f"images_per_class must be a non-negative integer, got {self.images_per_class!r}")
        self.images_per_class = int(self.images_per_class)
        self.count_range = check_int_range(self.count_range, "count_range")
        self.class_count_ranges = {
            str(k): check_int_range(v, f"class_count_ranges.{k}")
            for k, v in dict(self.class_count_ranges).items()}
        self.scale_range = check_range(self.scale_range, "scale_range")
        if self.scale_range[0] <= 0:
            raise ValueError("scale_range must be positive")
        self.rotation_range = check_range(self.rotation_range, "rotation_range")
        self.brightness_range = check_range(self.brightness_range, "brightness_range", lo_bound=0)
        if not 0 <= self.min_visible_fraction <= 1:
            raise ValueError(f"min_visible_fraction must lie in [0, 1], got {self.min_visible_fraction!r}")
        if int(self.max_place_retries) != self.max_place_retries or self.max_place_retries < 1:
            raise ValueError(f"max_place_retries must be a positive integer, got {self.max_place_retries!r}")
        self.max_place_retries = int(self.max_place_retries)
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2 ** 64:
            raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed!r}")
        self.master_seed = int(self.master_seed)
        return self

    def count_range_for(self, class_label):
        return self.class_count_ranges.get(class_label, self.count_range)

    def to_dict(self):
        d = asdict(self)
        d["canvas_size"] = list(self.canvas_size)
        for key in ("count_range", "scale_range", "rotation_range", "brightness_range"):
            d[key] = list(d[key])
        d["class_count_ranges"] = {k: list(v) for k, v in sorted(self.class_count_ranges.items())}
        return d

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown synth config field(s): {', '.join(sorted(unknown))}")
        return cls(**values)


@dataclass(frozen=True)
class Placement:
    sprite_index: int
    center: tuple
    scale: float
    rotation_deg: float
    brightness: float
    z_order: int


@dataclass
class InstanceRecord:
    instance_id: int
    class_label: str
    color: int
    visible_pixels: int
    footprint_pixels: int
    bbox: AlignedBox
    z_order: int = -1
    source_id: str = ""

    def to_dict(self):
        d = asdict(self)
        d["bbox"] = [int(v) for v in self.bbox]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["bbox"] = AlignedBox(*d["bbox"])
        return cls(**d)


@dataclass
class LabeledImage:
    composite: np.ndarray
    instance_mask: np.ndarray
    records: list

    def instance_ids(self):
        """Per-pixel instance index (-1 for background)."""
        return decode_colors(self.instance_mask) - 1


def encode_color(value):
    """Pack a positive integer into an (R, G, B) triple, 8 bits per channel."""
    if not 0 < value < 2 ** 24:
        raise ValueError(f"color value out of 24-bit range: {value}")
    return (value >> 16) & 255, (value >> 8) & 255, value & 255


def decode_colors(mask):
    mask = np.asarray(mask)
    return ((mask[..., 0].astype(np.int64) << 16)
            | (mask[..., 1].astype(np.int64) << 8)
            | mask[..., 2].astype(np.int64))


# sprite extraction -----------------------------------------------------------

def extract_sprites(image, alpha_threshold=DEFAULT_ALPHA_THRESHOLD, min_area=1,
                    class_label="seed", source_id=""):
    """Cut one sprite per 8-connected blob of ``alpha >= alpha_threshold``.

    Pixels outside the blob (including pieces of neighbouring blobs inside
    the crop) become fully transparent and the blob itself fully opaque.
    """
    image = check_image(image, 4)
    if not 0 <= alpha_threshold <= 255:
        raise ValueError(f"alpha_threshold must lie in [0, 255], got {alpha_threshold}")
    fg = image[..., 3] >= alpha_threshold
    sprites = []
    for k, comp in enumerate(c for c in connected_components(fg, 8) if c.size >= min_area):
        (x0, y0), (x1, y1) = comp.coords.min(axis=0), comp.coords.max(axis=0)
        crop = np.zeros((y1 - y0 + 1, x1 - x0 + 1, 4), dtype=np.uint8)
        ys, xs = comp.coords[:, 1], comp.coords[:, 0]
        crop[ys - y0, xs - x0, :3] = image[ys, xs, :3]
        crop[ys - y0, xs - x0, 3] = 255
        sid = f"{source_id}#{k}" if source_id else str(k)
        sprites.append(Sprite(crop, class_label, sid))
    return sprites


# sprite transform ------------------------------------------------------------

def _transformed_shape(shape, scale, rotation_deg):
    h, w = shape
    t = math.radians(rotation_deg)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    tw = max(1, math.ceil(scale * (w * c + h * s) - 1e-6))
    th = max(1, math.ceil(scale * (w * s + h * c) - 1e-6))
    return th, tw


def _warp(sprite, scale, rotation_deg, brightness):
    """Resample a sprite into its rotated bounding raster.

    Returns ``(rgb, footprint)`` of shape ``(th, tw, 3)`` and ``(th, tw)``.
    Rotation is counter-clockwise as displayed (y axis pointing down).
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    h, w = sprite.shape
    th, tw = _transformed_shape((h, w), scale, rotation_deg)
    t = math.radians(rotation_deg)
    # exact quarter turns must not sample a hair outside the sprite edge
    c, s = (round(v) if abs(v - round(v)) < 1e-12 else v for v in (math.cos(t), math.sin(t)))
    # maps output (row, col) back to input (row, col)
    matrix = np.array([[c, s], [-s, c]]) / scale
    c_in = np.array([(h - 1) / 2, (w - 1) / 2])
    c_out = np.array([(th - 1) / 2, (tw - 1) / 2])
    offset = c_in - matrix @ c_out

    alpha = sprite.pixels[..., 3].astype(float) / 255.0
    a_out = ndimage.affine_transform(alpha, matrix, offset, output_shape=(th, tw),
                                     order=1, mode="grid-constant", cval=0.0)
    rgb = np.empty((th, tw, 3))
    for ch in range(3):
        # premultiplied so transparent texels do not bleed into the edge
        pre = sprite.pixels[..., ch].astype(float) * alpha
        rgb[..., ch] = ndimage.affine_transform(pre, matrix, offset, output_shape=(th, tw),
                                                order=1, mode="grid-constant", cval=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rgb = np.where(a_out[..., None] > 0, rgb / a_out[..., None], 0.0)
    rgb = np.clip(np.rint(rgb * brightness), 0, 255).astype(np.uint8)
    footprint = a_out >= 0.5
    return rgb, footprint


def transform_sprite(sprite, scale, rotation_deg, brightness):
    """Scaled, rotated, brightness-adjusted copy of ``sprite``, tight-cropped."""
    rgb, fp = _warp(sprite, scale, rotation_deg, brightness)
    if not fp.any():
        raise ValueError(f"sprite {sprite.source_id!r} vanishes at scale {scale}")
    rows, cols = np.flatnonzero(fp.any(axis=1)), np.flatnonzero(fp.any(axis=0))
    sl = np.s_[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    pixels = np.zeros(fp[sl].shape + (4,), dtype=np.uint8)
    pixels[..., :3] = np.where(fp[sl][..., None], rgb[sl], 0)
    pixels[..., 3] = np.where(fp[sl], 255, 0)
    return Sprite(pixels, sprite.class_label, sprite.source_id)


# planning and rendering --------------------------------------------------------

def image_rng(master_seed, image_index, stream=0):
    """Independent generator for one image, keyed on (seed, index, stream)."""
    return np.random.default_rng([int(master_seed), int(image_index), int(stream)])


def _top_left(center, th, tw):
    return math.floor(center[0] - tw / 2), math.floor(center[1] - th / 2)


def plan_scene(config, sprites, image_index):
    """Sample object placements for one image.

    The result depends only on ``(config, sprites, image_index)``. Each
    object's position is rejection-sampled until its transformed raster
    lies on the canvas; overlap between objects is not limited.
    """
    if not sprites:
        raise ValueError("plan_scene needs at least one sprite")
    width, height = config.canvas_size
    labels = {sp.class_label for sp in sprites}
    lo, hi = (config.count_range_for(labels.pop()) if len(labels) == 1
              else config.count_range)
    rng = image_rng(config.master_seed, image_index)
    n = int(rng.integers(lo, hi + 1))
    plan = []
    for z in range(n):
        idx = int(rng.integers(len(sprites)))
        scale = float(rng.uniform(*config.scale_range))
        rot = float(rng.uniform(*config.rotation_range))
        bright = float(rng.uniform(*config.brightness_range))
        th, tw = _transformed_shape(sprites[idx].shape, scale, rot)
        for _ in range(config.max_place_retries):
            center = (float(rng.uniform(0, width)), float(rng.uniform(0, height)))
            x0, y0 = _top_left(center, th, tw)
            if x0 >= 0 and y0 >= 0 and x0 + tw <= width and y0 + th <= height:
                break
        else:
            raise PlacementError(
                f"sprite {idx} ({sprites[idx].source_id or 'unnamed'}, {tw}x{th} px after "
                f"transform) did not fit on the {width}x{height} canvas after "
                f"{config.max_place_retries} attempts")
        plan.append(Placement(idx, center, scale, rot, bright, z))
    return plan


def render_scene(plan, sprites, background, min_visible_fraction=0.0):
    """Composite ``plan`` over ``background`` and paint the instance mask.

    Instances whose visible pixel count is zero, or whose visible fraction
    falls below ``min_visible_fraction``, are dropped from the records and
    erased from the mask. Surviving instances are numbered in placement
    order; instance ``i`` is painted with color value ``i + 1``.
    """
    background = check_image(background, 3, "background")
    height, width = background.shape[:2]
    composite = background.copy()
    owner = np.zeros((height, width), dtype=np.int32)  # placement index + 1
    footprints = []
    for k, pl in enumerate(plan):
        sprite = sprites[pl.sprite_index]
        rgb, fp = _warp(sprite, pl.scale, pl.rotation_deg, pl.brightness)
        th, tw = fp.shape
        x0, y0 = _top_left(pl.center, th, tw)
        if x0 < 0 or y0 < 0 or x0 + tw > width or y0 + th > height:
            raise ValueError(
                f"placement {k} does not fit a {width}x{height} background; "
                "background size must match the planned canvas")
        region = np.s_[y0:y0 + th, x0:x0 + tw]
        composite[region][fp] = rgb[fp]
        owner[region][fp] = k + 1
        footprints.append(int(np.count_nonzero(fp)))

    visible = np.bincount(owner.ravel(), minlength=len(plan) + 1)[1:]
    keep = [k for k in range(len(plan))
            if visible[k] > 0 and visible[k] >= min_visible_fraction * footprints[k]]
    relabel = np.zeros(len(plan) + 1, dtype=np.int64)
    for new_id, k in enumerate(keep):
        relabel[k + 1] = new_id + 1
    values = relabel[owner]

    mask = np.zeros((height, width, 3), dtype=np.uint8)
    mask[..., 0] = (values >> 16) & 255
    mask[..., 1] = (values >> 8) & 255
    mask[..., 2] = values & 255

    records = []
    slices = ndimage.find_objects(values.astype(np.int32), max_label=len(keep))
    for new_id, k in enumerate(keep):
        sy, sx = slices[new_id]
        pl = plan[k]
        records.append(InstanceRecord(
            instance_id=new_id,
            class_label=sprites[pl.sprite_index].class_label,
            color=new_id + 1,
            visible_pixels=int(visible[k]),
            footprint_pixels=footprints[k],
            bbox=AlignedBox(sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start),
            z_order=pl.z_order,
            source_id=sprites[pl.sprite_index].source_id,
        ))
    return LabeledImage(composite, mask, records)


def prepare_background(image, canvas_size):
    """Scale a background to cover the canvas (bilinear) and centre-crop it."""
    image = check_image(image, 3, "background")
    width, height = canvas_size
    bh, bw = image.shape[:2]
    if bw < width or bh < height:
        raise ValueError(f"background {bw}x{bh} is smaller than the {width}x{height} canvas")
    scale = max(width / bw, height / bh)
    if scale < 1:
        nw = max(width, round(bw * scale))
        nh = max(height, round(bh * scale))
        image = np.asarray(Image.fromarray(image).resize((nw, nh), Image.BILINEAR))
    bh, bw = image.shape[:2]
    x0, y0 = (bw - width) // 2, (bh - height) // 2
    return np.ascontiguousarray(image[y0:y0 + height, x0:x0 + width])


# dataset generation -------------------------------------------------------------

def load_sprite_library(sprite_dir, alpha_threshold=DEFAULT_ALPHA_THRESHOLD):
    """Read ``sprite_dir/<class>/*.png`` into ``{class_label: [Sprite, ...]}``.

    PNGs directly inside ``sprite_dir`` are filed under the directory name.
    Each file is binarised at ``alpha_threshold`` and tight-cropped.
    """
    sprite_dir = Path(sprite_dir)
    if not sprite_dir.is_dir():
        raise FileNotFoundError(f"sprite directory not found: {sprite_dir}")
    groups = {}
    loose = list_pngs(sprite_dir)
    if loose:
        groups[sprite_dir.name] = loose
    for sub in sorted(p for p in sprite_dir.iterdir() if p.is_dir()):
        files = list_pngs(sub)
        if files:
            groups.setdefault(sub.name, []).extend(files)
    library = {}
    for label, files in sorted(groups.items()):
        sprites = []
        for path in files:
            rgba = read_rgba(path)
            fg = rgba[..., 3] >= alpha_threshold
            if not fg.any():
                raise ValueError(f"sprite file has no opaque pixels: {path}")
            rows, cols = np.flatnonzero(fg.any(axis=1)), np.flatnonzero(fg.any(axis=0))
            sl = np.s_[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
            pixels = rgba[sl].copy()
            pixels[..., 3] = np.where(fg[sl], 255, 0)
            pixels[~fg[sl], :3] = 0
            sprites.append(Sprite(pixels, label, path.relative_to(sprite_dir).as_posix()))
        library[label] = sprites
    if not library:
        raise ValueError(f"no sprite PNGs found under {sprite_dir}")
    return library


def load_backgrounds(background_dir, canvas_size):
    files = list_pngs(background_dir) if Path(background_dir).is_dir() else None
    if files is None:
        raise FileNotFoundError(f"background directory not found: {background_dir}")
    if not files:
        raise ValueError(f"no background PNGs found in {background_dir}")
    return [(p.name, prepare_background(read_rgb(p), canvas_size)) for p in files]


def _synthesize_one(config, label, sprites, backgrounds, index, out_dir, category):
    from .annotations import instances_from_mask, write_yolo

    plan = plan_scene(config, sprites, index)
    bg_name, bg = backgrounds[int(image_rng(config.master_seed, index, 1).integers(len(backgrounds)))]
    scene = render_scene(plan, sprites, bg, config.min_visible_fraction)
    stem = f"{index:05d}"
    out_dir = Path(out_dir)
    write_png(out_dir / "images" / f"{stem}.png", scene.composite)
    write_png(out_dir / "masks" / f"{stem}.png", scene.instance_mask)
    instances = instances_from_mask(scene.instance_mask, scene.records)
    width, height = config.canvas_size
    yolo = write_yolo([(category["yolo_id"], inst["bbox"]) for inst in instances], (width, height))
    (out_dir / "labels" / f"{stem}.txt").write_text(yolo, encoding="utf-8", newline="\n")
    return {
        "index": index,
        "file_name": f"images/{stem}.png",
        "mask_file": f"masks/{stem}.png",
        "label_file": f"labels/{stem}.txt",
        "class_label": label,
        "background": bg_name,
        "width": width,
        "height": height,
        "records": [r.to_dict() for r in scene.records],
        "polygons": [[p.ravel().tolist() for p in inst["polygons"]] for inst in instances],
    }


def _digest(arrays):
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def generate_dataset(config, sprite_dir, background_dir, out_dir, jobs=1, extra_files=None):
    """Write a synthetic dataset and return its manifest.

    For every sprite class, ``config.images_per_class`` images are written
    as ``images/NNNNN.png`` plus ``masks/NNNNN.png``, YOLO labels in
    ``labels/``, COCO annotations in ``annotations.json`` and a
    ``manifest.json``. ``extra_files`` maps file names to text written
    alongside. Output bytes do not depend on ``jobs``.
    """
    from joblib import Parallel, delayed

    from .annotations import CocoAnnotation, CocoCategory, CocoDocument, CocoImage, write_coco

    config.validate()
    library = load_sprite_library(sprite_dir)
    backgrounds = load_backgrounds(background_dir, config.canvas_size)
    labels = sorted(library)
    categories = [{"name": name, "coco_id": i + 1, "yolo_id": i} for i, name in enumerate(labels)]
    tasks = []
    for k, label in enumerate(labels):
        for j in range(config.images_per_class):
            tasks.append((label, k * config.images_per_class + j, categories[k]))

    with atomic_output_dir(out_dir) as tmp:
        for sub in ("images", "masks", "labels"):
            (tmp / sub).mkdir()
        work = (delayed(_synthesize_one)(config, label, library[label], backgrounds, idx, tmp, cat)
                for label, idx, cat in tasks)
        if jobs == 1 or len(tasks) <= 1:
            entries = [fn(*a, **kw) for fn, a, kw in work]
        else:
            entries = Parallel(n_jobs=jobs)(work)
        entries.sort(key=lambda e: e["index"])

        cat_by_label = {c["name"]: c for c in categories}
        images, annotations = [], []
        ann_id = 1
        for e in entries:
            images.append(CocoImage(e["index"], e["file_name"], e["width"], e["height"]))
            cat = cat_by_label[e["class_label"]]["coco_id"]
            for rec, polys in zip(e["records"], e.pop("polygons")):
                annotations.append(CocoAnnotation(
                    id=ann_id, image_id=e["index"], category_id=cat,
                    segmentation=polys, area=rec["visible_pixels"],
                    bbox=[float(v) for v in rec["bbox"]]))
                ann_id += 1
        doc = CocoDocument(images, annotations,
                           [CocoCategory(c["coco_id"], c["name"]) for c in categories])
        (tmp / "annotations.json").write_text(write_coco(doc), encoding="utf-8", newline="\n")

        manifest = {
            "tool": "seedkit",
            "version": __version__,
            "config": config.to_dict(),
            "categories": categories,
            "sprites": {label: [sp.source_id for sp in library[label]] for label in labels},
            "sprite_digest": _digest(sp.pixels for label in labels for sp in library[label]),
            "backgrounds": [name for name, _ in backgrounds],
            "images": entries,
        }
        (tmp / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        for name, text in (extra_files or {}).items():
            (tmp / name).write_text(text, encoding="utf-8", newline="\n")
    return manifest


# estimator front-ends --------------------------------------------------------------

class SpriteExtractor(TransformerMixin, BaseEstimator):
    """Turn RGBA captures into lists of sprites.

    Stateless: ``fit`` only validates parameters. ``transform`` takes a
    sequence of RGBA arrays and returns one flat list of :class:`Sprite`.
    """

    def __init__(self, alpha_threshold=DEFAULT_ALPHA_THRESHOLD, min_area=1, class_label="seed"):
        self.alpha_threshold = alpha_threshold
        self.min_area = min_area
        self.class_label = class_label

    def fit(self, X=None, y=None):
        if not 0 <= self.alpha_threshold <= 255:
            raise ValueError(f"alpha_threshold must lie in [0, 255], got {self.alpha_threshold}")
        if self.min_area < 1:
            raise ValueError(f"min_area must be >= 1, got {self.min_area}")
        self.n_features_in_ = 4
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        out = []
        for i, image in enumerate(X):
            out.extend(extract_sprites(image, self.alpha_threshold, self.min_area,
                                       self.class_label, source_id=str(i)))
        return out


class SceneSynthesizer(BaseEstimator):
    """Estimator-style wrapper around :func:`plan_scene` / :func:`render_scene`.

    Parameters mirror :class:`SynthConfig`; ``random_state`` is the master
    seed. ``fit`` takes the sprites and the background images.
    """

    def __init__(self, canvas_size=(768, 768), count_range=(450, 600), scale_range=(0.7, 1.3),
                 rotation_range=(0.0, 360.0), brightness_range=(0.8, 1.2),
                 min_visible_fraction=0.0, max_place_retries=100, random_state=0):
        self.canvas_size = canvas_size
        self.count_range = count_range
        self.scale_range = scale_range
        self.rotation_range = rotation_range
        self.brightness_range = brightness_range
        self.min_visible_fraction = min_visible_fraction
        self.max_place_retries = max_place_retries
        self.random_state = random_state

    def _config(self):
        return SynthConfig(
            canvas_size=self.canvas_size, count_range=self.count_range,
            class_count_ranges={}, scale_range=self.scale_range,
            rotation_range=self.rotation_range, brightness_range=self.brightness_range,
            min_visible_fraction=self.min_visible_fraction,
            max_place_retries=self.max_place_retries, master_seed=self.random_state)

    def fit(self, sprites, backgrounds):
        self.config_ = self._config()
        self.sprites_ = list(sprites)
        if not self.sprites_:
            raise ValueError("at least one sprite is required")
        self.backgrounds_ = [prepare_background(b, self.config_.canvas_size) for b in backgrounds]
        if not self.backgrounds_:
            raise ValueError("at least one background is required")
        return self

    def plan(self, image_index):
        check_is_fitted(self, "config_")
        return plan_scene(self.config_, self.sprites_, image_index)

    def generate(self, image_index):
        """Render image ``image_index`` as a :class:`LabeledImage`."""
        plan = self.plan(image_index)
        rng = image_rng(self.config_.master_seed, image_index, 1)
        bg = self.backgrounds_[int(rng.integers(len(self.backgrounds_)))]
        return render_scene(plan, self.sprites_, bg, self.config_.min_visible_fraction)
