"""COCO instance-segmentation and YOLO (darknet TXT) annotation I/O."""

import json
import math
import numbers
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .compositor import decode_colors
from .geometry import AlignedBox, connected_components, trace_boundary

__all__ = [
    "AnnotationError", "CocoSyntaxError", "CocoReferenceError", "CocoBoundsError",
    "DuplicateIdError", "YoloFieldError", "YoloRangeError",
    "CocoImage", "CocoAnnotation", "CocoCategory", "CocoDocument",
    "instances_from_mask", "write_coco", "parse_coco", "write_yolo", "parse_yolo",
    "parse_predictions",
]

BOUNDS_TOL = 1e-6


class AnnotationError(ValueError):
    pass


class CocoSyntaxError(AnnotationError):
    """Not JSON, or a field has the wrong shape or type."""


class CocoReferenceError(AnnotationError):
    """An id refers to an image or category that does not exist."""


class CocoBoundsError(AnnotationError):
    """A bbox reaches outside its image, or an area is not positive."""


class DuplicateIdError(AnnotationError):
    pass


class YoloFieldError(AnnotationError):
    pass


class YoloRangeError(AnnotationError):
    pass


# mask -> instances -------------------------------------------------------------

def _pad_polygon(poly):
    # COCO consumers expect at least three vertices
    while len(poly) < 3:
        poly = np.vstack([poly, poly[-1:]])
    return poly


def instances_from_mask(instance_mask, records):
    """Polygons, tight bbox and pixel count for every record's color region.

    One outer-boundary polygon is produced per 8-connected piece of the
    region, so an object split by an occluder yields several polygons.
    """
    if not records:
        return []
    values = decode_colors(instance_mask)
    colors = [int(r.color) for r in records]
    slices = ndimage.find_objects(values.astype(np.int32), max_label=max(colors))
    out = []
    for rec, color in zip(records, colors):
        slc = slices[color - 1]
        if slc is None:
            raise AnnotationError(f"color {color} of instance {rec.instance_id} is absent from the mask")
        region = values[slc] == color
        sy, sx = slc
        polygons = []
        for comp in connected_components(region, 8):
            poly = trace_boundary(comp) + [sx.start, sy.start]
            polygons.append(_pad_polygon(poly))
        out.append({
            "instance_id": rec.instance_id,
            "class_label": rec.class_label,
            "polygons": polygons,
            "bbox": AlignedBox(sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start),
            "pixel_area": int(np.count_nonzero(region)),
        })
    return out


# COCO ------------------------------------------------------------------------------

@dataclass
class CocoImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass
class CocoCategory:
    id: int
    name: str


@dataclass
class CocoAnnotation:
    id: int
    image_id: int
    category_id: int
    segmentation: list
    area: float
    bbox: list
    iscrowd: int = 0


@dataclass
class CocoDocument:
    images: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    categories: list = field(default_factory=list)

    def validate(self):
        _check_unique(self.images, "image")
        _check_unique(self.annotations, "annotation")
        _check_unique(self.categories, "category")
        images = {im.id: im for im in self.images}
        cats = {c.id for c in self.categories}
        for ann in self.annotations:
            if ann.image_id not in images:
                raise CocoReferenceError(f"annotation {ann.id} refers to missing image_id {ann.image_id}")
            if ann.category_id not in cats:
                raise CocoReferenceError(
                    f"annotation {ann.id} refers to missing category_id {ann.category_id}")
            im = images[ann.image_id]
            x, y, w, h = ann.bbox
            if (x < -BOUNDS_TOL or y < -BOUNDS_TOL or w < 0 or h < 0
                    or x + w > im.width + BOUNDS_TOL or y + h > im.height + BOUNDS_TOL):
                raise CocoBoundsError(
                    f"annotation {ann.id} bbox {list(ann.bbox)} exceeds image {im.id} "
                    f"({im.width}x{im.height})")
            if not ann.area > 0:
                raise CocoBoundsError(f"annotation {ann.id} has non-positive area {ann.area}")
        return self

    def to_dict(self):
        return {
            "images": [asdict(im) for im in self.images],
            "annotations": [asdict(a) for a in self.annotations],
            "categories": [asdict(c) for c in self.categories],
        }


def _check_unique(items, what):
    seen = set()
    for it in items:
        if it.id in seen:
            raise DuplicateIdError(f"duplicate {what} id {it.id}")
        seen.add(it.id)


def write_coco(doc):
    """Serialise a validated document to JSON text with stable key order."""
    doc.validate()
    return json.dumps(doc.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise CocoSyntaxError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, numbers.Real) and not isinstance(value, bool) and math.isfinite(value)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise CocoSyntaxError(f"{where}: field {key!r} has wrong type ({type(value).__name__})")
    return value


def _parse_segmentation(seg, where):
    if not isinstance(seg, list):
        raise CocoSyntaxError(f"{where}: segmentation must be a list of polygons (RLE is unsupported)")
    polys = []
    for poly in seg:
        if (not isinstance(poly, list) or len(poly) < 2 or len(poly) % 2
                or not all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in poly)):
            raise CocoSyntaxError(f"{where}: each polygon must be a flat list of x, y pairs")
        polys.append(list(poly))
    return polys


def parse_coco(data):
    """Parse and validate COCO JSON (``str`` or ``bytes``)."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CocoSyntaxError(f"malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise CocoSyntaxError("top level must be an object")
    images, annotations, categories = [], [], []
    for i, im in enumerate(_require(raw, "images", list, "document")):
        where = f"images[{i}]"
        images.append(CocoImage(_require(im, "id", int, where), _require(im, "file_name", str, where),
                                _require(im, "width", int, where), _require(im, "height", int, where)))
    for i, c in enumerate(_require(raw, "categories", list, "document")):
        where = f"categories[{i}]"
        categories.append(CocoCategory(_require(c, "id", int, where), _require(c, "name", str, where)))
    for i, a in enumerate(_require(raw, "annotations", list, "document")):
        where = f"annotations[{i}]"
        bbox = _require(a, "bbox", list, where)
        if len(bbox) != 4 or not all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in bbox):
            raise CocoSyntaxError(f"{where}: bbox must be [x, y, w, h]")
        iscrowd = a.get("iscrowd", 0)
        if iscrowd != 0:
            raise CocoSyntaxError(f"{where}: crowd annotations are unsupported")
        annotations.append(CocoAnnotation(
            id=_require(a, "id", int, where),
            image_id=_require(a, "image_id", int, where),
            category_id=_require(a, "category_id", int, where),
            segmentation=_parse_segmentation(a.get("segmentation", []), where),
            area=_require(a, "area", float, where),
            bbox=list(bbox),
            iscrowd=0,
        ))
    return CocoDocument(images, annotations, categories).validate()


# YOLO ----------------------------------------------------------------------------

def write_yolo(instances, image_dims):
    """One ``class cx cy w h`` line per ``(class_id, box)``, 6 decimals."""
    width, height = image_dims
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_dims!r}")
    lines = []
    for class_id, box in instances:
        x, y, w, h = box
        if x < -BOUNDS_TOL or y < -BOUNDS_TOL or x + w > width + BOUNDS_TOL or y + h > height + BOUNDS_TOL:
            raise YoloRangeError(f"box {tuple(box)} lies outside a {width}x{height} image")
        vals = ((x + w / 2) / width, (y + h / 2) / height, w / width, h / height)
        vals = [min(max(v, 0.0), 1.0) for v in vals]
        lines.append(f"{int(class_id)} " + " ".join(f"{v:.6f}" for v in vals) + "\n")
    return "".join(lines)


def parse_yolo(lines, image_dims):
    """Inverse of :func:`write_yolo`: ``[(class_id, AlignedBox), ...]`` in pixels."""
    width, height = image_dims
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_dims!r}")
    if isinstance(lines, str):
        lines = lines.splitlines()
    out = []
    for n, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise YoloFieldError(f"line {n}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise YoloFieldError(f"line {n}: non-numeric field") from None
        if class_id < 0:
            raise YoloRangeError(f"line {n}: negative class id {class_id}")
        for name, v in zip(("cx", "cy", "w", "h"), (cx, cy, w, h)):
            if not 0 <= v <= 1:
                raise YoloRangeError(f"line {n}: {name}={v} outside [0, 1]")
        out.append((class_id, AlignedBox((cx - w / 2) * width, (cy - h / 2) * height,
                                         w * width, h * height)))
    return out


# predictions -----------------------------------------------------------------------

def parse_predictions(data):
    """Parse a COCO results array of ``{image_id, category_id, score, bbox,
    segmentation?}``. Returns a list of dicts with polygons as ``(N, 2)``
    arrays (empty list when no segmentation was given)."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CocoSyntaxError(f"malformed predictions JSON: {exc}") from None
    if not isinstance(raw, list):
        raise CocoSyntaxError("predictions must be a JSON array")
    out = []
    for i, p in enumerate(raw):
        where = f"predictions[{i}]"
        score = _require(p, "score", float, where)
        if not 0 <= score <= 1:
            raise CocoSyntaxError(f"{where}: score {score} outside [0, 1]")
        bbox = _require(p, "bbox", list, where)
        if len(bbox) != 4 or not all(isinstance(v, numbers.Real) for v in bbox):
            raise CocoSyntaxError(f"{where}: bbox must be [x, y, w, h]")
        seg = p.get("segmentation")
        polys = [] if seg is None else _parse_segmentation(seg, where)
        out.append({
            "image_id": _require(p, "image_id", int, where),
            "category_id": _require(p, "category_id", int, where),
            "score": float(score),
            "bbox": AlignedBox(*map(float, bbox)),
            "polygons": [np.asarray(q, dtype=float).reshape(-1, 2) for q in polys],
            "has_mask": seg is not None,
        })
    return out


def write_predictions(predictions):
    """Serialise predictions in the COCO results layout read by :func:`parse_predictions`."""
    rows = []
    for p in predictions:
        row = {"image_id": int(p["image_id"]), "category_id": int(p["category_id"]),
               "score": float(p["score"]), "bbox": [float(v) for v in p["bbox"]]}
        if p.get("polygons") is not None and p.get("has_mask", True):
            row["segmentation"] = [np.asarray(q, dtype=float).ravel().tolist() for q in p["polygons"]]
        rows.append(row)
    return json.dumps(rows, sort_keys=True) + "\n"
