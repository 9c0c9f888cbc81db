"""Coin-calibrated seed length, width, area and count.

Pixel areas are converted with a reference coin of known area: a seed's
area in mm^2 is ``area_px * coin_mm2 / coin_px``, where ``coin_px`` is the
median (or mean) pixel area of the coins in the calibration image(s).
Length and width come from the minimum-area rotated rectangle and use the
linear scale ``sqrt(mm2_per_px)``.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._io import list_pngs, read_rgb
from ._validation import check_binary_mask
from .geometry import connected_components, min_area_rect, rasterize_polygons

__all__ = [
    "CoinReference", "Calibration", "MorphometryRecord", "coin_reference",
    "calibrate", "measure_instance", "measure_image", "SeedMorphometer",
    "load_dataset_instances", "load_coco_instances", "load_coin_masks",
    "write_csv", "CSV_HEADER", "LINEAR_SCALE_NOTE",
]

CSV_HEADER = ["image", "instance_id", "class", "length_px", "width_px", "area_px",
              "length_mm", "width_mm", "area_mm2"]
LINEAR_SCALE_NOTE = ("length_mm and width_mm use mm_per_px = sqrt(mm2_per_px); "
                     "only the area conversion follows the coin formula directly")


@dataclass(frozen=True)
class CoinReference:
    """US penny. The area is the conventional 284.87 mm^2 (pi taken as 3.14)."""

    diameter_mm: float = 19.05
    area_mm2: float = 284.87


def coin_reference():
    return CoinReference()


@dataclass(frozen=True)
class Calibration:
    coin_pixel_areas: tuple
    median_coin_px: float
    coin_area_mm2: float = CoinReference.area_mm2
    stat: str = "median"

    @property
    def mm2_per_px(self):
        return self.coin_area_mm2 / self.median_coin_px

    @property
    def mm_per_px(self):
        return math.sqrt(self.mm2_per_px)

    def to_dict(self):
        d = asdict(self)
        d["coin_pixel_areas"] = list(self.coin_pixel_areas)
        d.update(mm2_per_px=self.mm2_per_px, mm_per_px=self.mm_per_px)
        return d


def calibrate(coin_masks, stat="median", reference=None):
    """Build a Calibration from one binary mask per coin.

    ``stat="median"`` (default) takes the middle pixel area, averaging the
    middle pair for an even count; ``"mean"`` averages all coins.
    """
    if stat not in ("median", "mean"):
        raise ValueError(f"stat must be 'median' or 'mean', got {stat!r}")
    reference = reference or coin_reference()
    areas = []
    for k, m in enumerate(coin_masks):
        n = int(np.count_nonzero(check_binary_mask(m, f"coin mask {k}")))
        if n == 0:
            raise ValueError(f"coin mask {k} is empty")
        areas.append(n)
    if not areas:
        raise ValueError("calibration needs at least one coin mask")
    value = float(np.median(areas)) if stat == "median" else float(np.mean(areas))
    return Calibration(tuple(areas), value, reference.area_mm2, stat)


@dataclass
class MorphometryRecord:
    instance_id: int
    class_label: str
    length_px: float
    width_px: float
    area_px: int
    length_mm: float
    width_mm: float
    area_mm2: float

    def row(self, image):
        return [image, self.instance_id, self.class_label, f"{self.length_px:.4f}",
                f"{self.width_px:.4f}", self.area_px, f"{self.length_mm:.4f}",
                f"{self.width_mm:.4f}", f"{self.area_mm2:.4f}"]


def _outline_points(mask):
    """Corner points of every boundary pixel, so a w x h block spans exactly w x h."""
    edge = mask & ~ndimage.binary_erosion(mask)
    ys, xs = np.nonzero(edge)
    pts = np.column_stack([xs, ys]).astype(float)
    return np.concatenate([pts, pts + (1, 0), pts + (0, 1), pts + (1, 1)])


def measure_instance(mask, calibration, instance_id=0, class_label=""):
    mask = check_binary_mask(mask)
    area_px = int(np.count_nonzero(mask))
    if area_px == 0:
        raise ValueError(f"instance {instance_id} has an empty mask")
    rect = min_area_rect(_outline_points(mask))
    # ratio first: the median coin then maps to the reference area exactly
    area_mm2 = (area_px / calibration.median_coin_px) * calibration.coin_area_mm2
    s = calibration.mm_per_px
    return MorphometryRecord(instance_id, class_label, float(rect.length), float(rect.width),
                             area_px, rect.length * s, rect.width * s, area_mm2)


def measure_image(instances, calibration, class_filter=None):
    """Measure ``(instance_id, class_label, mask)`` triples.

    Returns ``(records, count)``; instances whose class differs from
    ``class_filter`` (when given) are skipped.
    """
    records = [measure_instance(m, calibration, iid, label)
               for iid, label, m in instances
               if class_filter is None or label == class_filter]
    return records, len(records)


# loaders -----------------------------------------------------------------------------------

def _dataset_manifest(dataset_dir):
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json in {dataset_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_dataset_instances(dataset_dir):
    """Yield ``(image_name, [(instance_id, class_label, mask), ...])`` from a synth dataset."""
    from .compositor import decode_colors

    dataset_dir = Path(dataset_dir)
    for entry in _dataset_manifest(dataset_dir)["images"]:
        values = decode_colors(read_rgb(dataset_dir / entry["mask_file"]))
        items = [(r["instance_id"], r["class_label"], values == r["color"]) for r in entry["records"]]
        yield Path(entry["file_name"]).name, items


def load_coco_instances(coco_path):
    from .annotations import parse_coco

    doc = parse_coco(Path(coco_path).read_bytes())
    names = {c.id: c.name for c in doc.categories}
    by_image = {im.id: [] for im in doc.images}
    for ann in doc.annotations:
        by_image[ann.image_id].append(ann)
    for im in doc.images:
        items = []
        for ann in by_image[im.id]:
            polys = [np.asarray(p, float).reshape(-1, 2) for p in ann.segmentation]
            mask = rasterize_polygons(polys, (im.height, im.width)).to_mask((im.height, im.width))
            items.append((ann.id, names[ann.category_id], mask))
        yield im.file_name, items


def load_coin_masks(coins_dir, coin_class="penny"):
    """Per-coin binary masks from a directory.

    A synth dataset (with ``manifest.json``) contributes every instance of
    ``coin_class``. Otherwise each PNG is a mask: every distinct non-black
    color is one coin, and a single-color mask is split into 8-connected
    components.
    """
    from .compositor import decode_colors

    coins_dir = Path(coins_dir)
    if not coins_dir.is_dir():
        raise FileNotFoundError(f"coin directory not found: {coins_dir}")
    if (coins_dir / "manifest.json").is_file():
        masks = [m for _, items in load_dataset_instances(coins_dir)
                 for _, label, m in items if label == coin_class]
        if not masks:
            raise ValueError(f"no '{coin_class}' instances in dataset {coins_dir}")
        return masks
    masks = []
    for path in list_pngs(coins_dir):
        values = decode_colors(read_rgb(path))
        colors = np.unique(values[values > 0])
        if len(colors) == 1:
            masks.extend(c.to_mask(values.shape) for c in connected_components(values > 0))
        else:
            masks.extend(values == c for c in colors)
    if not masks:
        raise ValueError(f"no coin masks found in {coins_dir}")
    return masks


def write_csv(results, calibration=None):
    """CSV text for ``[(image, records), ...]`` followed by per-image count lines."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for image, records in results:
        for r in records:
            w.writerow(r.row(image))
    for image, records in results:
        buf.write(f"# count,{image},{len(records)}\n")
    if calibration is not None:
        buf.write(f"# mm2_per_px,{calibration.mm2_per_px!r}\n")
    buf.write(f"# note,{LINEAR_SCALE_NOTE}\n")
    return buf.getvalue()


class SeedMorphometer(TransformerMixin, BaseEstimator):
    """Fit on coin masks, then transform instance lists into MorphometryRecords."""

    def __init__(self, coin_stat="median", class_filter=None):
        self.coin_stat = coin_stat
        self.class_filter = class_filter

    def fit(self, coin_masks, y=None):
        self.calibration_ = calibrate(coin_masks, stat=self.coin_stat)
        return self

    def transform(self, X):
        """``X`` is one image's ``(instance_id, class_label, mask)`` triples, or
        plain masks."""
        check_is_fitted(self, "calibration_")
        items = [x if isinstance(x, tuple) else (k, "", x) for k, x in enumerate(X)]
        return measure_image(items, self.calibration_, self.class_filter)[0]
