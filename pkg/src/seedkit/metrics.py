"""Detector-agnostic Recall / AP evaluation.

Recall at 50% is computed on box IoU; AP uses mask IoU by default. The PR
curve is built COCO-style: greedy score-ordered matching, a monotone
precision envelope, and 101 recall sample points.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .annotations import CocoDocument, parse_coco, parse_predictions
from .geometry import AlignedBox, MaskPatch, patch_iou, rasterize_polygons

__all__ = [
    "Detection", "GroundTruthInstance", "MatchResult", "ClassReport", "EvalReport",
    "default_thresholds", "match_greedy", "recall_at", "average_precision",
    "ap_over_range", "evaluate_dataset", "DetectionEvaluator",
]

RECALL_LEVELS = np.linspace(0.0, 1.0, 101)
# cumulative recall like 7/10 must count as reaching the 0.70 sample point
_RECALL_EPS = 1e-12


def default_thresholds(ap_max=0.95, start=0.5, step=0.05):
    """IoU ladder ``start, start+step, ..., ap_max`` (inclusive), rounded to 1e-10."""
    n = int(np.floor((ap_max - start) / step + 1e-9)) + 1
    if n < 1:
        raise ValueError(f"empty threshold range: start={start}, ap_max={ap_max}")
    return [round(start + k * step, 10) for k in range(n)]


def _as_patch(mask):
    if mask is None or isinstance(mask, MaskPatch):
        return mask
    return MaskPatch.from_mask(mask)


@dataclass
class Detection:
    image_id: int
    class_id: int
    score: float
    bbox: AlignedBox
    mask: object = None

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        self.bbox = AlignedBox(*self.bbox)
        self.mask = _as_patch(self.mask)


@dataclass
class GroundTruthInstance:
    image_id: int
    class_id: int
    bbox: AlignedBox
    mask: object = None

    def __post_init__(self):
        self.bbox = AlignedBox(*self.bbox)
        self.mask = _as_patch(self.mask)


@dataclass
class MatchResult:
    """``det_to_gt[i]`` is the matched ground-truth index of detection ``i``
    (positions in the input lists) or -1 for a false positive."""

    det_to_gt: list
    gt_to_det: list

    @property
    def tp(self):
        return sum(1 for g in self.det_to_gt if g >= 0)

    @property
    def fp(self):
        return sum(1 for g in self.det_to_gt if g < 0)

    @property
    def fn(self):
        return sum(1 for d in self.gt_to_det if d < 0)


def _box_iou_matrix(dboxes, gboxes):
    d = np.asarray(dboxes, dtype=float).reshape(-1, 4)
    g = np.asarray(gboxes, dtype=float).reshape(-1, 4)
    ix = np.minimum(d[:, None, 0] + d[:, None, 2], g[None, :, 0] + g[None, :, 2]) \
        - np.maximum(d[:, None, 0], g[None, :, 0])
    iy = np.minimum(d[:, None, 1] + d[:, None, 3], g[None, :, 1] + g[None, :, 3]) \
        - np.maximum(d[:, None, 1], g[None, :, 1])
    area_d = (d[:, 2] * d[:, 3])[:, None]
    area_g = (g[:, 2] * g[:, 3])[None, :]
    inter = np.minimum(np.clip(ix, 0, None) * np.clip(iy, 0, None), np.minimum(area_d, area_g))
    union = area_d + area_g - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def _patch_extent(p):
    h, w = p.bits.shape
    return (p.x, p.y, w, h)


def _mask_iou_matrix(dets, gts):
    out = np.zeros((len(dets), len(gts)))
    if not len(dets) or not len(gts):
        return out
    for who, items in (("detection", dets), ("ground truth", gts)):
        for it in items:
            if it.mask is None:
                raise ValueError(f"mask IoU requested but a {who} on image {it.image_id} has no mask")
    # only pairs whose mask extents overlap can have non-zero IoU
    overlap = _box_iou_matrix([_patch_extent(d.mask) for d in dets],
                              [_patch_extent(g.mask) for g in gts]) > 0
    for i, j in zip(*np.nonzero(overlap)):
        out[i, j] = patch_iou(dets[i].mask, gts[j].mask)
    return out


def _iou_tables(detections, ground_truths, iou_kind):
    """IoU matrices per (image, class) group, computed once per evaluation."""
    if iou_kind not in ("bbox", "mask"):
        raise ValueError(f"iou_kind must be 'bbox' or 'mask', got {iou_kind!r}")
    groups = defaultdict(lambda: ([], []))
    for i, d in enumerate(detections):
        groups[(d.image_id, d.class_id)][0].append(i)
    for j, g in enumerate(ground_truths):
        groups[(g.image_id, g.class_id)][1].append(j)
    tables = []
    for key in sorted(groups):
        di, gi = groups[key]
        if iou_kind == "bbox":
            iou = _box_iou_matrix([detections[i].bbox for i in di], [ground_truths[j].bbox for j in gi])
        else:
            iou = _mask_iou_matrix([detections[i] for i in di], [ground_truths[j] for j in gi])
        tables.append((di, gi, iou))
    return tables


def _score_order(detections, indices):
    scores = np.array([detections[i].score for i in indices], dtype=float)
    return [indices[k] for k in np.argsort(-scores, kind="stable")]


def _match_tables(tables, detections, n_gt, threshold):
    det_to_gt = [-1] * len(detections)
    gt_to_det = [-1] * n_gt
    for di, gi, iou in tables:
        if not gi or not di:
            continue
        row_of = {d: r for r, d in enumerate(di)}
        taken = np.zeros(len(gi), dtype=bool)
        for d in _score_order(detections, di):
            row = np.where(taken, -1.0, iou[row_of[d]])
            best = int(np.argmax(row))  # first maximum = lowest GT index
            if row[best] >= threshold:
                taken[best] = True
                det_to_gt[d] = gi[best]
                gt_to_det[gi[best]] = d
    return MatchResult(det_to_gt, gt_to_det)


def match_greedy(detections, ground_truths, iou_kind="bbox", threshold=0.5):
    """Greedy one-to-one matching within each (image, class) group.

    Detections are taken in descending score (ties keep input order); each
    claims the unmatched ground truth with the highest IoU at or above
    ``threshold``, preferring the lowest index on ties.
    """
    tables = _iou_tables(detections, ground_truths, iou_kind)
    return _match_tables(tables, detections, len(ground_truths), threshold)


def recall_at(detections, ground_truths, threshold=0.5, score_threshold=None):
    """Pooled box-IoU recall; ``None`` when there is no ground truth."""
    if not ground_truths:
        return None
    if score_threshold is not None:
        detections = [d for d in detections if d.score >= score_threshold]
    return match_greedy(detections, ground_truths, "bbox", threshold).tp / len(ground_truths)


def _ap_from_match(detections, match, n_gt):
    if n_gt == 0:
        return None
    if not detections:
        return 0.0
    order = _score_order(detections, list(range(len(detections))))
    tp = np.array([match.det_to_gt[i] >= 0 for i in order], dtype=float)
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(order) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_LEVELS - _RECALL_EPS, side="left")
    sampled = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(sampled.mean())


def average_precision(detections, ground_truths, iou_kind="mask", threshold=0.5):
    """101-point interpolated AP; ``None`` when there is no ground truth."""
    match = match_greedy(detections, ground_truths, iou_kind, threshold)
    return _ap_from_match(detections, match, len(ground_truths))


def ap_over_range(detections, ground_truths, thresholds=None, iou_kind="mask"):
    """Mean AP over an IoU ladder (default 0.50:0.05:0.95)."""
    thresholds = default_thresholds() if thresholds is None else list(thresholds)
    if not thresholds:
        raise ValueError("at least one IoU threshold is required")
    if not ground_truths:
        return None
    tables = _iou_tables(detections, ground_truths, iou_kind)
    aps = [_ap_from_match(detections, _match_tables(tables, detections, len(ground_truths), t),
                          len(ground_truths)) for t in thresholds]
    return float(np.mean(aps))


# dataset evaluation --------------------------------------------------------------

@dataclass
class ClassReport:
    name: str
    n_gt: int
    n_det: int
    recall50: object
    ap50: object
    ap_range_mean: object
    tp: int
    fp: int
    fn: int
    ap_by_threshold: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    classes: list
    metadata: dict

    def to_dict(self):
        return {
            "metadata": self.metadata,
            "classes": [vars(c) | {"ap_by_threshold": {f"{t:.2f}": v for t, v in c.ap_by_threshold.items()}}
                        for c in self.classes],
        }

    def to_table(self):
        """Plain-text table with one row per class."""
        ap_max = self.metadata["thresholds"][-1]
        headers = ["Class", "Recall50", "AP50", f"AP@[.5:{ap_max:.2f}]".replace("0.", "."),
                   "GT", "Det", "TP", "FP", "FN"]
        rows = []
        for c in self.classes:
            rows.append([c.name] + [("n/a" if v is None else f"{v:.4f}")
                                    for v in (c.recall50, c.ap50, c.ap_range_mean)]
                        + [str(v) for v in (c.n_gt, c.n_det, c.tp, c.fp, c.fn)])
        widths = [max(len(r[k]) for r in [headers] + rows) for k in range(len(headers))]
        fmt = lambda r: "  ".join(  # noqa: E731
            r[k].ljust(widths[k]) if k == 0 else r[k].rjust(widths[k]) for k in range(len(r)))
        lines = [fmt(headers), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
        return "\n".join(lines) + "\n"


def _ground_truth_instances(doc, need_masks):
    images = {im.id: im for im in doc.images}
    gts = []
    for ann in doc.annotations:
        mask = None
        if ann.segmentation:
            im = images[ann.image_id]
            polys = [np.asarray(p, dtype=float).reshape(-1, 2) for p in ann.segmentation]
            mask = rasterize_polygons(polys, (im.height, im.width))
        elif need_masks:
            raise ValueError(f"ground-truth annotation {ann.id} has no segmentation for mask IoU")
        gts.append(GroundTruthInstance(ann.image_id, ann.category_id, ann.bbox, mask))
    return gts


def _detections(preds, doc, need_masks):
    images = {im.id: im for im in doc.images}
    cats = {c.id for c in doc.categories}
    dets = []
    for k, p in enumerate(preds):
        if p["image_id"] not in images:
            raise ValueError(f"prediction {k} refers to unknown image_id {p['image_id']}")
        if p["category_id"] not in cats:
            raise ValueError(f"prediction {k} refers to unknown category_id {p['category_id']}")
        mask = None
        if p["has_mask"]:
            im = images[p["image_id"]]
            mask = rasterize_polygons(p["polygons"], (im.height, im.width))
        elif need_masks:
            raise ValueError(f"prediction {k} has no segmentation but mask IoU was requested")
        dets.append(Detection(p["image_id"], p["category_id"], p["score"], p["bbox"], mask))
    return dets


def evaluate_dataset(ground_truth, predictions, iou_kind="mask", ap_max=0.95, score_threshold=None):
    """Per-class Recall50 (box IoU), AP50 and mean AP over 0.50..``ap_max``.

    ``ground_truth`` is a :class:`CocoDocument` or COCO JSON text;
    ``predictions`` is a COCO results JSON text or an already parsed list.
    Detections scoring below ``score_threshold`` are discarded before any
    metric is computed. Instances are pooled across images.
    """
    doc = ground_truth if isinstance(ground_truth, CocoDocument) else parse_coco(ground_truth)
    preds = parse_predictions(predictions) if isinstance(predictions, (str, bytes)) else predictions
    need_masks = iou_kind == "mask"
    if iou_kind not in ("bbox", "mask"):
        raise ValueError(f"iou_kind must be 'bbox' or 'mask', got {iou_kind!r}")
    thresholds = default_thresholds(ap_max)
    gts = _ground_truth_instances(doc, need_masks)
    dets = _detections(preds, doc, need_masks)
    if score_threshold is not None:
        dets = [d for d in dets if d.score >= score_threshold]

    classes = []
    for cat in sorted(doc.categories, key=lambda c: c.id):
        cg = [g for g in gts if g.class_id == cat.id]
        cd = [d for d in dets if d.class_id == cat.id]
        tables = _iou_tables(cd, cg, iou_kind)
        per_t = {}
        match50 = None
        for t in sorted(set(thresholds) | {0.5}):
            m = _match_tables(tables, cd, len(cg), t)
            if t == 0.5:
                match50 = m
            per_t[t] = _ap_from_match(cd, m, len(cg))
        in_range = [per_t[t] for t in thresholds]
        classes.append(ClassReport(
            name=cat.name, n_gt=len(cg), n_det=len(cd),
            recall50=recall_at(cd, cg, 0.5),
            ap50=per_t[0.5],
            ap_range_mean=None if not cg else float(np.mean(in_range)),
            tp=match50.tp, fp=match50.fp, fn=match50.fn,
            ap_by_threshold={t: per_t[t] for t in thresholds},
        ))
    metadata = {
        "recall_iou": "bbox",
        "ap_iou": iou_kind,
        "thresholds": thresholds,
        "interpolation": "101-point",
        "matching": "greedy by descending score, highest IoU first",
        "pooling": "all instances pooled across images",
        "score_threshold": score_threshold,
        "n_images": len(doc.images),
    }
    return EvalReport(classes, metadata)


class DetectionEvaluator(BaseEstimator):
    """Estimator-style front-end: ``fit`` on ground truth, ``evaluate`` or
    ``score`` predictions. ``score`` is the mean AP over the IoU range,
    averaged across classes that have ground truth."""

    def __init__(self, iou_kind="mask", ap_max=0.95, score_threshold=None):
        self.iou_kind = iou_kind
        self.ap_max = ap_max
        self.score_threshold = score_threshold

    def fit(self, ground_truth, y=None):
        self.ground_truth_ = (ground_truth if isinstance(ground_truth, CocoDocument)
                              else parse_coco(ground_truth))
        self.thresholds_ = default_thresholds(self.ap_max)
        return self

    def evaluate(self, predictions):
        check_is_fitted(self, "ground_truth_")
        return evaluate_dataset(self.ground_truth_, predictions, self.iou_kind,
                                self.ap_max, self.score_threshold)

    def score(self, predictions, y=None):
        vals = [c.ap_range_mean for c in self.evaluate(predictions).classes
                if c.ap_range_mean is not None]
        return float(np.mean(vals)) if vals else float("nan")
