"""Planar primitives: components, contours, hulls, rotated rectangles and IoU.

Coordinates follow image convention: ``x`` is the column, ``y`` the row,
and ``y`` grows downward. Pixel ``(x, y)`` is the unit square centred on
that integer point.
"""

from dataclasses import dataclass
from math import gcd
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from ._validation import check_binary_mask, check_points

__all__ = [
    "AlignedBox", "RotatedRect", "Component", "MaskPatch",
    "connected_components", "trace_boundary", "convex_hull",
    "min_area_rect", "shoelace_area", "bbox_iou", "mask_iou",
    "patch_iou", "rasterize_polygons", "mask_bbox",
]


class AlignedBox(NamedTuple):
    """Axis-aligned box; ``(x, y)`` is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    @property
    def area(self):
        return self.w * self.h


class RotatedRect(NamedTuple):
    """Rotated rectangle with ``length >= width``.

    ``angle`` is the direction of the long side in degrees, measured from the
    +x axis toward +y, normalised to ``[0, 180)``.
    """

    center: tuple
    length: float
    width: float
    angle: float

    @property
    def area(self):
        return self.length * self.width


@dataclass(frozen=True)
class Component:
    """One connected set of pixels; ``coords`` holds (x, y) in raster order."""

    label: int
    coords: np.ndarray

    @property
    def size(self):
        return len(self.coords)

    def to_mask(self, shape):
        mask = np.zeros(shape, dtype=bool)
        mask[self.coords[:, 1], self.coords[:, 0]] = True
        return mask


class MaskPatch(NamedTuple):
    """A boolean mask stored as a crop placed at ``(x, y)`` in a larger image."""

    x: int
    y: int
    bits: np.ndarray

    @classmethod
    def from_mask(cls, mask):
        mask = check_binary_mask(mask)
        rows = np.flatnonzero(mask.any(axis=1))
        if rows.size == 0:
            return cls(0, 0, np.zeros((0, 0), dtype=bool))
        cols = np.flatnonzero(mask.any(axis=0))
        y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        return cls(int(x0), int(y0), mask[y0:y1, x0:x1].copy())

    @property
    def area(self):
        return int(np.count_nonzero(self.bits))

    def to_mask(self, shape):
        out = np.zeros(shape, dtype=bool)
        h, w = self.bits.shape
        out[self.y:self.y + h, self.x:self.x + w] = self.bits
        return out


_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def connected_components(mask, connectivity=8):
    """Label the foreground of ``mask``; components come back in raster order of
    their first pixel, with labels starting at 1."""
    if connectivity not in _STRUCTURE:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity!r}")
    mask = check_binary_mask(mask)
    labels, n = ndimage.label(mask, structure=_STRUCTURE[connectivity])
    components = []
    for label, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None:
            continue
        ys, xs = np.nonzero(labels[slc] == label)
        coords = np.column_stack([xs + slc[1].start, ys + slc[0].start])
        components.append(Component(label, coords.astype(np.int64)))
    return components


# Moore neighbourhood in clockwise order (y down), starting west.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def _as_coords(component):
    if isinstance(component, Component):
        return component.coords
    arr = np.asarray(component)
    if arr.dtype == bool and arr.ndim == 2:
        ys, xs = np.nonzero(arr)
        return np.column_stack([xs, ys])
    return np.asarray(arr, dtype=np.int64).reshape(-1, 2)


def trace_boundary(component):
    """Outer boundary of one 8-connected component by Moore-neighbour tracing.

    Tracing starts at the first pixel in raster order and walks clockwise;
    it stops by Jacob's criterion in its state form: when the walk is back
    on the start pixel and about to repeat its very first move. Returns an
    ``(M, 2)`` float array of pixel centres. Pixels on thin spurs are visited twice, so vertices may repeat.
    """
    coords = _as_coords(component)
    if len(coords) == 0:
        raise ValueError("cannot trace the boundary of an empty component")
    x0, y0 = coords.min(axis=0)
    x1, y1 = coords.max(axis=0)
    # one pixel of padding so neighbour lookups never leave the grid
    grid = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
    grid[coords[:, 1] - y0 + 1, coords[:, 0] - x0 + 1] = True

    start_y = int(np.flatnonzero(grid.any(axis=1))[0])
    start_x = int(np.flatnonzero(grid[start_y])[0])
    start = (start_x, start_y)
    # the west neighbour of the first raster pixel is always background
    start_dir = 0

    def step(cur, back_dir):
        cx, cy = cur
        for k in range(1, 9):
            d = (back_dir + k) % 8
            nx, ny = cx + _MOORE[d][0], cy + _MOORE[d][1]
            if grid[ny, nx]:
                # the previously examined neighbour becomes the new backtrack
                px = cx + _MOORE[(d - 1) % 8][0]
                py = cy + _MOORE[(d - 1) % 8][1]
                return (nx, ny), _MOORE.index((px - nx, py - ny))
        return None

    path = [start]
    state = (start, start_dir)
    first = None
    for _ in range(4 * grid.size + 8):
        nxt = step(*state)
        if nxt is None:
            break  # isolated pixel
        if first is None:
            first = nxt
        elif state[0] == start and nxt == first:
            path.pop()  # start was appended when re-entered
            break
        path.append(nxt[0])
        state = nxt
    else:
        raise RuntimeError("boundary tracing did not terminate")

    out = np.asarray(path, dtype=float)
    out[:, 0] += x0 - 1
    out[:, 1] += y0 - 1
    return out


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Convex hull by Andrew's monotone chain.

    Vertices are returned counter-clockwise in the (x, y) frame, i.e. with
    positive signed area, and without collinear points.
    """
    pts = check_points(points)
    if len(pts) == 0:
        raise ValueError("convex hull of an empty point set")
    pts = np.unique(pts, axis=0)  # sorted by x, then y
    if len(pts) <= 2:
        return pts.copy()
    plist = [tuple(p) for p in pts]

    lower = []
    for p in plist:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(plist):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.asarray(hull, dtype=float)


def _normalise_angle(angle):
    angle = angle % 180.0
    if angle >= 180.0 - 1e-9:
        angle = 0.0
    return angle


def min_area_rect(points):
    """Smallest-area enclosing rectangle by rotating calipers.

    Every hull edge is tried as a rectangle side (one side of the optimum is
    always flush with a hull edge).
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return RotatedRect((float(hull[0, 0]), float(hull[0, 1])), 0.0, 0.0, 0.0)

    edges = np.roll(hull, -1, axis=0) - hull
    norms = np.hypot(edges[:, 0], edges[:, 1])
    keep = norms > 0
    u = edges[keep] / norms[keep, None]
    v = np.column_stack([-u[:, 1], u[:, 0]])

    pu = hull @ u.T  # (n_points, n_edges)
    pv = hull @ v.T
    ext_u = pu.max(axis=0) - pu.min(axis=0)
    ext_v = pv.max(axis=0) - pv.min(axis=0)
    areas = ext_u * ext_v
    # exact ties (e.g. right triangles) resolve to the smallest angle, so the
    # result does not depend on rounding noise
    tied = np.flatnonzero(areas <= areas.min() * (1 + 1e-9) + 1e-12)
    best = None
    for i in tied:
        rect = _rect_from_frame(u[i], v[i], pu[:, i], pv[:, i])
        if best is None or rect.angle < best.angle - 1e-9:
            best = rect
    return best


def _rect_from_frame(u, v, pu, pv):
    mid_u = (pu.max() + pu.min()) / 2
    mid_v = (pv.max() + pv.min()) / 2
    center = mid_u * u + mid_v * v
    eu, ev = float(pu.max() - pu.min()), float(pv.max() - pv.min())
    if eu >= ev:
        length, width, direction = eu, ev, u
    else:
        length, width, direction = ev, eu, v
    angle = np.degrees(np.arctan2(direction[1], direction[0]))
    if np.isclose(length, width, rtol=1e-12, atol=0):
        angle = angle % 90.0
        if angle >= 90.0 - 1e-9:
            angle = 0.0
    angle = _normalise_angle(angle)
    return RotatedRect((float(center[0]), float(center[1])), length, width, float(angle))


def shoelace_area(polygon):
    """Absolute polygon area; fewer than three vertices give 0."""
    pts = check_points(polygon, "polygon")
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2)


def bbox_iou(a, b):
    a, b = AlignedBox(*a), AlignedBox(*b)
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    area_a, area_b = a.w * a.h, b.w * b.h
    # (x + w) - x need not equal w in floating point
    inter = min(max(iw, 0.0) * max(ih, 0.0), area_a, area_b)
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(inter / union)


def mask_iou(a, b):
    a = check_binary_mask(a, "a")
    b = check_binary_mask(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def patch_iou(a, b):
    """IoU of two :class:`MaskPatch` objects living in the same image."""
    area_a, area_b = a.area, b.area
    ah, aw = a.bits.shape
    bh, bw = b.bits.shape
    x0, y0 = max(a.x, b.x), max(a.y, b.y)
    x1, y1 = min(a.x + aw, b.x + bw), min(a.y + ah, b.y + bh)
    inter = 0
    if x1 > x0 and y1 > y0:
        sa = a.bits[y0 - a.y:y1 - a.y, x0 - a.x:x1 - a.x]
        sb = b.bits[y0 - b.y:y1 - b.y, x0 - b.x:x1 - b.x]
        inter = int(np.count_nonzero(sa & sb))
    union = area_a + area_b - inter
    if union == 0:
        return 0.0
    return inter / union


def mask_bbox(mask):
    """Tight pixel-extent box of a boolean mask, or ``None`` when empty."""
    patch = MaskPatch.from_mask(mask)
    if patch.bits.size == 0:
        return None
    h, w = patch.bits.shape
    return AlignedBox(patch.x, patch.y, w, h)


def _lattice_points_on_segment(p, q):
    """Integer points lying exactly on segment pq (integer endpoints only)."""
    if not (float(p[0]).is_integer() and float(p[1]).is_integer()
            and float(q[0]).is_integer() and float(q[1]).is_integer()):
        return []
    x0, y0, x1, y1 = int(p[0]), int(p[1]), int(q[0]), int(q[1])
    g = gcd(abs(x1 - x0), abs(y1 - y0))
    if g == 0:
        return [(x0, y0)]
    sx, sy = (x1 - x0) // g, (y1 - y0) // g
    return [(x0 + k * sx, y0 + k * sy) for k in range(g + 1)]


def rasterize_polygons(polygons, shape):
    """Rasterise polygons (each ``(N, 2)`` in pixel-centre coordinates).

    A pixel is set when its centre lies inside a polygon under the even-odd
    rule or exactly on one of its edges, so tracing a hole-free component and
    rasterising the result reproduces the component. Returns a
    :class:`MaskPatch` within an image of ``shape = (H, W)``.
    """
    height, width = shape
    polys = [check_points(p, "polygon") for p in polygons]
    polys = [p for p in polys if len(p)]
    if not polys:
        return MaskPatch(0, 0, np.zeros((0, 0), dtype=bool))
    allpts = np.vstack(polys)
    x0 = max(int(np.floor(allpts[:, 0].min())), 0)
    y0 = max(int(np.floor(allpts[:, 1].min())), 0)
    x1 = min(int(np.ceil(allpts[:, 0].max())), width - 1)
    y1 = min(int(np.ceil(allpts[:, 1].max())), height - 1)
    if x1 < x0 or y1 < y0:
        return MaskPatch(0, 0, np.zeros((0, 0), dtype=bool))
    out = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)

    for poly in polys:
        filled = np.zeros_like(out)
        if len(poly) >= 3:
            p = poly
            q = np.roll(poly, -1, axis=0)
            for row in range(out.shape[0]):
                yc = row + y0
                lo = np.minimum(p[:, 1], q[:, 1])
                hi = np.maximum(p[:, 1], q[:, 1])
                hit = (lo <= yc) & (yc < hi)
                if not hit.any():
                    continue
                pa, qa = p[hit], q[hit]
                t = (yc - pa[:, 1]) / (qa[:, 1] - pa[:, 1])
                xs = np.sort(pa[:, 0] + t * (qa[:, 0] - pa[:, 0]))
                for xa, xb in zip(xs[0::2], xs[1::2]):
                    ca = max(int(np.ceil(xa - 1e-9)), x0)
                    cb = min(int(np.floor(xb + 1e-9)), x1)
                    if cb >= ca:
                        filled[row, ca - x0:cb - x0 + 1] ^= True
        out |= filled
        n = len(poly)
        for k in range(n):
            for px, py in _lattice_points_on_segment(poly[k], poly[(k + 1) % n]):
                if x0 <= px <= x1 and y0 <= py <= y1:
                    out[py - y0, px - x0] = True
    return MaskPatch(x0, y0, out)
