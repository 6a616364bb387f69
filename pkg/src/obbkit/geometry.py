"""Rotated-rectangle geometry.

Boxes use the long-edge convention: ``w >= h`` and ``theta`` in degrees,
``0 <= theta < 180``, measured from the +x axis towards +y. The core is
frame agnostic; in y-down image coordinates a positive angle is a clockwise
turn on screen. Vertex quads are stored counter-clockwise in a y-up frame
(equivalently, positive shoelace area in raw coordinates) starting from the
lexicographically smallest vertex.

Intersections are computed by clipping one convex polygon against each edge
of the other. The hot path is compiled with numba so the scalar
``rotated_iou`` call stays in the low microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .errors import InvalidBoxError, InvalidPolygonError

__all__ = [
    "OrientedBox",
    "VertexQuad",
    "ConvexPolygon",
    "RectFit",
    "normalize_angle",
    "to_vertices",
    "from_vertices",
    "fit_rectangle",
    "polygon_intersection",
    "area",
    "rotated_iou",
    "iou_matrix",
    "boxes_to_array",
    "axis_aligned_iou",
]

# Relative side-length deviation under which a quad counts as a rectangle.
RECT_TOL = 1e-6
# Relative merge distance for clipped vertices; 1e-9 absolute at 1e3 units.
MERGE_TOL = 1e-12


def normalize_angle(theta_raw: float, w: float, h: float) -> tuple[float, float, float]:
    """Map any (w, h, theta) onto the canonical long-edge form.

    Returns ``(w', h', theta)`` with ``w' >= h'`` and ``theta`` in [0, 180).
    Squares are folded further into [0, 90).

    >>> normalize_angle(0, 2, 4)
    (4.0, 2.0, 90.0)
    >>> normalize_angle(185, 4, 2)
    (4.0, 2.0, 5.0)
    """
    w = float(w)
    h = float(h)
    theta = float(theta_raw)
    if not (math.isfinite(w) and math.isfinite(h) and math.isfinite(theta)):
        raise InvalidBoxError(f"non-finite box parameters w={w} h={h} theta={theta}")
    if w <= 0 or h <= 0:
        raise InvalidBoxError(f"box dimensions must be positive, got w={w} h={h}")
    if w < h:
        w, h = h, w
        theta += 90.0
    period = 90.0 if w == h else 180.0
    theta = theta % period
    if theta >= period:
        # x % p can round up to p for tiny negative x
        theta = 0.0
    return w, h, theta + 0.0


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle ``(cx, cy, w, h, theta)``.

    Construction normalizes to the long-edge convention, so
    ``OrientedBox(0, 0, 2, 4, 0) == OrientedBox(0, 0, 4, 2, 90)``.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        cx = float(self.cx)
        cy = float(self.cy)
        if not (math.isfinite(cx) and math.isfinite(cy)):
            raise InvalidBoxError(f"non-finite box center ({cx}, {cy})")
        w, h, theta = normalize_angle(self.theta, self.w, self.h)
        object.__setattr__(self, "cx", cx + 0.0)
        object.__setattr__(self, "cy", cy + 0.0)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "theta", theta)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)

    def vertices(self) -> "VertexQuad":
        return to_vertices(self)


def _signed_area(pts: Sequence[tuple[float, float]]) -> float:
    s = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _canonical_quad(points) -> tuple[tuple[float, float], ...]:
    pts = [(float(x) + 0.0, float(y) + 0.0) for x, y in points]
    if len(pts) != 4:
        raise InvalidPolygonError(f"a quad needs 4 vertices, got {len(pts)}")
    for x, y in pts:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise InvalidPolygonError("non-finite vertex coordinate")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    extent = max(max(xs) - min(xs), max(ys) - min(ys))
    signed = _signed_area(pts)
    if extent == 0.0 or abs(signed) <= 1e-12 * extent * extent:
        raise InvalidPolygonError("degenerate quad (zero area)")
    if signed < 0:
        pts.reverse()
    tol = 1e-12 * extent * extent
    for i in range(4):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % 4]
        cx, cy = pts[(i + 2) % 4]
        if (bx - ax) * (cy - by) - (by - ay) * (cx - bx) < -tol:
            raise InvalidPolygonError("quad is not convex")
    start = min(range(4), key=lambda i: pts[i])
    return tuple(pts[start:] + pts[:start])


@dataclass(frozen=True)
class VertexQuad:
    """Four-corner box form, canonically wound on construction."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", _canonical_quad(self.vertices))

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> "VertexQuad":
        if len(coords) != 8:
            raise InvalidPolygonError(f"expected 8 coordinates, got {len(coords)}")
        return cls(tuple((coords[i], coords[i + 1]) for i in range(0, 8, 2)))

    def flat(self) -> tuple[float, ...]:
        return tuple(c for v in self.vertices for c in v)

    @property
    def v0(self):
        return self.vertices[0]

    @property
    def v1(self):
        return self.vertices[1]

    @property
    def v2(self):
        return self.vertices[2]

    @property
    def v3(self):
        return self.vertices[3]


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon; an empty ``vertices`` tuple is the empty set."""

    vertices: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_points(cls, points) -> "ConvexPolygon":
        pts = [(float(x), float(y)) for x, y in points]
        if len(pts) >= 3 and _signed_area(pts) < 0:
            pts.reverse()
        return cls(tuple(pts))

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    def __len__(self):
        return len(self.vertices)


def _cos_sin_deg(theta: float) -> tuple[float, float]:
    # exact values on the axes keep axis-aligned conversions lossless
    if theta % 90.0 == 0.0:
        q = int(theta // 90.0) % 4
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[q]
    r = math.radians(theta)
    return math.cos(r), math.sin(r)


_cos_sin_deg_jit = njit(cache=True)(_cos_sin_deg)


def to_vertices(box: OrientedBox) -> VertexQuad:
    c, s = _cos_sin_deg(box.theta)
    hw, hh = 0.5 * box.w, 0.5 * box.h
    pts = []
    for lx, ly in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        pts.append((box.cx + c * lx - s * ly, box.cy + s * lx + c * ly))
    return VertexQuad(tuple(pts))


class RectFit(NamedTuple):
    """Box recovered from a quad; ``exact`` is False for the min-area fallback."""

    box: OrientedBox
    exact: bool


def _min_area_rect(pts: list[tuple[float, float]]) -> OrientedBox:
    # For a convex polygon the optimum has a side collinear with some edge.
    best = None
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        length = math.hypot(ex, ey)
        if length == 0.0:
            continue
        ux, uy = ex / length, ey / length
        us = [x * ux + y * uy for x, y in pts]
        vs = [-x * uy + y * ux for x, y in pts]
        du = max(us) - min(us)
        dv = max(vs) - min(vs)
        a = du * dv
        if best is None or a < best[0]:
            mu = 0.5 * (max(us) + min(us))
            mv = 0.5 * (max(vs) + min(vs))
            cx = mu * ux - mv * uy
            cy = mu * uy + mv * ux
            best = (a, cx, cy, du, dv, math.degrees(math.atan2(uy, ux)))
    if best is None:
        raise InvalidPolygonError("degenerate quad (zero area)")
    _, cx, cy, du, dv, theta = best
    return OrientedBox(cx, cy, du, dv, theta)


def fit_rectangle(quad: VertexQuad) -> RectFit:
    """Recover an OrientedBox from a quad, reporting whether it was a rectangle."""
    pts = list(quad.vertices)
    edges = [(pts[(i + 1) % 4][0] - pts[i][0], pts[(i + 1) % 4][1] - pts[i][1]) for i in range(4)]
    lengths = [math.hypot(ex, ey) for ex, ey in edges]
    d0 = math.hypot(pts[2][0] - pts[0][0], pts[2][1] - pts[0][1])
    d1 = math.hypot(pts[3][0] - pts[1][0], pts[3][1] - pts[1][1])
    scale = max(lengths)
    if scale == 0.0:
        raise InvalidPolygonError("degenerate quad (zero area)")
    is_rect = (
        abs(lengths[0] - lengths[2]) <= RECT_TOL * scale
        and abs(lengths[1] - lengths[3]) <= RECT_TOL * scale
        and abs(d0 - d1) <= RECT_TOL * max(d0, d1)
    )
    if not is_rect:
        return RectFit(_min_area_rect(pts), False)
    cx = sum(p[0] for p in pts) / 4.0
    cy = sum(p[1] for p in pts) / 4.0
    # edge 2 runs opposite to edge 0
    dx = edges[0][0] - edges[2][0]
    dy = edges[0][1] - edges[2][1]
    theta = math.degrees(math.atan2(dy, dx))
    w = 0.5 * (lengths[0] + lengths[2])
    h = 0.5 * (lengths[1] + lengths[3])
    return RectFit(OrientedBox(cx, cy, w, h, theta), True)


def from_vertices(quad: VertexQuad) -> OrientedBox:
    """Inverse of :func:`to_vertices`; non-rectangles get the min-area enclosing box."""
    return fit_rectangle(quad).box


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _clip_convex(subject, clip, tol):
    """Clip convex CCW ``subject`` by convex CCW ``clip``; returns (k, 2) array."""
    n = subject.shape[0]
    m = clip.shape[0]
    cap = 2 * (n + m) + 2
    cur = np.empty((cap, 2))
    nxt = np.empty((cap, 2))
    for i in range(n):
        cur[i, 0] = subject[i, 0]
        cur[i, 1] = subject[i, 1]
    k = n
    for j in range(m):
        if k < 3:
            return np.empty((0, 2))
        ax = clip[j, 0]
        ay = clip[j, 1]
        ex = clip[(j + 1) % m, 0] - ax
        ey = clip[(j + 1) % m, 1] - ay
        cnt = 0
        px = cur[k - 1, 0]
        py = cur[k - 1, 1]
        pd = ex * (py - ay) - ey * (px - ax)
        for i in range(k):
            qx = cur[i, 0]
            qy = cur[i, 1]
            qd = ex * (qy - ay) - ey * (qx - ax)
            if cnt + 2 > cap:
                break
            if qd >= 0.0:
                if pd < 0.0:
                    t = pd / (pd - qd)
                    nxt[cnt, 0] = px + t * (qx - px)
                    nxt[cnt, 1] = py + t * (qy - py)
                    cnt += 1
                nxt[cnt, 0] = qx
                nxt[cnt, 1] = qy
                cnt += 1
            elif pd > 0.0:
                t = pd / (pd - qd)
                nxt[cnt, 0] = px + t * (qx - px)
                nxt[cnt, 1] = py + t * (qy - py)
                cnt += 1
            px = qx
            py = qy
            pd = qd
        # merge consecutive near-duplicates, including the wrap-around pair
        k = 0
        for i in range(cnt):
            x = nxt[i, 0]
            y = nxt[i, 1]
            if k > 0 and abs(x - cur[k - 1, 0]) <= tol and abs(y - cur[k - 1, 1]) <= tol:
                continue
            cur[k, 0] = x
            cur[k, 1] = y
            k += 1
        while k > 1 and abs(cur[0, 0] - cur[k - 1, 0]) <= tol and abs(cur[0, 1] - cur[k - 1, 1]) <= tol:
            k -= 1
    if k < 3:
        return np.empty((0, 2))
    return cur[:k].copy()


@njit(cache=True)
def _shoelace(pts):
    n = pts.shape[0]
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        j = (i + 1) % n
        s += pts[i, 0] * pts[j, 1] - pts[j, 0] * pts[i, 1]
    return 0.5 * abs(s)


@njit(cache=True)
def _fill_corners(out, cx, cy, w, h, theta):
    c, s = _cos_sin_deg_jit(theta)
    hw = 0.5 * w
    hh = 0.5 * h
    out[0, 0] = cx - c * hw + s * hh
    out[0, 1] = cy - s * hw - c * hh
    out[1, 0] = cx + c * hw + s * hh
    out[1, 1] = cy + s * hw - c * hh
    out[2, 0] = cx + c * hw - s * hh
    out[2, 1] = cy + s * hw + c * hh
    out[3, 0] = cx - c * hw - s * hh
    out[3, 1] = cy - s * hw + c * hh


@njit(cache=True)
def _precedes(a0, a1, a2, a3, a4, b0, b1, b2, b3, b4):
    if a0 != b0:
        return a0 < b0
    if a1 != b1:
        return a1 < b1
    if a2 != b2:
        return a2 < b2
    if a3 != b3:
        return a3 < b3
    return a4 <= b4


@njit(cache=True)
def _iou_kernel(ax, ay, aw, ah, at, bx, by, bw, bh, bt):
    # fixed argument order makes iou(a, b) == iou(b, a) bit for bit
    if not _precedes(ax, ay, aw, ah, at, bx, by, bw, bh, bt):
        ax, ay, aw, ah, at, bx, by, bw, bh, bt = bx, by, bw, bh, bt, ax, ay, aw, ah, at
    if ax == bx and ay == by and aw == bw and ah == bh and at == bt:
        return 1.0
    # cheap reject on circumscribed circles
    dx = bx - ax
    dy = by - ay
    ra = 0.5 * math.sqrt(aw * aw + ah * ah)
    rb = 0.5 * math.sqrt(bw * bw + bh * bh)
    if dx * dx + dy * dy >= (ra + rb) * (ra + rb):
        return 0.0
    pa = np.empty((4, 2))
    pb = np.empty((4, 2))
    # work relative to a's center for precision
    _fill_corners(pa, 0.0, 0.0, aw, ah, at)
    _fill_corners(pb, dx, dy, bw, bh, bt)
    scale = max(ra, rb, math.sqrt(dx * dx + dy * dy))
    inter = _shoelace(_clip_convex(pa, pb, MERGE_TOL * scale))
    area_a = aw * ah
    area_b = bw * bh
    small = min(area_a, area_b)
    if inter <= 1e-12 * small:
        return 0.0
    if inter > small:
        inter = small
    iou = inter / (area_a + area_b - inter)
    return min(1.0, iou)


@njit(cache=True)
def _iou_matrix_kernel(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = _iou_kernel(
                a[i, 0], a[i, 1], a[i, 2], a[i, 3], a[i, 4],
                b[j, 0], b[j, 1], b[j, 2], b[j, 3], b[j, 4],
            )
    return out


# ---------------------------------------------------------------------------
# public polygon / IoU API


def _as_ccw_array(poly) -> np.ndarray:
    pts = np.asarray(poly.vertices, dtype=np.float64).reshape(-1, 2)
    if len(pts) >= 3 and _signed_area(poly.vertices) < 0:
        pts = pts[::-1].copy()
    return pts


def _as_polygon(p):
    return to_vertices(p) if isinstance(p, OrientedBox) else p


def polygon_intersection(a, b) -> ConvexPolygon:
    """Intersection of two convex polygons (ConvexPolygon, VertexQuad or OrientedBox)."""
    a, b = _as_polygon(a), _as_polygon(b)
    if len(a.vertices) < 3 or len(b.vertices) < 3:
        return ConvexPolygon(())
    pa = _as_ccw_array(a)
    pb = _as_ccw_array(b)
    scale = max(np.abs(pa).max(), np.abs(pb).max(), 1e-300)
    out = _clip_convex(pa, pb, MERGE_TOL * scale)
    return ConvexPolygon(tuple((float(x), float(y)) for x, y in out))


def area(p) -> float:
    """Shoelace area of a ConvexPolygon or VertexQuad; 0 for the empty polygon."""
    p = _as_polygon(p)
    if len(p.vertices) < 3:
        return 0.0
    return abs(_signed_area(p.vertices))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Exact intersection-over-union of two oriented boxes.

    Symmetric bit for bit; edge contact counts as zero overlap.
    """
    return _iou_kernel(a.cx, a.cy, a.w, a.h, a.theta, b.cx, b.cy, b.w, b.h, b.theta)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (N, 5) float array of (cx, cy, w, h, theta)."""
    if isinstance(boxes, np.ndarray):
        return np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 5)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 5)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise rotated IoU between two box collections.

    Arrays must already be in canonical (long-edge) form.
    """
    return _iou_matrix_kernel(boxes_to_array(a), boxes_to_array(b))


def axis_aligned_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Closed-form IoU for axis-aligned boxes (theta 0 or 90)."""
    boxes = []
    for box in (a, b):
        c, s = _cos_sin_deg(box.theta)
        ex = abs(c) * box.w + abs(s) * box.h
        ey = abs(s) * box.w + abs(c) * box.h
        boxes.append((box.cx - ex / 2, box.cy - ey / 2, box.cx + ex / 2, box.cy + ey / 2))
    (ax0, ay0, ax1, ay1), (bx0, by0, bx1, by1) = boxes
    ix = min(ax1, bx1) - max(ax0, bx0)
    iy = min(ay1, by1) - max(ay0, by0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)
