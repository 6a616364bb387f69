import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from obbkit.errors import InvalidBoxError, InvalidPolygonError
from obbkit.geometry import (
    ConvexPolygon,
    OrientedBox,
    VertexQuad,
    area,
    axis_aligned_iou,
    boxes_to_array,
    fit_rectangle,
    from_vertices,
    iou_matrix,
    normalize_angle,
    polygon_intersection,
    rotated_iou,
    to_vertices,
)
from oracles import mc_iou, min_area_rect_brute, polygon_area

# corners of (5, 3, 4, 2, 30) from an explicit rotation matrix (oracles.rotation_corners)
CORNERS_5_3_4_2_30 = [
    (6.232050807568878, 4.866025403784438),
    (2.767949192431123, 2.866025403784439),
    (3.7679491924311224, 1.1339745962155614),
    (7.232050807568877, 3.133974596215561),
]

coord = st.floats(-500, 500, allow_nan=False)
side = st.floats(0.5, 200, allow_nan=False)
angle = st.floats(-720, 720, allow_nan=False)
boxes = st.builds(OrientedBox, coord, coord, side, side, angle)


def same_vertex_set(q, pts, tol):
    ref = [tuple(p) for p in pts]
    for v in q.vertices:
        if not any(math.dist(v, r) <= tol for r in ref):
            return False
    return True


# -- normalize_angle ---------------------------------------------------------


@pytest.mark.parametrize(
    "theta,w,h,expected",
    [(0, 4, 2, (4, 2, 0)), (0, 2, 4, (4, 2, 90)), (185, 4, 2, (4, 2, 5)), (-30, 4, 2, (4, 2, 150))],
)
def test_normalize_examples(theta, w, h, expected):
    assert normalize_angle(theta, w, h) == pytest.approx(expected)


def test_square_folds_into_quarter_turn():
    assert normalize_angle(135, 3, 3) == (3, 3, 45)
    assert normalize_angle(90, 3, 3) == (3, 3, 0)


@pytest.mark.parametrize("w,h,theta", [(0, 1, 0), (1, -1, 0), (math.inf, 1, 0), (1, 1, math.nan)])
def test_invalid_boxes(w, h, theta):
    with pytest.raises(InvalidBoxError):
        normalize_angle(theta, w, h)


@given(angle, side, side)
def test_normalized_range_and_order(theta, w, h):
    w2, h2, t = normalize_angle(theta, w, h)
    assert w2 >= h2 and 0 <= t < 180
    assert {w2, h2} == {w, h}


@given(angle, side, side)
def test_swap_adds_quarter_turn(theta, w, h):
    assume(abs(w - h) > 1e-6)
    a = normalize_angle(theta, w, h)
    b = normalize_angle(theta + 90, h, w)
    assert a[:2] == b[:2]
    d = abs(a[2] - b[2]) % 180
    assert min(d, 180 - d) < 1e-9


# -- vertices ----------------------------------------------------------------


def test_square_corners():
    q = to_vertices(OrientedBox(0, 0, 2, 2, 0))
    assert sorted(q.vertices) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]


def test_diamond_corners():
    q = to_vertices(OrientedBox(0, 0, 2, 2, 45))
    r = math.sqrt(2)
    assert same_vertex_set(q, [(r, 0), (-r, 0), (0, r), (0, -r)], 1e-12)


def test_rotation_matrix_oracle():
    q = to_vertices(OrientedBox(5, 3, 4, 2, 30))
    assert same_vertex_set(q, CORNERS_5_3_4_2_30, 1e-12)


def test_canonical_winding_and_start():
    q = to_vertices(OrientedBox(5, 3, 4, 2, 30))
    assert q.vertices[0] == min(q.vertices)
    pts = np.array(q.vertices)
    x, y = pts[:, 0], pts[:, 1]
    assert np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) > 0


def test_quad_canonicalizes_any_order():
    a = VertexQuad.from_flat([1, 1, -1, 1, -1, -1, 1, -1])
    b = VertexQuad.from_flat([-1, -1, -1, 1, 1, 1, 1, -1])
    assert a == b and a.v0 == (-1, -1)


def test_degenerate_and_nonconvex_quads():
    with pytest.raises(InvalidPolygonError, match="degenerate"):
        VertexQuad.from_flat([0, 0, 1, 1, 2, 2, 3, 3])
    with pytest.raises(InvalidPolygonError, match="convex"):
        VertexQuad.from_flat([0, 0, 4, 0, 1, 1, 0, 4])


@given(boxes)
def test_centroid_is_center(b):
    pts = np.array(to_vertices(b).vertices)
    scale = max(1.0, abs(b.cx), abs(b.cy))
    assert np.allclose(pts.mean(axis=0), [b.cx, b.cy], rtol=0, atol=1e-9 * scale)


def test_from_vertices_square():
    b = from_vertices(VertexQuad.from_flat([1, 1, -1, 1, -1, -1, 1, -1]))
    assert b.as_tuple() == pytest.approx((0, 0, 2, 2, 0))


def test_round_trip_random_boxes():
    rng = np.random.default_rng(7)
    for _ in range(100):
        w, h = sorted(rng.uniform(1, 100, 2), reverse=True)
        b = OrientedBox(rng.uniform(-100, 100), rng.uniform(-100, 100), w, h, rng.uniform(0, 180))
        r = from_vertices(to_vertices(b))
        assert r.cx == pytest.approx(b.cx, abs=1e-9) and r.cy == pytest.approx(b.cy, abs=1e-9)
        assert r.w == pytest.approx(b.w, rel=1e-9) and r.h == pytest.approx(b.h, rel=1e-9)
        d = abs(r.theta - b.theta) % 180
        assert min(d, 180 - d) < 1e-7
        assert same_vertex_set(to_vertices(r), to_vertices(b).vertices, 1e-6 * w)


def test_perturbed_rectangle_uses_min_area_fallback():
    rng = np.random.default_rng(3)
    base = np.array(to_vertices(OrientedBox(10, 20, 30, 12, 25)).vertices)
    pts = base + rng.normal(0, 1e-8, base.shape)
    fit = fit_rectangle(VertexQuad([tuple(p) for p in pts]))
    assert fit.box.area == pytest.approx(360, rel=1e-6)
    assert fit.box.theta == pytest.approx(25, abs=1e-5)


def test_min_area_rect_matches_angle_sweep():
    rng = np.random.default_rng(11)
    for _ in range(5):
        b = OrientedBox(0, 0, rng.uniform(10, 20), rng.uniform(2, 9), rng.uniform(0, 180))
        pts = np.array(to_vertices(b).vertices) + rng.uniform(-1.5, 1.5, (4, 2))
        try:
            q = VertexQuad([tuple(p) for p in pts])
        except InvalidPolygonError:
            continue
        fit = fit_rectangle(q)
        assert not fit.exact
        assert fit.box.area == pytest.approx(min_area_rect_brute(pts, 20000), rel=1e-5)
        # the fit encloses every vertex
        enclosed = np.array(q.vertices)
        c, s = math.cos(math.radians(fit.box.theta)), math.sin(math.radians(fit.box.theta))
        u = (enclosed[:, 0] - fit.box.cx) * c + (enclosed[:, 1] - fit.box.cy) * s
        v = -(enclosed[:, 0] - fit.box.cx) * s + (enclosed[:, 1] - fit.box.cy) * c
        assert np.all(np.abs(u) <= fit.box.w / 2 + 1e-9) and np.all(np.abs(v) <= fit.box.h / 2 + 1e-9)


# -- intersection and IoU ------------------------------------------------------


def test_octagon_area():
    inter = polygon_intersection(OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, 45))
    assert len(inter) == 8
    assert area(inter) == pytest.approx(2 * (math.sqrt(2) - 1), abs=1e-12)
    assert area(inter) == pytest.approx(polygon_area(inter.vertices), abs=1e-12)


def test_disjoint_and_touching():
    a = OrientedBox(0, 0, 2, 2, 0)
    assert polygon_intersection(a, OrientedBox(10, 0, 2, 2, 0)).is_empty
    assert rotated_iou(a, OrientedBox(2, 0, 2, 2, 0)) == 0.0


def test_containment():
    big, small = OrientedBox(0, 0, 10, 10, 0), OrientedBox(1, 1, 2, 1, 33)
    assert rotated_iou(big, small) == pytest.approx(2 / 100, abs=1e-12)


def test_identity_and_half_overlap():
    a = OrientedBox(3, 4, 6, 2, 17)
    assert rotated_iou(a, a) == pytest.approx(1.0, abs=1e-12)
    assert rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(1, 0, 2, 2, 0)) == pytest.approx(1 / 3)


def test_convex_polygon_input():
    sq = ConvexPolygon.from_points([(0, 0), (2, 0), (2, 2), (0, 2)])
    tri = ConvexPolygon.from_points([(1, 1), (3, 1), (1, 3)])
    # the unit square [1,2]^2 lies entirely under x + y <= 4
    assert area(polygon_intersection(sq, tri)) == pytest.approx(1.0, abs=1e-12)


def test_matches_monte_carlo_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = (0.0, 0.0, rng.uniform(5, 20), rng.uniform(2, 5), rng.uniform(0, 180))
        b = (rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(5, 20), rng.uniform(2, 5), rng.uniform(0, 180))
        exact = rotated_iou(OrientedBox(*a), OrientedBox(*b))
        assert abs(exact - mc_iou(a, b, 200_000, rng)) < 0.01


def test_axis_aligned_agrees_at_right_angles():
    a = OrientedBox(0, 0, 4, 2, 0)
    b = OrientedBox(1, 0.5, 3, 2, 90)
    assert axis_aligned_iou(a, b) == pytest.approx(rotated_iou(a, b), abs=1e-12)


def test_iou_matrix_matches_scalar():
    rng = np.random.default_rng(1)
    a = [OrientedBox(*rng.uniform(0, 20, 2), *rng.uniform(2, 10, 2), rng.uniform(0, 180)) for _ in range(7)]
    b = [OrientedBox(*rng.uniform(0, 20, 2), *rng.uniform(2, 10, 2), rng.uniform(0, 180)) for _ in range(5)]
    m = iou_matrix(boxes_to_array(a), boxes_to_array(b))
    assert m.shape == (7, 5)
    for i in range(7):
        for j in range(5):
            assert m[i, j] == rotated_iou(a[i], b[j])


@settings(max_examples=300)
@given(boxes, boxes)
def test_iou_bounds_and_exact_symmetry(a, b):
    v = rotated_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == rotated_iou(b, a)


@given(boxes)
def test_self_iou_is_one(a):
    assert rotated_iou(a, a) == pytest.approx(1.0, abs=1e-9)


@given(boxes, boxes, coord, coord)
def test_translation_invariance(a, b, dx, dy):
    shift = lambda o: OrientedBox(o.cx + dx, o.cy + dy, o.w, o.h, o.theta)  # noqa: E731
    scale = max(1.0, abs(dx), abs(dy), abs(a.cx), abs(b.cx), abs(a.cy), abs(b.cy))
    assert rotated_iou(shift(a), shift(b)) == pytest.approx(rotated_iou(a, b), abs=1e-9 * scale)


@given(boxes, boxes)
def test_intersection_not_larger_than_either(a, b):
    inter = area(polygon_intersection(a, b))
    assert inter <= min(a.area, b.area) * (1 + 1e-9)
