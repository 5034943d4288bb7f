import math

import numpy as np
import pytest
from conftest import boxes, near_boxes, random_box_array, shapely_footprint, shapely_iou
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Point

from hycomm.geometry import (
    OrientedBox3,
    PlanarPose,
    Point3,
    box_corners_bev,
    iou_matrix,
    nms,
    nms_pairs,
    normalize_angle,
    point_in_box,
    points_in_boxes,
    polygon_area,
    rotated_iou_bev,
    transform_box,
    transform_boxes,
    transform_points,
    transform_to_frame,
)


def brute_greedy_nms(boxes, scores, thr):
    """Textbook greedy NMS written independently, using shapely IoU."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    keep = []
    for i in order:
        if all(shapely_iou(boxes[i], boxes[j]) <= thr for j in keep):
            keep.append(i)
    return keep


# --- values ---------------------------------------------------------------


def test_normalize_angle_range():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    arr = normalize_angle(np.linspace(-20, 20, 1001))
    assert np.all(arr > -math.pi) and np.all(arr <= math.pi)


def test_box_rejects_nonpositive_dims():
    with pytest.raises(ValueError):
        OrientedBox3(0, 0, 0, 0.0, 1, 1, 0)
    with pytest.raises(ValueError):
        OrientedBox3(0, 0, 0, 1, 1, -1, 0)


def test_box_yaw_normalized_at_construction():
    assert OrientedBox3(0, 0, 0, 1, 1, 1, 3 * math.pi).yaw == pytest.approx(math.pi)


def test_pose_rejects_nonfinite():
    with pytest.raises(ValueError):
        PlanarPose(float("nan"), 0, 0)


# --- transforms -----------------------------------------------------------


def test_transform_identity():
    p = Point3(1.5, -2.0, 0.3, 0.7)
    pose = PlanarPose(3, 4, 0.5)
    q = transform_to_frame(p, pose, pose)
    assert (q.x, q.y, q.z, q.intensity) == pytest.approx((p.x, p.y, p.z, p.intensity), abs=1e-12)


def test_transform_pure_translation():
    q = transform_to_frame(Point3(1, 0, 0), PlanarPose(0, 0, 0), PlanarPose(1, 0, 0))
    assert (q.x, q.y, q.z) == pytest.approx((0, 0, 0), abs=1e-12)


def test_transform_pure_rotation():
    q = transform_to_frame(Point3(1, 0, 0), PlanarPose(0, 0, math.pi / 2), PlanarPose(0, 0, 0))
    assert (q.x, q.y, q.z) == pytest.approx((0, 1, 0), abs=1e-12)


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-4, 4), st.floats(-100, 100),
       st.floats(-100, 100), st.floats(-4, 4))
def test_transform_inverse_roundtrip(x1, y1, t1, x2, y2, t2):
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-80, 80, (20, 3)), rng.random(20)])
    a, b = PlanarPose(x1, y1, t1), PlanarPose(x2, y2, t2)
    back = transform_points(transform_points(pts, a, b), b, a)
    assert np.max(np.abs(back - pts)) < 1e-9


def test_transform_box_rotation_shifts_yaw():
    b = OrientedBox3(2, 0, 0.8, 4, 2, 1.6, 0.1)
    out = transform_box(b, PlanarPose(0, 0, math.pi / 2), PlanarPose(0, 0, 0))
    assert out.yaw == pytest.approx(0.1 + math.pi / 2)
    assert (out.cx, out.cy) == pytest.approx((0, 2), abs=1e-12)


# --- containment ----------------------------------------------------------


def test_point_in_box_center_and_faces():
    b = OrientedBox3(1, 2, 0.8, 4, 2, 1.6, 0.3)
    assert point_in_box(b, Point3(1, 2, 0.8))
    eps = 1e-6
    axis = np.array([math.cos(0.3), math.sin(0.3)])
    out = np.array([1, 2]) + (2 + eps) * axis
    assert not point_in_box(b, Point3(out[0], out[1], 0.8))
    assert point_in_box(b, Point3(out[0], out[1], 0.8), margin=1e-3)


def test_point_in_box_rotated_boundary():
    b = OrientedBox3(0, 0, 0.5, 4, 2, 1, math.pi / 4)
    d = 2.0 * (1 - 1e-12)
    assert point_in_box(b, Point3(d * math.cos(math.pi / 4), d * math.sin(math.pi / 4), 0.5))


def test_point_in_box_vertical_extent():
    b = OrientedBox3(0, 0, 0.5, 4, 2, 1, 0)
    assert point_in_box(b, Point3(0, 0, 0.0))
    assert point_in_box(b, Point3(0, 0, 1.0))
    assert not point_in_box(b, Point3(0, 0, 1.01))


@given(boxes(), st.floats(-60, 60), st.floats(-60, 60), st.floats(0, 1.6))
def test_points_in_boxes_matches_shapely(box, px, py, pz):
    inside = points_in_boxes(np.array([[px, py, pz, 0]]), box)[0, 0]
    poly = shapely_footprint(box)
    p = Point(px, py)
    if poly.exterior.distance(p) > 1e-7:
        assert inside == poly.contains(p)


@given(boxes(), st.floats(-30, 30), st.floats(-30, 30), st.floats(-4, 4), st.floats(-10, 10), st.floats(-10, 10))
def test_point_in_box_rigid_invariance(box, tx, ty, tt, px, py):
    pts = np.array([[box[0] + px, box[1] + py, 0.8, 0.0]])
    before = points_in_boxes(pts, box)[0, 0]
    src, dst = PlanarPose(0, 0, 0), PlanarPose(tx, ty, tt)
    after = points_in_boxes(transform_points(pts, src, dst), transform_boxes(box, src, dst))[0, 0]
    local = transform_points(pts, PlanarPose(0, 0, 0), PlanarPose(box[0], box[1], box[6]))[0]
    margin = min(abs(abs(local[0]) - box[3] / 2), abs(abs(local[1]) - box[4] / 2))
    if margin > 1e-7:
        assert before == after


# --- IoU ------------------------------------------------------------------


def test_iou_examples():
    a = OrientedBox3(0, 0, 0.5, 2, 2, 1, 0)
    assert rotated_iou_bev(a, a) == 1.0
    assert rotated_iou_bev(a, OrientedBox3(100, 0, 0.5, 2, 2, 1, 0)) == 0.0
    assert rotated_iou_bev(a, OrientedBox3(1, 0, 0.5, 2, 2, 1, 0)) == pytest.approx(1 / 3, abs=1e-12)


def test_polygon_area_shoelace():
    assert polygon_area([(0, 0), (2, 0), (2, 3), (0, 3)]) == pytest.approx(6)
    assert polygon_area([]) == 0.0


def test_corners_are_counterclockwise():
    c = box_corners_bev(np.array([0, 0, 0, 4, 2, 1, 0.7]))[0]
    assert polygon_area([tuple(p) for p in c]) == pytest.approx(8)
    x, y = c[:, 0], c[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0


@given(near_boxes())
def test_iou_matches_shapely(pair):
    a, b = pair
    assert iou_matrix(a, b)[0, 0] == pytest.approx(shapely_iou(a, b), abs=1e-9)


@given(near_boxes())
def test_iou_symmetric(pair):
    a, b = pair
    assert abs(iou_matrix(a, b)[0, 0] - iou_matrix(b, a)[0, 0]) <= 1e-9


@given(near_boxes(), st.floats(-100, 100), st.floats(-100, 100), st.floats(-4, 4))
def test_iou_rigid_invariance(pair, tx, ty, tt):
    a, b = pair
    src, dst = PlanarPose(0, 0, 0), PlanarPose(tx, ty, tt)
    moved = iou_matrix(transform_boxes(a, src, dst), transform_boxes(b, src, dst))[0, 0]
    assert moved == pytest.approx(iou_matrix(a, b)[0, 0], abs=1e-7)


@given(boxes())
def test_iou_self_is_exactly_one(box):
    assert iou_matrix(box, box)[0, 0] == 1.0


@given(near_boxes())
def test_iou_in_unit_interval(pair):
    v = iou_matrix(*pair)[0, 0]
    assert 0.0 <= v <= 1.0


# --- NMS ------------------------------------------------------------------


def test_nms_exact_duplicate_keeps_best():
    b = OrientedBox3(0, 0, 0.8, 4, 2, 1.6, 0)
    assert nms_pairs([(b, 0.8), (b, 0.9)], 0.15) == [1]


def test_nms_disjoint_keeps_both():
    a = OrientedBox3(0, 0, 0.8, 4, 2, 1.6, 0)
    b = OrientedBox3(50, 0, 0.8, 4, 2, 1.6, 0)
    assert sorted(nms_pairs([(a, 0.2), (b, 0.9)], 0.15)) == [0, 1]


def test_nms_tie_goes_to_lower_index():
    b = OrientedBox3(0, 0, 0.8, 4, 2, 1.6, 0)
    assert nms_pairs([(b, 0.5), (b, 0.5), (b, 0.5)], 0.5) == [0]


def test_nms_rejects_bad_threshold():
    with pytest.raises(ValueError):
        nms(np.zeros((0, 7)), [], 1.0)


def test_nms_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for _ in range(300):
        k = int(rng.integers(1, 9))
        bx = random_box_array(rng, k, spread=4.0)
        sc = rng.random(k)
        thr = float(rng.uniform(0.05, 0.7))
        assert nms(bx, sc, thr) == brute_greedy_nms(bx, sc, thr)


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_nms_kept_set_is_pairwise_separated(k, seed):
    rng = np.random.default_rng(seed)
    bx = random_box_array(rng, k, spread=4.0)
    sc = rng.random(k)
    keep = nms(bx, sc, 0.15)
    ious = iou_matrix(bx[keep], bx[keep])
    np.fill_diagonal(ious, 0)
    assert np.all(ious <= 0.15)
    for i in set(range(k)) - set(keep):
        assert any(ious_ij > 0.15 and sc[j] >= sc[i] for j, ious_ij in
                   ((j, iou_matrix(bx[i], bx[j])[0, 0]) for j in keep))


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_nms_order_independent_for_distinct_scores(k, seed):
    rng = np.random.default_rng(seed)
    bx = random_box_array(rng, k, spread=4.0)
    sc = rng.permutation(k) / k + 0.01
    perm = rng.permutation(k)
    kept = {tuple(bx[i]) for i in nms(bx, sc, 0.15)}
    kept_perm = {tuple(bx[perm][i]) for i in nms(bx[perm], sc[perm], 0.15)}
    assert kept == kept_perm
