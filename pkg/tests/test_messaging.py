import itertools
import json
import math
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hycomm.detector import DetectionSet
from hycomm.geometry import PlanarPose
from hycomm.messaging import (
    BOX_BYTES,
    HEADER_BYTES,
    POINT_BYTES,
    HybridMessage,
    MalformedFrameError,
    PackerConfig,
    allocate_budget,
    deserialize,
    expand_boxes,
    pack_box_message,
    pack_hybrid,
    quantize_pose,
    select_boxes,
    serialize,
    weight_points,
    weighted_sample,
    weighted_sample_indices,
)

FIXTURES = Path(__file__).parent / "fixtures"


def make_dets(rng, k, spread=30.0):
    boxes = np.column_stack([
        rng.uniform(-spread, spread, k), rng.uniform(-spread, spread, k), np.full(k, 0.8),
        rng.uniform(3.5, 5, k), rng.uniform(1.5, 2.1, k), np.full(k, 1.6), rng.uniform(-np.pi, np.pi, k),
    ])
    var = rng.uniform(0, 1.0, (k, 1)).repeat(2, axis=1)
    return DetectionSet(boxes, rng.random(k), var)


def exhaustive_best(conf, b):
    best = 0.0
    for size in range(0, min(b, len(conf)) + 1):
        for subset in itertools.combinations(range(len(conf)), size):
            best = max(best, math.fsum(conf[i] for i in subset))
    return best


# --- budget ---------------------------------------------------------------


@pytest.mark.parametrize("b,k,expected", [(100, 10, (10, 7)), (35, 10, (5, 0)), (0, 10, (0, 0)),
                                          (70, 10, (10, 0)), (110, 10, (10, 10)), (13, 0, (0, 3))])
def test_allocate_budget_examples(b, k, expected):
    s = allocate_budget(b, k)
    assert (s.b_box, s.b_point) == expected


@given(st.integers(0, 100_000), st.integers(0, 500))
def test_allocation_fits_budget(b, k):
    s = allocate_budget(b, k)
    assert 7 * s.b_box + 4 * s.b_point <= b
    assert s.b_box == min(k, b // 7)


def test_allocate_rejects_negative():
    with pytest.raises(ValueError):
        allocate_budget(-1, 3)


# --- box selection --------------------------------------------------------


def test_select_boxes_examples():
    c = [0.9, 0.2, 0.7]
    mask = select_boxes(c, 2)
    assert mask.tolist() == [True, False, True]
    assert sum(np.asarray(c)[mask]) == pytest.approx(1.6) == exhaustive_best(c, 2)
    assert not select_boxes(c, 0).any()
    assert select_boxes(c, 5).all()


def test_select_boxes_tie_break_lower_index():
    assert select_boxes([0.5, 0.5, 0.5], 2).tolist() == [True, True, False]


def test_select_boxes_matches_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(300):
        k = int(rng.integers(0, 11))
        conf = rng.random(k)
        if rng.random() < 0.3 and k:
            conf = np.round(conf, 1)
        b = int(rng.integers(0, k + 1))
        mask = select_boxes(conf, b)
        assert mask.sum() <= b
        assert math.fsum(conf[mask]) == exhaustive_best(conf.tolist(), b)


def test_pack_box_message_order_and_projection():
    boxes = np.arange(21, dtype=float).reshape(3, 7) + 1
    d = DetectionSet(boxes, [0.9, 0.2, 0.7], np.zeros((3, 2)))
    assert pack_box_message(d, [False] * 3).shape == (0, 7)
    assert np.array_equal(pack_box_message(d, [True, False, False]), boxes[:1].astype(np.float32))
    assert np.array_equal(pack_box_message(d, [True, False, True]), boxes[[0, 2]].astype(np.float32))
    with pytest.raises(ValueError):
        pack_box_message(d, [True])


# --- expansion and weights ------------------------------------------------


def test_expand_examples():
    box = [[0, 0, 0.8, 4.0, 2.0, 1.6, 0.3]]
    zero = DetectionSet(box, [0.5], [[0.0, 0.0]])
    assert np.array_equal(expand_boxes(zero), zero.boxes)
    e = expand_boxes(DetectionSet(box, [0.5], [[0.25, 0.04]]))[0]
    assert e[3] == pytest.approx(5.0) and e[4] == pytest.approx(2.4)
    assert np.array_equal(e[[0, 1, 2, 5, 6]], np.array(box[0])[[0, 1, 2, 5, 6]])
    capped = expand_boxes(DetectionSet(box, [0.5], [[100.0, 0.0]]), PackerConfig(expand_cap=2.0))[0]
    assert capped[3] == pytest.approx(6.0)


def test_weights_examples():
    cfg = PackerConfig()
    pts = np.array([[0, 0, 0.8, 0], [50, 50, 0.8, 0]])
    assert np.all(weight_points(pts, np.zeros((0, 7)), DetectionSet.empty(), cfg) == cfg.delta)
    one = DetectionSet([[0, 0, 0.8, 4, 2, 1.6, 0]], [0.5], [[0.1, 0.2]])
    w = weight_points(pts, one.boxes, one, cfg)
    assert w[0] == pytest.approx(0.3) and w[1] == cfg.delta
    two = DetectionSet([[0, 0, 0.8, 4, 2, 1.6, 0], [0.5, 0, 0.8, 4, 2, 1.6, 0]], [0.5, 0.4],
                       [[0.05, 0.05], [0.2, 0.2]])
    assert weight_points(pts, two.boxes, two, cfg)[0] == pytest.approx(0.4)
    tiny = DetectionSet([[0, 0, 0.8, 4, 2, 1.6, 0]], [0.5], [[0.0, 0.0]])
    assert weight_points(pts, tiny.boxes, tiny, cfg)[0] == cfg.delta


def test_weights_against_loop_oracle():
    rng = np.random.default_rng(3)
    dets = make_dets(rng, 8, spread=8)
    pts = np.column_stack([rng.uniform(-12, 12, (400, 2)), rng.uniform(0, 1.6, 400), rng.random(400)])
    exp = expand_boxes(dets)
    w = weight_points(pts, exp, dets)
    for i, p in enumerate(pts):
        best = None
        for k, b in enumerate(exp):
            c, s = math.cos(b[6]), math.sin(b[6])
            dx, dy = p[0] - b[0], p[1] - b[1]
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            if abs(lx) <= b[3] / 2 and abs(ly) <= b[4] / 2 and abs(p[2] - b[2]) <= b[5] / 2:
                u = dets.variances[k].sum()
                best = u if best is None else max(best, u)
        assert w[i] == pytest.approx(1e-3 if best is None else max(best, 1e-3))


# --- sampling -------------------------------------------------------------


def test_sample_whole_cloud_when_budget_exceeds():
    pts = np.arange(20.0).reshape(5, 4)
    got = weighted_sample(pts, np.ones(5), 9, np.random.default_rng(0))
    assert sorted(map(tuple, got)) == sorted(map(tuple, pts))


def test_sample_uniform_monte_carlo():
    rng = np.random.default_rng(11)
    hits = np.bincount([weighted_sample_indices(np.ones(4), 1, rng)[0] for _ in range(10_000)], minlength=4)
    assert np.all(np.abs(hits / 10_000 - 0.25) <= 0.02)


def test_sample_heavy_point_dominates():
    rng = np.random.default_rng(12)
    w = np.array([1.0, 1e-3, 1e-3, 1e-3])
    hits = sum(weighted_sample_indices(w, 1, rng)[0] == 0 for _ in range(10_000))
    assert hits / 10_000 >= 0.99


def test_sample_bias_two_points():
    rng = np.random.default_rng(13)
    w = np.array([0.6, 0.4])
    f = np.mean([weighted_sample_indices(w, 1, rng)[0] == 0 for _ in range(10_000)])
    assert f - (1 - f) > 3 * math.sqrt(0.25 / 10_000) * 2


def test_sample_without_replacement_and_exact_size():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = int(rng.integers(0, 50))
        k = int(rng.integers(0, 60))
        idx = weighted_sample_indices(rng.random(p) + 1e-3, k, rng)
        assert len(idx) == min(k, p) and len(set(idx.tolist())) == len(idx)


def test_sample_consumes_same_draws_for_any_size():
    a = np.random.default_rng(5)
    b = np.random.default_rng(5)
    weighted_sample_indices(np.ones(30), 3, a)
    weighted_sample_indices(np.ones(30), 29, b)
    assert a.random() == b.random()


def test_sample_rejects_nonpositive_weights():
    with pytest.raises(ValueError):
        weighted_sample_indices(np.array([1.0, 0.0]), 1, np.random.default_rng(0))


# --- hybrid packing -------------------------------------------------------


def test_pack_hybrid_examples():
    rng = np.random.default_rng(0)
    dets = make_dets(rng, 6)
    cloud = rng.normal(size=(500, 4))
    k = len(dets)
    assert pack_hybrid(dets, cloud, 0, None, np.random.default_rng(1)).payload_floats == 0
    m = pack_hybrid(dets, cloud, 7 * k, None, np.random.default_rng(1))
    assert (m.n_boxes, m.n_points) == (k, 0)
    m = pack_hybrid(dets, cloud, 7 * k + 40, None, np.random.default_rng(1))
    assert (m.n_boxes, m.n_points) == (k, 10)


def test_pack_hybrid_point_only_uniform_spends_all_on_points():
    rng = np.random.default_rng(0)
    dets = make_dets(rng, 6)
    cloud = rng.normal(size=(500, 4))
    m = pack_hybrid(dets, cloud, 400, None, np.random.default_rng(1), send_boxes=False, weighting="uniform")
    assert (m.n_boxes, m.n_points) == (0, 100)


def test_pack_hybrid_unknown_weighting():
    with pytest.raises(ValueError):
        pack_hybrid(DetectionSet.empty(), np.zeros((3, 4)), 40, None, np.random.default_rng(0), weighting="x")


@given(st.integers(0, 2**32 - 1), st.integers(0, 4000), st.integers(0, 40), st.integers(0, 800))
def test_budget_compliance_property(seed, budget, k, p):
    rng = np.random.default_rng(seed)
    msg = pack_hybrid(make_dets(rng, k), rng.normal(size=(p, 4)) * 20, budget, None, rng)
    assert msg.payload_bytes <= 4 * budget
    frame = serialize(msg)
    assert len(frame) - HEADER_BYTES == msg.payload_bytes


# --- wire format ----------------------------------------------------------


def test_payload_sizes():
    assert BOX_BYTES == 28 and POINT_BYTES == 16
    assert HybridMessage(boxes=np.ones((1, 7))).payload_bytes == 28
    assert HybridMessage(points=np.ones((1, 4))).payload_bytes == 16


def test_empty_frame_is_header_only():
    frame = serialize(HybridMessage())
    assert len(frame) == HEADER_BYTES == struct.calcsize("<4sH3fII")
    assert deserialize(frame) == HybridMessage()


@pytest.mark.parametrize("name", ["empty", "one_box", "one_point", "mixed"])
def test_golden_fixtures(name):
    case = json.loads((FIXTURES / f"wire_{name}.json").read_text())
    expected = (FIXTURES / f"wire_{name}.bin").read_bytes()
    msg = HybridMessage(np.array(case["boxes"]).reshape(-1, 7), np.array(case["points"]).reshape(-1, 4),
                        PlanarPose(*case["pose"]))
    assert serialize(msg) == expected
    assert deserialize(expected) == msg
    assert serialize(deserialize(expected)) == expected


finite32 = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32)


@given(st.lists(st.lists(finite32, min_size=7, max_size=7), max_size=5),
       st.lists(st.lists(finite32, min_size=4, max_size=4), max_size=8),
       finite32, finite32, st.floats(-10, 10, width=32))
def test_roundtrip_property(boxes, points, x, y, yaw):
    msg = HybridMessage(np.array(boxes).reshape(-1, 7), np.array(points).reshape(-1, 4), PlanarPose(x, y, yaw))
    back = deserialize(serialize(msg))
    assert back == msg
    assert serialize(back) == serialize(msg)


def test_pose_quantization_is_stable():
    for yaw in (math.pi, -math.pi, 3.14159274, -3.14159274, 0.1):
        q = quantize_pose(PlanarPose(0.1, 0.2, yaw))
        assert quantize_pose(q) == q
        assert deserialize(serialize(HybridMessage(sender_pose=q))).sender_pose == q


def _frame(**kw):
    base = dict(magic=b"HYC1", version=1, pose=(0.0, 0.0, 0.0), nb=1, npt=1)
    base.update(kw)
    head = struct.pack("<4sH3fII", base["magic"], base["version"], *base["pose"], base["nb"], base["npt"])
    return head + b"\0" * (28 * 1 + 16 * 1)


@pytest.mark.parametrize("data,fragment", [
    (b"HYC", "truncated"),
    (_frame(magic=b"XXXX"), "magic"),
    (_frame(version=2), "version"),
    (_frame(nb=2), "need"),
    (_frame()[:-1], "need"),
    (_frame() + b"\0", "need"),
    (_frame(pose=(float("nan"), 0.0, 0.0)), "finite"),
])
def test_malformed_frames(data, fragment):
    with pytest.raises(MalformedFrameError, match=fragment):
        deserialize(data)
