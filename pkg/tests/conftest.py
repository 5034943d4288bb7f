import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon

from hycomm.geometry import box_corners_bev

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
extent = st.floats(0.2, 8.0, allow_nan=False, allow_infinity=False)
angle = st.floats(-np.pi, np.pi, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw):
    return np.array([draw(coord), draw(coord), 0.8, draw(extent), draw(extent), 1.6, draw(angle)])


@st.composite
def near_boxes(draw):
    """Pairs of boxes close enough to overlap often."""
    a = draw(boxes())
    b = a.copy()
    b[0] += draw(st.floats(-4, 4))
    b[1] += draw(st.floats(-4, 4))
    b[3] = draw(extent)
    b[4] = draw(extent)
    b[6] = draw(angle)
    return a, b


def shapely_footprint(box):
    return Polygon(box_corners_bev(np.asarray(box))[0])


def shapely_iou(a, b):
    pa, pb = shapely_footprint(a), shapely_footprint(b)
    inter = pa.intersection(pb).area
    return inter / (pa.area + pb.area - inter)


def random_box_array(rng, k, spread=10.0):
    return np.column_stack([
        rng.uniform(-spread, spread, k),
        rng.uniform(-spread, spread, k),
        np.full(k, 0.8),
        rng.uniform(1.0, 6.0, k),
        rng.uniform(1.0, 3.0, k),
        np.full(k, 1.6),
        rng.uniform(-np.pi, np.pi, k),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ---------------------------------------------------

_ACCEPTANCE: dict[str, str] = {}
_NOTES: dict[str, list[str]] = {}


@pytest.fixture
def note(request):
    """Record a measured value shown next to the criterion's summary line."""
    marker = request.node.get_closest_marker("acceptance")
    label = marker.args[0] if marker else request.node.name
    return lambda text: _NOTES.setdefault(label, []).append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): an acceptance criterion, reported in the summary")


def pytest_runtest_logreport(report):
    label = getattr(report, "acceptance_label", None)
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[label] = "PASS" if report.outcome == "passed" else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance_label = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[label]}  {label}")
        for text in _NOTES.get(label, []):
            terminalreporter.write_line(f"        {text}")
