import math

import numpy as np
import pytest

from shaperank.pointcloud import PointCloud


def ball_points(rng, n, radius=1.0):
    """n points uniform in a ball."""
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return g * r[:, None]


def py_nn_distances(p, q):
    """Nested-loop nearest-neighbour distances in pure Python."""
    out = []
    for a in np.asarray(p).tolist():
        out.append(min(math.dist(a, b) for b in np.asarray(q).tolist()))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cloud_factory(rng):
    def make(n, cid="c", radius=1.0):
        return PointCloud(ball_points(rng, n, radius), cid)

    return make


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion
# ---------------------------------------------------------------------------

ACCEPTANCE_DETAILS = {}
_ACCEPTANCE_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    detail = ACCEPTANCE_DETAILS.get(number, "")
    _ACCEPTANCE_LINES.append((number, f"criterion {number:>2d} {status}  {title}" + (f"  [{detail}]" if detail else "")))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
