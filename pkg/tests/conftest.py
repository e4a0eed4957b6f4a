import numpy as np
import pytest

from degsde.model import Segment, make_example_4_1, make_example_4_2, make_ou
from degsde.simulate import SimGrid


@pytest.fixture(scope="session")
def ex41():
    return make_example_4_1(eps=1.0)


@pytest.fixture(scope="session")
def ex42():
    return make_example_4_2()


@pytest.fixture(scope="session")
def ou():
    return make_ou()


def const_seg(r0, n_hist, vec):
    return Segment.constant(r0, n_hist, np.asarray(vec, dtype=float))


def grid_for(T=1.5, r0=0.5, dt=0.01):
    return SimGrid.from_times(T, r0, dt)


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion, aggregated over its tests

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion checked by this test")


@pytest.fixture
def detail(request):
    """Attach a short measurement string to the acceptance line of this test."""
    def add(text):
        request.node.user_properties.append(("detail", text))
        print(text)
    return add


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    cid, title = mark.args
    ok = call.excinfo is None
    entry = _CRITERIA.setdefault(cid, {"title": title, "ok": True, "details": []})
    entry["ok"] &= ok
    for key, value in item.user_properties:
        if key == "detail":
            entry["details"].append(value)
    if not ok:
        entry["details"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid in sorted(_CRITERIA):
        e = _CRITERIA[cid]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{status}  {cid:>2}. {e['title']}: {'; '.join(e['details'])}")
