import math

import numpy as np
import pytest

from nsgbsm.geometry import ArrayGeometry, MotionProfile, SPEED_OF_LIGHT
from nsgbsm.synthesis import ClusterState, PowerParams, Scene

FC = 2.6e9
HALF_WAVE = SPEED_OF_LIGHT / FC / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_cluster(scat_a, scat_z=None, cid=0, birth=0.0, m_t=1, m_r=1, phases=None,
                 gamma=None, tau_link=0.0, motion_a=None, motion_z=None, **kw):
    """Cluster with unit field and default polarization for hand-built scenes."""
    scat_a = np.atleast_2d(np.asarray(scat_a, dtype=float))
    scat_z = scat_a.copy() if scat_z is None else np.atleast_2d(np.asarray(scat_z, float))
    m = scat_a.shape[0]
    return ClusterState(
        cid, birth, scat_a, scat_z, tau_link, 0.0, np.ones((m_r, m_t)),
        np.full(m, 1e6), np.full((m, 4), 2 * math.pi) if phases is None else phases,
        np.zeros(m) if gamma is None else np.asarray(gamma, float),
        motion_a or MotionProfile(), motion_z or MotionProfile(), **kw)


def make_scene(m_t=1, m_r=1, distance=100.0, tilt=math.pi / 6, power=None, **kw):
    return Scene(ArrayGeometry(m_t, HALF_WAVE, tilt, 0.0),
                 ArrayGeometry(m_r, HALF_WAVE, 0.0, 0.0, (distance, 0.0, 0.0)),
                 FC, power=power or PowerParams(sigma_n_db=0.0, cluster_shadowing_std_db=0.0),
                 **kw)


# --------------------------------------------------------------------------
# Acceptance summary: one PASS/FAIL line per criterion.

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    entry = _criteria.setdefault(num, {"title": title, "ok": True, "failed": []})
    if rep.failed:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        line = f"{'PASS' if e['ok'] else 'FAIL'} criterion {num:>2}: {e['title']}"
        if e["failed"]:
            line += f"  (failed: {', '.join(e['failed'])})"
        terminalreporter.write_line(line)
