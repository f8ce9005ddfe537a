import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fanet_sybil.core import RegionBounds, Role, UavState, Vec3
from fanet_sybil.sensing import Domain, NeighborTable

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def region():
    return RegionBounds(600.0, 600.0, 300.0)


def make_node(i, pos, vel=(0.0, 0.0, 0.0), sybils=()):
    role = Role.MALICIOUS if sybils else Role.LEGITIMATE
    return UavState(i, Vec3(*map(float, pos)), Vec3(*map(float, vel)), role, tuple(sybils))


def make_table(domain, means, variances, ranging=None, truth=None, ids=None):
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    k = means.shape[0]
    variances = np.broadcast_to(np.asarray(variances, dtype=float), means.shape).copy()
    ids = tuple(range(k)) if ids is None else tuple(ids)
    truth = ids if truth is None else tuple(truth)
    r = None if ranging is None else np.asarray(ranging, dtype=float)
    return NeighborTable(domain, ids, means, variances, r, truth)


def ad_table(means, variances=(1.0, 0.01), **kw):
    return make_table(Domain.AD, means, variances, **kw)


def vd_table(means, variances=(0.09, 0.09), **kw):
    return make_table(Domain.VD, means, variances, **kw)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
