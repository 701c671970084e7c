import warnings

import numpy as np
import pytest

from multistefan.cluster import END, START, ClusterTopology, Junction, build_cluster
from multistefan.scenarios import circle_chain


def make_topology(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ClusterTopology(**kw)


def theta_cluster(jitter=0.0, rng=None, n=(5, 6, 4), beta=(-1.0, 0.0, 1.0), tension=(1.0, 1.0, 1.0)):
    """Three open curves between (0, 1) and (0, -1): right arc, left arc, wall."""
    rng = rng or np.random.default_rng(0)
    top, bottom = np.array([0.0, 1.0]), np.array([0.0, -1.0])

    def arc(sign, k):
        t = np.linspace(np.pi / 2, -np.pi / 2, k) if sign > 0 else np.linspace(np.pi / 2, 3 * np.pi / 2, k)
        c = np.stack([1.2 * np.cos(t), np.sin(t)], axis=1)
        c[1:-1] += jitter * rng.normal(size=(k - 2, 2))
        return c

    wall = np.stack([np.zeros(n[2]), np.linspace(1.0, -1.0, n[2])], axis=1)
    wall[1:-1, 0] += jitter * rng.normal(size=n[2] - 2)
    chains = [arc(1, n[0]), arc(-1, n[1]), wall]
    for c in chains:
        c[0], c[-1] = top, bottom
    topo = make_topology(
        beta=beta,
        tension=tension,
        orientation=((2, 0), (1, 2), (0, 1)),
        junctions=(Junction((0, 1, 2), (START,) * 3), Junction((0, 1, 2), (END,) * 3)),
        exterior=2,
    )
    return build_cluster(topo, chains)


def circle_cluster(R=1.0, K=16, beta=(-0.5, 0.5), clockwise=False, center=(0.0, 0.0)):
    orient = ((1, 0),) if clockwise else ((0, 1),)
    topo = make_topology(beta=beta, tension=(1.0,), orientation=orient, exterior=1)
    return build_cluster(topo, [circle_chain(R, K, center, clockwise)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
