import math
from dataclasses import replace

import numpy as np
import pytest

from multistefan.bulk_mesh import build_adaptive_mesh
from multistefan.diagnostics import (
    CircleOracle,
    ErrorTracker,
    discrete_radii,
    error_gamma,
    error_w,
    radius_extrema,
)
from multistefan.errors import ConfigError
from multistefan.evolution import RunConfig, initial_state, run
from multistefan.io import (
    SnapshotData,
    cluster_to_dict,
    dump_cluster,
    load_cluster,
    load_config,
    parse_config,
    read_snapshot,
    read_timeseries,
    write_snapshot,
    write_timeseries,
)
from multistefan.scenarios import double_bubble, two_circles

from conftest import theta_cluster

BETA, RADII = (-1.0, 0.0, 1.0), (2.0, 3.0)


@pytest.fixture(scope="module")
def oracle():
    return CircleOracle.two(BETA, RADII, 0.1)


def exact_state(eps=0.0):
    cm = two_circles(BETA, RADII, K=64).cluster
    if eps:
        cm = cm.moved(cm.positions * (1 + eps))
    return initial_state(cm)


def test_gamma_error_of_exact_circles(oracle):
    assert error_gamma([exact_state()], oracle) <= 1e-14
    # scaling by 1 + eps moves the outer circle by 3 eps
    assert error_gamma([exact_state(1e-3)], oracle) == pytest.approx(3e-3, rel=1e-10)


def test_w_error_of_shifted_exact_potential(oracle):
    state = exact_state()
    bulk = build_adaptive_mesh(4.0, 4, 32, state.cluster)
    exact = oracle.w(bulk.vertices, 0.0)
    assert error_w([replace(state, bulk=bulk, W=exact)], oracle) == 0.0
    assert error_w([replace(state, bulk=bulk, W=exact + 0.25)], oracle) == pytest.approx(0.25)
    # states without a potential do not contribute
    assert error_w([state], oracle) == 0.0


def test_tracker_report(oracle):
    tracker = ErrorTracker(oracle)
    traj = run(RunConfig(tau=2e-2, T=0.1, N_f=64), two_circles(BETA, RADII, K=64).cluster, observer=tracker)
    rep = tracker.report(8.0 / 64)
    assert rep.v_delta == pytest.approx(abs(traj.final.content - traj.initial.content), abs=0)
    assert rep.error_gamma == pytest.approx(error_gamma(traj, oracle))
    assert rep.K_gamma == 128 and rep.K_omega == traj.final.bulk.num_vertices
    assert set(rep.as_dict()) == set(rep.COLUMNS)


def test_discrete_radii_and_extrema():
    cm = two_circles(BETA, RADII, K=32).cluster
    assert np.allclose(discrete_radii(cm), RADII)
    assert np.allclose(radius_extrema(cm), [[2.0, 2.0], [3.0, 3.0]])


def test_empty_timeseries_has_header_only(tmp_path):
    p = tmp_path / "ts.csv"
    write_timeseries([], p, num_phases=3, num_curves=2)
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "t,energy,content,area_0,area_1,area_2,grad_norm2,rmin_0,rmax_0,rmin_1,rmax_1"
    assert all(v.size == 0 for v in read_timeseries(p).values())


def test_timeseries_initial_row(tmp_path):
    state = initial_state(double_bubble(spacing=0.2).cluster)
    p = tmp_path / "ts.csv"
    write_timeseries([state], p)
    data = read_timeseries(p)
    assert data["content"][0] == state.content
    assert data["energy"][0] == state.energy
    assert math.isnan(data["grad_norm2"][0])
    assert data["area_0"][0] + data["area_1"][0] + data["area_2"][0] == pytest.approx(64.0)


def test_snapshot_round_trip_is_byte_identical(tmp_path):
    traj = run(RunConfig(tau=1e-2, T=0.02, N_f=32), theta_cluster(jitter=0.02))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_snapshot(traj.final, a)
    data = read_snapshot(a)
    write_snapshot(data, b)
    assert a.read_bytes() == b.read_bytes()
    assert data.t == traj.final.t and data.step == 2
    assert np.array_equal(data.W, traj.final.W)
    assert np.array_equal(np.vstack(data.curves), np.vstack(traj.final.cluster.curves))


def test_snapshot_without_fields(tmp_path):
    state = initial_state(theta_cluster())
    p = tmp_path / "s.csv"
    write_snapshot(state, p)
    data = read_snapshot(p)
    assert data.W is None and all(k is None for k in data.kappa)
    assert isinstance(SnapshotData.from_state(state), SnapshotData)


def test_cluster_round_trip(tmp_path):
    cm = double_bubble(spacing=0.2).cluster
    p = tmp_path / "c.yaml"
    dump_cluster(cm, p)
    back = load_cluster(p)
    assert np.array_equal(back.positions, cm.positions)
    assert back.topology.orientation == cm.topology.orientation
    assert back.topology.junctions == cm.topology.junctions
    assert cluster_to_dict(back) == cluster_to_dict(cm)


def test_config_levels_and_overrides():
    spec = parse_config("scenario: two_circles\nlevel: 1\nrun:\n  T: 0.5\n  tau: 0.002\n")
    assert spec.config.N_f == 256 and spec.config.N_c == 4 and spec.config.tau == 0.002
    assert spec.cluster.num_vertices == 2 * 256


def test_shipped_configs_parse():
    from pathlib import Path

    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        spec = load_config(path)
        assert spec.cluster.num_curves > 0


@pytest.mark.parametrize(
    "text, line",
    [
        ("scenario: two_circles\nrun:\n  tau: 0.01\n  speed: 3\n", 4),
        ("scenario: nowhere\n", 1),
        ("scenario: two_circles\nrun:\n  tau: -1.0\n", 3),
        ("scenario: two_circles\nrun: [1, 2\n", None),
        (
            "cluster:\n  beta: [-0.5, 0.5]\n  exterior: 1\n  curves:\n"
            "    - tension: 1.0\n      orientation: [0, 1]\n      circle: {radius: 1.0, K: 16, clockwise: true}\n",
            1,
        ),
        ("scenario: custom\n", None),
    ],
)
def test_config_errors_report_lines(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    if line is not None:
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}:")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
