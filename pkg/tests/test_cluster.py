import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multistefan.cluster import (
    END,
    START,
    ClusterTopology,
    Junction,
    build_cluster,
    energy,
    intermediate_vertex_normals,
    junction_project,
    lumped_inner_product,
    phase_areas,
    segment_normal,
    segment_normals,
    signed_curve_areas,
    total_content,
    vertex_normals,
    young_angles,
    young_equilibrium_angles,
)
from multistefan.errors import GeometryError, TopologyError
from multistefan.scenarios import circle_chain, double_bubble, two_circles

from conftest import circle_cluster, make_topology, theta_cluster


# ---------------------------------------------------------------- topology


def test_topology_rejects_equal_beta():
    with pytest.raises(TopologyError):
        make_topology(beta=(0.0, 0.0), tension=(1.0,), orientation=((0, 1),))


def test_topology_rejects_inconsistent_orientation():
    with pytest.raises(TopologyError, match="inconsistent"):
        make_topology(beta=(-1.0, 0.0, 1.0), tension=(1.0, 1.0), orientation=((0, 1), (1, 0)))


def test_topology_rejects_dangling_end():
    with pytest.raises(TopologyError, match="dangling"):
        make_topology(
            beta=(-1.0, 0.0, 1.0),
            tension=(1.0, 1.0, 1.0, 1.0),
            orientation=((2, 0), (1, 2), (0, 1), (2, 0)),
            junctions=(Junction((0, 1, 3), (START, START, END)),),
        )


def test_topology_rejects_nonpositive_tension():
    with pytest.raises(TopologyError):
        make_topology(beta=(-1.0, 1.0), tension=(0.0,), orientation=((0, 1),))


def test_topology_warns_when_beta_not_normalised():
    with pytest.warns(UserWarning, match="sum to zero"):
        ClusterTopology(beta=(0.0, 1.0), tension=(1.0,), orientation=((0, 1),))


def test_jumps_follow_orientation():
    topo = two_circles().topology
    # curve 0: (p, n) = (0, 1), curve 1: (2, 1)
    assert np.allclose(topo.jumps, [-1.0, 1.0])


def test_junction_sorts_curves():
    j = Junction((2, 0, 1), (END, START, START))
    assert j.curves == (0, 1, 2)
    assert j.ends == (START, START, END)


# ---------------------------------------------------------------- build_cluster


def test_square_mesh_has_four_segments():
    cm = circle_cluster(K=4)
    assert cm.num_vertices == 4
    assert len(cm.segments) == 4
    assert cm.closed == (True,)


def test_double_bubble_welds_two_groups_of_three():
    cm = double_bubble().cluster
    groups = cm.junction_groups
    assert groups.shape == (2, 3)
    for g in groups:
        pts = cm.positions[g]
        assert np.array_equal(pts, np.repeat(pts[:1], 3, axis=0))
    assert cm.num_masters == cm.num_vertices - 4


def test_mismatched_junction_raises():
    cm = theta_cluster()
    chains = [np.array(c) for c in cm.curves]
    chains[2][0] += [0.1, 0.0]
    with pytest.raises(GeometryError):
        build_cluster(cm.topology, chains)


def test_zero_length_segment_raises():
    topo = make_topology(beta=(-1.0, 1.0), tension=(1.0,), orientation=((0, 1),))
    with pytest.raises(GeometryError):
        build_cluster(topo, [[(0, 0), (1, 0), (1, 0), (0, 1)]])


def test_welding_averages_small_mismatch():
    cm = theta_cluster()
    chains = [np.array(c) for c in cm.curves]
    chains[2][0] += [3e-13, 0.0]
    welded = build_cluster(cm.topology, chains)
    assert welded.curves[0][0][0] == welded.curves[2][0][0] == pytest.approx(1e-13, abs=1e-15)


# ---------------------------------------------------------------- normals


def test_segment_normal_axis_aligned():
    topo = make_topology(beta=(-1.0, 1.0), tension=(1.0,), orientation=((0, 1),))
    cm = build_cluster(topo, [[(0, 0), (1, 0), (1, 2), (0, 2)]])
    assert np.allclose(segment_normal(cm, 0, 0), [0, 1])
    # segment (1,2) -> (0,2) has tangent (-1,0), normal (0,-1); (0,2)->(0,0) gives (1,0)
    assert np.allclose(segment_normal(cm, 0, 3), [1, 0])


def test_segment_normal_vertical():
    topo = make_topology(beta=(-1.0, 1.0), tension=(1.0,), orientation=((0, 1),))
    cm = build_cluster(topo, [[(0, 0), (0, 2), (-1, 1)]])
    assert np.allclose(segment_normal(cm, 0, 0), [-1, 0])


@pytest.mark.parametrize("clockwise,sign", [(True, 1), (False, -1)])
def test_circle_normals_orientation(clockwise, sign):
    # with v^perp = (-v2, v1) clockwise chains have outward normals
    cm = circle_cluster(K=64, clockwise=clockwise)
    s = cm.segments
    mid = 0.5 * (cm.positions[s[:, 0]] + cm.positions[s[:, 1]])
    radial = np.sum(mid * segment_normals(cm), axis=1)
    assert np.all(sign * radial > 0)


def test_regular_square_vertex_normals():
    cm = circle_cluster(K=4)
    omega = vertex_normals(cm).values
    assert np.allclose(np.hypot(*omega.T), math.cos(math.pi / 4))
    # radial (inward for a counterclockwise chain)
    assert np.allclose(np.abs(np.sum(omega * cm.positions, axis=1)), np.cos(np.pi / 4))


@given(st.integers(3, 64))
def test_regular_polygon_vertex_normal_length(K):
    omega = vertex_normals(circle_cluster(K=K)).values
    assert np.allclose(np.hypot(*omega.T), math.cos(math.pi / K), atol=1e-12)


def test_straight_interior_vertex_normal_is_unit():
    cm = theta_cluster(n=(5, 6, 7))
    omega = vertex_normals(cm).values
    wall = cm.curve_vertices(2)
    assert np.allclose(omega[wall[1:-1]], [1.0, 0.0])


def test_junction_vertex_normal_is_one_sided():
    cm = theta_cluster()
    omega = vertex_normals(cm).values
    nu = segment_normals(cm)
    for i in range(3):
        first_vertex = cm.curve_vertices(i)[0]
        first_segment = cm.curve_segments(i)[0]
        assert np.allclose(omega[first_vertex], nu[first_segment])


def test_vertex_normals_bounded(rng):
    cm = theta_cluster(jitter=0.05, rng=rng)
    assert np.hypot(*vertex_normals(cm).values.T).max() <= 1 + 1e-12


def test_lumped_projection_duality(rng):
    cm = theta_cluster(jitter=0.05, rng=rng)
    omega = vertex_normals(cm).values
    nu = segment_normals(cm)
    for i in range(cm.num_curves):
        v = cm.curve_vertices(i)
        xi = rng.normal(size=(len(v), 2))
        lhs = lumped_inner_product(omega[v], xi, cm, i)
        segs = cm.curve_segments(i)
        local = cm.segments[segs] - cm.offsets[i]
        # exact integral of a constant normal against a linear field
        rhs = np.sum(cm.segment_lengths[segs] * np.sum(nu[segs] * 0.5 * (xi[local[:, 0]] + xi[local[:, 1]]), axis=1))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_intermediate_normal_identity_displacement():
    cm = theta_cluster(jitter=0.03)
    a = vertex_normals(cm)
    b = intermediate_vertex_normals(cm, cm.positions)
    assert b.kind == "intermediate"
    assert np.array_equal(a.values, b.values)


def _segment_triangle():
    topo = make_topology(beta=(-1.0, 1.0), tension=(1.0,), orientation=((0, 1),))
    return build_cluster(topo, [[(0, 0), (1, 0), (0.5, -1.0)]])


def test_intermediate_normal_translation():
    cm = _segment_triangle()
    new = cm.positions + [0.0, 1.0]
    nbar = intermediate_vertex_normals(cm, new).segment_normals
    assert np.allclose(nbar[0], [0.0, 1.0])


def test_intermediate_normal_rotation():
    cm = _segment_triangle()
    new = cm.positions.copy()
    new[1] = [0.0, 1.0]
    nbar = intermediate_vertex_normals(cm, new).segment_normals
    assert np.allclose(nbar[0], [-0.5, 0.5])


def test_intermediate_normal_shape_mismatch():
    cm = _segment_triangle()
    with pytest.raises(GeometryError):
        intermediate_vertex_normals(cm, cm.positions[:2])


# ---------------------------------------------------------------- inner products


def test_lumped_length_of_square():
    cm = circle_cluster(K=4)
    assert lumped_inner_product(1.0, 1.0, cm, 0) == pytest.approx(4 * math.sqrt(2))


def test_lumped_vs_true_product_on_unit_segment():
    topo = make_topology(beta=(-1.0, 1.0), tension=(1.0,), orientation=((0, 1),))
    cm = build_cluster(topo, [[(0, 0), (1, 0), (0.5, 1.0)]])
    x = cm.curves[0][:, 0]
    limits = np.zeros((3, 2))
    limits[0] = [x[0], x[1]]
    # only the first segment carries the product; exact value would be 1/3
    assert lumped_inner_product(limits, limits, cm, 0, segment_limits=True) == pytest.approx(0.5)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_trapezoid_exact_for_linear(seed):
    rng = np.random.default_rng(seed)
    cm = theta_cluster(jitter=0.05, rng=rng)
    a, b, c = rng.normal(size=3)
    for i in range(cm.num_curves):
        q = cm.curves[i]
        g = a + b * q[:, 0] + c * q[:, 1]
        exact = 0.0
        for j in range(len(q) - 1):
            L = np.hypot(*(q[j + 1] - q[j]))
            exact += L * 0.5 * (g[j] + g[j + 1])
        assert lumped_inner_product(1.0, g, cm, i) == pytest.approx(exact, rel=1e-12, abs=1e-14)


# ---------------------------------------------------------------- energy, areas, content


def test_energy_of_polygon():
    cm = circle_cluster(K=256)
    assert energy(cm) == pytest.approx(2 * 256 * math.sin(math.pi / 256), rel=1e-13)
    assert energy(cm) == pytest.approx(6.283027602, abs=1e-9)


def test_energy_weighted_by_tension():
    cm = theta_cluster()
    L = [cm.curve_length(i) for i in range(3)]
    topo = cm.topology.replace(tension=(1.75, 1.0, 2.0))
    assert energy(cm, topo) == pytest.approx(1.75 * L[0] + L[1] + 2 * L[2])


def test_energy_two_curves():
    topo = make_topology(beta=(-1.0, 0.0, 1.0), tension=(1.75, 1.0), orientation=((0, 1), (2, 1)))
    # square of side 0.5 (length 2) and of side 0.75 (length 3)
    sq = lambda s: np.array([(0, 0), (s, 0), (s, s), (0, s)])
    cm = build_cluster(topo, [sq(0.5), sq(0.75)[::-1]])
    assert energy(cm) == pytest.approx(6.5)


def test_single_circle_area():
    cm = circle_cluster(K=256)
    areas = phase_areas(cm, box_half_width=4.0)
    assert areas[0] == pytest.approx(128 * math.sin(2 * math.pi / 256), rel=1e-13)
    assert areas[0] == pytest.approx(3.141277250, abs=1e-9)
    assert areas[1] == pytest.approx(64.0 - areas[0])


def test_annulus_area():
    cm = two_circles(radii=(1.0, 2.0), K=64).cluster
    poly = lambda R: 32 * R * R * math.sin(2 * math.pi / 64)
    areas = phase_areas(cm)
    assert areas[0] == pytest.approx(poly(1.0))
    assert areas[1] == pytest.approx(poly(2.0) - poly(1.0))
    assert areas.sum() == pytest.approx(64.0, rel=1e-12)


def test_double_bubble_areas_partition_box():
    cm = double_bubble().cluster
    areas = phase_areas(cm)
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(64.0, rel=1e-12)
    assert areas[0] == pytest.approx(areas[1], rel=1e-3)


def test_signed_area_ccw_positive():
    assert signed_curve_areas(circle_cluster(K=32))[0] > 0
    assert signed_curve_areas(circle_cluster(K=32, clockwise=True))[0] < 0


def test_total_content():
    areas = (math.pi, 3 * math.pi, 64 - 4 * math.pi)
    assert total_content(areas, (-1, 0, 1)) == pytest.approx(64 - 5 * math.pi)
    assert total_content(areas, (0, 0, 0)) == 0.0


def test_double_bubble_content_close_to_reported():
    # lobes of area about 3.139 each with beta = (-1, 0, 1)
    sc = double_bubble()
    v0 = total_content(phase_areas(sc.cluster), sc.topology.beta)
    assert v0 == pytest.approx(54.6, abs=0.15)


def test_empty_cluster_energy():
    cm = circle_cluster(K=8)
    from multistefan.surgery import remove_closed_curve

    empty, _ = remove_closed_curve(cm, 0)
    assert energy(empty) == 0.0


# ---------------------------------------------------------------- junction projection


def test_projection_fixed_point():
    cm = theta_cluster()
    f = np.tile([1.0, 2.0], (cm.num_vertices, 1))
    assert np.array_equal(junction_project(cm, f), f)


def test_projection_mean():
    cm = theta_cluster()
    f = np.zeros((cm.num_vertices, 2))
    g = cm.junction_groups[0]
    f[g] = [(1, 0), (0, 1), (-1, -1)]
    assert np.allclose(junction_project(cm, f)[g], 0.0)


@given(st.integers(0, 10_000))
def test_projection_idempotent_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    cm = theta_cluster()
    f, g = rng.normal(size=(2, cm.num_vertices, 2))
    Pf = junction_project(cm, f)
    assert np.allclose(junction_project(cm, Pf), Pf, atol=1e-15)
    assert np.sum(Pf * g) == pytest.approx(np.sum(f * junction_project(cm, g)), abs=1e-12)


# ---------------------------------------------------------------- junction angles


def _star(directions_deg):
    """Theta-shaped cluster whose first junction has the given first-segment directions."""
    cm = theta_cluster()
    chains = [np.array(c) for c in cm.curves]
    top = chains[0][0]
    for c, deg in zip(chains, directions_deg):
        a = math.radians(deg)
        c[1] = top + 0.1 * np.array([math.cos(a), math.sin(a)])
    return build_cluster(cm.topology, chains)


def test_young_angles_symmetric():
    cm = _star((-30.0, 210.0, 90.0))
    assert np.allclose(young_angles(cm, 0), 2 * math.pi / 3)


def test_young_angles_t_junction():
    cm = _star((0.0, 180.0, 90.0))
    ang = young_angles(cm, 0)
    assert np.allclose(sorted(ang), [math.pi / 2, math.pi / 2, math.pi])
    # sector opposite the wall (curve 2) is the straight angle
    assert ang[2] == pytest.approx(math.pi)


def test_young_angles_sum(rng):
    cm = theta_cluster(jitter=0.05, rng=rng)
    for k in range(2):
        assert young_angles(cm, k).sum() == pytest.approx(2 * math.pi, abs=1e-9)


def test_equilibrium_angles():
    assert np.allclose(young_equilibrium_angles((1, 1, 1)), 2 * math.pi / 3)
    ang = young_equilibrium_angles((1.75, 1, 1))
    assert ang.sum() == pytest.approx(2 * math.pi)
    # force balance: sin(angle_j) / sigma_j equal for all j
    ratios = np.sin(ang) / np.array([1.75, 1, 1])
    assert np.allclose(ratios, ratios[0])
