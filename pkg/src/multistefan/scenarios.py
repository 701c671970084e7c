"""Built-in initial configurations.

Phases are 0-based.  Every scenario fixes the topology, the initial vertex
chains and a default box half width; discretisation parameters come from
:func:`level_settings` or the run configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import END, START, ClusterMesh, ClusterTopology, Junction, build_cluster
from .reference import ThreeCircleParams, TwoCircleParams, radii_ode_three, radii_ode_two

# lobe radius giving each lobe of the standard double bubble an area of about 3.139
DOUBLE_BUBBLE_RADIUS = 1.11444


def level_settings(level: int) -> dict:
    """Discretisation of convergence level ``level`` (vertices per circle, cells, step)."""
    if not 0 <= level <= 4:
        raise ValueError("levels range from 0 to 4")
    n = 2 ** (7 + level)
    return dict(K=n, N_f=n, N_c=4**level, tau=4.0 ** (3 - level) * 1e-3)


def circle_chain(R: float, K: int, center=(0.0, 0.0), clockwise: bool = False, phase: float = 0.0) -> np.ndarray:
    t = phase + 2 * np.pi * np.arange(K) / K
    if clockwise:
        t = -t
    return np.stack([center[0] + R * np.cos(t), center[1] + R * np.sin(t)], axis=1)


def arc_chain(center, R: float, a0: float, a1: float, K: int) -> np.ndarray:
    """``K`` vertices equally spaced on the arc from angle ``a0`` to ``a1`` (both included)."""
    t = np.linspace(a0, a1, K)
    return np.stack([center[0] + R * np.cos(t), center[1] + R * np.sin(t)], axis=1)


@dataclass
class Scenario:
    name: str
    cluster: ClusterMesh
    H: float = 4.0
    params: dict = field(default_factory=dict)

    @property
    def topology(self) -> ClusterTopology:
        return self.cluster.topology

    def oracle(self, T: float, dt: float = 1e-4):
        """Radius trajectory of the exact solution, if the scenario has one."""
        p = self.params
        if self.name == "two_circles":
            return radii_ode_two(TwoCircleParams.from_beta(p["beta"], p["radii"]), T, dt)
        if self.name == "three_circles":
            return radii_ode_three(ThreeCircleParams.from_beta(p["beta"], p["radii"]), T, dt)
        return None


def two_circles(beta=(-1.0, 0.0, 1.0), radii=(2.0, 3.0), K: int = 128, tension=(1.0, 1.0), H: float = 4.0) -> Scenario:
    """Concentric circles; phase 0 inside, phase 1 in the annulus, phase 2 outside."""
    topo = ClusterTopology(beta=beta, tension=tension, orientation=((0, 1), (2, 1)), exterior=2)
    chains = [circle_chain(radii[0], K), circle_chain(radii[1], K, clockwise=True)]
    return Scenario("two_circles", build_cluster(topo, chains), H, dict(beta=tuple(beta), radii=tuple(radii), K=K))


def three_circles(beta=(-1.0, 1.0, 0.0), radii=(1.0, 2.0, 3.0), K: int = 128, H: float = 4.0) -> Scenario:
    """Three concentric circles; phase 0 is the inner disk and the outside."""
    topo = ClusterTopology(beta=beta, tension=(1.0, 1.0, 1.0), orientation=((0, 1), (2, 1), (2, 0)), exterior=0)
    chains = [
        circle_chain(radii[0], K),
        circle_chain(radii[1], K, clockwise=True),
        circle_chain(radii[2], K),
    ]
    return Scenario("three_circles", build_cluster(topo, chains), H, dict(beta=tuple(beta), radii=tuple(radii), K=K))


def single_circle(beta=(-0.5, 0.5), R: float = 1.0, K: int = 128, H: float = 4.0) -> Scenario:
    topo = ClusterTopology(beta=beta, tension=(1.0,), orientation=((0, 1),), exterior=1)
    return Scenario("single_circle", build_cluster(topo, [circle_chain(R, K)]), H, dict(beta=tuple(beta), radii=(R,), K=K))


def two_disks(
    beta=(0.0, -1.0, 1.0),
    radii=(1.0, 0.5),
    centers=((-1.5, 0.0), (1.25, 0.0)),
    K: int = 128,
    H: float = 4.0,
) -> Scenario:
    """Two separate disks of phases 0 and 1 in phase 2."""
    topo = ClusterTopology(beta=beta, tension=(1.0, 1.0), orientation=((0, 2), (1, 2)), exterior=2)
    chains = [circle_chain(radii[0], K, centers[0]), circle_chain(radii[1], K, centers[1])]
    return Scenario("two_disks", build_cluster(topo, chains), H, dict(beta=tuple(beta), radii=tuple(radii), centers=centers, K=K))


def _double_bubble_chains(r: float, spacing: float):
    top = np.array([0.0, r * math.sqrt(3) / 2])
    bottom = -top
    arc_len = r * 4 * math.pi / 3
    n_arc = max(4, round(arc_len / spacing)) + 1
    n_wall = max(4, round(2 * top[1] / spacing)) + 1
    right = arc_chain((r / 2, 0.0), r, 2 * math.pi / 3, -2 * math.pi / 3, n_arc)
    left = arc_chain((-r / 2, 0.0), r, math.pi / 3, 5 * math.pi / 3, n_arc)
    wall = np.stack([np.zeros(n_wall), np.linspace(top[1], bottom[1], n_wall)], axis=1)
    for c in (right, left, wall):
        c[0], c[-1] = top, bottom
    return [right, left, wall]


def double_bubble(
    beta=(-1.0, 0.0, 1.0),
    tension=(1.0, 1.0, 1.0),
    r: float = DOUBLE_BUBBLE_RADIUS,
    spacing: float = 0.05,
    H: float = 4.0,
) -> Scenario:
    """Standard double bubble: right lobe phase 0, left lobe phase 1, outside phase 2.

    Curve 0 is the right arc, curve 1 the left arc, curve 2 the separating
    wall; all start at the upper junction and end at the lower one.
    """
    junctions = (Junction((0, 1, 2), (START, START, START)), Junction((0, 1, 2), (END, END, END)))
    topo = ClusterTopology(
        beta=beta, tension=tension, orientation=((2, 0), (1, 2), (0, 1)), junctions=junctions, exterior=2
    )
    cluster = build_cluster(topo, _double_bubble_chains(r, spacing))
    return Scenario("double_bubble", cluster, H, dict(beta=tuple(beta), tension=tuple(tension), r=r, spacing=spacing))


def double_bubble_tensions(tension=(1.75, 1.0, 1.0), **kw) -> Scenario:
    sc = double_bubble(tension=tension, **kw)
    sc.name = "double_bubble_tensions"
    return sc


def db_plus_disk(
    beta=(0.25, 0.0, -0.25),
    disk_radius: float = 0.625,
    disk_center=(2.8, 0.0),
    r: float = DOUBLE_BUBBLE_RADIUS,
    spacing: float = 0.05,
    H: float = 4.0,
) -> Scenario:
    """Double bubble plus a separate disk of the right lobe's phase."""
    junctions = (Junction((0, 1, 2), (START, START, START)), Junction((0, 1, 2), (END, END, END)))
    topo = ClusterTopology(
        beta=beta,
        tension=(1.0, 1.0, 1.0, 1.0),
        orientation=((2, 0), (1, 2), (0, 1), (2, 0)),
        junctions=junctions,
        exterior=2,
    )
    K_disk = max(8, round(2 * math.pi * disk_radius / spacing))
    chains = _double_bubble_chains(r, spacing) + [circle_chain(disk_radius, K_disk, disk_center, clockwise=True)]
    cluster = build_cluster(topo, chains)
    return Scenario(
        "db_plus_disk",
        cluster,
        H,
        dict(beta=tuple(beta), disk_radius=disk_radius, disk_center=tuple(disk_center), r=r, spacing=spacing),
    )


def stationary_pair(jumps=(-2.0, 1.0), radii=(1.0, 2.0), K: int = 128, H: float = 4.0) -> Scenario:
    """Concentric circles whose exact solution does not move."""
    beta = (jumps[0], 0.0, jumps[1])
    sc = two_circles(beta=beta, radii=radii, K=K, H=H)
    sc.name = "stationary_pair"
    return sc


SCENARIOS = {
    "two_circles": two_circles,
    "three_circles": three_circles,
    "single_circle": single_circle,
    "two_disks": two_disks,
    "double_bubble": double_bubble,
    "double_bubble_tensions": double_bubble_tensions,
    "db_plus_disk": db_plus_disk,
    "stationary_pair": stationary_pair,
}


def make_scenario(name: str, **overrides) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return factory(**overrides)
