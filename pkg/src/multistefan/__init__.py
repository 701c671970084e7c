"""Unfitted parametric finite elements for multi-phase Stefan flow of curve networks in the plane."""

__version__ = "0.1.0"

from .bulk_mesh import BulkMesh, assemble_stiffness, build_adaptive_mesh, locate_point
from .cluster import (
    ClusterMesh,
    ClusterTopology,
    Junction,
    build_cluster,
    energy,
    intermediate_vertex_normals,
    junction_project,
    lumped_inner_product,
    phase_areas,
    segment_normal,
    total_content,
    vertex_normals,
    young_angles,
)
from .coupling import assemble_coupling, clip_segment
from .diagnostics import CircleOracle, ErrorReport, ErrorTracker, error_gamma, error_w
from .errors import *  # noqa: F401,F403
from .evolution import RunConfig, StateSnapshot, Trajectory, run, step_conservative, step_linear
from .reference import (
    ThreeCircleParams,
    TwoCircleParams,
    alpha2,
    exact_w_three,
    exact_w_two,
    radii_ode_three,
    radii_ode_two,
    radius_rootfind_two,
)
from .scenarios import SCENARIOS, level_settings, make_scenario
from .surgery import surgery_small_phase
from .system import assemble_surface_blocks, build_system, solve_system
