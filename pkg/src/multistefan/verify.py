"""Invariant suite run by ``multistefan verify``.

Every check returns a short detail string and raises :class:`InvariantFailure`
when the invariant does not hold.  Faults can be injected to confirm that the
suite catches them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bulk_mesh import assemble_stiffness, build_adaptive_mesh
from .cluster import (
    junction_project,
    lumped_inner_product,
    phase_areas,
    segment_normals,
    vertex_normals,
    intermediate_vertex_normals,
)
from .coupling import assemble_coupling, clip_segments
from .evolution import RunConfig, initial_state, step_conservative, step_linear
from .reference import (
    TwoCircleParams,
    ThreeCircleParams,
    exact_w_three,
    exact_w_two,
    radii_ode_three,
    radii_ode_two,
    radius_rootfind_two,
)
from .scenarios import double_bubble, three_circles, two_circles
from .system import assemble_surface_blocks, build_system, solve_system, stability_defect

FAULTS = ("projection", "jump_sign")


class InvariantFailure(AssertionError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name
        self.detail = detail


@dataclass(frozen=True)
class Check:
    name: str
    func: Callable[[str | None], str]


def _require(ok: bool, name: str, detail: str) -> str:
    if not ok:
        raise InvariantFailure(name, detail)
    return detail


def _faulty_projection(mesh, values):
    # group sum over two instead of the mean
    out = np.array(values, dtype=float, copy=True)
    for g in mesh.junction_groups:
        out[g] = out[g].sum(axis=0) / 2.0
    return out


def _small_bubble():
    return double_bubble(spacing=0.2).cluster


def check_projection_idempotent(fault):
    name = "projection idempotent"
    cm = _small_bubble()
    project = _faulty_projection if fault == "projection" else junction_project
    f = np.random.default_rng(0).normal(size=(cm.num_vertices, 2))
    err = float(np.abs(project(cm, project(cm, f)) - project(cm, f)).max())
    return _require(err < 1e-14, name, f"|P(Pf) - Pf| = {err:.2e}")


def check_projection_symmetric(fault):
    name = "projection symmetric"
    cm = _small_bubble()
    project = _faulty_projection if fault == "projection" else junction_project
    rng = np.random.default_rng(1)
    f, g = rng.normal(size=(2, cm.num_vertices, 2))
    err = abs(np.sum(project(cm, f) * g) - np.sum(f * project(cm, g)))
    return _require(err < 1e-12, name, f"|<Pf,g> - <f,Pg>| = {err:.2e}")


def check_trapezoid_exactness(fault):
    name = "trapezoid exactness"
    cm = _small_bubble()
    worst = 0.0
    for i in range(cm.num_curves):
        q = cm.curves[i]
        g = 1.0 + q[:, 0] - 2.0 * q[:, 1]
        exact = 0.0
        for a, b in cm.segments[cm.curve_segments(i)] - cm.offsets[i]:
            exact += np.hypot(*(q[b] - q[a])) * 0.5 * (g[a] + g[b])
        val = lumped_inner_product(1.0, g, cm, i)
        worst = max(worst, abs(val - exact) / abs(exact))
    return _require(worst < 1e-12, name, f"relative error {worst:.2e}")


def check_normal_duality(fault):
    name = "lumped projection duality"
    cm = three_circles(K=32).cluster
    omega = vertex_normals(cm).values
    nu = segment_normals(cm)
    xi = np.random.default_rng(2).normal(size=(cm.num_vertices, 2))
    s = cm.segments
    L = cm.segment_lengths
    lumped = float(np.sum(cm.vertex_masses * np.sum(omega * xi, axis=1)))
    exact = float(np.sum(L * np.sum(nu * 0.5 * (xi[s[:, 0]] + xi[s[:, 1]]), axis=1)))
    err = abs(lumped - exact) / max(abs(exact), 1.0)
    return _require(err < 1e-12, name, f"relative error {err:.2e}")


def check_intermediate_identity(fault):
    name = "intermediate normal at zero displacement"
    cm = _small_bubble()
    a = vertex_normals(cm).values
    b = intermediate_vertex_normals(cm, cm.positions).values
    return _require(np.array_equal(a, b), name, "identical" if np.array_equal(a, b) else "differs")


def check_area_partition(fault):
    name = "phase areas partition the box"
    H = 4.0
    cm = double_bubble().cluster
    areas = phase_areas(cm, box_half_width=H)
    err = abs(areas.sum() - (2 * H) ** 2) / (2 * H) ** 2
    _require(np.all(areas > 0), name, f"negative area {areas}")
    return _require(err < 1e-9, name, f"relative error {err:.2e}")


def check_bulk_mesh(fault):
    name = "bulk mesh conforming, stiffness kernel"
    cm = two_circles(K=64).cluster
    bulk = build_adaptive_mesh(4.0, 4, 64, cm)
    _require(bulk.is_conforming(), name, "hanging nodes")
    _require(np.all(bulk.areas > 0), name, "non-positive triangle area")
    A = assemble_stiffness(bulk)
    rows = np.abs(A @ np.ones(bulk.num_vertices)) / abs(A).max(axis=1).toarray().ravel()
    return _require(rows.max() < 1e-12, name, f"max relative row sum {rows.max():.2e}")


def check_coupling(fault):
    name = "coupling row sums and clipping"
    cm = two_circles(K=64).cluster
    bulk = build_adaptive_mesh(4.0, 4, 64, cm)
    cp = assemble_coupling(bulk, cm, vertex_normals(cm), "true")
    rows = np.asarray(cp.B.sum(axis=1)).ravel()
    err = float(np.abs(rows - cm.vertex_masses).max() / cm.vertex_masses.max())
    _require(err < 1e-10, name, f"row sum error {err:.2e}")
    s = cm.segments
    p0, p1 = cm.positions[s[:, 0]], cm.positions[s[:, 1]]
    fwd, bwd = clip_segments(bulk, p0, p1), clip_segments(bulk, p1, p0)
    pts_f = np.sort(np.concatenate([fwd.t0, fwd.t1]))
    pts_b = np.sort(1.0 - np.concatenate([bwd.t0, bwd.t1]))
    diff = float(np.abs(pts_f - pts_b).max()) if len(pts_f) == len(pts_b) else math.inf
    return _require(diff < 1e-12, name, f"row sums {err:.1e}, clip asymmetry {diff:.1e}")


def _system(cluster, tau=1e-2, N_f=64):
    bulk = build_adaptive_mesh(4.0, 4, N_f, cluster)
    omega = vertex_normals(cluster)
    cp = assemble_coupling(bulk, cluster, omega, "true")
    blocks = assemble_surface_blocks(cluster, omega)
    return build_system(assemble_stiffness(bulk), cp, blocks, cluster, tau), omega


def check_solver_paths(fault):
    name = "direct and Schur solves agree"
    cm = double_bubble(spacing=0.2).cluster
    system, omega = _system(cm)
    _, _, d1 = solve_system(system, "direct")
    _, _, d2 = solve_system(system, "schur")
    err = float(np.abs(d1 - d2).max() / max(np.abs(d1).max(), 1e-300))
    return _require(err < 1e-8, name, f"relative difference {err:.2e}")


def check_stability_identity(fault):
    name = "discrete stability identity"
    cm = double_bubble(spacing=0.2).cluster
    system, _ = _system(cm)
    W, _, dX = solve_system(system)
    defect, scale = stability_defect(system, W, dX)
    rel = abs(defect) / max(scale, 1e-300)
    return _require(rel < 1e-8, name, f"relative defect {rel:.2e}")


def check_energy_decay(fault):
    name = "energy stability"
    cfg = RunConfig(scheme="linear", tau=1e-2, T=1e-2, N_c=4, N_f=64)
    state = initial_state(double_bubble(spacing=0.2).cluster)
    new = step_linear(state, cfg.tau, cfg)
    lhs = new.energy + cfg.tau * new.grad_norm2
    return _require(lhs <= state.energy * (1 + 1e-8), name, f"E1 + tau|grad W|^2 - E0 = {lhs - state.energy:.3e}")


def check_area_identity(fault):
    name = "area change identity"
    sc = two_circles(K=64)
    cfg = RunConfig(scheme="conservative", tau=1e-2, T=1e-2, N_c=4, N_f=64)
    state = initial_state(sc.cluster)
    chi = sc.cluster.topology.chi()
    if fault == "jump_sign":
        chi[:, 0] *= -1.0
    new = step_conservative(state, cfg.tau, cfg, chi=chi)
    res = new.identity_residual
    tol = 1e-9 * cfg.box_area
    _require(res <= tol, name, f"max residual {res:.2e} > {tol:.1e}")
    drift = abs(new.content - state.content)
    return _require(drift <= 1e-9 * (1 + abs(state.content)), name, f"residual {res:.1e}, content change {drift:.1e}")


def check_oracles(fault):
    name = "exact solution oracles"
    p = TwoCircleParams.from_beta((-1.0, 0.0, 1.0), (2.0, 3.0))
    traj = radii_ode_two(p, 0.5)
    r2 = radius_rootfind_two(p, 0.5)
    err = abs(r2 - traj.R[-1, 1])
    _require(err < 1e-6, name, f"RK4 vs root finding {err:.2e}")
    D = p.jump21 * traj.R[:, 0] ** 2 - p.jump23 * traj.R[:, 1] ** 2
    cons = float(np.abs(D - p.D2).max() / abs(p.D2))
    _require(cons < 1e-8, name, f"conserved quantity drift {cons:.2e}")
    p3 = ThreeCircleParams.from_beta((-1.0, 1.0, 0.0), (1.0, 2.0, 3.0))
    t3 = radii_ode_three(p3, 0.3)
    C = p3.jump21 * t3.R[:, 0] ** 2 - p3.jump23 * t3.R[:, 1] ** 2 + p3.jump13 * t3.R[:, 2] ** 2
    cons3 = float(np.abs(C - p3.conserved).max() / abs(p3.conserved))
    _require(cons3 < 1e-8, name, f"three-circle conserved drift {cons3:.2e}")
    R = (1.0, 2.0)
    eps = 1e-13
    jumps = [abs(exact_w_two(r * (1 + eps), 0, R, p) - exact_w_two(r * (1 - eps), 0, R, p)) for r in R]
    R3 = (1.0, 2.0, 3.0)
    jumps += [abs(exact_w_three(r * (1 + eps), 0, R3, p3) - exact_w_three(r * (1 - eps), 0, R3, p3)) for r in R3]
    worst = float(np.max(jumps))
    return _require(worst < 1e-11, name, f"RK4/root {err:.1e}, conserved {max(cons, cons3):.1e}, w jump {worst:.1e}")


CHECKS = [
    Check("projection idempotent", check_projection_idempotent),
    Check("projection symmetric", check_projection_symmetric),
    Check("trapezoid exactness", check_trapezoid_exactness),
    Check("lumped projection duality", check_normal_duality),
    Check("intermediate normal at zero displacement", check_intermediate_identity),
    Check("phase areas partition the box", check_area_partition),
    Check("bulk mesh conforming, stiffness kernel", check_bulk_mesh),
    Check("coupling row sums and clipping", check_coupling),
    Check("direct and Schur solves agree", check_solver_paths),
    Check("discrete stability identity", check_stability_identity),
    Check("energy stability", check_energy_decay),
    Check("area change identity", check_area_identity),
    Check("exact solution oracles", check_oracles),
]


def run_checks(fault: str | None = None, report: Callable[[str], None] | None = print) -> list[tuple[str, str]]:
    """Run all checks in order, stopping at the first failure.

    Returns the (name, detail) pairs of the passed checks.
    """
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    passed = []
    for check in CHECKS:
        detail = check.func(fault)
        passed.append((check.name, detail))
        if report:
            report(f"ok   {check.name}: {detail}")
    return passed
