"""Time stepping for the linear and the content-conserving scheme."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bulk_mesh import BulkMesh, assemble_stiffness, build_adaptive_mesh
from .cluster import (
    ClusterMesh,
    energy,
    intermediate_vertex_normals,
    phase_areas,
    total_content,
    vertex_normals,
)
from .coupling import coupling_from_matrix, coupling_matrix
from .errors import DegenerateMesh, FixedPointDivergence, MultiStefanError, TopologyError
from .system import assemble_surface_blocks, build_system, solve_system, stability_defect

log = logging.getLogger(__name__)

SCHEMES = ("linear", "conservative")


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "linear"
    tau: float = 1e-3
    T: float = 1.0
    H: float = 4.0
    N_c: int = 4
    N_f: int = 128
    mode: str = "true"
    solver: str = "direct"
    fp_tol: float = 1e-10
    max_iter: int = 50
    surgery: bool = True
    surgery_threshold: float = 1e-3
    surgery_rule: str = "shortest"
    output_every: int = 1
    keep_bulk: bool = True
    degenerate_factor: float = 1e-3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.T >= self.tau:
            raise ValueError("T must be at least tau")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if self.max_iter < 1 or self.output_every < 1:
            raise ValueError("max_iter and output_every must be positive")
        if self.mode not in ("true", "lumped"):
            raise ValueError(f"unknown integration mode {self.mode!r}")
        if self.surgery_rule not in ("shortest", "free"):
            raise ValueError(f"unknown surgery rule {self.surgery_rule!r}")

    @property
    def box_area(self) -> float:
        return (2.0 * self.H) ** 2


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    """Cluster at time ``t`` together with the fields of the solve that produced it.

    ``W`` lives on ``bulk`` (the mesh of the previous time level) and is
    ``None`` for the initial state.
    """

    t: float
    step: int
    cluster: ClusterMesh
    energy: float
    areas: np.ndarray
    content: float
    H: float = 4.0
    bulk: BulkMesh | None = None
    W: np.ndarray | None = None
    kappa: np.ndarray | None = None
    grad_norm2: float | None = None
    tau: float | None = None
    iterations: int = 0
    stability_residual: float = 0.0
    identity_residual: float | None = None
    events: tuple[str, ...] = ()


def initial_state(cluster: ClusterMesh, H: float = 4.0, t: float = 0.0) -> StateSnapshot:
    """State at time ``t`` before any solve.

    Raises
    ------
    TopologyError
        If a phase gets a negative area, i.e. curve orientations contradict the geometry.
    """
    areas = phase_areas(cluster, box_half_width=H)
    if np.any(areas < -1e-12 * (2 * H) ** 2):
        raise TopologyError(f"negative phase area {areas.min():.6g}: orientation pairs do not match the curve geometry")
    return StateSnapshot(
        t=t,
        step=0,
        cluster=cluster,
        energy=energy(cluster),
        areas=areas,
        content=total_content(areas, cluster.topology.beta),
        H=H,
    )


def area_change_residual(old: ClusterMesh, new_positions: np.ndarray, omega_half: np.ndarray, H: float, chi=None) -> np.ndarray:
    """Per-phase ``area_new - area_old + sum_i chi[l, i] <dX . omega, 1>^h``.

    Vanishes exactly when ``omega_half`` is the intermediate vertex normal of
    the move ``old -> new_positions``.
    """
    topo = old.topology
    chi = topo.chi() if chi is None else chi
    dX = new_positions - old.positions
    flux = old.vertex_masses * np.sum(dX * omega_half, axis=1)
    per_curve = np.bincount(old.vertex_curve, weights=flux, minlength=old.num_curves)
    a_old = phase_areas(old, box_half_width=H)
    a_new = phase_areas(old.moved(new_positions), box_half_width=H)
    return a_new - a_old + chi @ per_curve


class _StepOperators:
    """Pieces of the system that do not depend on the vertex normals."""

    def __init__(self, cluster: ClusterMesh, config: RunConfig):
        self.bulk = build_adaptive_mesh(config.H, config.N_c, config.N_f, cluster)
        self.A = assemble_stiffness(self.bulk)
        self.cluster = cluster
        self.config = config
        self.B = coupling_matrix(self.bulk, cluster, config.mode)

    def solve(self, omega, tau):
        coupling = coupling_from_matrix(self.B, self.cluster, omega, self.config.mode)
        blocks = assemble_surface_blocks(self.cluster, omega)
        system = build_system(self.A, coupling, blocks, self.cluster, tau)
        W, kappa, dX = solve_system(system, self.config.solver, omega=omega.values, cluster=self.cluster)
        return system, W, kappa, dX


def _finish(state: StateSnapshot, ops: _StepOperators, system, W, kappa, dX, tau, iterations, identity):
    old = state.cluster
    new_pos = old.positions + dX
    new = old.moved(new_pos)
    h_min = ops.config.degenerate_factor * ops.bulk.h_f
    if new.segment_lengths.size and new.segment_lengths.min() < h_min:
        raise DegenerateMesh(f"segment shorter than {h_min:.3g} after step at t={state.t + tau:.6g}")
    defect, scale = stability_defect(system, W, dX)
    areas = phase_areas(new, box_half_width=ops.config.H)
    return StateSnapshot(
        t=state.t + tau,
        step=state.step + 1,
        cluster=new,
        energy=energy(new),
        areas=areas,
        content=total_content(areas, new.topology.beta),
        H=ops.config.H,
        bulk=ops.bulk if ops.config.keep_bulk else None,
        W=W,
        kappa=kappa,
        grad_norm2=float(W @ (ops.A @ W)),
        tau=tau,
        iterations=iterations,
        stability_residual=defect / max(scale, 1e-300),
        identity_residual=identity,
    )


def step_linear(state: StateSnapshot, tau: float, config: RunConfig) -> StateSnapshot:
    """One step with the vertex normals of the current cluster."""
    ops = _StepOperators(state.cluster, config)
    omega = vertex_normals(state.cluster)
    system, W, kappa, dX = ops.solve(omega, tau)
    return _finish(state, ops, system, W, kappa, dX, tau, 1, None)


def step_conservative(
    state: StateSnapshot,
    tau: float,
    config: RunConfig,
    fp_tol: float | None = None,
    max_iter: int | None = None,
    chi=None,
    history: list | None = None,
) -> StateSnapshot:
    """One step with time-averaged normals, resolved by a lagged fixed-point loop.

    The first iterate uses the current vertex normals; every further iterate
    re-evaluates the averaged normals at the latest new positions.  Stops when
    the maximal change of the displacement drops below ``fp_tol``.

    Raises
    ------
    FixedPointDivergence
        If ``max_iter`` iterations do not reach ``fp_tol``.
    """
    fp_tol = config.fp_tol if fp_tol is None else fp_tol
    max_iter = config.max_iter if max_iter is None else max_iter
    cluster = state.cluster
    ops = _StepOperators(cluster, config)
    omega = vertex_normals(cluster)
    prev = None
    changes = [] if history is None else history
    for it in range(1, max_iter + 1):
        system, W, kappa, dX = ops.solve(omega, tau)
        if prev is not None:
            change = float(np.abs(dX - prev).max())
            changes.append(change)
            if change <= fp_tol:
                break
        prev = dX
        omega = intermediate_vertex_normals(cluster, cluster.positions + dX)
    else:
        raise FixedPointDivergence(
            f"lagged iteration did not reach {fp_tol:g} in {max_iter} iterations"
            + (f" (last change {changes[-1]:.3e})" if changes else "")
        )
    new_pos = cluster.positions + dX
    omega_half = intermediate_vertex_normals(cluster, new_pos)
    identity = area_change_residual(cluster, new_pos, omega_half.values, config.H, chi)
    return _finish(state, ops, system, W, kappa, dX, tau, it, float(np.abs(identity).max()))


def time_steps(T: float, tau: float) -> list[float]:
    """Uniform steps of length ``tau`` with a shorter final step ending at ``T``."""
    n = max(1, math.ceil(T / tau - 1e-9))
    steps = [tau] * (n - 1)
    steps.append(T - (n - 1) * tau)
    return steps


@dataclass(eq=False)
class Trajectory:
    snapshots: list[StateSnapshot] = field(default_factory=list)
    step_log: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    error: MultiStefanError | None = None

    @property
    def final(self) -> StateSnapshot:
        return self.snapshots[-1]

    @property
    def initial(self) -> StateSnapshot:
        return self.snapshots[0]


def run(
    config: RunConfig,
    cluster: ClusterMesh,
    observer: Callable[[StateSnapshot], None] | None = None,
    *,
    raise_errors: bool = True,
) -> Trajectory:
    """Evolve ``cluster`` up to ``config.T``.

    ``observer`` sees every state (including the initial one).  Snapshots are
    stored every ``output_every`` steps plus the final one.  Errors are re-raised
    with the step index unless ``raise_errors`` is false, in which case they are
    attached to the returned trajectory.
    """
    from .surgery import surgery_small_phase, SurgeryMonitor

    state = initial_state(cluster, config.H)
    traj = Trajectory([state])
    if observer:
        observer(state)
    monitor = SurgeryMonitor.from_cluster(cluster, config.H)
    steps = time_steps(config.T, config.tau)
    for m, tau in enumerate(steps):
        try:
            try:
                new = _step(state, tau, config)
            except DegenerateMesh:
                if not config.surgery:
                    raise
                fixed, event = surgery_small_phase(state, monitor, config, force=True)
                if event is None:
                    raise
                traj.events.append(event)
                state = fixed
                new = _step(state, tau, config)
            # avoid round-off accumulation in the time levels
            new = replace(new, t=config.T if m == len(steps) - 1 else (m + 1) * config.tau)
            traj.step_log.append(
                dict(
                    step=m + 1,
                    t=new.t,
                    tau=tau,
                    energy_old=state.energy,
                    energy_new=new.energy,
                    dissipation=tau * new.grad_norm2,
                    content=new.content,
                    iterations=new.iterations,
                    stability_residual=new.stability_residual,
                    identity_residual=new.identity_residual,
                )
            )
            state = new
            if config.surgery:
                fixed, event = surgery_small_phase(state, monitor, config)
                if event is not None:
                    traj.events.append(event)
                    log.info("surgery at t=%.6g: %s", state.t, event["description"])
                    state = fixed
        except MultiStefanError as exc:
            exc.args = (f"step {m + 1} (t={state.t:.6g}): {exc.args[0] if exc.args else exc}",)
            if raise_errors:
                raise
            traj.error = exc
            break
        if observer:
            observer(state)
        if (m + 1) % config.output_every == 0 or m == len(steps) - 1:
            traj.snapshots.append(state)
    if traj.snapshots[-1] is not state:
        traj.snapshots.append(state)
    return traj


def _step(state, tau, config):
    if state.cluster.num_curves == 0:
        return replace(state, t=state.t + tau, step=state.step + 1, tau=tau, W=None, kappa=None, grad_norm2=0.0)
    if config.scheme == "linear":
        return step_linear(state, tau, config)
    return step_conservative(state, tau, config)


__all__ = [
    "RunConfig",
    "StateSnapshot",
    "Trajectory",
    "area_change_residual",
    "initial_state",
    "run",
    "step_conservative",
    "step_linear",
    "time_steps",
]
