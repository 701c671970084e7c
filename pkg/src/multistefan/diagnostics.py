"""Error norms against exact solutions and per-run summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .reference import (
    RadiusTrajectory,
    ThreeCircleParams,
    TwoCircleParams,
    exact_w_three,
    exact_w_two,
    radii_ode_three,
    radii_ode_two,
)


@dataclass(frozen=True)
class ErrorReport:
    """One row of a convergence table."""

    h_f: float
    h_gamma: float
    error_w: float
    error_gamma: float
    K_omega: int
    K_gamma: int
    v_delta: float

    COLUMNS = ("h_f", "h_gamma", "error_w", "error_gamma", "K_omega", "K_gamma", "v_delta")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class CircleOracle:
    """Concentric-circle exact solution: radii in curve order plus the potential."""

    radii: RadiusTrajectory
    params: TwoCircleParams | ThreeCircleParams

    @classmethod
    def two(cls, beta, radii, T: float, dt: float = 1e-4) -> "CircleOracle":
        p = TwoCircleParams.from_beta(beta, radii)
        return cls(radii_ode_two(p, T, dt), p)

    @classmethod
    def three(cls, beta, radii, T: float, dt: float = 1e-4) -> "CircleOracle":
        p = ThreeCircleParams.from_beta(beta, radii)
        return cls(radii_ode_three(p, T, dt), p)

    def radii_at(self, t: float) -> np.ndarray:
        return self.radii.at(t)

    def w(self, x, t: float) -> np.ndarray:
        R = self.radii_at(t)
        if isinstance(self.params, TwoCircleParams):
            return exact_w_two(x, t, R, self.params)
        return exact_w_three(x, t, R, self.params)

    def covers(self, t: float) -> bool:
        return t <= self.radii.t_end + 1e-12


def _snapshots(trajectory) -> Iterable:
    return getattr(trajectory, "snapshots", trajectory)


def gamma_distance(state, oracle: CircleOracle) -> float:
    """Max over vertices of ``| |q| - R_i(t) |`` for one state."""
    R = oracle.radii_at(state.t)
    err = 0.0
    for i, q in enumerate(state.cluster.curves):
        err = max(err, float(np.abs(np.hypot(q[:, 0], q[:, 1]) - R[i]).max()))
    return err


def w_distance(state, oracle: CircleOracle) -> float:
    if state.W is None or state.bulk is None:
        return 0.0
    return float(np.abs(state.W - oracle.w(state.bulk.vertices, state.t)).max())


def error_gamma(trajectory, oracle: CircleOracle) -> float:
    """Largest vertex distance to the exact circles over all stored snapshots."""
    return max((gamma_distance(s, oracle) for s in _snapshots(trajectory) if oracle.covers(s.t)), default=0.0)


def error_w(trajectory, oracle: CircleOracle) -> float:
    """Largest nodal difference between the discrete and the exact potential."""
    return max((w_distance(s, oracle) for s in _snapshots(trajectory) if oracle.covers(s.t)), default=0.0)


class ErrorTracker:
    """Observer accumulating both errors at every step of a run."""

    def __init__(self, oracle: CircleOracle):
        self.oracle = oracle
        self.error_gamma = 0.0
        self.error_w = 0.0
        self.last = None
        self.first = None

    def __call__(self, state) -> None:
        if self.first is None:
            self.first = state
        self.last = state
        if not self.oracle.covers(state.t):
            return
        self.error_gamma = max(self.error_gamma, gamma_distance(state, self.oracle))
        self.error_w = max(self.error_w, w_distance(state, self.oracle))

    def report(self, h_f: float) -> ErrorReport:
        final = self.last
        return ErrorReport(
            h_f=h_f,
            h_gamma=float(final.cluster.segment_lengths.max()),
            error_w=self.error_w,
            error_gamma=self.error_gamma,
            K_omega=final.bulk.num_vertices if final.bulk is not None else 0,
            K_gamma=final.cluster.num_vertices,
            v_delta=abs(final.content - self.first.content),
        )


def discrete_radii(cluster) -> np.ndarray:
    """Mean distance of each curve's vertices from the origin."""
    return np.array([np.hypot(q[:, 0], q[:, 1]).mean() for q in cluster.curves])


def radius_extrema(cluster) -> np.ndarray:
    """Per curve: min and max distance from the vertex centroid, shape (I_S, 2)."""
    out = []
    for q in cluster.curves:
        d = np.hypot(*(q - q.mean(axis=0)).T)
        out.append((d.min(), d.max()))
    return np.array(out).reshape(-1, 2)
