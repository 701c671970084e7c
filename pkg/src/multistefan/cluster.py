"""Polygonal curve networks with triple junctions.

A cluster is a set of polygonal curves separating ``num_phases`` phases.
Open curves end in triple junctions, closed curves have no end points.
All phase and curve indices are 0-based.

The normal of a segment ``q1 -> q2`` is ``(q2 - q1)^perp`` with
``v^perp = (-v2, v1)``, i.e. the tangent rotated counterclockwise.  A curve
traversed counterclockwise therefore has inward-pointing normals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import GeometryError, TopologyError

START, END = 0, 1


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate vectors (last axis of length 2) by +90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class Junction:
    """Three curve ends meeting at a point.

    ``curves`` is sorted increasingly; ``ends[j]`` says whether curve
    ``curves[j]`` enters with its first (``START``) or last (``END``) vertex.
    """

    curves: tuple[int, int, int]
    ends: tuple[int, int, int]

    def __post_init__(self):
        if len(self.curves) != 3 or len(self.ends) != 3:
            raise TopologyError("a junction joins exactly three curve ends")
        order = sorted(range(3), key=lambda j: self.curves[j])
        object.__setattr__(self, "curves", tuple(int(self.curves[j]) for j in order))
        object.__setattr__(self, "ends", tuple(int(self.ends[j]) for j in order))
        if len(set(self.curves)) != 3:
            raise TopologyError(f"junction curves must be distinct, got {self.curves}")
        if any(e not in (START, END) for e in self.ends):
            raise TopologyError(f"junction ends must be 0 (start) or 1 (end), got {self.ends}")


@dataclass(frozen=True, eq=False)
class ClusterTopology:
    """Phases, curves and junctions of a cluster.

    ``orientation[i] = (p, n)`` means the normal of curve ``i`` points from
    phase ``n`` into phase ``p``.  ``exterior`` is the phase touching the box
    boundary (defaults to the last phase).
    """

    beta: np.ndarray
    tension: np.ndarray
    orientation: tuple[tuple[int, int], ...]
    junctions: tuple[Junction, ...] = ()
    exterior: int | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).copy()
        tension = np.asarray(self.tension, dtype=float).copy()
        beta.setflags(write=False)
        tension.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "tension", tension)
        object.__setattr__(
            self, "orientation", tuple((int(p), int(n)) for p, n in self.orientation)
        )
        object.__setattr__(
            self,
            "junctions",
            tuple(j if isinstance(j, Junction) else Junction(*j) for j in self.junctions),
        )
        if self.exterior is None:
            object.__setattr__(self, "exterior", self.num_phases - 1)
        self._validate()

    def _validate(self):
        n_phase = self.num_phases
        if n_phase < 2:
            raise TopologyError("need at least two phases")
        if len(self.tension) != self.num_curves:
            raise TopologyError("one tension per curve required")
        if np.any(self.tension <= 0):
            raise TopologyError("surface tensions must be positive")
        if len(np.unique(self.beta)) != n_phase:
            raise TopologyError("phase coefficients beta must be pairwise distinct")
        if not 0 <= self.exterior < n_phase:
            raise TopologyError(f"exterior phase {self.exterior} out of range")
        seen: dict[frozenset, tuple[int, int]] = {}
        for i, (p, n) in enumerate(self.orientation):
            if not (0 <= p < n_phase and 0 <= n < n_phase) or p == n:
                raise TopologyError(f"curve {i}: invalid phase pair {(p, n)}")
            key = frozenset((p, n))
            if key in seen and seen[key] != (p, n):
                raise TopologyError(
                    f"curve {i}: orientation {(p, n)} inconsistent with {seen[key]}"
                )
            seen[key] = (p, n)
        used: set[tuple[int, int]] = set()
        for k, junc in enumerate(self.junctions):
            for c, e in zip(junc.curves, junc.ends):
                if not 0 <= c < self.num_curves:
                    raise TopologyError(f"junction {k}: curve {c} out of range")
                if (c, e) in used:
                    raise TopologyError(f"curve end {(c, e)} used by two junctions")
                used.add((c, e))
        for c in range(self.num_curves):
            if ((c, START) in used) != ((c, END) in used):
                raise TopologyError(f"curve {c} has a dangling end")
        if abs(float(self.beta.sum())) > 1e-12:
            warnings.warn(
                "beta does not sum to zero; only differences of beta enter the model",
                stacklevel=3,
            )

    @property
    def num_phases(self) -> int:
        return len(self.beta)

    @property
    def num_curves(self) -> int:
        return len(self.orientation)

    @property
    def num_junctions(self) -> int:
        return len(self.junctions)

    @cached_property
    def jumps(self) -> np.ndarray:
        """beta[p_i] - beta[n_i] for every curve."""
        return np.array([self.beta[p] - self.beta[n] for p, n in self.orientation])

    @cached_property
    def closed(self) -> tuple[bool, ...]:
        ends = {c for j in self.junctions for c in j.curves}
        return tuple(i not in ends for i in range(self.num_curves))

    def chi(self) -> np.ndarray:
        """(num_phases, num_curves) matrix: +1 if phase is p_i, -1 if n_i."""
        out = np.zeros((self.num_phases, self.num_curves))
        for i, (p, n) in enumerate(self.orientation):
            out[p, i] = 1.0
            out[n, i] = -1.0
        return out

    def replace(self, **changes) -> "ClusterTopology":
        kw = dict(
            beta=self.beta,
            tension=self.tension,
            orientation=self.orientation,
            junctions=self.junctions,
            exterior=self.exterior,
        )
        kw.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ClusterTopology(**kw)


@dataclass(frozen=True, eq=False)
class ClusterMesh:
    """Vertex chains of all curves plus the derived global numbering.

    Global vertex ``offsets[i] + k`` is vertex ``k`` of curve ``i``.  Junction
    vertices are stored once per incident curve; ``junction_groups`` lists the
    three global copies for each junction.
    """

    topology: ClusterTopology
    curves: tuple[np.ndarray, ...]

    def __post_init__(self):
        curves = []
        for c in self.curves:
            a = np.array(c, dtype=float).reshape(-1, 2)
            a.setflags(write=False)
            curves.append(a)
        object.__setattr__(self, "curves", tuple(curves))
        if len(curves) != self.topology.num_curves:
            raise TopologyError("one vertex chain per curve required")

    @property
    def num_curves(self) -> int:
        return len(self.curves)

    @property
    def closed(self) -> tuple[bool, ...]:
        return self.topology.closed

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.curves], dtype=int)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)]).astype(int)

    @property
    def num_vertices(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def positions(self) -> np.ndarray:
        if not self.curves:
            return np.zeros((0, 2))
        return np.vstack(self.curves)

    @cached_property
    def vertex_curve(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_curves), self.counts)

    @cached_property
    def segments(self) -> np.ndarray:
        """(J, 2) global vertex indices of all segments, curve by curve."""
        segs = []
        for i, k in enumerate(self.counts):
            o = self.offsets[i]
            idx = np.arange(o, o + k)
            if self.closed[i]:
                segs.append(np.stack([idx, np.roll(idx, -1)], axis=1))
            else:
                segs.append(np.stack([idx[:-1], idx[1:]], axis=1))
        if not segs:
            return np.zeros((0, 2), dtype=int)
        return np.vstack(segs).astype(int)

    @cached_property
    def segment_curve(self) -> np.ndarray:
        return self.vertex_curve[self.segments[:, 0]]

    @cached_property
    def segment_vectors(self) -> np.ndarray:
        x = self.positions
        return x[self.segments[:, 1]] - x[self.segments[:, 0]]

    @cached_property
    def segment_lengths(self) -> np.ndarray:
        return np.hypot(self.segment_vectors[:, 0], self.segment_vectors[:, 1])

    @cached_property
    def vertex_masses(self) -> np.ndarray:
        """Lumped mass of every vertex: half the adjacent segment lengths."""
        half = 0.5 * self.segment_lengths
        return np.bincount(
            self.segments.ravel(), weights=np.repeat(half, 2), minlength=self.num_vertices
        )

    def curve_vertices(self, i: int) -> np.ndarray:
        return np.arange(self.offsets[i], self.offsets[i + 1])

    def curve_segments(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.segment_curve == i)

    def junction_vertex(self, curve: int, end: int) -> int:
        return int(self.offsets[curve] + (0 if end == START else self.counts[curve] - 1))

    @cached_property
    def junction_groups(self) -> np.ndarray:
        groups = [
            [self.junction_vertex(c, e) for c, e in zip(j.curves, j.ends)]
            for j in self.topology.junctions
        ]
        return np.array(groups, dtype=int).reshape(-1, 3)

    @cached_property
    def master_of(self) -> np.ndarray:
        """Index of the independent displacement unknown for every vertex.

        The three copies of a junction vertex share one master.
        """
        owner = np.arange(self.num_vertices)
        for g in self.junction_groups:
            owner[g] = g.min()
        _, inverse = np.unique(owner, return_inverse=True)
        return inverse.astype(int)

    @property
    def num_masters(self) -> int:
        return int(self.master_of.max()) + 1 if self.num_vertices else 0

    def moved(self, positions: np.ndarray) -> "ClusterMesh":
        """Same topology, new vertex positions (global ordering)."""
        positions = np.asarray(positions, dtype=float)
        chunks = [positions[self.offsets[i] : self.offsets[i + 1]] for i in range(self.num_curves)]
        return ClusterMesh(self.topology, tuple(chunks))

    def curve_length(self, i: int) -> float:
        return float(self.segment_lengths[self.segment_curve == i].sum())


def build_cluster(
    topology: ClusterTopology,
    chains: Sequence[np.ndarray],
    *,
    domain_size: float | None = None,
    weld_tol: float = 1e-12,
) -> ClusterMesh:
    """Validate vertex chains against ``topology`` and weld junction vertices.

    Junction copies must agree to ``weld_tol * domain_size`` and are replaced by
    their common average.
    """
    chains = [np.array(c, dtype=float).reshape(-1, 2) for c in chains]
    if len(chains) != topology.num_curves:
        raise TopologyError(f"expected {topology.num_curves} chains, got {len(chains)}")
    for i, c in enumerate(chains):
        need = 3 if topology.closed[i] else 2
        if len(c) < need:
            raise GeometryError(f"curve {i} needs at least {need} vertices")
    if domain_size is None:
        domain_size = max([1.0] + [float(np.abs(c).max()) for c in chains])
    tol = weld_tol * domain_size
    for k, junc in enumerate(topology.junctions):
        pts = np.array([chains[c][0 if e == START else -1] for c, e in zip(junc.curves, junc.ends)])
        spread = np.abs(pts - pts.mean(axis=0)).max()
        if spread > tol:
            raise GeometryError(f"junction {k}: end points differ by {spread:.3g}")
        mean = pts.mean(axis=0)
        for c, e in zip(junc.curves, junc.ends):
            chains[c][0 if e == START else -1] = mean
    mesh = ClusterMesh(topology, tuple(chains))
    check_segments(mesh)
    return mesh


def check_segments(mesh: ClusterMesh, min_length: float = 0.0) -> None:
    if mesh.segments.size == 0:
        return
    j = int(np.argmin(mesh.segment_lengths))
    if mesh.segment_lengths[j] <= min_length:
        raise GeometryError(
            f"segment {j} of curve {mesh.segment_curve[j]} has length {mesh.segment_lengths[j]:.3g}"
        )


def segment_normal(mesh: ClusterMesh, i: int, j: int) -> np.ndarray:
    """Unit normal of segment ``j`` of curve ``i``."""
    seg = mesh.curve_segments(i)[j]
    v = mesh.segment_vectors[seg]
    length = float(np.hypot(*v))
    if length == 0.0:
        raise GeometryError(f"segment {j} of curve {i} has zero length")
    return perp(v) / length


def segment_normals(mesh: ClusterMesh) -> np.ndarray:
    """Unit normals of all segments, shape (J, 2)."""
    if np.any(mesh.segment_lengths == 0):
        raise GeometryError("zero-length segment")
    return perp(mesh.segment_vectors) / mesh.segment_lengths[:, None]


def lumped_inner_product(f, g, mesh: ClusterMesh, i: int, *, segment_limits: bool = False) -> float:
    """Mass-lumped (trapezoidal) inner product on curve ``i``.

    Parameters
    ----------
    f, g : array_like
        Vertex values of shape ``(K_i,)`` or ``(K_i, d)``, or scalars.  With
        ``segment_limits=True`` they are one-sided limits at the two segment
        ends, shape ``(J_i, 2)`` or ``(J_i, 2, d)``.  Vector values are
        contracted with the dot product.
    """
    segs = mesh.curve_segments(i)
    lengths = mesh.segment_lengths[segs]
    local = mesh.segments[segs] - mesh.offsets[i]

    def at_ends(v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            return np.full((len(segs), 2), float(v))
        return v if segment_limits else v[local]

    fg = at_ends(f) * at_ends(g)
    if fg.ndim == 3:
        fg = fg.sum(axis=-1)
    return float(np.sum(lengths * 0.5 * (fg[:, 0] + fg[:, 1])))


@dataclass(frozen=True, eq=False)
class VertexNormalField:
    """Lumped L2 projection of piecewise constant segment normals."""

    values: np.ndarray
    kind: str = "standard"
    segment_normals: np.ndarray | None = field(default=None, repr=False)


def _project_to_vertices(mesh: ClusterMesh, weighted: np.ndarray) -> np.ndarray:
    # weighted[j] = |sigma_j| * nu_j ; omega_k = sum weighted / sum |sigma_j|
    K = mesh.num_vertices
    num = np.zeros((K, 2))
    np.add.at(num, mesh.segments[:, 0], weighted)
    np.add.at(num, mesh.segments[:, 1], weighted)
    den = np.bincount(
        mesh.segments.ravel(), weights=np.repeat(mesh.segment_lengths, 2), minlength=K
    )
    return num / den[:, None]


def vertex_normals(mesh: ClusterMesh) -> VertexNormalField:
    nu = segment_normals(mesh)
    omega = _project_to_vertices(mesh, perp(mesh.segment_vectors))
    return VertexNormalField(omega, "standard", nu)


def intermediate_vertex_normals(mesh_old: ClusterMesh, positions_new: np.ndarray) -> VertexNormalField:
    """Vertex normals of the time-averaged interpolating polygon.

    On each old segment the averaged normal is ``(qbar2 - qbar1)^perp / |sigma^m|``
    with ``qbar`` the midpoint between old and new vertex positions.
    """
    positions_new = np.asarray(positions_new, dtype=float)
    if positions_new.shape != mesh_old.positions.shape:
        raise GeometryError("new positions do not match the old vertex layout")
    lengths = mesh_old.segment_lengths
    if np.any(lengths == 0):
        raise GeometryError("zero-length segment in the old mesh")
    qbar = 0.5 * (mesh_old.positions + positions_new)
    s = mesh_old.segments
    nbar = perp(qbar[s[:, 1]] - qbar[s[:, 0]])
    omega = _project_to_vertices(mesh_old, nbar)
    return VertexNormalField(omega, "intermediate", nbar / lengths[:, None])


def energy(mesh: ClusterMesh, topology: ClusterTopology | None = None) -> float:
    """Surface energy: sum of tension times curve length."""
    topology = topology or mesh.topology
    if mesh.segments.size == 0:
        return 0.0
    sigma = topology.tension[mesh.segment_curve]
    return float(np.sum(sigma * mesh.segment_lengths))


def signed_curve_areas(mesh: ClusterMesh) -> np.ndarray:
    """Per curve: half the sum of cross(q1, q2) over its segments.

    For a closed curve this is the shoelace area (positive when counterclockwise).
    """
    x = mesh.positions
    s = mesh.segments
    c = 0.5 * cross2(x[s[:, 0]], x[s[:, 1]])
    return np.bincount(mesh.segment_curve, weights=c, minlength=mesh.num_curves)


def phase_areas(mesh: ClusterMesh, topology: ClusterTopology | None = None, box_half_width: float = 4.0) -> np.ndarray:
    """Area of every phase inside the box ``(-H, H)^2``.

    Uses the divergence theorem with ``x / 2``: the boundary of phase ``l`` is
    made of the curves with ``chi[l, i] != 0`` plus, for the exterior phase,
    the box boundary.  Exact for polygons.
    """
    topology = topology or mesh.topology
    areas = topology.chi() @ signed_curve_areas(mesh)
    areas[topology.exterior] += (2.0 * box_half_width) ** 2
    return areas


def total_content(areas, beta) -> float:
    """Weighted sum of phase areas, sum_l beta_l |Omega_l|."""
    return float(np.dot(np.asarray(beta, dtype=float), np.asarray(areas, dtype=float)))


def junction_project(mesh: ClusterMesh, values: np.ndarray) -> np.ndarray:
    """Replace the three junction copies of a vertex field by their mean."""
    out = np.array(values, dtype=float, copy=True)
    for g in mesh.junction_groups:
        out[g] = out[g].mean(axis=0)
    return out


def junction_directions(mesh: ClusterMesh, k: int) -> np.ndarray:
    """Unit directions of the first segment of each incident curve, leaving junction ``k``."""
    junc = mesh.topology.junctions[k]
    dirs = []
    for c, e in zip(junc.curves, junc.ends):
        q = mesh.curves[c]
        v = q[1] - q[0] if e == START else q[-2] - q[-1]
        dirs.append(v / np.hypot(*v))
    return np.array(dirs)


def young_angles(mesh: ClusterMesh, k: int) -> np.ndarray:
    """Angles at junction ``k``; entry ``j`` is the sector between the two curves other than ``curves[j]``.

    The three angles sum to ``2*pi``.
    """
    dirs = junction_directions(mesh, k)
    theta = np.arctan2(dirs[:, 1], dirs[:, 0])
    order = np.argsort(theta)
    out = np.empty(3)
    for a in range(3):
        j0, j1 = order[a], order[(a + 1) % 3]
        gap = (theta[j1] - theta[j0]) % (2 * math.pi)
        # the sector from j0 to j1 does not touch the remaining curve
        other = 3 - j0 - j1
        out[other] = gap
    return out


def young_equilibrium_angles(tensions: Sequence[float]) -> np.ndarray:
    """Sector angles at a junction in force balance for the given tensions.

    Entry ``j`` is the angle between the two curves other than ``j``.
    """
    s = np.asarray(tensions, dtype=float)
    out = np.empty(3)
    for j in range(3):
        a, b = [i for i in range(3) if i != j]
        c = (s[j] ** 2 - s[a] ** 2 - s[b] ** 2) / (2 * s[a] * s[b])
        out[j] = math.acos(np.clip(c, -1.0, 1.0))
    return out
