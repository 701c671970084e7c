"""Bulk-surface coupling matrices on unfitted meshes.

Curve segments are clipped against the bulk triangles (Cyrus-Beck on every
candidate segment/triangle pair) and the products of bulk and surface hat
functions are integrated exactly on each piece with a 2-point Gauss rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bulk_mesh import BulkMesh, barycentric, locate_points
from .cluster import ClusterMesh, VertexNormalField
from .errors import ClipError, OutOfDomain

PARALLEL_TOL = 1e-12
PARAM_TOL = 1e-10
GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True, eq=False)
class ClippedPieces:
    """Sub-segments of a batch of segments, sorted by (segment, t0).

    ``t0, t1`` are parameters along ``p0 + t (p1 - p0)``.
    """

    segment: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    triangle: np.ndarray

    def __len__(self) -> int:
        return len(self.segment)


def _candidate_pairs(bulk: BulkMesh, p0: np.ndarray, p1: np.ndarray):
    x0, x1, y0, y1 = bulk.box
    nx, ny = bulk._nb
    lo = np.minimum(p0, p1)
    hi = np.maximum(p0, p1)
    eps = 1e-9
    bx0 = np.clip(np.floor((lo[:, 0] - x0) / (x1 - x0) * nx - eps).astype(int), 0, nx - 1)
    bx1 = np.clip(np.floor((hi[:, 0] - x0) / (x1 - x0) * nx + eps).astype(int), 0, nx - 1)
    by0 = np.clip(np.floor((lo[:, 1] - y0) / (y1 - y0) * ny - eps).astype(int), 0, ny - 1)
    by1 = np.clip(np.floor((hi[:, 1] - y0) / (y1 - y0) * ny + eps).astype(int), 0, ny - 1)
    sx, sy = bx1 - bx0 + 1, by1 - by0 + 1
    cnt = sx * sy
    seg = np.repeat(np.arange(len(p0)), cnt)
    local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    bx = bx0[seg] + local % sx[seg]
    by = by0[seg] + local // sx[seg]
    group = bulk._bucket_group[bx, by]
    pair = np.unique(np.stack([seg, group], 1), axis=0)
    seg, group = pair[:, 0], pair[:, 1]
    start = bulk._group_ptr[group]
    count = bulk._group_ptr[group + 1] - start
    own = np.repeat(seg, count)
    off = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    tri = bulk._group_tris[np.repeat(start, count) + off]
    pair = np.unique(np.stack([own, tri], 1), axis=0)
    return pair[:, 0], pair[:, 1]


def clip_segments(bulk: BulkMesh, p0, p1) -> ClippedPieces:
    """Split every segment ``p0[s] -> p1[s]`` into pieces lying in single triangles.

    Pieces of one segment partition ``[0, 1]``.  A piece lying on an edge shared
    by two triangles goes to the lower-index triangle.

    Raises
    ------
    OutOfDomain
        If an end point is outside the mesh box.
    ClipError
        If the pieces do not tile a segment (degenerate geometry).
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    x0, x1, y0, y1 = bulk.box
    pts = np.vstack([p0, p1])
    slack = 1e-12 * max(x1 - x0, y1 - y0)
    if np.any((pts[:, 0] < x0 - slack) | (pts[:, 0] > x1 + slack) | (pts[:, 1] < y0 - slack) | (pts[:, 1] > y1 + slack)):
        raise OutOfDomain("segment end point outside the box")
    seg, tri = _candidate_pairs(bulk, p0, p1)
    a = p0[seg]
    d = p1[seg] - a
    dn = np.hypot(d[:, 0], d[:, 1])
    t_lo = np.zeros(len(seg))
    t_hi = np.ones(len(seg))
    alive = dn > 0
    corners = bulk.vertices[bulk.triangles[tri]]
    for e in range(3):
        v = corners[:, e]
        edge = corners[:, (e + 1) % 3] - v
        en = np.hypot(edge[:, 0], edge[:, 1])
        # inward normal of a counterclockwise edge is its left perp
        num = edge[:, 0] * (a[:, 1] - v[:, 1]) - edge[:, 1] * (a[:, 0] - v[:, 0])
        den = edge[:, 0] * d[:, 1] - edge[:, 1] * d[:, 0]
        par = np.abs(den) <= PARALLEL_TOL * en * dn
        alive &= ~(par & (num < -PARALLEL_TOL * en * max(x1 - x0, y1 - y0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -num / den
        enter = ~par & (den > 0)
        leave = ~par & (den < 0)
        t_lo = np.where(enter, np.maximum(t_lo, t), t_lo)
        t_hi = np.where(leave, np.minimum(t_hi, t), t_hi)
    keep = alive & (t_hi - t_lo > PARAM_TOL)
    seg, tri, t_lo, t_hi = seg[keep], tri[keep], t_lo[keep], t_hi[keep]

    order = np.lexsort((tri, np.round(t_lo / PARAM_TOL), seg))
    seg, tri, t_lo, t_hi = seg[order], tri[order], t_lo[order], t_hi[order]
    # pieces on a shared edge appear twice; keep the first (lowest triangle)
    dup = np.zeros(len(seg), dtype=bool)
    same = (seg[1:] == seg[:-1]) & (np.abs(t_lo[1:] - t_lo[:-1]) < PARAM_TOL * 10) & (
        np.abs(t_hi[1:] - t_hi[:-1]) < PARAM_TOL * 10
    )
    # chains of duplicates: mark each later copy
    for k in np.flatnonzero(same):
        dup[k + 1] = True
    keep = ~dup
    seg, tri, t_lo, t_hi = seg[keep], tri[keep], t_lo[keep], t_hi[keep]

    n = len(p0)
    first = np.ones(len(seg), dtype=bool)
    first[1:] = seg[1:] != seg[:-1]
    last = np.ones(len(seg), dtype=bool)
    last[:-1] = seg[1:] != seg[:-1]
    covered = np.zeros(n, dtype=bool)
    covered[seg] = True
    if not covered.all():
        bad = int(np.flatnonzero(~covered)[0])
        raise ClipError(f"segment {bad} was not located in any triangle")
    gap_tol = 1e-8
    inner = ~last
    gaps = np.abs(t_lo[1:][inner[:-1]] - t_hi[:-1][inner[:-1]])
    if (
        np.any(np.abs(t_lo[first]) > gap_tol)
        or np.any(np.abs(t_hi[last] - 1.0) > gap_tol)
        or (gaps.size and gaps.max() > gap_tol)
    ):
        bad_first = np.abs(t_lo[first]) > gap_tol
        raise ClipError(
            "clipped pieces do not tile the segment"
            + (f" (segment {int(seg[first][bad_first][0])})" if bad_first.any() else "")
        )
    # snap shared boundaries so pieces chain exactly
    t_lo[first] = 0.0
    t_hi[last] = 1.0
    t_lo[1:][inner[:-1]] = t_hi[:-1][inner[:-1]]
    return ClippedPieces(seg, t_lo, t_hi, tri)


def clip_segment(bulk: BulkMesh, p0, p1) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Ordered ``(start, end, triangle)`` pieces of one segment."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    pieces = clip_segments(bulk, p0[None], p1[None])
    d = p1 - p0
    return [(p0 + a * d, p0 + b * d, int(t)) for a, b, t in zip(pieces.t0, pieces.t1, pieces.triangle)]


@dataclass(frozen=True, eq=False)
class CouplingMatrices:
    """Surface-by-bulk coupling blocks.

    ``B[k, j]`` integrates bulk hat ``j`` against surface hat ``k``;
    ``N[c]`` is ``B`` with row ``k`` scaled by component ``c`` of the vertex
    normal at ``k``.
    """

    B: sp.csr_matrix
    N: tuple[sp.csr_matrix, sp.csr_matrix]
    mode: str
    curve_rows: tuple[np.ndarray, ...]
    integrated_length: float


def coupling_matrix(bulk: BulkMesh, cluster: ClusterMesh, mode: str = "true") -> sp.csr_matrix:
    K = cluster.num_vertices
    nb = bulk.num_vertices
    if K == 0:
        return sp.csr_matrix((0, nb))
    x = cluster.positions
    if mode == "lumped":
        tri, lam = locate_points(bulk, x)
        rows = np.repeat(np.arange(K), 3)
        cols = bulk.triangles[tri].ravel()
        vals = (cluster.vertex_masses[:, None] * lam).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(K, nb))
    if mode != "true":
        raise ValueError(f"unknown integration mode {mode!r}")
    s = cluster.segments
    pieces = clip_segments(bulk, x[s[:, 0]], x[s[:, 1]])
    L = cluster.segment_lengths[pieces.segment]
    a = x[s[pieces.segment, 0]]
    d = x[s[pieces.segment, 1]] - a
    rows, cols, vals = [], [], []
    for g in GAUSS:
        t = pieces.t0 + g * (pieces.t1 - pieces.t0)
        w = 0.5 * (pieces.t1 - pieces.t0) * L
        lam = barycentric(bulk, pieces.triangle, a + t[:, None] * d)
        cols_g = bulk.triangles[pieces.triangle]
        for end, phi in ((0, 1.0 - t), (1, t)):
            rows.append(np.repeat(s[pieces.segment, end], 3))
            cols.append(cols_g.ravel())
            vals.append(((w * phi)[:, None] * lam).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(K, nb))


def assemble_coupling(
    bulk: BulkMesh, cluster: ClusterMesh, omega: VertexNormalField, mode: str = "true"
) -> CouplingMatrices:
    """Coupling matrices ``B`` and normal-weighted ``N`` for the given cluster.

    Parameters
    ----------
    mode : {"true", "lumped"}
        ``"true"`` integrates exactly over the clipped pieces; ``"lumped"``
        uses vertex quadrature, ``B[k, j] = m_k phi_j(q_k)``.
    """
    return coupling_from_matrix(coupling_matrix(bulk, cluster, mode), cluster, omega, mode)


def coupling_from_matrix(B: sp.csr_matrix, cluster: ClusterMesh, omega: VertexNormalField, mode: str) -> CouplingMatrices:
    w = np.asarray(omega.values)
    N = (sp.diags(w[:, 0]) @ B).tocsr(), (sp.diags(w[:, 1]) @ B).tocsr()
    rows = tuple(cluster.curve_vertices(i) for i in range(cluster.num_curves))
    return CouplingMatrices(B, N, mode, rows, float(B.sum()))
