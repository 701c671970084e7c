"""Adaptive conforming triangulations of the box (-H, H)^2.

The mesh comes from a 2:1 balanced quadtree whose leaves are cut into
triangles.  Leaves without hanging nodes get two triangles; leaves next to a
finer neighbour get a centre vertex and a fan that picks up the hanging edge
midpoints, which keeps the triangulation conforming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, OutOfDomain


@dataclass(frozen=True, eq=False)
class BulkMesh:
    """Triangulation with a bucket index for point location.

    Attributes
    ----------
    vertices : (n, 2) array
    triangles : (nt, 3) int array, counterclockwise
    H, N_c, N_f : box half width and coarse/fine cell counts per axis
    tri_level : (nt,) quadtree level of the leaf each triangle belongs to
    """

    vertices: np.ndarray
    triangles: np.ndarray
    H: float
    N_c: int
    N_f: int
    tri_level: np.ndarray
    box: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    # bucket grid -> group -> triangles (CSR)
    _nb: tuple[int, int] = field(default=(0, 0), repr=False)
    _bucket_group: np.ndarray | None = field(default=None, repr=False)
    _group_ptr: np.ndarray | None = field(default=None, repr=False)
    _group_tris: np.ndarray | None = field(default=None, repr=False)

    @property
    def h_f(self) -> float:
        return 2.0 * self.H / self.N_f

    @property
    def h_c(self) -> float:
        return 2.0 * self.H / self.N_c

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and, per edge, the count of incident triangles."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(nt, 3) neighbour across the edge opposite each local vertex, -1 on the boundary."""
        t = self.triangles
        nt = len(t)
        local = ((1, 2), (2, 0), (0, 1))
        e = np.vstack([np.sort(t[:, list(ab)], axis=1) for ab in local])
        owner = np.tile(np.arange(nt), 3)
        slot = np.repeat(np.arange(3), nt)
        key = e[:, 0].astype(np.int64) * (self.num_vertices + 1) + e[:, 1]
        order = np.argsort(key, kind="stable")
        ks = key[order]
        out = -np.ones((nt, 3), dtype=int)
        same = np.flatnonzero(ks[1:] == ks[:-1])
        a, b = order[same], order[same + 1]
        out[owner[a], slot[a]] = owner[b]
        out[owner[b], slot[b]] = owner[a]
        return out

    def is_conforming(self) -> bool:
        """Edge census: every edge is used by one or two triangles, and
        no vertex lies in the interior of another triangle's edge."""
        uniq, counts = self.edges
        if np.any(counts > 2):
            return False
        boundary = uniq[counts == 1]
        x0, x1, y0, y1 = self.box
        p, q = self.vertices[boundary[:, 0]], self.vertices[boundary[:, 1]]
        tol = 1e-12 * max(abs(x0), abs(x1), abs(y0), abs(y1), 1.0)
        on_box = (
            (np.abs(p[:, 0] - x0) < tol) & (np.abs(q[:, 0] - x0) < tol)
            | (np.abs(p[:, 0] - x1) < tol) & (np.abs(q[:, 0] - x1) < tol)
            | (np.abs(p[:, 1] - y0) < tol) & (np.abs(q[:, 1] - y0) < tol)
            | (np.abs(p[:, 1] - y1) < tol) & (np.abs(q[:, 1] - y1) < tol)
        )
        return bool(np.all(on_box))

    def write_csv(self, vertex_path, triangle_path) -> None:
        """Dump vertex and triangle tables for external visualisation."""
        np.savetxt(vertex_path, self.vertices, fmt="%.17g", delimiter=",", header="x,y", comments="")
        np.savetxt(triangle_path, self.triangles, fmt="%d", delimiter=",", header="v0,v1,v2", comments="")


def _pool(a: np.ndarray) -> np.ndarray:
    n = a.shape[0] // 2
    return a.reshape(n, 2, n, 2).any(axis=(1, 3))


def _upsample(a: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)


def _dilate4(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    out[1:, :] |= a[:-1, :]
    out[:-1, :] |= a[1:, :]
    out[:, 1:] |= a[:, :-1]
    out[:, :-1] |= a[:, 1:]
    return out


def _level_of(n: int, name: str) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{name} must be a power of two, got {n}")
    return n.bit_length() - 1


def mark_fine_cells(H: float, N_f: int, segments_p: np.ndarray, segments_q: np.ndarray) -> np.ndarray:
    """Fine cells whose closed square meets a segment bounding box inflated by h_f."""
    h = 2.0 * H / N_f
    mark = np.zeros((N_f, N_f), dtype=bool)
    if len(segments_p) == 0:
        return mark
    lo = np.minimum(segments_p, segments_q) + H - h
    hi = np.maximum(segments_p, segments_q) + H + h
    i0 = np.clip(np.ceil(lo / h).astype(int) - 1, 0, N_f - 1)
    i1 = np.clip(np.floor(hi / h).astype(int), 0, N_f - 1)
    span = i1 - i0 + 1
    # rasterise each box; boxes are a few cells wide so an explicit expansion is cheap
    nx, ny = span[:, 0], span[:, 1]
    counts = nx * ny
    seg = np.repeat(np.arange(len(lo)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    ix = i0[seg, 0] + local % nx[seg]
    iy = i0[seg, 1] + local // nx[seg]
    mark[ix, iy] = True
    return mark


def _quadtree_leaves(N_c: int, N_f: int, mark: np.ndarray):
    Lc, Lf = _level_of(N_c, "N_c"), _level_of(N_f, "N_f")
    if Lc > Lf:
        raise ValueError("N_c must not exceed N_f")
    refine = {Lf: np.zeros((N_f, N_f), dtype=bool)}
    if Lf > Lc:
        refine[Lf - 1] = _pool(mark)
        for l in range(Lf - 2, Lc - 1, -1):
            refine[l] = _pool(_dilate4(refine[l + 1]))
    exists = {Lc: np.ones((N_c, N_c), dtype=bool)}
    for l in range(Lc, Lf):
        exists[l + 1] = _upsample(refine[l] & exists[l])
    return Lc, Lf, refine, exists


def build_adaptive_mesh(H: float, N_c: int, N_f: int, cluster=None, *, margin_check: bool = True) -> BulkMesh:
    """Graded triangulation of (-H, H)^2 with cells of size h_f = 2H/N_f near the cluster.

    Parameters
    ----------
    H : float
        Box half width.
    N_c, N_f : int
        Coarse and fine cells per axis, powers of two with ``N_c <= N_f``.
    cluster : ClusterMesh, optional
        Curves to resolve.  Without it the mesh is uniform at level ``N_c``.
    """
    h = 2.0 * H / N_f
    if cluster is not None and cluster.num_vertices:
        x = cluster.positions
        if margin_check and np.any(np.abs(x) > H - h):
            raise GeometryError(f"cluster leaves the box (-{H}, {H})^2 minus a margin of {h:g}")
        s = cluster.segments
        mark = mark_fine_cells(H, N_f, x[s[:, 0]], x[s[:, 1]])
    else:
        mark = np.zeros((N_f, N_f), dtype=bool)
    Lc, Lf, refine, exists = _quadtree_leaves(N_c, N_f, mark)

    tri_chunks, leaf_of_tri = [], []
    bucket_leaf = -np.ones((N_f, N_f), dtype=np.int64)
    leaf_count = 0
    for l in range(Lc, Lf + 1):
        n = 1 << l
        s = 1 << (Lf - l)
        leaf = exists[l] & ~refine[l]
        ii, jj = np.nonzero(leaf)
        if len(ii) == 0:
            continue
        ids = leaf_count + np.arange(len(ii))
        leaf_count += len(ii)
        grid = -np.ones((n, n), dtype=np.int64)
        grid[ii, jj] = ids
        up = np.repeat(np.repeat(grid, s, axis=0), s, axis=1)
        bucket_leaf = np.where(up >= 0, up, bucket_leaf)

        # hanging midpoints: neighbour across the edge exists at this level and is refined
        fine_nb = exists[l] & refine[l]
        pad = np.pad(fine_nb, 1)
        hang = np.stack(
            [
                pad[1:-1, :-2][ii, jj],  # south: (i, j-1)
                pad[2:, 1:-1][ii, jj],  # east: (i+1, j)
                pad[1:-1, 2:][ii, jj],  # north: (i, j+1)
                pad[:-2, 1:-1][ii, jj],  # west: (i-1, j)
            ],
            axis=1,
        )
        x0, y0 = ii * s, jj * s
        sw = np.stack([x0, y0], 1)
        se = np.stack([x0 + s, y0], 1)
        ne = np.stack([x0 + s, y0 + s], 1)
        nw = np.stack([x0, y0 + s], 1)

        plain = ~hang.any(axis=1)
        if plain.any():
            p = np.flatnonzero(plain)
            t = np.stack(
                [np.stack([sw[p], se[p], ne[p]], 1), np.stack([sw[p], ne[p], nw[p]], 1)], 1
            ).reshape(-1, 3, 2)
            tri_chunks.append(t)
            leaf_of_tri.append(np.repeat(ids[p], 2))
        for k in np.flatnonzero(~plain):
            c = (x0[k] + s // 2, y0[k] + s // 2)
            corners = [tuple(sw[k]), tuple(se[k]), tuple(ne[k]), tuple(nw[k])]
            tris = []
            for e in range(4):
                a, b = corners[e], corners[(e + 1) % 4]
                if hang[k, e]:
                    m = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
                    tris += [(a, m, c), (m, b, c)]
                else:
                    tris.append((a, b, c))
            tri_chunks.append(np.array(tris, dtype=np.int64))
            leaf_of_tri.append(np.full(len(tris), ids[k]))

    tri_int = np.concatenate(tri_chunks).astype(np.int64)
    tri_leaf = np.concatenate(leaf_of_tri)
    order = np.argsort(tri_leaf, kind="stable")
    tri_int, tri_leaf = tri_int[order], tri_leaf[order]

    key = tri_int[..., 0] * (N_f + 1) + tri_int[..., 1]
    uniq, inverse = np.unique(key.ravel(), return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int64)
    ix, iy = uniq // (N_f + 1), uniq % (N_f + 1)
    vertices = np.stack([-H + ix * h, -H + iy * h], axis=1)

    leaf_level = np.empty(leaf_count, dtype=int)
    start = 0
    for l in range(Lc, Lf + 1):
        cnt = int((exists[l] & ~refine[l]).sum())
        leaf_level[start : start + cnt] = l
        start += cnt

    group_ptr = np.concatenate([[0], np.cumsum(np.bincount(tri_leaf, minlength=leaf_count))])
    return BulkMesh(
        vertices=vertices,
        triangles=triangles,
        H=float(H),
        N_c=int(N_c),
        N_f=int(N_f),
        tri_level=leaf_level[tri_leaf],
        box=(-H, H, -H, H),
        _nb=(N_f, N_f),
        _bucket_group=bucket_leaf,
        _group_ptr=group_ptr,
        _group_tris=np.arange(len(triangles)),
    )


def mesh_from_triangles(vertices, triangles) -> BulkMesh:
    """Wrap an arbitrary triangulation (e.g. for tests) with a bucket index."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    p = vertices[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    x0, y0 = vertices.min(axis=0)
    x1, y1 = vertices.max(axis=0)
    nt = len(triangles)
    n = max(1, int(math.sqrt(nt)))
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    slack = 1e-9
    bx0 = np.clip(np.floor((lo[:, 0] - x0) / hx - slack).astype(int), 0, n - 1)
    bx1 = np.clip(np.floor((hi[:, 0] - x0) / hx + slack).astype(int), 0, n - 1)
    by0 = np.clip(np.floor((lo[:, 1] - y0) / hy - slack).astype(int), 0, n - 1)
    by1 = np.clip(np.floor((hi[:, 1] - y0) / hy + slack).astype(int), 0, n - 1)
    members: list[list[int]] = [[] for _ in range(n * n)]
    for t in range(nt):
        for a in range(bx0[t], bx1[t] + 1):
            for b in range(by0[t], by1[t] + 1):
                members[a * n + b].append(t)
    ptr = np.concatenate([[0], np.cumsum([len(m) for m in members])])
    flat = np.array([t for m in members for t in m], dtype=np.int64)
    H = max(abs(x0), abs(x1), abs(y0), abs(y1))
    return BulkMesh(
        vertices=vertices,
        triangles=triangles,
        H=float(H),
        N_c=1,
        N_f=1,
        tri_level=np.zeros(nt, dtype=int),
        box=(float(x0), float(x1), float(y0), float(y1)),
        _nb=(n, n),
        _bucket_group=np.arange(n * n).reshape(n, n),
        _group_ptr=ptr,
        _group_tris=flat,
    )


def uniform_mesh(H: float, N: int) -> BulkMesh:
    return build_adaptive_mesh(H, N, N)


def assemble_stiffness(mesh: BulkMesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Laplacian with natural boundary conditions."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas
    # gradient of barycentric i is perp of the opposite edge / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def barycentric(mesh: BulkMesh, tri: np.ndarray, x: np.ndarray) -> np.ndarray:
    p = mesh.vertices[mesh.triangles[tri]]
    v0, v1 = p[..., 1, :] - p[..., 0, :], p[..., 2, :] - p[..., 0, :]
    r = x - p[..., 0, :]
    det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
    l1 = (r[..., 0] * v1[..., 1] - r[..., 1] * v1[..., 0]) / det
    l2 = (v0[..., 0] * r[..., 1] - v0[..., 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def candidate_triangles(mesh: BulkMesh, x: np.ndarray, eps: float = 1e-9):
    """Ragged candidate lists (ptr, owner, tri) for the points ``x``.

    Points within ``eps`` bucket widths of a bucket boundary also collect the
    neighbouring buckets, so ties between buckets are resolved by triangle index.
    """
    x0, x1, y0, y1 = mesh.box
    nx, ny = mesh._nb
    u = (x[:, 0] - x0) / (x1 - x0) * nx
    v = (x[:, 1] - y0) / (y1 - y0) * ny
    iu, iv = np.floor(u).astype(int), np.floor(v).astype(int)
    fu, fv = u - iu, v - iv
    cand = []
    for du, dv in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)):
        ok = np.ones(len(x), dtype=bool)
        if du == -1:
            ok &= fu < eps
        if du == 1:
            ok &= fu > 1 - eps
        if dv == -1:
            ok &= fv < eps
        if dv == 1:
            ok &= fv > 1 - eps
        a, b = iu + du, iv + dv
        ok &= (a >= 0) & (a < nx) & (b >= 0) & (b < ny)
        idx = np.flatnonzero(ok)
        cand.append((idx, mesh._bucket_group[a[idx], b[idx]]))
    owner = np.concatenate([c[0] for c in cand])
    group = np.concatenate([c[1] for c in cand])
    pair = np.unique(np.stack([owner, group], 1), axis=0)
    owner, group = pair[:, 0], pair[:, 1]
    start = mesh._group_ptr[group]
    count = mesh._group_ptr[group + 1] - start
    own = np.repeat(owner, count)
    off = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    tri = mesh._group_tris[np.repeat(start, count) + off]
    return own, tri


def locate_points(mesh: BulkMesh, x, tol: float = 1e-12):
    """Containing triangle and barycentric coordinates for each point.

    Points on shared edges go to the lowest-index incident triangle.

    Raises
    ------
    OutOfDomain
        If a point lies outside the mesh box.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x0, x1, y0, y1 = mesh.box
    scale = max(x1 - x0, y1 - y0)
    out = (x[:, 0] < x0 - tol * scale) | (x[:, 0] > x1 + tol * scale) | (
        x[:, 1] < y0 - tol * scale
    ) | (x[:, 1] > y1 + tol * scale)
    if np.any(out):
        raise OutOfDomain(f"point {x[np.argmax(out)]} outside the box")
    own, tri = candidate_triangles(mesh, x)
    lam = barycentric(mesh, tri, x[own])
    score = lam.min(axis=1)
    inside = score >= -tol
    n = len(x)
    big = np.iinfo(np.int64).max
    best = np.full(n, big, dtype=np.int64)
    np.minimum.at(best, own[inside], tri[inside])
    missing = best == big
    if np.any(missing):
        # fall back to the least-violating candidate (rounding at extreme tolerances)
        fb = np.full(n, -np.inf)
        np.maximum.at(fb, own, score)
        pick = missing[own] & (score == fb[own])
        best_fb = np.full(n, big, dtype=np.int64)
        np.minimum.at(best_fb, own[pick], tri[pick])
        best = np.where(missing, best_fb, best)
        if np.any(best == big):
            raise GeometryError("point location failed")
    return best, barycentric(mesh, best, x)


def locate_point(mesh: BulkMesh, x, tol: float = 1e-12):
    tri, lam = locate_points(mesh, np.asarray(x, dtype=float)[None, :], tol)
    return int(tri[0]), lam[0]


def interpolate(mesh: BulkMesh, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate a P1 function at arbitrary points."""
    tri, lam = locate_points(mesh, x)
    return np.sum(values[mesh.triangles[tri]] * lam, axis=1)
