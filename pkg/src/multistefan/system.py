"""Assembly and solution of the coupled bulk / curvature / displacement system.

Unknowns are ordered ``(W, kappa, dX_x, dX_y)`` where ``dX`` lives on master
vertices: the three copies of a junction vertex share one displacement.  With
``M`` the lumped surface mass, ``J`` the per-vertex jump, ``omega`` the vertex
normals and ``Q`` the copy-to-master map, the rows read::

    tau A W            + B^T J omega_c Q dX_c      = 0
    J B W + M kappa                                = 0
    Q^T M omega_c kappa + Q^T E Q dX_c             = -Q^T E X_c
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cluster import ClusterMesh, VertexNormalField
from .coupling import CouplingMatrices
from .errors import DimensionMismatch, SolveFailure


@dataclass(frozen=True, eq=False)
class SurfaceBlocks:
    """Lumped mass (diagonal of C), normal-weighted mass D and tension-weighted stiffness E."""

    mass: np.ndarray
    D: np.ndarray
    E: sp.csr_matrix

    @property
    def C(self) -> sp.dia_matrix:
        return sp.diags(self.mass)


def surface_stiffness(cluster: ClusterMesh, tension=None) -> sp.csr_matrix:
    """Per-curve 1D P1 stiffness matrices scaled by the curve tension."""
    tension = cluster.topology.tension if tension is None else np.asarray(tension)
    K = cluster.num_vertices
    s = cluster.segments
    w = tension[cluster.segment_curve] / cluster.segment_lengths
    rows = np.concatenate([s[:, 0], s[:, 1], s[:, 0], s[:, 1]])
    cols = np.concatenate([s[:, 0], s[:, 1], s[:, 1], s[:, 0]])
    vals = np.concatenate([w, w, -w, -w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(K, K))


def assemble_surface_blocks(cluster: ClusterMesh, omega: VertexNormalField, topology=None) -> SurfaceBlocks:
    topology = topology or cluster.topology
    mass = cluster.vertex_masses
    return SurfaceBlocks(mass, mass[:, None] * omega.values, surface_stiffness(cluster, topology.tension))


def master_map(cluster: ClusterMesh) -> sp.csr_matrix:
    """0/1 matrix sending master displacements to every vertex copy."""
    K = cluster.num_vertices
    return sp.csr_matrix((np.ones(K), (np.arange(K), cluster.master_of)), shape=(K, cluster.num_masters))


@dataclass(frozen=True, eq=False)
class BlockSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    num_bulk: int
    num_surface: int
    num_masters: int
    tau: float
    A: sp.csr_matrix
    G: tuple[sp.csr_matrix, sp.csr_matrix]
    JB: sp.csr_matrix
    mass: np.ndarray
    Q: sp.csr_matrix
    E: sp.csr_matrix
    X_old: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def split(self, sol: np.ndarray):
        """Return ``(W, kappa, dX)`` with ``dX`` expanded to all vertex copies, shape (K, 2)."""
        nb, K, nm = self.num_bulk, self.num_surface, self.num_masters
        W = sol[:nb]
        kappa = sol[nb : nb + K]
        dx = sol[nb + K : nb + K + nm]
        dy = sol[nb + K + nm :]
        return W, kappa, np.stack([self.Q @ dx, self.Q @ dy], axis=1)

    def residual(self, sol: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix @ sol - self.rhs))


def build_system(
    stiffness: sp.spmatrix,
    coupling: CouplingMatrices,
    surface: SurfaceBlocks,
    cluster: ClusterMesh,
    tau: float,
    jumps=None,
    X_old=None,
) -> BlockSystem:
    """Assemble the condensed block system for one time step.

    Parameters
    ----------
    stiffness : (nb, nb) bulk stiffness matrix
    coupling : coupling blocks on the same bulk mesh and cluster
    surface : surface blocks of the cluster
    tau : time step
    jumps : per-curve jumps, defaults to the topology's
    X_old : (K, 2) current positions, defaults to the cluster's
    """
    A = sp.csr_matrix(stiffness)
    nb = A.shape[0]
    K = cluster.num_vertices
    B = coupling.B
    if A.shape != (nb, nb) or B.shape != (K, nb):
        raise DimensionMismatch(f"stiffness {A.shape} and coupling {B.shape} do not match K={K}")
    if surface.mass.shape != (K,) or surface.D.shape != (K, 2) or surface.E.shape != (K, K):
        raise DimensionMismatch("surface blocks do not match the cluster")
    jumps = cluster.topology.jumps if jumps is None else np.asarray(jumps, dtype=float)
    if jumps.shape != (cluster.num_curves,):
        raise DimensionMismatch("one jump per curve required")
    X_old = cluster.positions if X_old is None else np.asarray(X_old, dtype=float)
    if X_old.shape != (K, 2):
        raise DimensionMismatch("X_old must have shape (K, 2)")
    if tau <= 0:
        raise ValueError("tau must be positive")

    jv = jumps[cluster.vertex_curve]
    mass = surface.mass
    omega = surface.D / mass[:, None]
    Q = master_map(cluster)
    nm = Q.shape[1]
    JB = (sp.diags(jv) @ B).tocsr()
    G = tuple((JB.T @ sp.diags(omega[:, c]) @ Q).tocsr() for c in range(2))
    Dq = tuple((Q.T @ sp.diags(surface.D[:, c])).tocsr() for c in range(2))
    S = (Q.T @ surface.E @ Q).tocsr()
    Z = None
    matrix = sp.bmat(
        [
            [tau * A, Z, G[0], G[1]],
            [JB, sp.diags(mass), Z, Z],
            [Z, Dq[0], S, Z],
            [Z, Dq[1], Z, S],
        ],
        format="csr",
    )
    rhs = np.concatenate(
        [np.zeros(nb + K), -(Q.T @ (surface.E @ X_old[:, 0])), -(Q.T @ (surface.E @ X_old[:, 1]))]
    )
    return BlockSystem(matrix, rhs, nb, K, nm, float(tau), A, G, JB, mass, Q, surface.E, X_old)


def _check_assumption(system: BlockSystem, omega: np.ndarray | None, cluster: ClusterMesh | None):
    if omega is None or cluster is None:
        return
    for i in range(cluster.num_curves):
        if np.all(np.abs(omega[cluster.curve_vertices(i)]) < 1e-14):
            warnings.warn(f"all vertex normals vanish on curve {i}; the system may be singular", stacklevel=3)


def _solve_direct(system: BlockSystem) -> np.ndarray:
    try:
        lu = spla.splu(system.matrix.tocsc())
    except RuntimeError as exc:  # singular factor
        raise SolveFailure(f"sparse factorisation failed: {exc}") from exc
    return lu.solve(system.rhs)


def _solve_schur(system: BlockSystem) -> np.ndarray:
    """Eliminate kappa and W, deflating the constant kernel of A."""
    nb, K, nm = system.num_bulk, system.num_surface, system.num_masters
    tau = system.tau
    A = system.A
    one = np.ones(nb)
    bordered = sp.bmat([[A, one[:, None]], [one[None, :], None]], format="csc")
    lu = spla.splu(bordered)
    G = sp.hstack(system.G, format="csr")
    Gd = G.toarray()
    rhs = np.vstack([Gd, np.zeros((1, Gd.shape[1]))])
    ZG = lu.solve(rhs)[:nb]
    S = sp.block_diag([system.Q.T @ system.E @ system.Q] * 2).toarray()
    g = Gd.T @ one
    red = np.zeros((2 * nm + 1, 2 * nm + 1))
    red[: 2 * nm, : 2 * nm] = S + (Gd.T @ ZG) / tau
    red[: 2 * nm, -1] = -g
    red[-1, : 2 * nm] = g
    r = np.concatenate([system.rhs[nb + K :], [0.0]])
    try:
        xc = np.linalg.solve(red, r)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"reduced system singular: {exc}") from exc
    x, c = xc[:-1], xc[-1]
    W = -(ZG @ x) / tau + c
    kappa = -(system.JB @ W) / system.mass
    return np.concatenate([W, kappa, x])


def solve_system(system: BlockSystem, method: str = "direct", *, omega=None, cluster=None, rtol: float = 1e-9):
    """Solve the block system.

    Returns
    -------
    W : (nb,) bulk potential
    kappa : (K,) tension-weighted curvature
    dX : (K, 2) displacement of every vertex copy

    Raises
    ------
    SolveFailure
        If the factorisation breaks down or the residual exceeds
        ``rtol * (|rhs| + 1)``.
    """
    _check_assumption(system, omega, cluster)
    if method == "direct":
        sol = _solve_direct(system)
    elif method == "schur":
        sol = _solve_schur(system)
    else:
        raise ValueError(f"unknown solver {method!r}")
    if not np.all(np.isfinite(sol)):
        raise SolveFailure("non-finite solution")
    res = system.residual(sol)
    if res > rtol * (np.linalg.norm(system.rhs) + 1.0):
        raise SolveFailure(f"residual {res:.3e} above tolerance")
    return system.split(sol)


def stability_defect(system: BlockSystem, W: np.ndarray, dX: np.ndarray) -> tuple[float, float]:
    """``tau |grad W|^2 + (X + dX)^T E dX`` and a scale for relative checks.

    The first value vanishes for exact solutions of the system.
    """
    Xn = system.X_old + dX
    grad = system.tau * float(W @ (system.A @ W))
    surf = float(sum(Xn[:, c] @ (system.E @ dX[:, c]) for c in range(2)))
    return grad + surf, abs(grad) + abs(surf)
