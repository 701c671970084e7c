"""Removal of vanishing phases so a run can continue past a topology change.

Two situations are handled:

* a small region enclosed by a single closed curve with nothing inside is
  dropped together with its curve;
* a small phase bounded by two open curves running between the same two
  junctions (a lens) loses one of the two curves; the other one is merged
  with the curves leaving the junctions.

Anything else raises :class:`SurgeryUnsupported`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cluster import END, START, ClusterMesh, Junction, build_cluster, phase_areas, signed_curve_areas
from .errors import SurgeryUnsupported


@dataclass
class SurgeryMonitor:
    """Reference areas used by the trigger, kept in sync with curve removals."""

    phase_area0: np.ndarray
    enclosed0: list[float]

    @classmethod
    def from_cluster(cls, cluster: ClusterMesh, H: float) -> "SurgeryMonitor":
        return cls(phase_areas(cluster, box_half_width=H), list(np.abs(signed_curve_areas(cluster))))

    def remap(self, kept: list[int]) -> None:
        self.enclosed0 = [self.enclosed0[i] for i in kept]


def _point_in_polygon(p: np.ndarray, poly: np.ndarray) -> bool:
    x, y = p
    xs, ys = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    crosses = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (y - ys) * (xn - xs) / (yn - ys)
    return bool(np.sum(crosses & (x < xint)) % 2)


def _rebuild(topology, chains, orientation, junctions, tension):
    topo = topology.replace(orientation=tuple(orientation), junctions=tuple(junctions), tension=np.asarray(tension))
    return build_cluster(topo, chains)


def remove_closed_curve(cluster: ClusterMesh, i: int) -> tuple[ClusterMesh, list[int]]:
    topo = cluster.topology
    kept = [c for c in range(cluster.num_curves) if c != i]
    remap = {c: n for n, c in enumerate(kept)}
    junctions = [
        Junction(tuple(remap[c] for c in j.curves), j.ends) for j in topo.junctions
    ]
    new = _rebuild(
        topo,
        [np.array(cluster.curves[c]) for c in kept],
        [topo.orientation[c] for c in kept],
        junctions,
        [topo.tension[c] for c in kept]
    )
    return new, kept


def _lens(cluster: ClusterMesh, phase: int):
    """Two open curves bounding ``phase`` and sharing both end junctions, else None."""
    topo = cluster.topology
    bounding = [i for i, (p, n) in enumerate(topo.orientation) if phase in (p, n)]
    if len(bounding) != 2 or any(topo.closed[i] for i in bounding):
        return None
    ends = {}
    for k, j in enumerate(topo.junctions):
        for c, e in zip(j.curves, j.ends):
            ends[(c, e)] = k
    a, b = bounding
    ja = {ends[(a, START)], ends[(a, END)]}
    jb = {ends[(b, START)], ends[(b, END)]}
    if ja != jb or len(ja) != 2:
        return None
    return a, b, ends


def _reverse_if(chain: np.ndarray, flag: bool) -> np.ndarray:
    return chain[::-1].copy() if flag else chain.copy()


def collapse_lens(cluster: ClusterMesh, phase: int, rule: str = "shortest") -> tuple[ClusterMesh, list[int], int]:
    """Remove one curve of a vanishing lens-shaped phase and splice the other.

    ``rule="shortest"`` removes the shorter bounding curve; ``rule="free"``
    removes the bounding curve that touches the exterior phase, falling back to
    the shorter one.
    Returns the new cluster, the old indices of the surviving curves and the
    removed curve.
    """
    topo = cluster.topology
    found = _lens(cluster, phase)
    if found is None:
        raise SurgeryUnsupported(f"phase {phase} is not a two-curve lens")
    a, b, ends = found
    lengths = {c: cluster.curve_length(c) for c in (a, b)}
    r = min((a, b), key=lambda c: (lengths[c], c))
    if rule == "free":
        touching = [c for c in (a, b) if topo.exterior in topo.orientation[c]]
        if len(touching) == 1:
            r = touching[0]
    k = b if r == a else a
    other = [x for x in topo.orientation[r] if x != phase][0]
    pk, nk = topo.orientation[k]
    new_pair = (other if pk == phase else pk, other if nk == phase else nk)
    if new_pair[0] == new_pair[1]:
        raise SurgeryUnsupported("lens collapse would leave a curve with one phase on both sides")

    j1, j2 = ends[(k, START)], ends[(k, END)]
    third = {}
    for jk in (j1, j2):
        junc = topo.junctions[jk]
        rest = [(c, e) for c, e in zip(junc.curves, junc.ends) if c not in (a, b)]
        third[jk] = rest[0]
    (c1, e1), (c2, e2) = third[j1], third[j2]

    # orient the kept curve like the curve it continues
    target = topo.orientation[c1]
    if set(target) != set(new_pair):
        raise SurgeryUnsupported("neighbouring curve does not separate the same phases")
    chain_k = np.array(cluster.curves[k])
    flip = new_pair != target
    chain_k = _reverse_if(chain_k, flip)
    k_start_j, k_end_j = (j2, j1) if flip else (j1, j2)

    if c1 == c2:
        # the third curve closes up with the kept one
        ch = np.array(cluster.curves[c1])
        if e1 == END and k_start_j == j1 or e2 == END and k_start_j == j2:
            # c1 runs into the start of k
            merged = np.vstack([ch, chain_k[1:-1]])
        else:
            merged = np.vstack([chain_k, ch[1:-1]])
        chains_new = {c1: merged}
        removed = {r, k}
        end_map = {}
    else:
        # c_in ends at k's start, c_out starts at k's end
        c_in, e_in = (c1, e1) if k_start_j == j1 else (c2, e2)
        c_out, e_out = (c2, e2) if k_start_j == j1 else (c1, e1)
        if e_in != END or e_out != START:
            raise SurgeryUnsupported("inconsistent traversal at the collapsing junctions")
        merged = np.vstack([cluster.curves[c_in], chain_k[1:-1], cluster.curves[c_out]])
        chains_new = {c_in: merged}
        removed = {r, k, c_out}
        end_map = {(c_out, END): (c_in, END)}

    kept = [c for c in range(cluster.num_curves) if c not in removed]
    index = {c: n for n, c in enumerate(kept)}
    junctions = []
    for jk, junc in enumerate(topo.junctions):
        if jk in (j1, j2):
            continue
        pairs = [end_map.get((c, e), (c, e)) for c, e in zip(junc.curves, junc.ends)]
        junctions.append(Junction(tuple(index[c] for c, _ in pairs), tuple(e for _, e in pairs)))
    chains = [chains_new.get(c, np.array(cluster.curves[c])) for c in kept]
    new = _rebuild(
        topo,
        chains,
        [topo.orientation[c] for c in kept],
        junctions,
        [topo.tension[c] for c in kept]
    )
    return new, kept, r


def surgery_small_phase(state, monitor: SurgeryMonitor, config, force: bool = False):
    """Apply one surgery if a region became too small.

    Triggers are a closed curve with nothing inside whose enclosed area fell
    below ``threshold`` times its initial value (or below 4 vertices), and a
    bounded phase whose area fell below ``threshold`` times its initial area.
    With ``force`` the smallest candidate is removed regardless of the
    threshold (used after a degenerate step).

    Returns
    -------
    (state, event) with ``event`` None when nothing was done.
    """
    from .evolution import initial_state

    cluster = state.cluster
    topo = cluster.topology
    thr = config.surgery_threshold
    enclosed = np.abs(signed_curve_areas(cluster))

    candidates = []
    for i in range(cluster.num_curves):
        if not topo.closed[i]:
            continue
        poly = cluster.curves[i]
        empty = all(
            not _point_in_polygon(cluster.curves[c][0], poly) for c in range(cluster.num_curves) if c != i
        )
        if not empty:
            continue
        ratio = enclosed[i] / max(monitor.enclosed0[i], 1e-300)
        if ratio < thr or len(poly) < 4 or force:
            candidates.append((ratio, "closed", i))
    areas = state.areas
    for ell in range(topo.num_phases):
        if ell == topo.exterior or monitor.phase_area0[ell] <= 0:
            continue
        ratio = areas[ell] / monitor.phase_area0[ell]
        if _lens(cluster, ell) is None:
            if ratio < thr and not any(
                ell in topo.orientation[i] and topo.closed[i] for _, _, i in candidates
            ):
                bounding = [i for i, pn in enumerate(topo.orientation) if ell in pn]
                if bounding and not all(topo.closed[i] for i in bounding):
                    raise SurgeryUnsupported(f"phase {ell} vanishes with an unsupported boundary")
            continue
        if ratio < thr or force:
            candidates.append((ratio, "lens", ell))
    if not candidates:
        return state, None
    candidates.sort()
    ratio, kind, idx = candidates[0]
    v_old = state.content
    if kind == "closed":
        new, kept = remove_closed_curve(cluster, idx)
        desc = f"removed closed curve {idx}"
    else:
        new, kept, removed = collapse_lens(cluster, idx, config.surgery_rule)
        desc = f"phase {idx} collapsed, removed curve {removed}"
    monitor.remap(kept)
    now = np.abs(signed_curve_areas(new))
    for n, c in enumerate(kept):
        if new.topology.closed[n] and not topo.closed[c]:
            # a merged curve starts a fresh reference area
            monitor.enclosed0[n] = float(now[n])
    fresh = initial_state(new, config.H, state.t)
    fresh = replace(fresh, step=state.step, tau=state.tau, iterations=state.iterations, events=(desc,))
    event = dict(
        t=state.t,
        step=state.step,
        kind=kind,
        description=desc,
        content_before=v_old,
        content_after=fresh.content,
        content_jump=fresh.content - v_old,
    )
    return fresh, event
