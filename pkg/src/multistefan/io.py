"""File formats: run configs and cluster files (YAML), time series and snapshots (CSV).

CSV files start with a ``# multistefan <kind> v<N>`` comment line; floats are
written with 17 significant digits so they read back exactly.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .cluster import END, START, ClusterMesh, ClusterTopology, Junction, build_cluster
from .diagnostics import radius_extrema
from .errors import ConfigError, MultiStefanError
from .evolution import RunConfig, initial_state

FORMAT_VERSION = 1
FLOAT = "%.17g"


class IoError(MultiStefanError, OSError):
    """Reading or writing a result file failed."""


def _f(x) -> str:
    return FLOAT % x


# ---------------------------------------------------------------- time series


def timeseries_header(num_phases: int, num_curves: int) -> list[str]:
    cols = ["t", "energy", "content"]
    cols += [f"area_{l}" for l in range(num_phases)]
    cols += ["grad_norm2"]
    for i in range(num_curves):
        cols += [f"rmin_{i}", f"rmax_{i}"]
    return cols


def write_timeseries(trajectory, path, num_phases: int | None = None, num_curves: int | None = None) -> None:
    """Write one row per snapshot.

    Curves removed by surgery leave ``nan`` in their radius columns; ``grad_norm2``
    is ``nan`` for the initial state.
    """
    snaps = list(getattr(trajectory, "snapshots", trajectory))
    if snaps:
        num_phases = num_phases or snaps[0].cluster.topology.num_phases
        num_curves = num_curves or max(s.cluster.num_curves for s in snaps)
    num_phases = num_phases or 0
    num_curves = num_curves or 0
    lines = [f"# multistefan timeseries v{FORMAT_VERSION}", ",".join(timeseries_header(num_phases, num_curves))]
    for s in snaps:
        ext = np.full((num_curves, 2), np.nan)
        r = radius_extrema(s.cluster)
        ext[: len(r)] = r
        row = [s.t, s.energy, s.content, *s.areas, s.grad_norm2 if s.grad_norm2 is not None else math.nan]
        row += list(ext.ravel())
        lines.append(",".join(_f(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def read_timeseries(path) -> dict[str, np.ndarray]:
    text = _read_text(path).splitlines()
    if not text or not text[0].startswith("# multistefan timeseries"):
        raise IoError(f"{path}: not a time-series file")
    cols = text[1].split(",")
    rows = [list(map(float, line.split(","))) for line in text[2:] if line]
    data = np.array(rows).reshape(-1, len(cols))
    return {c: data[:, k] for k, c in enumerate(cols)}


# ---------------------------------------------------------------- snapshots


@dataclass(eq=False)
class SnapshotData:
    t: float
    step: int
    curves: list[np.ndarray]
    kappa: list[np.ndarray | None]
    bulk_xy: np.ndarray | None = None
    W: np.ndarray | None = None

    @classmethod
    def from_state(cls, state) -> "SnapshotData":
        cm = state.cluster
        kappa = [
            None if state.kappa is None else np.asarray(state.kappa)[cm.offsets[i] : cm.offsets[i + 1]]
            for i in range(cm.num_curves)
        ]
        bulk_xy = state.bulk.vertices if state.bulk is not None and state.W is not None else None
        return cls(float(state.t), int(state.step), [np.array(c) for c in cm.curves], kappa, bulk_xy, state.W)


def write_snapshot(state, path) -> None:
    """Write curve vertices (with curvature) and, if present, bulk vertices with ``W``."""
    data = state if isinstance(state, SnapshotData) else SnapshotData.from_state(state)
    lines = [f"# multistefan snapshot v{FORMAT_VERSION}", f"# t={_f(data.t)}", f"# step={data.step}", "[curves]"]
    lines.append("curve,index,x,y,kappa")
    for i, q in enumerate(data.curves):
        k = data.kappa[i]
        for j, (x, y) in enumerate(q):
            lines.append(f"{i},{j},{_f(x)},{_f(y)},{'nan' if k is None else _f(k[j])}")
    lines.append("[bulk]")
    lines.append("index,x,y,W")
    if data.bulk_xy is not None:
        for j, ((x, y), w) in enumerate(zip(data.bulk_xy, data.W)):
            lines.append(f"{j},{_f(x)},{_f(y)},{_f(w)}")
    _write_text(path, "\n".join(lines) + "\n")


def read_snapshot(path) -> SnapshotData:
    lines = _read_text(path).splitlines()
    if not lines or not lines[0].startswith("# multistefan snapshot"):
        raise IoError(f"{path}: not a snapshot file")
    try:
        t = float(lines[1].split("=", 1)[1])
        step = int(lines[2].split("=", 1)[1])
        ci = lines.index("[curves]")
        bi = lines.index("[bulk]")
    except (IndexError, ValueError) as exc:
        raise IoError(f"{path}: malformed snapshot header") from exc
    curves: dict[int, list] = {}
    kap: dict[int, list] = {}
    for line in lines[ci + 2 : bi]:
        c, _, x, y, k = line.split(",")
        curves.setdefault(int(c), []).append((float(x), float(y)))
        kap.setdefault(int(c), []).append(float(k))
    n = max(curves) + 1 if curves else 0
    chains = [np.array(curves.get(i, []), dtype=float).reshape(-1, 2) for i in range(n)]
    kappa = []
    for i in range(n):
        k = np.array(kap.get(i, []), dtype=float)
        kappa.append(None if k.size and np.all(np.isnan(k)) else k)
    rows = [line.split(",") for line in lines[bi + 2 :] if line]
    if rows:
        arr = np.array([[float(v) for v in r[1:]] for r in rows])
        return SnapshotData(t, step, chains, kappa, arr[:, :2], arr[:, 2])
    return SnapshotData(t, step, chains, kappa)


# ---------------------------------------------------------------- YAML helpers


def _parse_yaml(text: str, source: str):
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}: {getattr(exc, 'problem', None) or exc}", line) from exc
    return node, data


def _lines(node, prefix=()) -> dict[tuple, int]:
    """Map key paths to 1-based line numbers."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            out.update(_lines(v, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[prefix + (i,)] = v.start_mark.line + 1
            out.update(_lines(v, prefix + (i,)))
    return out


class _Reader:
    def __init__(self, data, lines, source):
        self.data = data
        self.lines = lines
        self.source = source

    def fail(self, path, message):
        line = None
        for k in range(len(path), 0, -1):
            if tuple(path[:k]) in self.lines:
                line = self.lines[tuple(path[:k])]
                break
        raise ConfigError(f"{self.source}: {'.'.join(map(str, path))}: {message}", line)

    def mapping(self, obj, path, allowed):
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return obj


# ---------------------------------------------------------------- cluster files

_END_NAMES = {"start": START, "end": END, 0: START, 1: END}


def cluster_from_dict(data, reader: _Reader | None = None) -> ClusterMesh:
    """Build a cluster from the mapping form used by cluster files.

    Curves give either ``vertices`` or a ``circle`` with ``radius``, ``K`` and
    optional ``center`` and ``clockwise``.
    """
    from .scenarios import circle_chain

    reader = reader or _Reader(data, {}, "cluster")
    root = reader.mapping(data, (), {"beta", "exterior", "curves", "junctions"})
    if "beta" not in root or "curves" not in root:
        reader.fail((), "cluster needs 'beta' and 'curves'")
    orient, tension, chains = [], [], []
    for i, c in enumerate(root["curves"]):
        path = ("curves", i)
        c = reader.mapping(c, path, {"tension", "orientation", "vertices", "circle"})
        try:
            orient.append(tuple(int(v) for v in c["orientation"]))
            tension.append(float(c.get("tension", 1.0)))
            if "vertices" in c:
                chains.append(np.array(c["vertices"], dtype=float).reshape(-1, 2))
            elif "circle" in c:
                spec = reader.mapping(c["circle"], path + ("circle",), {"radius", "K", "center", "clockwise"})
                chains.append(
                    circle_chain(
                        float(spec["radius"]),
                        int(spec["K"]),
                        tuple(spec.get("center", (0.0, 0.0))),
                        bool(spec.get("clockwise", False)),
                    )
                )
            else:
                reader.fail(path, "curve needs 'vertices' or 'circle'")
        except (KeyError, TypeError, ValueError) as exc:
            reader.fail(path, f"invalid curve: {exc}")
    junctions = []
    for k, j in enumerate(root.get("junctions") or []):
        path = ("junctions", k)
        j = reader.mapping(j, path, {"curves", "ends"})
        try:
            ends = tuple(_END_NAMES[e] for e in j["ends"])
            junctions.append(Junction(tuple(int(c) for c in j["curves"]), ends))
        except (KeyError, TypeError, ValueError, MultiStefanError) as exc:
            reader.fail(path, f"invalid junction: {exc}")
    try:
        topo = ClusterTopology(
            beta=root["beta"],
            tension=tension,
            orientation=orient,
            junctions=junctions,
            exterior=root.get("exterior"),
        )
        return build_cluster(topo, chains)
    except MultiStefanError as exc:
        reader.fail((), str(exc))


def load_cluster(path) -> ClusterMesh:
    text = _read_text(path)
    node, data = _parse_yaml(text, str(path))
    return cluster_from_dict(data, _Reader(data, _lines(node), str(path)))


def cluster_to_dict(cluster: ClusterMesh) -> dict:
    topo = cluster.topology
    return dict(
        beta=[float(b) for b in topo.beta],
        exterior=int(topo.exterior),
        curves=[
            dict(
                tension=float(topo.tension[i]),
                orientation=list(topo.orientation[i]),
                vertices=[[float(x), float(y)] for x, y in cluster.curves[i]],
            )
            for i in range(cluster.num_curves)
        ],
        junctions=[
            dict(curves=list(j.curves), ends=["start" if e == START else "end" for e in j.ends])
            for j in topo.junctions
        ],
    )


def dump_cluster(cluster: ClusterMesh, path) -> None:
    _write_text(path, yaml.safe_dump(cluster_to_dict(cluster), sort_keys=False))


# ---------------------------------------------------------------- run configs

_RUN_KEYS = {f.name for f in fields(RunConfig)}
_TOP_KEYS = {"scenario", "params", "level", "run", "cluster", "snapshots"}


@dataclass
class RunSpec:
    scenario: str
    params: dict
    level: int | None
    config: RunConfig
    cluster: ClusterMesh
    H: float
    snapshots: bool = True


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunSpec:
    """Parse a run configuration.

    Raises
    ------
    ConfigError
        With the offending line number when it can be determined.
    """
    from .scenarios import SCENARIOS, level_settings, make_scenario

    node, data = _parse_yaml(text, source)
    reader = _Reader(data, _lines(node), source)
    if data is None:
        reader.fail((), "empty configuration")
    root = reader.mapping(data, (), _TOP_KEYS)
    name = root.get("scenario", "custom")
    if name != "custom" and name not in SCENARIOS:
        reader.fail(("scenario",), f"unknown scenario {name!r}")
    params = dict(reader.mapping(root.get("params"), ("params",), set(root.get("params") or {})))
    level = root.get("level")
    run_kw = dict(reader.mapping(root.get("run"), ("run",), _RUN_KEYS))
    if level is not None:
        try:
            ls = level_settings(int(level))
        except (TypeError, ValueError) as exc:
            reader.fail(("level",), str(exc))
        run_kw = {**dict(N_f=ls["N_f"], N_c=ls["N_c"], tau=ls["tau"]), **run_kw}
        if name in ("two_circles", "three_circles", "single_circle", "two_disks", "stationary_pair"):
            params.setdefault("K", ls["K"])
    if name == "custom":
        if "cluster" not in root:
            reader.fail((), "a custom scenario needs a 'cluster' block or file")
        spec = root["cluster"]
        if isinstance(spec, str):
            path = Path(spec) if base_dir is None else Path(base_dir) / spec
            cluster = load_cluster(path)
        else:
            cluster = cluster_from_dict(spec, _Reader(spec, {k[1:]: v for k, v in reader.lines.items() if k[:1] == ("cluster",)}, source))
        H = float(run_kw.get("H", 4.0))
    else:
        try:
            sc = make_scenario(name, **params)
        except TypeError as exc:
            reader.fail(("params",), f"invalid parameter: {exc}")
        except MultiStefanError as exc:
            reader.fail(("params",), str(exc))
        cluster = sc.cluster
        H = float(run_kw.get("H", sc.H))
    run_kw["H"] = H
    try:
        config = RunConfig(**run_kw)
    except (TypeError, ValueError) as exc:
        named = [k for k in run_kw if k in str(exc).split()]
        reader.fail(("run", named[0]) if named else ("run",), str(exc))
    try:
        initial_state(cluster, H)
    except MultiStefanError as exc:
        reader.fail(("cluster",) if name == "custom" else ("scenario",), str(exc))
    return RunSpec(name, params, level, config, cluster, H, bool(root.get("snapshots", True)))


def load_config(path) -> RunSpec:
    path = Path(path)
    return parse_config(_read_text(path, ConfigError), str(path), path.parent)


# ---------------------------------------------------------------- output folders


def output_root() -> Path:
    return Path(os.environ.get("MULTISTEFAN_OUT", "multistefan_runs"))


def run_directory(kind: str, root: Path | None = None) -> Path:
    """Fresh folder ``<root>/<kind>-<timestamp>[-n]``."""
    root = Path(root) if root is not None else output_root()
    stamp = time.strftime("%Y%m%d-%H%M%S")
    for n in range(1000):
        d = root / (f"{kind}-{stamp}" + (f"-{n}" if n else ""))
        try:
            d.mkdir(parents=True, exist_ok=False)
            return d
        except FileExistsError:
            continue
    raise IoError(f"could not create a run folder under {root}")


def write_metadata(directory: Path, **info) -> None:
    import numpy
    import scipy

    from . import __version__

    meta = dict(
        created=time.strftime("%Y-%m-%dT%H:%M:%S"),
        versions=dict(multistefan=__version__, python=platform.python_version(), numpy=numpy.__version__, scipy=scipy.__version__),
        format_version=FORMAT_VERSION,
    )
    meta.update(info)
    _write_text(Path(directory) / "metadata.json", json.dumps(meta, indent=2, default=_json_default) + "\n")


def config_dict(config: RunConfig) -> dict:
    return asdict(config)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    return str(obj)


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_text(path, error=IoError) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise error(f"cannot read {path}: {exc}") from exc
