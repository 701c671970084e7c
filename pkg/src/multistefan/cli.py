"""Command-line driver.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 unsupported topology event.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .diagnostics import CircleOracle, ErrorReport, ErrorTracker, discrete_radii
from .errors import ConfigError, MultiStefanError, SurgeryUnsupported, TopologyError
from .evolution import RunConfig, run
from .io import (
    load_config,
    run_directory,
    write_metadata,
    write_snapshot,
    write_timeseries,
)
from .scenarios import level_settings, make_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOPOLOGY = 0, 1, 2, 3
ORACLE_SCENARIOS = ("two_circles", "three_circles", "stationary_pair")

log = logging.getLogger("multistefan")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (SurgeryUnsupported, TopologyError)):
        return EXIT_TOPOLOGY
    return EXIT_NUMERIC


def _oracle(name: str, params: dict, T: float) -> CircleOracle | None:
    if name not in ORACLE_SCENARIOS:
        return None
    if name == "three_circles":
        return CircleOracle.three(params["beta"], params["radii"], T)
    return CircleOracle.two(params["beta"], params["radii"], T)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in r])


def cmd_run(args) -> int:
    try:
        spec = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = run_directory("run", args.out)
    snap_dir = out / "snapshots"
    if spec.snapshots:
        snap_dir.mkdir()

    def observer(state):
        if spec.snapshots and state.step % spec.config.output_every == 0:
            write_snapshot(state, snap_dir / f"snapshot_{state.step:06d}.csv")

    start = time.perf_counter()
    traj = run(spec.config, spec.cluster, observer, raise_errors=False)
    elapsed = time.perf_counter() - start
    write_timeseries(traj, out / "timeseries.csv")
    if traj.step_log:
        _write_rows(out / "steps.csv", list(traj.step_log[0]), [list(r.values()) for r in traj.step_log])
    if traj.events:
        _write_rows(out / "events.csv", list(traj.events[0]), [list(e.values()) for e in traj.events])
    sc_params = dict(make_scenario(spec.scenario, **spec.params).params) if spec.scenario != "custom" else {}
    oracle = _oracle(spec.scenario, sc_params, spec.config.T)
    if oracle is not None:
        rows = []
        for s in traj.snapshots:
            if oracle.covers(s.t) and s.cluster.num_curves == len(oracle.radii.R[0]):
                rows.append([s.t, *discrete_radii(s.cluster), *oracle.radii_at(s.t)])
        n = oracle.radii.R.shape[1]
        _write_rows(out / "radii.csv", ["t"] + [f"R{i}" for i in range(n)] + [f"R{i}_exact" for i in range(n)], rows)
    write_metadata(
        out,
        command="run",
        config_file=str(args.config),
        scenario=spec.scenario,
        params=spec.params,
        level=spec.level,
        run=asdict(spec.config),
        steps=len(traj.step_log),
        seconds=round(elapsed, 3),
        error=str(traj.error) if traj.error else None,
    )
    final = traj.final
    print(f"t={final.t:.6g} steps={len(traj.step_log)} energy={final.energy:.10g} content={final.content:.12g}")
    print(f"output: {out}")
    if traj.error is not None:
        print(f"error: {traj.error}", file=sys.stderr)
        return exit_code(traj.error)
    return EXIT_OK


def converge_level(scenario: str, level: int, scheme: str, T: float, mode: str = "true") -> dict:
    """Run one refinement level and return its table row (or the error)."""
    ls = level_settings(level)
    sc = make_scenario(scenario, K=ls["K"])
    config = RunConfig(scheme=scheme, tau=ls["tau"], T=T, H=sc.H, N_c=ls["N_c"], N_f=ls["N_f"], mode=mode, keep_bulk=True)
    tracker = ErrorTracker(_oracle(scenario, sc.params, T))
    start = time.perf_counter()
    try:
        run(config, sc.cluster, tracker)
    except MultiStefanError as exc:
        return dict(level=level, error=str(exc), code=exit_code(exc))
    report = tracker.report(2 * config.H / config.N_f)
    return dict(level=level, report=asdict(report), seconds=time.perf_counter() - start)


def cmd_converge(args) -> int:
    try:
        levels = sorted({int(x) for x in args.levels.split(",") if x.strip()})
        for lv in levels:
            level_settings(lv)
    except ValueError as exc:
        print(f"config error: invalid levels {args.levels!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.scenario not in ORACLE_SCENARIOS:
        print(f"config error: scenario {args.scenario!r} has no exact solution", file=sys.stderr)
        return EXIT_CONFIG
    out = run_directory("converge", args.out)
    jobs = [(args.scenario, lv, args.scheme, args.T, args.mode) for lv in levels]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(converge_level, *zip(*jobs)))
    else:
        results = [converge_level(*j) for j in jobs]
    rows, code = [], EXIT_OK
    for res in results:
        if "error" in res:
            print(f"level {res['level']}: {res['error']}", file=sys.stderr)
            rows.append([res["level"]] + [float("nan")] * len(ErrorReport.COLUMNS) + [res["error"]])
            code = max(code, res["code"])
            continue
        rep = res["report"]
        rows.append([res["level"]] + [rep[c] for c in ErrorReport.COLUMNS] + [""])
        print(
            f"level {res['level']}: h_f={rep['h_f']:.4e} h_gamma={rep['h_gamma']:.4e} "
            f"error_w={rep['error_w']:.4e} error_gamma={rep['error_gamma']:.4e} "
            f"K_omega={rep['K_omega']} K_gamma={rep['K_gamma']} v_delta={rep['v_delta']:.3e} ({res['seconds']:.1f}s)"
        )
    _write_rows(out / "table.csv", ["level", *ErrorReport.COLUMNS, "error"], rows)
    write_metadata(out, command="converge", scenario=args.scenario, levels=levels, scheme=args.scheme, T=args.T, mode=args.mode)
    print(f"output: {out}")
    return code


def cmd_verify(args) -> int:
    from .verify import InvariantFailure, run_checks

    try:
        run_checks(args.inject_fault)
    except InvariantFailure as exc:
        print(f"FAIL {exc.name}: {exc.detail}")
        return EXIT_NUMERIC
    print("all invariants hold")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multistefan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--out", type=Path, default=None, help="output root (default: $MULTISTEFAN_OUT or ./multistefan_runs)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve one configuration")
    r.add_argument("--config", required=True, type=Path)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="error table over refinement levels")
    c.add_argument("--scenario", default="two_circles")
    c.add_argument("--levels", default="0,1")
    c.add_argument("--scheme", choices=("linear", "conservative"), default="linear")
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--mode", choices=("true", "lumped"), default="true")
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_converge)

    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--inject-fault", choices=("projection", "jump_sign"), default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MultiStefanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
