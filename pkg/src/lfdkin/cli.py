"""Command-line entry points: run, check-kernel, diagnose, resume.

Exit codes: 0 on success, 1 on validation errors (bad config, missing
files), 2 on runtime/numerical failures (solver breakdown, violated
thresholds under --assert).
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import acceptance
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (DiagnosticsRecord, conserved_moments,
                          entropy_dissipation, quantum_entropy)
from .driver import run_trajectory
from .evolution import EvolutionError
from .fields import DensityField
from .kernel import build_kernel_table, kernel_invariant_report
from .mean_field import coefficient_fields, ellipticity_probe
from .snapshots import SnapshotError, read_header, read_snapshot, write_snapshot

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _apply_thread_env():
    threads = os.environ.get("LFDKIN_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _build(cfg: RunConfig):
    grid = cfg.make_grid()
    table = build_kernel_table(grid.velocity, cfg.cross_section(),
                               cfg.kernel_config())
    return grid, table


def _csv_path(outdir):
    return os.path.join(outdir, "diagnostics.csv")


def _write_records(path, records, dim, append=False):
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(DiagnosticsRecord.csv_header(dim))
        for rec in records:
            writer.writerow(rec.csv_row())


def _read_records(path, dim):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = DiagnosticsRecord.csv_header(dim)
        if header != expected:
            raise ConfigError(f"{path}: unexpected CSV columns")
        for row in reader:
            vals = [float(x) for x in row[:-1]]
            records.append(DiagnosticsRecord(
                time=vals[0], mass=vals[1],
                momentum=tuple(vals[2:2 + dim]),
                kinetic_energy=vals[2 + dim], inertia=vals[3 + dim],
                entropy=vals[4 + dim], dissipation_increment=vals[5 + dim],
                cumulative_dissipation=vals[6 + dim],
                pauli_min=vals[7 + dim], pauli_max=vals[8 + dim],
                weighted_grad_norm=vals[9 + dim],
                picard_iters=int(row[-1])))
    return records


def _run_loop(cfg: RunConfig, outdir: str, f0: DensityField, table,
              start_records=None, append=False):
    os.makedirs(outdir, exist_ok=True)
    solver = cfg.solver_config()
    written = []

    def on_step(k, field, record):
        if k % cfg.snapshot_stride == 0 or field.time >= cfg.t_end - 1e-12:
            name = os.path.join(outdir, f"snapshot_{field.time:012.6f}.lfdk")
            write_snapshot(field, name, epsilon=cfg.epsilon,
                           kernel_index=cfg.kernel_n, gamma=cfg.gamma)
            written.append(name)

    traj = run_trajectory(f0, table, solver,
                          diagnostics_stride=cfg.diagnostics_stride,
                          dissipation_stride=cfg.dissipation_stride,
                          history_stride=cfg.history_stride,
                          on_step=on_step)
    records = traj.records if not append else traj.records[1:]
    _write_records(_csv_path(outdir), records, cfg.dim, append=append)
    summary = _summarize(cfg, traj)
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return traj, summary


def _summarize(cfg: RunConfig, traj):
    from .diagnostics import drift_check, entropy_inequality_check
    rep = drift_check(traj.records, cfg.epsilon, cfg.dim)
    ent = entropy_inequality_check(traj.records)
    m0 = traj.records[0].mass
    out = {
        "t_end": traj.records[-1].time,
        "mass_initial": m0,
        "mass_relative_drift": max(
            abs(r.mass - m0) for r in traj.records) / m0,
        "momentum_drift_over_mass": max(
            float(np.abs(np.array(r.momentum)
                         - np.array(traj.records[0].momentum)).max())
            for r in traj.records) / m0,
        "energy_drift_measured": rep["energy_drift_measured"],
        "energy_drift_predicted": rep["energy_drift_predicted"],
        "inertia_drift_measured": rep["inertia_drift_measured"],
        "inertia_drift_predicted": rep["inertia_drift_predicted"],
        "entropy_slack": ent["max_slack"],
        "entropy_initial": ent["entropy_initial"],
        "pauli_min": min(r.pauli_min for r in traj.records),
        "pauli_max": max(r.pauli_max for r in traj.records),
        "clamped_mass_total": traj.clamp_total,
        "transport_leak_total": traj.transport_leak_total,
        "picard_iters_max": max(r.picard_iters for r in traj.records),
    }
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = args.output or cfg.output_directory
    grid, table = _build(cfg)
    f0 = cfg.make_initial(grid)
    _run_loop(cfg, outdir, f0, table)
    print(f"run complete; outputs in {outdir}", file=sys.stderr)
    return EXIT_OK


def cmd_check_kernel(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    grid, table = _build(cfg)
    report = kernel_invariant_report(table)
    results = acceptance.crit_kernel_suite(report)
    report["checks"] = {r.name: bool(r.passed) for r in results}
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        with open(os.path.join(args.output, "kernel_report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def _recompute_from_snapshots(cfg: RunConfig, outdir, table, records):
    """Cross-check stored CSV rows against recomputed snapshot diagnostics."""
    checks = []
    by_time = {round(r.time, 9): r for r in records}
    for path in sorted(glob.glob(os.path.join(outdir, "snapshot_*.lfdk"))):
        f = read_snapshot(path)
        rec = by_time.get(round(f.time, 9))
        if rec is None:
            continue
        mom = conserved_moments(f)
        checks.append({
            "time": f.time,
            "mass_delta": abs(mom["mass"] - rec.mass),
            "energy_delta": abs(mom["kinetic_energy"] - rec.kinetic_energy),
            "entropy_delta": abs(quantum_entropy(f) - rec.entropy),
            "dissipation_recomputed": entropy_dissipation(f, table)
            if cfg.collision_enabled else 0.0,
        })
    return checks


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    outdir = args.output or cfg.output_directory
    csv_path = _csv_path(outdir)
    if not os.path.exists(csv_path):
        raise ConfigError(f"no diagnostics CSV found in {outdir}")
    records = _read_records(csv_path, cfg.dim)
    grid, table = _build(cfg)

    report = {"records": len(records)}
    from .diagnostics import drift_check, entropy_inequality_check
    rep = drift_check(records, cfg.epsilon, cfg.dim)
    ent = entropy_inequality_check(records)
    m0 = records[0].mass
    report["mass_relative_drift"] = max(
        abs(r.mass - m0) for r in records) / m0
    report["momentum_drift_over_mass"] = max(
        float(np.abs(np.array(r.momentum)
                     - np.array(records[0].momentum)).max())
        for r in records) / m0
    report["drift_check"] = {k: v for k, v in rep.items()}
    report["entropy_check"] = ent
    report["snapshot_crosschecks"] = _recompute_from_snapshots(
        cfg, outdir, table, records)

    snaps = sorted(glob.glob(os.path.join(outdir, "snapshot_*.lfdk")))
    if snaps:
        f_last = read_snapshot(snaps[-1])
        coeffs = coefficient_fields(f_last, table, method=cfg.conv_method)
        probe = ellipticity_probe(
            f_last, coeffs, alpha=cfg.probe_alpha, mu=cfg.probe_mu,
            radius=cfg.probe_radius, radius_star=cfg.probe_radius_star,
            n_samples=cfg.probe_samples)
        report["ellipticity_probe"] = probe.summary()

    results = []
    if args.do_assert:
        results = _assert_results(cfg, records, table)
        if args.suite == "full":
            results += _full_suite_results()
        report["assertions"] = [r.line() for r in results]
    print(json.dumps(report, indent=2, sort_keys=True))
    if results and not all(r.passed for r in results):
        return EXIT_RUNTIME
    return EXIT_OK


def _assert_results(cfg, records, table):
    from .driver import Trajectory
    traj = Trajectory(initial=None, final=None, records=records,
                      clamp_total=0.0)
    results = [
        acceptance.crit_mass_conservation(traj),
        acceptance.crit_momentum_conservation(traj),
        acceptance.crit_entropy_inequality(traj),
        acceptance.crit_pauli_bound(traj),
    ]
    if cfg.epsilon > 0 and cfg.collision_enabled:
        results.append(acceptance.crit_energy_drift_law(
            traj, cfg.epsilon, cfg.dim))
        if cfg.mode == "inhomogeneous":
            results.append(acceptance.crit_inertia_drift_law(
                traj, cfg.epsilon, cfg.dim))
    results += acceptance.crit_kernel_suite(kernel_invariant_report(table))
    results += acceptance.crit_oracle_equivalence()
    return results


def _full_suite_results():
    from .driver import run_trajectory as _run

    results = []
    # equilibrium stationarity
    grid, table, cfg, _ = acceptance.default_setup(
        epsilon=0.0, family="fermi-dirac-equilibrium",
        params={"a": 1.0, "b": 1.0}, regularize=False)
    from .fields import make_initial_datum
    f0 = make_initial_datum(grid, "fermi-dirac-equilibrium",
                            {"a": 1.0, "b": 1.0})
    traj = _run(f0, table, cfg, dissipation_stride=5)
    results.append(acceptance.crit_equilibrium_stationarity(traj, cfg.dt))
    # energy-law refinement
    devs = []
    for m in (48, 96):
        grid, table, cfg, f0 = acceptance.default_setup(points_per_axis=m)
        tr = _run(f0, table, cfg, dissipation_stride=10 ** 9)
        from .diagnostics import drift_check
        rep = drift_check(tr.records, cfg.epsilon, 2)
        devs.append(abs(rep["energy_drift_measured"]
                        - rep["energy_drift_predicted"])
                    / rep["energy_drift_predicted"])
        if m == 48:
            results.append(acceptance.crit_energy_drift_law(tr, cfg.epsilon, 2))
            results.append(acceptance.crit_entropy_inequality(tr))
            results.append(acceptance.crit_mass_conservation(tr))
            results.append(acceptance.crit_momentum_conservation(tr))
            results.append(acceptance.crit_pauli_bound(tr))
    results.append(acceptance.crit_energy_refinement(devs[0], devs[1]))
    # inertia law
    grid, table, cfg, f0 = acceptance.inhomogeneous_setup()
    tr = _run(f0, table, cfg, dissipation_stride=10 ** 9)
    results.append(acceptance.crit_inertia_drift_law(tr, cfg.epsilon, 2))
    # ladders
    results.append(acceptance.crit_weak_residual_ladder(
        acceptance.weak_residual_ladder()))
    results.append(acceptance.crit_viscosity_ladder(
        acceptance.viscosity_ladder_finals()))
    return results


def cmd_resume(args) -> int:
    cfg = load_config(args.config)
    outdir = args.output or cfg.output_directory
    snaps = sorted(glob.glob(os.path.join(outdir, "snapshot_*.lfdk")))
    if not snaps:
        raise ConfigError(f"no snapshots to resume from in {outdir}")
    latest = max(snaps, key=lambda p: read_header(p)["time"])
    grid, table = _build(cfg)
    f = read_snapshot(latest, expected_grid=grid)
    if f.time >= cfg.t_end - 1e-12:
        print("run already complete", file=sys.stderr)
        return EXIT_OK
    remaining = cfg.t_end - f.time
    resumed_cfg = RunConfig(**{**cfg.__dict__})
    resumed_cfg.t_end = remaining
    shifted = DensityField(grid=f.grid, samples=f.samples, time=0.0)
    # records from a resumed run carry times offset by the snapshot time
    solver = resumed_cfg.solver_config()

    def on_step(k, field, record):
        if k > 0 and (k % cfg.snapshot_stride == 0
                      or field.time >= remaining - 1e-12):
            t_abs = field.time + f.time
            name = os.path.join(outdir, f"snapshot_{t_abs:012.6f}.lfdk")
            write_snapshot(field.with_samples(field.samples, time=t_abs),
                           name, epsilon=cfg.epsilon,
                           kernel_index=cfg.kernel_n, gamma=cfg.gamma)

    traj = run_trajectory(shifted, table, solver,
                          diagnostics_stride=cfg.diagnostics_stride,
                          dissipation_stride=cfg.dissipation_stride,
                          on_step=on_step)
    for rec in traj.records:
        rec.time += f.time
    _write_records(_csv_path(outdir), traj.records[1:], cfg.dim, append=True)
    print(f"resumed from t={f.time:g} to t={cfg.t_end:g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfdkin",
        description="Landau-Fermi-Dirac phase-space solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a trajectory from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output", default=None)
    p_run.set_defaults(func=cmd_run)

    p_ck = sub.add_parser("check-kernel",
                          help="run the kernel invariant suite")
    p_ck.add_argument("--config", default=None)
    p_ck.add_argument("--output", default=None)
    p_ck.set_defaults(func=cmd_check_kernel)

    p_diag = sub.add_parser("diagnose",
                            help="recompute diagnostics from stored outputs")
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--output", default=None)
    p_diag.add_argument("--assert", dest="do_assert", action="store_true")
    p_diag.add_argument("--suite", choices=("single", "full"),
                        default="single")
    p_diag.set_defaults(func=cmd_diagnose)

    p_res = sub.add_parser("resume",
                           help="continue from the latest snapshot")
    p_res.add_argument("--config", required=True)
    p_res.add_argument("--output", default=None)
    p_res.set_defaults(func=cmd_resume)
    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EvolutionError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
