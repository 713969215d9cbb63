"""Command-line interface.

    hfvdd equilibrium testcase4.cfg --out out/
    hfvdd transient testcase4.cfg --snapshots 0,1,5
    hfvdd decay-scan testcase6.cfg --b 0,1,2,3,5
    hfvdd mesh-check some.mesh

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 IO error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, eval_number, load_config
from .diagnostics import FitError, fit_decay_rate, write_timeseries
from .fields import write_fields
from .mesh import MeshError, build_from_spec, load_mesh, regularity, validate_mesh
from .poisson import PoissonError, thermal_equilibrium
from .problem import SetupError
from .statistics import DomainError
from .transient import StepFailure, run_transient

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _floats(text):
    try:
        return [eval_number(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="hfvdd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config_path", nargs="?", help="run configuration (shipped name or path)")
        p.add_argument("--config", dest="config_opt", help="run configuration")
        p.add_argument("--mesh", help="mesh file or builder spec, overrides the config")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--seed", type=int, default=0, help="unused by the deterministic solvers")

    p = sub.add_parser("equilibrium", help="solve for the thermal equilibrium and write fields")
    common(p)
    p = sub.add_parser("transient", help="integrate in time and write the time series")
    common(p)
    p.add_argument("--snapshots", type=_floats, help="comma-separated simulated times")
    p = sub.add_parser("decay-scan", help="fit entropy decay rates over magnetic fields")
    common(p)
    p.add_argument("--b", type=_floats, default=[0.0, 1.0, 2.0, 3.0, 5.0], help="comma-separated b values")
    p.add_argument("--fit-below", type=float, default=1e-2,
                   help="fit only records with E < fit_below * E^0 (default 1e-2)")
    p = sub.add_parser("mesh-check", help="validate a mesh and print its regularity")
    p.add_argument("mesh_path", help="mesh file or builder spec")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    return ap


def _config(args) -> RunConfig:
    src = args.config_opt or args.config_path
    if src is None:
        raise CliError("a configuration file is required", EXIT_CONFIG)
    try:
        cfg = load_config(src)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from exc
    except ConfigError as exc:
        raise CliError("invalid config:\n  " + "\n  ".join(exc.errors), EXIT_CONFIG) from exc
    if args.mesh:
        cfg.mesh = args.mesh
    if args.out:
        cfg.out = args.out
    return cfg


def _mesh(spec):
    try:
        return build_from_spec(spec)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read mesh: {exc}", EXIT_IO) from exc
    except (MeshError, ValueError) as exc:
        raise CliError(f"invalid mesh {spec!r}: {exc}", EXIT_CONFIG) from exc


def _outdir(cfg):
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory: {exc}", EXIT_IO) from exc
    return out


def _meta(out, cfg, mesh, **extra):
    meta = dict(name=cfg.name, mesh=cfg.mesh, ncells=mesh.ncells, nfaces=mesh.nfaces,
                statistics=cfg.statistics, bounded=math.isfinite(cfg.model.upper_bound),
                upper_bound=cfg.model.upper_bound if math.isfinite(cfg.model.upper_bound) else None,
                b=cfg.b, debye=cfg.debye, recombination=cfg.recombination,
                n0=cfg.n0, n1=cfg.n1, alpha0=cfg.alpha0, dt=cfg.stepper.dt, t_end=cfg.t_end,
                version=__version__)
    meta.update(extra)
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _setup(cfg, mesh, b=None):
    try:
        return cfg.build_setup(mesh, b=b)
    except (SetupError, DomainError, ValueError) as exc:
        raise CliError(f"invalid problem setup: {exc}", EXIT_CONFIG) from exc


def cmd_equilibrium(args):
    cfg = _config(args)
    mesh = _mesh(cfg.mesh)
    setup = _setup(cfg, mesh)
    eq = thermal_equilibrium(setup)
    out = _outdir(cfg)
    paths = write_fields(mesh, eq, out / f"{cfg.name}_equilibrium", cfg.field_format)
    _meta(out, cfg, mesh, command="equilibrium", newton_iterations=eq.iterations,
          residual=eq.residual, files=[p.name for p in paths])
    print(f"equilibrium: {eq.iterations} Newton iterations, residual {eq.residual:.3e}")
    print(f"phi in [{eq.phi.min():.6g}, {eq.phi.max():.6g}]; wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK


def cmd_transient(args):
    cfg = _config(args)
    mesh = _mesh(cfg.mesh)
    setup = _setup(cfg, mesh)
    out = _outdir(cfg)
    schedule = sorted(args.snapshots if args.snapshots is not None else cfg.snapshots)
    schedule = [s for s in schedule if s <= cfg.t_end]
    records, written = [], []

    def hook(state, record):
        records.append(record)
        while len(written) < len(schedule) and state.t >= schedule[len(written)] - 1e-12:
            tag = f"{cfg.name}_t{len(written):03d}"
            written.append(write_fields(mesh, state, out / tag, cfg.field_format)[0].name)

    csv_path = out / f"{cfg.name}.csv"
    try:
        ts = run_transient(setup, cfg.stepper, cfg.t_end, hooks=[hook])
    except (StepFailure, PoissonError) as exc:
        write_timeseries(records, csv_path, setup.model.upper_bound)
        _meta(out, cfg, mesh, command="transient", partial=True, error=str(exc),
              snapshots=written)
        raise CliError(f"solver failure: {exc} (partial output in {csv_path})", EXIT_SOLVER) from exc
    write_timeseries(ts.records, csv_path, setup.model.upper_bound)
    _meta(out, cfg, mesh, command="transient", partial=False, steps=len(ts.dt_history),
          total_cost=ts.total_cost, rejections=ts.rejections, snapshots=written)
    last = ts.records[-1]
    print(f"transient: {len(ts.dt_history)} steps, cost {ts.total_cost}, "
          f"{ts.rejections} rejected attempts; E(t_end) = {last.entropy:.6e}")
    print(f"wrote {csv_path} and {len(written)} snapshot(s)")
    return EXIT_OK


def cmd_decay_scan(args):
    cfg = _config(args)
    mesh = _mesh(cfg.mesh)
    out = _outdir(cfg)
    rows = []
    for b in args.b:
        setup = _setup(cfg, mesh, b=b)
        try:
            ts = run_transient(setup, cfg.stepper, cfg.t_end)
        except (StepFailure, PoissonError) as exc:
            raise CliError(f"solver failure at b={b:g}: {exc}", EXIT_SOLVER) from exc
        write_timeseries(ts.records, out / f"{cfg.name}_b{b:g}.csv", setup.model.upper_bound)
        E0 = ts.records[0].entropy
        try:
            fit = fit_decay_rate([r for r in ts.records if r.entropy < args.fit_below * E0])
        except FitError as exc:
            raise CliError(f"decay fit failed at b={b:g}: {exc}", EXIT_SOLVER) from exc
        rows.append((b, fit))
    nu0 = rows[0][1].rate if rows and rows[0][0] == 0 else None
    lines = ["b,rate,r2,points,ratio_to_b0,isotropic_law"]
    for b, fit in rows:
        ratio = fit.rate / nu0 if nu0 else float("nan")
        lines.append(f"{b:g},{fit.rate!r},{fit.r2!r},{fit.npoints},{ratio!r},{1 / math.sqrt(1 + b * b)!r}")
    (out / f"{cfg.name}_rates.csv").write_text("\n".join(lines) + "\n")
    _meta(out, cfg, mesh, command="decay-scan", b_values=list(args.b))
    print(f"{'b':>6} {'rate':>10} {'R2':>10} {'ratio':>8} {'1/sqrt(1+b^2)':>14}")
    for b, fit in rows:
        ratio = fit.rate / nu0 if nu0 else float("nan")
        print(f"{b:6g} {fit.rate:10.5f} {fit.r2:10.7f} {ratio:8.4f} {1 / math.sqrt(1 + b * b):14.4f}")
    return EXIT_OK


def cmd_mesh_check(args):
    path = Path(args.mesh_path)
    try:
        mesh = load_mesh(path) if path.exists() else build_from_spec(args.mesh_path)
        validate_mesh(mesh, require_dirichlet=False)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read mesh: {exc}", EXIT_IO) from exc
    except (MeshError, ValueError) as exc:
        raise CliError(f"invalid mesh: {exc}", EXIT_CONFIG) from exc
    rep = regularity(mesh)
    print(f"cells {mesh.ncells}, faces {mesh.nfaces}, Dirichlet faces {len(mesh.dirichlet_faces)}")
    print(f"mesh size {rep.mesh_size:.6g} (squared {rep.size_squared:.3g}), regularity theta {rep.theta:.6g}")
    flagged = rep.flagged()
    if len(flagged):
        print(f"cells above the regularity threshold: {list(map(int, flagged))}")
    return EXIT_OK


COMMANDS = {"equilibrium": cmd_equilibrium, "transient": cmd_transient,
            "decay-scan": cmd_decay_scan, "mesh-check": cmd_mesh_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PoissonError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
