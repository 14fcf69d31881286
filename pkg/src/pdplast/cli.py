"""Command-line entry point: ``pdplast <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 success, 1 a check or study criterion failed, 2 bad
configuration, 3 solver failure.
"""
import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np
import scipy.fft

from . import __version__, tensors
from .config import ConfigError, default_config, load_config
from .local_reference import run_local_quasistatic
from .quasistatic import energy_ledger, run_quasistatic
from .solver import SolverError
from .studies import (StudyError, delta_sweep_study, korn_constant_study, make_load, make_table,
                      pointwise_energy_convergence_study, verify_suite)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows):
    """Comma-separated, header row, LF endings, round-trip float formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_cell(r[c]) for c in columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no inf/nan
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _manifest(cfg, command, reproducible, runtime, extra):
    m = {"command": command, "config_digest": cfg.digest(), "version": f"pdplast {__version__}",
         "config": cfg.to_dict()}
    if not reproducible:
        m["runtime_seconds"] = runtime
    m.update(extra)
    return m


# ---------------------------------------------------------------- subcommands


def _simulate(cfg, out, reproducible):
    grid = cfg.build_grid()
    params = cfg.material_params()
    scfg = cfg.solver_config()
    load = make_load(cfg, grid)
    P0 = np.zeros((grid.n_cells, tensors.dev_dim(grid.n)))
    runtime = {}
    t0 = time.perf_counter()
    if cfg.study.simulate_model == "local":
        traj = run_local_quasistatic(P0, load, cfg.steps, grid, params, scfg)
        where = grid
        label = "local"
    else:
        fam, d = cfg.kernel.families[0], cfg.kernel.deltas[0]
        where = make_table(cfg, grid, fam, d)
        traj = run_quasistatic(P0, load, cfg.steps, where, params, scfg)
        label = f"{fam}:{d}"
    runtime["trajectory"] = time.perf_counter() - t0
    certs = [c.summary() for c in traj.certificates]
    if traj.flagged:
        write_json(os.path.join(out, "manifest.json"),
                   _manifest(cfg, "simulate", reproducible, runtime,
                             {"model": label, "passed": False, "message": traj.message,
                              "certificates": certs}))
        raise SolverError(traj.message)
    led = energy_ledger(traj, load, where, params)
    write_csv(os.path.join(out, "timeseries.csv"),
              ("step", "t", "F", "H_step", "Diss", "work", "upper_gap", "balance_residual"),
              led.rows())
    if cfg.study.point_cloud:
        _point_clouds(out, grid, traj)
    ok = bool(np.min(led.upper_gap) >= -1e-12 * led.scale)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "simulate", reproducible, runtime,
                         {"model": label, "passed": ok, "energy_scale": led.scale,
                          "certificates": certs}))
    return ok


def _point_clouds(out, grid, traj):
    n = grid.n
    axes = ("x", "y", "z")[:n]
    k = tensors.dev_dim(n)
    cols = list(axes) + [f"u{a}" for a in axes] + [f"P{j}" for j in range(k)]
    for m, st in enumerate(traj.states):
        data = np.hstack([grid.centers, st.u.reshape(-1, n), st.P.reshape(-1, k)])
        write_csv(os.path.join(out, f"points_{m:04d}.csv"), cols,
                  (dict(zip(cols, row)) for row in data))


def _sweep(cfg, out, reproducible):
    rep = delta_sweep_study(cfg)
    cols = ("delta", "e_u", "e_P", "e_P_block", "rate_u", "rate_P")
    for fam in cfg.kernel.families:
        write_csv(os.path.join(out, f"convergence_{fam}.csv"), cols,
                  [r for r in rep.rows if r["family"] == fam])
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "sweep-delta", reproducible, rep.runtime,
                         {"monotone": rep.monotone, "passed": rep.passed}))
    return rep.passed


def _energy(cfg, out, reproducible):
    rep = pointwise_energy_convergence_study(cfg)
    cols = tuple(c for c in rep.columns if c != "family")
    for fam in cfg.kernel.families:
        write_csv(os.path.join(out, f"energy_{fam}.csv"), cols,
                  [r for r in rep.rows if r["family"] == fam])
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "energy-convergence", reproducible, rep.runtime,
                         {"flags": rep.flags, "passed": rep.passed}))
    return rep.passed


def _korn(cfg, out, reproducible):
    rep = korn_constant_study(cfg)
    write_csv(os.path.join(out, "korn.csv"), rep.columns, rep.rows)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "korn", reproducible, rep.runtime, {"passed": rep.passed}))
    return rep.passed


def _verify(cfg, out, reproducible):
    rep = verify_suite(cfg)
    write_json(os.path.join(out, "verify.json"), rep.to_dict(reproducible))
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "verify", reproducible, rep.runtime,
                         {"passed": rep.passed,
                          "checks": {k: v["passed"] for k, v in rep.checks.items()}}))
    for name, res in rep.checks.items():
        print(f"{'PASS' if res['passed'] else 'FAIL'}  {name}")
    return rep.passed


COMMANDS = {"simulate": _simulate, "sweep-delta": _sweep, "energy-convergence": _energy,
            "korn": _korn, "verify": _verify}


def build_parser():
    p = argparse.ArgumentParser(prog="pdplast",
                                description="Nonlocal linearized elastoplasticity studies.")
    p.add_argument("--version", action="version", version=f"pdplast {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"simulate": "single quasistatic run with its energy ledger",
             "sweep-delta": "horizon sweep against the local reference",
             "energy-convergence": "pointwise energy localization on manufactured fields",
             "korn": "nonlocal Korn constants per horizon",
             "verify": "named self-checks with a JSON verdict"}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="YAML study configuration (defaults if omitted)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, help="FFT worker threads (overrides the config)")
        sp.add_argument("--reproducible", action="store_true",
                        help="omit runtimes so repeated runs give identical files")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        if args.reproducible:
            cfg.reproducible = True
        out = args.out or cfg.output
        os.makedirs(out, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with scipy.fft.set_workers(cfg.threads):
            ok = COMMANDS[args.command](cfg, out, cfg.reproducible)
    except (SolverError, StudyError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
