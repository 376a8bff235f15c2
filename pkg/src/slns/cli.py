"""Experiment runner.

Experiments are described by a YAML config file (documented in the README)
naming a registered experiment, a solver block and optional experiment
options. Outputs land in the output directory:

* ``results.csv``  -- one row per verification check (kind, problem, check,
  error, tolerance, passed);
* ``estimates.csv`` -- raw point estimates where the experiment produces
  them (x coords, t, mean components, std-error components, n, seed, dt);
* ``summary.txt``  -- human-readable report (timings live only here so the
  CSV files are byte-identical across reruns).

Exit status is 0 iff every check passed. Output is a pure function of
(config, seed): reruns with any worker count produce identical CSV bytes.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np
import yaml

from . import reference as ref
from .errors import NumericError, UsageError
from .estimator import (BoundaryData, estimate_scalar_fk_many,
                        estimate_vorticity_many)
from .field import VectorField, grid_points, write_grid_dump
from .flow import run_ensemble
from .solver import (SolverConfig, VerificationReport, rel_l2,
                     solve_periodic_ns, verify_representation)

# ---------------------------------------------------------------------------
# config handling


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = yaml.safe_load(f)
    except OSError as e:
        raise UsageError(f"cannot read config {path!r}: {e}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise UsageError(f"malformed config {path!r}{where}: {e}") from e
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise UsageError(f"config {path!r} must be a mapping with an 'experiment' key")
    return cfg


def solver_config(cfg: dict, seed_override=None) -> SolverConfig:
    s = dict(cfg.get("solver", {}))
    seed = cfg.get("seed", 0) if seed_override is None else seed_override
    return SolverConfig(
        nu=float(s.get("nu", 1.0)),
        t_final=float(s.get("t_final", 0.1)),
        dt=float(s.get("dt", 1e-3)),
        dt_snap=float(s.get("dt_snap", s.get("dt", 1e-3))),
        shape=tuple(s.get("shape", (16, 33))),
        n_paths=int(s.get("n_paths", 1000)),
        picard_iters=int(s.get("picard_iters", 4)),
        picard_tol=float(s.get("picard_tol", 5e-3)),
        seed=int(seed),
        antithetic=bool(s.get("antithetic", False)),
        bridge=bool(s.get("bridge", True)),
    )


# ---------------------------------------------------------------------------
# experiments


def _run_verify(kind, problem):
    def run(cfg, workers, options, outdir):
        rep = verify_representation(kind, problem, cfg, workers=workers,
                                    options=options)
        return rep, rep.estimates
    return run


def _run_jacobian_volume(cfg, workers, options, outdir):
    from .solver import CheckResult
    t = cfg.t_final
    n_snap = int(round(t / cfg.dt_snap)) + 1
    series = ref.taylor_green_series(cfg.nu, cfg.shape, t, n_snap)
    pts = grid_points(ref.TG_DOMAIN, (8, 8)).reshape(-1, 2) + 0.1
    n = cfg.n_paths
    meds = {}
    for lev, dt in enumerate((cfg.dt, 0.5 * cfg.dt)):
        final, _, _ = run_ensemble(series, ref.TG_DOMAIN, pts, t, 0.0, dt,
                                   cfg.seed + lev, n, need_jacobian=True)
        jac = final["jacobian"].reshape(-1, 2, 2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        meds[dt] = float(np.median(np.abs(det - 1.0)))
    d1, d2 = cfg.dt, 0.5 * cfg.dt
    ratio = meds[d1] / max(meds[d2], 1e-300)
    checks = [
        CheckResult(f"median |det-1| at dt={d1:g}", meds[d1], 10 * d1,
                    meds[d1] <= 10 * d1),
        CheckResult(f"median |det-1| at dt={d2:g}", meds[d2], 10 * d2,
                    meds[d2] <= 10 * d2),
        CheckResult("halving ratio", -ratio, -1.7, ratio >= 1.7,
                    {"ratio": ratio}),
    ]
    return VerificationReport("jacobian_volume", "taylor_green", checks), []


def _run_leray_properties(cfg, workers, options, outdir):
    from .field import ScalarField, curl, divergence, gradient, leray_project
    from .solver import CheckResult
    domain = ref.TG_DOMAIN
    shape = cfg.shape
    rng = np.random.default_rng(cfg.seed)
    n_fields = int(options.get("n_fields", 100))
    worst = {"idempotence": 0.0, "gradient_annihilation": 0.0,
             "divergence": 0.0, "difference_curl": 0.0}
    for _ in range(n_fields):
        v = VectorField(domain, rng.standard_normal((*shape, 2)))
        p1 = leray_project(v, domain)
        p2 = leray_project(p1, domain)
        worst["idempotence"] = max(worst["idempotence"],
                                   float(np.abs(p2.values - p1.values).max()))
        worst["divergence"] = max(worst["divergence"],
                                  float(np.abs(divergence(p1, domain, spectral=True).values).max()))
        worst["difference_curl"] = max(worst["difference_curl"],
                                       float(np.abs(curl(VectorField(domain, p1.values - v.values),
                                                         domain, spectral=True).values).max()))
        phi = ScalarField(domain, rng.standard_normal(shape))
        g = gradient(phi, domain, spectral=True)
        worst["gradient_annihilation"] = max(worst["gradient_annihilation"],
                                             float(np.abs(leray_project(g, domain).values).max()))
    tol = float(options.get("tolerance", 1e-10))
    checks = [CheckResult(name, val, tol, val <= tol) for name, val in worst.items()]
    return VerificationReport("leray_properties", "random_fields", checks), []


def _run_solve_periodic(cfg, workers, options, outdir):
    from .solver import CheckResult
    domain = ref.TG_DOMAIN
    u0 = VectorField.from_callable(domain, cfg.shape,
                                   ref.make_callable(ref.tg_velocity_at, cfg.nu, 0.0))
    series = solve_periodic_ns(u0, cfg, domain, workers=workers)
    pts = grid_points(domain, cfg.shape).reshape(-1, 2)
    checks = []
    energies = []
    for t in series.times:
        exact = ref.taylor_green(cfg.nu, t, pts).reshape(*cfg.shape, 2)
        err = rel_l2(series.values_at(float(t)), exact)
        energies.append(float(np.sqrt(np.mean(series.values_at(float(t)) ** 2))))
        checks.append(CheckResult(f"rel_l2 at t={t:g}", err,
                                  float(options.get("tolerance", 0.05)),
                                  err <= float(options.get("tolerance", 0.05))))
    slack = 3.0 / np.sqrt(cfg.n_paths)
    mono = all(energies[i + 1] <= energies[i] + slack for i in range(len(energies) - 1))
    checks.append(CheckResult("energy non-increasing (within CI slack)",
                              0.0 if mono else 1.0, 0.5, mono))
    if outdir and bool(options.get("dump_fields", False)):
        write_grid_dump(os.path.join(outdir, "u_final.txt"),
                        series.snapshots[-1].values, domain, float(series.times[-1]))
    return VerificationReport("solve_periodic_ns", "taylor_green", checks), []


def _fit_slope(xs, ys):
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def _run_ladder(cfg, workers, options, outdir):
    from .solver import CheckResult
    mode = options.get("mode")
    case = options.get("case")
    levels = list(options.get("levels", []))
    if mode not in ("dt", "n"):
        raise UsageError("ladder options need mode: dt or n")
    if len(levels) < 3:
        raise UsageError("a ladder needs at least 3 levels")
    point = np.asarray(options.get("point", (0.5, 0.5)), dtype=float)
    t = float(options.get("t", cfg.t_final))
    rows = []
    errors, ses = [], []
    for i, lev in enumerate(levels):
        if mode == "dt":
            dt = float(lev)
            n = int(options.get("n_paths", [cfg.n_paths] * len(levels))[i]) \
                if isinstance(options.get("n_paths"), (list, tuple)) else cfg.n_paths
        else:
            dt = float(options.get("dt", cfg.dt))
            n = int(lev)
        mean, se, oracle = _ladder_point(case, cfg, point, t, n, dt, workers)
        err = abs(float(mean) - oracle)
        errors.append(max(err, 1e-300))
        ses.append(se)
        rows.append([mode, repr(float(lev)), repr(err), repr(se), n, repr(dt)])
    if mode == "dt":
        slope = _fit_slope(levels, errors)
        band = options.get("slope_band", (0.7, 1.3))
    else:
        slope = _fit_slope(levels, ses)
        band = options.get("slope_band", (-0.6, -0.4))
    lo, hi = float(band[0]), float(band[1])
    checks = [CheckResult(f"{mode}-ladder slope ({case})", slope, hi,
                          lo <= slope <= hi, {"band": [lo, hi]})]
    rep = VerificationReport("ladder", case or "?", checks,
                             estimate_header=["mode", "level", "error",
                                              "std_error", "n", "dt"])
    return rep, rows


def _pooled_point_estimate(estimate_many, n, group_cap=200000, **kw):
    """Split one point's n samples into fixed groups and pool the stats.

    Groups are keyed by their index so the split (and hence every drawn
    increment) is independent of worker count; pooling group means is exact
    for the overall mean and its standard error.
    """
    groups = max(1, -(-n // group_cap))
    ng = n // groups
    counts = [ng + (1 if i < n - ng * groups else 0) for i in range(groups)]
    means, variances = [], []
    for i, c in enumerate(counts):
        est = estimate_many(points_index=i, n=c, **kw)
        means.append(est.mean * c)
        variances.append((est.std_error * c) ** 2)
    mean = sum(means) / n
    se = float(np.sqrt(sum(variances))) / n
    return mean, se


def _ladder_point(case, cfg, point, t, n, dt, workers):
    group_cap = 200000
    if case == "scalar_fk_heat_slab":
        domain = ref.CHANNEL_DOMAIN
        series = ref.zero_series(domain, cfg.shape, t, cfg.nu)
        data = BoundaryData(theta0=ref.make_callable(ref.heat_slab_theta0_at, ((1, 1.0),)),
                            g=0.0)
        oracle = float(ref.heat_slab(cfg.nu, t, point[1]))

        def one(points_index, n):
            return estimate_scalar_fk_many(
                series, domain, data, [point], t, n, dt,
                cfg.seed + points_index, bridge=cfg.bridge, workers=workers)[0]
        mean, se = _pooled_point_estimate(one, n, group_cap)
        return mean, se, oracle
    if case == "vorticity_channel_decay":
        domain = ref.CHANNEL_DOMAIN
        n_snap = int(round(t / cfg.dt_snap)) + 1
        series = ref.channel_series(cfg.nu, cfg.shape, t, n_snap)
        data = BoundaryData(omega0=ref.make_callable(ref.channel_omega0_at, cfg.nu),
                            omega_wall=ref.make_callable(ref.channel_vorticity_at, cfg.nu))
        oracle = float(ref.channel_decay(cfg.nu, t, point[1])[1])

        def one(points_index, n):
            return estimate_vorticity_many(
                series, domain, data, [point], t, n, dt, cfg.seed + points_index,
                bridge=cfg.bridge, workers=workers)[0]
        mean, se = _pooled_point_estimate(one, n, group_cap)
        return mean, se, oracle
    raise UsageError(f"ladder case {case!r} not registered; "
                     "known: scalar_fk_heat_slab, vorticity_channel_decay")


EXPERIMENTS = {
    "scalar_fk_heat_slab": _run_verify("scalar_fk", "heat_slab"),
    "weber_taylor_green": _run_verify("weber", "taylor_green"),
    "weber_channel_decay": _run_verify("weber", "channel_decay"),
    "vorticity_channel_decay": _run_verify("vorticity", "channel_decay"),
    "martingale_channel_decay": _run_verify("martingale", "channel_decay"),
    "circulation_taylor_green": _run_verify("circulation", "taylor_green"),
    "jacobian_volume": _run_jacobian_volume,
    "leray_properties": _run_leray_properties,
    "solve_periodic_ns_taylor_green": _run_solve_periodic,
    "ladder": _run_ladder,
}


def list_experiments() -> str:
    return "\n".join(sorted(EXPERIMENTS))


# ---------------------------------------------------------------------------
# output


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run(config_path: str, output_dir=None, seed=None, workers=1,
        verbose=False) -> int:
    """Execute the experiment named in the config; return the exit status."""
    cfg_dict = load_config(config_path)
    name = cfg_dict["experiment"]
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; registered experiments:\n"
                         + list_experiments())
    cfg = solver_config(cfg_dict, seed_override=seed)
    options = dict(cfg_dict.get("options", {}))
    outdir = output_dir or cfg_dict.get("output_dir", "slns_out")
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    workers = int(cfg_dict.get("workers", workers) if workers == 1 else workers)

    report, estimate_rows = EXPERIMENTS[name](cfg, workers, options, outdir)
    elapsed = time.perf_counter() - t0

    _write_csv(os.path.join(outdir, "results.csv"),
               ["kind", "problem", "check", "error", "tolerance", "passed"],
               list(report.csv_rows()))
    if estimate_rows:
        header = report.estimate_header or [f"c{i}" for i in range(len(estimate_rows[0]))]
        _write_csv(os.path.join(outdir, "estimates.csv"), header, estimate_rows)
    with open(os.path.join(outdir, "summary.txt"), "w", encoding="utf-8") as f:
        f.write(f"experiment: {name}\nconfig: {os.path.abspath(config_path)}\n")
        f.write(f"seed: {cfg.seed}\nworkers: {workers}\n")
        f.write(report.to_text() + "\n")
        f.write(f"wall time: {elapsed:.1f} s\n")
    if verbose:
        print(report.to_text())
    print(f"{name}: {'PASS' if report.passed else 'FAIL'} "
          f"({len(report.checks)} checks, {elapsed:.1f} s) -> {outdir}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slns", description="stochastic-Lagrangian flow experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment named in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("list-experiments", help="print registered experiment names")

    args = parser.parse_args(argv)
    try:
        if args.command == "list-experiments":
            print(list_experiments())
            return 0
        return run(args.config, output_dir=args.output_dir, seed=args.seed,
                   workers=args.workers, verbose=args.verbose)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric error: {e} {e.details}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
