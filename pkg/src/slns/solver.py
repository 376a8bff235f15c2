"""Fixed-point velocity solver, boundary-weight PDE solve and verification.

``solve_periodic_ns`` closes the representation loop on the torus: each new
snapshot is obtained by Picard iteration of

    u  <-  P E[ (grad A)^T u0(A) ]

with trajectories driven by the series extended by the current iterate.
The Monte Carlo noise is frozen per snapshot so the iteration contracts to
the fixed point of the sampled map.

``solve_wbar_pde`` produces the transported-momentum field w on a 2-d
x-periodic channel by a semi-implicit finite-difference solve of

    dw/dt + (u . grad) w - nu lap w + (grad u)^T w = 0,   w(0) = u0,

with the wall closure ``curl w = curl u`` (imposed through a ghost-node
Neumann relation on the tangential component) and ``w . n = 0`` (normal
component pinned, fixing the gradient gauge; the trace is then unique).
Diffusion is Crank-Nicolson (Fourier in x, tridiagonal in y), the
advection and stretching terms are advanced with Heun's predictor-
corrector, so the scheme is second order in time and space.

``verify_representation`` wires reference cases to estimators and reports
pass/fail per check.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded

from . import reference as ref
from .domain import DomainSpec, CHANNELX
from .errors import NumericError, UsageError
from .estimator import (BoundaryData, CurveSpec, WallTrace,
                        check_martingale_identity, estimate_circulation,
                        estimate_scalar_fk_many, estimate_vorticity_many,
                        estimate_weber_velocity)
from .field import (FieldSeries, VectorField, _deriv_fd, curl as field_curl,
                    grid_points, grid_spacing, leray_project, vector_gradient)

__all__ = ["SolverConfig", "VerificationReport", "CheckResult",
           "solve_periodic_ns", "solve_wbar_pde", "verify_representation"]


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation and sampling choices for solver runs."""

    nu: float
    t_final: float
    dt: float
    dt_snap: float
    shape: tuple
    n_paths: int
    picard_iters: int = 4
    picard_tol: float = 5e-3
    seed: int = 0
    antithetic: bool = False
    bridge: bool = True

    def __post_init__(self):
        if min(self.nu, self.t_final, self.dt, self.dt_snap) <= 0:
            raise UsageError("nu, t_final, dt and dt_snap must be positive")
        if self.dt > self.dt_snap + 1e-15:
            raise UsageError("dt must not exceed dt_snap")
        if self.n_paths < 2 or self.picard_iters < 1:
            raise UsageError("need n_paths >= 2 and picard_iters >= 1")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))


def _sub_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1)[0])


def rel_l2(values: np.ndarray, reference: np.ndarray) -> float:
    num = float(np.sqrt(np.sum((values - reference) ** 2)))
    den = float(np.sqrt(np.sum(reference ** 2)))
    return num / den if den > 0 else num


# ---------------------------------------------------------------------------
# periodic fixed point


def solve_periodic_ns(u0: VectorField, cfg: SolverConfig, domain: DomainSpec,
                      workers: int = 1) -> FieldSeries:
    """March the representation fixed point snapshot by snapshot on the torus."""
    if domain.has_walls():
        raise UsageError("solve_periodic_ns runs on the torus")
    n_snap = int(round(cfg.t_final / cfg.dt_snap))
    if abs(n_snap * cfg.dt_snap - cfg.t_final) > 1e-9:
        raise UsageError("dt_snap must divide t_final")
    times = cfg.dt_snap * np.arange(n_snap + 1)

    u0p = leray_project(u0, domain)
    snaps = [u0p]
    data = BoundaryData(u0=u0p)
    for k in range(n_snap):
        t_next = float(times[k + 1])
        trial = snaps[-1]
        seed_k = _sub_seed(cfg.seed, k)
        history = []
        prev_delta = None
        rising = 0
        for m in range(cfg.picard_iters):
            series = FieldSeries(times[:k + 2], snaps + [trial], cfg.nu)
            est = estimate_weber_velocity(series, domain, data, t_next,
                                          cfg.n_paths, cfg.dt, seed_k,
                                          antithetic=cfg.antithetic,
                                          bridge=cfg.bridge, workers=workers)
            new = leray_project(VectorField(domain, est.mean.reshape(*cfg.shape,
                                                                     domain.dim)), domain)
            delta = rel_l2(new.values, trial.values) if np.any(trial.values) \
                else float(np.sqrt(np.sum(new.values ** 2)))
            history.append(delta)
            trial = new
            if delta < cfg.picard_tol:
                break
            if prev_delta is not None and delta > prev_delta:
                rising += 1
                if rising >= 2:
                    raise NumericError("Picard iteration diverging",
                                       details={"snapshot": k, "deltas": history})
            else:
                rising = 0
            prev_delta = delta
        snaps.append(trial)
    return FieldSeries(times, snaps, cfg.nu)


# ---------------------------------------------------------------------------
# transported-momentum PDE on the channel


def _cn_step(w, dt, nu, hx, hy, lam_q, gamma_n, gamma_n1, explicit):
    """One Crank-Nicolson diffusion step with ghost-Neumann/Dirichlet walls.

    ``w`` is (nx, ny, 2); ``gamma_*`` are dicts {side: (nx,)} holding the
    wall normal-derivative data of the tangential component at both time
    levels; ``explicit`` is the advection+stretching tendency to add.
    """
    nx, ny = w.shape[:2]
    a = 0.5 * dt * nu
    rhs = np.empty_like(w)

    # explicit half of the diffusion, ghost closure at data level n
    for c in range(2):
        f = w[..., c]
        dxx = (np.roll(f, -1, axis=0) - 2 * f + np.roll(f, 1, axis=0)) / hx**2
        dyy = np.empty_like(f)
        dyy[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / hy**2
        if c == 0:
            dyy[:, 0] = (2 * f[:, 1] - 2 * f[:, 0] - 2 * hy * gamma_n[0]) / hy**2
            dyy[:, -1] = (2 * f[:, -2] - 2 * f[:, -1] + 2 * hy * gamma_n[1]) / hy**2
        else:
            dyy[:, 0] = 0.0
            dyy[:, -1] = 0.0
        rhs[..., c] = f + a * (dxx + dyy) + dt * explicit[..., c]
    # implicit ghost data (level n+1) for the tangential component
    rhs[:, 0, 0] -= a * 2.0 * gamma_n1[0] / hy
    rhs[:, -1, 0] += a * 2.0 * gamma_n1[1] / hy

    rhat = np.fft.fft(rhs, axis=0)
    what = np.empty_like(rhat)
    r = a / hy**2
    for q in range(nx):
        diag0 = 1.0 + a * lam_q[q]
        # tangential component: ghost-eliminated Neumann rows
        ab = np.zeros((3, ny), dtype=complex)
        ab[1, :] = diag0 + 2 * r
        ab[0, 1:] = -r
        ab[2, :-1] = -r
        ab[0, 1] = -2 * r      # ghost-eliminated row 0 couples w1 with weight 2
        ab[2, -2] = -2 * r     # ghost-eliminated row ny-1 couples w_{ny-2} with weight 2
        what[q, :, 0] = solve_banded((1, 1), ab, rhat[q, :, 0])
        # normal component: Dirichlet rows pinned to zero
        ab = np.zeros((3, ny), dtype=complex)
        ab[1, :] = diag0 + 2 * r
        ab[0, 1:] = -r
        ab[2, :-1] = -r
        ab[1, 0] = 1.0
        ab[1, -1] = 1.0
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        rq = rhat[q, :, 1].copy()
        rq[0] = 0.0
        rq[-1] = 0.0
        what[q, :, 1] = solve_banded((1, 1), ab, rq)
    return np.real(np.fft.ifft(what, axis=0))


def solve_wbar_pde(series: FieldSeries, domain: DomainSpec, u0: VectorField,
                   cfg: SolverConfig):
    """Solve the transported-momentum PDE on the 2-d x-periodic channel.

    Returns ``(wbar_series, wall_trace)``. The wall data uses the vorticity
    of the supplied velocity series (``curl w = curl u`` on the walls) and
    pins the normal component to zero. Snapshots are produced every
    ``cfg.dt_snap``, which is also the PDE time step; an advective CFL
    violation raises with the admissible step.
    """
    if domain.kind != CHANNELX or domain.dim != 2:
        raise UsageError("solve_wbar_pde expects a 2-d x-periodic channel")
    nx, ny = series.shape
    hx, hy = grid_spacing(domain, series.shape)
    dt = cfg.dt_snap
    n_steps = int(round(cfg.t_final / dt))
    if abs(n_steps * dt - cfg.t_final) > 1e-9:
        raise UsageError("dt_snap must divide t_final")

    umax = max(float(np.abs(s.values).max()) for s in series.snapshots)
    if umax * dt > 0.9 * hx:
        raise UsageError(f"advective CFL violated: admissible dt is {0.9 * hx / umax:.3e}")

    qs = 2 * np.pi * np.fft.fftfreq(nx, d=hx)
    lam_q = (2.0 - 2.0 * np.cos(qs * hx)) / hx**2

    def wall_gamma(t):
        # d_y w_x = -curl u on both walls (normal component of w vanishes there)
        u = VectorField(domain, series.values_at(t))
        om = field_curl(u, domain).values
        return {0: -om[:, 0], 1: -om[:, -1]}

    def explicit_tendency(w, t):
        uvals = series.values_at(t)
        gu = vector_gradient(VectorField(domain, uvals))
        adv = np.zeros_like(w)
        for c in range(2):
            adv[..., c] = (uvals[..., 0] * _deriv_fd(w[..., c], domain, (nx, ny), 0)
                           + uvals[..., 1] * _deriv_fd(w[..., c], domain, (nx, ny), 1))
        stretch = np.einsum("...ji,...j->...i", gu, w)
        return -(adv + stretch)

    w = u0.values.copy()
    w[:, 0, 1] = 0.0
    w[:, -1, 1] = 0.0
    times = [0.0]
    snaps = [VectorField(domain, w.copy())]
    for k in range(n_steps):
        t0 = k * dt
        t1 = (k + 1) * dt
        g0 = wall_gamma(t0)
        g1 = wall_gamma(t1)
        e1 = explicit_tendency(w, t0)
        w_pred = _cn_step(w, dt, cfg.nu, hx, hy, lam_q, g0, g1, e1)
        e2 = explicit_tendency(w_pred, t1)
        w = _cn_step(w, dt, cfg.nu, hx, hy, lam_q, g0, g1, 0.5 * (e1 + e2))
        times.append(t1)
        snaps.append(VectorField(domain, w.copy()))

    wbar = FieldSeries(np.asarray(times), snaps, cfg.nu)
    trace = WallTrace(domain, (nx, ny), times, {
        (1, 0): np.stack([s.values[:, 0, :] for s in snaps]),
        (1, 1): np.stack([s.values[:, -1, :] for s in snaps]),
    })
    return wbar, trace


# ---------------------------------------------------------------------------
# verification harness


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    extra: dict = dc_field(default_factory=dict)


@dataclass
class VerificationReport:
    kind: str
    problem: str
    checks: list
    elapsed: float = 0.0
    estimate_header: list = dc_field(default_factory=list)
    estimates: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [f"verification {self.kind} / {self.problem}"
                 f"  ({self.elapsed:.1f} s)"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{status}] {c.name}: error={c.error:.6g} tol={c.tolerance:.6g}")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def csv_rows(self):
        for c in self.checks:
            yield [self.kind, self.problem, c.name, repr(c.error),
                   repr(c.tolerance), int(c.passed)]


VERIFY_KINDS = ("weber", "vorticity", "scalar_fk", "martingale", "circulation")


def verify_representation(kind: str, problem: str, cfg: SolverConfig,
                          workers: int = 1, options: dict | None = None) -> VerificationReport:
    """Run one named end-to-end check of an estimator against its oracle."""
    options = dict(options or {})
    t0 = _time.perf_counter()
    if kind == "weber" and problem == "taylor_green":
        out = _verify_weber_tg(cfg, workers, options)
    elif kind == "weber" and problem == "channel_decay":
        out = _verify_weber_channel(cfg, workers, options)
    elif kind == "vorticity" and problem == "channel_decay":
        out = _verify_vorticity_channel(cfg, workers, options)
    elif kind == "scalar_fk" and problem == "heat_slab":
        out = _verify_scalar_heat(cfg, workers, options)
    elif kind == "martingale" and problem == "channel_decay":
        out = _verify_martingale_channel(cfg, workers, options)
    elif kind == "circulation" and problem == "taylor_green":
        out = _verify_circulation_tg(cfg, workers, options)
    else:
        raise UsageError(f"no verification for kind={kind!r}, problem={problem!r}")
    checks, header, rows = out if isinstance(out, tuple) else (out, [], [])
    return VerificationReport(kind, problem, checks, _time.perf_counter() - t0,
                              estimate_header=header, estimates=rows)


def _estimate_rows(points, t, ests, dt, dim):
    """CSV rows (x coords, t, mean comps, std-error comps, n, seed, dt)."""
    rows = []
    ncomp = 1
    for p, e in zip(points, ests):
        mean = np.atleast_1d(e.mean)
        se = np.atleast_1d(e.std_error)
        ncomp = len(mean)
        rows.append([*(repr(float(c)) for c in np.atleast_1d(p)), repr(float(t)),
                     *(repr(float(v)) for v in mean),
                     *(repr(float(v)) for v in se),
                     e.n_samples, e.seed, repr(float(dt))])
    comp = [""] if ncomp == 1 else [str(i) for i in range(ncomp)]
    header = ([f"x{i}" for i in range(dim)] + ["t"]
              + [f"mean{c}" for c in comp] + [f"std_error{c}" for c in comp]
              + ["n", "seed", "dt"])
    return header, rows


def _verify_scalar_heat(cfg, workers, options) -> list:
    domain = ref.CHANNEL_DOMAIN
    modes = tuple(options.get("modes", ((1, 1.0),)))
    t = cfg.t_final
    ys = options.get("points_y", (0.1, 0.3, 0.5, 0.7, 0.9))
    pts = np.array([[0.5, y] for y in ys])
    series = ref.zero_series(domain, cfg.shape, t, cfg.nu)
    data = BoundaryData(theta0=ref.make_callable(ref.heat_slab_theta0_at, modes),
                        g=0.0)
    ests = estimate_scalar_fk_many(series, domain, data, pts, t, cfg.n_paths,
                                   cfg.dt, cfg.seed, antithetic=cfg.antithetic,
                                   bridge=cfg.bridge, workers=workers)
    checks = []
    for (x, y), est in zip(pts, ests):
        oracle = float(ref.heat_slab(cfg.nu, t, y, modes))
        tol = 3.0 * est.std_error + 5.0 * cfg.dt
        err = abs(est.mean - oracle)
        checks.append(CheckResult(f"theta(y={y:g})", err, tol, err <= tol,
                                  {"mean": est.mean, "oracle": oracle,
                                   "std_error": est.std_error}))
    header, rows = _estimate_rows(pts, t, ests, cfg.dt, 2)
    return checks, header, rows


def _verify_weber_tg(cfg, workers, options) -> list:
    domain = ref.TG_DOMAIN
    t = cfg.t_final
    n_snap = int(round(t / cfg.dt_snap)) + 1
    series = ref.taylor_green_series(cfg.nu, cfg.shape, t, n_snap)
    data = BoundaryData(u0=ref.make_callable(ref.tg_velocity_at, cfg.nu, 0.0))
    est = estimate_weber_velocity(series, domain, data, t, cfg.n_paths, cfg.dt,
                                  cfg.seed, antithetic=cfg.antithetic,
                                  bridge=cfg.bridge, workers=workers)
    mean, _ = est.as_fields(domain, cfg.shape)
    proj = leray_project(mean, domain)
    exact = ref.taylor_green(cfg.nu, t,
                             grid_points(domain, cfg.shape).reshape(-1, 2)).reshape(proj.values.shape)
    err = rel_l2(proj.values, exact)
    tol = options.get("tolerance", 0.05)
    return [CheckResult("rel_l2(P E w, u)", err, tol, err <= tol)]


def _channel_setup(cfg):
    domain = ref.CHANNEL_DOMAIN
    n_snap = int(round(cfg.t_final / cfg.dt_snap)) + 1
    series = ref.channel_series(cfg.nu, cfg.shape, cfg.t_final, n_snap)
    u0 = VectorField.from_callable(domain, cfg.shape,
                                   ref.make_callable(ref.channel_u0_at, cfg.nu))
    return domain, series, u0


def _verify_weber_channel(cfg, workers, options) -> list:
    domain, series, u0 = _channel_setup(cfg)
    t = cfg.t_final
    wbar, trace = solve_wbar_pde(series, domain, u0, cfg)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, cfg.nu),
                        w_tilde=trace)
    exact = ref.channel_velocity_at(cfg.nu, grid_points(domain, cfg.shape).reshape(-1, 2),
                                    t).reshape(*cfg.shape, 2)
    errors = {}
    for variant, drop in (("full", False), ("dropped_boundary", True)):
        est = estimate_weber_velocity(series, domain, data, t, cfg.n_paths,
                                      cfg.dt, cfg.seed, antithetic=cfg.antithetic,
                                      bridge=cfg.bridge, workers=workers,
                                      drop_boundary=drop)
        mean, _ = est.as_fields(domain, cfg.shape)
        proj = leray_project(mean, domain)
        errors[variant] = rel_l2(proj.values, exact)
    tol = options.get("tolerance", 0.05)
    ratio_required = options.get("ratio_required", 3.0)
    ratio = errors["dropped_boundary"] / max(errors["full"], 1e-300)
    return [
        CheckResult("rel_l2(P E w, u)", errors["full"], tol, errors["full"] <= tol),
        CheckResult("dropped-boundary degradation", -ratio, -ratio_required,
                    ratio >= ratio_required,
                    {"error_full": errors["full"],
                     "error_dropped": errors["dropped_boundary"], "ratio": ratio}),
    ]


def _verify_vorticity_channel(cfg, workers, options) -> list:
    domain, series, _ = _channel_setup(cfg)
    data = BoundaryData(omega0=ref.make_callable(ref.channel_omega0_at, cfg.nu),
                        omega_wall=ref.make_callable(ref.channel_vorticity_at, cfg.nu))
    ys = options.get("points_y", (0.15, 0.3, 0.5, 0.7, 0.85))
    ts = options.get("times", (0.5 * cfg.t_final, cfg.t_final))
    checks = []
    rows = []
    header = []
    for t in ts:
        pts = np.array([[0.3, y] for y in ys])
        ests = estimate_vorticity_many(series, domain, data, pts, t, cfg.n_paths,
                                       cfg.dt, cfg.seed, antithetic=cfg.antithetic,
                                       bridge=cfg.bridge, workers=workers)
        for (x, y), est in zip(pts, ests):
            oracle = float(ref.channel_decay(cfg.nu, t, y)[1])
            tol = 3.0 * est.std_error + 5.0 * cfg.dt
            err = abs(est.mean - oracle)
            checks.append(CheckResult(f"omega(y={y:g}, t={t:g})", err, tol, err <= tol,
                                      {"mean": est.mean, "oracle": oracle,
                                       "std_error": est.std_error}))
        header, r = _estimate_rows(pts, t, ests, cfg.dt, 2)
        rows.extend(r)
    return checks, header, rows


def _verify_martingale_channel(cfg, workers, options) -> list:
    domain, series, u0 = _channel_setup(cfg)
    t = cfg.t_final
    wbar, trace = solve_wbar_pde(series, domain, u0, cfg)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, cfg.nu),
                        w_tilde=trace, wbar=wbar)
    x = np.asarray(options.get("point", (0.3, 0.4)), dtype=float)
    levels = options.get("stop_times", (0.0, 0.25 * t, 0.5 * t, 0.75 * t))
    ests = check_martingale_identity(series, domain, data, x, t, levels,
                                     cfg.n_paths, cfg.dt, cfg.seed,
                                     antithetic=cfg.antithetic, bridge=cfg.bridge)
    checks = []
    for i in range(len(ests)):
        for j in range(i + 1, len(ests)):
            diff = np.abs(np.asarray(ests[i].mean) - np.asarray(ests[j].mean))
            pooled = np.sqrt(np.asarray(ests[i].std_error) ** 2
                             + np.asarray(ests[j].std_error) ** 2)
            err = float(np.max(diff - 3.0 * pooled))
            checks.append(CheckResult(f"level {levels[i]:g} vs {levels[j]:g}",
                                      float(np.max(diff)), float(np.max(3.0 * pooled)),
                                      err <= 0.0))
    header, rows = _estimate_rows([x] * len(ests), t, ests, cfg.dt, 2)
    return checks, header, rows


def _verify_circulation_tg(cfg, workers, options) -> list:
    domain = ref.TG_DOMAIN
    t = cfg.t_final
    n_snap = int(round(t / cfg.dt_snap)) + 1
    series = ref.taylor_green_series(cfg.nu, cfg.shape, t, n_snap)
    loop = CurveSpec.square(options.get("center", (np.pi, np.pi)),
                            options.get("side", np.pi),
                            options.get("nodes_per_side", 64))
    est = estimate_circulation(series, domain, loop, t, cfg.n_paths, cfg.dt,
                               cfg.seed, antithetic=cfg.antithetic, workers=workers)
    direct = _direct_circulation(ref.make_callable(ref.tg_velocity_at, cfg.nu, t),
                                 loop, 4096)
    err = abs(est.mean - direct)
    tol = 3.0 * est.std_error
    checks = [CheckResult("circulation vs direct quadrature", err, tol, err <= tol,
                          {"mc": est.mean, "direct": direct,
                           "std_error": est.std_error})]
    if options.get("gradient_check", True):
        worst = _gradient_circulation_samples(cfg, loop, t, workers)
        quad_tol = float(options.get("gradient_tolerance", 5e-3))
        checks.append(CheckResult("gradient data: every-sample loop integral",
                                  worst, quad_tol, worst <= quad_tol))
    center = np.mean(loop.vertices, axis=0)
    header, rows = _estimate_rows([center], t, [est], cfg.dt, 2)
    return checks, header, rows


def _gradient_circulation_samples(cfg, loop: CurveSpec, t, workers) -> float:
    """Largest |per-sample loop integral| for pure-gradient initial data.

    The initial velocity is the (band-limited) gradient of sin(x) sin(y) on
    a fine grid, so every transported-loop integral vanishes up to the
    trapezoid quadrature and bilinear interpolation error of the setup.
    """
    domain = ref.TG_DOMAIN
    shape = (64, 64)
    series = FieldSeries.from_callable(domain, shape, np.linspace(0, t, 5),
                                       _gradient_field_at, cfg.nu)
    from .flow import run_ensemble
    final, _, _ = run_ensemble(series, domain, loop.vertices, t, 0.0, cfg.dt,
                               cfg.seed + 1, cfg.n_paths, shared_noise=True)
    pos = final["positions"]
    M = len(loop.vertices)
    from .field import interpolate
    u0 = interpolate(domain, series.values_at(0.0),
                     pos.reshape(-1, 2)).reshape(M, cfg.n_paths, 2)
    seg = np.roll(pos, -1, axis=0) - pos
    mid = 0.5 * (u0 + np.roll(u0, -1, axis=0))
    samples = np.einsum("mnd,mnd->n", mid, seg)
    return float(np.abs(samples).max())


def _gradient_field_at(X, t):
    X = np.atleast_2d(X)
    return np.stack([np.cos(X[:, 0]) * np.sin(X[:, 1]),
                     np.sin(X[:, 0]) * np.cos(X[:, 1])], axis=-1)


def _direct_circulation(u_fn, curve: CurveSpec, n_nodes: int) -> float:
    """Dense trapezoid quadrature of the loop integral of ``u_fn`` over the curve."""
    v = curve.vertices
    closed = np.vstack([v, v[:1]])
    seg_len = np.sqrt(np.sum(np.diff(closed, axis=0) ** 2, axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s[-1]
    params = np.linspace(0.0, total, n_nodes, endpoint=False)
    pts = np.empty((n_nodes, v.shape[1]))
    for i, p in enumerate(params):
        j = int(np.searchsorted(s, p, side="right") - 1)
        j = min(j, len(v) - 1)
        w = (p - s[j]) / max(seg_len[j], 1e-300)
        pts[i] = (1 - w) * closed[j] + w * closed[j + 1]
    u = u_fn(pts)
    seg = np.roll(pts, -1, axis=0) - pts
    mid = 0.5 * (u + np.roll(u, -1, axis=0))
    return float(np.sum(mid * seg))
