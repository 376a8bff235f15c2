"""Monte Carlo estimators for the stochastic velocity/vorticity representations.

Every estimator drives an ensemble of backward trajectories (see
:mod:`slns.flow`) and averages a path functional:

* scalar transport with absorbing walls and an optional potential:
  exited paths contribute the wall datum at the exit, surviving paths the
  initial datum, both damped by ``exp(-integral of c along the path)``;
* transported-momentum (Weber) velocity samples
  ``(grad A)^T (u0 or w_tilde) at A``, whose projected mean recovers the
  velocity field;
* parabolic-boundary vorticity samples, with the inverse Jacobian
  stretching factor in three dimensions;
* circulation around a closed curve transported by one shared noise
  realisation per sample;
* the stopping-level consistency diagnostic: the transported average of a
  field satisfying the drift-diffusion-stretching equation is independent
  of the backward stopping level.

Estimates are deterministic given (seed, n, dt) and independent of the
worker count: noise streams are keyed per evaluation point and reductions
stay within each point.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
from dataclasses import dataclass

import numpy as np

from .domain import DomainSpec, contains, on_boundary
from .errors import UsageError, NumericError
from .field import (FieldSeries, ScalarField, VectorField, grid_points,
                    interpolate)
from .flow import run_ensemble

__all__ = [
    "BoundaryData", "McEstimate", "CurveSpec", "FieldEstimate", "WallTrace",
    "estimate_scalar_fk", "estimate_scalar_fk_many", "estimate_weber_velocity",
    "estimate_vorticity", "estimate_vorticity_many", "estimate_circulation",
    "check_martingale_identity", "mc_stats",
]


# ---------------------------------------------------------------------------
# data containers


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error."""

    mean: np.ndarray | float
    std_error: np.ndarray | float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise UsageError("an estimate needs at least 2 samples")
        se = np.asarray(self.std_error)
        if np.any(se < 0):
            raise UsageError("standard error must be nonnegative")


@dataclass(frozen=True)
class FieldEstimate:
    """Per-point means/standard errors of a vector estimator."""

    points: np.ndarray      # (m, d)
    mean: np.ndarray        # (m, d)
    std_error: np.ndarray   # (m, d)
    n_samples: int
    seed: int

    def as_fields(self, domain: DomainSpec, shape):
        mean = VectorField(domain, self.mean.reshape(*shape, domain.dim))
        se = VectorField(domain, self.std_error.reshape(*shape, domain.dim))
        return mean, se


@dataclass(frozen=True)
class CurveSpec:
    """Closed polyline on the torus; the duplicate closing vertex is dropped."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if len(v) >= 2 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise UsageError("a closed curve needs at least 3 distinct vertices")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def square(cls, center, side, nodes_per_side: int = 64):
        cx, cy = center
        h = side / 2.0
        s = np.linspace(-h, h, nodes_per_side, endpoint=False)
        bottom = np.stack([cx + s, np.full_like(s, cy - h)], axis=1)
        right = np.stack([np.full_like(s, cx + h), cy + s], axis=1)
        top = np.stack([cx - s, np.full_like(s, cy + h)], axis=1)
        left = np.stack([np.full_like(s, cx - h), cy - s], axis=1)
        return cls(np.concatenate([bottom, right, top, left]))


class WallTrace:
    """Vector or scalar data on the walls of a 2-d domain over a time range.

    ``values[(axis, side)]`` has shape ``(n_times, n_along, C)`` (or without
    the trailing axis for scalars) where ``n_along`` is the node count of the
    remaining axis. Evaluation interpolates linearly along the wall and in
    time; points are matched to the nearest face of the given axis.
    """

    def __init__(self, domain: DomainSpec, shape, times, values: dict):
        if domain.dim != 2:
            raise UsageError("wall traces are implemented for 2-d domains")
        self.domain = domain
        self.shape = tuple(shape)
        self.times = np.asarray(times, dtype=float)
        self.values = {k: np.asarray(v, dtype=float) for k, v in values.items()}

    def __call__(self, X: np.ndarray, T: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        T = np.broadcast_to(np.asarray(T, dtype=float), (X.shape[0],))
        some = next(iter(self.values.values()))
        C = 1 if some.ndim == 2 else some.shape[-1]
        out = np.zeros((X.shape[0], C))
        filled = np.zeros(X.shape[0], dtype=bool)
        for (ax, side), vals in self.values.items():
            wall = self.domain.lo[ax] if side == 0 else self.domain.hi[ax]
            other_walls = [w for (a, s2) in self.values
                           for w in [self.domain.lo[a] if s2 == 0 else self.domain.hi[a]]
                           if a == ax]
            dist = np.abs(X[:, ax] - wall)
            # nearest face of this axis wins
            near = np.ones(X.shape[0], dtype=bool)
            for w in other_walls:
                near &= dist <= np.abs(X[:, ax] - w) + 1e-15
            rows = np.flatnonzero(near & ~filled)
            if rows.size == 0:
                continue
            out[rows] = self._eval_face(ax, side, vals, X[rows], T[rows], C)
            filled[rows] = True
        if not np.all(filled):
            raise UsageError("wall trace queried at a point off every stored face")
        return out[:, 0] if C == 1 else out

    def _eval_face(self, ax, side, vals, X, T, C):
        other = 1 - ax
        n = self.shape[other]
        lo = self.domain.lo[other]
        L = self.domain.hi[other] - lo
        periodic = other in self.domain.periodic_axes
        h = L / n if periodic else L / (n - 1)
        f = (X[:, other] - lo) / h
        if periodic:
            f = np.mod(f, n)
            i0 = np.mod(np.floor(f).astype(np.int64), n)
            w = f - np.floor(f)
            i1 = np.mod(i0 + 1, n)
        else:
            i0 = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
            w = np.clip(f - i0, 0.0, 1.0)
            i1 = i0 + 1
        nt = len(self.times)
        if nt == 1:
            k0 = k1 = np.zeros(len(T), dtype=np.int64)
            wt = np.zeros(len(T))
        else:
            dtt = self.times[1] - self.times[0]
            g = (T - self.times[0]) / dtt
            k0 = np.clip(np.floor(g).astype(np.int64), 0, nt - 2)
            wt = np.clip(g - k0, 0.0, 1.0)
            k1 = k0 + 1
        V = vals if vals.ndim == 3 else vals[..., None]
        lo_t = (1 - w[:, None]) * V[k0, i0] + w[:, None] * V[k0, i1]
        hi_t = (1 - w[:, None]) * V[k1, i0] + w[:, None] * V[k1, i1]
        return (1 - wt[:, None]) * lo_t + wt[:, None] * hi_t


@dataclass
class BoundaryData:
    """Initial and parabolic-boundary data consumed by the estimators.

    Entries accept plain callables (vectorised over points, and over times
    where a time argument applies), grid fields, wall traces or constants;
    unused entries stay ``None``.
    """

    theta0: object = None        # scalar initial data, f(X) -> (m,)
    g: object = None             # scalar wall data, f(X, T) -> (m,)
    potential_c: object = None   # potential, f(X, T) -> (m,); default zero
    u0: object = None            # initial velocity, f(X) -> (m, d)
    w_tilde: object = None       # wall weight, f(X, T) -> (m, d)
    omega0: object = None        # initial vorticity
    omega_wall: object = None    # wall vorticity, f(X, T)
    wbar: FieldSeries = None     # transported-momentum field for diagnostics


def _initial_fn(obj, what):
    if obj is None:
        raise UsageError(f"missing {what} data")
    if isinstance(obj, (ScalarField, VectorField)):
        return lambda X: interpolate(obj.domain, obj.values, X)
    if np.isscalar(obj):
        return lambda X: np.full(len(np.atleast_2d(X)), float(obj))
    return lambda X: np.asarray(obj(np.atleast_2d(X)), dtype=float)


def _boundary_fn(obj, what):
    if obj is None:
        raise UsageError(f"missing {what} data")
    if isinstance(obj, WallTrace):
        return obj
    if np.isscalar(obj):
        return lambda X, T: np.full(len(np.atleast_2d(X)), float(obj))
    return lambda X, T: np.asarray(obj(np.atleast_2d(X), np.asarray(T)), dtype=float)


# ---------------------------------------------------------------------------
# statistics


def mc_stats(samples: np.ndarray, axis: int):
    """Mean and standard error along ``axis``.

    Analytically identical samples (max == min) short-circuit to an exact
    mean with exactly zero standard error, so constant-data checks are
    reproduced without floating-point summation residue.
    """
    n = samples.shape[axis]
    smax = samples.max(axis=axis)
    smin = samples.min(axis=axis)
    equal = smax == smin
    mean = np.where(equal, smax, samples.mean(axis=axis))
    dev = samples - np.expand_dims(mean, axis)
    var = np.sum(dev * dev, axis=axis) / (n * (n - 1))
    se = np.where(equal, 0.0, np.sqrt(var))
    return mean, se


# ---------------------------------------------------------------------------
# worker fan-out


def _parallel(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    ctx = multiprocessing.get_context("fork")
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(fn, jobs))


def _chunk_slices(n_items: int, workers: int, target: int = 64):
    """Contiguous chunks; chunk boundaries never split one point's samples."""
    if n_items == 0:
        return []
    per = max(1, min(target, -(-n_items // max(1, workers))))
    return [slice(i, min(i + per, n_items)) for i in range(0, n_items, per)]


# ---------------------------------------------------------------------------
# scalar transport (Feynman-Kac with absorbing walls)


def _fk_chunk(args):
    (series, domain, data, pts, off, t, n, dt, seed, antithetic, bridge) = args
    theta0 = _initial_fn(data.theta0, "theta0")
    pot = None if data.potential_c is None else _boundary_fn(data.potential_c, "potential")
    final, _, _ = run_ensemble(series, domain, pts, t, 0.0, dt, seed, n,
                               need_jacobian=False, potential=pot, bridge=bridge,
                               antithetic=antithetic, block_offset=off)
    P = len(pts)
    pos = final["positions"].reshape(P * n, -1)
    exited = final["exited"].reshape(P * n)
    sigma = final["sigma"].reshape(P * n)
    exitp = final["exit_point"].reshape(P * n, -1)
    weight = np.ones(P * n)
    if final["potential"] is not None:
        weight = np.exp(-final["potential"].reshape(P * n))
    vals = np.empty(P * n)
    inter = ~exited
    if np.any(inter):
        vals[inter] = theta0(pos[inter])
    if np.any(exited):
        if domain.has_walls():
            g = _boundary_fn(data.g, "g")
            vals[exited] = g(exitp[exited], sigma[exited])
        else:
            vals[exited] = 0.0
    samples = (weight * vals).reshape(P, n)
    return mc_stats(samples, axis=1)


def estimate_scalar_fk_many(series, domain, data: BoundaryData, points, t, n, dt,
                            seed, *, antithetic=False, bridge=True, workers=1):
    """Scalar-transport estimates at several points (shared machinery).

    Returns a list of :class:`McEstimate` in the order of ``points``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if t <= 0:
        raise UsageError("t must be positive")
    for x in points:
        if not contains(domain, x):
            raise UsageError(f"evaluation point {tuple(x)} outside the domain")
    jobs = [(series, domain, data, points[sl], sl.start, t, n, dt, seed,
             antithetic, bridge) for sl in _chunk_slices(len(points), workers)]
    out = []
    for mean, se in _parallel(_fk_chunk, jobs, workers):
        for i in range(len(mean)):
            out.append(McEstimate(float(mean[i]), float(se[i]), n, seed))
    return out


def estimate_scalar_fk(series, domain, data: BoundaryData, x, t, n, dt, seed,
                       *, antithetic=False, bridge=True) -> McEstimate:
    """Feynman-Kac estimate of the absorbing scalar-transport solution at ``x``."""
    return estimate_scalar_fk_many(series, domain, data, [x], t, n, dt, seed,
                                   antithetic=antithetic, bridge=bridge)[0]


# ---------------------------------------------------------------------------
# transported-momentum (Weber) velocity


def _weber_chunk(args):
    (series, domain, data, pts, ids, t, n, dt, seed, antithetic, bridge,
     drop_boundary) = args
    u0 = _initial_fn(data.u0, "u0")
    use_walls = domain.has_walls() and not drop_boundary
    w_tilde = _boundary_fn(data.w_tilde, "w_tilde") if use_walls else None
    final, _, _ = run_ensemble(series, domain, pts, t, 0.0, dt, seed, n,
                               need_jacobian=True, bridge=bridge,
                               antithetic=antithetic, block_ids=ids)
    P, d = pts.shape
    m = P * n
    pos = final["positions"].reshape(m, d)
    exited = final["exited"].reshape(m)
    sigma = final["sigma"].reshape(m)
    exitp = final["exit_point"].reshape(m, d)
    jac = final["jacobian"].reshape(m, d, d)
    v = np.zeros((m, d))
    inter = ~exited
    if np.any(inter):
        v[inter] = u0(pos[inter])
    if np.any(exited) and use_walls:
        v[exited] = np.atleast_2d(w_tilde(exitp[exited], sigma[exited]))
    samples = np.einsum("mkj,mk->mj", jac, v)  # (grad A)^T v
    if drop_boundary:
        samples[exited] = 0.0
    return mc_stats(samples.reshape(P, n, d), axis=1)


def estimate_weber_velocity(series, domain, data: BoundaryData, t, n, dt, seed, *,
                            points=None, antithetic=False, bridge=True,
                            workers=1, drop_boundary=False) -> FieldEstimate:
    """Monte Carlo mean of the transported-momentum samples at grid points.

    Interior points average ``(grad A)^T u0(A)`` over surviving paths and
    ``(grad A)^T w_tilde(A_sigma)`` over exited paths; points sitting on a
    wall return the wall weight directly (zero variance). The result is the
    unprojected mean field: apply :func:`slns.field.leray_project` to
    recover the velocity. ``drop_boundary`` zeroes the exited-path
    contribution (the deliberately incomplete absorbing-only variant).
    """
    if t <= 0:
        raise UsageError("t must be positive")
    if points is None:
        points = grid_points(domain, series.shape).reshape(-1, domain.dim)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if domain.has_walls() and data.w_tilde is None and not drop_boundary:
        raise UsageError("walled domains need w_tilde boundary data")

    m = len(points)
    d = domain.dim
    mean = np.zeros((m, d))
    se = np.zeros((m, d))
    wall_mask = np.array([on_boundary(domain, p) for p in points])
    if np.any(wall_mask):
        if drop_boundary:
            pass  # absorbing-only variant has no wall contribution
        else:
            w_tilde = _boundary_fn(data.w_tilde, "w_tilde")
            rows = np.flatnonzero(wall_mask)
            mean[rows] = np.atleast_2d(w_tilde(points[rows], np.full(rows.size, float(t))))
    interior = np.flatnonzero(~wall_mask)
    slices = _chunk_slices(len(interior), workers)
    jobs = [(series, domain, data, points[interior[sl]], interior[sl],
             t, n, dt, seed, antithetic, bridge, drop_boundary)
            for sl in slices]
    results = _parallel(_weber_chunk, jobs, workers)
    for (mu, s), sl in zip(results, slices):
        rows = interior[sl]
        mean[rows] = mu
        se[rows] = s
    return FieldEstimate(points, mean, se, n, seed)


# ---------------------------------------------------------------------------
# vorticity representation


def _vorticity_chunk(args):
    (series, domain, data, pts, ids, t, n, dt, seed, antithetic, bridge) = args
    d = domain.dim
    omega0 = _initial_fn(data.omega0, "omega0")
    omega_wall = _boundary_fn(data.omega_wall, "omega_wall") if domain.has_walls() else None
    final, _, _ = run_ensemble(series, domain, pts, t, 0.0, dt, seed, n,
                               need_jacobian=(d == 3), bridge=bridge,
                               antithetic=antithetic, block_ids=ids)
    P = len(pts)
    m = P * n
    pos = final["positions"].reshape(m, d)
    exited = final["exited"].reshape(m)
    sigma = final["sigma"].reshape(m)
    exitp = final["exit_point"].reshape(m, d)
    C = 1 if d == 2 else 3
    vals = np.zeros((m, C))
    inter = ~exited
    if np.any(inter):
        vals[inter] = np.asarray(omega0(pos[inter]), dtype=float).reshape(inter.sum(), C)
    if np.any(exited):
        vals[exited] = np.asarray(omega_wall(exitp[exited], sigma[exited]),
                                  dtype=float).reshape(exited.sum(), C)
    rejected = 0
    if d == 3:
        jac = final["jacobian"].reshape(m, 3, 3)
        det = np.linalg.det(jac)
        bad = np.abs(det) < 1e-8
        rejected = int(bad.sum())
        inv = np.empty_like(jac)
        inv[~bad] = np.linalg.inv(jac[~bad])
        inv[bad] = np.eye(3)
        vals = np.einsum("mij,mj->mi", inv, vals)
        vals[bad] = 0.0
        if rejected > 0.01 * m:
            raise NumericError("more than 1% of vorticity samples had singular Jacobians",
                               details={"rejected": rejected, "total": m})
    samples = vals.reshape(P, n, C)
    mean, s = mc_stats(samples, axis=1)
    return mean, s, rejected


def estimate_vorticity_many(series, domain, data: BoundaryData, points, t, n, dt,
                            seed, *, antithetic=False, bridge=True, workers=1):
    """Vorticity estimates at several points; see :func:`estimate_vorticity`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if t <= 0:
        raise UsageError("t must be positive")
    d = domain.dim
    out = [None] * len(points)
    interior = []
    for i, x in enumerate(points):
        if on_boundary(domain, x):
            omega_wall = _boundary_fn(data.omega_wall, "omega_wall")
            val = np.asarray(omega_wall(x[None, :], np.array([t])), dtype=float).reshape(-1)
            val = float(val[0]) if d == 2 else val
            out[i] = McEstimate(val, 0.0 if d == 2 else np.zeros(3), n, seed)
        elif contains(domain, x):
            interior.append(i)
        else:
            raise UsageError(f"evaluation point {tuple(x)} outside the closed domain")
    interior = np.asarray(interior, dtype=int)
    slices = _chunk_slices(len(interior), workers)
    jobs = [(series, domain, data, points[interior[sl]], interior[sl],
             t, n, dt, seed, antithetic, bridge)
            for sl in slices]
    for (mean, se, _rej), sl in zip(_parallel(_vorticity_chunk, jobs, workers),
                                    slices):
        for j, i in enumerate(interior[sl]):
            if d == 2:
                out[i] = McEstimate(float(mean[j, 0]), float(se[j, 0]), n, seed)
            else:
                out[i] = McEstimate(mean[j], se[j], n, seed)
    return out


def estimate_vorticity(series, domain, data: BoundaryData, x, t, n, dt, seed,
                       *, antithetic=False, bridge=True) -> McEstimate:
    """Average of parabolic-boundary vorticity along backward paths.

    In two dimensions exited paths contribute the wall vorticity at the
    exit and surviving paths the initial vorticity; in three dimensions
    each contribution is stretched by the inverse of the transported
    Jacobian (samples with near-singular Jacobians are rejected and
    counted; more than 1% rejections raises).
    """
    return estimate_vorticity_many(series, domain, data, [x], t, n, dt, seed,
                                   antithetic=antithetic, bridge=bridge)[0]


# ---------------------------------------------------------------------------
# circulation


def _circulation_chunk(args):
    (series, domain, nodes, t, n, dt, seed, antithetic) = args
    final, _, _ = run_ensemble(series, domain, nodes, t, 0.0, dt, seed, n,
                               need_jacobian=False, bridge=False,
                               antithetic=antithetic, shared_noise=True)
    return final["positions"]  # (M_chunk, n, d)


def estimate_circulation(series, domain: DomainSpec, curve: CurveSpec, t, n, dt,
                         seed, *, antithetic=False, workers=1) -> McEstimate:
    """Average circulation of the initial velocity around the transported curve.

    Torus only: with walls the transported curve is not rectifiable. Every
    sample transports the whole polyline with one shared Wiener path (the
    noise is independent of position), then integrates the initial
    velocity along it with the trapezoid rule.
    """
    if domain.has_walls():
        raise UsageError("circulation transport is defined on the torus only")
    if t <= 0:
        raise UsageError("t must be positive")
    nodes = curve.vertices
    M = len(nodes)
    jobs = [(series, domain, nodes[sl], t, n, dt, seed, antithetic)
            for sl in _chunk_slices(M, workers)]
    parts = _parallel(_circulation_chunk, jobs, workers)
    pos = np.concatenate(parts, axis=0)  # (M, n, d)

    u0_grid = series.values_at(series.t_first)
    d = domain.dim
    u0 = interpolate(domain, u0_grid, pos.reshape(M * n, d)).reshape(M, n, d)
    seg = np.roll(pos, -1, axis=0) - pos
    mid = 0.5 * (u0 + np.roll(u0, -1, axis=0))
    samples = np.einsum("mnd,mnd->n", mid, seg)
    mean, se = _scalar_stats(samples)
    return McEstimate(mean, se, n_samples=n, seed=seed)


def _scalar_stats(samples: np.ndarray):
    mean, se = mc_stats(samples[None, :], axis=1)
    return float(mean[0]), float(se[0])


# ---------------------------------------------------------------------------
# stopping-level diagnostic


def _sample_series_at_times(series: FieldSeries, X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Series values at per-row times (linear in time, multilinear in space)."""
    out = np.empty((len(X), series.domain.dim))
    if len(series.times) == 1:
        return series.sample(X, float(series.times[0]))
    dtt = series.times[1] - series.times[0]
    k = np.clip(np.floor((T - series.times[0]) / dtt).astype(np.int64),
                0, len(series.times) - 2)
    w = np.clip((T - series.times[0]) / dtt - k, 0.0, 1.0)
    for kk in np.unique(k):
        rows = np.flatnonzero(k == kk)
        lo = interpolate(series.domain, series.snapshots[kk].values, X[rows])
        hi = interpolate(series.domain, series.snapshots[kk + 1].values, X[rows])
        out[rows] = (1 - w[rows, None]) * lo + w[rows, None] * hi
    return out


def check_martingale_identity(series, domain, data: BoundaryData, x, t,
                              stop_times, n, dt, seed, *, antithetic=False,
                              bridge=True):
    """Transported averages of the momentum field at several stopping levels.

    For a field satisfying the drift-diffusion-stretching equation the
    average ``E[(grad A)^T wbar(A)]`` taken at backward level ``max(sigma, s)``
    is the same for every ``s``; the returned per-level estimates should
    agree within statistical error. Levels are snapped to the step grid.
    """
    if data.wbar is None:
        raise UsageError("martingale check needs a wbar field series in data")
    x = np.asarray(x, dtype=float)
    if not contains(domain, x):
        raise UsageError(f"evaluation point {tuple(x)} outside the domain")
    stop_times = [float(s) for s in stop_times]
    snapped = [round((t - s) / dt) for s in stop_times]
    levels = sorted({t - k * dt for k in snapped}, reverse=True)
    final, snaps, _ = run_ensemble(series, domain, x[None, :], t, 0.0, dt, seed, n,
                                   need_jacobian=True, bridge=bridge,
                                   antithetic=antithetic, stop_levels=levels)
    by_level = dict(zip(levels, snaps))
    wbar = data.wbar
    out = []
    for s_req, ksnap in zip(stop_times, snapped):
        s = t - ksnap * dt
        snap = by_level[s]
        pos = snap["positions"].reshape(n, -1)
        jac = snap["jacobian"].reshape(n, domain.dim, domain.dim)
        exited = snap["exited"].reshape(n)
        sigma = snap["sigma"].reshape(n)
        v = np.empty((n, domain.dim))
        alive = ~exited
        if np.any(alive):
            v[alive] = wbar.sample(pos[alive], s)
        if np.any(exited):
            v[exited] = _sample_series_at_times(wbar, pos[exited],
                                                np.maximum(sigma[exited], s))
        samples = np.einsum("mkj,mk->mj", jac, v)
        mean, se = mc_stats(samples[None], axis=1)
        out.append(McEstimate(mean[0], se[0], n, seed))
    return out
