"""Backward noisy characteristics and Jacobian transport.

A trajectory reaching position ``x`` at time ``t`` is integrated backward,

    A <- A - u(A, s) ds - sqrt(2 nu) dW,

by Euler-Maruyama steps of size ``dt`` from ``s = t`` down to ``s_min``,
together with the linear matrix equation for the spatial Jacobian of the
flow map (explicit midpoint rule, second order). On walled domains each
step is tested for a wall crossing; a crossing freezes the trajectory at
the interpolated exit time with the exit point snapped onto the wall.

Steps whose endpoints stay interior may still have excursions through a
wall. By default these are absorbed with the exact Brownian-bridge
single-face touch probability ``exp(-2 d0 d1 / (2 nu dt))`` per face, which
removes the O(sqrt(dt)) one-sided bias of the bare segment detector; such
trajectories are stopped at mid-step. Disable with ``bridge=False`` to
recover the bare detector.

Noise is drawn from counter-based streams keyed by (seed, step index,
block), so ensembles are reproducible under any chunking of blocks over
workers, and a path restarted at an intermediate time with the matching
step offset replays the same increments bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .domain import DomainSpec, contains, segment_crossings
from .errors import UsageError
from .field import FieldSeries, grid_spacing, interp_apply, interp_prepare

__all__ = [
    "RngStream", "PathRecord", "simulate_backward", "transport_jacobian",
    "run_ensemble", "EnsembleState", "dump_path_trace",
]


@dataclass(frozen=True)
class RngStream:
    """Identifies one trajectory's increment stream."""
    seed: int
    stream_id: int


@dataclass
class PathRecord:
    """One backward trajectory.

    ``positions`` runs from s = t (index 0, equal to the start point)
    down to the last integrated time; ``increments`` holds the Wiener
    increments consumed per step. ``sigma`` is the backward exit time
    (0 when the path never left the domain before ``s_min``); the Jacobian
    is the transported matrix at ``max(sigma, s_min)``.
    """

    start_x: np.ndarray
    start_t: float
    dt: float
    positions: np.ndarray      # (k+1, d)
    increments: np.ndarray     # (k, d)
    jacobian: np.ndarray       # (d, d)
    sigma: float
    exit_point: np.ndarray | None
    exited: bool


def _nsteps(t: float, s_min: float, dt: float) -> int:
    if dt <= 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if not (0.0 <= s_min <= t):
        raise UsageError(f"need 0 <= s_min <= t, got s_min={s_min}, t={t}")
    span = t - s_min
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-9 * max(1.0, t):
        raise UsageError(f"dt={dt} does not divide t - s_min = {span}")
    return n


class EnsembleState:
    """Vectorised state of ``P x n`` backward trajectories."""

    def __init__(self, P, n, d):
        self.P, self.n, self.d = P, n, d
        m = P * n
        self.x = np.zeros((m, d))
        self.jac = None
        self.alive = np.ones(m, dtype=bool)
        self.sigma = np.zeros(m)
        self.exit_x = np.zeros((m, d))
        self.exited = np.zeros(m, dtype=bool)
        self.pot = None

    def snapshot(self):
        pos = np.where(self.exited[:, None], self.exit_x, self.x)
        return {
            "positions": pos.reshape(self.P, self.n, self.d).copy(),
            "jacobian": None if self.jac is None
                        else self.jac.reshape(self.P, self.n, self.d, self.d).copy(),
            "sigma": self.sigma.reshape(self.P, self.n).copy(),
            "exited": self.exited.reshape(self.P, self.n).copy(),
            "exit_point": self.exit_x.reshape(self.P, self.n, self.d).copy(),
            "potential": None if self.pot is None else self.pot.reshape(self.P, self.n).copy(),
        }


def _bridge_survival(domain: DomainSpec, x0, x1, nudt, rows):
    """Per-row survival probability and most likely face for interior steps."""
    m = len(rows)
    surv = np.ones(m)
    best_p = np.zeros(m)
    best_axis = np.full(m, -1, dtype=np.int64)
    best_wall = np.zeros(m)
    for ax in domain.walled_axes:
        for wall in (domain.lo[ax], domain.hi[ax]):
            d0 = np.abs(x0[rows, ax] - wall)
            d1 = np.abs(x1[rows, ax] - wall)
            with np.errstate(over="ignore"):
                p = np.exp(-d0 * d1 / nudt)
            surv *= 1.0 - p
            better = p > best_p
            best_p[better] = p[better]
            best_axis[better] = ax
            best_wall[better] = wall
    return surv, best_axis, best_wall


def run_ensemble(series: FieldSeries, domain: DomainSpec, starts: np.ndarray,
                 t: float, s_min: float, dt: float, seed: int, n_per_start: int, *,
                 need_jacobian: bool = False, potential=None, bridge: bool = True,
                 antithetic: bool = False, stop_levels=None, shared_noise: bool = False,
                 block_offset: int = 0, block_ids=None, step_offset: int = 0,
                 purpose: int = _rng.PURPOSE_PATHS, record_positions: bool = False):
    """Integrate ``P x n`` backward trajectories and return state snapshots.

    ``starts`` is ``(P, d)``; every start point runs ``n_per_start``
    trajectories. Noise blocks are keyed per start point by ``block_ids``
    (default ``block_offset + p``), or by the single block ``block_offset``
    broadcast over all start points when ``shared_noise`` is set (one Wiener
    path translates every point, as a transported curve requires). Keeping
    block ids tied to the caller's global point indices makes results
    independent of how points are chunked over workers.

    Returns ``(final, levels, trace)`` where ``final`` and each entry of
    ``levels`` (one per requested stop level, descending) are snapshot dicts
    and ``trace`` is the optional list of per-step position arrays.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    P, d = starts.shape
    if block_ids is None:
        block_ids = block_offset + np.arange(P)
    block_ids = np.asarray(block_ids, dtype=np.int64)
    if block_ids.shape != (P,):
        raise UsageError("block_ids must have one entry per start point")
    if d != domain.dim:
        raise UsageError("start points have wrong dimension")
    n = int(n_per_start)
    nsteps = _nsteps(t, s_min, dt)
    if t > series.t_last + 1e-9 or s_min < series.t_first - 1e-9:
        raise UsageError(f"time range [{s_min}, {t}] not covered by the series")

    levels = []
    if stop_levels is not None:
        levels = sorted((float(s) for s in stop_levels), reverse=True)
        for s in levels:
            if not (s_min - 1e-9 <= s <= t + 1e-9):
                raise UsageError(f"stop level {s} outside [{s_min}, {t}]")

    st = EnsembleState(P, n, d)
    m = P * n
    st.x[:] = np.repeat(starts, n, axis=0)
    if need_jacobian:
        st.jac = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    if potential is not None:
        st.pot = np.zeros(m)

    walls = domain.has_walls()
    zero_drift = series.is_zero()
    sq = np.sqrt(2.0 * series.nu * dt)
    nudt = series.nu * dt

    level_snaps = []
    next_level = 0
    trace = [st.x.copy()] if record_positions else None

    def tables_at(s):
        if zero_drift:
            return None
        vals = series.values_at(s).reshape(-1, d)
        if need_jacobian:
            grads = series.gradient_values_at(s).reshape(-1, d * d)
            return np.ascontiguousarray(np.concatenate([vals, grads], axis=1))
        return np.ascontiguousarray(vals)

    # emit any stop level equal to t before stepping
    while next_level < len(levels) and levels[next_level] >= t - 1e-12:
        level_snaps.append(st.snapshot())
        next_level += 1

    use_kernel = d == 2
    if use_kernel:
        from . import _kernels
        h = grid_spacing(domain, series.shape)
        per = [ax in domain.periodic_axes for ax in range(2)]
        dummy_tab = np.zeros((1, 6))
        dummy_jac = np.zeros((1, 2, 2))
        status = np.zeros(m, dtype=np.int8)
        lam_arr = np.ones(m)
        xn = np.empty((m, 2))

    tab_hi = tables_at(t)
    for k in range(nsteps):
        s_hi = t - k * dt
        s_lo = s_hi - dt
        tab_lo = tables_at(s_lo)

        # increments for every trajectory (layout fixed, alive or not)
        if shared_noise:
            z, uu = _rng.step_block(seed, purpose, step_offset + k, block_offset, n, d,
                                    antithetic)
            Z = np.ascontiguousarray(np.broadcast_to(z[None], (P, n, d)).reshape(m, d))
            U = np.ascontiguousarray(np.broadcast_to(uu[None], (P, n)).reshape(m))
        else:
            Z = np.empty((P, n, d))
            U = np.empty((P, n))
            for p in range(P):
                Z[p], U[p] = _rng.step_block(seed, purpose, step_offset + k,
                                             int(block_ids[p]), n, d, antithetic)
            Z = Z.reshape(m, d)
            U = U.reshape(m)

        alive_before = st.alive.copy() if potential is not None else None
        c_hi = potential(st.x, np.full(m, s_hi)) if potential is not None else None

        if use_kernel:
            _kernels.step_2d(
                st.x, st.jac if need_jacobian else dummy_jac,
                st.alive, st.sigma, st.exit_x, st.exited, status, lam_arr, xn,
                Z, U,
                tab_hi if tab_hi is not None else dummy_tab,
                tab_lo if tab_lo is not None else dummy_tab,
                tab_hi is not None, need_jacobian,
                domain.lo[0], domain.lo[1], h[0], h[1],
                series.shape[0], series.shape[1], per[0], per[1],
                domain.lo[0], domain.hi[0], 0 in domain.walled_axes,
                domain.lo[1], domain.hi[1], 1 in domain.walled_axes,
                dt, s_hi, sq, nudt, bool(bridge and walls))
        else:
            status, lam_arr, xn = _step_generic(
                st, series, domain, tab_hi, tab_lo, Z, U, dt, s_hi, sq, nudt,
                need_jacobian, bool(bridge and walls))

        if potential is not None:
            c_lo = potential(xn, np.full(m, s_lo))
            full = alive_before & (status == 0)
            if np.any(full):
                st.pot[full] += 0.5 * dt * (c_hi[full] + c_lo[full])
            part = status > 0
            if np.any(part):
                rows = np.flatnonzero(part)
                c_exit = potential(st.exit_x[rows], st.sigma[rows])
                frac = np.where(status[rows] == 1, lam_arr[rows], 0.5)
                st.pot[rows] += 0.5 * frac * dt * (c_hi[rows] + c_exit)

        tab_hi = tab_lo
        if record_positions:
            trace.append(np.where(st.exited[:, None], st.exit_x, st.x).copy())

        while next_level < len(levels) and s_lo <= levels[next_level] + 1e-12:
            level_snaps.append(st.snapshot())
            next_level += 1

    final = st.snapshot()
    return final, level_snaps, trace


def _step_generic(st: EnsembleState, series, domain, tab_hi, tab_lo, Z, U,
                  dt, s_hi, sq, nudt, need_jacobian, use_bridge):
    """Plain numpy step (any dimension); mirrors the fused 2-d kernel."""
    m = st.x.shape[0]
    d = st.d
    s_lo = s_hi - dt
    if tab_hi is not None:
        idx, wts = interp_prepare(domain, series.shape, st.x)
        cur = interp_apply(tab_hi, idx, wts)
        drift = cur[:, :d]
        M_hi = cur[:, d:].reshape(m, d, d) if need_jacobian else None
    else:
        drift = 0.0
        M_hi = np.zeros((m, d, d)) if need_jacobian else None
    xn = st.x - dt * drift - sq * Z

    status = np.zeros(m, dtype=np.int8)
    lam = np.ones(m)
    hit = np.zeros(m, dtype=bool)
    killed = np.zeros(m, dtype=bool)
    kill_axis = kill_wall = None
    cross_axis = None
    if domain.has_walls():
        hit, lam, cross_axis, _ = segment_crossings(domain, st.x, xn)
        hit &= st.alive
        if use_bridge:
            cand = np.flatnonzero(st.alive & ~hit)
            if cand.size:
                surv, b_axis, b_wall = _bridge_survival(domain, st.x, xn, nudt, cand)
                kflag = U[cand] >= surv
                killed[cand[kflag]] = True
                kill_axis = b_axis[kflag]
                kill_wall = b_wall[kflag]

    if need_jacobian:
        if tab_lo is not None:
            idx, wts = interp_prepare(domain, series.shape, xn)
            M_lo = interp_apply(tab_lo, idx, wts)[:, d:].reshape(m, d, d)
        else:
            M_lo = M_hi
        MG = np.einsum("mij,mjk->mik", M_hi, st.jac)
        full = st.alive & ~hit & ~killed
        if np.any(full):
            M_half = 0.5 * (M_hi + M_lo)
            half = st.jac - (0.5 * dt) * MG
            upd = st.jac - dt * np.einsum("mij,mjk->mik", M_half, half)
            st.jac[full] = upd[full]
        part = st.alive & (hit | killed)
        if np.any(part):
            frac = np.where(hit, lam, 0.5)
            upd = st.jac - (frac * dt)[:, None, None] * MG
            st.jac[part] = upd[part]

    if np.any(hit):
        rows = np.flatnonzero(hit)
        pts = st.x[rows] + lam[rows, None] * (xn[rows] - st.x[rows])
        ax = cross_axis[rows]
        w_lo = np.asarray(domain.lo)[ax]
        w_hi = np.asarray(domain.hi)[ax]
        cur = pts[np.arange(len(rows)), ax]
        pts[np.arange(len(rows)), ax] = np.where(
            np.abs(cur - w_lo) <= np.abs(cur - w_hi), w_lo, w_hi)
        st.exit_x[rows] = pts
        st.sigma[rows] = s_hi - lam[rows] * dt
        st.exited[rows] = True
        st.alive[rows] = False
        status[rows] = 1
    if np.any(killed):
        rows = np.flatnonzero(killed)
        pts = 0.5 * (st.x[rows] + xn[rows])
        pts[np.arange(len(rows)), kill_axis] = kill_wall
        st.exit_x[rows] = pts
        st.sigma[rows] = s_hi - 0.5 * dt
        st.exited[rows] = True
        st.alive[rows] = False
        status[rows] = 2
        lam[rows] = 0.5
    st.x = np.where(st.alive[:, None], xn, st.x)
    return status, lam, xn


def simulate_backward(series: FieldSeries, domain: DomainSpec, x, t: float,
                      s_min: float, dt: float, rng: RngStream, *,
                      bridge: bool = True, step_offset: int = 0) -> PathRecord:
    """Integrate a single backward trajectory; see the module docstring.

    ``step_offset`` places the path on a global step grid so a run stopped
    at an intermediate time and restarted there (with the offset advanced
    by the number of steps already taken) consumes the same increments.
    """
    x = np.asarray(x, dtype=float)
    if not contains(domain, x):
        raise UsageError(f"start point {tuple(x)} is outside the domain")
    nsteps = _nsteps(t, s_min, dt)
    d = domain.dim

    final, _, trace = run_ensemble(
        series, domain, x[None, :], t, s_min, dt, rng.seed, 1,
        need_jacobian=True, bridge=bridge, block_offset=rng.stream_id,
        step_offset=step_offset, record_positions=True)

    # reconstruct the increments this stream consumed
    incs = np.empty((nsteps, d))
    for k in range(nsteps):
        z, _ = _rng.step_block(rng.seed, _rng.PURPOSE_PATHS, step_offset + k,
                               rng.stream_id, 1, d)
        incs[k] = np.sqrt(dt) * z[0]

    exited = bool(final["exited"][0, 0])
    sigma = float(final["sigma"][0, 0])
    positions = np.stack([p[0] for p in trace])
    if exited:
        # drop the part of the trace after the exit
        n_keep = int(np.ceil((t - sigma) / dt - 1e-12)) + 1
        positions = positions[:n_keep]
        incs = incs[:n_keep - 1]
    return PathRecord(
        start_x=x, start_t=float(t), dt=float(dt),
        positions=positions, increments=incs,
        jacobian=final["jacobian"][0, 0],
        sigma=sigma,
        exit_point=final["exit_point"][0, 0] if exited else None,
        exited=exited)


def dump_path_trace(record: PathRecord, path) -> None:
    """Write a trajectory's per-step positions as a plain-text table.

    Debug aid, mirroring the grid-dump layout: one header line
    (step count, dt, start time, dimension), then one position per line
    from s = t downward.
    """
    pos = record.positions
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(pos)} {record.dt!r} {record.start_t!r} {pos.shape[1]}\n")
        for row in pos:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def transport_jacobian(grad_u_path, dt: float) -> np.ndarray:
    """Integrate ``dG/ds = grad_u(s) G`` backward from the identity.

    ``grad_u_path`` holds the velocity-gradient matrices sampled along the
    trajectory at the step knots, ordered from r = t down to r = s. Uses
    the explicit midpoint rule with the midpoint coefficient taken as the
    knot average, matching the ensemble integrator. With fewer than two
    samples there is nothing to integrate and the identity is returned.
    """
    Ms = [np.asarray(M, dtype=float) for M in grad_u_path]
    if not Ms:
        return np.eye(2)
    d = Ms[0].shape[0]
    G = np.eye(d)
    for k in range(len(Ms) - 1):
        M_hi, M_lo = Ms[k], Ms[k + 1]
        M_half = 0.5 * (M_hi + M_lo)
        half = G - 0.5 * dt * (M_hi @ G)
        G = G - dt * (M_half @ half)
    return G
