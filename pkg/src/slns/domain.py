"""Domain geometry: torus, rectangle and x-periodic channel.

The spatial domain is an axis-aligned box in 2 or 3 dimensions. Each axis is
either periodic (wrapped) or walled (the open interval between two absorbing
faces). Three named kinds are supported:

* ``torus``    -- every axis periodic, no boundary at all;
* ``rectangle``-- every axis walled;
* ``channelx`` -- axis 0 periodic, the remaining axes walled.

Membership tests and segment/wall intersection are the only geometric
primitives the stochastic flow needs: a backward trajectory is declared
stopped the first time one of its straight Euler steps crosses a walled face.
All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

TORUS = "torus"
RECTANGLE = "rectangle"
CHANNELX = "channelx"

_KINDS = (TORUS, RECTANGLE, CHANNELX)


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned domain with per-axis periodicity.

    ``lo``/``hi`` are the per-axis bounds; ``kind`` fixes which axes wrap.
    Instances are immutable; build them with :func:`torus`,
    :func:`rectangle` or :func:`channel_x`.
    """

    kind: str
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise UsageError(f"unknown domain kind {self.kind!r}, expected one of {_KINDS}")
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        d = len(lo)
        if d != len(hi):
            raise UsageError("lo and hi must have the same length")
        if d not in (2, 3):
            raise UsageError(f"dimension must be 2 or 3, got {d}")
        for a, b in zip(lo, hi):
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise UsageError(f"extents must be finite with lo < hi, got [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def periodic_axes(self) -> tuple:
        if self.kind == TORUS:
            return tuple(range(self.dim))
        if self.kind == CHANNELX:
            return (0,)
        return ()

    @property
    def walled_axes(self) -> tuple:
        per = set(self.periodic_axes)
        return tuple(i for i in range(self.dim) if i not in per)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def has_walls(self) -> bool:
        return bool(self.walled_axes)


def torus(lo, hi) -> DomainSpec:
    return DomainSpec(TORUS, tuple(lo), tuple(hi))


def rectangle(lo, hi) -> DomainSpec:
    return DomainSpec(RECTANGLE, tuple(lo), tuple(hi))


def channel_x(lo, hi) -> DomainSpec:
    return DomainSpec(CHANNELX, tuple(lo), tuple(hi))


@dataclass(frozen=True)
class CrossingRecord:
    """First intersection of a directed segment with a walled face.

    ``lam`` is the fraction along the segment in (0, 1]; ``point`` lies
    exactly on the wall (the crossed coordinate is snapped); ``wall_axis``
    identifies the face's axis.
    """

    lam: float
    point: tuple
    wall_axis: int


def _check_point(domain: DomainSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise UsageError(f"point has shape {x.shape}, expected ({domain.dim},)")
    return x


def contains(domain: DomainSpec, x) -> bool:
    """True iff ``x`` lies in the open domain.

    Walled axes require strict interiority; periodic axes always pass
    (coordinates are understood modulo the period).
    """
    x = _check_point(domain, x)
    for ax in domain.walled_axes:
        if not (domain.lo[ax] < x[ax] < domain.hi[ax]):
            return False
    return True


def boundary_crossing(domain: DomainSpec, x0, x1):
    """First wall crossing of the straight segment ``x0 -> x1``, if any.

    ``x0`` must be interior. Periodic axes never produce crossings; the
    segment is taken in unwrapped coordinates. A segment whose endpoint
    lands exactly on a wall counts as a crossing with ``lam == 1``.
    Returns a :class:`CrossingRecord` or ``None``.
    """
    x0 = _check_point(domain, x0)
    x1 = _check_point(domain, x1)
    if not contains(domain, x0):
        raise UsageError(f"segment start {tuple(x0)} is not inside the domain")

    best_lam = np.inf
    best_axis = -1
    best_wall = 0.0
    for ax in domain.walled_axes:
        a, b = x0[ax], x1[ax]
        for wall in (domain.lo[ax], domain.hi[ax]):
            # side: +1 if the wall is above the start, -1 below
            if b == a:
                continue
            lam = (wall - a) / (b - a)
            if 0.0 < lam <= 1.0 and lam < best_lam:
                # moving toward this wall?
                if (wall - a) * (b - a) > 0.0:
                    best_lam = lam
                    best_axis = ax
                    best_wall = wall
    if best_axis < 0:
        return None
    point = x0 + best_lam * (x1 - x0)
    point[best_axis] = best_wall  # snap exactly onto the face
    return CrossingRecord(float(best_lam), tuple(point), best_axis)


def segment_crossings(domain: DomainSpec, x0: np.ndarray, x1: np.ndarray):
    """Vectorised :func:`boundary_crossing` for ``(m, d)`` endpoint arrays.

    Returns ``(hit, lam, axis, side)`` where ``hit`` is a boolean mask,
    ``lam`` the crossing fraction (1.0 where not hit), ``axis`` the crossed
    axis (-1 where not hit) and ``side`` 0/1 for the low/high face.
    Starts are assumed interior; no membership check is repeated here.
    """
    m = x0.shape[0]
    lam = np.full(m, np.inf)
    axis = np.full(m, -1, dtype=np.int64)
    side = np.zeros(m, dtype=np.int64)
    for ax in domain.walled_axes:
        a = x0[:, ax]
        b = x1[:, ax]
        for s, wall in enumerate((domain.lo[ax], domain.hi[ax])):
            db = b - a
            with np.errstate(divide="ignore", invalid="ignore"):
                lam_w = (wall - a) / db
            valid = (db != 0.0) & ((wall - a) * db > 0.0) & (lam_w > 0.0) & (lam_w <= 1.0)
            better = valid & (lam_w < lam)
            lam[better] = lam_w[better]
            axis[better] = ax
            side[better] = s
    hit = axis >= 0
    lam[~hit] = 1.0
    return hit, lam, axis, side


def wrap(domain: DomainSpec, x: np.ndarray) -> np.ndarray:
    """Wrap periodic coordinates into [lo, hi); walled coordinates pass through."""
    x = np.array(x, dtype=float, copy=True)
    for ax in domain.periodic_axes:
        lo = domain.lo[ax]
        L = domain.hi[ax] - lo
        x[..., ax] = lo + np.mod(x[..., ax] - lo, L)
    return x


def on_boundary(domain: DomainSpec, x, tol: float = 1e-12) -> bool:
    """True iff ``x`` sits on a walled face (within ``tol``) and violates no wall."""
    x = _check_point(domain, x)
    on = False
    for ax in domain.walled_axes:
        v = x[ax]
        if v < domain.lo[ax] - tol or v > domain.hi[ax] + tol:
            return False
        if abs(v - domain.lo[ax]) <= tol or abs(v - domain.hi[ax]) <= tol:
            on = True
    return on
