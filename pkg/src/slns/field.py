"""Grid-backed fields, interpolation, discrete operators and projections.

Fields live on uniform tensor grids aligned with a :class:`~slns.domain.DomainSpec`:

* periodic axes store one period without the duplicate endpoint
  (``n`` nodes, spacing ``L/n``);
* walled axes store both wall nodes (``n`` nodes, spacing ``L/(n-1)``).

Space interpolation is multilinear (wrapped on periodic axes, clamped cells
at walls); series interpolate linearly in time. Differential operators use
centred second-order stencils, one-sided second-order at walls; on fully
periodic domains a spectral variant is available where exact discrete
identities are required.

The Leray-Hodge projection is spectral on the torus. On walled domains it
solves the composite finite-difference Neumann problem
``div(grad(phi)) = div(v)`` with flux rows ``(grad(phi)) . n = v . n`` on the
walls and a zero-mean gauge; an auxiliary multiplier on the interior rows
makes the projection exactly idempotent and exactly gradient-annihilating at
the discrete level (interior divergence of the result is O(h^2), reported by
the multiplier).

All values are float64; fields are treated as immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainSpec, TORUS
from .errors import NumericError, UsageError

# ---------------------------------------------------------------------------
# grids


def grid_spacing(domain: DomainSpec, shape) -> tuple:
    """Per-axis node spacing for ``shape`` nodes on ``domain``."""
    h = []
    for ax, n in enumerate(shape):
        L = domain.hi[ax] - domain.lo[ax]
        if n < 2:
            raise UsageError(f"axis {ax}: need at least 2 nodes, got {n}")
        if ax in domain.periodic_axes:
            h.append(L / n)
        else:
            h.append(L / (n - 1))
    return tuple(h)


def axis_nodes(domain: DomainSpec, shape, ax: int) -> np.ndarray:
    h = grid_spacing(domain, shape)[ax]
    return domain.lo[ax] + h * np.arange(shape[ax])


def grid_points(domain: DomainSpec, shape) -> np.ndarray:
    """All node coordinates, shape ``(*shape, d)``."""
    axes = [axis_nodes(domain, shape, ax) for ax in range(len(shape))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


@dataclass(frozen=True)
class ScalarField:
    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != self.domain.dim:
            raise UsageError(f"scalar values have {v.ndim} axes, domain is {self.domain.dim}-d")

    @property
    def shape(self):
        return self.values.shape

    @property
    def spacing(self):
        return grid_spacing(self.domain, self.shape)

    @classmethod
    def from_callable(cls, domain, shape, fn):
        pts = grid_points(domain, shape)
        return cls(domain, fn(pts.reshape(-1, domain.dim)).reshape(shape))

    @classmethod
    def zeros(cls, domain, shape):
        return cls(domain, np.zeros(shape))


@dataclass(frozen=True)
class VectorField:
    domain: DomainSpec
    values: np.ndarray  # (*shape, d)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != self.domain.dim + 1 or v.shape[-1] != self.domain.dim:
            raise UsageError("vector values must have shape (*grid, d)")

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def spacing(self):
        return grid_spacing(self.domain, self.shape)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.domain, self.values[..., i])

    @classmethod
    def from_callable(cls, domain, shape, fn):
        pts = grid_points(domain, shape)
        vals = fn(pts.reshape(-1, domain.dim)).reshape(*shape, domain.dim)
        return cls(domain, vals)

    @classmethod
    def zeros(cls, domain, shape):
        return cls(domain, np.zeros((*shape, domain.dim)))


# ---------------------------------------------------------------------------
# interpolation


def interp_prepare(domain: DomainSpec, shape, X: np.ndarray):
    """Corner indices and weights of the multilinear stencil at points ``X``.

    Returns ``(idx, wts)`` with shapes ``(m, 2**d)``; ``idx`` indexes the
    row-major flattened grid. Periodic axes wrap; walled axes clamp to the
    one-sided boundary cell.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = domain.dim
    h = grid_spacing(domain, shape)
    i0s, wss = [], []
    for ax in range(d):
        n = shape[ax]
        f = (X[:, ax] - domain.lo[ax]) / h[ax]
        if ax in domain.periodic_axes:
            f = np.mod(f, n)
            i0 = np.floor(f).astype(np.int64)
            w = f - i0
            i0 = np.mod(i0, n)
            i1 = np.mod(i0 + 1, n)
        else:
            i0 = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
            w = np.clip(f - i0, 0.0, 1.0)
            i1 = i0 + 1
        i0s.append((i0, i1))
        wss.append(w)

    strides = np.ones(d, dtype=np.int64)
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * shape[ax + 1]

    m = X.shape[0]
    ncorner = 1 << d
    idx = np.empty((m, ncorner), dtype=np.int64)
    wts = np.empty((m, ncorner))
    for c in range(ncorner):
        lin = np.zeros(m, dtype=np.int64)
        w = np.ones(m)
        for ax in range(d):
            pick = (c >> ax) & 1
            lin += i0s[ax][pick] * strides[ax]
            w = w * (wss[ax] if pick else (1.0 - wss[ax]))
        idx[:, c] = lin
        wts[:, c] = w
    return idx, wts


def interp_apply(flat_values: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """Apply prepared stencils to ``(N, C)`` flattened channel values -> ``(m, C)``."""
    out = wts[:, 0, None] * flat_values[idx[:, 0]]
    for c in range(1, idx.shape[1]):
        out += wts[:, c, None] * flat_values[idx[:, c]]
    return out


def interpolate(domain: DomainSpec, values: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of grid ``values`` (``(*shape,)`` or ``(*shape, C)``)."""
    d = domain.dim
    scalar = values.ndim == d
    shape = values.shape if scalar else values.shape[:-1]
    C = 1 if scalar else values.shape[-1]
    idx, wts = interp_prepare(domain, shape, X)
    out = interp_apply(values.reshape(-1, C), idx, wts)
    return out[:, 0] if scalar else out


# ---------------------------------------------------------------------------
# time series


class FieldSeries:
    """Uniformly spaced velocity snapshots plus the kinematic viscosity."""

    def __init__(self, times, snapshots, nu: float):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) != len(snapshots) or len(times) < 1:
            raise UsageError("times and snapshots must be equal-length, non-empty")
        if len(times) > 1:
            dts = np.diff(times)
            if np.any(dts <= 0):
                raise UsageError("snapshot times must be strictly increasing")
            if np.max(np.abs(dts - dts[0])) > 1e-9 * max(1.0, abs(times[-1])):
                raise UsageError("snapshot times must be uniformly spaced")
        if nu <= 0:
            raise UsageError(f"viscosity must be positive, got {nu}")
        self.times = times
        self.snapshots = list(snapshots)
        self.nu = float(nu)
        self.domain = snapshots[0].domain
        self.shape = snapshots[0].shape
        for s in snapshots:
            if s.shape != self.shape or s.domain != self.domain:
                raise UsageError("all snapshots must share a grid and domain")
        self._grad_cache = {}
        self._is_zero = None

    @classmethod
    def from_callable(cls, domain, shape, times, fn, nu):
        """Sample ``fn(points, t) -> (m, d)`` on the grid at each time."""
        pts = grid_points(domain, shape).reshape(-1, domain.dim)
        snaps = [VectorField(domain, fn(pts, t).reshape(*shape, domain.dim)) for t in times]
        return cls(times, snaps, nu)

    @property
    def t_first(self):
        return float(self.times[0])

    @property
    def t_last(self):
        return float(self.times[-1])

    def is_zero(self) -> bool:
        if self._is_zero is None:
            self._is_zero = all(not np.any(s.values) for s in self.snapshots)
        return self._is_zero

    def _bracket(self, t: float):
        if t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise UsageError(f"time {t} outside snapshot range [{self.times[0]}, {self.times[-1]}]")
        if len(self.times) == 1:
            return 0, 0, 0.0
        dt = self.times[1] - self.times[0]
        k = int(np.clip(np.floor((t - self.times[0]) / dt), 0, len(self.times) - 2))
        w = (t - self.times[k]) / dt
        return k, k + 1, float(np.clip(w, 0.0, 1.0))

    def values_at(self, t: float) -> np.ndarray:
        """Time-interpolated grid values, shape ``(*shape, d)``."""
        k0, k1, w = self._bracket(t)
        a = self.snapshots[k0].values
        if w == 0.0:
            return a
        return (1.0 - w) * a + w * self.snapshots[k1].values

    def sample(self, X: np.ndarray, t: float) -> np.ndarray:
        """Velocity at points ``X`` and time ``t`` (multilinear x linear-in-time)."""
        return interpolate(self.domain, self.values_at(t), np.atleast_2d(X))

    def gradient_values_at(self, t: float) -> np.ndarray:
        """Time-interpolated velocity-gradient grids, shape ``(*shape, d, d)``.

        Spectral differentiation on the torus, one-sided finite differences
        at walls; per-snapshot grids are cached.
        """
        k0, k1, w = self._bracket(t)
        g0 = self._snapshot_gradient(k0)
        if w == 0.0:
            return g0
        return (1.0 - w) * g0 + w * self._snapshot_gradient(k1)

    def _snapshot_gradient(self, k: int) -> np.ndarray:
        if k not in self._grad_cache:
            spectral = self.domain.kind == TORUS
            self._grad_cache[k] = vector_gradient(self.snapshots[k], spectral=spectral)
        return self._grad_cache[k]

    def snapshot_near(self, t: float) -> VectorField:
        k0, k1, w = self._bracket(t)
        return self.snapshots[k1 if w > 0.5 else k0]


def sample_velocity(series: FieldSeries, domain: DomainSpec, x, t: float) -> np.ndarray:
    """Velocity of the series at one point (or a batch of points)."""
    if domain != series.domain:
        raise UsageError("series was built on a different domain")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = series.sample(np.atleast_2d(x), t)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# derivatives


def _deriv_fd(values: np.ndarray, domain: DomainSpec, shape, ax: int) -> np.ndarray:
    """Second-order derivative along axis ``ax`` of (*shape, ...) node values."""
    h = grid_spacing(domain, shape)[ax]
    if ax in domain.periodic_axes:
        return (np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2 * h)
    out = np.empty_like(values)
    sl = [slice(None)] * values.ndim

    def at(i):
        s = list(sl)
        s[ax] = i
        return tuple(s)

    out[at(slice(1, -1))] = (values[at(slice(2, None))] - values[at(slice(0, -2))]) / (2 * h)
    out[at(0)] = (-3 * values[at(0)] + 4 * values[at(1)] - values[at(2)]) / (2 * h)
    out[at(-1)] = (3 * values[at(-1)] - 4 * values[at(-2)] + values[at(-3)]) / (2 * h)
    return out


def _wavenumbers(domain: DomainSpec, shape, ax: int) -> np.ndarray:
    """Wavenumbers of the trigonometric interpolant along a periodic axis.

    For even grids the Nyquist entry is zeroed: the sampled Nyquist mode is
    a pure cosine whose nodal derivative vanishes, and keeping it signed
    would break the conjugate symmetry of projections at mixed modes.
    """
    L = domain.hi[ax] - domain.lo[ax]
    n = shape[ax]
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def _deriv_spectral(values: np.ndarray, domain: DomainSpec, shape, ax: int) -> np.ndarray:
    if ax not in domain.periodic_axes:
        raise UsageError("spectral derivative requires a periodic axis")
    k = _wavenumbers(domain, shape, ax)
    kshape = [1] * values.ndim
    kshape[ax] = len(k)
    vhat = np.fft.fft(values, axis=ax)
    return np.real(np.fft.ifft(1j * k.reshape(kshape) * vhat, axis=ax))


def _deriv(values, domain, shape, ax, spectral):
    if spectral and ax in domain.periodic_axes:
        return _deriv_spectral(values, domain, shape, ax)
    return _deriv_fd(values, domain, shape, ax)


def gradient(s: ScalarField, domain: DomainSpec | None = None, spectral: bool = False) -> VectorField:
    domain = domain or s.domain
    comps = [_deriv(s.values, domain, s.shape, ax, spectral) for ax in range(domain.dim)]
    return VectorField(domain, np.stack(comps, axis=-1))


def divergence(v: VectorField, domain: DomainSpec | None = None, spectral: bool = False) -> ScalarField:
    domain = domain or v.domain
    out = np.zeros(v.shape)
    for ax in range(domain.dim):
        out += _deriv(v.values[..., ax], domain, v.shape, ax, spectral)
    return ScalarField(domain, out)


def curl(v: VectorField, domain: DomainSpec | None = None, spectral: bool = False):
    """Curl of a vector field: a scalar in 2-d, a vector in 3-d."""
    domain = domain or v.domain
    d = domain.dim
    w = v.values
    if d == 2:
        return ScalarField(domain, _deriv(w[..., 1], domain, v.shape, 0, spectral)
                           - _deriv(w[..., 0], domain, v.shape, 1, spectral))
    def D(comp, ax):
        return _deriv(w[..., comp], domain, v.shape, ax, spectral)
    out = np.stack([D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1)], axis=-1)
    return VectorField(domain, out)


def vector_gradient(v: VectorField, spectral: bool = False) -> np.ndarray:
    """Velocity-gradient grid ``G[..., i, j] = d u_i / d x_j``."""
    domain = v.domain
    d = domain.dim
    out = np.empty((*v.shape, d, d))
    for i in range(d):
        for j in range(d):
            out[..., i, j] = _deriv(v.values[..., i], domain, v.shape, j, spectral)
    return out


# ---------------------------------------------------------------------------
# Leray-Hodge projection


def _torus_modes(domain: DomainSpec, shape):
    ks = [_wavenumbers(domain, shape, ax) for ax in range(domain.dim)]
    mesh = np.meshgrid(*ks, indexing="ij")
    k2 = sum(k * k for k in mesh)
    return mesh, k2


def _leray_torus(v: VectorField) -> VectorField:
    domain = v.domain
    mesh, k2 = _torus_modes(domain, v.shape)
    k2safe = np.where(k2 == 0, 1.0, k2)
    vhat = [np.fft.fftn(v.values[..., i]) for i in range(domain.dim)]
    kdotv = sum(mesh[i] * vhat[i] for i in range(domain.dim))
    out = np.empty_like(v.values)
    for i in range(domain.dim):
        proj = vhat[i] - mesh[i] * kdotv / k2safe
        out[..., i] = np.real(np.fft.ifftn(proj))
    return VectorField(domain, out)


def _fd_matrices_1d(n: int, h: float):
    """Centred-interior / one-sided-end first-derivative matrix (n x n)."""
    D = np.zeros((n, n))
    for j in range(1, n - 1):
        D[j, j - 1] = -1.0 / (2 * h)
        D[j, j + 1] = 1.0 / (2 * h)
    D[0, 0], D[0, 1], D[0, 2] = -3.0 / (2 * h), 4.0 / (2 * h), -1.0 / (2 * h)
    D[-1, -1], D[-1, -2], D[-1, -3] = 3.0 / (2 * h), -4.0 / (2 * h), 1.0 / (2 * h)
    return D


def _leray_channel(v: VectorField) -> VectorField:
    """Composite-FD projection on the x-periodic channel (2-d).

    Fourier in x diagonalises the centred periodic x-derivative with symbol
    ``i sin(q h)/h``; each mode gives a small dense system in y whose
    interior rows enforce zero centred divergence of the result and whose
    wall rows enforce zero normal flux. An interior-row multiplier absorbs
    the O(h^2) discrete Gauss defect of the zero mode so the projection is
    exactly idempotent.
    """
    domain = v.domain
    nx, ny = v.shape
    hx, hy = grid_spacing(domain, v.shape)
    Dy = _fd_matrices_1d(ny, hy)
    Gy = Dy  # same one-sided/centred stencil for gradients
    Ly = Dy @ Gy

    vhat = np.fft.fft(v.values, axis=0)  # (nx, ny, 2)
    qs = _wavenumbers(domain, v.shape, 0)
    s = np.sin(qs * hx) / hx  # centred-FD symbol

    phihat = np.zeros((nx, ny), dtype=complex)
    interior = np.arange(1, ny - 1)
    for q in range(nx):
        A = np.zeros((ny, ny), dtype=complex)
        rhs = np.zeros(ny, dtype=complex)
        A[interior] = Ly[interior] - (s[q] ** 2) * np.eye(ny)[interior]
        rhs[interior] = 1j * s[q] * vhat[q, interior, 0] + (Dy @ vhat[q, :, 1])[interior]
        # wall flux rows: one-sided normal derivative matches v.n
        A[0] = Gy[0]
        A[ny - 1] = Gy[-1]
        rhs[0] = vhat[q, 0, 1]
        rhs[ny - 1] = vhat[q, -1, 1]
        if q == 0:
            # constants are in the null space: add an interior multiplier
            # column (absorbing the discrete Gauss defect) and a zero-mean
            # gauge row; the multiplier is the uniform interior divergence
            # left in the projected field.
            Aaug = np.zeros((ny + 1, ny + 1), dtype=complex)
            raug = np.zeros(ny + 1, dtype=complex)
            Aaug[:ny, :ny] = A
            raug[:ny] = rhs
            Aaug[interior, ny] = 1.0
            Aaug[ny, :ny] = 1.0
            sol = np.linalg.solve(Aaug, raug)
            phihat[q] = sol[:ny]
            mu = abs(sol[ny])
            if mu > 0.25 * (1.0 + np.abs(vhat).max() / np.sqrt(nx)):
                raise NumericError("Leray projection: incompatible wall data",
                                   details={"residual": float(mu)})
        else:
            phihat[q] = np.linalg.solve(A, rhs)
    gx = 1j * s[:, None] * phihat
    gy = np.einsum("jk,qk->qj", Gy, phihat)
    out = np.empty_like(v.values)
    out[..., 0] = v.values[..., 0] - np.real(np.fft.ifft(gx, axis=0))
    out[..., 1] = v.values[..., 1] - np.real(np.fft.ifft(gy, axis=0))
    return VectorField(domain, out)


def _leray_rectangle(v: VectorField) -> VectorField:
    """Composite-FD projection on the all-walled rectangle (2-d), direct solve."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    domain = v.domain
    nx, ny = v.shape
    hx, hy = grid_spacing(domain, v.shape)
    Dx = sp.csr_matrix(_fd_matrices_1d(nx, hx))
    Dy = sp.csr_matrix(_fd_matrices_1d(ny, hy))
    Ix, Iy = sp.identity(nx), sp.identity(ny)
    GX = sp.kron(Dx, Iy).tocsr()
    GY = sp.kron(Ix, Dy).tocsr()
    N = nx * ny

    mask = np.zeros((nx, ny), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    wall = np.flatnonzero(mask.reshape(-1))
    inter = np.flatnonzero(~mask.reshape(-1))

    vx = v.values[..., 0].reshape(-1)
    vy = v.values[..., 1].reshape(-1)
    L = (GX @ GX + GY @ GY).tolil()
    rhs = np.zeros(N + 1)
    A = sp.lil_matrix((N + 1, N + 1))
    A[:N, :N] = L
    rhs[:N] = GX @ vx + GY @ vy
    # wall rows: one-sided normal derivative of phi equals v.n (per face)
    ii, jj = np.unravel_index(wall, (nx, ny))
    for k, (i, j) in enumerate(zip(ii, jj)):
        r = wall[k]
        A.rows[r] = []
        A.data[r] = []
        if i == 0 or i == nx - 1:   # x-face (corners resolved to x)
            row = GX.getrow(r)
            A[r, row.indices] = row.data
            rhs[r] = vx[r]
        else:
            row = GY.getrow(r)
            A[r, row.indices] = row.data
            rhs[r] = vy[r]
    A[inter, N] = 1.0
    A[N, :N] = 1.0
    sol = spla.spsolve(A.tocsc(), rhs)
    phi, mu = sol[:N], sol[N]
    if abs(mu) > 1e-3 * (1.0 + max(np.abs(vx).max(), np.abs(vy).max())):
        raise NumericError("Leray projection: incompatible wall data",
                           details={"residual": float(abs(mu))})
    out = np.empty_like(v.values)
    out[..., 0] = (vx - GX @ phi).reshape(nx, ny)
    out[..., 1] = (vy - GY @ phi).reshape(nx, ny)
    return VectorField(domain, out)


def leray_project(v: VectorField, domain: DomainSpec | None = None) -> VectorField:
    """Project onto discretely divergence-free fields (zero wall flux on walls)."""
    domain = domain or v.domain
    if domain.kind == TORUS:
        return _leray_torus(v)
    if domain.dim != 2:
        raise UsageError("walled Leray projection is implemented for 2-d domains")
    if domain.walled_axes == (1,):
        return _leray_channel(v)
    return _leray_rectangle(v)


# ---------------------------------------------------------------------------
# Biot-Savart inversion


def inverse_curl(omega, domain: DomainSpec | None = None) -> VectorField:
    """Velocity with the given curl and zero divergence.

    Torus: spectral inversion (2-d vorticity must have zero mean; the zero
    mode of u is set to zero). Walled 2-d domains: solves
    ``-lap u = curl omega`` with homogeneous Dirichlet conditions on u.
    """
    domain = domain or omega.domain
    if domain.kind == TORUS:
        if domain.dim == 2:
            return _inverse_curl_torus_2d(omega, domain)
        return _inverse_curl_torus_3d(omega, domain)
    if domain.dim != 2:
        raise UsageError("walled inverse_curl is implemented for 2-d domains")
    return _inverse_curl_walled_2d(omega, domain)


def _inverse_curl_torus_2d(omega: ScalarField, domain: DomainSpec) -> VectorField:
    mean = float(np.mean(omega.values))
    scale = float(np.max(np.abs(omega.values))) if omega.values.size else 0.0
    if abs(mean) > 1e-10 * max(1.0, scale):
        raise UsageError(f"torus vorticity must have zero mean, got {mean}")
    mesh, k2 = _torus_modes(domain, omega.shape)
    k2safe = np.where(k2 == 0, 1.0, k2)
    what = np.fft.fftn(omega.values)
    psihat = what / k2safe
    psihat[(0,) * domain.dim] = 0.0
    ux = np.real(np.fft.ifftn(1j * mesh[1] * psihat))
    uy = np.real(np.fft.ifftn(-1j * mesh[0] * psihat))
    return VectorField(domain, np.stack([ux, uy], axis=-1))


def _inverse_curl_torus_3d(omega: VectorField, domain: DomainSpec) -> VectorField:
    mesh, k2 = _torus_modes(domain, omega.shape)
    k2safe = np.where(k2 == 0, 1.0, k2)
    what = [np.fft.fftn(omega.values[..., i]) for i in range(3)]
    # u_hat = i k x omega_hat / |k|^2
    cross = [mesh[1] * what[2] - mesh[2] * what[1],
             mesh[2] * what[0] - mesh[0] * what[2],
             mesh[0] * what[1] - mesh[1] * what[0]]
    out = np.empty_like(omega.values)
    for i in range(3):
        uhat = 1j * cross[i] / k2safe
        uhat[(0, 0, 0)] = 0.0
        out[..., i] = np.real(np.fft.ifftn(uhat))
    return VectorField(domain, out)


def _poisson_dirichlet_channel(domain: DomainSpec, shape, rhs: np.ndarray) -> np.ndarray:
    """Solve ``-lap u = rhs`` with u=0 on the y-walls of an x-periodic channel."""
    from scipy.linalg import solve_banded

    nx, ny = shape
    hx, hy = grid_spacing(domain, shape)
    qs = _wavenumbers(domain, shape, 0)
    lam = (2.0 - 2.0 * np.cos(qs * hx)) / hx**2  # 3-point x-Laplacian symbol
    rhat = np.fft.fft(rhs, axis=0)
    out = np.zeros((nx, ny), dtype=complex)
    for q in range(nx):
        # interior tridiagonal in y; wall rows pinned to zero
        nin = ny - 2
        ab = np.zeros((3, nin), dtype=complex)
        ab[0, 1:] = -1.0 / hy**2
        ab[1, :] = 2.0 / hy**2 + lam[q]
        ab[2, :-1] = -1.0 / hy**2
        out[q, 1:-1] = solve_banded((1, 1), ab, rhat[q, 1:-1])
    return np.real(np.fft.ifft(out, axis=0))


def _inverse_curl_walled_2d(omega: ScalarField, domain: DomainSpec) -> VectorField:
    # curl of a 2-d scalar: (d_y w, -d_x w)
    rhs_x = _deriv_fd(omega.values, domain, omega.shape, 1)
    rhs_y = -_deriv_fd(omega.values, domain, omega.shape, 0)
    if domain.walled_axes == (1,):
        ux = _poisson_dirichlet_channel(domain, omega.shape, rhs_x)
        uy = _poisson_dirichlet_channel(domain, omega.shape, rhs_y)
        return VectorField(domain, np.stack([ux, uy], axis=-1))
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    nx, ny = omega.shape
    hx, hy = grid_spacing(domain, omega.shape)
    ex = np.ones(nx)
    ey = np.ones(ny)
    Lx = sp.diags([ex[:-1], -2 * ex, ex[:-1]], [-1, 0, 1]) / hx**2
    Ly = sp.diags([ey[:-1], -2 * ey, ey[:-1]], [-1, 0, 1]) / hy**2
    L = sp.kron(Lx, sp.identity(ny)) + sp.kron(sp.identity(nx), Ly)
    mask = np.zeros((nx, ny), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    wall = mask.reshape(-1)
    A = (-L).tolil()
    for r in np.flatnonzero(wall):
        A.rows[r] = [r]
        A.data[r] = [1.0]
    out = np.empty((nx, ny, 2))
    for c, rhs in enumerate((rhs_x, rhs_y)):
        b = rhs.reshape(-1).copy()
        b[wall] = 0.0
        out[..., c] = spla.spsolve(A.tocsc(), b).reshape(nx, ny)
    return VectorField(domain, out)


# ---------------------------------------------------------------------------
# text dumps


def write_grid_dump(path, values: np.ndarray, domain: DomainSpec, t: float):
    """Plain-text node dump: one header line, then row-major records."""
    d = domain.dim
    scalar = values.ndim == d
    shape = values.shape if scalar else values.shape[:-1]
    C = 1 if scalar else values.shape[-1]
    h = grid_spacing(domain, shape)
    header = " ".join([str(n) for n in shape] + [repr(float(x)) for x in h]
                      + [repr(float(t)), str(C)])
    flat = values.reshape(-1, C)
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in flat:
            f.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_grid_dump(path, domain: DomainSpec):
    """Read a dump written by :func:`write_grid_dump` -> ``(values, t)``."""
    with open(path, "r", encoding="utf-8") as f:
        head = f.readline().split()
        d = domain.dim
        shape = tuple(int(x) for x in head[:d])
        t = float(head[2 * d])
        C = int(head[2 * d + 1])
        vals = np.loadtxt(f, ndmin=2)
    vals = vals.reshape(*shape, C)
    if C == 1:
        vals = vals[..., 0]
    return vals, t
