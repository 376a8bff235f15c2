"""Analytic and finite-difference reference solutions.

These oracles validate the Monte Carlo machinery and are kept free of any
estimator code: a decaying Taylor-Green vortex on the torus, a decaying
unidirectional channel flow with no-slip walls, a Dirichlet heat slab, and
a periodic vorticity-streamfunction solver for non-analytic initial data.

Everything here is a pure function of its arguments; the module-level
``*_at`` helpers exist so parameterised callables stay picklable for
worker processes.
"""

from __future__ import annotations

from functools import partial

import numpy as np

from .domain import DomainSpec, channel_x, torus
from .errors import UsageError
from .field import (FieldSeries, ScalarField, VectorField, grid_spacing,
                    inverse_curl)

TG_DOMAIN = torus((0.0, 0.0), (2 * np.pi, 2 * np.pi))
CHANNEL_DOMAIN = channel_x((0.0, 0.0), (1.0, 1.0))


# ---------------------------------------------------------------------------
# Taylor-Green vortex (torus)


def taylor_green(nu: float, t: float, x) -> np.ndarray:
    """Velocity of the decaying Taylor-Green vortex at points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = np.exp(-2.0 * nu * t)
    return e * np.stack([np.sin(x[..., 0]) * np.cos(x[..., 1]),
                         -np.cos(x[..., 0]) * np.sin(x[..., 1])], axis=-1)


def taylor_green_vorticity(nu: float, t: float, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return 2.0 * np.exp(-2.0 * nu * t) * np.sin(x[..., 0]) * np.sin(x[..., 1])


def taylor_green_pressure(nu: float, t: float, x) -> np.ndarray:
    # sign fixed by the momentum-equation residual check in the test suite
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return 0.25 * np.exp(-4.0 * nu * t) * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1]))


def taylor_green_series(nu: float, shape, t_final: float, n_snapshots: int) -> FieldSeries:
    times = np.linspace(0.0, t_final, n_snapshots)
    return FieldSeries.from_callable(TG_DOMAIN, shape, times,
                                     lambda X, t: taylor_green(nu, t, X), nu)


def tg_velocity_at(nu: float, t: float, X) -> np.ndarray:
    return taylor_green(nu, t, X)


def tg_vorticity_at(nu: float, t: float, X) -> np.ndarray:
    return taylor_green_vorticity(nu, t, X)


# ---------------------------------------------------------------------------
# decaying channel shear (x-periodic channel, no-slip walls)


def channel_decay(nu: float, t: float, y):
    """Velocity and vorticity of the decaying shear ``(exp(-nu pi^2 t) sin(pi y), 0)``."""
    y = np.asarray(y, dtype=float)
    e = np.exp(-nu * np.pi**2 * t)
    u = np.stack([e * np.sin(np.pi * y), np.zeros_like(y)], axis=-1)
    omega = -np.pi * e * np.cos(np.pi * y)
    return u, omega


def channel_velocity_at(nu: float, X, t) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return channel_decay(nu, t, X[..., 1])[0]


def channel_vorticity_at(nu: float, X, t) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return channel_decay(nu, t, X[..., 1])[1]


def channel_u0_at(nu: float, X) -> np.ndarray:
    return channel_velocity_at(nu, X, 0.0)


def channel_omega0_at(nu: float, X) -> np.ndarray:
    return channel_vorticity_at(nu, X, 0.0)


def channel_series(nu: float, shape, t_final: float, n_snapshots: int) -> FieldSeries:
    times = np.linspace(0.0, t_final, n_snapshots)
    return FieldSeries.from_callable(CHANNEL_DOMAIN, shape, times,
                                     lambda X, t: channel_velocity_at(nu, X, t), nu)


# ---------------------------------------------------------------------------
# heat slab (Dirichlet walls at y = 0, 1)


def heat_slab(nu: float, t: float, y, modes=((1, 1.0),)) -> np.ndarray:
    """Sine-series solution of the slab heat equation with absorbing walls."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for k, a in modes:
        out = out + a * np.exp(-nu * (k * np.pi) ** 2 * t) * np.sin(k * np.pi * y)
    return out


def heat_slab_theta0_at(modes, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return heat_slab(1.0, 0.0, X[..., 1], modes)


def zero_scalar_at(X, T) -> np.ndarray:
    return np.zeros(len(np.atleast_2d(X)))


def zero_series(domain: DomainSpec, shape, t_final: float, nu: float,
                n_snapshots: int = 2) -> FieldSeries:
    times = np.linspace(0.0, t_final, n_snapshots)
    snaps = [VectorField.zeros(domain, shape) for _ in times]
    return FieldSeries(times, snaps, nu)


# ---------------------------------------------------------------------------
# finite-difference vorticity-streamfunction reference (torus)


def fd_vorticity_stream(omega0: ScalarField, nu: float, t_final: float, dt: float,
                        snapshot_every: int = 1) -> FieldSeries:
    """2-d periodic reference solver: conservative centred advection of the
    vorticity, implicit (spectral) diffusion, velocity via streamfunction
    inversion each step. Returns the velocity snapshots as a series.
    """
    domain = omega0.domain
    if domain.has_walls():
        raise UsageError("the vorticity-streamfunction reference runs on the torus")
    shape = omega0.shape
    h = grid_spacing(domain, shape)
    mean = float(np.mean(omega0.values))
    if abs(mean) > 1e-10 * max(1.0, float(np.abs(omega0.values).max())):
        raise UsageError("initial vorticity must have zero mean on the torus")

    nsteps = int(round(t_final / dt))
    if abs(nsteps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise UsageError(f"dt={dt} does not divide t_final={t_final}")
    if nsteps % snapshot_every != 0:
        raise UsageError("snapshot_every must divide the number of steps")

    # implicit diffusion factor in Fourier space
    kx = 2 * np.pi * np.fft.fftfreq(shape[0], d=h[0])
    ky = 2 * np.pi * np.fft.fftfreq(shape[1], d=h[1])
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    diff = 1.0 / (1.0 + nu * dt * k2)

    w = omega0.values.copy()
    u = inverse_curl(ScalarField(domain, w), domain).values
    umax = float(np.abs(u).max())
    if umax * dt > min(h):
        raise UsageError(
            f"advective CFL violated: dt={dt} exceeds admissible {min(h) / max(umax, 1e-300):.3e}")

    times = [0.0]
    snaps = [inverse_curl(ScalarField(domain, w), domain)]

    def ddx(f, ax):
        return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * h[ax])

    for step in range(1, nsteps + 1):
        uf = inverse_curl(ScalarField(domain, w), domain).values
        flux = ddx(uf[..., 0] * w, 0) + ddx(uf[..., 1] * w, 1)
        w = np.real(np.fft.ifft2(diff * np.fft.fft2(w - dt * flux)))
        if step % snapshot_every == 0:
            times.append(step * dt)
            snaps.append(inverse_curl(ScalarField(domain, w), domain))
    return FieldSeries(np.asarray(times), snaps, nu)


# ---------------------------------------------------------------------------
# named cases


_CASES = {
    "taylor_green": {"domain": TG_DOMAIN, "default_nu": 0.1},
    "channel_decay": {"domain": CHANNEL_DOMAIN, "default_nu": 1.0},
    "heat_slab": {"domain": CHANNEL_DOMAIN, "default_nu": 1.0},
    "fd_general": {"domain": TG_DOMAIN, "default_nu": 0.1},
}


def reference_case(name: str) -> dict:
    if name not in _CASES:
        raise UsageError(f"unknown reference case {name!r}; known: {sorted(_CASES)}")
    return dict(_CASES[name])


def make_callable(fn, *bound):
    """Picklable partial application (worker processes need real functions)."""
    return partial(fn, *bound)
