import numpy as np
import pytest
import sympy as sp

from slns import reference as ref
from slns.errors import UsageError


def test_taylor_green_point_values():
    u = ref.taylor_green(0.1, 0.0, np.array([[np.pi / 2, 0.0]]))
    assert np.allclose(u, [[1.0, 0.0]])
    u2 = ref.taylor_green(0.1, 1.0, np.array([[np.pi / 2, 0.0]]))
    assert np.allclose(u2, [[np.exp(-0.2), 0.0]])


def test_taylor_green_navier_stokes_residual_symbolic():
    # substitute the closed-form velocity and pressure into the momentum
    # equation and evaluate the residual at random points
    # note the pressure sign: for the (sin x cos y, -cos x sin y) phase the
    # nonlinear term is +(e^2/2)(sin 2x, sin 2y), so p = +e^2 (cos2x+cos2y)/4
    x, y, t, nu = sp.symbols("x y t nu", real=True)
    e = sp.exp(-2 * nu * t)
    ux = e * sp.sin(x) * sp.cos(y)
    uy = -e * sp.cos(x) * sp.sin(y)
    p = sp.exp(-4 * nu * t) * (sp.cos(2 * x) + sp.cos(2 * y)) / 4
    lap = lambda f: sp.diff(f, x, 2) + sp.diff(f, y, 2)
    rx = sp.diff(ux, t) + ux * sp.diff(ux, x) + uy * sp.diff(ux, y) \
        - nu * lap(ux) + sp.diff(p, x)
    ry = sp.diff(uy, t) + ux * sp.diff(uy, x) + uy * sp.diff(uy, y) \
        - nu * lap(uy) + sp.diff(p, y)
    div = sp.diff(ux, x) + sp.diff(uy, y)
    fns = [sp.lambdify((x, y, t, nu), sp.simplify(expr)) for expr in (rx, ry, div)]
    rng = np.random.default_rng(0)
    for _ in range(20):
        args = (rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi),
                rng.uniform(0, 1), rng.uniform(0.05, 1.0))
        for f in fns:
            assert abs(f(*args)) <= 1e-10


def test_channel_decay_values_and_no_slip():
    u, om = ref.channel_decay(1.0, 0.0, 0.5)
    assert np.allclose(u, [1.0, 0.0])
    for t in (0.0, 0.3, 1.0):
        u0, _ = ref.channel_decay(1.0, t, 0.0)
        u1, _ = ref.channel_decay(1.0, t, 1.0)
        assert np.allclose(u0, 0.0, atol=1e-15) and np.allclose(u1, 0.0, atol=1e-15)
    # nonzero wall vorticity is the nontrivial boundary source
    _, om_wall = ref.channel_decay(1.0, 0.2, 0.0)
    assert om_wall == pytest.approx(-np.pi * np.exp(-np.pi ** 2 * 0.2))


def test_channel_decay_heat_residual_symbolic():
    y, t, nu = sp.symbols("y t nu", real=True)
    u = sp.exp(-nu * sp.pi ** 2 * t) * sp.sin(sp.pi * y)
    resid = sp.simplify(sp.diff(u, t) - nu * sp.diff(u, y, 2))
    assert resid == 0
    om = sp.simplify(-sp.diff(u, y))
    assert sp.simplify(om + sp.pi * sp.exp(-nu * sp.pi ** 2 * t)
                       * sp.cos(sp.pi * y)) == 0


def test_heat_slab_values():
    assert float(ref.heat_slab(1.0, 0.1, 0.5)) == pytest.approx(
        np.exp(-np.pi ** 2 * 0.1), abs=1e-15)
    ys = np.linspace(0, 1, 11)
    modes = ((1, 1.0), (2, 0.3), (5, -0.1))
    at0 = ref.heat_slab(1.0, 0.0, ys, modes)
    expect = sum(a * np.sin(k * np.pi * ys) for k, a in modes)
    assert np.allclose(at0, expect, atol=1e-14)
    for t in (0.0, 0.5):
        vals = ref.heat_slab(1.0, t, np.array([0.0, 1.0]), modes)
        assert np.allclose(vals, 0.0, atol=1e-12)


def test_reference_case_registry():
    case = ref.reference_case("taylor_green")
    assert case["domain"].kind == "torus"
    with pytest.raises(UsageError):
        ref.reference_case("unknown_case")


def test_series_builders_sample_the_analytic_solutions():
    s = ref.taylor_green_series(0.1, (8, 8), 0.2, 3)
    assert s.t_first == 0.0 and s.t_last == pytest.approx(0.2)
    import slns
    pts = slns.grid_points(ref.TG_DOMAIN, (8, 8)).reshape(-1, 2)
    assert np.allclose(s.snapshots[-1].values.reshape(-1, 2),
                       ref.taylor_green(0.1, 0.2, pts), atol=1e-14)
    c = ref.channel_series(1.0, (8, 9), 0.1, 3)
    assert np.allclose(c.snapshots[0].values[:, 4, 0],
                       np.sin(np.pi * 0.5), atol=1e-14)
