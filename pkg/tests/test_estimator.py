import numpy as np
import pytest

import slns
from slns import reference as ref
from slns.errors import UsageError
from slns.estimator import (BoundaryData, CurveSpec, McEstimate, WallTrace,
                            check_martingale_identity, estimate_circulation,
                            estimate_scalar_fk, estimate_scalar_fk_many,
                            estimate_vorticity, estimate_weber_velocity,
                            mc_stats)
from slns.solver import SolverConfig, _direct_circulation, rel_l2, solve_wbar_pde

TOR = ref.TG_DOMAIN
CHAN = ref.CHANNEL_DOMAIN


# ---------------------------------------------------------------------------
# statistics helper


def test_mc_stats_exact_zero_variance():
    s = np.full((1, 1000), 0.7)
    mean, se = mc_stats(s, axis=1)
    assert mean[0] == 0.7 and se[0] == 0.0


def test_mc_stats_matches_numpy():
    rng = np.random.default_rng(0)
    s = rng.standard_normal((3, 500))
    mean, se = mc_stats(s, axis=1)
    assert np.allclose(mean, s.mean(axis=1))
    assert np.allclose(se, s.std(axis=1, ddof=1) / np.sqrt(500))


def test_mc_estimate_validation():
    with pytest.raises(UsageError):
        McEstimate(0.0, 0.0, 1, 0)
    with pytest.raises(UsageError):
        McEstimate(0.0, -1.0, 10, 0)


# ---------------------------------------------------------------------------
# scalar transport


def test_scalar_fk_constant_data_exact():
    series = ref.zero_series(CHAN, (8, 9), 0.1, nu=1.0)
    data = BoundaryData(theta0=0.7, g=0.7)
    est = estimate_scalar_fk(series, CHAN, data, (0.5, 0.5), 0.1, 1000, 1e-2, 5)
    assert est.mean == 0.7 and est.std_error == 0.0


def test_scalar_fk_constant_potential_exact_exponential():
    series = ref.zero_series(TOR, (8, 8), 0.1, nu=1.0)

    def cpot(X, T):
        return np.full(len(np.atleast_2d(X)), 2.0)
    data = BoundaryData(theta0=1.0, potential_c=cpot)
    est = estimate_scalar_fk(series, TOR, data, (1.0, 1.0), 0.1, 500, 1e-3, 6)
    assert est.mean == pytest.approx(np.exp(-0.2), abs=1e-12)
    assert est.std_error == 0.0


def test_scalar_fk_heat_slab_oracle():
    nu, t = 1.0, 0.1
    series = ref.zero_series(CHAN, (16, 33), t, nu)
    data = BoundaryData(theta0=ref.make_callable(ref.heat_slab_theta0_at, ((1, 1.0),)),
                        g=0.0)
    pts = np.array([[0.5, 0.3], [0.5, 0.5], [0.5, 0.7]])
    ests = estimate_scalar_fk_many(series, CHAN, data, pts, t, 20000, 1e-3, 123)
    for (x, y), e in zip(pts, ests):
        oracle = float(ref.heat_slab(nu, t, y))
        assert abs(e.mean - oracle) <= 3 * e.std_error + 5e-3
    # the mid-slab value matches the classical single-mode decay number
    assert float(ref.heat_slab(1.0, 0.1, 0.5)) == pytest.approx(np.exp(-np.pi ** 2 * 0.1),
                                                                abs=1e-15)
    assert float(ref.heat_slab(1.0, 0.1, 0.5)) == pytest.approx(0.3727, abs=1e-4)


def test_scalar_fk_multi_mode_slab():
    nu, t = 1.0, 0.05
    modes = ((1, 1.0), (3, -0.5))
    series = ref.zero_series(CHAN, (16, 33), t, nu)
    data = BoundaryData(theta0=ref.make_callable(ref.heat_slab_theta0_at, modes),
                        g=0.0)
    est = estimate_scalar_fk(series, CHAN, data, (0.2, 0.4), t, 40000, 5e-4, 3)
    oracle = float(ref.heat_slab(nu, t, 0.4, modes))
    assert abs(est.mean - oracle) <= 3 * est.std_error + 2.5e-3


def test_scalar_fk_validation():
    series = ref.zero_series(CHAN, (8, 9), 0.1, nu=1.0)
    data = BoundaryData(theta0=0.0, g=0.0)
    with pytest.raises(UsageError):
        estimate_scalar_fk(series, CHAN, data, (0.5, 0.5), 0.5, 100, 1e-2, 0)
    with pytest.raises(UsageError):
        estimate_scalar_fk(series, CHAN, data, (0.5, 1.5), 0.1, 100, 1e-2, 0)


def test_scalar_fk_standard_error_scaling():
    nu, t = 1.0, 0.05
    series = ref.zero_series(CHAN, (8, 17), t, nu)
    data = BoundaryData(theta0=ref.make_callable(ref.heat_slab_theta0_at, ((1, 1.0),)),
                        g=0.0)
    ses = []
    for n in (1000, 10000, 100000):
        e = estimate_scalar_fk(series, CHAN, data, (0.5, 0.5), t, n, 1e-3, 17)
        ses.append(e.std_error)
    slope = np.polyfit(np.log([1e3, 1e4, 1e5]), np.log(ses), 1)[0]
    assert -0.6 < slope < -0.4


# ---------------------------------------------------------------------------
# transported-momentum velocity


def test_weber_identity_limit_t_to_zero():
    nu = 0.1
    series = ref.taylor_green_series(nu, (16, 16), 0.02, 3)
    data = BoundaryData(u0=ref.make_callable(ref.tg_velocity_at, nu, 0.0))
    est = estimate_weber_velocity(series, TOR, data, 0.01, 300, 0.01, 2)
    pts = slns.grid_points(TOR, (16, 16)).reshape(-1, 2)
    assert rel_l2(est.mean, ref.taylor_green(nu, 0.0, pts)) < 0.03


def test_weber_heat_semigroup_decay():
    nu, t = 0.1, 0.5
    series = ref.zero_series(TOR, (16, 16), t, nu)
    data = BoundaryData(u0=ref.make_callable(ref.tg_velocity_at, nu, 0.0))
    est = estimate_weber_velocity(series, TOR, data, t, 1500, 0.01, 77)
    pts = slns.grid_points(TOR, (16, 16)).reshape(-1, 2)
    expect = np.exp(-2 * nu * t) * ref.taylor_green(nu, 0.0, pts)
    assert rel_l2(est.mean, expect) < 0.035


def test_weber_taylor_green_fixed_point_small():
    nu, t = 0.1, 0.5
    series = ref.taylor_green_series(nu, (16, 16), t, 21)
    data = BoundaryData(u0=ref.make_callable(ref.tg_velocity_at, nu, 0.0))
    est = estimate_weber_velocity(series, TOR, data, t, 2000, 0.01, 78)
    mean, se = est.as_fields(TOR, (16, 16))
    proj = slns.leray_project(mean, TOR)
    pts = slns.grid_points(TOR, (16, 16)).reshape(-1, 2)
    exact = ref.taylor_green(nu, t, pts).reshape(16, 16, 2)
    assert rel_l2(proj.values, exact) < 0.05
    assert np.all(se.values >= 0.0)


def test_weber_missing_wall_weight_raises():
    series = ref.channel_series(1.0, (8, 17), 0.02, 3)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, 1.0))
    with pytest.raises(UsageError):
        estimate_weber_velocity(series, CHAN, data, 0.02, 100, 1e-3, 0)


def test_weber_wall_points_return_wall_weight():
    nu = 1.0
    cfg = SolverConfig(nu=nu, t_final=0.02, dt=1e-3, dt_snap=2e-3,
                       shape=(8, 17), n_paths=10, seed=0)
    series = ref.channel_series(nu, (8, 17), 0.02, 11)
    u0 = slns.VectorField.from_callable(CHAN, (8, 17),
                                        ref.make_callable(ref.channel_u0_at, nu))
    wbar, trace = solve_wbar_pde(series, CHAN, u0, cfg)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, nu), w_tilde=trace)
    pts = np.array([[0.25, 0.0], [0.5, 1.0]])
    est = estimate_weber_velocity(series, CHAN, data, 0.02, 50, 1e-3, 4,
                                  points=pts)
    expect = trace(pts, np.full(2, 0.02))
    assert np.array_equal(est.mean, expect)
    assert np.all(est.std_error == 0.0)


def test_weber_workers_equivalence():
    nu, t = 0.1, 0.2
    series = ref.taylor_green_series(nu, (8, 8), t, 5)
    data = BoundaryData(u0=ref.make_callable(ref.tg_velocity_at, nu, 0.0))
    a = estimate_weber_velocity(series, TOR, data, t, 200, 0.01, 9, workers=1)
    b = estimate_weber_velocity(series, TOR, data, t, 200, 0.01, 9, workers=2)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.std_error, b.std_error)


# ---------------------------------------------------------------------------
# vorticity


def test_vorticity_wall_point_exact():
    nu, t = 1.0, 0.03
    series = ref.channel_series(nu, (8, 17), t, 4)
    data = BoundaryData(omega0=ref.make_callable(ref.channel_omega0_at, nu),
                        omega_wall=ref.make_callable(ref.channel_vorticity_at, nu))
    est = estimate_vorticity(series, CHAN, data, (0.4, 0.0), t, 100, 1e-3, 8)
    assert est.mean == pytest.approx(float(ref.channel_decay(nu, t, 0.0)[1]), abs=1e-12)
    assert est.std_error == 0.0


def test_vorticity_torus_heat_decay():
    nu, t = 0.1, 0.4
    series = ref.zero_series(TOR, (16, 16), t, nu)
    data = BoundaryData(omega0=ref.make_callable(ref.tg_vorticity_at, nu, 0.0))
    x = (1.2, 2.0)
    est = estimate_vorticity(series, TOR, data, x, t, 20000, 5e-3, 14)
    expect = np.exp(-2 * nu * t) * float(ref.taylor_green_vorticity(nu, 0.0,
                                                                    np.array([x]))[0])
    assert abs(est.mean - expect) <= 3 * est.std_error + 5e-3


def test_vorticity_channel_oracle():
    nu, t = 1.0, 0.05
    series = ref.channel_series(nu, (16, 33), t, 21)
    data = BoundaryData(omega0=ref.make_callable(ref.channel_omega0_at, nu),
                        omega_wall=ref.make_callable(ref.channel_vorticity_at, nu))
    est = estimate_vorticity(series, CHAN, data, (0.5, 0.3), t, 30000, 5e-4, 15)
    oracle = float(ref.channel_decay(nu, t, 0.3)[1])
    assert abs(est.mean - oracle) <= 3 * est.std_error + 2.5e-3


def test_vorticity_2d_embedded_in_3d():
    nu, t = 0.1, 0.3
    tor3 = slns.torus((0, 0, 0), (2 * np.pi,) * 3)

    def u3(X, tt):
        X = np.atleast_2d(X)
        u2 = ref.taylor_green(nu, tt, X[:, :2])
        return np.concatenate([u2, np.zeros((len(X), 1))], axis=1)

    def om3_0(X):
        X = np.atleast_2d(X)
        w = ref.taylor_green_vorticity(nu, 0.0, X[:, :2])
        return np.stack([np.zeros_like(w), np.zeros_like(w), w], -1)

    ser3 = slns.FieldSeries.from_callable(tor3, (12, 12, 4), np.linspace(0, t, 7),
                                          u3, nu)
    ser2 = slns.FieldSeries.from_callable(TOR, (12, 12), np.linspace(0, t, 7),
                                          lambda X, tt: ref.taylor_green(nu, tt, X),
                                          nu)
    d3 = BoundaryData(omega0=om3_0)
    d2 = BoundaryData(omega0=ref.make_callable(ref.tg_vorticity_at, nu, 0.0))
    e2 = estimate_vorticity(ser2, TOR, d2, (1.3, 2.1), t, 4000, 5e-3, 17)
    e3 = estimate_vorticity(ser3, tor3, d3, (1.3, 2.1, 3.0), t, 4000, 5e-3, 18)
    pooled = np.sqrt(e2.std_error ** 2 + e3.std_error[2] ** 2)
    assert abs(e3.mean[2] - e2.mean) <= 3 * pooled + 5e-3
    assert abs(e3.mean[0]) < 1e-12 and abs(e3.mean[1]) < 1e-12


# ---------------------------------------------------------------------------
# circulation


def test_circulation_zero_initial_data():
    series = ref.zero_series(TOR, (8, 8), 0.1, nu=0.1)
    loop = CurveSpec.square((np.pi, np.pi), np.pi, 16)
    est = estimate_circulation(series, TOR, loop, 0.1, 100, 1e-2, 3)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_circulation_walls_rejected():
    series = ref.channel_series(1.0, (8, 17), 0.05, 3)
    loop = CurveSpec.square((0.5, 0.5), 0.25, 8)
    with pytest.raises(UsageError):
        estimate_circulation(series, CHAN, loop, 0.05, 100, 1e-3, 0)


def test_circulation_off_center_loop_nontrivial_oracle():
    # loop enclosing [0, pi]^2: circulation = area integral of the vorticity
    # = 8 exp(-2 nu t) for the decaying cellular field; the slack beyond the
    # confidence band covers the O(h^2) bilinear-interpolation bias of the
    # grid-backed initial velocity evaluated along the transported loop
    nu, t = 0.1, 0.2
    series = ref.taylor_green_series(nu, (64, 64), t, 11)
    loop = CurveSpec.square((np.pi / 2, np.pi / 2), np.pi, 64)
    est = estimate_circulation(series, TOR, loop, t, 4000, 2e-3, 21)
    direct = _direct_circulation(ref.make_callable(ref.tg_velocity_at, nu, t),
                                 loop, 4096)
    assert direct == pytest.approx(8.0 * np.exp(-2 * nu * t), rel=2e-3)
    assert abs(est.mean - direct) <= 3 * est.std_error + 0.02
    assert est.std_error < 0.1


def test_curve_spec_validation():
    with pytest.raises(UsageError):
        CurveSpec(np.array([[0.0, 0.0], [1.0, 1.0]]))
    c = CurveSpec(np.array([[0, 0], [1, 0], [1, 1], [0, 0]], dtype=float))
    assert len(c.vertices) == 3  # closing duplicate dropped


# ---------------------------------------------------------------------------
# stopping-level diagnostic


def test_martingale_level_t_is_exact():
    nu, t = 1.0, 0.02
    cfg = SolverConfig(nu=nu, t_final=t, dt=1e-3, dt_snap=2e-3,
                       shape=(8, 17), n_paths=10, seed=0)
    series = ref.channel_series(nu, (8, 17), t, 11)
    u0 = slns.VectorField.from_callable(CHAN, (8, 17),
                                        ref.make_callable(ref.channel_u0_at, nu))
    wbar, trace = solve_wbar_pde(series, CHAN, u0, cfg)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, nu),
                        w_tilde=trace, wbar=wbar)
    x = (0.3, 0.4)
    ests = check_martingale_identity(series, CHAN, data, x, t, [t], 64, 1e-3, 5)
    expect = wbar.sample(np.array([x]), t)[0]
    assert np.allclose(ests[0].mean, expect, atol=1e-12)
    assert np.all(ests[0].std_error == 0.0)


def test_martingale_levels_agree_channel():
    nu, t = 1.0, 0.04
    cfg = SolverConfig(nu=nu, t_final=t, dt=2e-4, dt_snap=2e-3,
                       shape=(16, 33), n_paths=10, seed=0)
    series = ref.channel_series(nu, (16, 33), t, 21)
    u0 = slns.VectorField.from_callable(CHAN, (16, 33),
                                        ref.make_callable(ref.channel_u0_at, nu))
    wbar, trace = solve_wbar_pde(series, CHAN, u0, cfg)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, nu),
                        w_tilde=trace, wbar=wbar)
    ests = check_martingale_identity(series, CHAN, data, (0.3, 0.35), t,
                                     [0.0, 0.5 * t], 30000, 2e-4, 6)
    diff = np.abs(np.asarray(ests[0].mean) - np.asarray(ests[1].mean))
    pooled = np.sqrt(np.asarray(ests[0].std_error) ** 2
                     + np.asarray(ests[1].std_error) ** 2)
    assert np.all(diff <= 3 * pooled + 1e-3)


def test_martingale_requires_wbar():
    series = ref.channel_series(1.0, (8, 17), 0.02, 3)
    data = BoundaryData(u0=ref.make_callable(ref.channel_u0_at, 1.0))
    with pytest.raises(UsageError):
        check_martingale_identity(series, CHAN, data, (0.3, 0.4), 0.02,
                                  [0.0], 100, 1e-3, 0)


# ---------------------------------------------------------------------------
# boundary-data containers


def test_wall_trace_interpolation():
    times = [0.0, 1.0]
    nx = 8
    vals_b = np.zeros((2, nx, 2))
    vals_t = np.ones((2, nx, 2))
    vals_b[1] = 2.0  # linear-in-time from 0 to 2 on the bottom wall
    trace = WallTrace(CHAN, (nx, 5), times, {(1, 0): vals_b, (1, 1): vals_t})
    out = trace(np.array([[0.3, 0.0]]), np.array([0.5]))
    assert np.allclose(out, 1.0)
    out_top = trace(np.array([[0.9, 1.0]]), np.array([0.25]))
    assert np.allclose(out_top, 1.0)


def test_boundary_data_accepts_fields_and_constants():
    s = slns.ScalarField.from_callable(CHAN, (8, 9), lambda X: X[:, 1])
    from slns.estimator import _initial_fn, _boundary_fn
    f = _initial_fn(s, "theta0")
    assert f(np.array([[0.5, 0.25]]))[0] == pytest.approx(0.25, abs=1e-12)
    g = _boundary_fn(1.5, "g")
    assert np.all(g(np.zeros((3, 2)), np.zeros(3)) == 1.5)
    with pytest.raises(UsageError):
        _initial_fn(None, "theta0")
