import numpy as np
import pytest

from slns.domain import (DomainSpec, boundary_crossing, channel_x,
                         contains, on_boundary, rectangle,
                         segment_crossings, torus, wrap)
from slns.errors import UsageError

RECT = rectangle((0.0, 0.0), (1.0, 1.0))
CHAN = channel_x((0.0, 0.0), (1.0, 1.0))
TOR = torus((0.0, 0.0), (2 * np.pi, 2 * np.pi))


def test_contains_interior_and_boundary():
    assert contains(RECT, (0.5, 0.5))
    assert not contains(RECT, (0.5, 1.0))   # the domain is open
    assert not contains(RECT, (0.0, 0.5))
    assert contains(TOR, (7.0, -1.0))       # wraps, no walls


def test_contains_dimension_mismatch():
    with pytest.raises(UsageError):
        contains(RECT, (0.5, 0.5, 0.5))


def test_kind_validation():
    with pytest.raises(UsageError):
        DomainSpec("cylinder", (0, 0), (1, 1))
    with pytest.raises(UsageError):
        rectangle((0.0,), (1.0,))           # 1-d not supported
    with pytest.raises(UsageError):
        rectangle((0, 0), (0, 1))           # empty extent


def test_crossing_simple_interpolation():
    rec = boundary_crossing(CHAN, (0.5, 0.1), (0.5, -0.1))
    assert rec.wall_axis == 1
    assert rec.lam == pytest.approx(0.5)
    assert rec.point == pytest.approx((0.5, 0.0))
    assert rec.point[1] == 0.0              # snapped exactly
    assert not contains(CHAN, rec.point)


def test_crossing_none_cases():
    assert boundary_crossing(RECT, (0.2, 0.2), (0.3, 0.3)) is None
    assert boundary_crossing(TOR, (0.1, 0.1), (25.0, -14.0)) is None


def test_crossing_grazing_counts():
    rec = boundary_crossing(RECT, (0.5, 0.5), (0.5, 1.0))
    assert rec is not None and rec.lam == pytest.approx(1.0)
    assert rec.point[1] == 1.0


def test_crossing_requires_interior_start():
    with pytest.raises(UsageError):
        boundary_crossing(RECT, (0.5, 1.5), (0.5, 0.5))


def test_first_crossing_picks_smallest_lambda():
    # segment leaves through the x-wall first, then would cross the y-wall
    rec = boundary_crossing(RECT, (0.9, 0.8), (1.3, 1.3))
    assert rec.wall_axis == 0
    assert rec.point[0] == 1.0


def test_crossing_against_dense_sampling_oracle():
    rng = np.random.default_rng(7)
    for _ in range(400):
        x0 = rng.uniform(0.01, 0.99, size=2)
        x1 = x0 + rng.uniform(-1.5, 1.5, size=2)
        rec = boundary_crossing(RECT, x0, x1)
        lams = np.linspace(0.0, 1.0, 501)[1:]
        pts = x0[None, :] + lams[:, None] * (x1 - x0)[None, :]
        inside = np.all((pts > 0.0) & (pts < 1.0), axis=1)
        if rec is None:
            # every sampled convex combination stays in the closed slab
            assert np.all((pts >= 0.0) & (pts <= 1.0))
        else:
            first_out = lams[np.argmin(inside)] if not inside.all() else 1.0
            assert rec.lam <= first_out + 2e-3
            assert abs(rec.point[rec.wall_axis] - round(rec.point[rec.wall_axis])) < 1e-12


def test_periodic_translation_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x0 = np.array([rng.uniform(0, 1), rng.uniform(0.01, 0.99)])
        x1 = x0 + rng.uniform(-0.5, 0.5, size=2)
        shift = np.array([rng.integers(-3, 4) * 1.0, 0.0])
        a = boundary_crossing(CHAN, x0, x1)
        b = boundary_crossing(CHAN, x0 + shift, x1 + shift)
        assert (a is None) == (b is None)
        if a is not None:
            assert a.lam == pytest.approx(b.lam, abs=1e-12)
            assert a.wall_axis == b.wall_axis
        assert contains(CHAN, x0) == contains(CHAN, x0 + shift)


def test_segment_crossings_matches_scalar_version():
    rng = np.random.default_rng(11)
    x0 = np.stack([rng.uniform(0, 1, 200), rng.uniform(0.01, 0.99, 200)], axis=1)
    x1 = x0 + rng.uniform(-0.6, 0.6, size=(200, 2))
    hit, lam, axis, side = segment_crossings(CHAN, x0, x1)
    for i in range(200):
        rec = boundary_crossing(CHAN, x0[i], x1[i])
        assert hit[i] == (rec is not None)
        if rec is not None:
            assert lam[i] == pytest.approx(rec.lam, abs=1e-14)
            assert axis[i] == rec.wall_axis


def test_wrap_and_on_boundary():
    w = wrap(TOR, np.array([7.0, -1.0]))
    assert np.all((w >= 0) & (w < 2 * np.pi))
    assert on_boundary(CHAN, (0.3, 0.0))
    assert on_boundary(CHAN, (0.3, 1.0))
    assert not on_boundary(CHAN, (0.3, 0.5))
    assert not on_boundary(TOR, (0.0, 0.0))
