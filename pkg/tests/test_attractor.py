import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fouflow.attractor import (
    InsufficientHistoryError,
    absorbing_radius,
    exponential_history,
    forward_invariance_check,
    nesting_distances,
    pullback_snapshot,
    semidistance,
    tail_steps,
)
from fouflow.field import c1_norm, c1_norm_series

from conftest import frozen_copy, zero_field


# ------------------------------------------------------------ history integral

@pytest.mark.parametrize("dt,tau", [(0.1, 1.0), (0.2, 1e-3), (0.05, 100.0)])
def test_history_exact_for_linear_data(dt, tau):
    t = np.arange(50) * dt
    values = 2.0 + 0.5 * t
    got = exponential_history(values, dt, tau)
    # int_0^t e^{-(t-u)/tau} (2 + u/2) du in closed form
    decay = np.exp(-t / tau)
    exact = (2.0 - 0.5 * tau) * tau * (1 - decay) + 0.5 * tau * t
    assert np.allclose(got, exact, rtol=1e-10, atol=1e-13)


def test_tail_steps():
    assert tail_steps(1.0, 0.1, 1e-8) == math.ceil(10 * math.log(1e8))
    assert tail_steps(1.0, 0.1, 1e-8) * 0.1 >= math.log(1e8)


# ------------------------------------------------------------ absorbing radius

def test_zero_field_radius():
    r = absorbing_radius(zero_field(n=401, dt=0.05), 1.0, 0.1, 400)
    assert r.r == 0.0 and r.tail_error == 0.0


def test_constant_c1_limit(small_field):
    frozen = frozen_copy(small_field, 0.1, 400)
    c = c1_norm(frozen, 0)
    r = absorbing_radius(frozen, 1.0, 0.1, 399)
    assert r.r ** 2 == pytest.approx(1.1 * c * c, rel=1e-12)


def test_radius_needs_history(small_field):
    with pytest.raises(InsufficientHistoryError):
        absorbing_radius(small_field, 1.0, 0.1, 100)


def test_doubling_tail_changes_radius_by_less_than_tail_error(long_field):
    eps = 1e-8
    a = absorbing_radius(long_field, 1.0, 0.1, 800, eps=eps)
    b = absorbing_radius(long_field, 1.0, 0.1, 800, eps=eps * eps)
    assert tail_steps(1.0, 0.1, eps * eps) >= 2 * tail_steps(1.0, 0.1, eps) - 1
    assert abs(a.r ** 2 - b.r ** 2) <= a.tail_error
    assert abs(a.r - b.r) <= a.tail_error
    assert a.tail_error <= eps * 1.1 * np.max(c1_norm_series(long_field, 64, 600, 801) ** 2)


def test_radius_monotone_in_delta(long_field):
    small = absorbing_radius(long_field, 1.0, 0.1, 500).r
    large = absorbing_radius(long_field, 1.0, 0.5, 500).r
    assert large > small > 0


def test_radii_are_tempered(long_field):
    c1_sq = c1_norm_series(long_field) ** 2
    start = tail_steps(1.0, 0.1)
    idx = np.arange(start, long_field.grid.n, 10)
    radii = np.array([absorbing_radius(long_field, 1.0, 0.1, int(i), c1_sq=c1_sq).r for i in idx])
    t = (idx - idx[0]) * 0.1
    for c in (0.1, 1.0):
        damped = radii * np.exp(-c * t)
        assert damped[-1] <= 1e-2 * damped[0]
    # stationary forcing keeps the radius within a bounded band
    assert radii.max() / radii.min() < 10


# ------------------------------------------------------------ invariance

def test_forward_invariance_zero_field():
    report = forward_invariance_check(zero_field(n=401, dt=0.05), 1.0, 0.1, 380, 10, 20, seed=1)
    assert report.passed and report.worst_ratio == 0.0


def test_forward_invariance_small(long_field):
    report = forward_invariance_check(long_field, 1.0, 0.1, 300, 25, 100, seed=2)
    assert report.passed, report.offenders
    assert report.worst_ratio <= 1 + 1e-6


# ------------------------------------------------------------ pullback

def test_pullback_on_zero_field():
    f = zero_field(n=401, dt=0.05)
    cloud = pullback_snapshot(f, 1.0, 0.1, 400, 10, 30, seed=3)
    assert not cloud.y.any()
    assert ((cloud.x >= 0) & (cloud.x < 1)).all()
    assert cloud.pullback_time == pytest.approx(1.0)


def test_pullback_is_deterministic(long_field):
    a = pullback_snapshot(long_field, 1.0, 0.1, 800, 10, 50, seed=4)
    b = pullback_snapshot(long_field, 1.0, 0.1, 800, 10, 50, seed=4)
    assert np.array_equal(a.points, b.points)
    assert a.field_sha256 == long_field.digest()
    c = pullback_snapshot(long_field, 1.0, 0.1, 800, 10, 50, seed=5)
    assert not np.array_equal(a.points, c.points)


def test_pullback_velocities_inside_radius(long_field):
    cloud = pullback_snapshot(long_field, 1.0, 0.1, 800, 50, 200, seed=6)
    r = absorbing_radius(long_field, 1.0, 0.1, 800).r
    assert np.linalg.norm(cloud.y, axis=1).max() <= r * (1 + 1e-6)


def test_pullback_history_guard(long_field):
    with pytest.raises(InsufficientHistoryError):
        pullback_snapshot(long_field, 1.0, 0.1, 300, 200, 10, seed=1)


# ------------------------------------------------------------ semidistance

def test_semidistance_examples():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0]])
    assert semidistance(a, b) == 1.0
    assert semidistance(b, a) == 0.0
    assert semidistance(np.zeros((0, 2)), a) == 0.0
    assert semidistance(a, np.zeros((0, 2))) == math.inf


points = arrays(np.float64, st.tuples(st.integers(1, 40), st.just(2)), elements=st.floats(-10, 10))


@given(points, points)
@settings(max_examples=50, deadline=None)
def test_semidistance_properties(a, b):
    assert semidistance(a, a) == 0.0
    assert semidistance(a, np.concatenate([a, b])) == 0.0
    assert semidistance(a, b) >= 0.0
    # block size only changes the work split
    assert semidistance(a, b, block=3) == semidistance(a, b)


def test_nesting_distances_shape(long_field):
    clouds = [pullback_snapshot(long_field, 1.0, 0.1, 800, d, 40, seed=7) for d in (5, 10, 20)]
    dists = nesting_distances(clouds)
    assert len(dists) == 2
    assert all(d >= 0 for d in dists)
