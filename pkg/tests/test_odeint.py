import math

import numpy as np
import pytest

from avgkit.errors import ArgumentError, BlowUpError, MaxStepsExceeded
from avgkit.odeint import IntegratorConfig, integrate, integrate_dense, rk4_step, rk4_triangular
from avgkit.studies import loglog_slope


def harmonic(t, y):
    return np.array([y[1], -y[0]])


def test_harmonic_oscillator_period():
    y = integrate(harmonic, 0.0, 2 * math.pi, [1.0, 0.0], period=2 * math.pi)
    # RK4 phase error with 2048 steps is about 5e-12
    assert np.allclose(y, [1.0, 0.0], atol=1e-10)


def test_fourth_order_convergence():
    errs, hs = [], []
    for steps in (16, 32, 64, 128):
        cfg = IntegratorConfig(steps_per_period=steps)
        y = integrate(lambda t, y: -y + np.sin(t), 0.0, 1.0, [1.0], cfg)
        exact = 1.5 * math.exp(-1.0) + 0.5 * (math.sin(1.0) - math.cos(1.0))
        errs.append(abs(y[0] - exact))
        hs.append(1.0 / steps)
    assert 3.8 < loglog_slope(hs, errs) < 4.2


def test_doubling_meets_tolerance():
    cfg = IntegratorConfig(method="rk4_doubling", abs_tol=1e-10, rel_tol=1e-10)
    y = integrate(lambda t, y: np.array([y[0] ** 2]), 0.0, 0.9, [1.0], cfg)
    assert y[0] == pytest.approx(10.0, rel=1e-8)


def test_blow_up_reported():
    with pytest.raises(BlowUpError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda t, y: y**2, 0.0, 2.0, [1.0], IntegratorConfig(steps_per_period=4096))
    assert 0.9 < info.value.time <= 2.0


def test_max_steps():
    with pytest.raises(MaxStepsExceeded):
        integrate(harmonic, 0.0, 100.0, [1.0, 0.0], IntegratorConfig(steps_per_period=1000, max_steps=10), period=1.0)


def test_zero_span_and_bad_interval():
    assert np.array_equal(integrate(harmonic, 1.0, 1.0, [2.0, 3.0]), [2.0, 3.0])
    with pytest.raises(ArgumentError):
        integrate(harmonic, 1.0, 0.0, [1.0, 0.0])


@pytest.mark.parametrize("kw", [dict(steps_per_period=8), dict(abs_tol=0.0), dict(rel_tol=0.5), dict(method="euler")])
def test_config_validation(kw):
    with pytest.raises(ArgumentError):
        IntegratorConfig(**kw)


def test_dense_lands_on_samples():
    times = [0.5, 1.0, 1.0, 2.5]
    out = integrate_dense(harmonic, 0.0, [1.0, 0.0], times, period=2 * math.pi)
    for t, y in zip(times, out):
        assert np.allclose(y, [math.cos(t), -math.sin(t)], atol=1e-11)
    with pytest.raises(ArgumentError):
        integrate_dense(harmonic, 0.0, [1.0, 0.0], [1.0, 0.5])


def test_batched_state():
    y0 = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    y = integrate(harmonic, 0.0, 1.0, y0)
    for b in range(3):
        assert np.array_equal(y[:, b], integrate(harmonic, 0.0, 1.0, y0[:, b]))


def test_triangular_matches_stepwise():
    # y0' = cos t, y1' = y0 * sin t, y2' = y1 + y0**2
    def block(i, stage, times, lower):
        if i == 0:
            return np.cos(times)
        if i == 1:
            return lower[0] * np.sin(times)
        return lower[1] + lower[0] ** 2

    def stacked(t, y):
        return np.array([math.cos(t), y[0] * math.sin(t), y[1] + y[0] ** 2])

    n = 50
    nodes = rk4_triangular(block, [0.0, 0.5, -1.0], 0.0, 2.0, n)
    y = np.array([0.0, 0.5, -1.0])
    h = 2.0 / n
    for i in range(n):
        y = rk4_step(stacked, i * h, y, h)
    assert np.allclose([b[-1] for b in nodes], y, rtol=1e-14, atol=1e-15)
