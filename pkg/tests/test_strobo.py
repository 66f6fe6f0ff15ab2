import math
import warnings

import numpy as np
import pytest

from avgkit import corpus
from avgkit.errors import AllOrdersVanish, ArgumentError
from avgkit.melnikov import FCache, averaged_f
from avgkit.strobo import (
    FDConfig,
    averaged_rhs,
    fd_tensor,
    first_nonvanishing,
    g2_closed_form,
    strobo_g,
    tilde_y_step,
)
from avgkit.system import System
from avgkit.tpoly import TPoly

from conftest import autonomous

AUTONOMOUS = [
    ([["x2", "x1 - x1^3"], ["x1*x2", "sin(x1)"], ["x2^2", "exp(x1)"], ["x1", "x2"]], [0.3, -0.4]),
    ([["x1*x2 + 0.5", "x1 - x2"], ["x1^2", "cos(x2)"], ["x2*x1^2", "exp(-x1)"], ["x1*x2", "x2 + x1"]], [0.2, 0.5]),
    ([["1 - x1^2"], ["x1^3"], ["sin(x1)"], ["x1"]], [0.4]),
]


@pytest.mark.parametrize("F,z", AUTONOMOUS)
def test_autonomous_fields_are_their_own_average(F, z):
    # with no t dependence the averaged equation is the equation itself
    s = autonomous(F)
    exact = s.fields_at(0.0, np.array(z))
    default = strobo_g(s, z, order=3)
    assert np.allclose(default.g[0], exact[0], rtol=0, atol=1e-13)
    assert np.allclose(default.g[1], exact[1], rtol=0, atol=1e-7)
    assert np.allclose(default.g[2], exact[2], rtol=0, atol=1e-2)
    high = strobo_g(s, z, order=4, fd=FDConfig.high_accuracy())
    assert np.allclose(high.g[1], exact[1], rtol=0, atol=1e-9)
    assert np.allclose(high.g[2], exact[2], rtol=0, atol=1e-6)
    assert np.allclose(high.g[3], exact[3], rtol=0, atol=1e-4)


def test_linear_noncommuting_second_order():
    # x' = eps A(t) x with A = [[1, cos t], [sin t, -1]]; the second Magnus term
    # (1/2) int_0^T int_0^t [A(t), A(s)] ds dt equals T * [[-1/2, 0], [-2, 1/2]]
    s = System.from_strings([["x1 + cos(t)*x2", "sin(t)*x1 - x2"], ["0", "0"]])
    G2 = np.array([[-0.5, 0.0], [-2.0, 0.5]])
    for xi in ([1.0, 0.0], [0.3, -0.7]):
        series = strobo_g(s, xi)
        assert np.allclose(series.g[0], [xi[0], -xi[1]], atol=1e-13)
        assert np.allclose(series.g[1], G2 @ xi, atol=1e-8)
        assert np.allclose(g2_closed_form(s, xi), G2 @ xi, atol=1e-10)


def test_first_order_identity(systems):
    for name, s in systems.items():
        z = s.sample_box()[0] * 0.4 + s.sample_box()[1] * 0.6
        series = strobo_g(s, z, order=1)
        f1 = averaged_f(s, z, order=1)[0]
        assert np.array_equal(series.g[0], f1 / s.T), name


@pytest.mark.parametrize("name", ["zero_mean_cubic", "zero_mean_riccati", "zero_mean_planar"])
def test_second_order_identity_when_first_vanishes(name, rng):
    s = corpus.load(name)
    lo, hi = s.sample_box()
    for z in rng.uniform(lo, hi, size=(4, s.n)):
        f = averaged_f(s, z)
        g = strobo_g(s, z).g
        assert np.linalg.norm(f[1] - s.T * g[1]) < 1e-6


def test_third_order_identity_when_two_vanish(rng):
    s = corpus.load("double_zero")
    for z in rng.uniform(-1.5, 1.5, size=(4, 1)):
        f = averaged_f(s, z)
        g = strobo_g(s, z).g
        assert abs(f[2][0] - s.T * g[2][0]) < 1e-4


def test_generic_second_order_differs():
    s = corpus.load("quadratic_forced")
    f = averaged_f(s, [0.5])
    g = strobo_g(s, [0.5]).g
    assert np.linalg.norm(f[1] - s.T * g[1]) > 1e-2


def test_two_paths_for_g2(systems):
    for name, s in systems.items():
        if s.k < 2:
            continue
        z = s.sample_box()[0] * 0.25 + s.sample_box()[1] * 0.75
        assert np.allclose(strobo_g(s, z, order=2).g[1], g2_closed_form(s, z), rtol=0, atol=1e-6), name


def test_tilde_y_polynomial_degrees():
    n = 2
    g = {(1, 0): np.array([1.0, 2.0]), (2, 0): np.array([0.5, -1.0]), (3, 0): np.array([0.1, 0.2])}
    g[(1, 1)] = np.array([[0.0, 1.0], [2.0, 0.0]])
    g[(1, 2)] = np.zeros((2, 2, 2))
    g[(2, 1)] = np.eye(2)
    ty1 = tilde_y_step(1, g, [])
    ty2 = tilde_y_step(2, g, [ty1])
    ty3 = tilde_y_step(3, g, [ty1, ty2])
    assert ty1.effective_degree() == 1 and ty2.effective_degree() == 2 and ty3.effective_degree() == 3
    # ytilde_2 = 2 t g_2 + 2 D g_1 int_0^t s g_1 ds = 2 t g_2 + t^2 D g_1 g_1
    assert np.allclose(ty2.coeffs, [[0, 0], [1.0, -2.0], g[(1, 1)] @ g[(1, 0)]])
    with pytest.raises(ArgumentError):
        tilde_y_step(2, g, [])
    assert isinstance(ty3, TPoly) and ty3.n == n


def test_fd_tensor_against_known_derivatives():
    G = lambda w: np.array([w[0] ** 2 * w[1], math.sin(w[0]) + w[1] ** 3])  # noqa: E731
    z = np.array([0.4, -0.3])
    J = fd_tensor(G, z, 1, 1e-5)
    assert np.allclose(J, [[2 * 0.4 * -0.3, 0.16], [math.cos(0.4), 3 * 0.09]], atol=1e-9)
    H = fd_tensor(G, z, 2, 1e-4)
    assert np.allclose(H[0], [[2 * -0.3, 0.8], [0.8, 0.0]], atol=1e-6)
    assert np.allclose(H[1], [[-math.sin(0.4), 0.0], [0.0, 6 * -0.3]], atol=1e-6)
    H4 = fd_tensor(G, z, 2, 1e-3, accuracy=4)
    assert np.allclose(H4, H, atol=1e-6)
    T3 = fd_tensor(G, z, 3, 1e-2, accuracy=4)
    assert T3[0, 0, 0, 1] == pytest.approx(2.0, abs=1e-6)
    assert T3[1, 1, 1, 1] == pytest.approx(6.0, abs=1e-6)


def test_fd_config():
    fd = FDConfig()
    assert fd.step(2, [0.0]) == pytest.approx(1e-4)
    assert fd.step(1, [3.0, 4.0]) == pytest.approx(6 * 1e-16 ** (1 / 3))
    with pytest.raises(ArgumentError):
        FDConfig(accuracy=3)
    with pytest.raises(ArgumentError):
        FDConfig(level_growth=0.5)


def test_diagnostics_and_cache():
    s = corpus.load("planar_cubic")
    cache = FCache(s)
    a = strobo_g(s, [0.1, 0.2], cache=cache)
    used = cache.evaluations
    b = strobo_g(s, [0.1, 0.2], cache=cache)
    assert cache.evaluations == used
    assert all(np.array_equal(u, v) for u, v in zip(a.g, b.g))
    assert set(a.diagnostics) == {"fd_steps", "f_points", "roundoff_estimate"}
    assert a.diagnostics["f_points"] == used


def test_order_arguments():
    s = corpus.load("planar_cubic")
    with pytest.raises(ArgumentError):
        strobo_g(s, [0.1, 0.2], order=4)
    with pytest.raises(ArgumentError):
        strobo_g(s, [0.1])
    five = System.from_strings([["x1"], ["x1^2"], ["x1^3"], ["1"], ["x1"]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        strobo_g(five, [0.2], order=5)
    assert any("order 5" in str(w.message) for w in caught)


def test_first_nonvanishing(systems, rng):
    probes = rng.uniform(-1, 1, size=(6, 1))
    assert first_nonvanishing(systems["linear_forced"], probes).order == 1
    assert first_nonvanishing(systems["zero_mean_cubic"], probes).order == 2
    v = first_nonvanishing(systems["double_zero"], probes)
    assert v.order == 3
    assert max(v.max_scaled[:2]) < 1e-12
    s = System.from_strings([["x1*cos(t)"], ["sin(t)"]])
    with pytest.raises(AllOrdersVanish) as info:
        first_nonvanishing(s, probes)
    assert info.value.order == 2
    with pytest.raises(ArgumentError):
        first_nonvanishing(s, np.zeros((0, 1)))


def test_averaged_rhs_weights():
    s = corpus.load("quadratic_forced")
    rhs = averaged_rhs(s, 0.1)
    g = strobo_g(s, [0.5]).g
    assert np.allclose(rhs(0.0, np.array([0.5])), 0.1 * g[0] + 0.01 * g[1])
