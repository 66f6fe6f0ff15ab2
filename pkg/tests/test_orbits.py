import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from avgkit import corpus
from avgkit.errors import ConvergenceError
from avgkit.melnikov import averaged_f
from avgkit.orbits import find_zero, orbit_tol, validate_orbit
from avgkit.timemap import displacement, displacement_batch


def test_linear_root():
    r = find_zero(lambda z: z - 2, [1.0])
    assert r.converged and r.simple
    assert r.z_star[0] == pytest.approx(2.0, abs=1e-14)


def test_double_root_is_flagged():
    r = find_zero(lambda z: z**2, [0.1])
    assert r.converged
    assert abs(r.z_star[0]) < 1e-5
    assert not r.simple


def test_planar_root_with_damping():
    f = lambda z: np.array([z[0] ** 2 + z[1] ** 2 - 4, z[0] - z[1]])  # noqa: E731
    r = find_zero(f, [5.0, 0.1])
    assert r.simple
    assert np.allclose(r.z_star, [math.sqrt(2), math.sqrt(2)], atol=1e-12)


def test_bisection_fallback_in_one_dimension():
    # Newton overshoots a cube-root zero by a factor of two; with damping it
    # only halves the error per step, far too slowly for five iterations
    g = lambda z: np.sign(z - 0.7) * np.abs(z - 0.7) ** (1 / 3)  # noqa: E731
    r = find_zero(g, [0.0], tol=1e-4, max_iter=5)
    assert r.converged
    assert r.method == "bisection"
    assert r.z_star[0] == pytest.approx(0.7, abs=1e-12)
    assert r.residual_norm < 1e-4


def test_failure_in_two_dimensions():
    f = lambda z: np.array([z[0] ** 2 + 1.0, z[1]])  # noqa: E731
    with pytest.raises(ConvergenceError) as info:
        find_zero(f, [0.5, 0.5], max_iter=20)
    assert info.value.result is not None and not info.value.result.converged
    r = find_zero(f, [0.5, 0.5], max_iter=20, raise_on_failure=False)
    assert not r.converged


def test_polar_van_der_pol_amplitude():
    s = corpus.load("van_der_pol_polar")
    r = find_zero(lambda z: averaged_f(s, z, order=1)[0], [1.5])
    assert r.simple
    assert abs(r.z_star[0] - 2.0) < 1e-8
    # f_1(r) = pi r (1 - r^2/4) has slope -2 pi at r = 2
    assert r.jacobian[0, 0] == pytest.approx(-2 * math.pi, rel=1e-6)


def test_displacement_basics():
    s = corpus.load("duffing_forced")
    assert np.array_equal(displacement(s, [0.3, 0.1], 0.0), [0.0, 0.0])
    Z = np.array([[0.3, 0.1], [-0.2, 0.4]])
    batch = displacement_batch(s, Z, 0.05)
    for i in range(2):
        assert np.allclose(batch[i], displacement(s, Z[i], 0.05), rtol=1e-14, atol=1e-17)


def test_linear_forced_closed_form():
    # x' = eps (-x + sin t) has the periodic solution starting at -eps / (1 + eps^2)
    s = corpus.load("linear_forced")
    v = validate_orbit(s, [0.0], [0.1, 0.05, 0.01])
    assert v.all_converged
    for e in v.entries:
        assert e.z_eps[0] == pytest.approx(-e.eps / (1 + e.eps**2), abs=1e-8)
        assert e.isolated
    assert v.slope_estimate == pytest.approx(1.0, abs=0.05)


def test_empty_eps_list():
    v = validate_orbit(corpus.load("linear_forced"), [0.0], [])
    assert v.entries == [] and v.slope_estimate is None


def test_eps_list_sorted_decreasing():
    v = validate_orbit(corpus.load("linear_forced"), [0.0], [0.01, 0.1])
    assert v.eps_list == [0.1, 0.01]


def long_run_amplitude(eps):
    """Amplitude of the Cartesian van der Pol limit cycle after a long transient."""
    rhs = lambda t, u: [u[1], -u[0] + eps * (1 - u[0] ** 2) * u[1]]  # noqa: E731
    settle = solve_ivp(rhs, (0, 30 / eps), [0.5, 0.0], rtol=1e-11, atol=1e-12)
    crossing = lambda t, u: u[1]  # noqa: E731
    crossing.direction = -1  # maxima of x
    tail = solve_ivp(rhs, (0, 4 * math.pi), settle.y[:, -1], rtol=1e-11, atol=1e-12, events=crossing)
    return float(np.max(tail.y_events[0][:, 0]))


def test_polar_orbit_matches_cartesian_limit_cycle():
    eps = 0.05
    s = corpus.load("van_der_pol_polar")
    v = validate_orbit(s, [2.0], [eps])
    entry = v.entries[0]
    assert entry.converged and entry.isolated
    assert abs(displacement(s, entry.z_eps, eps)[0]) < orbit_tol(entry.z_eps)
    # the polar orbit starts on the angle where x is maximal, so r equals the amplitude
    assert entry.z_eps[0] == pytest.approx(long_run_amplitude(eps), abs=2e-4)
