import time

import numpy as np
import pytest

from multisym.bundle import BundleShape
from multisym.calculus import ChartedDomain
from multisym.catalog import catalog, get_example, laplace_action_growth
from multisym.equations import FIVE_WAY, evaluate_suites
from multisym.solvers import LaplaceConvergenceError, discrete_laplacian, solve_laplace, solve_ode
from multisym.symbolic import volterra_from_text

S1 = BundleShape(1, 1)
UNIT = ChartedDomain(((0.0, 1.0), (0.0, 1.0)))
OSC = "0.5*(p1_1^2 + q1^2)"


def ode_error(step):
    sec = solve_ode(volterra_from_text(S1, OSC), 1.0, 0.0, (0.0, 2 * np.pi), step)
    xs = sec.axes[0]
    return max(np.max(np.abs(sec.q[0] - np.cos(xs))), np.max(np.abs(sec.pmom[0, 0] + np.sin(xs)))), sec


def test_oscillator_accuracy_and_energy():
    err, sec = ode_error(1e-3)
    assert err < 1e-6
    HV = volterra_from_text(S1, OSC)
    energy = [HV([x, q, p]) for x, q, p in zip(sec.axes[0], sec.q[0], sec.pmom[0, 0])]
    assert abs(energy[-1] - energy[0]) < 1e-9
    assert sec.axes[0][-1] == 2 * np.pi


def test_rk4_order():
    errs = [ode_error(h)[0] for h in (2e-3, 1e-3, 5e-4)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) <= 0.3), orders


def test_free_drift_is_exact():
    sec = solve_ode(volterra_from_text(S1, "p1_1"), 1.0, 0.5, (0.0, 3.0), 0.01)
    assert np.max(np.abs(sec.q[0] - (1.0 + sec.axes[0]))) < 1e-12
    assert np.all(sec.pmom[0, 0] == 0.5)


def test_ode_input_checks():
    HV = volterra_from_text(S1, OSC)
    with pytest.raises(ValueError):
        solve_ode(HV, 1.0, 0.0, (0.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        solve_ode(HV, 1.0, 0.0, (0.0, 1.0), -1e-3)
    with pytest.raises(ValueError):
        solve_ode(volterra_from_text(BundleShape(2, 1), "p1_1"), 1.0, 0.0, (0.0, 1.0), 1e-2)


def test_ode_multicomponent():
    shape = BundleShape(1, 2)
    HV = volterra_from_text(shape, "0.5*(p1_1^2 + p2_1^2 + q1^2 + 4*q2^2)")
    sec = solve_ode(HV, [1.0, 0.0], [0.0, 2.0], (0.0, 1.0), 1e-3)
    xs = sec.axes[0]
    assert np.max(np.abs(sec.q[0] - np.cos(xs))) < 1e-10
    assert np.max(np.abs(sec.q[1] - np.sin(2 * xs))) < 1e-10


def test_laplace_bilinear_exact_and_fast():
    t0 = time.perf_counter()
    sec = solve_laplace(lambda x: x[0] * x[1], UNIT, grid=65)
    assert time.perf_counter() - t0 < 5
    X, Y = np.meshgrid(*sec.axes, indexing="ij")
    assert np.max(np.abs(sec.q[0] - X * Y)) < 1e-10
    assert np.max(np.abs(discrete_laplacian(sec.q[0], *sec.spacing))) < 1e-10


def test_laplace_zero_data():
    sec = solve_laplace(lambda x: 0.0, UNIT, grid=17)
    assert not np.any(sec.q)


def test_laplace_hv_convergence_order():
    HV = get_example("laplace-example").volterra()
    errs = []
    for grid in (33, 65, 129):
        sec = solve_laplace(lambda x: np.exp(x[0]) * np.sin(x[1]), UNIT, grid=grid, omega=None,
                            dtype=np.longdouble)
        errs.append(evaluate_suites(HV, sec, sec.interior_nodes(2), ("hv",)).l_inf("hv"))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) <= 0.2), orders


def test_laplace_harmonic_quadratic_is_reproduced():
    HV = get_example("laplace-example").volterra()
    sec = solve_laplace(lambda x: x[0] ** 2 - x[1] ** 2, UNIT, grid=33)
    rep = evaluate_suites(HV, sec, sec.interior_nodes(1), FIVE_WAY)
    assert rep.passed(1e-8)


def test_laplace_errors():
    with pytest.raises(LaplaceConvergenceError) as info:
        solve_laplace(lambda x: x[0] * x[1], UNIT, grid=33, max_iter=20)
    assert info.value.history and all(np.isfinite(info.value.history))
    with pytest.raises(ValueError):
        solve_laplace(lambda x: 0.0, UNIT, omega=2.0)
    with pytest.raises(ValueError):
        solve_laplace(lambda x: 0.0, ChartedDomain(((0.0, 1.0),)))
    stats = []
    solve_laplace(lambda x: x[0], UNIT, grid=9, stats=stats)
    assert stats[0].residual < 1e-10 and stats[0].iterations > 0


def test_catalog_contents():
    names = [s.name for s in catalog()]
    assert len(names) >= 4
    assert {"oscillator", "free-particle", "laplace-example", "wave"} <= set(names)
    lap = get_example("laplace")
    assert lap.name == "laplace-example" and lap.hamiltonian == "0.5*(p1_1^2 + p1_2^2)"
    assert get_example("oscillator").exact["cos"] == (["cos(x1)"], [["-sin(x1)"]])
    assert not get_example("wave").from_source
    with pytest.raises(KeyError):
        get_example("nope")
    with pytest.raises(ValueError):
        get_example("wave").solve()


def test_catalog_solvers_feed_the_suites():
    for name in ("oscillator", "free-particle", "laplace-example"):
        spec = get_example(name)
        sec = spec.solve()
        h = float(np.max(sec.spacing))
        rep = evaluate_suites(spec.volterra(), sec, sec.interior_nodes(2), FIVE_WAY)
        assert rep.passed(5 * h * h), (name, rep.summary())


def test_global_action_is_unbounded():
    values = laplace_action_growth([1.0, 2.0, 4.0])
    assert np.allclose(values, [L ** 4 / 3 for L in (1.0, 2.0, 4.0)], rtol=1e-3)
    assert values[0] < values[1] < values[2]
