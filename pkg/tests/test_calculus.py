from math import comb

import numpy as np
import pytest

from multisym.algebra import AlternatingForm, MultiVector, interior, multi_indices, wedge
from multisym.bundle import BundleShape, liouville_form, omega_h, theta_h
from multisym.calculus import (
    BoundaryStencilError,
    ChartedDomain,
    DifferentiationConfig,
    FormField,
    SmoothMap,
    check_jacobian,
    differential,
    exterior_derivative,
    partials,
    pullback,
    pullback_along,
    pullback_field,
    pushforward_multivector,
    top_pairing,
)
from multisym.equations import AnalyticSection, Variation, action_density
from multisym.symbolic import section_from_text, volterra_from_text


class TrigOneForm:
    """A random 1-form ``a_j = sum_m C[m, j] sin(K[m] . x + phi[m])`` with exact ``da``."""

    def __init__(self, rng, dim, modes=3):
        self.dim = dim
        self.C = rng.normal(size=(modes, dim))
        self.K = rng.normal(size=(modes, dim))
        self.phi = rng.uniform(0, 2 * np.pi, size=modes)

    def coeffs(self, x):
        return np.sin(self.K @ x + self.phi) @ self.C

    def grad(self, x):
        # G[i, j] = d a_j / d x^i
        return np.einsum("m,mi,mj->ij", np.cos(self.K @ x + self.phi), self.K, self.C)

    def field(self):
        return FormField(self.dim, 1, lambda x: AlternatingForm.covector(self.coeffs(x)))

    def exact_d(self, x):
        G = self.grad(x)
        return AlternatingForm(self.dim, 2, [G[i, j] - G[j, i] for i, j in multi_indices(self.dim, 2)])


def random_map(rng, m, n):
    A = rng.normal(size=(n, m)) * 0.7
    B = rng.normal(size=n)
    return SmoothMap(m, n, lambda x: np.sin(A @ x) + B * (x @ x),
                     lambda x: np.cos(A @ x)[:, None] * A + 2 * np.outer(B, x))


def test_differential_examples():
    x = np.array([0.3, -1.2, 2.0])
    assert differential(lambda y: y[0], x).allclose(AlternatingForm.covector([1, 0, 0]), atol=1e-10)
    assert differential(lambda y: 4.0, x).norm_inf() == 0.0
    shape = BundleShape(2, 1)
    HV = volterra_from_text(shape, "0.5*(p1_1^2 + p1_2^2)")
    eta = np.array([0.1, 0.2, 0.7, -1.3, 0.4, 2.5])
    dH = differential(lambda e: HV(e[:5]) + e[5], eta)
    assert dH.coeffs == pytest.approx([0, 0, 0, -1.3, 0.4, 1.0], abs=1e-9)


def test_central_and_richardson_orders(rng):
    f = TrigOneForm(rng, 3)
    x = rng.normal(size=3)
    exact = f.grad(x)
    g = lambda y: f.coeffs(y)
    errs = {}
    for scheme in ("central", "richardson"):
        e = []
        for h in (1e-2, 5e-3):
            e.append(np.max(np.abs(partials(g, x, DifferentiationConfig(h, scheme)) - exact)))
        errs[scheme] = e
    assert np.log2(errs["central"][0] / errs["central"][1]) == pytest.approx(2, abs=0.2)
    assert np.log2(errs["richardson"][0] / errs["richardson"][1]) == pytest.approx(4, abs=0.4)
    assert errs["central"][0] >= 10 * errs["richardson"][0]


def test_default_step_is_cbrt_eps():
    assert DifferentiationConfig().relative_step == pytest.approx(np.finfo(float).eps ** (1 / 3))
    with pytest.raises(ValueError):
        DifferentiationConfig(0.0)
    with pytest.raises(ValueError):
        DifferentiationConfig(1e-3, "upwind")


def test_boundary_policy():
    dom = ChartedDomain(((0.0, 1.0), (0.0, 1.0)))
    cfg = DifferentiationConfig(1e-3)
    with pytest.raises(BoundaryStencilError):
        partials(lambda y: y[0], [0.0005, 0.5], cfg, dom)
    partials(lambda y: y[0], [0.01, 0.5], cfg, dom)


def test_exterior_derivative_of_liouville_one_form():
    a = FormField(2, 1, lambda z: AlternatingForm.covector([z[1], 0.0]))  # p dx on (x, p)
    out = exterior_derivative(a, [0.3, 0.8])
    assert out[(0, 1)] == pytest.approx(-1.0, abs=1e-9)


def test_exterior_derivative_matches_exact(rng):
    for dim in (2, 3, 5):
        f = TrigOneForm(rng, dim)
        x = rng.normal(size=dim)
        assert exterior_derivative(f.field(), x).allclose(f.exact_d(x), atol=1e-8)


def test_d_squared_vanishes(rng):
    cfg = DifferentiationConfig(1e-4)
    worst = 0.0
    for dim in (3, 4):
        for _ in range(3):
            f = TrigOneForm(rng, dim)
            poly = rng.normal(size=(dim, dim))
            a = FormField(dim, 1, lambda x, f=f, poly=poly: AlternatingForm.covector(f.coeffs(x) + poly @ (x * x)))
            da = FormField(dim, 2, lambda y, a=a: exterior_derivative(a, y, cfg))
            x = rng.uniform(-1, 1, size=dim)
            worst = max(worst, exterior_derivative(da, x, cfg).norm_inf())
    assert worst < 1e-6


def test_richardson_reduces_closedness_residual(rng):
    # d applied numerically to an exactly closed 2-form (d of the exact da)
    ratios = []
    for dim in (3, 4):
        f = TrigOneForm(rng, dim)
        da = FormField(dim, 2, f.exact_d)
        x = rng.uniform(-1, 1, size=dim)
        central = exterior_derivative(da, x, DifferentiationConfig(1e-3, "central")).norm_inf()
        rich = exterior_derivative(da, x, DifferentiationConfig(1e-3, "richardson")).norm_inf()
        ratios.append(central / max(rich, 1e-300))
    assert min(ratios) >= 10


def test_pullback_identity_and_functoriality(rng):
    a = AlternatingForm(4, 2, rng.normal(size=comb(4, 2)))
    x = rng.normal(size=4)
    assert pullback(SmoothMap.identity(4), a, x).allclose(a, atol=0)
    F, G = random_map(rng, 3, 4), random_map(rng, 4, 5)
    GF = SmoothMap(3, 5, lambda y: G(F(y)), lambda y: G.jac(F(y)) @ F.jac(y))
    b = AlternatingForm(5, 2, rng.normal(size=comb(5, 2)))
    y = rng.normal(size=3)
    assert pullback(GF, b, y).allclose(pullback(F, pullback(G, b, F(y)), y), atol=1e-12)


def test_pullback_of_overfull_degree_is_zero(rng):
    F = random_map(rng, 2, 4)
    out = pullback(F, AlternatingForm(4, 3, rng.normal(size=4)), np.zeros(2))
    assert out.degree == 3 and out.norm_inf() == 0.0


def test_pushforward_examples(rng):
    G = MultiVector(3, 2, rng.normal(size=3))
    assert pushforward_multivector(SmoothMap.identity(3), G, np.zeros(3)).allclose(G, atol=0)
    const = SmoothMap.constant(3, [1.0, 2.0, 3.0, 4.0])
    assert pushforward_multivector(const, G, np.zeros(3)).norm_inf() == 0.0
    shape = BundleShape(2, 1)
    psi = section_from_text(shape, ["sin(x1)*x2"], [["x2^2", "exp(x1)"]])
    push = pushforward_multivector(psi.as_map(), MultiVector(2, 2, [1.0]), np.array([0.3, 0.4]))
    assert push[(0, 1)] == 1.0


def test_adjunction_is_exact(rng):
    F = random_map(rng, 3, 5)
    x = rng.normal(size=3)
    a = AlternatingForm(5, 2, rng.normal(size=comb(5, 2)))
    G = MultiVector(3, 2, rng.normal(size=3))
    lhs = pullback(F, a, x).pair(G)
    rhs = a.pair(pushforward_multivector(F, G, x))
    assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


def test_naturality(rng):
    F = random_map(rng, 3, 4)
    f = TrigOneForm(rng, 4)
    a = f.field()
    cfg = DifferentiationConfig(1e-4)
    x = rng.normal(size=3) * 0.5
    lhs = pullback(F, f.exact_d(F(x)), x)
    rhs = exterior_derivative(pullback_field(F, a), x, cfg)
    assert lhs.allclose(rhs, atol=1e-6)


def test_analytic_jacobian_matches_differences(rng):
    F = random_map(rng, 3, 4)
    assert check_jacobian(F, rng.normal(size=3)) < 1e-8


def test_pullback_along_reductions(rng):
    a = AlternatingForm(4, 3, rng.normal(size=comb(4, 3)))
    x = rng.normal(size=4)
    idF = SmoothMap.identity(4)
    assert pullback_along(idF, np.zeros(4), a, x).norm_inf() == 0.0
    xi = rng.normal(size=4)
    assert pullback_along(idF, xi, a, x).allclose(interior(xi, a), atol=1e-14)


def test_liouville_tautology(rng):
    """``alpha^* Theta = alpha`` for a section ``alpha`` of M(pi) -> E."""
    for n, N in [(1, 1), (2, 1), (2, 2)]:
        shape = BundleShape(n, N)
        dE, extra = shape.dim_E, shape.dim_M - shape.dim_E
        C = rng.normal(size=(extra, dE))

        def alpha(y, C=C):
            return np.concatenate([y, np.sin(C @ y)])

        def jac(y, C=C, dE=dE):
            return np.vstack([np.eye(dE), np.cos(C @ y)[:, None] * C])

        A = SmoothMap(dE, shape.dim_M, alpha, jac)
        incl = SmoothMap(dE, shape.dim_M, lambda y, dE=dE, extra=extra: np.concatenate([y, np.zeros(extra)]),
                         lambda y, dE=dE, extra=extra: np.vstack([np.eye(dE), np.zeros((extra, dE))]))
        for _ in range(5):
            y = rng.normal(size=dE)
            own = pullback(incl, liouville_form(shape, alpha(y)), y)
            got = pullback(A, lambda eta: liouville_form(shape, eta), y)
            assert got.allclose(own, atol=1e-13)


def test_first_variation_identity(rng):
    """``d/dt (psi_t^* Theta_h) = d(psi^*(i_xi Theta_h)) + psi^*(i_xi d Theta_h)`` pointwise."""
    shape = BundleShape(2, 1)
    HV = volterra_from_text(shape, "0.5*(p1_1^2 + p1_2^2) + 0.3*q1^2*x1")
    psi = section_from_text(shape, ["sin(x1)*x2 + x1"], [["cos(x2)", "x1*x2^2"]],
                            ChartedDomain(((-1.0, 2.0), (-1.0, 2.0))))
    phi = Variation.bump(shape, ChartedDomain(((0.0, 1.0), (0.0, 1.0))), [0.7], [[-0.4, 1.1]])
    cfg = DifferentiationConfig(1e-5)
    theta = lambda z: theta_h(shape, HV, z)
    F = psi.as_map()
    contracted = FormField(2, 1, lambda x: pullback_along(F, phi.vector, theta, x))
    for x in ([0.4, 0.55], [0.62, 0.3], [0.5, 0.5]):
        x = np.array(x)
        t = 1e-4
        lhs = (action_density(HV, psi.plus(phi, t), x) - action_density(HV, psi.plus(phi, -t), x)) / (2 * t)
        d_part = exterior_derivative(contracted, x, cfg)[(0, 1)]
        w_part = -pullback_along(F, phi.vector, lambda z: omega_h(shape, HV, z), x)[(0, 1)]
        assert lhs == pytest.approx(d_part + w_part, abs=1e-6)


def test_top_pairing_on_graph():
    J = np.vstack([np.eye(2), [[3.0, 4.0]]])
    vol = AlternatingForm.volume(3, (0, 1))
    assert top_pairing(J, vol) == 1.0
    assert top_pairing(J, wedge(AlternatingForm.covector([0, 0, 1]), AlternatingForm.covector([0, 1, 0]))) == pytest.approx(3.0)
