"""Finite-difference calculus on coordinate charts.

Everything here works pointwise: a form field is a callable returning an
:class:`~multisym.algebra.AlternatingForm`, and derivatives are taken with
central (or Richardson-extrapolated central) differences.  Any object that
consumes a derivative also accepts an analytic override, so that scheme
error can be switched off entirely.

Stencils are never silently made one-sided: evaluating closer than one step
to the edge of a declared domain raises :class:`BoundaryStencilError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algebra import AlternatingForm, MultiVector, compound_matrix, interior, wedge, zero_form

__all__ = [
    "BoundaryStencilError",
    "ChartedDomain",
    "DifferentiationConfig",
    "SmoothMap",
    "FormField",
    "partials",
    "gradient",
    "differential",
    "jacobian",
    "exterior_derivative",
    "pullback",
    "pullback_field",
    "pushforward_multivector",
    "pullback_along",
    "top_pairing",
    "check_jacobian",
]

EPS = np.finfo(float).eps


class BoundaryStencilError(ValueError):
    """A difference stencil would leave the declared domain."""


@dataclass(frozen=True)
class ChartedDomain:
    """A closed coordinate box ``prod_i [lo_i, hi_i]``."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not b:
            raise ValueError("a domain needs at least one coordinate")
        for lo, hi in b:
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise ValueError(f"bad interval [{lo}, {hi}]")
        object.__setattr__(self, "bounds", b)

    @classmethod
    def cube(cls, dim: int, lo: float = 0.0, hi: float = 1.0) -> "ChartedDomain":
        return cls(((lo, hi),) * dim)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, x, clearance=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        c = np.broadcast_to(np.asarray(clearance, dtype=float), x.shape)
        return bool(np.all(x - c >= self.lower) and np.all(x + c <= self.upper))

    def compactly_contains(self, other: "ChartedDomain") -> bool:
        """True when ``other`` sits strictly inside this box."""
        if other.dim != self.dim:
            return False
        return bool(np.all(other.lower > self.lower) and np.all(other.upper < self.upper))

    def grid(self, points_per_axis: int, margin: float = 0.0) -> np.ndarray:
        """Tensor grid of points, shape ``(points**dim, dim)``."""
        axes = [np.linspace(lo + margin, hi - margin, points_per_axis) for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        lo = self.lower + margin
        hi = self.upper - margin
        return rng.uniform(lo, hi, size=(count, self.dim))


@dataclass(frozen=True)
class DifferentiationConfig:
    """Step and scheme for finite differences.

    ``step`` is relative: the actual step along axis ``i`` is
    ``step * max(1, |x_i|)``.  ``None`` picks the usual optimum for the
    scheme (``eps**(1/3)`` for central, ``eps**(1/5)`` for Richardson).
    """

    step: Optional[float] = None
    scheme: str = "central"

    def __post_init__(self):
        if self.scheme not in ("central", "richardson"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def relative_step(self) -> float:
        if self.step is not None:
            return self.step
        return EPS ** (1 / 3) if self.scheme == "central" else EPS ** (1 / 5)

    def steps(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.relative_step * np.maximum(1.0, np.abs(x))


DEFAULT_CONFIG = DifferentiationConfig()


def _central(f, x, i, h):
    xp = x.copy()
    xm = x.copy()
    xp[i] += h
    xm[i] -= h
    span = xp[i] - xm[i]
    return (np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / span


def partials(f: Callable, x, cfg: DifferentiationConfig | None = None,
             domain: ChartedDomain | None = None) -> np.ndarray:
    """All first partials of a (possibly array-valued) function.

    Returns an array of shape ``(dim,) + shape(f(x))``.
    """
    cfg = cfg or DEFAULT_CONFIG
    x = np.array(x, dtype=float)
    h = cfg.steps(x)
    if domain is not None and not domain.contains(x, clearance=h):
        raise BoundaryStencilError(f"point {x} is within one step of the domain boundary")
    out = []
    for i in range(x.size):
        d1 = _central(f, x, i, h[i])
        if cfg.scheme == "richardson":
            d2 = _central(f, x, i, h[i] / 2)
            d1 = (4.0 * d2 - d1) / 3.0
        out.append(d1)
    return np.array(out)


def gradient(f: Callable, x, cfg=None, domain=None) -> np.ndarray:
    return partials(lambda y: float(f(y)), x, cfg, domain)


def differential(f: Callable, x, cfg=None, domain=None,
                 grad: Callable | None = None) -> AlternatingForm:
    """``df`` at ``x`` as a 1-form; ``grad`` is an analytic override."""
    g = np.asarray(grad(np.asarray(x, dtype=float)), dtype=float) if grad is not None \
        else gradient(f, x, cfg, domain)
    return AlternatingForm.covector(g)


@dataclass
class SmoothMap:
    """A coordinate map ``R^m -> R^n`` with optional analytic jacobian."""

    domain_dim: int
    codomain_dim: int
    value: Callable
    jacobian: Optional[Callable] = None
    domain: Optional[ChartedDomain] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def jac(self, x, cfg: DifferentiationConfig | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            J = np.asarray(self.jacobian(x), dtype=float)
        else:
            J = partials(self.value, x, cfg, self.domain).T
        J = J.reshape(self.codomain_dim, self.domain_dim)
        return J

    @classmethod
    def identity(cls, dim: int) -> "SmoothMap":
        return cls(dim, dim, lambda x: np.array(x, dtype=float), lambda x: np.eye(dim))

    @classmethod
    def constant(cls, domain_dim: int, point) -> "SmoothMap":
        point = np.asarray(point, dtype=float)
        return cls(domain_dim, point.size, lambda x: point.copy(),
                   lambda x: np.zeros((point.size, domain_dim)))


def jacobian(F: SmoothMap, x, cfg=None) -> np.ndarray:
    return F.jac(x, cfg)


@dataclass
class FormField:
    """A degree-``p`` form field on ``R^dim``.

    ``derivative`` optionally supplies ``d(at)`` analytically.
    """

    dim: int
    degree: int
    at: Callable
    domain: Optional[ChartedDomain] = None
    derivative: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, x) -> AlternatingForm:
        a = self.at(np.asarray(x, dtype=float))
        if a.dim != self.dim or a.degree != self.degree:
            raise ValueError("form field returned a value of the wrong shape")
        return a

    @classmethod
    def constant(cls, form: AlternatingForm) -> "FormField":
        zero = AlternatingForm.zero(form.dim, form.degree + 1) if form.degree < form.dim else None
        return cls(form.dim, form.degree, lambda x: form,
                   derivative=(lambda x: zero) if zero is not None else None)


def exterior_derivative(a: FormField, x, cfg: DifferentiationConfig | None = None,
                        analytic: bool = True) -> AlternatingForm:
    """``(da)_x``, using ``a.derivative`` when present and ``analytic`` is set.

    Numerically, ``da = sum_i dx^i ^ (partial_i a)``.
    """
    if analytic and a.derivative is not None:
        return a.derivative(np.asarray(x, dtype=float))
    if a.degree >= a.dim:
        raise ValueError("a top-degree form has no exterior derivative in range")
    dcoeffs = partials(lambda y: a(y).coeffs, x, cfg, a.domain)
    out = AlternatingForm.zero(a.dim, a.degree + 1)
    eye = np.eye(a.dim)
    for i in range(a.dim):
        out = out + wedge(AlternatingForm.covector(eye[i]), AlternatingForm(a.dim, a.degree, dcoeffs[i]))
    return out


def _value_at(a, point):
    return a(point) if callable(a) and not isinstance(a, AlternatingForm) else a


def pullback(F: SmoothMap, a, x, cfg: DifferentiationConfig | None = None) -> AlternatingForm:
    """``(F^* a)_x(u_1..u_p) = a(F_* u_1, .., F_* u_p)``.

    ``a`` is either the form at ``F(x)`` or a form field to evaluate there.
    """
    x = np.asarray(x, dtype=float)
    alpha = _value_at(a, F(x))
    if alpha.dim != F.codomain_dim:
        raise ValueError("form lives on a space of the wrong dimension")
    p = alpha.degree
    if p > F.domain_dim:
        return zero_form(F.domain_dim, p)
    C = compound_matrix(F.jac(x, cfg), p)
    return AlternatingForm(F.domain_dim, p, C.T @ alpha.coeffs)


def pullback_field(F: SmoothMap, a: FormField, cfg=None) -> FormField:
    """``F^* a`` as a form field on the source of ``F``."""
    return FormField(F.domain_dim, a.degree, lambda x: pullback(F, a, x, cfg), domain=F.domain)


def pushforward_multivector(F: SmoothMap, G: MultiVector, x,
                            cfg: DifferentiationConfig | None = None) -> MultiVector:
    """``F_* G`` at ``F(x)``: the ``k``-th exterior power of the jacobian applied to ``G``."""
    if G.dim != F.domain_dim:
        raise ValueError("multivector does not live on the source of the map")
    C = compound_matrix(F.jac(x, cfg), G.degree)
    return MultiVector(F.codomain_dim, G.degree, C @ G.coeffs)


def pullback_along(F: SmoothMap, xi, a, x, cfg: DifferentiationConfig | None = None) -> AlternatingForm:
    """``(F^*(i_xi a))_x(u..) = a_{F(x)}(xi_x, F_* u, ..)`` for ``xi`` a field along ``F``.

    ``xi`` is a callable of the source point returning a tangent vector at
    ``F(x)``, or a fixed vector.
    """
    x = np.asarray(x, dtype=float)
    vec = xi(x) if callable(xi) else xi
    alpha = _value_at(a, F(x))
    return pullback(F, interior(np.asarray(vec, dtype=float), alpha), x, cfg)


def top_pairing(J: np.ndarray, alpha: AlternatingForm) -> float:
    """``alpha(J e_1, .., J e_n)`` for an ``m x n`` jacobian and an n-form on ``R^m``."""
    n = J.shape[1]
    return float(alpha.coeffs @ compound_matrix(J, n)[:, 0])


def check_jacobian(F: SmoothMap, x, cfg=None) -> float:
    """Max gap between the analytic jacobian and central differences."""
    if F.jacobian is None:
        return 0.0
    num = partials(F.value, x, cfg, F.domain).T.reshape(F.codomain_dim, F.domain_dim)
    return float(np.max(np.abs(num - F.jac(x))))
