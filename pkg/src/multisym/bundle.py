"""Coordinate model of the restricted multicotangent bundle and its quotient.

A point of ``M(pi)`` in an adapted standard chart is a flat array

    (x^1..x^n, q^1..q^N, p^mu_a (a-major), p)

and a point of ``P(pi)`` is the same array without the trailing ``p``.
The momentum ``p^mu_a`` sits at slot ``n + N + a*n + mu`` (0-based ``a``,
``mu``).  The chart is assumed adapted to the source volume, i.e. the
volume form is ``d^n x`` throughout, so ``Z`` is the coordinate field
``d/dp`` and a Hamiltonian section reads ``p = -H(z)``.

Projections are coordinate truncations: ``rho: M -> P`` drops ``p``,
``kappa: P -> E`` keeps ``(x, q)`` and ``tau: P -> Sigma`` keeps ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .algebra import AlternatingForm, interior, wedge
from .calculus import DifferentiationConfig, SmoothMap, partials

__all__ = [
    "BundleShape",
    "AdmissibilityError",
    "HamiltonVolterraFunction",
    "HamiltonianFunction",
    "rho",
    "kappa",
    "tau",
    "volume_form",
    "hat_volume",
    "liouville_form",
    "theta_h",
    "omega_coordinate",
    "omega_h",
    "hamiltonian_section",
    "section_point",
    "hamiltonian_function",
    "z_derivative",
    "z_flow",
    "section_from_function",
    "function_from_section",
    "chi",
]


class AdmissibilityError(ValueError):
    """A function on M(pi) does not satisfy Z(H) = 1."""


@dataclass(frozen=True)
class BundleShape:
    """Base dimension ``n`` and fibre dimension ``N``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError("need n >= 1 and N >= 1")

    @property
    def dim_E(self) -> int:
        return self.n + self.N

    @property
    def dim_P(self) -> int:
        return self.n + self.N + self.n * self.N

    @property
    def dim_M(self) -> int:
        return self.dim_P + 1

    @property
    def fibre_dim(self) -> int:
        """Dimension of the fibre of ``tau``."""
        return self.N + self.n * self.N

    def x_slot(self, mu: int) -> int:
        return mu

    def q_slot(self, a: int) -> int:
        return self.n + a

    def p_slot(self, a: int, mu: int) -> int:
        if not (0 <= a < self.N and 0 <= mu < self.n):
            raise IndexError((a, mu))
        return self.n + self.N + a * self.n + mu

    def p_pair(self, slot: int) -> tuple[int, int]:
        """Inverse of :meth:`p_slot`."""
        k = slot - self.n - self.N
        if not 0 <= k < self.n * self.N:
            raise IndexError(slot)
        return divmod(k, self.n)

    @property
    def fibre_slot(self) -> int:
        """Slot of the coordinate ``p`` on M(pi)."""
        return self.dim_P

    @property
    def names_P(self) -> list[str]:
        names = [f"x{mu + 1}" for mu in range(self.n)]
        names += [f"q{a + 1}" for a in range(self.N)]
        names += [f"p{a + 1}_{mu + 1}" for a in range(self.N) for mu in range(self.n)]
        return names

    @property
    def names_M(self) -> list[str]:
        return self.names_P + ["p"]

    def split_P(self, z):
        """``(x, q, P)`` with ``P[a, mu] = p^mu_a``."""
        z = np.asarray(z, dtype=float)
        n, N = self.n, self.N
        return z[:n], z[n:n + N], z[n + N:self.dim_P].reshape(N, n)

    def pack_P(self, x, q, P) -> np.ndarray:
        return np.concatenate([np.ravel(x), np.ravel(q), np.ravel(P)]).astype(float)

    def vertical_basis(self, space: str = "M") -> list[np.ndarray]:
        """Coordinate fields tangent to the fibres over the source."""
        dim = self.dim_M if space == "M" else self.dim_P
        eye = np.eye(dim)
        return [eye[i] for i in range(self.n, dim)]


def rho(shape: BundleShape, eta) -> np.ndarray:
    return np.asarray(eta, dtype=float)[:shape.dim_P]


def kappa(shape: BundleShape, z) -> np.ndarray:
    return np.asarray(z, dtype=float)[:shape.dim_E]


def tau(shape: BundleShape, z) -> np.ndarray:
    return np.asarray(z, dtype=float)[:shape.n]


@lru_cache(maxsize=None)
def volume_form(shape: BundleShape, dim: int) -> AlternatingForm:
    """``d^n x`` on a space whose first ``n`` coordinates are the ``x``."""
    return AlternatingForm.volume(dim, range(shape.n))


@lru_cache(maxsize=None)
def hat_volume(shape: BundleShape, mu: int, dim: int) -> AlternatingForm:
    """``d^{n-1} x-hat^mu = i_{d/dx^mu} d^n x``."""
    e = np.zeros(dim)
    e[mu] = 1.0
    return interior(e, volume_form(shape, dim))


@lru_cache(maxsize=None)
def _momentum_terms(shape: BundleShape, dim: int) -> tuple[AlternatingForm, ...]:
    """``dq^a ^ d^{n-1}x-hat^mu`` in p-slot order."""
    out = []
    for a in range(shape.N):
        dq = AlternatingForm.basis(dim, (shape.q_slot(a),))
        for mu in range(shape.n):
            out.append(wedge(dq, hat_volume(shape, mu, dim)))
    return tuple(out)


@lru_cache(maxsize=None)
def _omega_parts(shape: BundleShape, dim: int) -> AlternatingForm:
    """``- sum dp^mu_a ^ dq^a ^ d^{n-1}x-hat^mu``."""
    out = AlternatingForm.zero(dim, shape.n + 1)
    terms = _momentum_terms(shape, dim)
    for a in range(shape.N):
        for mu in range(shape.n):
            dp = AlternatingForm.basis(dim, (shape.p_slot(a, mu),))
            out = out - wedge(dp, terms[a * shape.n + mu])
    return out


def _momentum_sum(shape: BundleShape, z, dim: int) -> AlternatingForm:
    _, _, P = shape.split_P(z)
    coeffs = sum(P.ravel()[k] * t.coeffs for k, t in enumerate(_momentum_terms(shape, dim)))
    return AlternatingForm(dim, shape.n, coeffs)


def liouville_form(shape: BundleShape, eta) -> AlternatingForm:
    """``Theta = p d^n x + sum p^mu_a dq^a ^ d^{n-1}x-hat^mu`` at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    dim = shape.dim_M
    return eta[shape.fibre_slot] * volume_form(shape, dim) + _momentum_sum(shape, eta, dim)


@lru_cache(maxsize=None)
def _omega_M(shape: BundleShape) -> AlternatingForm:
    dim = shape.dim_M
    dp = AlternatingForm.basis(dim, (shape.fibre_slot,))
    return -wedge(dp, volume_form(shape, dim)) + _omega_parts(shape, dim)


def omega_coordinate(shape: BundleShape, eta=None) -> AlternatingForm:
    """``omega = -dTheta`` from its closed form; constant in the chart."""
    w = _omega_M(shape)
    return AlternatingForm(w.dim, w.degree, w.coeffs.copy())


@dataclass
class HamiltonVolterraFunction:
    """The local scalar ``H(x, q, p^mu_a)`` on P(pi).

    ``grad`` returns the full gradient over the P(pi) coordinates; without it
    derivatives are taken by finite differences.  ``batch_value`` and
    ``batch_grad``, when given, act on stacks of points ``(M, dim_P)``.
    """

    shape: BundleShape
    value: Callable
    grad: Optional[Callable] = None
    name: str = ""
    batch_value: Optional[Callable] = field(default=None, repr=False)
    batch_grad: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, z) -> float:
        return float(self.value(np.asarray(z, dtype=float)))

    def gradient(self, z, cfg: DifferentiationConfig | None = None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(z), dtype=float).reshape(self.shape.dim_P)
        return partials(lambda y: float(self.value(y)), z, cfg)

    def differential(self, z, cfg=None) -> AlternatingForm:
        return AlternatingForm.covector(self.gradient(z, cfg))

    def values(self, Z) -> np.ndarray:
        """``H`` at each row of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.batch_value is not None:
            return np.asarray(self.batch_value(Z), dtype=float).reshape(Z.shape[0])
        return np.array([self(z) for z in Z])

    def gradients(self, Z, cfg=None) -> np.ndarray:
        """Gradients at each row of ``Z``, shape ``(M, dim_P)``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.batch_grad is not None:
            return np.asarray(self.batch_grad(Z), dtype=float).reshape(Z.shape[0], self.shape.dim_P)
        return np.array([self.gradient(z, cfg) for z in Z])


def theta_h(shape: BundleShape, HV: HamiltonVolterraFunction, z) -> AlternatingForm:
    """``Theta_h = h^* Theta = -H d^n x + sum p^mu_a dq^a ^ d^{n-1}x-hat^mu`` on P(pi)."""
    dim = shape.dim_P
    return -HV(z) * volume_form(shape, dim) + _momentum_sum(shape, z, dim)


def omega_h(shape: BundleShape, HV: HamiltonVolterraFunction, z,
            cfg: DifferentiationConfig | None = None) -> AlternatingForm:
    """``omega_h = dH ^ d^n x - sum dp^mu_a ^ dq^a ^ d^{n-1}x-hat^mu``."""
    dim = shape.dim_P
    return wedge(HV.differential(z, cfg), volume_form(shape, dim)) + _omega_parts(shape, dim)


def section_point(HV: HamiltonVolterraFunction, z) -> np.ndarray:
    """``h(z) = (z, -H(z))``."""
    z = np.asarray(z, dtype=float)
    return np.append(z, -HV(z))


def hamiltonian_section(HV: HamiltonVolterraFunction, cfg=None) -> SmoothMap:
    """The Hamiltonian section ``h: P -> M`` with jacobian ``[I; -grad H]``."""
    shape = HV.shape

    def jac(z):
        return np.vstack([np.eye(shape.dim_P), -HV.gradient(z, cfg)])

    return SmoothMap(shape.dim_P, shape.dim_M, lambda z: section_point(HV, z), jac)


@dataclass
class HamiltonianFunction:
    """A scalar on M(pi); ``grad`` is the optional analytic gradient."""

    shape: BundleShape
    value: Callable
    grad: Optional[Callable] = None

    def __call__(self, eta) -> float:
        return float(self.value(np.asarray(eta, dtype=float)))

    def gradient(self, eta, cfg=None) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(eta), dtype=float).reshape(self.shape.dim_M)
        return partials(lambda y: float(self.value(y)), eta, cfg)

    def differential(self, eta, cfg=None) -> AlternatingForm:
        return AlternatingForm.covector(self.gradient(eta, cfg))

    @classmethod
    def from_volterra(cls, HV: HamiltonVolterraFunction, cfg=None) -> "HamiltonianFunction":
        """``H = H_volterra + p``."""
        shape = HV.shape

        def value(eta):
            return HV(eta[:shape.dim_P]) + eta[shape.fibre_slot]

        def grad(eta):
            return np.append(HV.gradient(eta[:shape.dim_P], cfg), 1.0)

        return cls(shape, value, grad)


def hamiltonian_function(HV: HamiltonVolterraFunction, eta) -> float:
    """``H(eta) = H_volterra(rho(eta)) + p``."""
    eta = np.asarray(eta, dtype=float)
    return HV(rho(HV.shape, eta)) + float(eta[HV.shape.fibre_slot])


def z_flow(shape: BundleShape, eta, u: float) -> np.ndarray:
    """Flow of ``Z = d/dp`` for time ``u``."""
    out = np.array(eta, dtype=float)
    out[shape.fibre_slot] += u
    return out


def z_derivative(H, eta, shape: BundleShape | None = None,
                 cfg: DifferentiationConfig | None = None) -> float:
    """``Z_eta(H) = d/dt H(eta + t d/dp)`` at ``t = 0``.

    Uses the analytic gradient of a :class:`HamiltonianFunction` when there
    is one; plain callables (which then need ``shape``) are differenced.
    """
    eta = np.asarray(eta, dtype=float)
    if isinstance(H, HamiltonianFunction):
        shape = H.shape
        if H.grad is not None:
            return float(H.gradient(eta)[shape.fibre_slot])
    if shape is None:
        raise ValueError("shape is required for a plain callable")
    slot = shape.fibre_slot
    cfg = cfg or DifferentiationConfig()
    h = cfg.steps(eta)[slot]
    fp = z_flow(shape, eta, h)
    fm = z_flow(shape, eta, -h)
    d = (float(H(fp)) - float(H(fm))) / (fp[slot] - fm[slot])
    if cfg.scheme == "richardson":
        fp2 = z_flow(shape, eta, h / 2)
        fm2 = z_flow(shape, eta, -h / 2)
        d2 = (float(H(fp2)) - float(H(fm2))) / (fp2[slot] - fm2[slot])
        d = (4 * d2 - d) / 3
    return d


def section_from_function(H, z, shape: BundleShape | None = None, atol: float = 1e-8,
                          cfg: DifferentiationConfig | None = None) -> np.ndarray:
    """The unique point of ``{H = 0}`` over ``z``.

    Along the flow of ``Z`` the function grows at unit rate, so the fibre
    solve is a single shift: ``p = -H(z, 0)``.
    """
    if isinstance(H, HamiltonianFunction):
        shape = H.shape
    if shape is None:
        raise ValueError("shape is required for a plain callable")
    z = np.asarray(z, dtype=float)
    eta0 = np.append(z, 0.0)
    zh = z_derivative(H, eta0, shape, cfg)
    if abs(zh - 1.0) > atol:
        raise AdmissibilityError(f"Z(H) = {zh!r} at {z}, expected 1")
    return z_flow(shape, eta0, -float(H(eta0)))


def function_from_section(shape: BundleShape, section: SmoothMap | Callable) -> HamiltonianFunction:
    """``H = pr_R o chi^{-1}``: the p-offset of ``eta`` above the section."""
    slot = shape.fibre_slot

    def value(eta):
        return eta[slot] - section(eta[:shape.dim_P])[slot]

    grad = None
    if isinstance(section, SmoothMap) and section.jacobian is not None:
        def grad(eta):
            return np.append(-section.jac(eta[:shape.dim_P])[slot], 1.0)

    return HamiltonianFunction(shape, value, grad)


def chi(HV: HamiltonVolterraFunction, z, u: float) -> np.ndarray:
    """``chi(z, u) = h(z) + u d^n x``; in the chart ``p = -H(z) + u``."""
    z = np.asarray(z, dtype=float)
    return np.append(z, -HV(z) + u)
