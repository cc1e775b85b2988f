"""Generalized de Donder-Weyl equations on an arbitrary n-plectic manifold.

A manifold is a coordinate box of ``R^d`` carrying a closed ``(n+1)``-form
``omega`` whose flat map ``v -> i_v omega`` is injective.  Both properties
are checked at sample points rather than assumed.

For a degree ``n-k`` form ``H`` and a ``k``-multivector ``X`` the equation is
``i_X omega = s(n, k) dH``.  The sign ``s`` depends on how a multivector is
contracted; with the leading-slot contraction used throughout this package
it is ``(-1)^((k+1)(n+1-k))``, which is ``+1`` for ``k = 1`` and
``(-1)^(n+1)`` for ``k = n``.  Pass ``sign=`` to override.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algebra import AlternatingForm, MultiVector, contract, flat_matrix, multi_indices
from .bundle import BundleShape, HamiltonianFunction, HamiltonVolterraFunction, omega_coordinate, section_point
from .calculus import (
    ChartedDomain,
    DifferentiationConfig,
    FormField,
    SmoothMap,
    exterior_derivative,
    pushforward_multivector,
)

__all__ = [
    "NPlecticManifold",
    "HamiltonianForm",
    "CoVolume",
    "NPlecticReport",
    "hdw_sign",
    "singular_rank",
    "check_nplectic",
    "hdw_residual_pair",
    "dynamical_hdw_residual",
    "degeneracy_scan",
    "contraction_matrix",
    "hamiltonian_vector_field",
    "multicotangent_manifold",
    "lifted_section",
    "hamiltonian_form_from_volterra",
]

RANK_RTOL = 1e-10


def hdw_sign(n: int, k: int) -> int:
    """Sign ``s`` in ``i_X omega = s dH`` for a ``k``-multivector and an ``(n+1)``-form."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return -1 if ((k + 1) * (n + 1 - k)) % 2 else 1


def singular_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Numerical rank: singular values above ``rtol * largest``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass
class NPlecticManifold:
    """``R^dim`` (optionally a box in it) with an ``(n+1)``-form field."""

    dim: int
    n: int
    omega: FormField
    domain: Optional[ChartedDomain] = None
    name: str = ""

    def __post_init__(self):
        if self.omega.dim != self.dim or self.omega.degree != self.n + 1:
            raise ValueError(f"omega must be a {self.n + 1}-form on R^{self.dim}")

    def at(self, x) -> AlternatingForm:
        return self.omega(x)


@dataclass
class HamiltonianForm:
    """A form field ``H`` of degree ``n - k``; ``derivative`` gives ``dH`` analytically."""

    field: FormField

    @property
    def degree(self) -> int:
        return self.field.degree

    @property
    def dim(self) -> int:
        return self.field.dim

    def __call__(self, x) -> AlternatingForm:
        return self.field(x)

    def d(self, x, cfg: DifferentiationConfig | None = None) -> AlternatingForm:
        return exterior_derivative(self.field, x, cfg)

    @classmethod
    def from_function(cls, dim: int, f: Callable, grad: Callable | None = None,
                      domain: ChartedDomain | None = None) -> "HamiltonianForm":
        """Degree-0 Hamiltonian from a scalar function (``k = n``)."""
        deriv = None
        if grad is not None:
            def deriv(x):
                return AlternatingForm.covector(np.asarray(grad(x), dtype=float))
        return cls(FormField(dim, 0, lambda x: AlternatingForm.scalar(dim, float(f(x))),
                             domain=domain, derivative=deriv))

    @classmethod
    def constant(cls, form: AlternatingForm) -> "HamiltonianForm":
        return cls(FormField.constant(form))


@dataclass
class CoVolume:
    """A nowhere-vanishing ``k``-multivector field on a ``k``-dimensional source."""

    k: int
    at: Callable
    domain: Optional[ChartedDomain] = None

    def __call__(self, x) -> MultiVector:
        g = self.at(np.asarray(x, dtype=float))
        if g.dim != self.k or g.degree != self.k:
            raise ValueError("co-volume value has the wrong shape")
        if not np.any(g.coeffs):
            raise ValueError(f"co-volume vanishes at {x}")
        return g

    @classmethod
    def standard(cls, k: int, domain: ChartedDomain | None = None) -> "CoVolume":
        """``d/dx^1 ^ ... ^ d/dx^k``."""
        g = MultiVector(k, k, np.ones(1))
        return cls(k, lambda x: g, domain)


@dataclass
class NPlecticReport:
    points: np.ndarray
    closedness: np.ndarray
    ranks: np.ndarray
    dim: int
    closed_tol: float
    details: dict = field(default_factory=dict)

    @property
    def max_closedness(self) -> float:
        return float(self.closedness.max()) if self.closedness.size else 0.0

    @property
    def min_rank(self) -> int:
        return int(self.ranks.min()) if self.ranks.size else 0

    @property
    def closed(self) -> bool:
        return self.max_closedness < self.closed_tol

    @property
    def nondegenerate(self) -> bool:
        return self.min_rank == self.dim

    @property
    def ok(self) -> bool:
        return self.closed and self.nondegenerate

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "samples": int(self.points.shape[0]),
            "closedness_max": self.max_closedness,
            "closed": self.closed,
            "min_rank": self.min_rank,
            "nondegenerate": self.nondegenerate,
            **self.details,
        }


def check_nplectic(M: NPlecticManifold, points, cfg: DifferentiationConfig | None = None,
                   closed_tol: float = 1e-6, rtol: float = RANK_RTOL) -> NPlecticReport:
    """Closedness residual ``|d omega|`` and rank of the flat map at each sample.

    Rank deficiency is reported, never raised.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    closed = np.zeros(points.shape[0])
    ranks = np.zeros(points.shape[0], dtype=int)
    for i, x in enumerate(points):
        if M.n + 1 < M.dim:
            closed[i] = exterior_derivative(M.omega, x, cfg).norm_inf()
        ranks[i] = singular_rank(flat_matrix(M.at(x)), rtol)
    return NPlecticReport(points, closed, ranks, M.dim, closed_tol)


def _check_degrees(M: NPlecticManifold, H: HamiltonianForm, k: int):
    if H.dim != M.dim:
        raise ValueError("Hamiltonian form lives on a space of the wrong dimension")
    if H.degree != M.n - k:
        raise ValueError(f"a {k}-multivector needs a Hamiltonian of degree {M.n - k}, got {H.degree}")


def hdw_residual_pair(M: NPlecticManifold, H: HamiltonianForm, X: MultiVector, x,
                      cfg: DifferentiationConfig | None = None, sign: int | None = None) -> AlternatingForm:
    """``i_X omega - s dH`` at ``x``."""
    k = X.degree
    if X.dim != M.dim:
        raise ValueError("multivector lives on a space of the wrong dimension")
    _check_degrees(M, H, k)
    s = hdw_sign(M.n, k) if sign is None else sign
    return contract(X, M.at(x)) - s * H.d(x, cfg)


def dynamical_hdw_residual(M: NPlecticManifold, H: HamiltonianForm, psi: SmoothMap, gamma: CoVolume, x,
                           cfg: DifferentiationConfig | None = None, sign: int | None = None) -> AlternatingForm:
    """``i_{psi_* gamma} omega - s dH`` at ``psi(x)``."""
    x = np.asarray(x, dtype=float)
    if gamma.domain is not None and not gamma.domain.contains(x):
        raise ValueError(f"{x} lies outside the source domain")
    push = pushforward_multivector(psi, gamma(x), x, cfg)
    return hdw_residual_pair(M, H, push, psi(x), cfg, sign)


def contraction_matrix(omega: AlternatingForm, k: int) -> np.ndarray:
    """Matrix of ``X -> i_X omega`` on ``Lambda^k``; column ``j`` is the ``j``-th basis multivector."""
    cols = [contract(MultiVector.basis(omega.dim, I), omega).coeffs for I in multi_indices(omega.dim, k)]
    return np.column_stack(cols)


def degeneracy_scan(M: NPlecticManifold, H: HamiltonianForm, x, k: int | None = None,
                    cfg: DifferentiationConfig | None = None, atol: float = 1e-12,
                    rtol: float = RANK_RTOL) -> dict:
    """Whether ``dH`` vanishes at ``x`` and the kernel dimension of ``X -> i_X omega`` on ``Lambda^k``."""
    k = M.n - H.degree if k is None else k
    dH = H.d(x, cfg)
    C = contraction_matrix(M.at(x), k)
    rank = singular_rank(C, rtol)
    return {
        "k": k,
        "dH_norm": dH.norm_inf(),
        "dH_vanishes": bool(dH.norm_inf() <= atol),
        "multivector_dim": C.shape[1],
        "contraction_rank": rank,
        "kernel_dim": C.shape[1] - rank,
    }


def hamiltonian_vector_field(M: NPlecticManifold, H: HamiltonianForm, x,
                             cfg: DifferentiationConfig | None = None) -> np.ndarray:
    """The unique vector ``X`` with ``i_X omega = s dH`` (``k = 1``).

    Raises if the flat map is not injective at ``x`` or no exact solution exists.
    """
    _check_degrees(M, H, 1)
    A = flat_matrix(M.at(x))
    b = hdw_sign(M.n, 1) * H.d(x, cfg).coeffs
    if singular_rank(A) < M.dim:
        raise np.linalg.LinAlgError("omega is degenerate here; the solution is not unique")
    X, *_ = np.linalg.lstsq(A, b, rcond=None)
    gap = np.max(np.abs(A @ X - b)) if b.size else 0.0
    if gap > 1e-9 * max(1.0, np.max(np.abs(b))):
        raise np.linalg.LinAlgError(f"dH is not in the image of the flat map (gap {gap:.3g})")
    return X


def multicotangent_manifold(shape: BundleShape) -> NPlecticManifold:
    """M(pi) with its canonical multisymplectic form."""
    w = omega_coordinate(shape)
    return NPlecticManifold(shape.dim_M, shape.n, FormField.constant(w), name=f"M(pi) n={shape.n} N={shape.N}")


def lifted_section(HV: HamiltonVolterraFunction, psi_tilde, cfg: DifferentiationConfig | None = None) -> SmoothMap:
    """``x -> h(psi_tilde(x))`` into M(pi), with the chain-rule jacobian."""
    shape = psi_tilde.shape

    def value(x):
        return section_point(HV, psi_tilde.point(x))

    def jac(x):
        jet = psi_tilde.jet(x, cfg)
        g = HV.gradient(jet.z, cfg)
        return np.vstack([np.eye(shape.dim_P), -g]) @ jet.J

    return SmoothMap(shape.n, shape.dim_M, value, jac, getattr(psi_tilde, "domain", None))


def hamiltonian_form_from_volterra(HV: HamiltonVolterraFunction, cfg=None) -> HamiltonianForm:
    H = HamiltonianFunction.from_volterra(HV, cfg)
    return HamiltonianForm.from_function(HV.shape.dim_M, H, lambda eta: H.gradient(eta, cfg))

