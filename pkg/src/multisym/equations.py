"""Residuals of the equivalent field equations on a section of ``tau: P(pi) -> Sigma``.

A section is anything with a ``shape`` and a ``jet(x, cfg)`` method that
returns the point ``z = psi(x)`` in P(pi) together with the jacobian of
``x -> psi(x)`` (shape ``dim_P x n``, identity in the x-rows).  Two kinds
are provided: :class:`AnalyticSection` (callables, optional analytic
derivatives) and :class:`DiscreteSection` (node values on a uniform grid,
central differences at interior nodes).

Residual sign conventions are "left side minus right side" of the
Hamilton-Volterra equations::

    R_a      = sum_mu d(p^mu_a)/dx^mu + dH/dq^a
    S^mu_a   = dq^a/dx^mu - dH/dp^mu_a

The co-volume is always ``d/dx^1 ^ ... ^ d/dx^n`` (the chart is adapted).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .algebra import AlternatingForm, MultiVector, compound_matrix, contract, interior
from .bundle import (
    BundleShape,
    HamiltonVolterraFunction,
    omega_coordinate,
    omega_h,
    theta_h,
)
from .calculus import (
    BoundaryStencilError,
    ChartedDomain,
    DifferentiationConfig,
    SmoothMap,
    partials,
    top_pairing,
)
from .report import ResidualReport

__all__ = [
    "SectionJet",
    "AnalyticSection",
    "DiscreteSection",
    "Variation",
    "UnsupportedVariationError",
    "perturbed",
    "hv_residual",
    "pullback_residual",
    "vertical_residual_suite",
    "vortex_residual",
    "dhdw_residual",
    "energy_residual",
    "action",
    "action_density",
    "action_first_variation",
    "quadrature_rule",
    "suite_residuals",
    "evaluate_suites",
    "FIVE_WAY",
    "ALL_SUITES",
]

FIVE_WAY = ("hv", "pullback_vertical", "pullback_full", "vortex", "dhdw")
ALL_SUITES = FIVE_WAY + ("energy",)


class UnsupportedVariationError(ValueError):
    """The variation is not compactly supported inside the integration box."""


@dataclass(frozen=True)
class SectionJet:
    """First-order data of a section at ``x``."""

    x: np.ndarray
    z: np.ndarray
    J: np.ndarray


def _jet_from_fibre(shape: BundleShape, x, fibre, fibre_jac) -> SectionJet:
    x = np.asarray(x, dtype=float)
    z = np.concatenate([x, np.asarray(fibre, dtype=float).ravel()])
    Jf = np.asarray(fibre_jac, dtype=float).reshape(shape.fibre_dim, shape.n)
    return SectionJet(x, z, np.vstack([np.eye(shape.n), Jf]))


class AnalyticSection:
    """A section ``x -> (x, q(x), p(x))`` given by callables.

    ``q(x)`` has shape ``(N,)`` and ``pmom(x)`` shape ``(N, n)`` with
    ``pmom(x)[a, mu] = p^mu_a``.  The optional ``dq`` (``(N, n)``) and
    ``dpmom`` (``(N, n, n)``, last axis the derivative direction) switch
    the jet to the analytic path.
    """

    def __init__(self, shape: BundleShape, q: Callable, pmom: Callable,
                 dq: Callable | None = None, dpmom: Callable | None = None,
                 domain: ChartedDomain | None = None, name: str = ""):
        self.shape = shape
        self.domain = domain
        self.name = name
        n, N = shape.n, shape.N

        def fibre(x):
            return np.concatenate([np.reshape(q(x), N), np.reshape(pmom(x), N * n)])

        self._fibre = fibre
        self._fibre_jac = None
        self._batch = None
        if dq is not None and dpmom is not None:
            def fibre_jac(x):
                return np.vstack([np.reshape(dq(x), (N, n)), np.reshape(dpmom(x), (N * n, n))])
            self._fibre_jac = fibre_jac

    @classmethod
    def from_fibre(cls, shape: BundleShape, fibre: Callable, fibre_jac: Callable | None = None,
                   domain: ChartedDomain | None = None, name: str = "",
                   batch: Callable | None = None) -> "AnalyticSection":
        """Build from the stacked fibre map ``x -> (q, p^mu_a)`` of length ``N + nN``.

        ``batch`` optionally maps ``X`` of shape ``(M, n)`` to the fibre values
        ``(M, N + nN)`` and their jacobians ``(M, N + nN, n)`` in one call.
        """
        self = cls.__new__(cls)
        self.shape = shape
        self.domain = domain
        self.name = name
        self._fibre = fibre
        self._fibre_jac = fibre_jac
        self._batch = batch
        return self

    @property
    def analytic(self) -> bool:
        return self._fibre_jac is not None

    def fibre(self, x) -> np.ndarray:
        return np.asarray(self._fibre(np.asarray(x, dtype=float)), dtype=float)

    def q(self, x) -> np.ndarray:
        return self.fibre(x)[:self.shape.N]

    def pmom(self, x) -> np.ndarray:
        return self.fibre(x)[self.shape.N:].reshape(self.shape.N, self.shape.n)

    def point(self, x) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float), self.fibre(x)])

    def fibre_jacobian(self, x, cfg: DifferentiationConfig | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._fibre_jac is not None:
            return np.asarray(self._fibre_jac(x), dtype=float).reshape(self.shape.fibre_dim, self.shape.n)
        return partials(self._fibre, x, cfg, self.domain).T

    def jet(self, x, cfg: DifferentiationConfig | None = None) -> SectionJet:
        x = np.asarray(x, dtype=float)
        if self.domain is not None and not self.domain.contains(x):
            raise BoundaryStencilError(f"{x} lies outside the section's domain")
        return _jet_from_fibre(self.shape, x, self.fibre(x), self.fibre_jacobian(x, cfg))

    def batch_jets(self, X, cfg: DifferentiationConfig | None = None):
        """Fibre values ``(M, F)`` and fibre jacobians ``(M, F, n)`` at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._batch is not None:
            F, J = self._batch(X)
            return np.asarray(F, dtype=float), np.asarray(J, dtype=float)
        jets = [self.jet(x, cfg) for x in X]
        n = self.shape.n
        return np.array([j.z[n:] for j in jets]), np.array([j.J[n:] for j in jets])

    def as_map(self, cfg=None) -> SmoothMap:
        """The section as a map ``R^n -> P(pi)``."""
        return SmoothMap(self.shape.n, self.shape.dim_P, self.point,
                         lambda x: self.jet(x, cfg).J, domain=self.domain)

    def add(self, fibre: Callable, fibre_jac: Callable | None = None, scale: float = 1.0,
            name: str | None = None, batch: Callable | None = None) -> "AnalyticSection":
        """``psi + scale * delta`` for a fibre-valued ``delta``."""
        base_f, base_j, base_b = self._fibre, self._fibre_jac, self._batch

        def f(x):
            return np.asarray(base_f(x), dtype=float) + scale * np.asarray(fibre(x), dtype=float).ravel()

        jac = None
        if base_j is not None and fibre_jac is not None:
            def jac(x):
                return (np.asarray(base_j(x), dtype=float)
                        + scale * np.asarray(fibre_jac(x), dtype=float).reshape(self.shape.fibre_dim, self.shape.n))

        both = None
        if base_b is not None and batch is not None:
            def both(X):
                F0, J0 = base_b(X)
                F1, J1 = batch(X)
                return F0 + scale * F1, J0 + scale * J1

        return AnalyticSection.from_fibre(self.shape, f, jac, self.domain,
                                          self.name if name is None else name, batch=both)

    def plus(self, phi: "Variation", t: float) -> "AnalyticSection":
        """The admissible family member ``psi + t phi``."""
        return self.add(phi.fibre, phi._analytic_jac, scale=t, batch=phi.batch)


class DiscreteSection:
    """Node values of a section on a uniform rectangular grid.

    ``q`` has shape ``(N, *grid)`` and ``pmom`` shape ``(N, n, *grid)``.
    Jets exist only at interior nodes (central stencils).
    """

    def __init__(self, shape: BundleShape, axes: Sequence[np.ndarray], q, pmom, name: str = ""):
        self.shape = shape
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.name = name
        if len(self.axes) != shape.n:
            raise ValueError(f"need {shape.n} axes, got {len(self.axes)}")
        grid = tuple(a.size for a in self.axes)
        if min(grid) < 5:
            raise ValueError("a discrete section needs at least 5 nodes per axis")
        self.spacing = np.array([(a[-1] - a[0]) / (a.size - 1) for a in self.axes])
        for a, h in zip(self.axes, self.spacing):
            if not np.allclose(np.diff(a), h, rtol=1e-9, atol=0):
                raise ValueError("grid axes must be uniform")
        self.q = np.asarray(q, dtype=float).reshape((shape.N,) + grid)
        self.pmom = np.asarray(pmom, dtype=float).reshape((shape.N, shape.n) + grid)
        self.grid_shape = grid
        self.domain = ChartedDomain(tuple((a[0], a[-1]) for a in self.axes))

    def node_index(self, x) -> tuple[int, ...]:
        x = np.asarray(x, dtype=float)
        idx = []
        for a, h, xi in zip(self.axes, self.spacing, x):
            i = int(round((xi - a[0]) / h))
            if not 0 <= i < a.size or abs(a[i] - xi) > 1e-9 * h:
                raise ValueError(f"{x} is not a grid node")
            idx.append(i)
        return tuple(idx)

    def node(self, idx) -> np.ndarray:
        return np.array([a[i] for a, i in zip(self.axes, idx)])

    def interior_nodes(self, clearance: int = 1) -> np.ndarray:
        ranges = [a[clearance:a.size - clearance] for a in self.axes]
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def fibre_at(self, idx) -> np.ndarray:
        sl = (slice(None),) + tuple(idx)
        return np.concatenate([self.q[sl].ravel(), self.pmom[(slice(None), slice(None)) + tuple(idx)].ravel()])

    def jet(self, x, cfg=None) -> SectionJet:
        idx = self.node_index(x)
        for i, size in zip(idx, self.grid_shape):
            if not 1 <= i <= size - 2:
                raise BoundaryStencilError(f"node {idx} has no central stencil")
        cols = []
        for mu in range(self.shape.n):
            up = list(idx)
            dn = list(idx)
            up[mu] += 1
            dn[mu] -= 1
            cols.append((self.fibre_at(up) - self.fibre_at(dn)) / (2 * self.spacing[mu]))
        return _jet_from_fibre(self.shape, self.node(idx), self.fibre_at(idx), np.column_stack(cols))

    def to_csv(self, path=None) -> str:
        """Node table: x-coordinates then every fibre coordinate."""
        import csv
        import io

        names = self.shape.names_P
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for idx in np.ndindex(*self.grid_shape):
            w.writerow([repr(float(v)) for v in np.concatenate([self.node(idx), self.fibre_at(idx)])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _bump_1d(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    dout = np.zeros_like(s)
    inside = np.abs(s) < 1
    si = s[inside]
    b = np.exp(-1.0 / (1.0 - si * si))
    out[inside] = b
    dout[inside] = b * (-2.0 * si / (1.0 - si * si) ** 2)
    return out, dout


def bump(x, support: ChartedDomain):
    """Smooth product bump on ``support`` and its gradient."""
    x = np.asarray(x, dtype=float)
    lo, hi = support.lower, support.upper
    s = (2 * x - lo - hi) / (hi - lo)
    b, db = _bump_1d(s)
    val = float(np.prod(b))
    grad = np.array([np.prod(np.delete(b, i)) * db[i] * 2 / (hi[i] - lo[i]) for i in range(x.size)])
    return val, grad


def bump_batch(X, support: ChartedDomain):
    """Row-wise :func:`bump` for ``X`` of shape ``(M, n)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi = support.lower, support.upper
    S = (2 * X - lo - hi) / (hi - lo)
    b, db = _bump_1d(S)
    val = np.prod(b, axis=1)
    grad = np.empty_like(X)
    for i in range(X.shape[1]):
        grad[:, i] = np.prod(np.delete(b, i, axis=1), axis=1) * db[:, i] * 2 / (hi[i] - lo[i])
    return val, grad


@dataclass
class Variation:
    """A vertical variation ``x -> (u^a(x), v^mu_a(x))`` supported in ``support``."""

    shape: BundleShape
    support: ChartedDomain
    u: Callable
    v: Callable
    du: Optional[Callable] = None
    dv: Optional[Callable] = None
    batch: Optional[Callable] = field(default=None, repr=False)

    def fibre(self, x) -> np.ndarray:
        n, N = self.shape.n, self.shape.N
        return np.concatenate([np.reshape(self.u(x), N), np.reshape(self.v(x), N * n)])

    @property
    def _analytic_jac(self):
        if self.du is None or self.dv is None:
            return None
        n, N = self.shape.n, self.shape.N
        return lambda x: np.vstack([np.reshape(self.du(x), (N, n)), np.reshape(self.dv(x), (N * n, n))])

    def vector(self, x) -> np.ndarray:
        """The variation field as a vertical tangent vector to P(pi)."""
        return np.concatenate([np.zeros(self.shape.n), self.fibre(x)])

    def fibres(self, X) -> np.ndarray:
        """Fibre components at the rows of ``X``, shape ``(M, N + nN)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(X)[0], dtype=float)
        return np.array([self.fibre(x) for x in X])

    @classmethod
    def zero(cls, shape: BundleShape, support: ChartedDomain) -> "Variation":
        n, N = shape.n, shape.N
        return cls(shape, support, lambda x: np.zeros(N), lambda x: np.zeros((N, n)),
                   lambda x: np.zeros((N, n)), lambda x: np.zeros((N, n, n)))

    @classmethod
    def bump(cls, shape: BundleShape, support: ChartedDomain, u_coef, v_coef) -> "Variation":
        """``u = u_coef * b(x)``, ``v = v_coef * b(x)`` with ``b`` a smooth bump."""
        n, N = shape.n, shape.N
        uc = np.asarray(u_coef, dtype=float).reshape(N)
        vc = np.asarray(v_coef, dtype=float).reshape(N, n)
        coef = np.concatenate([uc, vc.ravel()])

        def batch(X):
            val, grad = bump_batch(X, support)
            return val[:, None] * coef[None, :], coef[None, :, None] * grad[:, None, :]

        return cls(
            shape, support,
            lambda x: uc * bump(x, support)[0],
            lambda x: vc * bump(x, support)[0],
            lambda x: np.outer(uc, bump(x, support)[1]),
            lambda x: vc[:, :, None] * bump(x, support)[1][None, None, :],
            batch,
        )

    @classmethod
    def random(cls, shape: BundleShape, V: ChartedDomain, rng: np.random.Generator,
               margin: float = 0.1) -> "Variation":
        """A bump with random coefficients on a random sub-box strictly inside ``V``."""
        lo, hi = V.lower, V.upper
        width = hi - lo
        a = lo + width * rng.uniform(margin, 0.4, size=lo.size)
        b = hi - width * rng.uniform(margin, 0.4, size=lo.size)
        support = ChartedDomain(tuple(zip(a, b)))
        return cls.bump(shape, support, rng.normal(size=shape.N), rng.normal(size=(shape.N, shape.n)))


def perturbed(section: AnalyticSection, eps: float, seed: int = 0, modes: int = 2) -> AnalyticSection:
    """``section`` plus ``eps`` times a random trigonometric fibre field (seeded)."""
    shape = section.shape
    rng = np.random.default_rng(seed)
    F = shape.fibre_dim
    W = rng.normal(size=(modes, F, shape.n)) * 1.5
    phase = rng.uniform(0, 2 * np.pi, size=(modes, F))
    amp = rng.normal(size=(modes, F)) / np.sqrt(modes)

    def delta(x):
        return np.sum(amp * np.sin(W @ x + phase), axis=0)

    def ddelta(x):
        return np.einsum("mf,mfk->fk", amp * np.cos(W @ x + phase), W)

    def batch(X):
        arg = np.einsum("mfk,pk->pmf", W, X) + phase
        return (np.einsum("mf,pmf->pf", amp, np.sin(arg)),
                np.einsum("mf,pmf,mfk->pfk", amp, np.cos(arg), W))

    name = f"{section.name}+{eps:g}*perturbation[{seed}]"
    return section.add(delta, ddelta, scale=eps, name=name, batch=batch)


def _split_jet(shape: BundleShape, J):
    n, N = shape.n, shape.N
    dq = J[n:n + N, :]
    dp = J[n + N:, :].reshape(N, n, n)
    return dq, dp


def _hv_from(shape, g, J):
    n, N = shape.n, shape.N
    dq, dp = _split_jet(shape, J)
    gq = g[n:n + N]
    gp = g[n + N:].reshape(N, n)
    R = np.trace(dp, axis1=1, axis2=2) + gq
    S = dq - gp
    return R, S


def hv_residual(HV: HamiltonVolterraFunction, psi, x, cfg: DifferentiationConfig | None = None):
    """``(R, S)`` with ``R`` of shape ``(N,)`` and ``S[a, mu]`` of shape ``(N, n)``."""
    jet = psi.jet(x, cfg)
    return _hv_from(psi.shape, HV.gradient(jet.z, cfg), jet.J)


def _vector_at(X, z):
    return np.asarray(X(z) if callable(X) else X, dtype=float)


def pullback_residual(HV: HamiltonVolterraFunction, psi, X, x,
                      cfg: DifferentiationConfig | None = None) -> float:
    """``(psi^*(i_X omega_h))_x`` evaluated on ``d/dx^1 ^ ... ^ d/dx^n``.

    ``X`` is a vector field on P(pi) (callable of ``z``) or a constant vector.
    """
    jet = psi.jet(x, cfg)
    w = omega_h(psi.shape, HV, jet.z, cfg)
    return top_pairing(jet.J, interior(_vector_at(X, jet.z), w))


def _pullback_suite(shape, w, J, full: bool) -> np.ndarray:
    start = 0 if full else shape.n
    eye = np.eye(shape.dim_P)
    return np.array([top_pairing(J, interior(eye[i], w)) for i in range(start, shape.dim_P)])


def vertical_residual_suite(HV: HamiltonVolterraFunction, psi, x, full: bool = False,
                            cfg: DifferentiationConfig | None = None) -> np.ndarray:
    """Pullback residuals over ``{d/dq^a, d/dp^mu_a}`` (plus ``{d/dx^mu}`` when ``full``)."""
    jet = psi.jet(x, cfg)
    return _pullback_suite(psi.shape, omega_h(psi.shape, HV, jet.z, cfg), jet.J, full)


def _lifted(shape, HV, jet, cfg):
    """Jacobian of ``h`` at ``z`` and of ``psi = h o psi_tilde`` at ``x``."""
    g = HV.gradient(jet.z, cfg)
    Jh = np.vstack([np.eye(shape.dim_P), -g])
    return g, Jh, Jh @ jet.J


def _contracted_omega(shape, JM) -> AlternatingForm:
    push = MultiVector(shape.dim_M, shape.n, compound_matrix(JM, shape.n)[:, 0])
    return contract(push, omega_coordinate(shape))


def vortex_residual(HV: HamiltonVolterraFunction, psi, x,
                    cfg: DifferentiationConfig | None = None) -> np.ndarray:
    """``i_{psi_* gamma} omega`` on the frame ``h_* e_i`` of ``T im(h)``, length ``dim_P``."""
    shape = psi.shape
    jet = psi.jet(x, cfg)
    _, Jh, JM = _lifted(shape, HV, jet, cfg)
    return _contracted_omega(shape, JM).coeffs @ Jh


def dhdw_residual(HV: HamiltonVolterraFunction, psi, x,
                  cfg: DifferentiationConfig | None = None) -> AlternatingForm:
    """``i_{psi_* gamma} omega - (-1)^(n+1) dH`` at ``psi(x)`` with ``H = H_volterra + p``."""
    shape = psi.shape
    jet = psi.jet(x, cfg)
    g, _, JM = _lifted(shape, HV, jet, cfg)
    dH = AlternatingForm.covector(np.append(g, 1.0))
    return _contracted_omega(shape, JM) - (-1) ** (shape.n + 1) * dH


def _energy_from(shape, g, J, dpdx=None):
    n, N = shape.n, shape.N
    dq, dp = _split_jet(shape, J)
    gx = g[:n]
    gq = g[n:n + N]
    gp = g[n + N:].reshape(N, n)
    if dpdx is None:
        # p(x) = -H(psi(x)), differentiated by the chain rule
        dpdx = -(gx + gq @ dq + np.einsum("an,anm->m", gp, dp))
    E = np.array(dpdx, dtype=float) + gx
    for mu in range(n):
        for nu in range(n):
            if nu == mu:
                continue
            E[mu] += np.sum(dq[:, nu] * dp[:, nu, mu] - dq[:, mu] * dp[:, nu, nu])
    return E


def energy_residual(HV: HamiltonVolterraFunction, psi, x, p_of_x: Callable | None = None,
                    cfg: DifferentiationConfig | None = None) -> np.ndarray:
    """Energy-equation residuals ``E_mu``, length ``n``.

    Without ``p_of_x`` the fibre coordinate is ``p(x) = -H(psi(x))`` and its
    derivative comes from the chain rule; otherwise ``p_of_x`` is differenced.
    """
    jet = psi.jet(x, cfg)
    dpdx = None
    if p_of_x is not None:
        dpdx = partials(lambda y: float(p_of_x(y)), jet.x, cfg, getattr(psi, "domain", None))
    return _energy_from(psi.shape, HV.gradient(jet.z, cfg), jet.J, dpdx)


def suite_residuals(HV: HamiltonVolterraFunction, psi, x, suites=ALL_SUITES,
                    cfg: DifferentiationConfig | None = None) -> dict[str, np.ndarray]:
    """All requested residual vectors at one point, sharing a single jet."""
    shape = psi.shape
    jet = psi.jet(x, cfg)
    g, Jh, JM = _lifted(shape, HV, jet, cfg)
    out = {}
    w = None
    if "pullback_vertical" in suites or "pullback_full" in suites:
        w = omega_h(shape, HV, jet.z, cfg)
    beta = None
    if "vortex" in suites or "dhdw" in suites:
        beta = _contracted_omega(shape, JM)
    for name in suites:
        if name == "hv":
            R, S = _hv_from(shape, g, jet.J)
            out[name] = np.concatenate([R, S.ravel()])
        elif name == "pullback_vertical":
            out[name] = _pullback_suite(shape, w, jet.J, full=False)
        elif name == "pullback_full":
            out[name] = _pullback_suite(shape, w, jet.J, full=True)
        elif name == "vortex":
            out[name] = beta.coeffs @ Jh
        elif name == "dhdw":
            out[name] = beta.coeffs - (-1) ** (shape.n + 1) * np.append(g, 1.0)
        elif name == "energy":
            out[name] = _energy_from(shape, g, jet.J)
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out


def evaluate_suites(HV: HamiltonVolterraFunction, psi, points, suites=ALL_SUITES,
                    cfg: DifferentiationConfig | None = None, config: dict | None = None) -> ResidualReport:
    """Residual report over ``points`` (rows are base points)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = {name: np.empty(points.shape[0]) for name in suites}
    for i, x in enumerate(points):
        res = suite_residuals(HV, psi, x, suites, cfg)
        for name in suites:
            r = res[name]
            values[name][i] = float(np.max(np.abs(r))) if r.size else 0.0
    return ResidualReport(points, values, dict(config or {}), evaluations=points.shape[0])


def quadrature_rule(V: ChartedDomain, rule: str = "midpoint", cells: int = 64):
    """Tensor-product nodes and weights on the box ``V``."""
    nodes, weights = [], []
    for lo, hi in V.bounds:
        if rule == "midpoint":
            h = (hi - lo) / cells
            x = lo + h * (np.arange(cells) + 0.5)
            w = np.full(cells, h)
        elif rule == "trapezoid":
            h = (hi - lo) / cells
            x = lo + h * np.arange(cells + 1)
            w = np.full(cells + 1, h)
            w[[0, -1]] *= 0.5
        elif rule == "gauss":
            t, wt = np.polynomial.legendre.leggauss(cells)
            x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * wt
        else:
            raise ValueError(f"unknown quadrature {rule!r}")
        nodes.append(x)
        weights.append(w)
    X = np.stack([m.ravel() for m in np.meshgrid(*nodes, indexing="ij")], axis=-1)
    W = np.ones(X.shape[0])
    for m in np.meshgrid(*weights, indexing="ij"):
        W = W * m.ravel()
    return X, W


def _require_compact(psi, V: ChartedDomain):
    dom = getattr(psi, "domain", None)
    if dom is not None and not dom.compactly_contains(V):
        raise ValueError(f"integration box {V.bounds} is not compactly contained in {dom.bounds}")


def action_density(HV: HamiltonVolterraFunction, psi, x, cfg=None) -> float:
    """``(psi^* Theta_h)_x`` on the coordinate co-volume."""
    jet = psi.jet(x, cfg)
    return top_pairing(jet.J, theta_h(psi.shape, HV, jet.z))


def _batch_jets(psi, X, cfg):
    if hasattr(psi, "batch_jets"):
        return psi.batch_jets(X, cfg)
    n = psi.shape.n
    jets = [psi.jet(x, cfg) for x in X]
    return np.array([j.z[n:] for j in jets]), np.array([j.J[n:] for j in jets])


def _coordinate_density(HV, psi, X, cfg):
    """``-H + sum_{a,mu} p^mu_a dq^a/dx^mu`` at each row of ``X``."""
    shape = psi.shape
    n, N = shape.n, shape.N
    F, Jf = _batch_jets(psi, X, cfg)
    H = HV.values(np.hstack([X, F]))
    P = F[:, N:].reshape(-1, N, n)
    return -H + np.einsum("man,man->m", P, Jf[:, :N, :])


def action(HV: HamiltonVolterraFunction, psi, V: ChartedDomain, quadrature: str = "midpoint",
           cells: int = 64, cfg: DifferentiationConfig | None = None, method: str = "coordinates") -> float:
    """Localized action ``int_V psi^* Theta_h``.

    ``method="coordinates"`` integrates the pulled-back density written out in
    the adapted chart, vectorized over quadrature nodes; ``method="forms"``
    pulls ``Theta_h`` back node by node through the exterior algebra.
    """
    _require_compact(psi, V)
    X, W = quadrature_rule(V, quadrature, cells)
    if method == "forms":
        return float(sum(w * action_density(HV, psi, x, cfg) for x, w in zip(X, W)))
    if method != "coordinates":
        raise ValueError(f"unknown method {method!r}")
    return float(W @ _coordinate_density(HV, psi, X, cfg))


def _check_support(phi: Variation, V: ChartedDomain, rng: np.random.Generator, samples: int = 64):
    if not V.compactly_contains(phi.support):
        raise UnsupportedVariationError(f"support {phi.support.bounds} is not inside {V.bounds}")
    pts = V.sample(rng, samples)
    for x in pts:
        if not phi.support.contains(x) and np.any(phi.fibre(x) != 0):
            raise UnsupportedVariationError(f"variation is nonzero at {x}, outside its declared support")


def action_first_variation(HV: HamiltonVolterraFunction, psi: AnalyticSection, phi: Variation,
                           V: ChartedDomain, t_step: float = 1e-3, quadrature: str = "midpoint",
                           cells: int = 64, cfg: DifferentiationConfig | None = None,
                           method: str = "coordinates"):
    """First variation of the action along ``psi + t phi``, computed two ways.

    Returns ``(fd, analytic)``: a central difference in ``t`` of the action,
    and ``-int_V psi^*(i_xi omega_h)`` with ``xi`` the variation field.  In
    coordinates the second integrand is ``u^a R_a - v^mu_a S^mu_a``.
    """
    _require_compact(psi, V)
    _check_support(phi, V, np.random.default_rng(0))
    plus = action(HV, psi.plus(phi, t_step), V, quadrature, cells, cfg, method)
    minus = action(HV, psi.plus(phi, -t_step), V, quadrature, cells, cfg, method)
    fd = (plus - minus) / (2 * t_step)
    X, W = quadrature_rule(V, quadrature, cells)
    if method == "forms":
        total = 0.0
        for x, w in zip(X, W):
            xi = phi.vector(x)
            if not np.any(xi):
                continue
            jet = psi.jet(x, cfg)
            total += w * top_pairing(jet.J, interior(xi, omega_h(psi.shape, HV, jet.z, cfg)))
        return float(fd), float(-total)
    shape = psi.shape
    n, N = shape.n, shape.N
    U = phi.fibres(X)
    live = np.any(U != 0, axis=1)
    X, W, U = X[live], W[live], U[live]
    if not X.shape[0]:
        return float(fd), 0.0
    F, Jf = _batch_jets(psi, X, cfg)
    g = HV.gradients(np.hstack([X, F]), cfg)
    dq = Jf[:, :N, :]
    dp = Jf[:, N:, :].reshape(-1, N, n, n)
    R = np.trace(dp, axis1=2, axis2=3) + g[:, n:n + N]
    S = dq - g[:, n + N:].reshape(-1, N, n)
    integrand = np.einsum("ma,ma->m", U[:, :N], R) - np.einsum("man,man->m", U[:, N:].reshape(-1, N, n), S)
    return float(fd), float(-(W @ integrand))
