"""Numeric candidate sections: RK4 for one-dimensional sources, SOR for the Laplace problem."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bundle import BundleShape, HamiltonVolterraFunction
from .calculus import ChartedDomain
from .equations import DiscreteSection

__all__ = ["solve_ode", "solve_laplace", "LaplaceConvergenceError", "LaplaceStats", "discrete_laplacian"]


def solve_ode(HV: HamiltonVolterraFunction, q0, p0, interval, step: float) -> DiscreteSection:
    """Classical RK4 for ``dq/dx = dH/dp``, ``dp/dx = -dH/dq`` on ``interval``.

    The step is shrunk so that it divides the interval exactly.  Increments
    are accumulated with compensated summation so that roundoff stays below
    the truncation error down to steps of about ``1e-4``.
    """
    shape = HV.shape
    if shape.n != 1:
        raise ValueError("solve_ode needs a one-dimensional source (n = 1)")
    if not step > 0:
        raise ValueError("step must be positive")
    a, b = (interval.bounds[0] if isinstance(interval, ChartedDomain) else interval)
    N = shape.N
    m = max(4, int(np.ceil((b - a) / step - 1e-9)))
    h = (b - a) / m
    xs = a + h * np.arange(m + 1)
    xs[-1] = b

    def rhs(x, y):
        g = HV.gradient(np.concatenate([[x], y]))
        return np.concatenate([g[1 + N:], -g[1:1 + N]])

    Y = np.empty((m + 1, 2 * N))
    Y[0, :N] = np.reshape(q0, N)
    Y[0, N:] = np.reshape(p0, N)
    carry = np.zeros(2 * N)
    for i in range(m):
        x, y = xs[i], Y[i]
        k1 = rhs(x, y)
        k2 = rhs(x + h / 2, y + h / 2 * k1)
        k3 = rhs(x + h / 2, y + h / 2 * k2)
        k4 = rhs(x + h, y + h * k3)
        inc = h / 6 * (k1 + 2 * k2 + 2 * k3 + k4) - carry
        Y[i + 1] = y + inc
        carry = (Y[i + 1] - y) - inc
    return DiscreteSection(shape, [xs], Y[:, :N].T, Y[:, N:].T.reshape(N, 1, m + 1),
                           name=f"rk4 h={h:.3g}")


class LaplaceConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class LaplaceStats:
    iterations: int
    residual: float
    tol: float = 0.0
    history: list[float] = field(default_factory=list)


def discrete_laplacian(q: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """5-point Laplacian at interior nodes."""
    return ((q[2:, 1:-1] - 2 * q[1:-1, 1:-1] + q[:-2, 1:-1]) / hx ** 2
            + (q[1:-1, 2:] - 2 * q[1:-1, 1:-1] + q[1:-1, :-2]) / hy ** 2)


def solve_laplace(boundary: Callable, domain: ChartedDomain, grid: int | tuple[int, int] = 65,
                  omega: float | None = 1.9, tol: float = 1e-10, max_iter: int = 50000,
                  check_every: int = 10, stats: list | None = None, dtype=np.float64) -> DiscreteSection:
    """Red-black SOR for ``q_11 + q_22 = 0`` with Dirichlet data ``boundary(x)``.

    Iterates until the max 5-point Laplacian residual is below ``tol``; the
    momenta are then ``p^mu = dq/dx^mu`` by second-order differences.
    ``omega=None`` uses the optimal factor for the square grid.  If the
    residual stalls above ``tol`` but within ``64 eps max|q| (2/hx^2 + 2/hy^2)``
    of zero (the roundoff floor, reached at 129^2 in float64), iteration stops
    there and the stall level is reported as the tolerance met;
    ``dtype=np.longdouble`` runs the sweeps in extended precision and lowers
    the floor.  ``stats``, when a list, receives a
    :class:`LaplaceStats` with the tolerance actually used.
    """
    if domain.dim != 2:
        raise ValueError("solve_laplace needs a two-dimensional source")
    nx, ny = (grid, grid) if np.isscalar(grid) else grid
    if omega is None:
        omega = 2 / (1 + np.sin(np.pi / (max(nx, ny) - 1)))
    if not 0 < omega < 2:
        raise ValueError("relaxation factor must lie in (0, 2)")
    (ax, bx), (ay, by) = domain.bounds
    xs = np.linspace(ax, bx, nx)
    ys = np.linspace(ay, by, ny)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    q = np.zeros((nx, ny), dtype=dtype)
    for sl in ((0, slice(None)), (-1, slice(None)), (slice(None), 0), (slice(None), -1)):
        q[sl] = [boundary(np.array([x, y])) for x, y in zip(X[sl], Y[sl])]

    cx, cy = dtype(1) / dtype(hx) ** 2, dtype(1) / dtype(hy) ** 2
    diag = 2 * (cx + cy)
    floor = 64 * float(np.finfo(dtype).eps) * float(np.max(np.abs(q))) * float(diag)
    I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    colors = [((I + J) % 2 == c) for c in (0, 1)]
    inner = (slice(1, -1), slice(1, -1))

    history: list[float] = []
    res = float(np.max(np.abs(discrete_laplacian(q, hx, hy)))) if nx > 2 and ny > 2 else 0.0
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise LaplaceConvergenceError(
                f"SOR did not reach {tol:g} in {max_iter} sweeps (last residual {res:.3g})", history)
        for mask in colors:
            gs = (cx * (q[2:, 1:-1] + q[:-2, 1:-1]) + cy * (q[1:-1, 2:] + q[1:-1, :-2])) / diag
            view = q[inner]
            view[mask] += omega * (gs[mask] - view[mask])
        it += 1
        if it % check_every == 0:
            res = float(np.max(np.abs(discrete_laplacian(q, hx, hy))))
            history.append(res)
            if not np.isfinite(res):
                raise LaplaceConvergenceError("SOR diverged", history)
            if res < floor and len(history) > 20 and res > 0.9 * min(history[-21:-1]):
                tol = res
                break
    if stats is not None:
        stats.append(LaplaceStats(it, res, history=history, tol=tol))
    q = q.astype(float)
    p1 = np.gradient(q, hx, axis=0, edge_order=2)
    p2 = np.gradient(q, hy, axis=1, edge_order=2)
    shape = BundleShape(2, 1)
    return DiscreteSection(shape, [xs, ys], q[None], np.stack([p1, p2])[None],
                           name=f"laplace {nx}x{ny}")
