"""Build Hamilton-Volterra functions and sections from expression text."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .bundle import BundleShape, HamiltonVolterraFunction
from .calculus import ChartedDomain
from .equations import AnalyticSection
from .expr import (
    compile_batch,
    compile_function,
    compile_gradient,
    compile_gradient_batch,
    parse_expression,
    to_text,
)

__all__ = ["volterra_from_text", "section_from_text", "base_names"]


def base_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def volterra_from_text(shape: BundleShape, text: str, name: str = "") -> HamiltonVolterraFunction:
    """``H`` over the P(pi) coordinates with a symbolic gradient."""
    names = shape.names_P
    tree = parse_expression(text, names)
    return HamiltonVolterraFunction(shape, compile_function(tree, names), compile_gradient(tree, names),
                                    name=name or to_text(tree), batch_value=compile_batch(tree, names),
                                    batch_grad=compile_gradient_batch(tree, names))


def section_from_text(shape: BundleShape, q: Sequence[str], pmom: Sequence[Sequence[str]],
                      domain: ChartedDomain | None = None, name: str = "") -> AnalyticSection:
    """Analytic section from ``N`` texts for ``q^a`` and ``N x n`` texts for ``p^mu_a`` in ``x1..xn``."""
    n, N = shape.n, shape.N
    if len(q) != N or len(pmom) != N or any(len(row) != n for row in pmom):
        raise ValueError(f"need {N} q-expressions and {N}x{n} momentum expressions")
    names = base_names(n)
    texts = list(q) + [t for row in pmom for t in row]
    trees = [parse_expression(t, names) for t in texts]
    funcs = [compile_function(t, names) for t in trees]
    grads = [compile_gradient(t, names) for t in trees]

    def fibre(x):
        return np.array([f(x) for f in funcs])

    def fibre_jac(x):
        return np.array([g(x) for g in grads])

    batch_f = [compile_batch(t, names) for t in trees]
    batch_g = [compile_gradient_batch(t, names) for t in trees]

    def batch(X):
        return (np.stack([f(X) for f in batch_f], axis=-1),
                np.stack([g(X) for g in batch_g], axis=1))

    return AnalyticSection.from_fibre(shape, fibre, fibre_jac, domain,
                                      name or ", ".join(to_text(t) for t in trees), batch=batch)
