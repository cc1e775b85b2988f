"""Pointwise multilinear algebra of alternating forms and multivectors.

Components are stored densely over the strictly increasing multi-indices of
a given degree, enumerated in lexicographic order (``itertools.combinations``
order).  A form ``a`` of degree ``p`` on ``R^d`` is

    a = sum_I a_I dx^{i_1} ^ ... ^ dx^{i_p}

and a ``k``-vector ``X`` is ``sum_I X_I e_{i_1} ^ ... ^ e_{i_k}``.

Contraction puts the multivector into the *leading* slots of the form::

    contract(v_1 ^ ... ^ v_k, a)(w_1, ...) = a(v_1, ..., v_k, w_1, ...)

so ``contract(v1 ^ v2, a) == contract(v2, contract(v1, a))``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MultiIndex",
    "multi_indices",
    "index_of",
    "permutation_sign",
    "AlternatingForm",
    "MultiVector",
    "wedge",
    "contract",
    "interior",
    "flat",
    "flat_matrix",
    "is_k_horizontal",
    "compound_matrix",
    "zero_form",
]

MultiIndex = tuple[int, ...]


@lru_cache(maxsize=None)
def multi_indices(dim: int, degree: int) -> tuple[MultiIndex, ...]:
    """All strictly increasing index tuples of length ``degree`` in ``range(dim)``."""
    if degree < 0 or degree > dim:
        return ()
    return tuple(itertools.combinations(range(dim), degree))


@lru_cache(maxsize=None)
def _position_table(dim: int, degree: int) -> dict[MultiIndex, int]:
    return {I: n for n, I in enumerate(multi_indices(dim, degree))}


def index_of(I: Sequence[int], dim: int) -> int:
    """Flat slot of the sorted multi-index ``I``."""
    I = tuple(I)
    try:
        return _position_table(dim, len(I))[I]
    except KeyError:
        raise ValueError(f"{I} is not a strictly increasing multi-index below {dim}") from None


def permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


def _check_dim(*objs) -> int:
    dims = {o.dim for o in objs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


class _Graded:
    """Shared storage for forms and multivectors."""

    __slots__ = ("dim", "degree", "coeffs")

    def __init__(self, dim: int, degree: int, coeffs=None):
        if dim < 0:
            raise ValueError("dim must be non-negative")
        if not 0 <= degree <= dim:
            raise ValueError(f"degree {degree} outside [0, {dim}]")
        size = comb(dim, degree)
        if coeffs is None:
            coeffs = np.zeros(size)
        else:
            coeffs = np.array(coeffs, dtype=float).reshape(-1)
            if coeffs.shape != (size,):
                raise ValueError(f"expected {size} coefficients, got {coeffs.shape[0]}")
        self.dim = dim
        self.degree = degree
        self.coeffs = coeffs

    @classmethod
    def zero(cls, dim: int, degree: int):
        return cls(dim, degree)

    @classmethod
    def basis(cls, dim: int, I: Sequence[int]):
        """The basis element for an arbitrary (unsorted) index sequence, with sign."""
        I = tuple(I)
        out = cls(dim, len(I))
        sign = permutation_sign(I)
        if sign:
            out.coeffs[index_of(sorted(I), dim)] = sign
        return out

    @classmethod
    def from_dict(cls, dim: int, degree: int, entries: dict):
        """Build from ``{index tuple: value}``; unsorted tuples are reordered with sign."""
        out = cls(dim, degree)
        for I, v in entries.items():
            I = tuple(I)
            if len(I) != degree:
                raise ValueError(f"index {I} has wrong degree")
            s = permutation_sign(I)
            if s:
                out.coeffs[index_of(sorted(I), dim)] += s * v
        return out

    def __getitem__(self, I) -> float:
        if isinstance(I, int):
            I = (I,)
        I = tuple(I)
        s = permutation_sign(I)
        return 0.0 if s == 0 else s * float(self.coeffs[index_of(sorted(I), self.dim)])

    def items(self):
        return zip(multi_indices(self.dim, self.degree), self.coeffs)

    def to_dict(self, tol: float = 0.0) -> dict[MultiIndex, float]:
        return {I: float(c) for I, c in self.items() if abs(c) > tol}

    def _like(self, coeffs):
        return type(self)(self.dim, self.degree, coeffs)

    def _compatible(self, other):
        if type(other) is not type(self) or other.dim != self.dim or other.degree != self.degree:
            raise ValueError("operands differ in type, dimension or degree")

    def __add__(self, other):
        self._compatible(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._compatible(other)
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, scalar):
        return self._like(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self.coeffs / float(scalar))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def allclose(self, other, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        self._compatible(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))

    def __repr__(self) -> str:
        terms = ", ".join(f"{I}: {c:.6g}" for I, c in self.to_dict().items())
        return f"{type(self).__name__}(dim={self.dim}, degree={self.degree}, {{{terms}}})"


class AlternatingForm(_Graded):
    """A degree-``p`` alternating multilinear form on ``R^dim``."""

    __slots__ = ()

    @classmethod
    def scalar(cls, dim: int, value: float) -> "AlternatingForm":
        return cls(dim, 0, [value])

    @classmethod
    def covector(cls, components: Sequence[float]) -> "AlternatingForm":
        components = np.asarray(components, dtype=float)
        return cls(components.size, 1, components)

    @classmethod
    def volume(cls, dim: int, axes: Sequence[int]) -> "AlternatingForm":
        """``dx^{a_1} ^ ... ^ dx^{a_m}`` for the listed axes."""
        return cls.basis(dim, axes)

    def __call__(self, *vectors) -> float:
        """Evaluate on ``degree`` vectors of length ``dim``."""
        if len(vectors) != self.degree:
            raise ValueError(f"form of degree {self.degree} takes {self.degree} vectors")
        if self.degree == 0:
            return float(self.coeffs[0])
        V = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
        if V.shape[0] != self.dim:
            raise ValueError("vector dimension mismatch")
        return float(self.coeffs @ compound_matrix(V, self.degree)[:, 0])

    def pair(self, X: "MultiVector") -> float:
        """Full pairing ``<a, X>`` for a multivector of the same degree."""
        if X.dim != self.dim or X.degree != self.degree:
            raise ValueError("pairing needs equal dimension and degree")
        return float(self.coeffs @ X.coeffs)


class MultiVector(_Graded):
    """A degree-``k`` element of the exterior algebra of ``R^dim``."""

    __slots__ = ()

    @classmethod
    def vector(cls, v: Sequence[float]) -> "MultiVector":
        v = np.asarray(v, dtype=float)
        return cls(v.size, 1, v)

    @classmethod
    def decomposable(cls, vectors: Sequence[Sequence[float]], dim: int | None = None) -> "MultiVector":
        """``v_1 ^ ... ^ v_k``; its components are the k x k minors of ``[v_1 ... v_k]``."""
        if len(vectors) == 0:
            if dim is None:
                raise ValueError("dim is required for the empty wedge")
            return cls(dim, 0, [1.0])
        V = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
        return cls(V.shape[0], V.shape[1], compound_matrix(V, V.shape[1])[:, 0])


def compound_matrix(A: np.ndarray, p: int) -> np.ndarray:
    """The ``p``-th compound of ``A``: all ``p x p`` minors.

    Rows follow ``multi_indices(rows, p)`` and columns ``multi_indices(cols, p)``.
    ``compound_matrix(J, p)`` is the matrix of ``Lambda^p J`` acting on p-vectors.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    rows = multi_indices(m, p)
    cols = multi_indices(n, p)
    if p == 0:
        return np.ones((1, 1))
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    R = np.array(rows)
    out = np.empty((len(rows), len(cols)))
    for j, I in enumerate(cols):
        sub = A[:, I]
        out[:, j] = np.linalg.det(sub[R]) if p > 1 else sub[R[:, 0], 0]
    return out


@lru_cache(maxsize=None)
def _wedge_table(dim: int, p: int, q: int):
    rows_a, rows_b, rows_c, signs = [], [], [], []
    pos_c = _position_table(dim, p + q)
    for ia, I in enumerate(multi_indices(dim, p)):
        for ib, J in enumerate(multi_indices(dim, q)):
            s = permutation_sign(I + J)
            if s:
                rows_a.append(ia)
                rows_b.append(ib)
                rows_c.append(pos_c[tuple(sorted(I + J))])
                signs.append(s)
    return (np.array(rows_a, dtype=int), np.array(rows_b, dtype=int),
            np.array(rows_c, dtype=int), np.array(signs, dtype=float))


def wedge(a: AlternatingForm, b: AlternatingForm) -> AlternatingForm:
    """Exterior product.  Degrees summing past ``dim`` give the zero form of that degree."""
    dim = _check_dim(a, b)
    p, q = a.degree, b.degree
    if p + q > dim:
        return zero_form(dim, p + q)
    ia, ib, ic, s = _wedge_table(dim, p, q)
    out = np.zeros(comb(dim, p + q))
    np.add.at(out, ic, s * a.coeffs[ia] * b.coeffs[ib])
    return AlternatingForm(dim, p + q, out)


class _OverfullZero(AlternatingForm):
    """Zero form whose degree exceeds the ambient dimension (empty storage)."""

    __slots__ = ()

    def __init__(self, dim: int, degree: int):
        self.dim = dim
        self.degree = degree
        self.coeffs = np.zeros(0)


def zero_form(dim: int, degree: int) -> AlternatingForm:
    """The zero form of any degree, including degrees above ``dim``."""
    if degree > dim:
        return _OverfullZero(dim, degree)
    return AlternatingForm.zero(dim, degree)


@lru_cache(maxsize=None)
def _contract_table(dim: int, k: int, p: int):
    rows_x, rows_a, rows_c, signs = [], [], [], []
    pos_a = _position_table(dim, p)
    for ix, I in enumerate(multi_indices(dim, k)):
        for ic, K in enumerate(multi_indices(dim, p - k)):
            if any(i in I for i in K):
                continue
            J = I + K
            rows_x.append(ix)
            rows_a.append(pos_a[tuple(sorted(J))])
            rows_c.append(ic)
            signs.append(permutation_sign(J))
    return (np.array(rows_x, dtype=int), np.array(rows_a, dtype=int),
            np.array(rows_c, dtype=int), np.array(signs, dtype=float))


def contract(X: MultiVector, a: AlternatingForm) -> AlternatingForm:
    """Insert ``X`` into the leading slots of ``a``; result has degree ``p - k``."""
    dim = _check_dim(X, a)
    k, p = X.degree, a.degree
    if k > p:
        raise ValueError(f"cannot contract a {k}-vector into a {p}-form")
    ix, ia, ic, s = _contract_table(dim, k, p)
    out = np.zeros(comb(dim, p - k))
    np.add.at(out, ic, s * X.coeffs[ix] * a.coeffs[ia])
    return AlternatingForm(dim, p - k, out)


def interior(v: Sequence[float], a: AlternatingForm) -> AlternatingForm:
    """Interior product with a single vector."""
    return contract(MultiVector.vector(v), a)


def flat(omega: AlternatingForm, v: Sequence[float]) -> AlternatingForm:
    """``omega^flat(v) = i_v omega``."""
    return interior(v, omega)


def flat_matrix(omega: AlternatingForm) -> np.ndarray:
    """Matrix of ``v -> i_v omega``; column ``i`` holds ``flat(omega, e_i).coeffs``."""
    if omega.degree < 1:
        raise ValueError("flat needs a form of degree >= 1")
    eye = np.eye(omega.dim)
    return np.column_stack([flat(omega, eye[i]).coeffs for i in range(omega.dim)])


def is_k_horizontal(
    eta: AlternatingForm,
    vertical_basis: Iterable[Sequence[float]],
    k: int,
    atol: float = 0.0,
) -> bool:
    """True iff every k-fold contraction of ``eta`` with vertical vectors vanishes.

    Checking distinct basis vectors suffices by multilinearity and antisymmetry.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    basis = [np.asarray(u, dtype=float) for u in vertical_basis]
    if k > eta.degree:
        return True
    for combo in itertools.combinations(basis, k):
        X = MultiVector.decomposable(combo)
        if contract(X, eta).norm_inf() > atol:
            return False
    return True
