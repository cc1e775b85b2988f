from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multisym.algebra import (
    AlternatingForm,
    MultiVector,
    compound_matrix,
    contract,
    flat,
    interior,
    is_k_horizontal,
    multi_indices,
    permutation_sign,
    wedge,
)
from multisym.bundle import BundleShape, hat_volume, liouville_form, omega_coordinate, volume_form


def dx(dim, i):
    e = np.zeros(dim)
    e[i] = 1.0
    return AlternatingForm.covector(e)


def random_form(rng, dim, p):
    return AlternatingForm(dim, p, rng.normal(size=comb(dim, p)))


def random_multivector(rng, dim, k):
    return MultiVector(dim, k, rng.normal(size=comb(dim, k)))


@st.composite
def form_case(draw):
    dim = draw(st.integers(2, 6))
    p = draw(st.integers(1, dim))
    seed = draw(st.integers(0, 2**32 - 1))
    return dim, p, np.random.default_rng(seed)


def test_multi_index_enumeration_is_lexicographic():
    for d in range(1, 7):
        for p in range(d + 1):
            idx = multi_indices(d, p)
            assert len(idx) == comb(d, p)
            assert list(idx) == sorted(idx)
            assert all(all(a < b for a, b in zip(I, I[1:])) for I in idx)


def test_wedge_basic_examples():
    assert wedge(dx(3, 0), dx(3, 0)).norm_inf() == 0.0
    assert wedge(dx(3, 0), dx(3, 1)).allclose(-wedge(dx(3, 1), dx(3, 0)), atol=0)
    # basis (x1, x2, q, p1, p2): dq ^ dx2 has coefficient -1 on (x2, q)
    assert wedge(dx(5, 2), dx(5, 1))[(1, 2)] == -1.0


def test_wedge_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        wedge(dx(3, 0), dx(4, 0))


def test_overfull_wedge_is_zero():
    a = AlternatingForm.volume(3, (0, 1))
    out = wedge(a, a)
    assert out.degree == 4 and out.norm_inf() == 0.0


@given(form_case())
def test_graded_commutativity_and_associativity(case):
    dim, _, rng = case
    p, q, r = rng.integers(0, 3, size=3)
    if p + q + r > dim:
        return
    a, b, c = random_form(rng, dim, p), random_form(rng, dim, q), random_form(rng, dim, r)
    assert wedge(a, b).allclose((-1) ** (p * q) * wedge(b, a), atol=1e-12)
    assert wedge(wedge(a, b), c).allclose(wedge(a, wedge(b, c)), atol=1e-11)


@given(form_case())
def test_antisymmetry_of_evaluation(case):
    dim, p, rng = case
    if p < 2:
        return
    a = random_form(rng, dim, p)
    vs = list(rng.normal(size=(p, dim)))
    i, j = sorted(rng.choice(p, size=2, replace=False))
    swapped = vs.copy()
    swapped[i], swapped[j] = vs[j], vs[i]
    assert a(*swapped) == pytest.approx(-a(*vs), rel=1e-12, abs=1e-12)


def test_evaluation_on_basis_tuple_returns_coefficient(rng):
    a = random_form(rng, 5, 3)
    eye = np.eye(5)
    for I in multi_indices(5, 3):
        assert a(*[eye[i] for i in I]) == pytest.approx(a[I], abs=1e-15)


def test_contract_examples():
    vol2 = AlternatingForm.volume(2, (0, 1))
    assert contract(MultiVector.vector([1, 0]), vol2).allclose(dx(2, 1), atol=0)
    vol3 = AlternatingForm.volume(3, (0, 1, 2))
    e12 = MultiVector.decomposable([[1, 0, 0], [0, 1, 0]])
    assert contract(e12, vol3).allclose(dx(3, 2), atol=0)
    with pytest.raises(ValueError):
        contract(MultiVector.decomposable(np.eye(3)), AlternatingForm.volume(3, (0, 1)))


def test_contract_basis_vector_with_volume_gives_hat_volume():
    for n in (1, 2, 3):
        shape = BundleShape(n, 1)
        dim = shape.dim_M
        vol = volume_form(shape, dim)
        eye = np.eye(dim)
        for mu in range(n):
            assert contract(MultiVector.vector(eye[mu]), vol).allclose(hat_volume(shape, mu, dim), atol=0)


@given(form_case())
def test_contraction_order_law(case):
    dim, p, rng = case
    if p < 2:
        return
    a = random_form(rng, dim, p)
    v1, v2 = rng.normal(size=(2, dim))
    lhs = contract(MultiVector.decomposable([v1, v2]), a)
    rhs = contract(MultiVector.vector(v2), contract(MultiVector.vector(v1), a))
    assert lhs.allclose(rhs, atol=1e-11)


@given(form_case())
def test_contraction_matches_evaluation(case):
    dim, p, rng = case
    k = int(rng.integers(1, p + 1))
    a = random_form(rng, dim, p)
    vs = rng.normal(size=(p, dim))
    left = contract(MultiVector.decomposable(vs[:k]), a)
    rest = vs[k:]
    assert left(*rest) == pytest.approx(a(*vs), rel=1e-10, abs=1e-10)


@given(form_case())
def test_leibniz_rule(case):
    dim, _, rng = case
    p = int(rng.integers(1, dim))
    q = int(rng.integers(0, dim - p + 1))
    a, b = random_form(rng, dim, p), random_form(rng, dim, q)
    v = rng.normal(size=dim)
    lhs = interior(v, wedge(a, b))
    rhs = wedge(interior(v, a), b)
    if q > 0:  # the interior product of a function is zero
        rhs = rhs + (-1) ** p * wedge(a, interior(v, b))
    assert lhs.allclose(rhs, atol=1e-11)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_decomposable_coefficients_are_minors(dim, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, dim + 1))
    V = rng.normal(size=(dim, k))
    X = MultiVector.decomposable(list(V.T))
    for j, I in enumerate(multi_indices(dim, k)):
        assert X.coeffs[j] == pytest.approx(np.linalg.det(V[list(I), :]), abs=1e-12)


def test_cauchy_binet_for_compounds(rng):
    A, B = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    for p in range(4):
        assert np.allclose(compound_matrix(A @ B, p), compound_matrix(A, p) @ compound_matrix(B, p))


def test_permutation_sign():
    assert permutation_sign((0, 1, 2)) == 1
    assert permutation_sign((1, 0, 2)) == -1
    assert permutation_sign((2, 0, 1)) == 1
    assert permutation_sign((0, 0)) == 0


def test_flat_examples():
    symp = AlternatingForm.volume(2, (0, 1))  # dq ^ dp with coordinates (q, p)
    assert flat(symp, [1, 0]).allclose(dx(2, 1), atol=0)
    assert flat(symp, [0, 0]).norm_inf() == 0.0
    for n, N in [(1, 1), (2, 1), (2, 2), (3, 2)]:
        shape = BundleShape(n, N)
        e = np.zeros(shape.dim_M)
        e[shape.fibre_slot] = 1.0
        assert flat(omega_coordinate(shape), e).allclose(-volume_form(shape, shape.dim_M), atol=0)


def test_is_k_horizontal_examples(rng):
    for n, N in [(1, 1), (2, 1), (2, 2), (3, 2)]:
        shape = BundleShape(n, N)
        eta = rng.normal(size=shape.dim_M)
        theta = liouville_form(shape, eta)
        assert is_k_horizontal(theta, shape.vertical_basis("M"), 2)
        assert not is_k_horizontal(theta, shape.vertical_basis("M"), 1)
        zero = AlternatingForm.zero(shape.dim_M, n)
        assert is_k_horizontal(zero, shape.vertical_basis("M"), 1)
    # dq1 ^ dq2 ^ d^{n-2}x-hat with n = 2: coordinates (x1, x2, q1, q2, ...)
    shape = BundleShape(2, 2)
    d = shape.dim_M
    form = wedge(dx(d, shape.q_slot(0)), dx(d, shape.q_slot(1)))
    assert not is_k_horizontal(form, shape.vertical_basis("M"), 2)
    with pytest.raises(ValueError):
        is_k_horizontal(form, shape.vertical_basis("M"), 0)


def test_interior_is_linear(rng):
    a = random_form(rng, 5, 3)
    u, v = rng.normal(size=(2, 5))
    assert interior(2 * u - 3 * v, a).allclose(2 * interior(u, a) - 3 * interior(v, a), atol=1e-12)
