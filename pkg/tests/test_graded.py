import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fankoszul import graded as gr
from fankoszul import linalg as la
from fankoszul.errors import CutoffTooSmall
from fankoszul.graded import (
    AlgebraCache,
    FreeModuleShape,
    GradedMap,
    canonical_free_module,
    certify_free,
    free_cover,
    graded_dual,
    kernel_degreewise,
    minimal_generators,
    quotient_module,
    shift_module,
)
from fankoszul.linalg import qq


@pytest.fixture(scope="module")
def alg1(fx1):
    return AlgebraCache(fx1)


def test_algebra_piece_dims(alg1):
    a = alg1.algebra((0, 1))
    assert [a.piece_dim(k) for k in (0, 2, 4, 6)] == [1, 2, 3, 4]
    assert a.piece_dim(3) == 0
    o = alg1.algebra(())
    assert o.piece_dim(0) == 1 and o.piece_dim(2) == 0


def test_restriction_matrix(alg1):
    a = alg1.algebra((0, 1))
    m = a.restriction_matrix((0,), 2)
    # x restricts to the axis coordinate, y to zero
    assert la.shape(m) == (1, 2)
    assert sorted(x for row in m for x in row) == [qq(0), qq(1)]


def test_canonical_free_module(alg1):
    a = alg1.algebra((0, 1))
    shape = FreeModuleShape.of([-1])
    m = canonical_free_module(a, shape, -8, 8)
    assert m.dim(-1) == 1 and m.dim(1) == 2 and m.dim(3) == 3
    assert m.check_commuting_actions()
    got, gens = minimal_generators(m)
    assert got == shape
    assert certify_free(m) == shape


def test_minimal_generators_of_free_sum(alg1):
    a = alg1.algebra((0, 1))
    shape = FreeModuleShape.of([0, 2])
    m = canonical_free_module(a, shape, -8, 8)
    got, _ = minimal_generators(m)
    assert got == shape


def test_kernel_is_principal_ideal(alg1, fx1):
    a2 = alg1.algebra((0, 1))
    a1 = alg1.algebra((0,))
    src = canonical_free_module(a2, FreeModuleShape.of([0]), -8, 8)
    dst_free = canonical_free_module(a1, FreeModuleShape.of([0]), -8, 8)
    f = GradedMap(src, dst_free, 0)
    for k in range(-8, 9):
        if src.dim(k):
            f.set_mat(k, a2.restriction_matrix((0,), k))
    ker, embed = kernel_degreewise(f)
    assert [ker.dim(k) for k in (0, 2, 4, 6)] == [0, 1, 2, 3]
    # embedding lands in the kernel
    for k in (2, 4, 6):
        for col in la.columns(embed.mat(k)):
            assert all(x == 0 for x in f.apply(k, col))


def test_quotient_by_ideal(alg1):
    a2 = alg1.algebra((0, 1))
    m = canonical_free_module(a2, FreeModuleShape.of([0]), -8, 8)
    # span of y-divisible monomials in each degree
    sub = {}
    for k in (2, 4, 6, 8):
        sub[k] = []
        basis = a2.monomial_basis(k)
        for i, mono in enumerate(basis):
            if mono[1] > 0:
                sub[k].append(la.e_vector(len(basis), i))
    q, proj = quotient_module(m, sub)
    assert [q.dim(k) for k in (0, 2, 4, 6)] == [1, 1, 1, 1]
    assert proj.is_surjective_degreewise()


def test_graded_dual_involution(alg1):
    a = alg1.algebra((0, 1))
    m = canonical_free_module(a, FreeModuleShape.of([-1, 2]), -6, 6)
    d = graded_dual(m)
    assert d.dim(1) == m.dim(-1)
    dd = graded_dual(d)
    assert dd.dims == m.dims
    for key, mat in m.actions.items():
        assert dd.actions[key] == mat


def test_dual_of_polynomial_ring(alg1):
    a = alg1.algebra((0,))
    m = canonical_free_module(a, FreeModuleShape.of([0]), -6, 6)
    d = graded_dual(m)
    assert [d.dim(k) for k in (0, -2, -4)] == [1, 1, 1]
    assert d.dim(2) == 0


def test_shift_module(alg1):
    a = alg1.algebra((0,))
    m = canonical_free_module(a, FreeModuleShape.of([0]), -6, 6)
    s = shift_module(m, 2)
    assert s.dim(-2) == 1 and s.dim(0) == 1 and s.dim(-4) == 0


def test_free_cover_roundtrip(alg1):
    a = alg1.algebra((0, 1))
    m = canonical_free_module(a, FreeModuleShape.of([0, 2]), -8, 8)
    shape, cover, f = free_cover(m)
    assert shape == FreeModuleShape.of([0, 2])
    assert f.is_surjective_degreewise()
    assert f.is_injective_degreewise()


def test_cutoff_too_small(alg1):
    a = alg1.algebra((0, 1))
    # a module whose generator sits right at the top of the window
    m = canonical_free_module(a, FreeModuleShape.of([4]), -4, 5)
    with pytest.raises(CutoffTooSmall):
        minimal_generators(m)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=-3, max_value=3), min_size=1, max_size=4))
def test_hilbert_certification_random_shapes(degrees):
    from fankoszul.fan import Fan

    fan = Fan(2, [[1, 0], [0, 1]], [[0, 1]])
    a = AlgebraCache(fan).algebra((0, 1))
    shape = FreeModuleShape.of(degrees)
    m = canonical_free_module(a, shape, min(degrees) - 1, max(degrees) + 7)
    assert certify_free(m) == shape
    for k in m.degrees():
        assert m.dim(k) == shape.hilbert(2, k)
