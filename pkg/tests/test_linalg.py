from hypothesis import given, settings
from hypothesis import strategies as st

from fankoszul import linalg as la
from fankoszul.linalg import qq


def test_rref_and_rank():
    m = [[qq(1), qq(2)], [qq(2), qq(4)]]
    red, pivots = la.rref(m)
    assert pivots == [0]
    assert la.rank(m) == 1


def test_kernel_basis():
    m = [[qq(1), qq(1), qq(0)], [qq(0), qq(0), qq(1)]]
    ker = la.kernel_basis(m)
    assert len(ker) == 1
    v = ker[0]
    assert la.mat_vec(m, v) == [qq(0), qq(0)]


def test_solve_consistency():
    m = [[qq(2), qq(0)], [qq(0), qq(3)]]
    assert la.solve(m, [qq(4), qq(9)]) == [qq(2), qq(3)]
    assert la.solve([[qq(1)], [qq(1)]], [qq(1), qq(2)]) is None


def test_inverse():
    m = [[qq(1), qq(2)], [qq(3), qq(5)]]
    inv = la.inverse(m)
    assert la.mat_mul(m, inv) == la.identity(2)


def test_zero_column_matrices():
    assert la.kernel_basis([[qq(0)] * 0 for _ in range(3)]) == []
    assert la.solve([[], [], []], [qq(0)] * 3) == []


small_q = st.integers(min_value=-6, max_value=6).map(qq)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(small_q, min_size=3, max_size=3), min_size=2, max_size=4))
def test_rank_nullity(rows):
    r = la.rank(rows)
    ker = la.kernel_basis(rows)
    assert r + len(ker) == 3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(small_q, min_size=2, max_size=2), min_size=2, max_size=2))
def test_solve_roundtrip(m):
    if la.rank(m) == 2:
        b = [qq(5), qq(-7)]
        x = la.solve(m, b)
        assert la.mat_vec(m, x) == b
