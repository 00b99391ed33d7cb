"""Multivariate polynomials with rational coefficients, graded evenly.

A monomial is an exponent tuple; linear forms sit in degree 2, so the
monomials of internal degree 2m are the exponent tuples summing to m.
Polynomials are dicts monomial -> coefficient with zero entries dropped.
"""

from __future__ import annotations

from functools import lru_cache

from .linalg import Q0, Q1, qq, zeros


@lru_cache(maxsize=None)
def monomials(nvars: int, total: int):
    """All exponent tuples of the given total, in a fixed deterministic order
    (lexicographically decreasing)."""
    if total < 0:
        return ()
    if nvars == 0:
        return ((),) if total == 0 else ()
    out = []
    for first in range(total, -1, -1):
        for rest in monomials(nvars - 1, total - first):
            out.append((first,) + rest)
    return tuple(out)


@lru_cache(maxsize=None)
def monomial_index(nvars: int, total: int):
    return {m: i for i, m in enumerate(monomials(nvars, total))}


def piece_dim(nvars: int, degree: int) -> int:
    """Dimension of the degree piece of a polynomial ring on nvars variables
    with generators in degree 2."""
    if degree < 0 or degree % 2 != 0:
        return 0
    return len(monomials(nvars, degree // 2))


def poly_zero():
    return {}


def poly_const(c):
    c = qq(c) * Q1
    return {(): c} if c else {}


def poly_var(nvars: int, i: int):
    e = [0] * nvars
    e[i] = 1
    return {tuple(e): Q1}


def poly_add(p, q):
    out = dict(p)
    for m, c in q.items():
        s = out.get(m, Q0) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def poly_scale(p, c):
    if not c:
        return {}
    return {m: c * x for m, x in p.items()}


def poly_mul(p, q):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(a + b for a, b in zip(m1, m2)) if m1 else m2
            if not m1 and not m2:
                m = ()
            s = out.get(m, Q0) + c1 * c2
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def poly_degree(p) -> int | None:
    """Internal degree if homogeneous, None for the zero polynomial."""
    degs = {2 * sum(m) for m in p}
    if not degs:
        return None
    if len(degs) != 1:
        raise ValueError("inhomogeneous polynomial")
    return degs.pop()


def poly_from_linear(coeffs):
    """Linear form (degree 2) with the given variable coefficients."""
    out = {}
    n = len(coeffs)
    for i, c in enumerate(coeffs):
        if c:
            e = [0] * n
            e[i] = 1
            out[tuple(e)] = qq(c) * Q1
    return out


def monomial_to_poly(mono):
    return {mono: Q1}


def substitute_linear(p, forms, nvars_out: int):
    """Substitute variable i by the linear form forms[i] (a poly in the output
    variables).  Preserves degree since linear forms map to linear forms."""
    out = {}
    for mono, c in p.items():
        term = {(): c} if nvars_out >= 0 else {}
        term = {((0,) * nvars_out): c}
        for i, e in enumerate(mono):
            for _ in range(e):
                term = poly_mul(term, forms[i])
        out = poly_add(out, term)
    return out


def poly_to_vector(p, nvars: int, degree: int):
    """Coordinates of a homogeneous polynomial in the monomial basis."""
    if degree % 2 != 0 or degree < 0:
        if p:
            raise ValueError("degree mismatch")
        return []
    idx = monomial_index(nvars, degree // 2)
    v = [Q0] * len(idx)
    for m, c in p.items():
        v[idx[m]] = c
    return v


def vector_to_poly(v, nvars: int, degree: int):
    ms = monomials(nvars, degree // 2)
    return {m: c for m, c in zip(ms, v) if c}


def multiplication_matrix(p, nvars: int, src_degree: int):
    """Matrix of multiplication by homogeneous p from the src_degree piece to
    the (src_degree + deg p) piece."""
    pdeg = poly_degree(p)
    if pdeg is None:
        dst = src_degree
        return zeros(piece_dim(nvars, src_degree), piece_dim(nvars, src_degree))
    dst_degree = src_degree + pdeg
    src = monomials(nvars, src_degree // 2) if src_degree % 2 == 0 and src_degree >= 0 else ()
    dst_idx = monomial_index(nvars, dst_degree // 2) if dst_degree % 2 == 0 and dst_degree >= 0 else {}
    out = zeros(len(dst_idx), len(src))
    for j, m in enumerate(src):
        for pm, c in p.items():
            prod = tuple(a + b for a, b in zip(pm, m)) if m else pm
            out[dst_idx[prod]][j] += c
    return out
