"""Dense exact linear algebra over the rationals.

Matrices are lists of row lists; vectors are plain lists.  Scalars are
gmpy2.mpq when available (Fraction otherwise), so every rank, kernel and
solve below is exact.  Maps act on column vectors from the left: a matrix
with r rows and c cols is a map from a c-dimensional space to an
r-dimensional one.
"""

from __future__ import annotations

try:
    from gmpy2 import mpq as _mpq

    def qq(x=0, y=1):
        return _mpq(x, y)

except ImportError:  # pragma: no cover
    from fractions import Fraction as _Fraction

    def qq(x=0, y=1):
        return _Fraction(x, y)


Q0 = qq(0)
Q1 = qq(1)


def qq_str(x) -> str:
    """Render a rational as "p/q" (or "p" when integral)."""
    return str(x)


def parse_qq(s: str):
    if "/" in s:
        p, q = s.split("/")
        return qq(int(p), int(q))
    return qq(int(s))


def zeros(rows: int, cols: int):
    return [[Q0] * cols for _ in range(rows)]


def identity(n: int):
    m = zeros(n, n)
    for i in range(n):
        m[i][i] = Q1
    return m


def copy_matrix(m):
    return [row[:] for row in m]


def shape(m):
    return (len(m), len(m[0]) if m else 0)


def transpose(m):
    if not m:
        return []
    return [list(col) for col in zip(*m)]


def mat_mul(a, b):
    ra, ca = len(a), len(a[0]) if a else 0
    rb, cb = len(b), len(b[0]) if b else 0
    if ca != rb:
        # matrices with an empty dimension lose their other extent; any
        # product through a zero space is the zero map
        if ra == 0 or ca == 0 or rb == 0 or cb == 0:
            return zeros(ra, cb)
        raise ValueError(f"shape mismatch {ra}x{ca} @ {rb}x{cb}")
    out = zeros(ra, cb)
    for i in range(ra):
        arow = a[i]
        orow = out[i]
        for k in range(ca):
            x = arow[k]
            if x:
                brow = b[k]
                for j in range(cb):
                    if brow[j]:
                        orow[j] += x * brow[j]
    return out


def mat_vec(m, v):
    rows, cols = shape(m)
    if cols != len(v):
        if rows == 0 or cols == 0 or len(v) == 0:
            return [Q0] * rows
        raise ValueError("shape mismatch in mat_vec")
    out = [Q0] * rows
    for i in range(rows):
        row = m[i]
        s = Q0
        for j, x in enumerate(v):
            if x and row[j]:
                s += row[j] * x
        out[i] = s
    return out


def mat_add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_sub(a, b):
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_scale(a, c):
    return [[c * x for x in row] for row in a]


def mat_neg(a):
    return [[-x for x in row] for row in a]


def hstack(mats):
    mats = [m for m in mats if shape(m)[1] > 0 or shape(m)[0] > 0]
    if not mats:
        return []
    rows = len(mats[0])
    out = []
    for i in range(rows):
        row = []
        for m in mats:
            row.extend(m[i])
        out.append(row)
    return out


def vstack(mats):
    out = []
    for m in mats:
        out.extend(copy_matrix(m))
    return out


def is_zero_matrix(m) -> bool:
    return all(not x for row in m for x in row)


def rref(m):
    """Row-reduce a copy of m.  Returns (reduced matrix, pivot column list)."""
    a = copy_matrix(m)
    rows, cols = shape(a)
    pivots = []
    r = 0
    for c in range(cols):
        pivot = next((i for i in range(r, rows) if a[i][c]), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        inv = Q1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(rows):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return a, pivots


def rank(m) -> int:
    if not m or not m[0]:
        return 0
    return len(rref(m)[1])


def kernel_basis(m):
    """Basis of the right kernel {v : m v = 0}, as a list of vectors."""
    rows, cols = shape(m)
    if cols == 0:
        return []
    if rows == 0:
        return [e_vector(cols, j) for j in range(cols)]
    red, pivots = rref(m)
    free = [j for j in range(cols) if j not in pivots]
    basis = []
    for j in free:
        v = [Q0] * cols
        v[j] = Q1
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][j]
        basis.append(v)
    return basis


def e_vector(n: int, i: int):
    v = [Q0] * n
    v[i] = Q1
    return v


def solve(m, b):
    """One solution of m x = b, or None if inconsistent."""
    rows, cols = shape(m)
    if cols == 0:
        return [] if all(not x for x in b) else None
    aug = [m[i][:] + [b[i]] for i in range(rows)]
    red, pivots = rref(aug)
    if cols in pivots:
        return None
    x = [Q0] * cols
    for r, pc in enumerate(pivots):
        x[pc] = red[r][cols]
    return x


def solve_matrix(m, b):
    """Solve m X = b columnwise; None if any column is inconsistent."""
    rows, cols = shape(m)
    rb, cb = shape(b)
    if rb != rows:
        raise ValueError("shape mismatch in solve_matrix")
    if cols == 0:
        return zeros(0, cb) if is_zero_matrix(b) else None
    aug = [m[i][:] + b[i][:] for i in range(rows)]
    red, pivots = rref(aug)
    if any(p >= cols for p in pivots):
        return None
    x = zeros(cols, cb)
    for r, pc in enumerate(pivots):
        for j in range(cb):
            x[pc][j] = red[r][cols + j]
    return x


def inverse(m):
    n, c = shape(m)
    if n != c:
        raise ValueError("inverse of non-square matrix")
    if n == 0:
        return []
    aug = [m[i][:] + identity(n)[i] for i in range(n)]
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ValueError("matrix not invertible")
    return [row[n:] for row in red]


def is_invertible(m) -> bool:
    n, c = shape(m)
    return n == c and (n == 0 or rank(m) == n)


def column_space_basis(m):
    """Deterministic basis of the column space (pivot columns of m)."""
    _, pivots = rref(m)
    return [[m[i][j] for i in range(len(m))] for j in pivots]


def columns(m):
    rows, cols = shape(m)
    return [[m[i][j] for i in range(rows)] for j in range(cols)]


def from_columns(cols_list, rows: int):
    if not cols_list:
        return [[] for _ in range(rows)]
    return [[col[i] for col in cols_list] for i in range(rows)]


def in_span(basis_matrix, v) -> bool:
    return solve(basis_matrix, v) is not None


def complement_indices(span_cols, dim: int):
    """Indices of standard basis vectors completing span_cols to all of Q^dim."""
    current = [col[:] for col in span_cols]
    chosen = []
    r = rank(from_columns(current, dim)) if current else 0
    for i in range(dim):
        trial = current + [e_vector(dim, i)]
        tr = rank(from_columns(trial, dim))
        if tr > r:
            current = trial
            r = tr
            chosen.append(i)
        if r == dim:
            break
    return chosen


def block_matrix(blocks, row_dims, col_dims):
    """Assemble a matrix from a dict (i, j) -> block with given block dims."""
    total_r = sum(row_dims)
    total_c = sum(col_dims)
    out = zeros(total_r, total_c)
    roff = [0]
    for d in row_dims:
        roff.append(roff[-1] + d)
    coff = [0]
    for d in col_dims:
        coff.append(coff[-1] + d)
    for (i, j), blk in blocks.items():
        for r in range(row_dims[i]):
            for c in range(col_dims[j]):
                x = blk[r][c]
                if x:
                    out[roff[i] + r][coff[j] + c] = x
    return out
