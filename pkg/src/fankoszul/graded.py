"""Exact degreewise graded linear algebra over face polynomial algebras.

A DegreewiseModule stores one rational vector space per internal degree on a
window [dmin, dmax], together with the action of each degree-2 coordinate
variable of its algebra.  Everything downstream (sections, covers, kernels,
duals, Hom solving) is plain linear algebra on these pieces.

Grading conventions.  Linear functions have degree 2.  The shift M{k} moves
degrees down: M{k}_i = M_{k+i}, so the free module with one generator in
degree g is A{-g}.  FreeModuleShape records generator degrees directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

from . import linalg as la
from . import polynomials as poly
from .errors import CutoffTooSmall, RangeMismatch
from .fan import Face, Fan, FaceId
from .linalg import Q0, Q1, qq

DEFAULT_CUTOFF_SLACK = 6
CUTOFF_HARD_CAP = 64


def default_cutoff(ambient_rank: int, max_shift: int = 0) -> int:
    return 2 * ambient_rank + abs(max_shift) + DEFAULT_CUTOFF_SLACK


class PolynomialAlgebra:
    """Polynomial functions on the span of a face, linear forms in degree 2.

    Coordinates are the dual basis of the face's rational span basis.  The
    restriction to a subface sends each coordinate to a linear form in the
    subface's coordinates; those forms drive every restriction matrix.
    """

    def __init__(self, fan: Fan, fid: FaceId):
        self.fan = fan
        self.face: Face = fan.face(fid)
        self.fid = self.face.fid
        self.nvars = self.face.dim
        self._restriction_forms: dict[FaceId, list] = {}
        self._mult_cache: dict = {}

    def piece_dim(self, degree: int) -> int:
        return poly.piece_dim(self.nvars, degree)

    def monomial_basis(self, degree: int):
        if degree < 0 or degree % 2:
            return ()
        return poly.monomials(self.nvars, degree // 2)

    def restriction_forms(self, sub_fid: FaceId):
        """Images of this algebra's variables in the subface algebra, as
        linear polynomials in the subface variables."""
        sub_fid = tuple(sorted(sub_fid))
        if sub_fid in self._restriction_forms:
            return self._restriction_forms[sub_fid]
        if not self.fan.le(sub_fid, self.fid):
            raise RangeMismatch("restriction target is not a subface")
        sub = self.fan.face(sub_fid)
        my_cols = la.transpose([list(r) for r in self.face.span_basis])
        forms = []
        coords = []
        for b in sub.span_basis:
            c = la.solve(my_cols, list(b))
            if c is None:
                raise RangeMismatch("subface span not inside face span")
            coords.append(c)
        for i in range(self.nvars):
            coeffs = [coords[j][i] for j in range(sub.dim)]
            forms.append(poly.poly_from_linear(coeffs))
        self._restriction_forms[sub_fid] = forms
        return forms

    def restrict_poly(self, p, sub_fid: FaceId):
        sub = self.fan.face(tuple(sorted(sub_fid)))
        forms = self.restriction_forms(sub.fid)
        return poly.substitute_linear(p, forms, sub.dim)

    def restriction_matrix(self, sub_fid: FaceId, degree: int):
        """Matrix of the restriction map on the given degree piece."""
        key = ("res", tuple(sorted(sub_fid)), degree)
        if key in self._mult_cache:
            return self._mult_cache[key]
        sub = self.fan.face(tuple(sorted(sub_fid)))
        src = self.monomial_basis(degree)
        dst_dim = poly.piece_dim(sub.dim, degree)
        out = la.zeros(dst_dim, len(src))
        for j, mono in enumerate(src):
            img = self.restrict_poly({mono: Q1}, sub.fid)
            col = poly.poly_to_vector(img, sub.dim, degree)
            for i, x in enumerate(col):
                out[i][j] = x
        self._mult_cache[key] = out
        return out

    def mult_matrix(self, p, src_degree: int):
        return poly.multiplication_matrix(p, self.nvars, src_degree)

    def var_matrix(self, i: int, src_degree: int):
        key = ("var", i, src_degree)
        if key not in self._mult_cache:
            self._mult_cache[key] = poly.multiplication_matrix(
                poly.poly_var(self.nvars, i), self.nvars, src_degree)
        return self._mult_cache[key]


class AlgebraCache:
    """Per-fan cache of face algebras."""

    def __init__(self, fan: Fan):
        self.fan = fan
        self._algebras: dict[FaceId, PolynomialAlgebra] = {}

    def algebra(self, fid: FaceId) -> PolynomialAlgebra:
        fid = tuple(sorted(fid))
        if fid not in self._algebras:
            self._algebras[fid] = PolynomialAlgebra(self.fan, fid)
        return self._algebras[fid]


@dataclass(frozen=True)
class FreeModuleShape:
    """Multiset of generator degrees of a free module (sum of A{-g})."""

    generator_degrees: tuple[int, ...]

    @staticmethod
    def of(degrees) -> "FreeModuleShape":
        return FreeModuleShape(tuple(sorted(degrees)))

    def hilbert(self, nvars: int, degree: int) -> int:
        return sum(poly.piece_dim(nvars, degree - g) for g in self.generator_degrees)

    @property
    def rank(self) -> int:
        return len(self.generator_degrees)

    def shifted(self, n: int) -> "FreeModuleShape":
        # M{n} moves a degree-g generator to degree g - n
        return FreeModuleShape(tuple(sorted(g - n for g in self.generator_degrees)))


class DegreewiseModule:
    """A graded module over a face algebra, stored per degree on a window."""

    def __init__(self, algebra: PolynomialAlgebra, dmin: int, dmax: int,
                 dims: dict[int, int], actions: dict):
        self.algebra = algebra
        self.dmin = dmin
        self.dmax = dmax
        self.dims = {k: v for k, v in dims.items() if v}
        # actions[(i, k)] : piece(k) -> piece(k + 2), one per variable i
        self.actions = actions

    # -- basic queries ------------------------------------------------------

    def dim(self, k: int) -> int:
        return self.dims.get(k, 0)

    def degrees(self):
        return range(self.dmin, self.dmax + 1)

    def is_zero(self) -> bool:
        return not self.dims

    def total_dim(self) -> int:
        return sum(self.dims.values())

    def action(self, i: int, k: int):
        m = self.actions.get((i, k))
        if m is None:
            return la.zeros(self.dim(k + 2), self.dim(k))
        return m

    def action_of_poly(self, p, k: int):
        """Matrix of the action of a homogeneous polynomial on piece(k)."""
        deg = poly.poly_degree(p)
        if deg is None:
            return la.zeros(0, self.dim(k))
        if deg == 0:
            c = p.get((), Q0)
            return la.mat_scale(la.identity(self.dim(k)), c)
        out = la.zeros(self.dim(k + deg), self.dim(k))
        for mono, c in p.items():
            m = la.identity(self.dim(k))
            d = k
            for i, e in enumerate(mono):
                for _ in range(e):
                    m = la.mat_mul(self.action(i, d), m)
                    d += 2
            out = la.mat_add(out, la.mat_scale(m, c))
        return out

    def hilbert_function(self):
        return {k: self.dim(k) for k in self.degrees() if self.dim(k)}

    def check_commuting_actions(self) -> bool:
        n = self.algebra.nvars
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(self.dmin, self.dmax - 3):
                    a = la.mat_mul(self.action(j, k + 2), self.action(i, k))
                    b = la.mat_mul(self.action(i, k + 2), self.action(j, k))
                    if a != b:
                        return False
        return True

    def __repr__(self):
        return f"DegreewiseModule(dims={self.hilbert_function()})"


def zero_module(algebra: PolynomialAlgebra, dmin: int, dmax: int) -> DegreewiseModule:
    return DegreewiseModule(algebra, dmin, dmax, {}, {})


def canonical_free_module(algebra: PolynomialAlgebra, shape: FreeModuleShape,
                          dmin: int, dmax: int) -> DegreewiseModule:
    """Free module with the monomial basis: piece(k) is indexed by pairs
    (generator, monomial of degree k - g), generators in shape order."""
    dims = {}
    for k in range(dmin, dmax + 1):
        d = shape.hilbert(algebra.nvars, k)
        if d:
            dims[k] = d
    actions = {}
    for i in range(algebra.nvars):
        for k in range(dmin, dmax - 1):
            src = _free_basis(algebra, shape, k)
            dst_index = _free_basis_index(algebra, shape, k + 2)
            if not src or not dst_index:
                continue
            m = la.zeros(len(dst_index), len(src))
            for col, (g, mono) in enumerate(src):
                up = list(mono)
                up[i] += 1
                m[dst_index[(g, tuple(up))]][col] = Q1
            actions[(i, k)] = m
    return DegreewiseModule(algebra, dmin, dmax, dims, actions)


@lru_cache(maxsize=None)
def _free_basis_cached(nvars: int, gens: tuple[int, ...], k: int):
    out = []
    for g_idx, g in enumerate(gens):
        for mono in poly.monomials(nvars, (k - g) // 2) if (k - g) >= 0 and (k - g) % 2 == 0 else ():
            out.append((g_idx, mono))
    return tuple(out)


def _free_basis(algebra, shape: FreeModuleShape, k: int):
    return _free_basis_cached(algebra.nvars, shape.generator_degrees, k)


def _free_basis_index(algebra, shape: FreeModuleShape, k: int):
    return {b: i for i, b in enumerate(_free_basis(algebra, shape, k))}


def free_generator_vector(algebra, shape: FreeModuleShape, g_idx: int):
    """Coordinate vector of the g_idx-th generator inside its degree piece."""
    k = shape.generator_degrees[g_idx]
    basis = _free_basis(algebra, shape, k)
    v = [Q0] * len(basis)
    v[basis.index((g_idx, (0,) * algebra.nvars))] = Q1
    return v


class GradedMap:
    """A degreewise linear map src_k -> dst_{k+shift}.

    Restriction maps across algebras are stored the same way; linearity over
    the smaller algebra is the builder's responsibility.
    """

    def __init__(self, src: DegreewiseModule, dst: DegreewiseModule,
                 shift: int = 0, mats: dict | None = None):
        self.src = src
        self.dst = dst
        self.shift = shift
        self.mats = mats or {}

    def mat(self, k: int):
        m = self.mats.get(k)
        if m is None:
            return la.zeros(self.dst.dim(k + self.shift), self.src.dim(k))
        return m

    def set_mat(self, k: int, m):
        expected = (self.dst.dim(k + self.shift), self.src.dim(k))
        if expected[0] == 0 or expected[1] == 0:
            return
        if la.shape(m) != expected:
            raise RangeMismatch(
                f"map block at degree {k} has shape {la.shape(m)}, expected {expected}")
        if not la.is_zero_matrix(m):
            self.mats[k] = m

    def apply(self, k: int, v):
        return la.mat_vec(self.mat(k), v)

    def compose(self, other: "GradedMap") -> "GradedMap":
        """self after other (other first)."""
        if other.dst is not self.src and other.dst.dims != self.src.dims:
            raise RangeMismatch("composition middle modules differ")
        out = GradedMap(other.src, self.dst, self.shift + other.shift)
        for k in other.src.degrees():
            if other.src.dim(k) == 0:
                continue
            m = la.mat_mul(self.mat(k + other.shift), other.mat(k))
            out.set_mat(k, m)
        return out

    def add(self, other: "GradedMap") -> "GradedMap":
        out = GradedMap(self.src, self.dst, self.shift)
        for k in self.src.degrees():
            out.set_mat(k, la.mat_add(self.mat(k), other.mat(k)))
        return out

    def scale(self, c) -> "GradedMap":
        out = GradedMap(self.src, self.dst, self.shift)
        for k, m in self.mats.items():
            out.set_mat(k, la.mat_scale(m, c))
        return out

    def neg(self) -> "GradedMap":
        return self.scale(qq(-1))

    def is_zero(self) -> bool:
        return all(la.is_zero_matrix(m) for m in self.mats.values())

    def is_surjective_degreewise(self, degrees=None) -> bool:
        for k in degrees if degrees is not None else self.src.degrees():
            target = self.dst.dim(k + self.shift)
            if target and la.rank(self.mat(k)) != target:
                return False
        return True

    def is_injective_degreewise(self, degrees=None) -> bool:
        for k in degrees if degrees is not None else self.src.degrees():
            d = self.src.dim(k)
            if d and la.rank(self.mat(k)) != d:
                return False
        return True

    def rank_at(self, k: int) -> int:
        return la.rank(self.mat(k))


def identity_map(m: DegreewiseModule) -> GradedMap:
    out = GradedMap(m, m, 0)
    for k in m.degrees():
        if m.dim(k):
            out.set_mat(k, la.identity(m.dim(k)))
    return out


def zero_map(src: DegreewiseModule, dst: DegreewiseModule, shift: int = 0) -> GradedMap:
    return GradedMap(src, dst, shift)


# -- submodules, quotients, kernels --------------------------------------


def submodule(ambient: DegreewiseModule, sub_vectors: dict[int, list],
              valid_top: int | None = None):
    """Submodule spanned degreewise by the given column vectors (assumed
    action-stable).  Returns (module, embedding).

    valid_top caps the degrees whose action-stability is audited; degrees
    above it were truncated by the caller and carry no claim.
    """
    algebra = ambient.algebra
    if valid_top is None:
        valid_top = ambient.dmax
    basis = {}
    dims = {}
    for k in range(ambient.dmin, ambient.dmax + 1):
        cols = sub_vectors.get(k, [])
        if not cols:
            continue
        mat = la.from_columns(cols, ambient.dim(k))
        red, pivots = la.rref(la.transpose(mat))
        chosen = [list(red[i]) for i in range(len(pivots))]
        if chosen:
            basis[k] = chosen
            dims[k] = len(chosen)
    actions = {}
    for i in range(algebra.nvars):
        for k in range(ambient.dmin, ambient.dmax - 1):
            if not dims.get(k) or not dims.get(k + 2):
                continue
            src_cols = basis[k]
            dst_mat = la.from_columns(basis[k + 2], ambient.dim(k + 2))
            images = [la.mat_vec(ambient.action(i, k), v) for v in src_cols]
            sol = la.solve_matrix(dst_mat, la.from_columns(images, ambient.dim(k + 2)))
            if sol is None:
                raise RangeMismatch("subspace not action-stable")
            actions[(i, k)] = sol
        # audit degrees whose image must be zero
        for k in range(ambient.dmin, ambient.dmax - 1):
            if k + 2 > valid_top:
                continue
            if dims.get(k) and not dims.get(k + 2):
                for v in basis[k]:
                    if any(x for x in la.mat_vec(ambient.action(i, k), v)):
                        raise RangeMismatch("subspace not action-stable (image escapes)")
    mod = DegreewiseModule(algebra, ambient.dmin, ambient.dmax, dims, actions)
    embed = GradedMap(mod, ambient, 0)
    for k, cols in basis.items():
        embed.set_mat(k, la.from_columns(cols, ambient.dim(k)))
    return mod, embed


def kernel_degreewise(f: GradedMap):
    """Kernel of a graded module map, with induced actions and embedding."""
    if f.src.algebra is not f.dst.algebra and f.shift == 0:
        pass  # cross-algebra kernels are taken over the smaller action later
    valid_top = f.src.dmax - max(f.shift, 0)
    vectors = {}
    for k in f.src.degrees():
        n = f.src.dim(k)
        if n == 0 or k > valid_top:
            continue
        if f.dst.dim(k + f.shift) == 0:
            ker = [la.e_vector(n, j) for j in range(n)]
        else:
            ker = la.kernel_basis(f.mat(k))
        if ker:
            vectors[k] = ker
    return submodule(f.src, vectors, valid_top=valid_top)


def image_degreewise(f: GradedMap):
    vectors = {}
    for k in f.src.degrees():
        m = f.mat(k)
        cols = la.column_space_basis(m)
        if cols:
            vectors[k + f.shift] = cols
    return submodule(f.dst, vectors)


def quotient_module(ambient: DegreewiseModule, sub_vectors: dict[int, list]):
    """Quotient by the degreewise span of sub_vectors (action-stable).
    Returns (module, projection)."""
    algebra = ambient.algebra
    proj_rows = {}
    dims = {}
    sections = {}
    for k in range(ambient.dmin, ambient.dmax + 1):
        n = ambient.dim(k)
        if n == 0:
            continue
        raw = sub_vectors.get(k, [])
        cols = la.column_space_basis(la.from_columns(raw, n)) if raw else []
        comp = la.complement_indices(cols, n)
        if not comp:
            continue
        full_cols = cols + [la.e_vector(n, i) for i in comp]
        inv = la.inverse(la.from_columns(full_cols, n))
        proj_rows[k] = inv[len(cols):]
        sections[k] = la.from_columns([la.e_vector(n, i) for i in comp], n)
        dims[k] = len(comp)
    actions = {}
    for i in range(algebra.nvars):
        for k in range(ambient.dmin, ambient.dmax - 1):
            if not dims.get(k) or not dims.get(k + 2):
                continue
            act = la.mat_mul(proj_rows[k + 2],
                             la.mat_mul(ambient.action(i, k), sections[k]))
            actions[(i, k)] = act
    mod = DegreewiseModule(algebra, ambient.dmin, ambient.dmax, dims, actions)
    proj = GradedMap(ambient, mod, 0)
    for k, rows in proj_rows.items():
        proj.set_mat(k, rows)
    return mod, proj


# -- generators, covers, certification ------------------------------------


def minimal_generators(module: DegreewiseModule):
    """Degrees and lifts of a basis of M / m M on the stored range.

    Raises CutoffTooSmall when generators appear within one action step of
    the top of the window, since generation may not have stabilized there.
    """
    gens = []
    for k in range(module.dmin, module.dmax + 1):
        n = module.dim(k)
        if n == 0:
            continue
        image_cols = []
        if module.dim(k - 2):
            for i in range(module.algebra.nvars):
                image_cols.extend(la.columns(module.action(i, k - 2)))
        comp = la.complement_indices(image_cols, n)
        for idx in comp:
            gens.append((k, la.e_vector(n, idx)))
    if gens and module.algebra.nvars > 0:
        top_gen = max(k for k, _ in gens)
        if top_gen > module.dmax - 2:
            raise CutoffTooSmall(
                f"generators at degree {top_gen} too close to cutoff {module.dmax}")
    shape = FreeModuleShape.of([k for k, _ in gens])
    return shape, gens


def free_cover(module: DegreewiseModule):
    """Free module on the minimal generators and the evaluation surjection.
    Returns (shape, cover module, cover map)."""
    shape, gens = minimal_generators(module)
    cover = canonical_free_module(module.algebra, shape, module.dmin, module.dmax)
    f = GradedMap(cover, module, 0)
    gen_vectors = [v for _, v in gens]
    for k in cover.degrees():
        basis = _free_basis(module.algebra, shape, k)
        if not basis:
            continue
        cols = []
        for (g_idx, mono) in basis:
            v = gen_vectors[g_idx]
            gk = shape.generator_degrees[g_idx]
            img = la.mat_vec(module.action_of_poly({mono: Q1}, gk), v) if sum(mono) else v
            cols.append(img)
        f.set_mat(k, la.from_columns(cols, module.dim(k)))
    for k in cover.degrees():
        target = module.dim(k)
        if target and la.rank(f.mat(k)) != target:
            raise CutoffTooSmall(f"cover not surjective in degree {k}")
    return shape, cover, f


def certify_free(module: DegreewiseModule):
    """Hilbert certification: free iff the minimal cover is bijective
    degreewise on the whole window.  Returns the shape or None."""
    if module.is_zero():
        return FreeModuleShape.of([])
    try:
        shape, _, f = free_cover(module)
    except CutoffTooSmall:
        raise
    for k in module.degrees():
        if shape.hilbert(module.algebra.nvars, k) != module.dim(k):
            return None
    return shape


def express_over_cover(module: DegreewiseModule, cover_map: GradedMap, k: int, v):
    """Coordinates of v in the free cover's degree-k basis."""
    sol = la.solve(cover_map.mat(k), v)
    if sol is None:
        raise RangeMismatch("vector not in cover image")
    return sol


def graded_dual(module: DegreewiseModule) -> DegreewiseModule:
    """(M*)_n = (M_{-n})* with transposed actions; involutive on the window."""
    dims = {-k: d for k, d in module.dims.items()}
    actions = {}
    for i in range(module.algebra.nvars):
        for k in list(dims):
            src_orig = -(k + 2)
            m = module.actions.get((i, src_orig))
            if m is not None:
                actions[(i, k)] = la.transpose(m)
    return DegreewiseModule(module.algebra, -module.dmax, -module.dmin, dims, actions)


def shift_module(module: DegreewiseModule, n: int) -> DegreewiseModule:
    """M{n}: piece(k) = M_{k+n}."""
    dims = {k - n: d for k, d in module.dims.items()}
    actions = {(i, k - n): m for (i, k), m in module.actions.items()}
    return DegreewiseModule(module.algebra, module.dmin - n, module.dmax - n,
                            dims, actions)


def direct_sum_modules(mods: list[DegreewiseModule]) -> tuple[DegreewiseModule, list]:
    """Direct sum with the list of (offset table) injections implied by order.
    Returns (sum module, per-summand degreewise offsets)."""
    if not mods:
        raise ValueError("empty direct sum needs an algebra")
    algebra = mods[0].algebra
    dmin = min(m.dmin for m in mods)
    dmax = max(m.dmax for m in mods)
    dims = {}
    offsets = [dict() for _ in mods]
    for k in range(dmin, dmax + 1):
        off = 0
        for idx, m in enumerate(mods):
            offsets[idx][k] = off
            off += m.dim(k)
        if off:
            dims[k] = off
    actions = {}
    for i in range(algebra.nvars):
        for k in range(dmin, dmax - 1):
            if not dims.get(k) or not dims.get(k + 2):
                continue
            blocks = {}
            for idx, m in enumerate(mods):
                blocks[(idx, idx)] = m.action(i, k)
            actions[(i, k)] = la.block_matrix(
                blocks, [m.dim(k + 2) for m in mods], [m.dim(k) for m in mods])
    return DegreewiseModule(algebra, dmin, dmax, dims, actions), offsets
