"""Indecomposable pure sheaves, decompositions, and graded Hom spaces.

The pure sheaf L^sigma is built by induction up the star of sigma: the
stalk at sigma is free of rank one with generator in degree -codim(sigma),
and each higher stalk is the minimal free cover of the sections of the
partial sheaf over the boundary of the face inside the star.  Stalks are
kept in canonical free coordinates (generator, monomial), which makes
sheaf maps out of these objects finite linear-algebra problems over the
generators.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import linalg as la
from .errors import CutoffTooSmall, NotPure, ShiftMismatch
from .fan import DualFanMap, Fan, FaceId, face_id_str
from .graded import (
    AlgebraCache,
    FreeModuleShape,
    GradedMap,
    canonical_free_module,
    certify_free,
    default_cutoff,
    free_cover,
    minimal_generators,
    _free_basis,
)
from .linalg import Q0, Q1, qq
from .sheaf import (
    QuiverSheaf,
    SheafMap,
    direct_sum_sheaves,
    predicates,
    relative_sections,
    sections,
    shift_sheaf,
    structure_sheaf,
)


@dataclass
class ICSheaf:
    sigma: FaceId
    sheaf: QuiverSheaf
    shapes: dict[FaceId, FreeModuleShape]

    def generator_degrees(self, fid: FaceId):
        return self.shapes.get(tuple(sorted(fid)), FreeModuleShape.of([])).generator_degrees


class Context:
    """Per-fan caches: algebras, structure sheaf, IC sheaves, Hom spaces."""

    def __init__(self, fan: Fan, cutoff: int | None = None):
        self.fan = fan
        self.cutoff = cutoff if cutoff is not None else default_cutoff(fan.ambient_rank)
        self.dmin = -self.cutoff
        self.dmax = self.cutoff
        self.algebras = AlgebraCache(fan)
        self._structure = None
        self._ics: dict[FaceId, ICSheaf] = {}
        self._homs: dict = {}
        self._dual: DualFanMap | None = None
        self._dual_context: "Context | None" = None

    def structure_sheaf(self) -> QuiverSheaf:
        if self._structure is None:
            self._structure = structure_sheaf(self.fan, self.algebras, self.dmin, self.dmax)
        return self._structure

    def dual_map(self) -> DualFanMap:
        if self._dual is None:
            self._dual = DualFanMap.build(self.fan)
        return self._dual

    def ic(self, sigma: FaceId) -> ICSheaf:
        sigma = tuple(sorted(sigma))
        if sigma not in self._ics:
            self._ics[sigma] = ic_sheaf(self, sigma)
        return self._ics[sigma]

    def hom_basis(self, src_sigma: FaceId, dst_sigma: FaceId, n: int):
        """Cached basis of Hom(L^src, L^dst{n}) as sheaf maps."""
        key = (tuple(sorted(src_sigma)), tuple(sorted(dst_sigma)), n)
        if key not in self._homs:
            src = self.ic(key[0]).sheaf
            dst = shift_sheaf(self.ic(key[1]).sheaf, n)
            self._homs[key] = hom_sheaf_maps(src, dst)
        return self._homs[key]


def ic_sheaf(ctx: Context, sigma: FaceId) -> ICSheaf:
    """Minimal pure extension supported on the star of sigma."""
    fan = ctx.fan
    sigma = tuple(sorted(sigma))
    face = fan.face(sigma)
    star = sorted(fan.star(sigma), key=lambda f: (fan.faces[f].dim, f))
    stalks = {}
    restrictions = {}
    shapes = {}
    partial = QuiverSheaf(fan, ctx.algebras, ctx.dmin, ctx.dmax, stalks, restrictions)
    seed_shape = FreeModuleShape.of([-face.codim])
    stalks[sigma] = canonical_free_module(
        ctx.algebras.algebra(sigma), seed_shape, ctx.dmin, ctx.dmax)
    shapes[sigma] = seed_shape
    for tau in star:
        if tau == sigma:
            continue
        delta = [r for r in fan.boundary(tau) if fan.le(sigma, r)]
        sec = sections(partial, delta, tau)
        shape, gens = minimal_generators(sec.module)
        shapes[tau] = shape
        a_tau = ctx.algebras.algebra(tau)
        stalks[tau] = canonical_free_module(a_tau, shape, ctx.dmin, ctx.dmax)
        gen_tuples = []
        for (deg, v) in gens:
            gen_tuples.append((deg, sec.embed.apply(deg, v)))
        for rho in fan.boundary(tau):
            if not fan.le(sigma, rho):
                continue
            target = stalks[rho]
            g = GradedMap(stalks[tau], target, 0)
            gen_images = []
            for (deg, tup) in gen_tuples:
                off = sec.offsets[rho][deg]
                d = target.dim(deg)
                gen_images.append(tup[off:off + d])
            for k in range(ctx.dmin, ctx.dmax + 1):
                if stalks[tau].dim(k) == 0 or target.dim(k) == 0:
                    continue
                cols = []
                for (g_idx, mono) in _free_basis(a_tau, shape, k):
                    base = gen_images[g_idx]
                    if sum(mono) == 0:
                        cols.append(base)
                    else:
                        p = a_tau.restrict_poly({mono: Q1}, rho)
                        deg0 = shape.generator_degrees[g_idx]
                        if p:
                            cols.append(la.mat_vec(target.action_of_poly(p, deg0), base))
                        else:
                            cols.append([Q0] * target.dim(k))
                g.set_mat(k, la.from_columns(cols, target.dim(k)))
            restrictions[(tau, rho)] = g
    ic = ICSheaf(sigma, partial, shapes)
    _audit_ic(ctx, ic)
    return ic


def _audit_ic(ctx: Context, ic: ICSheaf):
    fan = ctx.fan
    sheaf = ic.sheaf
    if not sheaf.audit_functorial():
        raise NotPure("IC restriction maps fail functoriality")
    preds = predicates(sheaf)
    if not preds["is_pure"]:
        raise NotPure(f"IC sheaf at {face_id_str(ic.sigma)} is not pure")
    for tau in fan.star(ic.sigma):
        degs = ic.generator_degrees(tau)
        c = fan.face(tau).codim
        if tau == ic.sigma:
            if degs != (-c,):
                raise NotPure("seed stalk has wrong normalization")
            continue
        if any(d >= -c for d in degs):
            raise NotPure(
                f"stalk generators at {face_id_str(tau)} violate the degree bound")
        rel, _ = relative_sections(sheaf, tau)
        if not rel.is_zero():
            rshape = certify_free(rel)
            if rshape is None:
                raise NotPure("relative sections are not free")
            if any(d <= -c for d in rshape.generator_degrees):
                raise NotPure("relative section generators violate the degree bound")


# -- Hom spaces ------------------------------------------------------------


def _support(sheaf: QuiverSheaf):
    return [f for f in sheaf.fan.face_ids() if not sheaf.stalk(f).is_zero()]


def _canonical_shapes(sheaf: QuiverSheaf) -> dict[FaceId, FreeModuleShape]:
    """Shapes of canonical free stalks (generator degrees), by face."""
    shapes = {}
    for fid in _support(sheaf):
        shape = certify_free(sheaf.stalk(fid))
        if shape is None:
            raise NotPure(f"stalk at {face_id_str(fid)} is not certified free")
        shapes[fid] = shape
    return shapes


def hom_sheaf_maps(src: QuiverSheaf, dst: QuiverSheaf, shift: int = 0):
    """Basis of degree-`shift` sheaf maps src -> dst.

    src must have canonical free stalks; a map is parametrized by the images
    of the stalk generators and cut out by the commuting squares over cover
    pairs.
    """
    fan = src.fan
    shapes = _canonical_shapes(src)
    support = sorted(shapes, key=lambda f: (fan.faces[f].dim, f))
    var_index = {}
    width = 0
    for fid in support:
        for g_idx, d in enumerate(shapes[fid].generator_degrees):
            w = dst.stalk(fid).dim(d + shift)
            var_index[(fid, g_idx)] = (width, w, d)
            width += w
    rows = []
    for upper in support:
        a_up = src.algebras.algebra(upper)
        for lower in fan.boundary(upper):
            if fan.faces[lower].dim != fan.faces[upper].dim - 1:
                continue
            res_src = src.restriction(upper, lower)
            res_dst = dst.restriction(upper, lower)
            low_shape = shapes.get(lower)
            low_stalk = src.stalk(lower)
            dst_low = dst.stalk(lower)
            for g_idx, d in enumerate(shapes[upper].generator_degrees):
                out_dim = dst_low.dim(d + shift)
                if out_dim == 0 and low_shape is None:
                    continue
                gvec = _generator_vector(src, upper, shapes[upper], g_idx)
                rvec = res_src.apply(d, gvec)
                row_block = {}
                off_u, w_u, _ = var_index[(upper, g_idx)]
                m = res_dst.mat(d + shift)
                block = la.zeros(out_dim, width)
                for r in range(out_dim):
                    for c in range(w_u):
                        if m[r][c]:
                            block[r][off_u + c] = m[r][c]
                if low_shape is not None and any(x for x in rvec):
                    basis = _free_basis(src.algebras.algebra(lower), low_shape, d)
                    for coeff, (h_idx, mono) in zip(rvec, basis):
                        if not coeff:
                            continue
                        off_l, w_l, d_h = var_index[(lower, h_idx)]
                        if sum(mono) == 0:
                            act = la.identity(w_l)
                        else:
                            act = dst_low.action_of_poly({mono: Q1}, d_h + shift)
                        for r in range(out_dim):
                            for c in range(w_l):
                                if act[r][c]:
                                    block[r][off_l + c] -= coeff * act[r][c]
                if not la.is_zero_matrix(block):
                    rows.append(block)
    ker = la.kernel_basis(la.vstack(rows)) if rows else [
        la.e_vector(width, j) for j in range(width)]
    basis_maps = [_realize_hom(src, dst, shift, shapes, var_index, v) for v in ker]
    return HomSpace(src, dst, shift, shapes, var_index, width, basis_maps)


def _generator_vector(sheaf: QuiverSheaf, fid: FaceId, shape: FreeModuleShape, g_idx: int):
    a = sheaf.algebras.algebra(fid)
    d = shape.generator_degrees[g_idx]
    basis = _free_basis(a, shape, d)
    v = [Q0] * len(basis)
    v[basis.index((g_idx, (0,) * a.nvars))] = Q1
    return v


def _realize_hom(src, dst, shift, shapes, var_index, flat) -> SheafMap:
    fan = src.fan
    f = SheafMap(src, dst, shift)
    for fid, shape in shapes.items():
        a = src.algebras.algebra(fid)
        stalk_src = src.stalk(fid)
        stalk_dst = dst.stalk(fid)
        g = GradedMap(stalk_src, stalk_dst, shift)
        gen_images = []
        for g_idx in range(shape.rank):
            off, w, d = var_index[(fid, g_idx)]
            gen_images.append(flat[off:off + w])
        for k in range(src.dmin, src.dmax + 1):
            if stalk_src.dim(k) == 0 or stalk_dst.dim(k + shift) == 0:
                continue
            cols = []
            for (g_idx, mono) in _free_basis(a, shape, k):
                d = shape.generator_degrees[g_idx]
                if sum(mono) == 0:
                    cols.append(gen_images[g_idx])
                else:
                    act = stalk_dst.action_of_poly({mono: Q1}, d + shift)
                    cols.append(la.mat_vec(act, gen_images[g_idx]))
            g.set_mat(k, la.from_columns(cols, stalk_dst.dim(k + shift)))
        f.comps[fid] = g
    return f


@dataclass
class HomSpace:
    """A solved space of sheaf maps with a fixed basis."""

    src: QuiverSheaf
    dst: QuiverSheaf
    shift: int
    shapes: dict
    var_index: dict
    width: int
    basis: list

    @property
    def dim(self) -> int:
        return len(self.basis)

    def flat(self, f: SheafMap):
        """Generator-image coordinates of a sheaf map src -> dst."""
        out = [Q0] * self.width
        for (fid, g_idx), (off, w, d) in self.var_index.items():
            gvec = _generator_vector(self.src, fid, self.shapes[fid], g_idx)
            img = f.comp(fid).apply(d, gvec)
            for i in range(w):
                out[off + i] = img[i] if img else Q0
        return out

    def coordinates(self, f: SheafMap):
        """Coefficients of f in the basis, or None if it is outside."""
        mat = la.from_columns([self.flat(b) for b in self.basis], self.width)
        return la.solve(mat, self.flat(f))

    def element(self, coeffs) -> SheafMap:
        out = None
        for c, b in zip(coeffs, self.basis):
            term = b.scale(c)
            out = term if out is None else out.add(term)
        if out is None:
            out = SheafMap(self.src, self.dst, self.shift)
        return out


def hom_pure(ctx: Context, src_dec: "PureDecomposition",
             dst_dec: "PureDecomposition", n: int) -> "PureHomSpace":
    """Graded Hom between decomposed pure sheaves at internal shift n."""
    blocks = {}
    total = 0
    for i, (s_sig, s_n) in enumerate(src_dec.summands):
        for j, (d_sig, d_n) in enumerate(dst_dec.summands):
            basis = ctx.hom_basis(s_sig, d_sig, d_n + n - s_n)
            blocks[(i, j)] = basis
            total += basis.dim
    return PureHomSpace(src_dec, dst_dec, n, blocks, total)


@dataclass
class PureHomSpace:
    src: "PureDecomposition"
    dst: "PureDecomposition"
    shift: int
    blocks: dict
    dim: int


def compose_homs(f: SheafMap, g: SheafMap) -> SheafMap:
    """Apply f first, then g; lands in shift f.shift + g.shift."""
    if f.dst is not g.src:
        fd = {fid: f.dst.stalk(fid).dims for fid in f.dst.fan.face_ids()}
        gs = {fid: g.src.stalk(fid).dims for fid in g.src.fan.face_ids()}
        if fd != gs:
            raise ShiftMismatch("middle objects of composition differ")
    return g.compose(f)


# -- decomposition ---------------------------------------------------------


@dataclass
class PureDecomposition:
    """Multiset of (face, shift) labels with an explicit isomorphism from
    the matching sum of IC sheaves onto the decomposed sheaf."""

    sheaf: QuiverSheaf
    summands: tuple
    model: QuiverSheaf | None = None
    iso: SheafMap | None = None
    injections: list = field(default_factory=list)
    projections: list = field(default_factory=list)

    @property
    def multiset(self):
        return tuple(sorted(self.summands))


def pure_summand_sheaf(ctx: Context, summands) -> tuple:
    pieces = [shift_sheaf(ctx.ic(sig).sheaf, n) for (sig, n) in summands]
    if not pieces:
        z = QuiverSheaf(ctx.fan, ctx.algebras, ctx.dmin, ctx.dmax, {}, {})
        return z, [], []
    return direct_sum_sheaves(pieces)


def decompose(ctx: Context, sheaf: QuiverSheaf, audit: bool = True) -> PureDecomposition:
    """Split a pure sheaf into shifted IC summands.

    Multiplicities come from deconvolving the minimal-generator table of the
    stalks against the tables of the IC sheaves, by increasing face
    dimension; the isomorphism is then solved for explicitly and checked to
    be invertible degreewise.
    """
    fan = ctx.fan
    if audit:
        preds = predicates(sheaf)
        if not preds["is_pure"]:
            raise NotPure("decompose requires a pure sheaf")
    shapes = _canonical_shapes(sheaf)
    residual = {fid: _degree_counts(shapes[fid]) for fid in shapes}
    summands = []
    for fid in sorted(shapes, key=lambda f: (fan.faces[f].dim, f)):
        counts = residual.get(fid, {})
        c = fan.face(fid).codim
        for deg in sorted(counts):
            m = counts[deg]
            if m < 0:
                raise NotPure("generator table deconvolution went negative")
            if m == 0:
                continue
            n = -c - deg
            summands.append(((fid, n), m))
            ic = ctx.ic(fid)
            for tau in fan.star(fid):
                tbl = _degree_counts(ic.shapes.get(tau, FreeModuleShape.of([])))
                if tau not in residual:
                    continue
                for d2, cnt in tbl.items():
                    # L{n} has its generators shifted down by n
                    key = d2 - n
                    residual[tau][key] = residual[tau].get(key, 0) - cnt * m
    for fid, counts in residual.items():
        if any(v for v in counts.values()):
            raise NotPure("generator table did not deconvolve to zero")
    flat_summands = []
    for (label, m) in summands:
        flat_summands.extend([label] * m)
    flat_summands.sort(key=lambda t: (fan.faces[t[0]].dim, t[0], t[1]))
    model, injections, projections = pure_summand_sheaf(ctx, flat_summands)
    iso = _find_isomorphism(ctx, model, sheaf)
    return PureDecomposition(sheaf, tuple(flat_summands), model, iso,
                             injections, projections)


def _degree_counts(shape: FreeModuleShape) -> dict:
    out = {}
    for d in shape.generator_degrees:
        out[d] = out.get(d, 0) + 1
    return out


def _find_isomorphism(ctx: Context, model: QuiverSheaf, sheaf: QuiverSheaf) -> SheafMap:
    if not model.stalks and not _support(sheaf):
        return SheafMap(model, sheaf, 0)
    space = hom_sheaf_maps(model, sheaf)
    if space.dim == 0:
        raise NotPure("no maps from the decomposition model")
    candidates = [[Q1] * space.dim]
    rng = random.Random(0xFA9)
    for _ in range(200):
        candidates.append([qq(rng.randint(-3, 3)) for _ in range(space.dim)])
    for coeffs in candidates:
        f = space.element(coeffs)
        if _is_degreewise_iso(f):
            return f
    raise NotPure("could not realize the decomposition isomorphism")


def _is_degreewise_iso(f: SheafMap) -> bool:
    lo = max(f.src.dmin, f.dst.dmin)
    hi = min(f.src.dmax, f.dst.dmax)
    for fid in f.src.fan.face_ids():
        src = f.src.stalk(fid)
        dst = f.dst.stalk(fid)
        for k in range(lo, hi + 1):
            if src.dim(k) != dst.dim(k):
                return False
            if src.dim(k) and not la.is_invertible(f.comp(fid).mat(k)):
                return False
    return True


def random_scramble(ctx: Context, model: QuiverSheaf, seed: int) -> QuiverSheaf:
    """A sheaf isomorphic to the model via a random automorphism: same
    stalks, restrictions conjugated by an invertible degree-zero endo."""
    space = hom_sheaf_maps(model, model)
    rng = random.Random(seed)
    for _ in range(100):
        coeffs = [qq(rng.randint(-3, 3)) for _ in range(space.dim)]
        g = space.element(coeffs)
        if _is_degreewise_iso(g):
            break
    else:
        raise NotPure("no automorphism found")
    fan = model.fan
    restrictions = {}
    for (u, l), res in model.restrictions.items():
        new = GradedMap(model.stalk(u), model.stalk(l), 0)
        gu, gl = g.comp(u), g.comp(l)
        for k in range(model.dmin, model.dmax + 1):
            if model.stalk(u).dim(k) == 0 or model.stalk(l).dim(k) == 0:
                continue
            inv = la.inverse(gu.mat(k))
            new.set_mat(k, la.mat_mul(gl.mat(k), la.mat_mul(res.mat(k), inv)))
        restrictions[(u, l)] = new
    return QuiverSheaf(fan, model.algebras, model.dmin, model.dmax,
                       dict(model.stalks), restrictions)


def ic_table(ctx: Context) -> dict:
    """Local generator-degree table: row (sigma, tau) lists the degrees and
    multiplicities of the stalk generators of L^sigma at tau."""
    out = {}
    for sigma in ctx.fan.face_ids():
        ic = ctx.ic(sigma)
        rows = {}
        for tau in ctx.fan.star(sigma):
            counts = _degree_counts(ic.shapes.get(tau, FreeModuleShape.of([])))
            if counts:
                rows[face_id_str(tau)] = {
                    "degrees": sorted(counts),
                    "multiplicities": [counts[d] for d in sorted(counts)],
                }
        out[face_id_str(sigma)] = rows
    return out
