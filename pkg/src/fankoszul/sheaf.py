"""Sheaves of graded modules on the face poset of a fan.

A QuiverSheaf assigns a DegreewiseModule over the face algebra to every
face, with degree-zero restriction maps downward that are compatible with
restriction of polynomial functions.  Sections over a quasifan are the
compatible tuples, computed degreewise as an equalizer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from . import linalg as la
from . import polynomials as poly
from .errors import CutoffTooSmall, RangeMismatch
from .fan import Fan, FaceId, face_id_str
from .graded import (
    AlgebraCache,
    DegreewiseModule,
    FreeModuleShape,
    GradedMap,
    canonical_free_module,
    certify_free,
    direct_sum_modules,
    free_cover,
    identity_map,
    kernel_degreewise,
    quotient_module,
    shift_module,
    submodule,
    zero_module,
)
from .linalg import Q0, Q1, qq


class QuiverSheaf:
    def __init__(self, fan: Fan, algebras: AlgebraCache, dmin: int, dmax: int,
                 stalks: dict[FaceId, DegreewiseModule],
                 restrictions: dict[tuple[FaceId, FaceId], GradedMap]):
        self.fan = fan
        self.algebras = algebras
        self.dmin = dmin
        self.dmax = dmax
        self.stalks = stalks
        self.restrictions = restrictions

    def stalk(self, fid: FaceId) -> DegreewiseModule:
        fid = tuple(sorted(fid))
        if fid not in self.stalks:
            self.stalks[fid] = zero_module(self.algebras.algebra(fid), self.dmin, self.dmax)
        return self.stalks[fid]

    def restriction(self, upper: FaceId, lower: FaceId) -> GradedMap:
        upper, lower = tuple(sorted(upper)), tuple(sorted(lower))
        if upper == lower:
            return identity_map(self.stalk(upper))
        key = (upper, lower)
        if key not in self.restrictions:
            self.restrictions[key] = GradedMap(self.stalk(upper), self.stalk(lower), 0)
        return self.restrictions[key]

    def support(self) -> list[FaceId]:
        return [f for f in self.fan.face_ids() if not self.stalk(f).is_zero()]

    def is_zero(self) -> bool:
        return not self.support()

    def comparable_pairs(self):
        for upper in self.fan.face_ids():
            for lower in self.fan.boundary(upper):
                yield upper, lower

    def audit_functorial(self) -> bool:
        for upper in self.fan.face_ids():
            for mid in self.fan.boundary(upper):
                for lower in self.fan.boundary(mid):
                    direct = self.restriction(upper, lower)
                    via = self.restriction(mid, lower).compose(self.restriction(upper, mid))
                    for k in range(self.dmin, self.dmax + 1):
                        if direct.mat(k) != via.mat(k):
                            return False
        return True

    def audit_algebra_linear(self) -> bool:
        """Each restriction intertwines the upper algebra action with its
        restriction of functions."""
        for upper, lower in self.comparable_pairs():
            a_up = self.algebras.algebra(upper)
            forms = a_up.restriction_forms(lower)
            res = self.restriction(upper, lower)
            up, low = self.stalk(upper), self.stalk(lower)
            for i in range(a_up.nvars):
                for k in range(self.dmin, self.dmax - 1):
                    if up.dim(k) == 0:
                        continue
                    lhs = la.mat_mul(res.mat(k + 2), up.action(i, k))
                    form = forms[i]
                    if form:
                        rhs = la.mat_mul(low.action_of_poly(form, k), res.mat(k))
                    else:
                        rhs = la.zeros(low.dim(k + 2), up.dim(k))
                    if lhs != rhs:
                        return False
        return True

    def dump(self) -> dict:
        """Debug dump: Hilbert functions and restriction checksums."""
        out = {"faces": {}, "restrictions": {}}
        for fid in self.fan.face_ids():
            out["faces"][face_id_str(fid)] = {
                str(k): v for k, v in sorted(self.stalk(fid).hilbert_function().items())}
        for (u, l), g in sorted(self.restrictions.items()):
            blob = json.dumps(
                {str(k): [[str(x) for x in row] for row in m] for k, m in sorted(g.mats.items())},
                sort_keys=True)
            out["restrictions"][f"{face_id_str(u)}->{face_id_str(l)}"] = (
                hashlib.sha256(blob.encode()).hexdigest()[:16])
        return out


def structure_sheaf(fan: Fan, algebras: AlgebraCache | None = None,
                    dmin: int | None = None, dmax: int | None = None) -> QuiverSheaf:
    """Stalk at each face: polynomial functions on its span (free rank one,
    generator degree zero); restrictions restrict functions."""
    algebras = algebras or AlgebraCache(fan)
    if dmax is None:
        dmax = 2 * fan.ambient_rank + 6
    if dmin is None:
        dmin = -dmax
    stalks = {}
    for fid in fan.face_ids():
        a = algebras.algebra(fid)
        stalks[fid] = canonical_free_module(a, FreeModuleShape.of([0]), dmin, dmax)
    restrictions = {}
    for upper in fan.face_ids():
        a_up = algebras.algebra(upper)
        for lower in fan.boundary(upper):
            g = GradedMap(stalks[upper], stalks[lower], 0)
            for k in range(dmin, dmax + 1):
                if stalks[upper].dim(k):
                    g.set_mat(k, a_up.restriction_matrix(lower, k))
            restrictions[(upper, lower)] = g
    return QuiverSheaf(fan, algebras, dmin, dmax, stalks, restrictions)


def zero_sheaf(fan: Fan, algebras: AlgebraCache, dmin: int, dmax: int) -> QuiverSheaf:
    return QuiverSheaf(fan, algebras, dmin, dmax, {}, {})


def extension_by_zero(sheaf: QuiverSheaf, face_set) -> QuiverSheaf:
    """Zero out stalks outside a locally closed face set."""
    keep = {tuple(sorted(f)) for f in face_set}
    if not sheaf.fan.is_quasifan(keep):
        raise RangeMismatch("extension by zero requires a locally closed face set")
    stalks = {}
    restrictions = {}
    for fid in sheaf.fan.face_ids():
        if fid in keep:
            stalks[fid] = sheaf.stalk(fid)
    for (u, l), g in sheaf.restrictions.items():
        if u in keep and l in keep:
            restrictions[(u, l)] = g
    return QuiverSheaf(sheaf.fan, sheaf.algebras, sheaf.dmin, sheaf.dmax,
                       stalks, restrictions)


def shift_sheaf(sheaf: QuiverSheaf, n: int) -> QuiverSheaf:
    """The twist M{n}: degrees move down by n."""
    stalks = {fid: shift_module(m, n) for fid, m in sheaf.stalks.items()}
    restrictions = {}
    for (u, l), g in sheaf.restrictions.items():
        ng = GradedMap(stalks[u], stalks[l], 0)
        for k, m in g.mats.items():
            ng.set_mat(k - n, m)
        restrictions[(u, l)] = ng
    return QuiverSheaf(sheaf.fan, sheaf.algebras, sheaf.dmin - n, sheaf.dmax - n,
                       stalks, restrictions)


def truncate_module(m: DegreewiseModule, lo: int, hi: int) -> DegreewiseModule:
    dims = {k: d for k, d in m.dims.items() if lo <= k <= hi}
    actions = {(i, k): mat for (i, k), mat in m.actions.items()
               if lo <= k and k + 2 <= hi}
    return DegreewiseModule(m.algebra, lo, hi, dims, actions)


def truncate_sheaf(sheaf: QuiverSheaf, lo: int, hi: int) -> QuiverSheaf:
    """Restrict all stored data to the window [lo, hi]."""
    stalks = {fid: truncate_module(m, lo, hi) for fid, m in sheaf.stalks.items()}
    restrictions = {}
    for (u, l), g in sheaf.restrictions.items():
        ng = GradedMap(stalks[u], stalks[l], 0)
        for k, mat in g.mats.items():
            if lo <= k <= hi:
                ng.set_mat(k, mat)
        restrictions[(u, l)] = ng
    return QuiverSheaf(sheaf.fan, sheaf.algebras, lo, hi, stalks, restrictions)


def direct_sum_sheaves(sheaves: list[QuiverSheaf]):
    """Returns (sum sheaf, injections, projections).  Sheaves on different
    degree windows are truncated to the common window first."""
    base = sheaves[0]
    fan = base.fan
    dmin = max(s.dmin for s in sheaves)
    dmax = min(s.dmax for s in sheaves)
    if any(s.dmin != dmin or s.dmax != dmax for s in sheaves):
        sheaves = [truncate_sheaf(s, dmin, dmax) for s in sheaves]
    stalks = {}
    inj_mats: dict[FaceId, list] = {}
    for fid in fan.face_ids():
        mods = [s.stalk(fid) for s in sheaves]
        total, offsets = direct_sum_modules(mods)
        stalks[fid] = total
        inj_mats[fid] = offsets
    restrictions = {}
    for upper in fan.face_ids():
        for lower in fan.boundary(upper):
            g = GradedMap(stalks[upper], stalks[lower], 0)
            for k in range(dmin, dmax + 1):
                if stalks[upper].dim(k) == 0 or stalks[lower].dim(k) == 0:
                    continue
                blocks = {}
                for idx, s in enumerate(sheaves):
                    blocks[(idx, idx)] = s.restriction(upper, lower).mat(k)
                g.set_mat(k, la.block_matrix(
                    blocks,
                    [s.stalk(lower).dim(k) for s in sheaves],
                    [s.stalk(upper).dim(k) for s in sheaves]))
            restrictions[(upper, lower)] = g
    total_sheaf = QuiverSheaf(fan, base.algebras, dmin, dmax, stalks, restrictions)
    injections = []
    projections = []
    for idx, s in enumerate(sheaves):
        inj = SheafMap(s, total_sheaf, 0)
        proj = SheafMap(total_sheaf, s, 0)
        for fid in fan.face_ids():
            gi = GradedMap(s.stalk(fid), stalks[fid], 0)
            gp = GradedMap(stalks[fid], s.stalk(fid), 0)
            for k in range(dmin, dmax + 1):
                d = s.stalk(fid).dim(k)
                total_d = stalks[fid].dim(k)
                if d == 0 or total_d == 0:
                    continue
                off = inj_mats[fid][idx][k]
                mi = la.zeros(total_d, d)
                mp = la.zeros(d, total_d)
                for j in range(d):
                    mi[off + j][j] = Q1
                    mp[j][off + j] = Q1
                gi.set_mat(k, mi)
                gp.set_mat(k, mp)
            inj.comps[fid] = gi
            proj.comps[fid] = gp
        injections.append(inj)
        projections.append(proj)
    return total_sheaf, injections, projections


class SheafMap:
    """A sheaf morphism of internal degree `shift`: components raise the
    internal degree by shift and commute with restrictions."""

    def __init__(self, src: QuiverSheaf, dst: QuiverSheaf, shift: int = 0,
                 comps: dict[FaceId, GradedMap] | None = None):
        self.src = src
        self.dst = dst
        self.shift = shift
        self.comps = comps or {}

    def comp(self, fid: FaceId) -> GradedMap:
        fid = tuple(sorted(fid))
        if fid not in self.comps:
            self.comps[fid] = GradedMap(self.src.stalk(fid), self.dst.stalk(fid), self.shift)
        return self.comps[fid]

    def compose(self, other: "SheafMap") -> "SheafMap":
        """self after other."""
        out = SheafMap(other.src, self.dst, self.shift + other.shift)
        for fid in self.dst.fan.face_ids():
            out.comps[fid] = self.comp(fid).compose(other.comp(fid))
        return out

    def add(self, other: "SheafMap") -> "SheafMap":
        out = SheafMap(self.src, self.dst, self.shift)
        for fid in self.src.fan.face_ids():
            out.comps[fid] = self.comp(fid).add(other.comp(fid))
        return out

    def scale(self, c) -> "SheafMap":
        out = SheafMap(self.src, self.dst, self.shift)
        for fid, g in self.comps.items():
            out.comps[fid] = g.scale(c)
        return out

    def neg(self) -> "SheafMap":
        return self.scale(qq(-1))

    def is_zero(self) -> bool:
        return all(g.is_zero() for g in self.comps.values())

    def audit_commutes(self) -> bool:
        for upper, lower in self.src.comparable_pairs():
            left = self.comp(lower).compose(self.src.restriction(upper, lower))
            right = self.dst.restriction(upper, lower).compose(self.comp(upper))
            for k in range(self.src.dmin, self.src.dmax + 1):
                lm, rm = left.mat(k), right.mat(k)
                if la.shape(lm) == la.shape(rm):
                    if lm != rm:
                        return False
                elif not (la.is_zero_matrix(lm) and la.is_zero_matrix(rm)):
                    return False
        return True

    def flatten(self, degrees=None) -> list:
        """All matrix entries in a fixed order, for coordinate work."""
        out = []
        for fid in self.src.fan.face_ids():
            g = self.comp(fid)
            for k in degrees if degrees is not None else range(self.src.dmin, self.src.dmax + 1):
                m = g.mat(k)
                for row in m:
                    out.extend(row)
        return out


def identity_sheaf_map(sheaf: QuiverSheaf) -> SheafMap:
    f = SheafMap(sheaf, sheaf, 0)
    for fid in sheaf.fan.face_ids():
        f.comps[fid] = identity_map(sheaf.stalk(fid))
    return f


def zero_sheaf_map(src: QuiverSheaf, dst: QuiverSheaf, shift: int = 0) -> SheafMap:
    return SheafMap(src, dst, shift)


def kernel_sheaf(f: SheafMap):
    """Stalkwise kernel with induced restrictions.  Returns (sheaf, inclusion)."""
    fan = f.src.fan
    stalks = {}
    embeds = {}
    for fid in fan.face_ids():
        ker, embed = kernel_degreewise(f.comp(fid))
        stalks[fid] = ker
        embeds[fid] = embed
    restrictions = {}
    for upper in fan.face_ids():
        for lower in fan.boundary(upper):
            g = GradedMap(stalks[upper], stalks[lower], 0)
            res = f.src.restriction(upper, lower)
            for k in range(f.src.dmin, f.src.dmax + 1):
                if stalks[upper].dim(k) == 0:
                    continue
                target = la.mat_mul(res.mat(k), embeds[upper].mat(k))
                if stalks[lower].dim(k) == 0:
                    if not la.is_zero_matrix(target):
                        raise RangeMismatch("kernel not closed under restriction")
                    continue
                sol = la.solve_matrix(embeds[lower].mat(k), target)
                if sol is None:
                    raise RangeMismatch("kernel not closed under restriction")
                g.set_mat(k, sol)
            restrictions[(upper, lower)] = g
    ker_sheaf = QuiverSheaf(fan, f.src.algebras, f.src.dmin, f.src.dmax,
                            stalks, restrictions)
    incl = SheafMap(ker_sheaf, f.src, 0,
                    {fid: embeds[fid] for fid in fan.face_ids()})
    return ker_sheaf, incl


def cokernel_sheaf(f: SheafMap):
    """Stalkwise cokernel with induced restrictions.  Returns (sheaf, projection)."""
    fan = f.dst.fan
    stalks = {}
    projs = {}
    for fid in fan.face_ids():
        g = f.comp(fid)
        image = {}
        for k in range(f.src.dmin, f.src.dmax + 1):
            cols = la.column_space_basis(g.mat(k))
            if cols:
                image[k + f.shift] = cols
        quot, proj = quotient_module(f.dst.stalk(fid), image)
        stalks[fid] = quot
        projs[fid] = proj
    restrictions = {}
    for upper in fan.face_ids():
        for lower in fan.boundary(upper):
            g = GradedMap(stalks[upper], stalks[lower], 0)
            res = f.dst.restriction(upper, lower)
            for k in range(f.dst.dmin, f.dst.dmax + 1):
                if stalks[upper].dim(k) == 0 or stalks[lower].dim(k) == 0:
                    continue
                # induced map X with X proj_up = proj_low res
                rhs = la.mat_mul(projs[lower].mat(k), res.mat(k))
                sol = la.solve_matrix(la.transpose(projs[upper].mat(k)), la.transpose(rhs))
                if sol is None:
                    raise RangeMismatch("image not closed under restriction")
                g.set_mat(k, la.transpose(sol))
            restrictions[(upper, lower)] = g
    cok_sheaf = QuiverSheaf(fan, f.dst.algebras, f.dst.dmin, f.dst.dmax,
                            stalks, restrictions)
    proj_map = SheafMap(f.dst, cok_sheaf, 0, {fid: projs[fid] for fid in fan.face_ids()})
    return cok_sheaf, proj_map


# -- sections ------------------------------------------------------------


@dataclass
class SectionModule:
    """Compatible tuples over a quasifan, realized inside the product of its
    stalks.  The module carries the action of the designated over-face."""

    faces: tuple[FaceId, ...]
    over: FaceId
    module: DegreewiseModule
    ambient: DegreewiseModule
    embed: GradedMap
    offsets: dict

    def component_matrix(self, fid: FaceId, stalk_dim, k: int):
        """Matrix sections_k -> stalk(fid)_k."""
        emb = self.embed.mat(k)
        off = self.offsets[fid].get(k, 0)
        d = stalk_dim
        rows = emb[off:off + d] if emb else []
        if not rows:
            return la.zeros(d, self.module.dim(k))
        return [row[:] for row in rows]


def sections(sheaf: QuiverSheaf, delta, over: FaceId) -> SectionModule:
    """Equalizer of the restriction maps over a quasifan, degreewise."""
    fan = sheaf.fan
    delta = sorted({tuple(sorted(f)) for f in delta},
                   key=lambda f: (fan.faces[f].dim, f))
    if not fan.is_quasifan(delta):
        raise RangeMismatch("sections need a locally closed face set")
    over = tuple(sorted(over))
    if not all(fan.le(f, over) for f in delta):
        over = ()
    a_over = sheaf.algebras.algebra(over)
    if not delta:
        empty = zero_module(a_over, sheaf.dmin, sheaf.dmax)
        return SectionModule((), over, empty, empty,
                             GradedMap(empty, empty, 0), {})
    mods = [sheaf.stalk(f) for f in delta]
    dims = {}
    offsets = {f: {} for f in delta}
    for k in range(sheaf.dmin, sheaf.dmax + 1):
        off = 0
        for f, m in zip(delta, mods):
            offsets[f][k] = off
            off += m.dim(k)
        if off:
            dims[k] = off
    actions = {}
    forms_by_face = {}
    for f in delta:
        if a_over.nvars:
            forms_by_face[f] = a_over.restriction_forms(f) if f != over else None
    for i in range(a_over.nvars):
        for k in range(sheaf.dmin, sheaf.dmax - 1):
            if not dims.get(k) or not dims.get(k + 2):
                continue
            blocks = {}
            for idx, (f, m) in enumerate(zip(delta, mods)):
                forms = forms_by_face.get(f)
                if forms is None:
                    blocks[(idx, idx)] = m.action(i, k)
                else:
                    form = forms[i]
                    if form:
                        blocks[(idx, idx)] = m.action_of_poly(form, k)
                    else:
                        blocks[(idx, idx)] = la.zeros(m.dim(k + 2), m.dim(k))
            actions[(i, k)] = la.block_matrix(
                blocks, [m.dim(k + 2) for m in mods], [m.dim(k) for m in mods])
    ambient = DegreewiseModule(a_over, sheaf.dmin, sheaf.dmax, dims, actions)
    vectors = {}
    pairs = [(u, l) for u in delta for l in delta
             if u != l and fan.le(l, u)]
    for k in range(sheaf.dmin, sheaf.dmax + 1):
        n = ambient.dim(k)
        if n == 0:
            continue
        rows = []
        for (u, l) in pairs:
            up_dim = sheaf.stalk(u).dim(k)
            low_dim = sheaf.stalk(l).dim(k)
            if low_dim == 0:
                continue
            block = la.zeros(low_dim, n)
            res = sheaf.restriction(u, l).mat(k)
            uo, lo = offsets[u][k], offsets[l][k]
            for r in range(low_dim):
                for c in range(up_dim):
                    if res[r][c]:
                        block[r][uo + c] = res[r][c]
                block[r][lo + r] -= Q1
            rows.append(block)
        if rows:
            ker = la.kernel_basis(la.vstack(rows))
        else:
            ker = [la.e_vector(n, j) for j in range(n)]
        if ker:
            vectors[k] = ker
    module, embed = submodule(ambient, vectors)
    return SectionModule(tuple(delta), over, module, ambient, embed, offsets)


def boundary_sections(sheaf: QuiverSheaf, tau: FaceId) -> SectionModule:
    return sections(sheaf, sheaf.fan.boundary(tau), tau)


def restriction_to_sections(sheaf: QuiverSheaf, tau: FaceId,
                            sec: SectionModule) -> GradedMap:
    """The map stalk(tau) -> sections(delta) induced by restrictions,
    for delta below tau."""
    tau = tuple(sorted(tau))
    stalk = sheaf.stalk(tau)
    g = GradedMap(stalk, sec.module, 0)
    for k in range(sheaf.dmin, sheaf.dmax + 1):
        n = stalk.dim(k)
        if n == 0 or sec.ambient.dim(k) == 0:
            if n and sec.module.dim(k):
                raise RangeMismatch("ambient empty but sections nonzero")
            continue
        rows = []
        for f in sec.faces:
            d = sheaf.stalk(f).dim(k)
            if d == 0:
                continue
            rows.append(sheaf.restriction(tau, f).mat(k))
        big = la.vstack(rows) if rows else la.zeros(0, n)
        if sec.module.dim(k) == 0:
            if not la.is_zero_matrix(big):
                raise RangeMismatch("restriction image misses section space")
            continue
        sol = la.solve_matrix(sec.embed.mat(k), big)
        if sol is None:
            raise RangeMismatch("restriction tuple is not compatible")
        g.set_mat(k, sol)
    return g


def relative_sections(sheaf: QuiverSheaf, tau: FaceId):
    """Kernel of stalk(tau) -> sections over the boundary.
    Returns (module, embedding into the stalk)."""
    tau = tuple(sorted(tau))
    stalk = sheaf.stalk(tau)
    boundary = sheaf.fan.boundary(tau)
    vectors = {}
    for k in range(sheaf.dmin, sheaf.dmax + 1):
        n = stalk.dim(k)
        if n == 0:
            continue
        rows = []
        for f in boundary:
            if sheaf.stalk(f).dim(k):
                rows.append(sheaf.restriction(tau, f).mat(k))
        if rows:
            ker = la.kernel_basis(la.vstack(rows))
        else:
            ker = [la.e_vector(n, j) for j in range(n)]
        if ker:
            vectors[k] = ker
    return submodule(stalk, vectors)


# -- predicates ----------------------------------------------------------


def predicates(sheaf: QuiverSheaf) -> dict:
    """Locally free, flabby and pure flags with per-face diagnostics."""
    locally_free = True
    flabby = True
    detail = {}
    for fid in sheaf.fan.face_ids():
        stalk = sheaf.stalk(fid)
        shape = certify_free(stalk)
        face_free = shape is not None
        sec = boundary_sections(sheaf, fid)
        if stalk.is_zero():
            face_flabby = sec.module.is_zero()
        else:
            try:
                to_sections = restriction_to_sections(sheaf, fid, sec)
                face_flabby = to_sections.is_surjective_degreewise(
                    range(sheaf.dmin, sheaf.dmax + 1))
            except RangeMismatch:
                face_flabby = False
        detail[fid] = {
            "locally_free": face_free,
            "flabby": face_flabby,
            "shape": list(shape.generator_degrees) if shape else None,
        }
        locally_free = locally_free and face_free
        flabby = flabby and face_flabby
    return {
        "is_locally_free": locally_free,
        "is_flabby": flabby,
        "is_pure": locally_free and flabby,
        "faces": detail,
    }


def canonicalize_locally_free(sheaf: QuiverSheaf):
    """Rebuild a locally free sheaf on canonical free stalks.
    Returns (canonical sheaf, iso: canonical -> sheaf, shapes per face)."""
    fan = sheaf.fan
    stalks = {}
    isos = {}
    shapes = {}
    for fid in fan.face_ids():
        stalk = sheaf.stalk(fid)
        if stalk.is_zero():
            stalks[fid] = zero_module(sheaf.algebras.algebra(fid), sheaf.dmin, sheaf.dmax)
            isos[fid] = GradedMap(stalks[fid], stalk, 0)
            shapes[fid] = FreeModuleShape.of([])
            continue
        shape, cover, f = free_cover(stalk)
        if certify_free(stalk) is None:
            raise RangeMismatch(f"stalk at {face_id_str(fid)} is not free")
        stalks[fid] = cover
        isos[fid] = f
        shapes[fid] = shape
    restrictions = {}
    for upper in fan.face_ids():
        for lower in fan.boundary(upper):
            g = GradedMap(stalks[upper], stalks[lower], 0)
            res = sheaf.restriction(upper, lower)
            for k in range(sheaf.dmin, sheaf.dmax + 1):
                if stalks[upper].dim(k) == 0 or stalks[lower].dim(k) == 0:
                    continue
                rhs = la.mat_mul(res.mat(k), isos[upper].mat(k))
                sol = la.solve_matrix(isos[lower].mat(k), rhs)
                if sol is None:
                    raise RangeMismatch("canonicalization failed on a restriction")
                g.set_mat(k, sol)
            restrictions[(upper, lower)] = g
    canon = QuiverSheaf(fan, sheaf.algebras, sheaf.dmin, sheaf.dmax,
                        stalks, restrictions)
    iso = SheafMap(canon, sheaf, 0, isos)
    return canon, iso, shapes
