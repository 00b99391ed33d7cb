"""Bounded complexes of sheaves and the homotopy category of pure ones.

Two representations cooperate here.  A SheafComplex holds realized sheaves
and sheaf-map differentials; it knows its cohomology degreewise and is what
resolutions produce.  A PureComplex is labelled: each term is a formal sum
of blocks L^sigma{n} and the differential is stored blockwise, which is
what the perverse truncation and the weight bookkeeping act on.  Label
complexes realize to sheaf complexes on demand.

Conventions: X[k]^i = X^{i+k} with differential (-1)^k d; X{n} twists every
term down by n; <n> = [n]{-n}.  The cone of f: X -> Y has terms
X^{i+1} (+) Y^i and differential [[-d_X, 0], [f, d_Y]].
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import linalg as la
from .errors import NotInHeart, NotPure, ShiftMismatch
from .fan import FaceId
from .graded import GradedMap
from .linalg import Q0, Q1, qq
from .pure import Context, decompose, hom_sheaf_maps, pure_summand_sheaf
from .sheaf import (
    QuiverSheaf,
    SheafMap,
    direct_sum_sheaves,
    shift_sheaf,
    truncate_sheaf,
    zero_sheaf_map,
)


def shift_sheaf_map(f: SheafMap, n: int) -> SheafMap:
    """The same map viewed between the {n}-twisted sheaves."""
    src = shift_sheaf(f.src, n)
    dst = shift_sheaf(f.dst, n)
    out = SheafMap(src, dst, f.shift)
    for fid, g in f.comps.items():
        ng = GradedMap(src.stalk(fid), dst.stalk(fid), f.shift)
        for k, m in g.mats.items():
            ng.set_mat(k - n, m)
        out.comps[fid] = ng
    return out


def invert_sheaf_iso(f: SheafMap) -> SheafMap:
    """Inverse of a degreewise bijective degree-zero sheaf map."""
    out = SheafMap(f.dst, f.src, 0)
    lo = max(f.src.dmin, f.dst.dmin)
    hi = min(f.src.dmax, f.dst.dmax)
    for fid in f.src.fan.face_ids():
        g = GradedMap(f.dst.stalk(fid), f.src.stalk(fid), 0)
        for k in range(lo, hi + 1):
            d = f.src.stalk(fid).dim(k)
            if d:
                g.set_mat(k, la.inverse(f.comp(fid).mat(k)))
        out.comps[fid] = g
    return out


class SheafComplex:
    def __init__(self, fan, algebras, dmin, dmax,
                 terms: dict[int, QuiverSheaf], diffs: dict[int, SheafMap]):
        self.fan = fan
        self.algebras = algebras
        self.dmin = dmin
        self.dmax = dmax
        self.terms = {i: t for i, t in terms.items() if not t.is_zero()}
        self.diffs = diffs

    @staticmethod
    def single(sheaf: QuiverSheaf, degree: int = 0) -> "SheafComplex":
        return SheafComplex(sheaf.fan, sheaf.algebras, sheaf.dmin, sheaf.dmax,
                            {degree: sheaf}, {})

    def degrees(self):
        return sorted(self.terms)

    def term(self, i: int) -> QuiverSheaf:
        if i in self.terms:
            return self.terms[i]
        return QuiverSheaf(self.fan, self.algebras, self.dmin, self.dmax, {}, {})

    def diff(self, i: int) -> SheafMap:
        if i in self.diffs:
            return self.diffs[i]
        return zero_sheaf_map(self.term(i), self.term(i + 1))

    def is_zero(self) -> bool:
        return not self.terms

    def d2_audit(self) -> bool:
        for i in self.degrees():
            comp = self.diff(i + 1).compose(self.diff(i))
            if not comp.is_zero():
                return False
        return True

    def audit_chain_shapes(self) -> bool:
        for i, f in self.diffs.items():
            if not f.audit_commutes():
                return False
        return True

    def shift(self, k: int) -> "SheafComplex":
        terms = {i - k: t for i, t in self.terms.items()}
        sign = Q1 if k % 2 == 0 else qq(-1)
        diffs = {i - k: f.scale(sign) for i, f in self.diffs.items()}
        return SheafComplex(self.fan, self.algebras, self.dmin, self.dmax, terms, diffs)

    def twist(self, n: int) -> "SheafComplex":
        terms = {i: shift_sheaf(t, n) for i, t in self.terms.items()}
        diffs = {i: shift_sheaf_map(f, n) for i, f in self.diffs.items()}
        return SheafComplex(self.fan, self.algebras, self.dmin - n, self.dmax - n,
                            terms, diffs)

    def cohomology_dims(self, margin: int = 2) -> dict:
        """dims of H^i per (face, internal degree) on the safe window."""
        out = {}
        lo = max([self.dmin] + [t.dmin for t in self.terms.values()]) + margin
        hi = min([self.dmax] + [t.dmax for t in self.terms.values()]) - margin
        if not self.terms:
            return out
        degs = range(min(self.degrees()) - 1, max(self.degrees()) + 2)
        for i in degs:
            for fid in self.fan.face_ids():
                cur = self.term(i).stalk(fid)
                for k in range(lo, hi + 1):
                    n = cur.dim(k)
                    if n == 0:
                        continue
                    dmat = self.diff(i).comp(fid).mat(k)
                    nxt = self.term(i + 1).stalk(fid).dim(k)
                    rank_out = la.rank(dmat) if nxt else 0
                    prev = self.term(i - 1).stalk(fid).dim(k)
                    rank_in = la.rank(self.diff(i - 1).comp(fid).mat(k)) if prev else 0
                    h = n - rank_out - rank_in
                    if h:
                        out[(i, fid, k)] = h
        return out

    def is_acyclic(self, margin: int = 2) -> bool:
        return not self.cohomology_dims(margin)


def cone(f_maps: dict[int, SheafMap], x: SheafComplex, y: SheafComplex) -> SheafComplex:
    """Mapping cone of a chain map f: X -> Y given by termwise components."""
    terms = {}
    injections = {}
    degrees = sorted(set([i - 1 for i in x.degrees()] + list(y.degrees())))
    for i in degrees:
        parts = [x.term(i + 1), y.term(i)]
        total, injs, projs = direct_sum_sheaves(parts)
        terms[i] = total
        injections[i] = (injs, projs)
    diffs = {}
    for i in degrees:
        if i + 1 not in terms:
            continue
        injs1, projs1 = injections[i + 1]
        injs0, projs0 = injections[i]
        dx = x.diff(i + 1).scale(qq(-1))
        dy = y.diff(i)
        fi = f_maps.get(i + 1, zero_sheaf_map(x.term(i + 1), y.term(i + 1)))
        d = injs1[0].compose(dx.compose(projs0[0]))
        d = d.add(injs1[1].compose(fi.compose(projs0[0])))
        d = d.add(injs1[1].compose(dy.compose(projs0[1])))
        diffs[i] = d
    return SheafComplex(x.fan, x.algebras,
                        max(x.dmin, y.dmin), min(x.dmax, y.dmax), terms, diffs)


# -- labelled pure complexes ----------------------------------------------


@dataclass(frozen=True, order=True)
class Block:
    sigma: FaceId
    shift: int

    def __repr__(self):
        return f"L{list(self.sigma)}{{{self.shift}}}"


class PureComplex:
    """Bounded complex of formal sums of blocks L^sigma{n}."""

    def __init__(self, ctx: Context, terms: dict[int, tuple],
                 blocks: dict[int, dict] | None = None):
        self.ctx = ctx
        self.terms = {i: tuple(t) for i, t in terms.items() if t}
        # blocks[i][(q, p)] : SheafMap from realization of term-i block p to
        # realization of term-(i+1) block q
        self.blocks = blocks or {}
        self._realized: dict[int, QuiverSheaf] = {}

    # -- structure ----------------------------------------------------------

    def degrees(self):
        return sorted(self.terms)

    def labels(self, i: int) -> tuple:
        return self.terms.get(i, ())

    def is_zero(self) -> bool:
        return not self.terms

    def block_sheaf(self, b: Block) -> QuiverSheaf:
        key = ("block", b.sigma, b.shift)
        cache = self.ctx._homs
        if key not in cache:
            cache[key] = shift_sheaf(self.ctx.ic(b.sigma).sheaf, b.shift)
        return cache[key]

    def block_map(self, i: int, q: int, p: int) -> SheafMap:
        entry = self.blocks.get(i, {}).get((q, p))
        if entry is None:
            return zero_sheaf_map(self.block_sheaf(self.labels(i)[p]),
                                  self.block_sheaf(self.labels(i + 1)[q]))
        return entry

    def set_block(self, i: int, q: int, p: int, f: SheafMap):
        self.blocks.setdefault(i, {})[(q, p)] = f

    def realize_term(self, i: int):
        """Realized term with its injections and projections (cached)."""
        if not hasattr(self, "_term_cache"):
            self._term_cache = {}
        if i not in self._term_cache:
            labels = self.labels(i)
            self._term_cache[i] = pure_summand_sheaf(
                self.ctx, [(b.sigma, b.shift) for b in labels])
        return self._term_cache[i]

    def realize(self) -> SheafComplex:
        terms = {}
        parts = {}
        for i in self.degrees():
            total, injs, projs = self.realize_term(i)
            terms[i] = total
            parts[i] = (injs, projs)
        diffs = {}
        for i in self.degrees():
            if i + 1 not in terms:
                continue
            injs1, _ = parts[i + 1]
            _, projs0 = parts[i]
            d = None
            for (q, p), f in self.blocks.get(i, {}).items():
                term = injs1[q].compose(f.compose(projs0[p]))
                d = term if d is None else d.add(term)
            if d is not None:
                diffs[i] = d
        return SheafComplex(self.ctx.fan, self.ctx.algebras,
                            self.ctx.dmin, self.ctx.dmax, terms, diffs)

    def d2_audit(self) -> bool:
        for i in self.degrees():
            if i + 1 not in self.terms or i + 2 not in self.terms:
                continue
            for r in range(len(self.labels(i + 2))):
                for p in range(len(self.labels(i))):
                    acc = None
                    for q in range(len(self.labels(i + 1))):
                        f = self.blocks.get(i, {}).get((q, p))
                        g = self.blocks.get(i + 1, {}).get((r, q))
                        if f is None or g is None:
                            continue
                        term = g.compose(f)
                        acc = term if acc is None else acc.add(term)
                    if acc is not None and not acc.is_zero():
                        return False
        return True

    # -- shifts and twists ---------------------------------------------------

    def shift(self, k: int) -> "PureComplex":
        """Cohomological shift [k]."""
        terms = {i - k: t for i, t in self.terms.items()}
        blocks = {}
        sign = Q1 if k % 2 == 0 else qq(-1)
        for i, bl in self.blocks.items():
            blocks[i - k] = {key: f.scale(sign) for key, f in bl.items()}
        return PureComplex(self.ctx, terms, blocks)

    def twist(self, n: int) -> "PureComplex":
        """Internal twist {n}."""
        terms = {i: tuple(Block(b.sigma, b.shift + n) for b in t)
                 for i, t in self.terms.items()}
        blocks = {}
        for i, bl in self.blocks.items():
            blocks[i] = {key: shift_sheaf_map(f, n) for key, f in bl.items()}
        return PureComplex(self.ctx, terms, blocks)

    def angle(self, n: int) -> "PureComplex":
        """<n> = [n]{-n}."""
        return self.shift(n).twist(-n)

    def is_heart_shape(self) -> bool:
        return all(b.shift == i for i, t in self.terms.items() for b in t)

    def multiset(self) -> tuple:
        out = []
        for i in self.degrees():
            for b in self.labels(i):
                out.append((i, b.sigma, b.shift))
        return tuple(sorted(out))

    def scalar_entry(self, i: int, q: int, p: int):
        """Scalar of a block map between blocks with the same (sigma, shift);
        None when the labels differ."""
        bp = self.labels(i)[p]
        bq = self.labels(i + 1)[q]
        if bp != bq:
            return None
        f = self.blocks.get(i, {}).get((q, p))
        if f is None:
            return Q0
        d = -self.ctx.fan.face(bp.sigma).codim - bp.shift
        m = f.comp(bp.sigma).mat(d)
        return m[0][0] if m and m[0] else Q0


def single_block_complex(ctx: Context, sigma: FaceId, shift: int = 0,
                         degree: int = 0) -> PureComplex:
    return PureComplex(ctx, {degree: (Block(tuple(sorted(sigma)), shift),)})


def hom_block(ctx: Context, src: Block, dst: Block, coeffs) -> SheafMap:
    """Realize a block map src -> dst from coordinates in the cached basis
    of Hom(L^src, L^dst{dst.shift - src.shift})."""
    basis = ctx.hom_basis(src.sigma, dst.sigma, dst.shift - src.shift)
    f = basis.element(list(coeffs))
    return shift_sheaf_map(f, src.shift)


def pure_complex_from_sheaf_complex(ctx: Context, sc: SheafComplex) -> PureComplex:
    """Decompose each (pure) term and transport the differentials to blocks."""
    decs = {}
    for i in sc.degrees():
        decs[i] = decompose(ctx, sc.terms[i])
    terms = {}
    blocks = {}
    for i in sc.degrees():
        terms[i] = tuple(Block(s, n) for (s, n) in decs[i].summands)
    for i in sc.degrees():
        if i + 1 not in decs:
            continue
        iso_i = decs[i].iso
        iso_next_inv = invert_sheaf_iso(decs[i + 1].iso)
        conj = iso_next_inv.compose(sc.diff(i).compose(iso_i))
        bl = {}
        for q in range(len(terms[i + 1])):
            for p in range(len(terms[i])):
                f = decs[i + 1].projections[q].compose(
                    conj.compose(decs[i].injections[p]))
                if not f.is_zero():
                    bl[(q, p)] = f
        if bl:
            blocks[i] = bl
    return PureComplex(ctx, terms, blocks)


# -- Hom and homotopy ------------------------------------------------------


def kb_hom(x, y, n: int = 0, with_basis: bool = False):
    """Chain maps x -> y{n} modulo chain homotopy.

    Accepts PureComplex or SheafComplex arguments whose terms have certified
    free stalks.  Returns the dimension, or (dimension, representatives).
    """
    xc = x.realize() if isinstance(x, PureComplex) else x
    yc = y.realize() if isinstance(y, PureComplex) else y
    yt = yc.twist(n)
    degrees = sorted(set(xc.degrees()) | set(yt.degrees()))
    if not degrees:
        return (0, []) if with_basis else 0
    chain_spaces = {}
    for i in degrees:
        if xc.term(i).is_zero() or yt.term(i).is_zero():
            chain_spaces[i] = None
        else:
            chain_spaces[i] = hom_sheaf_maps(xc.term(i), yt.term(i))
    widths = {i: (s.dim if s else 0) for i, s in chain_spaces.items()}
    total = sum(widths.values())
    if total == 0:
        return (0, []) if with_basis else 0
    offsets = {}
    off = 0
    for i in degrees:
        offsets[i] = off
        off += widths[i]

    def constraint_rows():
        rows = []
        for i in degrees:
            tgt_src = xc.term(i)
            tgt_dst = yt.term(i + 1)
            if tgt_src.is_zero() or tgt_dst.is_zero():
                continue
            slot = hom_sheaf_maps(tgt_src, tgt_dst)
            if slot.width == 0:
                continue
            cols = {}
            if chain_spaces.get(i):
                for b_idx, b in enumerate(chain_spaces[i].basis):
                    comp = yt.diff(i).compose(b)
                    cols[(i, b_idx)] = slot.flat(comp)
            if chain_spaces.get(i + 1):
                for b_idx, b in enumerate(chain_spaces[i + 1].basis):
                    comp = b.compose(xc.diff(i))
                    v = slot.flat(comp)
                    cols[(i + 1, b_idx)] = [-t for t in v]
            if not cols:
                continue
            block = la.zeros(slot.width, total)
            for (j, b_idx), v in cols.items():
                for r in range(slot.width):
                    if v[r]:
                        block[r][offsets[j] + b_idx] += v[r]
            rows.append(block)
        return rows

    rows = constraint_rows()
    chain_vectors = la.kernel_basis(la.vstack(rows)) if rows else [
        la.e_vector(total, j) for j in range(total)]
    # homotopies h^i: x^i -> y^{i-1}{n}; their boundaries d h + h d
    boundary_cols = []
    for i in degrees:
        if xc.term(i).is_zero() or yt.term(i - 1).is_zero():
            continue
        hspace = hom_sheaf_maps(xc.term(i), yt.term(i - 1))
        for b in hspace.basis:
            vec = [Q0] * total
            up = yt.diff(i - 1).compose(b)
            if chain_spaces.get(i):
                for r, val in enumerate(chain_spaces[i].coordinates(up) or []):
                    vec[offsets[i] + r] += val
            down = b.compose(xc.diff(i - 1))
            if chain_spaces.get(i - 1):
                for r, val in enumerate(chain_spaces[i - 1].coordinates(down) or []):
                    vec[offsets[i - 1] + r] += val
            if any(x_ for x_ in vec):
                boundary_cols.append(vec)
    if chain_vectors:
        z_mat = la.from_columns(chain_vectors, total)
        b_rank = 0
        if boundary_cols:
            b_rank = la.rank(la.from_columns(boundary_cols, total))
        dim = len(chain_vectors) - b_rank
    else:
        dim = 0
    if not with_basis:
        return dim
    # quotient representatives: extend the boundary basis inside the cycles
    reps = []
    if chain_vectors:
        span = [c[:] for c in boundary_cols]
        span_rank = la.rank(la.from_columns(span, total)) if span else 0
        for v in chain_vectors:
            trial = span + [v]
            trial_rank = la.rank(la.from_columns(trial, total))
            if trial_rank > span_rank:
                span, span_rank = trial, trial_rank
                reps.append(v)
            if len(reps) == dim:
                break
    rep_maps = []
    for v in reps:
        comps = {}
        for i in degrees:
            if chain_spaces.get(i):
                coeffs = v[offsets[i]:offsets[i] + widths[i]]
                comps[i] = chain_spaces[i].element(coeffs)
        rep_maps.append(comps)
    return dim, rep_maps


# -- perverse truncation, heart, weights -----------------------------------


def _grouped_scalar_matrix(x: PureComplex, i: int, j: int):
    """Scalar matrices of d^i between shift-j blocks, grouped by sigma.
    Returns {sigma: (rows_idx, cols_idx, matrix)} over block positions."""
    src = [p for p, b in enumerate(x.labels(i)) if b.shift == j]
    dst = [q for q, b in enumerate(x.labels(i + 1)) if b.shift == j]
    groups = {}
    sigmas = {x.labels(i)[p].sigma for p in src} | {x.labels(i + 1)[q].sigma for q in dst}
    for sig in sorted(sigmas):
        cols = [p for p in src if x.labels(i)[p].sigma == sig]
        rows = [q for q in dst if x.labels(i + 1)[q].sigma == sig]
        m = la.zeros(len(rows), len(cols))
        for r, q in enumerate(rows):
            for c, p in enumerate(cols):
                m[r][c] = x.scalar_entry(i, q, p)
        groups[sig] = (rows, cols, m)
    return groups


def _scalar_combo_map(x: PureComplex, i: int, target_labels, combos,
                      into: bool):
    """Realized map between term i of x and the formal sum target_labels,
    where each target block is a scalar combination of same-label x-blocks.
    into=True builds sum(target) -> x^i, else x^i -> sum(target)."""
    ctx = x.ctx
    x_total, x_injs, x_projs = x.realize_term(i)
    t_total, t_injs, t_projs = pure_summand_sheaf(
        ctx, [(b.sigma, b.shift) for b in target_labels])
    acc = None
    for idx, combo in enumerate(combos):
        for p, c in combo.items():
            ident = identity_block_map(ctx, x.labels(i)[p])
            if into:
                term = x_injs[p].compose(ident.scale(c).compose(t_projs[idx]))
            else:
                term = t_injs[idx].compose(ident.scale(c).compose(x_projs[p]))
            acc = term if acc is None else acc.add(term)
    if acc is None:
        if into:
            acc = zero_sheaf_map(t_total, x_total)
        else:
            acc = zero_sheaf_map(x_total, t_total)
    return acc, (t_total, t_injs, t_projs)


def identity_block_map(ctx: Context, b: Block) -> SheafMap:
    key = ("ident", b.sigma, b.shift)
    if key not in ctx._homs:
        base = ctx.hom_basis(b.sigma, b.sigma, 0)
        f = base.basis[0]
        # normalize so the map is the identity on the seed generator
        d = -ctx.fan.face(b.sigma).codim
        c = f.comp(b.sigma).mat(d)[0][0]
        ctx._homs[key] = shift_sheaf_map(f.scale(Q1 / c), b.shift)
    return ctx._homs[key]


def _solve_induced_diff(incl_next: SheafMap, composite: SheafMap) -> SheafMap:
    """d' with incl_next d' = composite (for subcomplexes)."""
    out = SheafMap(composite.src, incl_next.src, 0)
    for fid in composite.src.fan.face_ids():
        g = GradedMap(composite.src.stalk(fid), incl_next.src.stalk(fid), 0)
        for k in range(composite.src.dmin, composite.src.dmax + 1):
            if composite.src.stalk(fid).dim(k) == 0:
                continue
            if incl_next.src.stalk(fid).dim(k) == 0:
                if not la.is_zero_matrix(composite.comp(fid).mat(k)):
                    raise NotPure("not a subcomplex")
                continue
            sol = la.solve_matrix(incl_next.comp(fid).mat(k),
                                  composite.comp(fid).mat(k))
            if sol is None:
                raise NotPure("not a subcomplex")
            g.set_mat(k, sol)
        out.comps[fid] = g
    return out


def _solve_quotient_diff(proj_cur: SheafMap, composite: SheafMap) -> SheafMap:
    """d' with d' proj_cur = composite (for quotient complexes).
    composite: x^i -> n^{i+1}; proj_cur: x^i -> n^i; returns n^i -> n^{i+1}."""
    src = proj_cur.dst
    out = SheafMap(src, composite.dst, 0)
    for fid in composite.src.fan.face_ids():
        g = GradedMap(src.stalk(fid), composite.dst.stalk(fid), 0)
        for k in range(composite.src.dmin, composite.src.dmax + 1):
            if src.stalk(fid).dim(k) == 0:
                if not la.is_zero_matrix(composite.comp(fid).mat(k)):
                    raise NotPure("differential does not descend to the quotient")
                continue
            sol = la.solve_matrix(la.transpose(proj_cur.comp(fid).mat(k)),
                                  la.transpose(composite.comp(fid).mat(k)))
            if sol is None:
                raise NotPure("differential does not descend to the quotient")
            g.set_mat(k, la.transpose(sol))
        out.comps[fid] = g
    return out


def truncate(x: PureComplex):
    """Perverse truncation: a subcomplex E in K^{<=0} and quotient N with a
    degreewise split exact sequence 0 -> E -> X -> N -> 0.  N reduces to
    K^{>=1} shape after stripping its split acyclic part.

    Returns (E, N, incl_maps, proj_maps) with the maps per degree realized.
    """
    ctx = x.ctx
    e_terms, n_terms = {}, {}
    e_combos, n_combos = {}, {}
    for i in x.degrees():
        labels = x.labels(i)
        e_list, e_vecs = [], []
        n_list, n_projs = [], []
        for p, b in enumerate(labels):
            if b.shift > i:
                e_list.append(b)
                e_vecs.append({p: Q1})
        groups = _grouped_scalar_matrix(x, i, i)
        for sig in sorted(groups):
            rows, cols, m = groups[sig]
            if not cols:
                continue
            ker = la.kernel_basis(m) if rows else [
                la.e_vector(len(cols), j) for j in range(len(cols))]
            for v in ker:
                e_list.append(Block(sig, i))
                e_vecs.append({cols[c]: v[c] for c in range(len(cols)) if v[c]})
            comp = la.complement_indices(ker, len(cols))
            if comp:
                full = [list(kv) for kv in ker] + [
                    la.e_vector(len(cols), c) for c in comp]
                inv = la.inverse(la.from_columns(full, len(cols)))
                for r in range(len(ker), len(cols)):
                    n_list.append(Block(sig, i))
                    n_projs.append(
                        {cols[c]: inv[r][c] for c in range(len(cols)) if inv[r][c]})
        for p, b in enumerate(labels):
            if b.shift < i:
                n_list.append(b)
                n_projs.append({p: Q1})
        e_terms[i], e_combos[i] = tuple(e_list), e_vecs
        n_terms[i], n_combos[i] = tuple(n_list), n_projs
    x_real = x.realize()
    e = PureComplex(ctx, e_terms)
    n = PureComplex(ctx, n_terms)
    incl_maps, proj_maps = {}, {}
    e_parts, n_parts = {}, {}
    for i in x.degrees():
        incl, parts = _scalar_combo_map(x, i, e_terms[i], e_combos[i], into=True)
        incl_maps[i] = incl
        e_parts[i] = parts
        proj, partsn = _scalar_combo_map(x, i, n_terms[i], n_combos[i], into=False)
        proj_maps[i] = proj
        n_parts[i] = partsn
    for i in x.degrees():
        if i + 1 not in x.terms:
            continue
        de = _solve_induced_diff(incl_maps[i + 1], x_real.diff(i).compose(incl_maps[i]))
        for q in range(len(e_terms[i + 1])):
            for p in range(len(e_terms[i])):
                f = e_parts[i + 1][2][q].compose(de.compose(e_parts[i][1][p]))
                if not f.is_zero():
                    e.set_block(i, q, p, f)
        dn = _solve_quotient_diff(proj_maps[i], proj_maps[i + 1].compose(x_real.diff(i)))
        for q in range(len(n_terms[i + 1])):
            for p in range(len(n_terms[i])):
                f = n_parts[i + 1][2][q].compose(dn.compose(n_parts[i][1][p]))
                if not f.is_zero():
                    n.set_block(i, q, p, f)
    return e, n, incl_maps, proj_maps


def truncation_exactness_audit(x: PureComplex, e: PureComplex, n: PureComplex,
                               incl_maps, proj_maps) -> bool:
    """0 -> E -> X -> N -> 0 is degreewise exact on every stalk."""
    x_real = x.realize()
    for i in x.degrees():
        incl, proj = incl_maps[i], proj_maps[i]
        if not proj.compose(incl).is_zero():
            return False
        for fid in x.ctx.fan.face_ids():
            for k in range(x.ctx.dmin, x.ctx.dmax + 1):
                dx = x_real.term(i).stalk(fid).dim(k)
                de = incl.src.stalk(fid).dim(k)
                dn = proj.dst.stalk(fid).dim(k)
                if dx != de + dn:
                    return False
                if de and incl.comp(fid).rank_at(k) != de:
                    return False
                if dn and proj.comp(fid).rank_at(k) != dn:
                    return False
    return True


def reduce_complex(x: PureComplex) -> PureComplex:
    """Gaussian elimination of invertible same-label differential entries.
    The result is homotopy equivalent to x with no cancellable scalar block
    left; on heart objects this is the normal form."""
    cur = x
    changed = True
    while changed:
        changed = False
        for i in sorted(cur.terms):
            if i + 1 not in cur.terms:
                continue
            found = None
            for q, bq in enumerate(cur.labels(i + 1)):
                for p, bp in enumerate(cur.labels(i)):
                    if bp != bq:
                        continue
                    c = cur.scalar_entry(i, q, p)
                    if c:
                        found = (q, p, c)
                        break
                if found:
                    break
            if found:
                cur = _cancel_pair(cur, i, *found)
                changed = True
                break
    return cur


def _cancel_pair(x: PureComplex, i: int, q: int, p: int, c) -> PureComplex:
    ctx = x.ctx
    terms = {}
    for j, t in x.terms.items():
        if j == i:
            terms[j] = tuple(b for idx, b in enumerate(t) if idx != p)
        elif j == i + 1:
            terms[j] = tuple(b for idx, b in enumerate(t) if idx != q)
        else:
            terms[j] = t
    blocks = {}
    for j, bl in x.blocks.items():
        nb = {}
        for (r, s), f in bl.items():
            if j == i - 1:
                if r == p:
                    continue
                nb[(_drop(r, p), s)] = f
            elif j == i:
                if s == p or r == q:
                    continue
                nb[(_drop(r, q), _drop(s, p))] = f
            elif j == i + 1:
                if s == q:
                    continue
                nb[(r, _drop(s, q))] = f
            else:
                nb[(r, s)] = f
        if nb:
            blocks[j] = nb
    inv = Q1 / c
    corr = {}
    for s in range(len(x.labels(i))):
        if s == p:
            continue
        dqs = x.blocks.get(i, {}).get((q, s))
        if dqs is None:
            continue
        for r in range(len(x.labels(i + 1))):
            if r == q:
                continue
            drp = x.blocks.get(i, {}).get((r, p))
            if drp is None:
                continue
            # Gaussian update d' = d - d_{rp} phi^{-1} d_{qs}, phi = c id
            corr[(_drop(r, q), _drop(s, p))] = drp.scale(-inv).compose(dqs)
    if corr:
        nb = blocks.setdefault(i, {})
        for key, f in corr.items():
            if key in nb:
                nb[key] = nb[key].add(f)
                if nb[key].is_zero():
                    del nb[key]
            else:
                nb[key] = f
    return PureComplex(ctx, terms, blocks)


def _drop(idx: int, removed: int) -> int:
    return idx - 1 if idx > removed else idx


def heart_normal_form(x: PureComplex) -> PureComplex:
    """Reduce and check condition (*): term i is a sum of L{i} blocks."""
    reduced = reduce_complex(x)
    if not reduced.is_heart_shape():
        raise NotInHeart("reduced complex has labels off the diagonal")
    return reduced


def homotopy_space_dim(x: PureComplex, y: PureComplex, n: int = 0) -> int:
    """Dimension of the space of degree -1 homotopies x -> y{n}."""
    xc = x.realize()
    yc = y.realize().twist(n)
    total = 0
    for i in sorted(set(xc.degrees()) | set(yc.degrees())):
        if xc.term(i).is_zero() or yc.term(i - 1).is_zero():
            continue
        total += hom_sheaf_maps(xc.term(i), yc.term(i - 1)).dim
    return total


@dataclass
class WeightData:
    """Brutal weight filtration of a heart object: W_j collects the terms in
    cohomological degrees >= -j, so Gr_j is the term at -j twisted."""

    filtration: dict
    graded: dict

    @staticmethod
    def of(p: PureComplex) -> "WeightData":
        if not p.is_heart_shape():
            raise NotInHeart("weight filtration needs a heart object")
        degs = p.degrees()
        filtration = {}
        graded = {}
        weights = sorted({-i for i in degs})
        lo = min(weights) - 1 if weights else 0
        filtration[lo] = ()
        for j in (range(min(weights), max(weights) + 1) if weights else []):
            filtration[j] = tuple(
                (i, p.labels(i)) for i in degs if i >= -j)
            piece = p.labels(-j)
            # each block L^sigma{-j} at degree -j is L^sigma<j>
            graded[j] = tuple(b.sigma for b in piece) if piece else ()
        return WeightData(filtration, graded)


def weight_filtration(p: PureComplex) -> WeightData:
    return WeightData.of(p)
