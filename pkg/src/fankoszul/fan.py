"""Rational fan geometry.

A fan is stored as its full face poset: every cone is identified by the
sorted tuple of indices of the rays it contains (the zero cone is the empty
tuple).  All geometry is exact over the rationals.  Cones must be pointed
and ray generators primitive; both are validated on construction.

Orientation data: each face carries an ordered basis of its linear span
(the first linearly independent subset of its rays, in index order).  The
sign attached to a facet pair (tau, xi) is the determinant sign of the
basis [b_xi, v] expressed in b_tau, where v is the sum of the rays of tau
outside xi.  Any consistent choice gives isomorphic cellular complexes;
this one is deterministic in the input document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from math import gcd

from . import linalg as la
from .errors import (
    FaceNotInFan,
    MalformedDocument,
    NonPointedCone,
    NonPrimitiveRay,
    NotFullDimensional,
    NotPointed,
    SignAuditFailure,
)
from .linalg import Q0, Q1, qq

FaceId = tuple[int, ...]


def face_id_str(fid: FaceId) -> str:
    return "[" + ",".join(str(i) for i in fid) + "]"


def parse_face_token(token: str) -> FaceId:
    """Accepts "o", "", "[]", "0,2" or "[0,2]"."""
    t = token.strip()
    if t in ("o", "O", "", "[]"):
        return ()
    t = t.strip("[]")
    try:
        return tuple(sorted(int(p) for p in t.split(",") if p.strip() != ""))
    except ValueError as exc:
        raise MalformedDocument(f"bad face token {token!r}") from exc


@dataclass(frozen=True)
class Face:
    fid: FaceId
    dim: int
    codim: int
    span_basis: tuple[tuple, ...]      # rows: rational basis of Span(face)
    orient_basis: tuple[int, ...]      # ray indices giving the orientation basis

    def __repr__(self):
        return f"Face{face_id_str(self.fid)}"


class Fan:
    """Immutable after construction; safe for concurrent shared reads."""

    def __init__(self, ambient_rank: int, rays, maximal_cones):
        self.ambient_rank = ambient_rank
        self.rays = [tuple(int(x) for x in r) for r in rays]
        self.maximal_ids = tuple(tuple(sorted(c)) for c in maximal_cones)
        self.faces: dict[FaceId, Face] = {}
        self._subfaces: dict[FaceId, frozenset[FaceId]] = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        n = self.ambient_rank
        if n < 1:
            raise MalformedDocument("ambient_rank must be >= 1")
        for i, r in enumerate(self.rays):
            if len(r) != n:
                raise MalformedDocument(f"ray {i} has length {len(r)}, expected {n}")
            if all(x == 0 for x in r):
                raise NonPrimitiveRay(f"ray {i} is zero")
            g = 0
            for x in r:
                g = gcd(g, abs(x))
            if g != 1:
                raise NonPrimitiveRay(f"ray {i} = {list(r)} is not primitive (gcd {g})")
        seen = set()
        for cone in self.maximal_ids:
            for i in cone:
                if not (0 <= i < len(self.rays)):
                    raise MalformedDocument(f"cone {list(cone)} references missing ray {i}")
            if cone in seen:
                raise MalformedDocument(f"duplicate maximal cone {list(cone)}")
            seen.add(cone)
            self._check_pointed(cone)
        for cone in self.maximal_ids:
            self._enumerate_faces(cone)
        # fan property: pairwise ray intersections are again faces, and are
        # faces of both cones.  (Complete for fans of a single maximal cone;
        # multi-cone documents are validated at this combinatorial level.)
        ids = sorted(self.faces)
        for a, b in combinations(ids, 2):
            meet = tuple(sorted(set(a) & set(b)))
            if meet not in self.faces:
                raise MalformedDocument(
                    f"faces {face_id_str(a)} and {face_id_str(b)} meet outside the fan")
        self._le = {}
        for fid in ids:
            self._le[fid] = frozenset(self._subfaces[fid])
        self._compute_signs()

    def _check_pointed(self, cone: FaceId):
        vecs = [self.rays[i] for i in cone]
        k = len(vecs)
        if k == 0:
            return
        if k > 16:
            raise MalformedDocument("cone has too many rays for pointedness check")
        for size in range(1, k + 1):
            for sub in combinations(range(k), size):
                cols = [[qq(vecs[j][i]) for j in sub] for i in range(self.ambient_rank)]
                ker = la.kernel_basis(cols)
                if len(ker) != 1:
                    continue
                v = ker[0]
                if all(x > 0 for x in v) or all(x < 0 for x in v):
                    raise NonPointedCone(
                        f"cone {face_id_str(cone)} contains a line "
                        f"(dependency on rays {[cone[j] for j in sub]})")

    def _span_basis(self, fid: FaceId):
        rows = [[qq(x) for x in self.rays[i]] for i in fid]
        if not rows:
            return ()
        red, pivots = la.rref(rows)
        return tuple(tuple(red[i]) for i in range(len(pivots)))

    def _orient_basis(self, fid: FaceId) -> tuple[int, ...]:
        chosen: list[int] = []
        rows: list[list] = []
        for i in fid:
            trial = rows + [[qq(x) for x in self.rays[i]]]
            if la.rank(trial) > len(rows):
                rows = trial
                chosen.append(i)
        return tuple(chosen)

    def _make_face(self, fid: FaceId) -> Face:
        span = self._span_basis(fid)
        dim = len(span)
        return Face(fid, dim, self.ambient_rank - dim, span, self._orient_basis(fid))

    def _enumerate_faces(self, fid: FaceId) -> frozenset[FaceId]:
        fid = tuple(sorted(fid))
        if fid in self._subfaces:
            return self._subfaces[fid]
        if fid not in self.faces:
            self.faces[fid] = self._make_face(fid)
        face = self.faces[fid]
        sub = {fid}
        for facet in self._facets(face):
            sub |= self._enumerate_faces(facet)
        self._subfaces[fid] = frozenset(sub)
        return self._subfaces[fid]

    def _facets(self, face: Face) -> list[FaceId]:
        d = face.dim
        if d == 0:
            return []
        coords = {}
        span_cols = la.transpose([list(r) for r in face.span_basis])
        for i in face.fid:
            c = la.solve(span_cols, [qq(x) for x in self.rays[i]])
            if c is None:
                raise MalformedDocument("ray outside its own span")
            coords[i] = c
        found = {}
        for sub in combinations(face.fid, d - 1):
            rows = [coords[i] for i in sub]
            if rows and la.rank(rows) != d - 1:
                continue
            ker = la.kernel_basis(rows) if rows else [la.e_vector(d, j) for j in range(d)]
            if len(ker) != 1:
                continue
            u = ker[0]
            vals = {i: sum(a * b for a, b in zip(u, coords[i])) for i in face.fid}
            if all(v >= 0 for v in vals.values()):
                pass
            elif all(v <= 0 for v in vals.values()):
                vals = {i: -v for i, v in vals.items()}
            else:
                continue
            facet_rays = tuple(sorted(i for i, v in vals.items() if v == 0))
            found[facet_rays] = True
        return sorted(found)

    # -- sign data ---------------------------------------------------------

    def _ray_q(self, i: int):
        return [qq(x) for x in self.rays[i]]

    def _in_basis(self, face: Face, vectors):
        """Coordinates of the given ambient vectors in face's orientation basis."""
        basis_cols = la.transpose([self._ray_q(i) for i in face.orient_basis])
        out = []
        for v in vectors:
            c = la.solve(basis_cols, v)
            if c is None:
                raise SignAuditFailure("vector outside face span")
            out.append(c)
        return out

    def _compute_signs(self):
        self.cover_pairs = []
        for tau in sorted(self.faces):
            for xi in sorted(self._subfaces[tau]):
                if self.faces[xi].dim == self.faces[tau].dim - 1:
                    self.cover_pairs.append((tau, xi))
        self.signs = {}
        for tau, xi in self.cover_pairs:
            self.signs[(tau, xi)] = self._sign(tau, xi)
        self._audit_signs()

    def _sign(self, tau: FaceId, xi: FaceId) -> int:
        ftau = self.faces[tau]
        fxi = self.faces[xi]
        outside = [i for i in tau if i not in xi]
        v = [Q0] * self.ambient_rank
        for i in outside:
            for j, x in enumerate(self._ray_q(i)):
                v[j] += x
        vectors = [self._ray_q(i) for i in fxi.orient_basis] + [v]
        m = la.transpose(self._in_basis(ftau, vectors))
        det = _det(m)
        if det == 0:
            raise SignAuditFailure("degenerate orientation determinant")
        return 1 if det > 0 else -1

    def _audit_signs(self):
        for tau in sorted(self.faces):
            for rho in sorted(self._subfaces[tau]):
                if self.faces[rho].dim != self.faces[tau].dim - 2:
                    continue
                total = 0
                for xi in self._subfaces[tau]:
                    if (tau, xi) in self.signs and (xi, rho) in self.signs:
                        total += self.signs[(tau, xi)] * self.signs[(xi, rho)]
                if total != 0:
                    raise SignAuditFailure(
                        f"chains through {face_id_str(rho)} < {face_id_str(tau)} do not cancel")

    # -- poset queries ------------------------------------------------------

    def face(self, fid: FaceId) -> Face:
        fid = tuple(sorted(fid))
        if fid not in self.faces:
            raise FaceNotInFan(f"{face_id_str(fid)} not in fan")
        return self.faces[fid]

    def face_ids(self) -> list[FaceId]:
        return sorted(self.faces, key=lambda f: (self.faces[f].dim, f))

    def le(self, a: FaceId, b: FaceId) -> bool:
        """a <= b: a is a face of b."""
        return a in self._le[b]

    def subfaces(self, fid: FaceId) -> list[FaceId]:
        return sorted(self._le[fid], key=lambda f: (self.faces[f].dim, f))

    def boundary(self, fid: FaceId) -> list[FaceId]:
        return [f for f in self.subfaces(fid) if f != fid]

    def star(self, fid: FaceId) -> list[FaceId]:
        return [g for g in self.face_ids() if self.le(fid, g)]

    def open_interval_set(self, lo: FaceId, hi: FaceId) -> list[FaceId]:
        return [g for g in self.face_ids() if self.le(lo, g) and self.le(g, hi)]

    def is_quasifan(self, ids) -> bool:
        s = {tuple(sorted(f)) for f in ids}
        if not s <= set(self.faces):
            return False
        for a in s:
            for b in s:
                if self.le(a, b):
                    for g in self.open_interval_set(a, b):
                        if g not in s:
                            return False
        return True

    def is_subfan(self, ids) -> bool:
        s = {tuple(sorted(f)) for f in ids}
        return s <= set(self.faces) and all(set(self.subfaces(f)) <= s for f in s)

    def sign(self, tau: FaceId, xi: FaceId) -> int:
        return self.signs[(tau, xi)]

    def document(self) -> dict:
        return {
            "ambient_rank": self.ambient_rank,
            "rays": [list(r) for r in self.rays],
            "maximal_cones": [list(c) for c in self.maximal_ids],
        }

    def __repr__(self):
        return f"Fan(rank={self.ambient_rank}, faces={len(self.faces)})"


def _det(m):
    n = len(m)
    if n == 0:
        return Q1
    a = [row[:] for row in m]
    det = Q1
    for c in range(n):
        pivot = next((i for i in range(c, n) if a[i][c]), None)
        if pivot is None:
            return Q0
        if pivot != c:
            a[c], a[pivot] = a[pivot], a[c]
            det = -det
        det *= a[c][c]
        inv = Q1 / a[c][c]
        for i in range(c + 1, n):
            if a[i][c]:
                f = a[i][c] * inv
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return det


def load_fan(document: str) -> Fan:
    """Parse and validate a fan JSON document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    for key in ("ambient_rank", "rays", "maximal_cones"):
        if key not in data:
            raise MalformedDocument(f"missing key {key!r}")
    n = data["ambient_rank"]
    if not isinstance(n, int):
        raise MalformedDocument("ambient_rank must be an integer")
    rays = data["rays"]
    cones = data["maximal_cones"]
    if not isinstance(rays, list) or not all(isinstance(r, list) for r in rays):
        raise MalformedDocument("rays must be a list of integer vectors")
    for r in rays:
        if not all(isinstance(x, int) for x in r):
            raise MalformedDocument("ray entries must be integers")
    if not isinstance(cones, list) or not all(isinstance(c, list) for c in cones):
        raise MalformedDocument("maximal_cones must be a list of index lists")
    return Fan(n, rays, cones)


def _primitive_int_vector(v):
    from math import lcm

    den = 1
    for x in v:
        den = lcm(den, int(x.denominator) if hasattr(x, "denominator") else 1)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    if g == 0:
        raise NotPointed("zero dual ray")
    return tuple(x // g for x in ints)


def dual_cone(fan: Fan) -> Fan:
    """The fan [dual cone] of a fan [sigma] with sigma full-dimensional."""
    n = fan.ambient_rank
    tops = [f for f in fan.maximal_ids]
    if len(tops) != 1:
        raise NotFullDimensional("dual cone requires a single maximal cone")
    sigma = fan.face(tops[0])
    if sigma.dim != n:
        raise NotFullDimensional(
            f"maximal cone has dimension {sigma.dim}, ambient rank {n}")
    ray_vecs = [fan._ray_q(i) for i in sigma.fid]
    found = {}
    subsets = [()] if n == 1 else list(combinations(range(len(ray_vecs)), n - 1))
    for sub in subsets:
        rows = [ray_vecs[j] for j in sub]
        if rows and la.rank(rows) != n - 1:
            continue
        ker = la.kernel_basis(rows) if rows else [la.e_vector(n, j) for j in range(n)]
        if len(ker) != 1:
            continue
        u = ker[0]
        vals = [sum(a * b for a, b in zip(u, r)) for r in ray_vecs]
        if all(v >= 0 for v in vals):
            pass
        elif all(v <= 0 for v in vals):
            u = [-x for x in u]
        else:
            continue
        found[_primitive_int_vector(u)] = True
    dual_rays = sorted(found)
    if la.rank([[qq(x) for x in r] for r in dual_rays]) != n:
        raise NotPointed("dual cone is not full-dimensional, input not pointed")
    return Fan(n, dual_rays, [list(range(len(dual_rays)))])


@dataclass
class DualFanMap:
    """Order-reversing bijection between the faces of [sigma] and [dual sigma]."""

    source: Fan
    target: Fan
    perp: dict = field(default_factory=dict)
    perp_inv: dict = field(default_factory=dict)

    @staticmethod
    def build(fan: Fan) -> "DualFanMap":
        dual = dual_cone(fan)
        m = DualFanMap(fan, dual)
        n = fan.ambient_rank
        for fid in fan.face_ids():
            face = fan.face(fid)
            perp_rays = tuple(
                j for j in range(len(dual.rays))
                if all(
                    sum(qq(a) * qq(b) for a, b in zip(dual.rays[j], fan.rays[i])) == 0
                    for i in fid
                )
            )
            target_face = dual.face(perp_rays)
            if target_face.dim != n - face.dim:
                raise NotPointed("perp face has wrong dimension")
            m.perp[fid] = target_face.fid
            m.perp_inv[target_face.fid] = fid
        if len(m.perp_inv) != len(fan.faces):
            raise NotPointed("perp map is not a bijection")
        return m

    def apply(self, fid: FaceId) -> FaceId:
        fid = tuple(sorted(fid))
        if fid not in self.perp:
            raise FaceNotInFan(f"{face_id_str(fid)} not in source fan")
        return self.perp[fid]

    def invert(self, fid: FaceId) -> FaceId:
        fid = tuple(sorted(fid))
        if fid not in self.perp_inv:
            raise FaceNotInFan(f"{face_id_str(fid)} not in target fan")
        return self.perp_inv[fid]


def perp_map(pair: DualFanMap, fid: FaceId) -> FaceId:
    return pair.apply(fid)


def incidence_signs(fan: Fan) -> dict:
    """All signed facet pairs of the fan.  The d^2 = 0 audit already ran at
    construction; this just exposes the table."""
    return dict(fan.signs)
