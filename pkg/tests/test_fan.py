import json

import pytest

from fankoszul import fan as fanmod
from fankoszul.errors import (
    FaceNotInFan,
    MalformedDocument,
    NonPointedCone,
    NonPrimitiveRay,
    NotFullDimensional,
)
from fankoszul.fan import DualFanMap, Fan, dual_cone, load_fan, parse_face_token
from fankoszul.linalg import qq


def test_fx1_faces(fx1):
    ids = fx1.face_ids()
    assert ids == [(), (0,), (1,), (0, 1)]
    assert fx1.face(()).dim == 0
    assert fx1.face((0, 1)).dim == 2
    assert fx1.face((0,)).codim == 1


def test_fx3_faces(fx3):
    assert fx3.face_ids() == [(), (0,)]


def test_fx2_faces(fx2):
    ids = fx2.face_ids()
    assert len(ids) == 10
    dims = sorted(fx2.face(f).dim for f in ids)
    assert dims == [0, 1, 1, 1, 1, 2, 2, 2, 2, 3]
    two_faces = [f for f in ids if fx2.face(f).dim == 2]
    assert two_faces == [(0, 1), (0, 3), (1, 2), (2, 3)]


def test_face_poset(fx2):
    top = (0, 1, 2, 3)
    assert fx2.le((), top)
    assert fx2.le((0,), (0, 1))
    assert not fx2.le((0,), (1, 2))
    assert len(fx2.boundary(top)) == 9
    # interval property: [tau] is the face lattice of a single cone
    for fid in fx2.face_ids():
        assert fx2.is_subfan(fx2.subfaces(fid))


def test_load_fan_rejects_bad_documents():
    with pytest.raises(MalformedDocument):
        load_fan("{not json")
    with pytest.raises(MalformedDocument):
        load_fan(json.dumps({"ambient_rank": 2, "rays": [[1, 0]]}))
    with pytest.raises(MalformedDocument):
        load_fan(json.dumps(
            {"ambient_rank": 2, "rays": [[1, 0]], "maximal_cones": [[0, 1]]}))


def test_load_fan_rejects_non_primitive_ray():
    doc = {"ambient_rank": 2, "rays": [[2, 0], [0, 1]], "maximal_cones": [[0, 1]]}
    with pytest.raises(NonPrimitiveRay):
        load_fan(json.dumps(doc))


def test_load_fan_rejects_non_pointed_cone():
    doc = {"ambient_rank": 1, "rays": [[1], [-1]], "maximal_cones": [[0, 1]]}
    with pytest.raises(NonPointedCone):
        load_fan(json.dumps(doc))
    doc2 = {"ambient_rank": 2,
            "rays": [[1, 0], [0, 1], [-1, -1]],
            "maximal_cones": [[0, 1, 2]]}
    with pytest.raises(NonPointedCone):
        load_fan(json.dumps(doc2))


def test_multi_cone_fan():
    doc = {"ambient_rank": 2,
           "rays": [[1, 0], [0, 1], [-1, 0]],
           "maximal_cones": [[0, 1], [1, 2]]}
    f = load_fan(json.dumps(doc))
    assert len(f.faces) == 6


def test_dual_cone_fx1_self_dual(fx1):
    d = dual_cone(fx1)
    assert sorted(d.rays) == [(0, 1), (1, 0)]


def test_dual_cone_fx3(fx3):
    d = dual_cone(fx3)
    assert d.rays == [(1,)]


def test_dual_cone_fx2(fx2):
    d = dual_cone(fx2)
    assert len(d.rays) == 4
    # cone over a square in the dual lattice: z >= |x| + |y|
    assert sorted(d.rays) == [(-1, -1, 1), (-1, 1, 1), (1, -1, 1), (1, 1, 1)]


def test_dual_cone_double_dual(fx1, fx2, fx3):
    for f in (fx1, fx2, fx3):
        dd = dual_cone(dual_cone(f))
        assert sorted(dd.rays) == sorted(f.rays)


def test_dual_cone_requires_full_dimensional():
    doc = {"ambient_rank": 2, "rays": [[1, 0]], "maximal_cones": [[0]]}
    with pytest.raises(NotFullDimensional):
        dual_cone(load_fan(json.dumps(doc)))


def test_perp_map_fx1(fx1):
    m = DualFanMap.build(fx1)
    # rho1 = ray (1,0); its perp is the dual ray spanned by (0,1)
    img = m.apply((0,))
    assert [m.target.rays[i] for i in img] == [(0, 1)]
    assert m.apply(()) == tuple(range(len(m.target.rays)))
    assert m.apply((0, 1)) == ()


def test_perp_map_order_reversing(fx1, fx2, fx3):
    for f in (fx1, fx2, fx3):
        m = DualFanMap.build(f)
        ids = f.face_ids()
        for a in ids:
            fa = f.face(a)
            assert m.target.face(m.apply(a)).dim == f.ambient_rank - fa.dim
            assert m.invert(m.apply(a)) == a
            for b in ids:
                if f.le(a, b):
                    assert m.target.le(m.apply(b), m.apply(a))


def test_perp_map_span_orthogonal(fx2):
    m = DualFanMap.build(fx2)
    for fid in fx2.face_ids():
        img = m.apply(fid)
        for i in fid:
            for j in img:
                dot = sum(qq(a) * qq(b)
                          for a, b in zip(fx2.rays[i], m.target.rays[j]))
                assert dot == 0


def test_perp_rejects_foreign_face(fx1):
    m = DualFanMap.build(fx1)
    with pytest.raises(FaceNotInFan):
        m.apply((5,))


def test_incidence_signs_fx1(fx1):
    signs = fanmod.incidence_signs(fx1)
    assert set(signs.values()) <= {1, -1}
    s = signs
    assert (s[((0, 1), (0,))] * s[((0,), ())]
            + s[((0, 1), (1,))] * s[((1,), ())]) == 0


def test_incidence_signs_fx3(fx3):
    signs = fanmod.incidence_signs(fx3)
    assert signs == {((0,), ()): 1}


def test_incidence_signs_fx2_chains_cancel(fx2):
    signs = fanmod.incidence_signs(fx2)
    assert len(signs) == 16
    for tau in fx2.face_ids():
        for rho in fx2.subfaces(tau):
            if fx2.face(rho).dim != fx2.face(tau).dim - 2:
                continue
            total = sum(
                signs[(tau, xi)] * signs[(xi, rho)]
                for xi in fx2.subfaces(tau)
                if (tau, xi) in signs and (xi, rho) in signs)
            assert total == 0


def test_quasifan_predicate(fx2):
    top = (0, 1, 2, 3)
    assert fx2.is_quasifan(fx2.boundary(top))
    assert fx2.is_quasifan([f for f in fx2.face_ids() if fx2.le((0,), f)])
    # removing the middle of an interval breaks the property
    bad = [f for f in fx2.face_ids() if f not in [(0,)]]
    assert not fx2.is_quasifan(bad)


def test_parse_face_token():
    assert parse_face_token("o") == ()
    assert parse_face_token("[]") == ()
    assert parse_face_token("0,2") == (0, 2)
    assert parse_face_token("[2,0]") == (0, 2)
