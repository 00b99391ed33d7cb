import pytest

from fankoszul import linalg as la
from fankoszul.errors import NotPure
from fankoszul.graded import FreeModuleShape, certify_free
from fankoszul.linalg import qq
from fankoszul.pure import (
    Context,
    compose_homs,
    decompose,
    hom_pure,
    hom_sheaf_maps,
    ic_table,
    pure_summand_sheaf,
    random_scramble,
)
from fankoszul.sheaf import (
    extension_by_zero,
    kernel_sheaf,
    predicates,
    shift_sheaf,
    structure_sheaf,
)


@pytest.fixture(scope="module")
def c1(fx1):
    return Context(fx1)


@pytest.fixture(scope="module")
def c2(fx2):
    return Context(fx2)


@pytest.fixture(scope="module")
def c3(fx3):
    return Context(fx3)


def test_ic_skyscraper_at_maximal_face(c3):
    ic = c3.ic((0,))
    assert ic.generator_degrees((0,)) == (0,)
    assert ic.sheaf.stalk(()).is_zero()


def test_ic_structure_twist_on_simplicial_fan(c1):
    ic = c1.ic(())
    for fid in c1.fan.face_ids():
        assert ic.generator_degrees(fid) == (-2,)
    # L^o is the structure sheaf shifted down by the ambient rank
    a = structure_sheaf(c1.fan, c1.algebras, c1.dmin, c1.dmax)
    for fid in c1.fan.face_ids():
        for k in range(c1.dmin + 2, c1.dmax - 2):
            assert ic.sheaf.stalk(fid).dim(k) == shift_sheaf(a, 2).stalk(fid).dim(k)


def test_ic_cone_over_square(c2):
    ic = c2.ic(())
    top = (0, 1, 2, 3)
    assert ic.generator_degrees(top) == (-3, -1)
    for ray in [(0,), (1,), (2,), (3,)]:
        assert ic.generator_degrees(ray) == (-3,)
    for facet in [(0, 1), (0, 3), (1, 2), (2, 3)]:
        assert ic.generator_degrees(facet) == (-3,)


def test_ic_middle_faces_fx2(c2):
    ic = c2.ic((0,))
    assert ic.generator_degrees((0,)) == (-2,)
    assert ic.generator_degrees((0, 1)) == (-2,)
    assert ic.generator_degrees((0, 1, 2, 3)) == (-2,)
    assert ic.sheaf.stalk((1, 2)).is_zero()


def test_ic_table_report(c2):
    table = ic_table(c2)
    assert table["[]"]["[0,1,2,3]"] == {"degrees": [-3, -1], "multiplicities": [1, 1]}


def test_hom_identity_dim_one(c1):
    for sig in c1.fan.face_ids():
        basis = c1.hom_basis(sig, sig, 0)
        assert basis.dim == 1
        f = basis.basis[0]
        comp = f.comp(sig)
        d = c1.ic(sig).generator_degrees(sig)[0]
        m = comp.mat(d)
        assert la.shape(m) == (1, 1) and m[0][0] != 0


def test_hom_negative_shift_vanishes(c1, c3):
    for ctx in (c1, c3):
        for a in ctx.fan.face_ids():
            for b in ctx.fan.face_ids():
                for n in (-1, -2, -3):
                    assert ctx.hom_basis(a, b, n).dim == 0


def test_hom_shift_zero_off_diagonal_vanishes(c1):
    faces = c1.fan.face_ids()
    for a in faces:
        for b in faces:
            if a != b:
                assert c1.hom_basis(a, b, 0).dim == 0


def test_hom_cover_arrows_fx1(c1):
    assert c1.hom_basis((), (0,), 1).dim == 1
    assert c1.hom_basis((0,), (), 1).dim == 1
    assert c1.hom_basis((0,), (0, 1), 1).dim == 1
    assert c1.hom_basis((0, 1), (0,), 1).dim == 1
    # non-cover comparable pair carries no degree-1 arrow
    assert c1.hom_basis((), (0, 1), 1).dim == 0
    assert c1.hom_basis((0, 1), (), 1).dim == 0


def test_compose_homs_fx3(c3):
    up = c3.hom_basis((), (0,), 1).basis[0]       # L^o -> L^sigma{1}
    down = c3.hom_basis((0,), (), 1).basis[0]     # L^sigma -> L^o{1}
    down_shifted = hom_sheaf_maps(up.dst, shift_sheaf(c3.ic(()).sheaf, 2)).basis
    # realize the composite L^o -> L^o{2} and check it is multiplication by
    # a nonzero linear form, not zero
    shifted_down = _shift_map(down, 1)
    comp = compose_homs(up, shifted_down)
    d = c3.ic(()).generator_degrees((0,))[0]
    m = comp.comp((0,)).mat(d)
    assert not la.is_zero_matrix(m)
    # composing with a zero map kills it
    zero = up.scale(qq(0))
    assert compose_homs(zero, shifted_down).is_zero()


def _shift_map(f, n):
    """View a sheaf map as a map between {n}-shifted objects."""
    from fankoszul.graded import GradedMap
    from fankoszul.sheaf import SheafMap, shift_sheaf

    src = shift_sheaf(f.src, n)
    dst = shift_sheaf(f.dst, n)
    out = SheafMap(src, dst, f.shift)
    for fid, g in f.comps.items():
        ng = GradedMap(src.stalk(fid), dst.stalk(fid), f.shift)
        for k, m in g.mats.items():
            ng.set_mat(k - n, m)
        out.comps[fid] = ng
    return out


def test_hom_pure_block_dims(c1):
    dec_src = decompose(c1, c1.ic((0,)).sheaf)
    dec_dst = decompose(c1, c1.ic((0, 1)).sheaf)
    h = hom_pure(c1, dec_src, dec_dst, 1)
    assert h.dim == 1
    h0 = hom_pure(c1, dec_src, dec_dst, -1)
    assert h0.dim == 0


def test_decompose_structure_twist(c1):
    a = structure_sheaf(c1.fan, c1.algebras, c1.dmin, c1.dmax)
    dec = decompose(c1, shift_sheaf(a, 2))
    assert dec.multiset == (((), 0),)


def test_decompose_skyscraper(c1):
    a = structure_sheaf(c1.fan, c1.algebras, c1.dmin, c1.dmax)
    sky = extension_by_zero(a, [(0, 1)])
    dec = decompose(c1, sky)
    assert dec.multiset == ((((0, 1)), 0),)


def test_decompose_scrambled_sum(c1):
    summands = [((), 1), ((0,), -2)]
    model, _, _ = pure_summand_sheaf(c1, summands)
    scrambled = random_scramble(c1, model, seed=7)
    dec = decompose(c1, scrambled)
    assert dec.multiset == tuple(sorted(summands))
    assert dec.iso.audit_commutes()


def test_decompose_rejects_non_pure(c1):
    a = structure_sheaf(c1.fan, c1.algebras, c1.dmin, c1.dmax)
    sky_ray = extension_by_zero(a, [(0,)])
    with pytest.raises(NotPure):
        decompose(c1, sky_ray)


def test_ic_uniqueness_via_homs(c2):
    # dim Hom = 1 in both directions at shift zero with invertible composite
    basis = c2.hom_basis((), (), 0)
    assert basis.dim == 1
    f = basis.basis[0]
    comp = compose_homs(f, f)
    coords = basis.coordinates(comp)
    assert coords is not None and coords[0] != 0


def test_kernel_of_map_between_unshifted_sums_is_pure(c1):
    model, injs, projs = pure_summand_sheaf(c1, [((), 0), ((), 0)])
    single, _, _ = pure_summand_sheaf(c1, [((), 0)])
    space = hom_sheaf_maps(model, single)
    f = space.element([qq(1)] * space.dim)
    ker, _ = kernel_sheaf(f)
    assert predicates(ker)["is_pure"]


def test_endomorphism_positivity(c3):
    # graded endomorphisms vanish in negative degrees and have small pieces
    for n in range(-3, 4):
        d = c3.hom_basis((), (), n).dim
        if n < 0:
            assert d == 0
        else:
            assert d <= 1
