"""Scheme validation against the worked-out representation data."""

import numpy as np
import pytest

from mbqc1d.pauli import PauliOperator, SitePartition, commutation_sign, multiply, to_dense
from mbqc1d.schemes import (
    SchemeValidationError,
    SymmetryScheme,
    builtin_scheme,
    check_algebra,
    compute_Gi,
    iter_subgroups,
    load_scheme,
    span,
    validate,
)

P = PauliOperator.from_label


@pytest.fixture(scope="module")
def cluster_b2():
    return validate(builtin_scheme("cluster_block2", 11))


@pytest.fixture(scope="module")
def cluster_sl():
    return validate(builtin_scheme("cluster_site_local", 9))


@pytest.fixture(scope="module")
def kg_b2():
    return validate(builtin_scheme("kitaev_gamma_block2", 12))


@pytest.fixture(scope="module")
def qca_b6():
    return validate(builtin_scheme("qca_block6", 10))


@pytest.fixture(scope="module")
def qca_sl():
    return validate(builtin_scheme("qca_site_local", 10))


@pytest.fixture(scope="module")
def ising():
    return validate(builtin_scheme("ising", 8))


ALL = ["cluster_b2", "cluster_sl", "kg_b2", "qca_b6", "qca_sl", "ising"]


def test_group_helpers():
    assert span([], 2) == (0,)
    assert span([1, 2], 2) == (0, 1, 2, 3)
    assert len(iter_subgroups(2)) == 5  # {0}, three Z2's, full group
    assert len(iter_subgroups(4)) == 67


class TestDerivedVR:
    def test_cluster_block2(self, cluster_b2):
        assert cluster_b2.vR_local(1, 0b01).label() == "ZX"
        assert cluster_b2.vR_local(1, 0b10).label() == "IZ"

    def test_qca_block6(self, qca_b6):
        assert qca_b6.vR_local(1, 0b0001).label() == "IIIIIZ"
        assert qca_b6.vR_local(1, 0b0010).label() == "IIIIZX"
        assert qca_b6.vR_local(1, 0b0100).label() == "IIIZXI"
        assert qca_b6.vR_local(1, 0b1000).label() == "IIZXII"

    def test_kitaev_gamma(self, kg_b2):
        assert kg_b2.vR_local(1, 0b01).label() == "IX"
        assert kg_b2.vR_local(1, 0b10).label() == "IZ"

    def test_cluster_site_local(self, cluster_sl):
        # odd sites map (g01, g10) -> (X, Z); even sites -> (Z, X)
        assert cluster_sl.vR_local(1, 0b01).label() == "X"
        assert cluster_sl.vR_local(1, 0b10).label() == "Z"
        assert cluster_sl.vR_local(2, 0b01).label() == "Z"
        assert cluster_sl.vR_local(2, 0b10).label() == "X"

    def test_trivial_vL_gives_identity_vR_factor(self, ising):
        # vL = I so vR = u
        assert ising.vR_local(1, 1) == ising.u_local(1, 1)


class TestH:
    def test_cluster_both_blockings(self, cluster_b2, cluster_sl):
        g10 = 0b10
        assert cluster_b2.H == (0, g10)
        assert cluster_sl.H == (0, g10)
        assert len(cluster_b2.H_candidates) == 1

    def test_kitaev_gamma(self, kg_b2):
        gx = 0b01
        assert kg_b2.H == (0, gx)

    def test_qca(self, qca_b6, qca_sl):
        g1, g3 = 0b0001, 0b0100
        expected = span([g1, g3], 4)
        assert qca_b6.H == expected
        assert qca_sl.H == expected

    def test_ising(self, ising):
        assert ising.H == (0, 1)


class TestGi:
    def test_cluster_block2_full_group(self, cluster_b2):
        for i in range(1, cluster_b2.n_bulk + 1):
            assert cluster_b2.Gi[i] == (0, 1, 2, 3)

    def test_cluster_site_local_alternates(self, cluster_sl):
        for i in range(1, cluster_sl.n_bulk + 1):
            expected = (0, 0b01) if i % 2 == 0 else (0, 0b10)
            assert cluster_sl.Gi[i] == expected

    def test_kg_full_group(self, kg_b2):
        for i in range(1, kg_b2.n_bulk + 1):
            assert kg_b2.Gi[i] == (0, 1, 2, 3)

    def test_qca_block6_full_group(self, qca_b6):
        assert qca_b6.Gi[1] == tuple(range(16))

    def test_qca_site_local_period6(self, qca_sl):
        g1, g2, g3, g4 = 1, 2, 4, 8
        period = {
            1: (0, g2 ^ g4),
            2: (0, g1 ^ g3),
            3: (0, g4),
            4: (0, g3),
            5: (0, g2),
            0: (0, g1),
        }
        for i in range(1, qca_sl.n_bulk + 1):
            assert qca_sl.Gi[i] == period[i % 6], f"block {i}"

    def test_recompute_matches(self, qca_sl):
        for i in range(1, qca_sl.n_bulk + 1):
            assert compute_Gi(qca_sl, i) == qca_sl.Gi[i]


class TestKappa:
    def test_cluster(self, cluster_b2):
        assert cluster_b2.kappa.tolist() == [[0, 1], [1, 0]]

    def test_qca(self, qca_b6):
        expected = [
            [0, 1, 0, 0],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [0, 0, 1, 0],
        ]
        assert qca_b6.kappa.tolist() == expected

    def test_ising_trivial(self, ising):
        assert ising.kappa.tolist() == [[0]]

    @pytest.mark.parametrize("name", ALL)
    def test_kappa_consistent_across_representations(self, name, request):
        v = request.getfixturevalue(name)
        n = v.n_bulk
        for g in v.elements():
            for gp in v.elements():
                k = v.kappa_of(g, gp)
                assert commutation_sign(v.boundary_image(g), v.boundary_image(gp)) == k
                assert commutation_sign(v.vR_local(0, g), v.vR_local(0, gp)) == k
                for i in range(1, n + 1):
                    if gp in v.Gi[i]:
                        assert commutation_sign(v.vR_local(i, g), v.vR_local(i, gp)) == k


class TestAssemble:
    def test_cluster_site_local_strings(self, cluster_sl):
        assert cluster_sl.assemble("U", 0b01).label() == "ZXIXIXIXZ"
        assert cluster_sl.assemble("U", 0b10).label() == "XIXIXIXIX"
        assert cluster_sl.assemble("T", 0b10).label() == "XIXIXIXIX"
        assemble_T_g01 = cluster_sl.assemble("T", 0b01)
        assert assemble_T_g01.label() == "IXIXIXIXZ"
        # the only string order operator anchored at site 3
        assert cluster_sl.assemble("R", 0b10, 3).label() == "IIIZXIXIX"

    def test_cluster_block2_strings(self, cluster_b2):
        assert cluster_b2.assemble("U", 0b01).label() == "ZXIXIXIXIXZ"
        assert cluster_b2.assemble("U", 0b10).label() == "XIXIXIXIXIX"
        # sigma_o, sigma_e, sigma_{o+e} operator patterns at block 1
        assert cluster_b2.assemble("R", 0b01, 1).label() == "IIZXIXIXIXZ"
        assert cluster_b2.assemble("R", 0b10, 1).label() == "IIIZXIXIXIX"
        assert cluster_b2.assemble("R", 0b11, 1).label() == "IIZYXXXXXXY"

    def test_qca_block6_global_strings(self, qca_b6):
        assert qca_b6.assemble("U", 0b0001).label() == "IZXIIIXIXI"
        assert qca_b6.assemble("U", 0b0010).label() == "ZXIIIXIXZX"
        assert qca_b6.assemble("U", 0b0100).label() == "XIIIXIXIIZ"
        assert qca_b6.assemble("U", 0b1000).label() == "ZIIXIXIIIX"

    def test_qca_schemes_share_global_symmetry(self, qca_b6, qca_sl):
        for g in qca_b6.elements():
            assert qca_b6.assemble("U", g) == qca_sl.assemble("U", g)

    def test_kg_global_symmetry(self, kg_b2):
        assert kg_b2.assemble("U", 0b01).label() == "X" * 12
        assert kg_b2.assemble("U", 0b10).label() == "Z" * 12

    def test_axis_outside_Gi_rejected(self, cluster_sl):
        with pytest.raises(ValueError):
            cluster_sl.assemble("R", 0b01, 1)  # odd block only admits g10

    def test_T_equals_LR_up_to_sign(self, cluster_b2, qca_sl):
        for v in (cluster_b2, qca_sl):
            for k in range(1, v.n_bulk + 1):
                for g in v.Gi[k]:
                    if g == 0:
                        continue
                    assert v.rotation_sign(k, g) in (-1, 1)

    @pytest.mark.parametrize("name", ["cluster_b2", "cluster_sl", "qca_b6", "qca_sl", "ising"])
    def test_rotation_sign_positive(self, name, request):
        v = request.getfixturevalue(name)
        for k in range(1, v.n_bulk + 1):
            for g in v.Gi[k]:
                if g:
                    assert v.rotation_sign(k, g) == 1

    def test_rotation_sign_kitaev_gamma(self, kg_b2):
        # The composite axis gx*gz picks up a genuine -1 from the Hermitian
        # gauge of u(gx*gz) = XX*ZZ = -YY; the generators do not.
        for k in range(1, kg_b2.n_bulk + 1):
            assert kg_b2.rotation_sign(k, 0b01) == 1
            assert kg_b2.rotation_sign(k, 0b10) == 1
            assert kg_b2.rotation_sign(k, 0b11) == -1

    @pytest.mark.parametrize("name", ALL)
    def test_operators_hermitian(self, name, request):
        v = request.getfixturevalue(name)
        for g in v.elements():
            assert v.assemble("U", g).is_hermitian()
            assert v.assemble("T", g).is_hermitian()

    def test_T_restricted_to_H_equals_U(self, qca_b6):
        for h in qca_b6.H:
            assert qca_b6.assemble("T", h) == qca_b6.assemble("U", h)


class TestAlgebraTheorems:
    @pytest.mark.parametrize("name", ALL)
    def test_relations_hold(self, name, request):
        v = request.getfixturevalue(name)
        assert check_algebra(v) == []

    @pytest.mark.parametrize("name", ALL)
    def test_U_linearity_dense_spotcheck(self, name, request):
        v = request.getfixturevalue(name)
        if v.n_sites > 10:
            pytest.skip("dense check limited to small chains")
        for g in list(v.elements())[:4]:
            for gp in list(v.elements())[:4]:
                lhs = to_dense(v.assemble("U", g)) @ to_dense(v.assemble("U", gp))
                rhs = to_dense(v.assemble("U", g ^ gp))
                assert np.allclose(lhs, rhs, atol=1e-12)

    @pytest.mark.parametrize("name", ALL)
    def test_projective_images_commute_up_to_sign(self, name, request):
        v = request.getfixturevalue(name)
        for g in v.elements():
            for gp in v.elements():
                a, b = v.boundary_image(g), v.boundary_image(gp)
                ab, ba = multiply(a, b), multiply(b, a)
                assert ab.same_string(ba)
                assert ab.phase_ratio(ba) in (1, -1)


class TestFailures:
    def _base(self):
        part = SitePartition.from_sizes([1, 1, 1])
        u = {0: {0: P("I"), 1: P("I")}, 1: {0: P("X"), 1: P("I")}}
        vL = {1: {0: P("I"), 1: P("Z")}, 2: {0: P("Z"), 1: P("X")}}
        vR0 = {0: P("X"), 1: P("Z")}
        return part, u, vL, vR0

    def test_H_spec_violation(self):
        # vR0 images anticommute pairwise and u0 never matches them
        part, u, vL, vR0 = self._base()
        scheme = SymmetryScheme("bad-H", ["a", "b"], part, u, vL, vR0)
        with pytest.raises(SchemeValidationError) as err:
            validate(scheme)
        assert any(v.equation == "H_spec" for v in err.value.violations)

    def test_kappa_R0_mismatch(self):
        part, u, vL, vR0 = self._base()
        vR0 = {0: P("X"), 1: P("X")}  # commuting, but kappa says anticommute
        u[0] = {0: P("X"), 1: P("X")}
        scheme = SymmetryScheme("bad-kappa", ["a", "b"], part, u, vL, vR0)
        with pytest.raises(SchemeValidationError) as err:
            validate(scheme)
        assert any(v.equation == "KappaR0" for v in err.value.violations)

    def test_url_hermiticity_failure(self):
        part, u, vL, vR0 = self._base()
        vL[1] = {0: P("Z"), 1: P("Z")}  # vL anticommutes with u = X at gen 0
        u[0] = {0: P("X"), 1: P("I")}
        vR0 = {0: P("X"), 1: P("Z")}
        scheme = SymmetryScheme("bad-url", ["a", "b"], part, u, vL, vR0)
        with pytest.raises(SchemeValidationError) as err:
            validate(scheme)
        assert any(v.equation == "url" for v in err.value.violations)

    def test_nonabelian_u_rejected(self):
        part, u, vL, vR0 = self._base()
        u[1] = {0: P("X"), 1: P("Z")}
        scheme = SymmetryScheme("bad-u", ["a", "b"], part, u, vL, vR0)
        with pytest.raises(SchemeValidationError) as err:
            validate(scheme)
        assert any(v.equation == "u-abelian" for v in err.value.violations)


class TestSchemeFiles:
    def test_size_constraints(self):
        with pytest.raises(ValueError):
            builtin_scheme("cluster_site_local", 10)  # N must be odd
        with pytest.raises(ValueError):
            builtin_scheme("qca_block6", 12)  # N = 4 mod 6
        with pytest.raises(ValueError):
            builtin_scheme("qca_site_local", 12)  # n_bulk = 8 not divisible by 6
        with pytest.raises(ValueError):
            builtin_scheme("cluster_block2", 10)  # N odd required by layout

    def test_declared_options_roundtrip(self):
        data = {
            "name": "ising-opt",
            "generators": ["g1"],
            "blocks": {"left_size": 1, "right_size": 1, "bulk_size": 1},
            "left": {"u0": {"g1": "X"}, "vR0": {"g1": "X"}},
            "bulk": [{"u": {"g1": "X"}, "vL": {"g1": "I"}}],
            "right": {"vL": {"g1": "X"}},
            "options": {"H": ["g1"], "Hprime": ["g1"], "chi": {"g1": 1}},
        }
        scheme = load_scheme(data, 6)
        assert scheme.declared_H == (1,)
        assert scheme.chi_target == {0: 1}
        v = validate(scheme)
        assert v.Hprime == (0, 1)

    def test_element_parsing(self, qca_sl):
        assert qca_sl.parse_element("g2*g4") == 0b1010
        assert qca_sl.parse_element("e") == 0
        assert qca_sl.element_label(0b101) == "g1*g3"
        with pytest.raises(ValueError):
            qca_sl.parse_element("gX")


class TestDescribe:
    def test_report_fields(self, cluster_sl):
        d = cluster_sl.describe()
        assert d["H"] == ["e", "g10"]
        assert d["kappa"] == [[0, 1], [1, 0]]
        assert d["Gi"]["1"] == ["e", "g10"]
