import math

import numpy as np
import pytest

from mbqc1d.pauli import PauliOperator
from mbqc1d.schemes import builtin_scheme, validate
from mbqc1d.states import (
    HamiltonianSpec,
    build_circuit_state,
    certify_symmetry,
    cluster_circuit,
    ground_state,
    qca_circuit,
)
from mbqc1d.strings import (
    DecayFit,
    StringOrderError,
    block_table,
    decay_fit,
    default_anchor,
    effective_delta,
    fit_decay,
    sigma,
    sweep,
)


@pytest.fixture(scope="module")
def cluster_b2_11():
    v = validate(builtin_scheme("cluster_block2", 11))
    state = certify_symmetry(build_circuit_state(cluster_circuit(11)), v)
    return v, state


@pytest.fixture(scope="module")
def qca_sl_10():
    v = validate(builtin_scheme("qca_site_local", 10))
    state = certify_symmetry(build_circuit_state(qca_circuit(10, 2)), v)
    return v, state


class TestSigma:
    def test_cluster_state_all_strings_unity(self, cluster_b2_11):
        v, state = cluster_b2_11
        for k in range(1, v.n_bulk + 1):
            for g in (0b01, 0b10, 0b11):
                assert abs(sigma(state, v, k, g) - 1.0) < 1e-10

    def test_trivial_endpoint_zero(self):
        v = validate(builtin_scheme("cluster_block2", 9))
        gs = ground_state(HamiltonianSpec.make("cluster_field", 9, alpha=np.pi / 2))
        gs = certify_symmetry(gs, v)
        for g in (0b01, 0b10, 0b11):
            assert abs(sigma(gs, v, 1, g)) < 1e-10

    def test_qca_fixed_point_unit_magnitude(self, qca_sl_10):
        v, state = qca_sl_10
        for k in range(1, v.n_bulk + 1):
            (g,) = [g for g in v.Gi[k] if g]
            assert abs(abs(sigma(state, v, k, g)) - 1.0) < 1e-10

    def test_paper_string_patterns_site_local_qca(self, qca_sl_10):
        # the six site-local strings, one per site phase; the generator-axis
        # ones coincide with the six-site-block strings
        v, state = qca_sl_10
        v6 = validate(builtin_scheme("qca_block6", 10))
        state6 = certify_symmetry(state, v6)
        op = v.assemble("R", 0b0001, 6)
        assert op.label() == "IIIIIIIZXI"
        assert v6.assemble("R", 0b0001, 1) == op
        for g in (0b0001, 0b0010, 0b0100, 0b1000):
            (k,) = [k for k in range(1, 7) if g in v.Gi[k]]
            assert v.assemble("R", g, k) == v6.assemble("R", g, 1)
            assert sigma(state, v, k, g) == pytest.approx(sigma(state6, v6, 1, g))

    def test_uncertified_state_rejected(self, cluster_b2_11):
        v, state = cluster_b2_11
        bare = build_circuit_state(cluster_circuit(11))
        with pytest.raises(StringOrderError):
            sigma(bare, v, 1, 0b01)

    def test_inadmissible_axis_rejected(self):
        v = validate(builtin_scheme("cluster_site_local", 9))
        state = certify_symmetry(build_circuit_state(cluster_circuit(9)), v)
        with pytest.raises(ValueError):
            sigma(state, v, 1, 0b01)

    def test_symmetry_invariance(self, cluster_b2_11):
        from mbqc1d.pauli import PauliAction
        from mbqc1d.states import ResourceState

        v, state = cluster_b2_11
        for g in v.elements():
            psi = PauliAction(v.assemble("U", g))(state.amplitudes)
            rotated = certify_symmetry(ResourceState(11, psi), v)
            assert sigma(rotated, v, 2, 0b01) == pytest.approx(sigma(state, v, 2, 0b01))


class TestIsing:
    def test_only_single_generator_strings(self):
        v = validate(builtin_scheme("ising", 8))
        gs = certify_symmetry(
            ground_state(HamiltonianSpec.make("ising_transverse", 8, alpha=0.3)), v)
        table = block_table(gs, v, family="ising_transverse", param=0.3)
        labels = {e.g_label for e in table.entries}
        assert labels == {"g1"}
        # no pair of admissible logical observables anticommutes
        for g in (1,):
            for gp in (1,):
                assert v.kappa_of(g, gp) == 0


class TestSweep:
    def test_cluster_sweep_shape(self, tmp_path):
        grid = [0.0, 0.1 * np.pi, 0.45 * np.pi]
        table = sweep("cluster_field", "cluster_block2", 9, grid)
        assert len(table.entries) == 3 * 3  # three axes at the anchor per point
        first = table.select(param=0.0)
        assert all(abs(e.sigma - 1.0) < 1e-10 for e in first)
        path = tmp_path / "sweep.csv"
        table.write_csv(str(path))
        text = path.read_text().splitlines()
        assert text[0] == "family,N,param,k,g,sigma"
        assert len(text) == 10

    def test_sweep_records_solver_errors(self):
        table = sweep("cluster_field", "cluster_block2", 9, [float("nan")])
        assert any(e.g_label.startswith("ERROR:") for e in table.entries)


class TestDecayFit:
    def test_synthetic_exponential(self):
        pts = [(k, math.exp(-k / 3.0)) for k in range(1, 9)]
        fit = fit_decay(pts)
        assert fit.ok
        assert abs(fit.xi - 3.0) < 1e-6
        assert fit.r2 > 1 - 1e-12
        assert abs(fit.onset) < 1e-9

    def test_onset_shift(self):
        pts = [(k, 0.5 * math.exp(-(k) / 2.0)) for k in range(1, 9)]
        fit = fit_decay(pts)
        # |sigma| = exp(-(d - D)/xi) with D = xi*ln 0.5 < 0, clamped to 0
        assert fit.ok and fit.onset == 0.0

    def test_no_decay_flagged(self):
        pts = [(k, 0.9) for k in range(1, 8)]
        fit = fit_decay(pts)
        assert not fit.ok and fit.reason == "no decay regime"
        with pytest.raises(StringOrderError):
            fit.angle_bound(np.pi / 2, 3, 1)

    def test_below_floor(self):
        pts = [(k, 1e-15) for k in range(1, 8)]
        fit = fit_decay(pts)
        assert not fit.ok and fit.reason == "below numeric floor"

    def test_too_few_points(self):
        with pytest.raises(StringOrderError):
            fit_decay([(1, 0.5), (2, 0.3)])

    def test_angle_bound_value(self):
        fit = DecayFit(xi=2.0, onset=1.0, r2=1.0, n_points=6, ok=True)
        expected = (np.pi / 2) * math.exp(-0.5) / (4 * (1 - math.exp(-1.0)))
        assert fit.angle_bound(np.pi / 2, 4, 1) == pytest.approx(expected)

    def test_decay_from_ground_state(self):
        v = validate(builtin_scheme("cluster_site_local", 13))
        gs = certify_symmetry(
            ground_state(HamiltonianSpec.make("cluster_field", 13, alpha=0.35 * np.pi)), v)
        table = block_table(gs, v, family="cluster_field", param=0.35 * np.pi)
        fit = decay_fit(table, v, ["g01", "g10"], window="right_half")
        assert fit.ok and 0 < fit.xi < 20
        # full window includes the order-pinned far edge: no decay there
        assert not decay_fit(table, v, ["g01", "g10"]).ok


class TestEffectiveDelta:
    def test_circuit_state_keeps_exact_delta(self):
        from mbqc1d.pauli import SitePartition

        v = validate(builtin_scheme("cluster_site_local", 9))
        part = SitePartition.from_sizes([1] * 9)
        state = certify_symmetry(build_circuit_state(cluster_circuit(9), part), v)
        assert effective_delta(state, v) == 1

    def test_deep_phase_defaults_to_one(self):
        v = validate(builtin_scheme("cluster_block2", 13))
        gs = certify_symmetry(
            ground_state(HamiltonianSpec.make("cluster_field", 13, alpha=0.05 * np.pi)), v)
        assert effective_delta(gs, v) == 1

    def test_decaying_phase_grows(self):
        v = validate(builtin_scheme("cluster_block2", 13))
        gs = certify_symmetry(
            ground_state(HamiltonianSpec.make("cluster_field", 13, alpha=0.35 * np.pi)), v)
        assert effective_delta(gs, v) >= 1


def test_default_anchor():
    v = validate(builtin_scheme("cluster_block2", 13))
    assert default_anchor(v) == 1
    v2 = validate(builtin_scheme("cluster_site_local", 17))
    assert default_anchor(v2) == 3
