import math

import numpy as np
import pytest

from mbqc1d.pauli import PauliAction, commutation_sign
from mbqc1d.runtime import (
    MeasurementPattern,
    OutcomeRecord,
    PatternError,
    ShotEngine,
    compare_to_oracle,
    decompose,
    estimate_T,
    hprime_sign,
    load_pattern,
    oracle_prediction,
    pattern_from_config,
    run_shots,
    subgroup_basis,
    validate_pattern,
    verify_recursion,
)
from mbqc1d.schemes import builtin_scheme, validate
from mbqc1d.states import (
    HamiltonianSpec,
    build_circuit_state,
    certify_symmetry,
    cluster_circuit,
    ground_state,
    qca_circuit,
)


def cluster_state(n, scheme_name="cluster_site_local"):
    v = validate(builtin_scheme(scheme_name, n))
    return v, certify_symmetry(build_circuit_state(cluster_circuit(n), v.partition), v)


def qca_state(n=10, scheme_name="qca_block6"):
    v = validate(builtin_scheme(scheme_name, n))
    return v, certify_symmetry(build_circuit_state(qca_circuit(n, 2), v.partition), v)


class TestGroupHelpers:
    def test_subgroup_basis(self):
        assert subgroup_basis((0, 1, 2, 3)) == (1, 2)
        assert subgroup_basis((0, 5)) == (5,)
        assert subgroup_basis((0, 3, 5, 6)) == (3, 5)

    def test_decompose(self):
        assert decompose(6, (3, 5)) == (1, 1)
        assert decompose(0, (3, 5)) == (0, 0)
        assert decompose(1, (2,)) is None


class TestPatternValidation:
    def test_spacing_enforced(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1, 3: 2}, angles={2: 0.5, 3: 0.5})
        with pytest.raises(PatternError, match="closer than"):
            validate_pattern(v, pat, delta=1)

    def test_spacing_at_two_delta_allowed(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1, 4: 1}, angles={2: 0.5, 4: 0.5})
        validate_pattern(v, pat, delta=1)

    def test_override_allows_dense_rotations(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1, 3: 2}, angles={2: 0.5, 3: 0.5},
                                 spacing_override=True)
        validate_pattern(v, pat, delta=1)

    def test_unknown_delta_rejected(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 0.5})
        with pytest.raises(PatternError, match="entanglement range"):
            validate_pattern(v, pat, delta=None)

    def test_bad_axis(self):
        v, _ = cluster_state(9)
        pat = MeasurementPattern(axes={2: 2}, angles={2: 0.5})  # g10 on even block
        with pytest.raises(PatternError, match="not admissible"):
            validate_pattern(v, pat, delta=1)

    def test_angle_range(self):
        v, _ = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 4.0})
        with pytest.raises(PatternError, match="outside"):
            validate_pattern(v, pat, delta=1)

    def test_noncommuting_hprime(self):
        v, _ = cluster_state(9)
        pat = MeasurementPattern(hprime_gens=(1, 2))
        with pytest.raises(PatternError, match="commute"):
            validate_pattern(v, pat, delta=1)


class TestWire:
    def test_deterministic_output(self):
        v, state = cluster_state(5)
        est = estimate_T(state, v, MeasurementPattern(), shots=60, seed=4)
        assert est[0b10] == (1.0, 0.0, 60)

    def test_anticommuting_readout_averages_to_zero(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(hprime_gens=(0b01,))
        mean, stderr, _ = estimate_T(state, v, pat, shots=3000, seed=9)[0b01]
        assert abs(mean) < 4 * stderr + 1e-9

    def test_initialization_values_on_H(self):
        v, state = qca_state()
        est = estimate_T(state, v, MeasurementPattern(), shots=40, seed=1)
        for h, (mean, stderr, _) in est.items():
            assert mean == 1.0 and stderr == 0.0  # chi = 0 sector

    def test_wire_matches_oracle_exactly(self):
        v, state = cluster_state(7)
        rep = compare_to_oracle(state, v, MeasurementPattern(), shots=50, seed=0)
        assert rep[0b10]["z"] == 0.0


class TestSideProcessing:
    def test_record_identities(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1, 4: 1}, angles={2: 1.2, 4: -0.4})
        for rec in run_shots(state, v, pat, shots=8, seed=21):
            for k, qk in rec.q.items():
                expect = sum(rec.s_element(i, pat.axes[k], v.m) for i in range(k)) % 2
                assert qk == expect
            for h, bit in rec.o.items():
                total = sum(rec.s_element(i, h, v.m) for i in range(v.n_bulk + 1))
                coeffs = decompose(h, subgroup_basis(v.Hprime))
                total += sum(c * rec.s_right[j] for j, c in enumerate(coeffs))
                assert bit == total % 2
            for (k, g), lam in rec.lam.items():
                total = sum(rec.s_element(i, g, v.m) for i in range(k + 1))
                assert lam == (-1) ** (total % 2)

    def test_same_seed_identical_records(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 0.7})
        a = run_shots(state, v, pat, shots=5, seed=33)
        b = run_shots(state, v, pat, shots=5, seed=33)
        for ra, rb in zip(a, b):
            assert ra.s == rb.s and ra.s_right == rb.s_right and ra.o == rb.o

    def test_threads_equivalent(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 0.7})
        serial = run_shots(state, v, pat, shots=12, seed=5, threads=1)
        parallel = run_shots(state, v, pat, shots=12, seed=5, threads=2)
        for ra, rb in zip(serial, parallel):
            assert ra.s == rb.s and ra.o == rb.o

    def test_within_round_observables_commute(self):
        # the conjugated block observables inherit commutativity from the u images
        v, _ = cluster_state(9)
        for i in range(v.n_bulk + 1):
            for a in range(v.m):
                for b in range(v.m):
                    assert commutation_sign(v.u_local(i, 1 << a), v.u_local(i, 1 << b)) == 0


class TestSymmetryInvariance:
    def _first_round_distribution(self, engine, psi):
        """Exact joint distribution of the first-round outcomes."""
        actions = [engine._u_actions[(0, a)] for a in range(engine.m)]
        actions += list(engine._right_actions)
        dist = {}

        def walk(state, bits, prob):
            if prob < 1e-14:
                return
            if len(bits) == len(actions):
                dist[tuple(bits)] = prob
                return
            act = actions[len(bits)]
            if act is None:
                walk(state, bits + [0], prob)
                return
            ppsi = act(state)
            exp = float(np.vdot(state, ppsi).real)
            for outcome, sign in ((0, 1), (1, -1)):
                p = 0.5 * (1 + sign * exp)
                if p < 1e-14:
                    continue
                walk((state + sign * ppsi) / (2 * math.sqrt(p)), bits + [outcome], prob * p)

        walk(psi, [], 1.0)
        return dist

    def test_first_round_invariant_under_symmetry(self):
        v, state = cluster_state(5)
        engine = ShotEngine(state, v, MeasurementPattern())
        base = self._first_round_distribution(engine, state.amplitudes.copy())
        for g in v.elements():
            psi = PauliAction(v.assemble("U", g))(state.amplitudes)
            rotated = self._first_round_distribution(engine, psi)
            assert set(rotated) == set(base)
            for key in base:
                assert rotated[key] == pytest.approx(base[key], abs=1e-12)


class TestRecursionReplay:
    def test_honest_cluster_shot(self):
        v, state = cluster_state(7)
        pat = MeasurementPattern(axes={2: 1, 4: 1}, angles={2: 0.8, 4: -1.1})
        for rec in run_shots(state, v, pat, shots=3, seed=2):
            assert verify_recursion(state, v, pat, rec) == []

    def test_honest_qca_zero_angle_shot(self):
        v, state = qca_state()
        recs = run_shots(state, v, MeasurementPattern(), shots=2, seed=6)
        for rec in recs:
            assert verify_recursion(state, v, MeasurementPattern(), rec) == []

    def test_flipped_bit_detected(self):
        v, state = cluster_state(7)
        pat = MeasurementPattern(axes={2: 1, 4: 1}, angles={2: 0.8, 4: -1.1})
        rec = run_shots(state, v, pat, shots=1, seed=3)[0]
        rec.s[(3, 1)] ^= 1
        mismatches = verify_recursion(state, v, pat, rec)
        assert mismatches, "corrupted record must be flagged"
        # detection at the corrupted block or the first affected prefix
        first = mismatches[0]["at"]
        block = first[1] if first[0] in ("prefix", "q") else first[0]
        assert block >= 3

    def test_flipped_lambda_detected(self):
        v, state = cluster_state(7)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 0.8})
        rec = run_shots(state, v, pat, shots=1, seed=3)[0]
        rec.lam[(5, 0b10)] = -rec.lam[(5, 0b10)]
        mismatches = verify_recursion(state, v, pat, rec)
        assert any(m["at"][0] == "prefix" and m["at"][1] == 5 for m in mismatches)


class TestOracleComparison:
    def test_single_rotation(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={4: 1}, angles={4: np.pi / 3})
        rep = compare_to_oracle(state, v, pat, shots=10000, seed=12)
        r = rep[0b10]
        assert r["prediction"] == pytest.approx(math.cos(math.pi / 3))
        assert r["z"] <= 3.0

    def test_perturbed_state_two_rotations(self):
        v = validate(builtin_scheme("cluster_site_local", 9))
        gs = certify_symmetry(
            ground_state(HamiltonianSpec.make("cluster_field", 9, alpha=0.1 * np.pi)), v)
        pat = MeasurementPattern(axes={2: 1, 4: 1}, angles={2: 0.9, 4: -0.6})
        rep = compare_to_oracle(gs, v, pat, shots=10000, seed=11, delta=1)
        assert rep[0b10]["z"] <= 3.5

    def test_qca_composite_axis(self):
        # axis g1*g2 anticommutes with the readouts g1 and g3 but commutes
        # with their product
        v, state = qca_state()
        pat = MeasurementPattern(axes={1: 0b0011}, angles={1: 1.1})
        rep = compare_to_oracle(state, v, pat, shots=8000, seed=7)
        assert rep[0b0101]["prediction"] == pytest.approx(1.0)
        assert rep[0b0101]["z"] == 0.0
        for h in (0b0001, 0b0100):
            assert rep[h]["prediction"] == pytest.approx(math.cos(1.1))
            assert rep[h]["z"] <= 3.0

    def test_hprime_sign_trivial_on_paper_readouts(self):
        v, _ = qca_state()
        gens = subgroup_basis(v.Hprime)
        for h in v.Hprime:
            if h:
                assert hprime_sign(v, gens, h) == 1


class TestIsingNullity:
    def setup_method(self):
        self.v = validate(builtin_scheme("ising", 8))
        spec = HamiltonianSpec.make("ising_transverse", 8, alpha=0.15 * np.pi)
        self.state = certify_symmetry(ground_state(spec), self.v)

    def test_observables_angle_independent(self):
        # vL commutes with u at every block, so the tilt cancels symbolically
        for i in range(1, self.v.n_bulk + 1):
            assert commutation_sign(self.v.vL_local(i, 1), self.v.u_local(i, 1)) == 0

    def test_outputs_deterministic_and_angle_free(self):
        pats = [
            MeasurementPattern(axes={k: 1 for k in (2, 4)}, angles={2: 0.0, 4: 0.0}),
            MeasurementPattern(axes={k: 1 for k in (2, 4)}, angles={2: 1.3, 4: -0.7}),
        ]
        results = []
        for pat in pats:
            recs = run_shots(self.state, self.v, pat, shots=25, seed=8, delta=1)
            outs = {tuple(sorted(r.o.items())) for r in recs}
            assert len(outs) == 1  # deterministic output
            results.append(outs.pop())
        assert results[0] == results[1]  # angle independent

    def test_estimate_matches_character(self):
        est = estimate_T(self.state, self.v, MeasurementPattern(), shots=20, seed=2, delta=1)
        chi_bit = self.state.chi[0]
        assert est[1] == ((-1.0) ** chi_bit, 0.0, 20)


class TestPatternFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "p.toml"
        path.write_text(
            'scheme = "cluster_site_local"\n'
            "n_sites = 9\n"
            "shots = 500\n"
            "seed = 3\n"
            'Hprime = ["g10"]\n'
            "[[rotation]]\n"
            "block = 2\n"
            'axis = "g01"\n'
            "angle = 0.785398\n"
        )
        cfg = load_pattern(str(path))
        assert cfg["scheme_name"] == "cluster_site_local"
        v = validate(builtin_scheme(cfg["scheme_name"], cfg["n_sites"]))
        pat = pattern_from_config(v, cfg)
        assert pat.axes == {2: 0b01}
        assert pat.angles[2] == pytest.approx(0.785398)
        assert pat.hprime_gens == (0b10,)

    def test_no_resamples_on_clean_runs(self):
        v, state = cluster_state(9)
        pat = MeasurementPattern(axes={2: 1}, angles={2: 0.4})
        recs = run_shots(state, v, pat, shots=10, seed=14)
        assert all(r.resamples == 0 for r in recs)
