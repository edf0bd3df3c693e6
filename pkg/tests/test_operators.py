import numpy as np
import pytest
from scipy.linalg import expm

from conftest import dense_embed_oracle, dense_global_oracle, random_unitary
from globalgates.lattice import Layout, circle_sixth, grid_slab
from globalgates import operators as ops
from globalgates.operators import (
    GlobalGateSequence,
    GlobalHamiltonian,
    GlobalOperator,
    OneQubitInstruction,
    OperatorError,
    PHASE_QUARTER,
    SIGMA_X,
    TwoQubitInstruction,
    apply_global_gate,
    apply_global_hamiltonian,
    apply_global_one_qubit,
    conjugated_hamiltonian,
    embed_two_qubit,
    load_sequence,
    run_sequence,
    sequence_from_dict,
)
from globalgates.statevec import PureState, prepare_initial


def random_state(rng, layout):
    dim = 1 << layout.n
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState(amps / np.linalg.norm(amps), layout)


def nonuniform(layout, scale=0.7):
    w = {}
    for i, p in enumerate(layout.D):
        for j, q in enumerate(layout.D):
            if p != q:
                w[(p, q)] = 1.0 + scale * np.sin(1.0 + 3.1 * i + 1.7 * j)
    return Layout(layout.group, layout.D, layout.P, layout.r, layout.r_prime, w)


class TestGeneratorMatrices:
    def test_named_generators_hermitian(self):
        for name, mat in ops.NAMED_GENERATORS.items():
            assert np.max(np.abs(mat - mat.conj().T)) < 1e-15, name

    def test_hop_is_sigma_plus_projector(self):
        # B_delta = |1 delta><0 delta|: lowering from |0d> to |1d>
        b1 = ops.hop_matrix(1)
        want = np.zeros((4, 4))
        want[3, 1] = 1.0
        np.testing.assert_array_equal(b1, want)

    def test_rot_families_exponentiate_to_the_stated_gates(self):
        t = 0.37
        for delta in (0, 1):
            b = ops.hop_matrix(delta)
            real_gate = expm(-t * (b - b.conj().T))
            np.testing.assert_allclose(
                expm(-1j * t * ops.rot_real_matrix(delta)), real_gate, atol=1e-14)
            imag_gate = expm(-1j * t * (b + b.conj().T))
            np.testing.assert_allclose(
                expm(-1j * t * ops.rot_imag_matrix(delta)), imag_gate, atol=1e-14)


class TestEmbedding:
    def test_identity_embeds_to_identity(self, rng):
        lay = circle_sixth(12)
        emb = embed_two_qubit(np.eye(4), 3, 7, lay)
        st = random_state(rng, lay)
        np.testing.assert_allclose(emb.apply(st.amps), st.amps, atol=1e-14)

    def test_projector_action_on_basis_states(self):
        lay = circle_sixth(12)
        emb = embed_two_qubit(ops.addressing_matrix(), 4, 9, lay)
        both = (1 << 4) | (1 << 9) | (1 << 0)
        one = np.zeros(1 << 12, dtype=complex)
        one[both] = 1.0
        np.testing.assert_array_equal(emb.apply(one), one)
        miss = np.zeros(1 << 12, dtype=complex)
        miss[1 << 9] = 1.0
        assert np.all(emb.apply(miss) == 0.0)

    def test_hop_action_matches_definition(self):
        lay = circle_sixth(12)
        emb = embed_two_qubit(ops.hop_matrix(0), 4, 9, lay)
        # a_p = 1 blocks the raise
        blocked = np.zeros(1 << 12, dtype=complex)
        blocked[1 << 4] = 1.0
        assert np.all(emb.apply(blocked) == 0.0)
        # a_p = 0, a_q = 0 raises bit p
        lower = np.zeros(1 << 12, dtype=complex)
        lower[1 << 3] = 1.0
        got = emb.apply(lower)
        want = np.zeros(1 << 12, dtype=complex)
        want[(1 << 3) | (1 << 4)] = 1.0
        np.testing.assert_array_equal(got, want)

    def test_against_kron_oracle(self, rng):
        lay = grid_slab(1, 7)
        mat = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        emb = embed_two_qubit(mat, (2,), (5,), lay)
        np.testing.assert_allclose(
            emb.dense(), dense_embed_oracle(mat, (2,), (5,), lay), atol=1e-13)

    def test_same_site_rejected(self):
        with pytest.raises(OperatorError):
            embed_two_qubit(np.eye(4), 3, 3, circle_sixth(12))


class TestGlobalHamiltonian:
    def test_vacuum_annihilated_without_adjacent_ones(self):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("addressing", 5, lay)
        st = prepare_initial(lay)
        out = apply_global_hamiltonian(st, gh)
        assert np.all(out.amps == 0.0)

    def test_adjacent_reference_pair_at_distance_one(self):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("addressing", 1, lay)
        st = prepare_initial(lay)
        out = apply_global_hamiltonian(st, gh)
        np.testing.assert_allclose(out.amps, st.amps)  # W(2,1) = 1 pair

    def test_diagonal_matches_pair_weight_sum(self):
        lay = nonuniform(circle_sixth(12))
        gh = GlobalHamiltonian("addressing", 4, lay)
        diag = gh.diagonal()
        idx = np.arange(1 << 12)
        want = np.zeros(1 << 12)
        for p, q in lay.pairs_at(4):
            ip, iq = lay.site_index[p], lay.site_index[q]
            want += lay.weight(p, q) * (((idx >> ip) & 1) * ((idx >> iq) & 1))
        np.testing.assert_allclose(diag, want, atol=1e-12)

    def test_against_kron_oracle_nonuniform(self, rng):
        lay = nonuniform(grid_slab(1, 7))
        for name in ("addressing", "rot_real_0", "rot_imag_1"):
            gh = GlobalHamiltonian(name, (1,), lay)
            dense = gh.dense()
            oracle = dense_global_oracle(ops.NAMED_GENERATORS[name], (1,), lay)
            np.testing.assert_allclose(dense, oracle, atol=1e-12, err_msg=name)

    def test_hermitian_when_realized_densely(self):
        lay = nonuniform(circle_sixth(12))
        for name in ("addressing", "rot_real_1", "rot_imag_0"):
            dense = GlobalHamiltonian(name, 3, lay).dense()
            assert np.max(np.abs(dense - dense.conj().T)) < 1e-13

    def test_nonhermitian_generator_rejected(self):
        with pytest.raises(OperatorError):
            GlobalHamiltonian(ops.hop_matrix(1), 1, circle_sixth(12))

    def test_zero_displacement_rejected(self):
        with pytest.raises(OperatorError):
            GlobalHamiltonian("addressing", 0, circle_sixth(12))

    def test_norm_bound_dominates_operator_norm(self):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("rot_imag_1", 2, lay)
        dense = gh.dense()
        assert np.linalg.norm(dense, 2) <= gh.norm_bound() + 1e-9


class TestGateApplication:
    def test_zero_duration_is_identity(self, rng):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("rot_imag_1", 1, lay)
        st = random_state(rng, lay)
        out = apply_global_gate(st, gh, 0.0)
        np.testing.assert_array_equal(out.amps, st.amps)

    def test_diagonal_gate_fixes_vacuum_without_pairs(self):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("addressing", 5, lay)
        st = prepare_initial(lay)
        out = apply_global_gate(st, gh, 0.83)
        np.testing.assert_allclose(out.amps, st.amps, atol=1e-15)

    @pytest.mark.parametrize("name,d", [("rot_imag_1", 1), ("rot_real_0", 2)])
    def test_matches_dense_expm(self, rng, name, d):
        lay = nonuniform(circle_sixth(6 if False else 12))
        lay6 = nonuniform(grid_slab(1, 7))
        gh = GlobalHamiltonian(name, (d,), lay6)
        st = random_state(rng, lay6)
        t = 0.77
        got = apply_global_gate(st, gh, t, tol=1e-12)
        want = expm(-1j * t * gh.dense()) @ st.amps
        assert np.linalg.norm(got.amps - want) < 1e-10

    def test_random_hermitian_generator_against_expm(self, rng):
        lay = grid_slab(1, 7)  # n = 7
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        h = (m + m.conj().T) / 2
        gh = GlobalHamiltonian(h, (2,), lay)
        st = random_state(rng, lay)
        got = apply_global_gate(st, gh, 0.6, tol=1e-12)
        want = expm(-1j * 0.6 * gh.dense()) @ st.amps
        assert np.linalg.norm(got.amps - want) < 1e-10

    def test_diagonal_fast_path_equals_generic_path(self, rng):
        lay = nonuniform(circle_sixth(12))  # n = 12 > dense cap
        gh = GlobalHamiltonian("addressing", 3, lay)
        st = random_state(rng, lay)
        fast = apply_global_gate(st, gh, 1.3)
        slow = apply_global_gate(st, gh, 1.3, force_generic=True, tol=1e-13)
        assert np.linalg.norm(fast.amps - slow.amps) < 1e-12

    def test_norm_preserved(self, rng):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("rot_imag_0", 4, lay)
        st = random_state(rng, lay)
        out = apply_global_gate(st, gh, 2.1, tol=1e-12)
        assert abs(out.norm() - 1.0) < 1e-10


class TestOneQubitGlobal:
    def test_identity(self, rng):
        lay = circle_sixth(12)
        st = random_state(rng, lay)
        out = apply_global_one_qubit(st, np.eye(2))
        np.testing.assert_allclose(out.amps, st.amps)

    def test_sigma_x_flips_all_bits(self):
        lay = circle_sixth(12)
        st = prepare_initial(lay)
        out = apply_global_one_qubit(st, SIGMA_X)
        flipped = ((1 << 12) - 1) ^ ((1 << 1) | (1 << 2))
        assert out.amps[flipped] == 1.0

    def test_quarter_phase_gate_per_site_phases(self, rng):
        lay = circle_sixth(12)
        n = lay.n
        for index in rng.integers(0, 1 << n, size=8):
            amps = np.zeros(1 << n, dtype=complex)
            amps[index] = 1.0
            out = apply_global_one_qubit(PureState(amps, lay), PHASE_QUARTER)
            ones = bin(int(index)).count("1")
            want = np.exp(1j * np.pi * (n - 2 * ones) / 4)
            assert out.amps[index] == pytest.approx(want, abs=1e-12)
            assert np.linalg.norm(out.amps) == pytest.approx(1.0)

    def test_non_unitary_rejected(self):
        lay = circle_sixth(12)
        with pytest.raises(OperatorError):
            apply_global_one_qubit(prepare_initial(lay), np.array([[1, 0], [0, 2.0]]))


class TestConjugation:
    def test_identity_conjugation(self):
        lay = circle_sixth(12)
        gh = GlobalHamiltonian("rot_imag_1", 1, lay)
        gh2 = conjugated_hamiltonian(np.eye(2), gh)
        np.testing.assert_allclose(gh2.matrix, gh.matrix)

    def test_sigma_x_swaps_delta(self):
        lay = circle_sixth(12)
        for delta in (0, 1):
            gh = conjugated_hamiltonian(SIGMA_X,
                                        GlobalHamiltonian(ops.rot_imag_matrix(delta), 1, lay))
            np.testing.assert_allclose(gh.matrix, ops.rot_imag_matrix(1 - delta),
                                       atol=1e-15)
            ghr = conjugated_hamiltonian(SIGMA_X,
                                         GlobalHamiltonian(ops.rot_real_matrix(delta), 1, lay))
            np.testing.assert_allclose(ghr.matrix, -ops.rot_real_matrix(1 - delta),
                                       atol=1e-15)

    def test_quarter_phase_maps_imag_family_to_real_family(self):
        lay = circle_sixth(12)
        for delta in (0, 1):
            gh = conjugated_hamiltonian(PHASE_QUARTER,
                                        GlobalHamiltonian(ops.rot_imag_matrix(delta), 1, lay))
            np.testing.assert_allclose(gh.matrix, ops.rot_real_matrix(delta), atol=1e-14)

    def test_conjugation_identity_dense(self, rng):
        # u_global exp(-i t H^(d)) u_global^dagger = exp(-i t (uu H uu^+)^(d))
        lay = nonuniform(grid_slab(1, 7))  # n = 7
        gh = GlobalHamiltonian("rot_imag_0", (1,), lay)
        for _ in range(5):
            u = random_unitary(rng, 2)
            ug = np.array([[1.0]], dtype=complex)
            for _ in range(lay.n):
                ug = np.kron(u, ug)  # bit 0 least significant
            e = expm(-1j * 0.4 * gh.dense())
            lhs = ug @ e @ ug.conj().T
            rhs = expm(-1j * 0.4 * conjugated_hamiltonian(u, gh).dense())
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestSequences:
    def test_round_trip_json(self, tmp_path, rng):
        lay = circle_sixth(12)
        seq = GlobalGateSequence([
            TwoQubitInstruction("addressing", 5, 0.25),
            TwoQubitInstruction("rot_imag_1", 4, -0.5),
            OneQubitInstruction(SIGMA_X),
            TwoQubitInstruction(ops.rot_real_matrix(0), 2, 0.125),
        ], {"note": "round trip"})
        path = tmp_path / "seq.json"
        seq.save(path, lay)
        back = load_sequence(path, lay)
        assert len(back.instructions) == 4
        st = random_state(rng, lay)
        a = run_sequence(st, seq, tol=1e-12)
        b = run_sequence(st, back, tol=1e-12)
        np.testing.assert_array_equal(a.amps, b.amps)

    def test_bad_record_reports_position(self):
        lay = circle_sixth(12)
        with pytest.raises(OperatorError, match="#1"):
            sequence_from_dict({"instructions": [
                {"type": "two_qubit", "generator": "addressing", "d": 1, "t": 0.1},
                {"type": "two_qubit", "generator": "mystery", "d": 1, "t": 0.1},
            ]}, lay)

    def test_inverted_sequence_is_adjoint(self, rng):
        lay = grid_slab(1, 7)
        seq = GlobalGateSequence([
            TwoQubitInstruction("rot_imag_1", (1,), 0.3),
            TwoQubitInstruction("addressing", (2,), 0.7),
            TwoQubitInstruction("rot_real_0", (3,), -0.2),
        ])
        st = random_state(rng, lay)
        fwd = run_sequence(st, seq, tol=1e-13)
        back = run_sequence(fwd, seq.inverted(), tol=1e-13)
        assert np.linalg.norm(back.amps - st.amps) < 1e-10

    def test_fused_and_unfused_agree(self, rng):
        lay = circle_sixth(12)
        seq = GlobalGateSequence([
            TwoQubitInstruction("addressing", 1, 0.2),
            TwoQubitInstruction("addressing", 5, -0.4),
            TwoQubitInstruction("rot_imag_1", 1, 0.1),
            TwoQubitInstruction("addressing", 2, 0.9),
        ])
        st = random_state(rng, lay)
        a = run_sequence(st, seq, fuse_diagonal=True)
        b = run_sequence(st, seq, fuse_diagonal=False)
        assert np.linalg.norm(a.amps - b.amps) < 1e-13

    def test_unitary_instruction_validation(self):
        with pytest.raises(OperatorError):
            OneQubitInstruction(np.array([[1, 1], [0, 1.0]]))
        with pytest.raises(OperatorError):
            TwoQubitInstruction(ops.hop_matrix(0), 1, 0.1)  # not Hermitian
        with pytest.raises(OperatorError):
            TwoQubitInstruction("addressing", 1, float("inf"))
