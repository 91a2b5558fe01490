import math

import numpy as np
import pytest
from scipy.linalg import expm

from qkrd.instancegen import DOMAIN_WALL
from qkrd.qsim import (
    MixerSpec,
    SimulationResourceError,
    StateVector,
    apply_cost_phase,
    apply_mixer,
    apply_xy_ring_mixer,
    basis_state,
    build_diagonal,
    check_size,
    domain_wall_hopping,
    expectation,
    feasible_mass,
    index_to_bitstring,
    init_state,
    mixer_for_layout,
    ring_edges,
    sample,
    subspace_uniform_state,
    uniform_state,
    xy_ring_hamiltonian,
)

from conftest import synthetic_instance
from oracles import dw_gen, mixer_gates, qubo_energies, x_op, xy_gen


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(v / np.linalg.norm(v), n)


def dense_mixer(n, kind, layout, beta, exact=False):
    u = np.eye(1 << n, dtype=complex)
    for g in mixer_gates(n, kind, layout, exact):
        u = expm(-1j * beta * g) @ u
    return u


class TestDiagonal:
    @pytest.mark.parametrize("k,f", [(3, 0), (2, 2), (3, 1)])
    def test_matches_bitwise_energy(self, k, f):
        inst = synthetic_instance(k=k, f=f, seed=1)
        assert np.allclose(build_diagonal(inst.qubo).energies, qubo_energies(inst.qubo))

    def test_cap(self):
        with pytest.raises(SimulationResourceError):
            check_size(25)
        with pytest.raises(SimulationResourceError):
            uniform_state(30)

    def test_phase_levels_consistent(self):
        inst = synthetic_instance(k=4, f=1, seed=2)
        diag = build_diagonal(inst.qubo)
        assert np.allclose(diag.phases(0.37), np.exp(-0.37j * diag.energies))


class TestStates:
    def test_uniform(self):
        s = uniform_state(4)
        assert np.allclose(s.probabilities, 1 / 16)

    def test_basis_bit_order(self):
        s = basis_state(3, [1, 0, 0])
        assert s.probabilities[1] == 1.0
        assert index_to_bitstring(1, 3) == "100"
        assert init_state(3, "basis", "011").probabilities[6] == 1.0

    def test_basis_length_check(self):
        with pytest.raises(ValueError):
            basis_state(3, [1, 0])

    def test_feasible_uniform(self):
        inst = synthetic_instance(k=3, f=1)
        idx = inst.layout.feasible_indices()
        s = init_state(inst.n_qubits, "feasible_uniform", indices=idx)
        assert np.allclose(s.probabilities[idx], 1 / len(idx))
        assert feasible_mass(s, inst.layout) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            subspace_uniform_state(3, [])

    def test_local_superposition(self):
        inst = synthetic_instance(k=4, f=0)
        spec = mixer_for_layout("xy_blocks", inst.layout)
        bits = inst.layout.encode(0)
        s = init_state(4, "local_superposition", bits, spec, theta=0.1)
        ref = dense_mixer(4, "xy_blocks", inst.layout, 0.1) @ basis_state(4, bits).amplitudes
        assert np.allclose(s.amplitudes, ref, atol=1e-12)
        assert s.probabilities[1] > 0.9 and feasible_mass(s, inst.layout) == pytest.approx(1.0)

    def test_local_superposition_needs_mixer(self):
        with pytest.raises(ValueError):
            init_state(2, "local_superposition", [1, 0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            init_state(2, "bogus", [1, 0])


class TestMixers:
    def test_x_single_qubit(self):
        s = basis_state(1, [0])
        apply_mixer(s, MixerSpec("x"), 0.3)
        assert np.allclose(s.amplitudes, [math.cos(0.3), -1j * math.sin(0.3)])

    @pytest.mark.parametrize("kind", ["x", "xy_primary", "xy_blocks"])
    @pytest.mark.parametrize("k,f", [(3, 0), (4, 0), (2, 1), (3, 1)])
    def test_against_dense(self, kind, k, f):
        inst = synthetic_instance(k=k, f=f)
        n = inst.n_qubits
        spec = mixer_for_layout(kind, inst.layout)
        s = random_state(n, k * 7 + f)
        ref = dense_mixer(n, kind, inst.layout, 0.41) @ s.amplitudes
        apply_mixer(s, spec, 0.41)
        assert np.allclose(s.amplitudes, ref, atol=1e-12)

    @pytest.mark.parametrize("k,f", [(3, 0), (4, 0), (5, 0), (2, 1), (4, 1)])
    def test_domain_wall_against_dense(self, k, f):
        inst = synthetic_instance(k=k, f=f).with_encoding(DOMAIN_WALL)
        n = inst.n_qubits
        s = random_state(n, 3)
        ref = dense_mixer(n, "domain_wall", inst.layout, -0.8) @ s.amplitudes
        apply_mixer(s, mixer_for_layout("domain_wall", inst.layout), -0.8)
        assert np.allclose(s.amplitudes, ref, atol=1e-12)

    @pytest.mark.parametrize("k", [3, 4, 5, 6])
    def test_exact_ring(self, k):
        inst = synthetic_instance(k=k)
        s = random_state(k, k)
        ref = dense_mixer(k, "xy_primary", inst.layout, 0.6, exact=True) @ s.amplitudes
        apply_mixer(s, mixer_for_layout("xy_primary", inst.layout, exact=True), 0.6)
        assert np.allclose(s.amplitudes, ref, atol=1e-12)

    def test_ring_hamiltonian_matches_generators(self):
        for k in (3, 4, 5):
            h = sum(xy_gen(k, i, j) for i, j in (
                [(a, a + 1) for a in range(k - 1)] + [(k - 1, 0)]))
            assert np.allclose(xy_ring_hamiltonian(k), h.real)

    def test_domain_wall_three_choices(self):
        # K=3: two wall qubits, valid patterns 00, 10, 11 (qubit 0 first)
        t = domain_wall_hopping(3)
        assert np.allclose(t, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        g = dw_gen(2, [0, 1])
        valid = [0b00, 0b01, 0b11]
        assert np.allclose(g[np.ix_(valid, valid)], t)
        s = basis_state(2, [0, 1])  # invalid wall pattern stays put
        apply_mixer(s, MixerSpec("domain_wall", ((0, 1),)), 0.7)
        assert s.probabilities[2] == pytest.approx(1.0)

    def test_ring_edge_colouring(self):
        assert ring_edges([0, 1]) == [[(0, 1)]]
        assert ring_edges([0, 1, 2, 3]) == [[(0, 1), (2, 3)], [(1, 2), (3, 0)]]
        assert ring_edges([0, 1, 2]) == [[(0, 1)], [(1, 2)], [(2, 0)]]
        for k in range(2, 9):
            for colour in ring_edges(list(range(k))):
                used = [q for e in colour for q in e]
                assert len(used) == len(set(used))

    @pytest.mark.parametrize("kind", ["xy_primary", "xy_blocks"])
    def test_xy_preserves_hamming_weight_per_block(self, kind):
        inst = synthetic_instance(k=4, f=2)
        s = init_state(inst.n_qubits, "basis", inst.layout.encode(1, 0))
        apply_mixer(s, mixer_for_layout(kind, inst.layout), 0.9)
        idx = np.nonzero(s.probabilities > 1e-14)[0]
        for b in idx:
            assert sum((b >> q) & 1 for q in inst.layout.primary) == 1

    def test_unitarity(self):
        inst = synthetic_instance(k=3, f=1)
        for kind in ("x", "xy_primary", "xy_blocks"):
            s = random_state(inst.n_qubits, 11)
            apply_mixer(s, mixer_for_layout(kind, inst.layout), 1.3)
            assert s.norm() == pytest.approx(1.0, abs=1e-12)
        dw = inst.with_encoding(DOMAIN_WALL)
        s = random_state(dw.n_qubits, 12)
        apply_mixer(s, mixer_for_layout("domain_wall", dw.layout), 1.3)
        assert s.norm() == pytest.approx(1.0, abs=1e-12)

    def test_encoding_mismatch(self):
        inst = synthetic_instance(k=3)
        with pytest.raises(ValueError):
            mixer_for_layout("domain_wall", inst.layout)
        with pytest.raises(ValueError):
            mixer_for_layout("x", inst.with_encoding(DOMAIN_WALL).layout)
        with pytest.raises(ValueError):
            MixerSpec("zz")
        with pytest.raises(ValueError):
            MixerSpec("xy_blocks", ((0, 1), (1, 2)))

    def test_exact_cap(self):
        s = uniform_state(13)
        with pytest.raises(SimulationResourceError):
            apply_xy_ring_mixer(s, [list(range(13))], 0.1, exact=True)

    def test_singleton_block_skipped(self):
        s = random_state(2, 0)
        before = s.amplitudes.copy()
        apply_xy_ring_mixer(s, [[0]], 0.5)
        assert np.array_equal(s.amplitudes, before)

    def test_large_register_unitarity(self):
        inst = synthetic_instance(k=6, f=2)
        s = init_state(18, "basis", inst.layout.encode(2, 1))
        spec = mixer_for_layout("xy_blocks", inst.layout)
        for _ in range(3):
            apply_mixer(s, spec, 0.7)
        assert s.norm() == pytest.approx(1.0, abs=1e-10)


class TestLayer:
    def test_cost_phase(self):
        inst = synthetic_instance(k=3)
        diag = build_diagonal(inst.qubo)
        s = random_state(3, 5)
        ref = np.exp(-0.2j * diag.energies) * s.amplitudes
        apply_cost_phase(s, diag, 0.2)
        assert np.allclose(s.amplitudes, ref)

    def test_zero_angles_identity(self):
        inst = synthetic_instance(k=3, f=1)
        s = random_state(inst.n_qubits, 2)
        before = s.amplitudes.copy()
        apply_cost_phase(s, build_diagonal(inst.qubo), 0.0)
        apply_mixer(s, mixer_for_layout("xy_blocks", inst.layout), 0.0)
        assert np.allclose(s.amplitudes, before)

    def test_expectation(self):
        inst = synthetic_instance(k=3)
        diag = build_diagonal(inst.qubo)
        s = random_state(3, 9)
        assert expectation(s, diag) == pytest.approx(np.vdot(s.amplitudes, diag.energies * s.amplitudes).real)


class TestSampling:
    def test_deterministic(self):
        s = random_state(4, 1)
        assert sample(s, 500, seed=7) == sample(s, 500, seed=7)
        assert sum(sample(s, 500, seed=7).values()) == 500

    def test_basis_state_always_hits(self):
        assert sample(basis_state(3, [0, 1, 1]), 64, seed=0) == {"011": 64}

    def test_frequencies(self):
        s = random_state(3, 4)
        counts = sample(s, 200_000, seed=3)
        for i, p in enumerate(s.probabilities):
            assert counts.get(index_to_bitstring(i, 3), 0) / 200_000 == pytest.approx(p, abs=5e-3)

    def test_shots_validation(self):
        with pytest.raises(ValueError):
            sample(uniform_state(2), 0)

    def test_feasible_mass_uniform(self):
        inst = synthetic_instance(k=4)
        assert feasible_mass(uniform_state(4), inst.layout) == pytest.approx(4 / 16)
