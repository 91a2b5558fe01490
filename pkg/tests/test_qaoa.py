import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkrd.baselines import brute_force_min, greedy_choice
from qkrd.instancegen import DOMAIN_WALL, QuboModel
from qkrd.qaoa import (
    Circuit,
    ConfigError,
    OptimizationError,
    ParameterVector,
    QaoaConfig,
    convergence_steps,
    cvar,
    decode_solution,
    fd_gradient,
    initial_parameters,
    objective_value,
    optimize,
    run_circuit,
)
from qkrd.qsim import make_rng, uniform_state

from conftest import synthetic_instance
from oracles import circuit_gates, energy_gradient, initial_state, qubo_energies, run_gates


def params(*vals):
    return ParameterVector.from_flat(vals)


def oracle_state(inst, cfg, theta):
    e = qubo_energies(inst.qubo)
    circuit = Circuit.build(inst, cfg)
    greedy_bits = inst.layout.encode(*greedy_choice(inst))
    psi0 = initial_state(inst.n_qubits, cfg.init, inst.layout, greedy_bits, cfg.theta, cfg.exact_mixer)
    seq = circuit_gates(e, circuit.cost_scale, inst.n_qubits, cfg.mixer, inst.layout, cfg.p, cfg.exact_mixer)
    return psi0, seq, run_gates(psi0, seq, theta), e


class TestConfig:
    def test_defaults(self):
        cfg = QaoaConfig()
        assert (cfg.p, cfg.max_steps, cfg.window, cfg.threshold, cfg.lr, cfg.fd_step) == (2, 1000, 25, 1e-3, 0.05, 1e-3)

    @pytest.mark.parametrize("bad", [dict(p=0), dict(mixer="zz"), dict(init="hot"), dict(objective="max"),
                                     dict(cvar_alpha=0.0), dict(cvar_alpha=1.5), dict(optimizer="lbfgs"),
                                     dict(objective="cvar", shots=0), dict(window=1)])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            QaoaConfig(**bad)

    def test_from_dict(self):
        assert QaoaConfig.from_dict({"p": 1, "mixer": "x"}).to_dict()["p"] == 1
        with pytest.raises(ConfigError, match="unknown"):
            QaoaConfig.from_dict({"layers": 2})

    def test_mixer_encoding_mismatch(self):
        inst = synthetic_instance(k=3)
        with pytest.raises(ConfigError):
            Circuit.build(inst, QaoaConfig(mixer="domain_wall"))
        with pytest.raises(ConfigError):
            Circuit.build(inst.with_encoding(DOMAIN_WALL), QaoaConfig(mixer="xy_blocks"))

    def test_adam_needs_expectation(self):
        with pytest.raises(ConfigError):
            optimize(synthetic_instance(k=3), QaoaConfig(objective="cvar", cvar_alpha=0.5, max_steps=3))

    def test_parameter_vector(self):
        pv = params(0.1, 0.2, 0.3, 0.4)
        assert pv.p == 2 and pv.gammas.tolist() == [0.1, 0.2]
        with pytest.raises(ValueError):
            ParameterVector([0.1], [0.2, 0.3])
        with pytest.raises(ValueError):
            ParameterVector([math.nan], [0.0])

    def test_initial_parameters_range(self):
        pv = initial_parameters(QaoaConfig(p=3), make_rng(4))
        assert pv.p == 3 and np.all((0 <= pv.flat()) & (pv.flat() <= 0.2))


class TestCircuit:
    @pytest.mark.parametrize("init", ["none", "basis", "local_superposition", "feasible_uniform"])
    def test_zero_angles_return_initial(self, init):
        inst = synthetic_instance(k=3, f=1)
        c = Circuit.build(inst, QaoaConfig(init=init))
        out = c.state(params(0, 0, 0, 0))
        assert np.allclose(out.amplitudes, c.initial.amplitudes)

    def test_single_qubit_closed_form(self):
        inst = synthetic_instance(k=1, seed=3)
        cfg = QaoaConfig(p=1, mixer="x", init="none", normalize_cost=False)
        g, b = 0.37, 0.81
        e0, e1 = qubo_energies(inst.qubo)
        a0, a1 = np.exp(-1j * g * e0) / math.sqrt(2), np.exp(-1j * g * e1) / math.sqrt(2)
        expected = [math.cos(b) * a0 - 1j * math.sin(b) * a1, -1j * math.sin(b) * a0 + math.cos(b) * a1]
        assert np.allclose(run_circuit(inst, params(g, b), cfg).amplitudes, expected, atol=1e-14)

    @pytest.mark.parametrize("mixer", ["x", "xy_primary", "xy_blocks", "domain_wall"])
    @pytest.mark.parametrize("init", ["none", "basis", "local_superposition", "feasible_uniform"])
    @pytest.mark.parametrize("exact", [False, True])
    def test_against_dense_oracle(self, mixer, init, exact):
        inst = synthetic_instance(k=3, f=1, seed=6)
        if mixer == "domain_wall":
            inst = inst.with_encoding(DOMAIN_WALL)
        cfg = QaoaConfig(mixer=mixer, init=init, exact_mixer=exact)
        theta = [0.31, -0.52, 0.77, 0.18]
        _, _, ref, _ = oracle_state(inst, cfg, theta)
        got = run_circuit(inst, params(*theta), cfg).amplitudes
        assert np.max(np.abs(got - ref)) < 1e-8

    @pytest.mark.parametrize("mixer", ["xy_primary", "xy_blocks"])
    def test_constraint_preservation(self, mixer):
        inst = synthetic_instance(k=4, f=1, seed=2)
        c = Circuit.build(inst, QaoaConfig(mixer=mixer, init="basis"))
        out = c.state(params(0.9, 1.7, 0.4, 2.2))
        primary_ok = sum(out.probabilities[b] for b in range(1 << inst.n_qubits)
                         if sum((b >> q) & 1 for q in inst.layout.primary) == 1)
        assert primary_ok == pytest.approx(1.0)
        if mixer == "xy_blocks":
            # follow-up blocks still mix but the gating is only a penalty, so only the primary is exact
            assert c.feasible_mass(out) <= 1.0 + 1e-12

    def test_domain_wall_stays_valid(self):
        inst = synthetic_instance(k=5, seed=2).with_encoding(DOMAIN_WALL)
        c = Circuit.build(inst, QaoaConfig(mixer="domain_wall", init="basis"))
        assert c.feasible_mass(c.state(params(1.1, 0.3, -0.4, 0.9))) == pytest.approx(1.0)

    def test_expectation_is_direct_sum(self):
        inst = synthetic_instance(k=6, seed=8)
        cfg = QaoaConfig(mixer="x", init="none")
        pv = params(0.3, 0.1, 0.5, 0.2)
        probs = run_circuit(inst, pv, cfg).probabilities
        assert objective_value(inst, pv, cfg) == pytest.approx(float(np.dot(probs, qubo_energies(inst.qubo))))

    def test_cost_scale(self):
        inst = synthetic_instance(k=3, seed=1)
        coefs = [abs(c) for c in inst.qubo.linear] + [abs(c) for c in inst.qubo.quadratic.values()]
        assert Circuit.build(inst, QaoaConfig()).cost_scale == max(coefs)
        assert Circuit.build(inst, QaoaConfig(normalize_cost=False)).cost_scale == 1.0


class TestGradient:
    @pytest.mark.parametrize("mixer,k,f", [("x", 3, 1), ("xy_blocks", 3, 1), ("xy_primary", 4, 0),
                                           ("domain_wall", 4, 1), ("xy_blocks", 2, 3)])
    def test_fd_matches_exact_derivative(self, mixer, k, f):
        inst = synthetic_instance(k=k, f=f, seed=k + f)
        if mixer == "domain_wall":
            inst = inst.with_encoding(DOMAIN_WALL)
        assert inst.n_qubits <= 8
        cfg = QaoaConfig(mixer=mixer, init="none")
        theta = np.array([0.21, 0.47, 0.33, 0.12])
        psi0, seq, _, e = oracle_state(inst, cfg, theta)
        exact = energy_gradient(psi0, seq, theta, e)
        c = Circuit.build(inst, cfg)
        fd = fd_gradient(lambda x: c.expectation(ParameterVector.from_flat(x)), theta, cfg.fd_step)
        assert np.max(np.abs(fd - exact)) <= 1e-4 * np.max(np.abs(exact))


class TestCvar:
    def test_definition(self):
        assert cvar([-5, -3, -1, 7], 0.5) == -4
        assert cvar([-5, -3, -1, 7], 1.0) == pytest.approx(-0.5)
        assert cvar([3, 1, 2], 0.01) == 1
        assert cvar([3, 1, 2], 0.34) == 1.5  # ceil(1.02) = 2

    def test_alpha_one_is_sample_mean(self):
        inst = synthetic_instance(k=4, seed=3)
        cfg = QaoaConfig(objective="cvar", cvar_alpha=1.0, shots=512, init="none")
        c = Circuit.build(inst, cfg)
        pv = params(0.2, 0.3, 0.4, 0.1)
        samples = c.sample_energies(pv, make_rng(9))
        assert c.objective(pv, make_rng(9)) == pytest.approx(samples.mean())

    def test_ordering_on_many_vectors(self):
        rng = np.random.default_rng(0)
        alphas = [0.05, 0.1, 0.3, 0.5, 1.0]
        for _ in range(1000):
            e = rng.normal(size=rng.integers(1, 300)) * rng.uniform(0.1, 50)
            vals = [cvar(e, a) for a in alphas]
            assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
            assert vals[-1] == pytest.approx(e.mean())

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_property_monotone(self, e, a1, a2):
        lo, hi = sorted((a1, a2))
        assert cvar(e, lo) <= cvar(e, hi) + 1e-9


def flat_instance(n=4):
    inst = synthetic_instance(k=n)
    return replace(inst, qubo=QuboModel(n))


class TestOptimize:
    @pytest.mark.parametrize("optimizer", ["adam", "simplex"])
    def test_constant_diagonal_stops_at_window(self, optimizer):
        tr = optimize(flat_instance(), QaoaConfig(optimizer=optimizer, init="none"))
        assert tr.steps_run == 25 and tr.converged_early
        assert tr.energies == [0.0] * 25
        assert convergence_steps(tr) == 25

    def test_max_steps_cap(self):
        tr = optimize(synthetic_instance(k=3, seed=1), QaoaConfig(init="none", max_steps=7, threshold=0.0))
        assert tr.steps_run == 7 and not tr.converged_early
        assert len(tr.params) == 7

    @pytest.mark.parametrize("cfg", [QaoaConfig(init="none", max_steps=40),
                                     QaoaConfig(init="none", optimizer="simplex", objective="cvar",
                                                cvar_alpha=0.3, shots=128, max_steps=40)])
    def test_deterministic(self, cfg):
        inst = synthetic_instance(k=4, f=1, seed=2)
        a, b = optimize(inst, cfg), optimize(inst, cfg)
        assert a.energies == b.energies and a.params == b.params
        assert a.summary() == b.summary()

    def test_shot_seed_changes_cvar_trace(self):
        inst = synthetic_instance(k=4, f=1, seed=2)
        cfg = QaoaConfig(init="none", optimizer="simplex", objective="cvar", cvar_alpha=0.3, shots=64, max_steps=20)
        assert optimize(inst, cfg, shot_seed=1).energies != optimize(inst, cfg, shot_seed=2).energies

    def test_nan_aborts_with_trace(self):
        inst = synthetic_instance(k=3)
        q = QuboModel(3, [math.nan, 0.0, 0.0])
        with pytest.raises(OptimizationError) as err:
            optimize(replace(inst, qubo=q), QaoaConfig(init="none", normalize_cost=False))
        assert err.value.trace.steps_run == 0

    def test_simplex_best_so_far(self):
        inst = synthetic_instance(k=4, seed=5)
        tr = optimize(inst, QaoaConfig(init="none", optimizer="simplex", max_steps=80))
        assert all(b <= a for a, b in zip(tr.energies, tr.energies[1:]))
        assert tr.evaluations == tr.steps_run

    def test_adam_descends(self):
        windows = ok = 0
        for seed in range(6):
            inst = synthetic_instance(k=4, f=1, seed=seed)
            tr = optimize(inst, QaoaConfig(init="none", max_steps=200, seed=seed))
            e = tr.energies
            for t in range(0, len(e) - 50):
                windows += 1
                ok += min(e[:t + 51]) <= min(e[:t + 1]) and e[t + 50] <= e[t] + 1e-9
        assert ok >= 0.95 * windows

    def test_summary_fields(self):
        tr = optimize(synthetic_instance(k=3, seed=1), QaoaConfig(max_steps=30))
        s = tr.summary()
        assert s["steps_run"] == 30 or s["converged_early"]
        assert 0.0 <= s["feasible_mass"] <= 1.0 + 1e-12
        assert s["decoded"]["feasible"]


class TestDecode:
    def test_basis_zero_angles_decodes_greedy(self):
        inst = synthetic_instance(k=5, f=2, seed=4)
        state = run_circuit(inst, params(0, 0, 0, 0), QaoaConfig(init="basis"))
        d = decode_solution(state, inst)
        assert (d.choice, d.followup) == greedy_choice(inst)
        assert d.feasible and d.probability == pytest.approx(1.0)
        assert d.energy == pytest.approx(inst.energy_of(d.choice, d.followup))

    def test_uniform_tie_breaks_low_index(self):
        inst = synthetic_instance(k=4)
        d = decode_solution(uniform_state(4), inst)
        assert d.choice == 0 and d.probability == pytest.approx(1 / 16)

    def test_counts(self):
        inst = synthetic_instance(k=3)
        d = decode_solution({"010": 5, "001": 5, "110": 90}, inst)
        assert d.choice == 1 and d.feasible  # tie 010/001 goes to index 2 over 4

    def test_no_feasible_support_falls_back(self):
        inst = synthetic_instance(k=3, seed=2)
        d = decode_solution({"110": 7, "000": 3}, inst)
        assert not d.feasible and d.probability == 0.0
        assert (d.choice, d.followup) == greedy_choice(inst)

    def test_domain_wall_decode(self):
        inst = synthetic_instance(k=4, seed=2).with_encoding(DOMAIN_WALL)
        d = decode_solution({"110": 10}, inst)
        assert d.choice == 2 and d.move == inst.candidates[2].move

    def test_tiny_penalty_x_mixer(self):
        inst = synthetic_instance(k=4, f=1, seed=3).with_penalties(0.1, 0.1)
        tr = optimize(inst, QaoaConfig(mixer="x", init="none", max_steps=60))
        assert tr.feasible_mass < 0.5
        d = tr.decoded
        if not d.feasible:
            assert (d.choice, d.followup) == greedy_choice(inst)
        assert d.energy == pytest.approx(inst.energy_of(d.choice, d.followup))


class TestConvergenceSteps:
    def test_linear(self):
        assert convergence_steps([-t for t in range(100)]) == 95

    def test_flat(self):
        assert convergence_steps([1.0] * 17) == 17

    def test_immediate(self):
        assert convergence_steps([5.0, 0.0, 0.0, 0.0]) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            convergence_steps([])


def test_six_qubit_oracle_agreement():
    inst = synthetic_instance(k=6, seed=21)
    brute = brute_force_min(inst.qubo, inst.layout)
    target = inst.layout.decode(brute.feasible_bits)
    hits = 0
    for seed in range(50):
        tr = optimize(inst, QaoaConfig(mixer="xy_blocks", init="basis", seed=seed, max_steps=200))
        hits += (tr.decoded.choice, tr.decoded.followup) == target
    assert hits >= 45
