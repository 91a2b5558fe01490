"""p-layer QAOA on QKRD instances: circuit assembly, objectives, optimizers, decoding."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import qsim
from .baselines import greedy_choice
from .instancegen import DOMAIN_WALL, QkrdInstance
from .qsim import DiagonalCost, MixerSpec, StateVector


class ConfigError(ValueError):
    pass


class OptimizationError(RuntimeError):
    def __init__(self, message: str, trace: "OptimizationTrace"):
        super().__init__(message)
        self.trace = trace


INIT_KINDS = ("none", "basis", "local_superposition", "feasible_uniform")


@dataclass(frozen=True)
class QaoaConfig:
    p: int = 2
    mixer: str = qsim.XY_BLOCKS
    init: str = "basis"                 # none | basis | local_superposition | feasible_uniform
    theta: float = 0.1                  # local_superposition rotation angle
    objective: str = "expectation"      # expectation | cvar
    cvar_alpha: float = 1.0
    shots: int = 1024
    optimizer: str = "adam"             # adam | simplex
    max_steps: int = 1000
    window: int = 25
    threshold: float = 1e-3
    lr: float = 0.05
    b1: float = 0.9
    b2: float = 0.999
    adam_eps: float = 1e-8
    fd_step: float = 1e-3
    simplex_step: float = 0.2
    init_gamma: float = 0.2             # initial angles drawn from U(0, init_*)
    init_beta: float = 0.2
    normalize_cost: bool = True         # gamma measured in units of 1 / max|QUBO coefficient|
    exact_mixer: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.mixer not in qsim.MIXER_KINDS:
            raise ConfigError(f"unknown mixer {self.mixer!r}")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"unknown init {self.init!r}")
        if self.objective not in ("expectation", "cvar"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if not 0 < self.cvar_alpha <= 1:
            raise ConfigError("cvar_alpha must lie in (0, 1]")
        if self.objective == "cvar" and self.shots < 1:
            raise ConfigError("cvar needs shots >= 1")
        if self.optimizer not in ("adam", "simplex"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.max_steps < 1 or self.window < 2:
            raise ConfigError("need max_steps >= 1 and window >= 2")

    @classmethod
    def from_dict(cls, data: dict) -> "QaoaConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown QAOA config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ParameterVector:
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.betas = np.asarray(self.betas, dtype=float)
        if self.gammas.shape != self.betas.shape or self.gammas.ndim != 1:
            raise ValueError("gammas and betas must be 1-D with equal length")
        if not (np.all(np.isfinite(self.gammas)) and np.all(np.isfinite(self.betas))):
            raise ValueError("non-finite QAOA angle")

    @property
    def p(self) -> int:
        return self.gammas.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_flat(cls, x) -> "ParameterVector":
        x = np.asarray(x, dtype=float)
        p = x.size // 2
        return cls(x[:p], x[p:])

    def to_list(self) -> list:
        return [self.gammas.tolist(), self.betas.tolist()]


def initial_parameters(cfg: QaoaConfig, rng: np.random.Generator) -> ParameterVector:
    return ParameterVector(rng.uniform(0.0, cfg.init_gamma, cfg.p), rng.uniform(0.0, cfg.init_beta, cfg.p))


# ---------------------------------------------------------------------------
# circuit
# ---------------------------------------------------------------------------

@dataclass
class Circuit:
    """Everything about one (instance, config) pair that does not depend on the angles."""

    instance: QkrdInstance
    cfg: QaoaConfig
    diag: DiagonalCost
    mixer: MixerSpec
    initial: StateVector
    cost_scale: float
    feasible: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, instance: QkrdInstance, cfg: QaoaConfig) -> "Circuit":
        layout = instance.layout
        dw = layout.encoding == DOMAIN_WALL
        if (cfg.mixer == qsim.DW) != dw:
            raise ConfigError(f"mixer {cfg.mixer} does not match {layout.encoding} encoding")
        mixer = qsim.mixer_for_layout(cfg.mixer, layout, cfg.exact_mixer)
        diag = qsim.build_diagonal(instance.qubo, layout)
        n = layout.n_qubits
        if cfg.init == "none":
            initial = qsim.uniform_state(n)
        elif cfg.init == "feasible_uniform":
            initial = qsim.subspace_uniform_state(n, layout.feasible_indices())
        else:
            bits = layout.encode(*greedy_choice(instance))
            block_mixer = qsim.mixer_for_layout(qsim.DW if dw else qsim.XY_BLOCKS, layout, cfg.exact_mixer)
            initial = qsim.init_state(n, cfg.init, bits, block_mixer, cfg.theta)
        scale = 1.0
        if cfg.normalize_cost:
            coefs = [abs(c) for c in instance.qubo.linear] + [abs(c) for c in instance.qubo.quadratic.values()]
            scale = max(coefs, default=0.0) or 1.0
        return cls(instance, cfg, diag, mixer, initial, scale, layout.feasible_indices())

    def state(self, params: ParameterVector) -> StateVector:
        st = self.initial.copy()
        for gamma, beta in zip(params.gammas, params.betas):
            qsim.apply_cost_phase(st, self.diag, gamma / self.cost_scale)
            qsim.apply_mixer(st, self.mixer, beta)
        return st

    def expectation(self, params: ParameterVector) -> float:
        return qsim.expectation(self.state(params), self.diag)

    def sample_energies(self, params: ParameterVector, rng: np.random.Generator) -> np.ndarray:
        idx = qsim.sample_indices(self.state(params), self.cfg.shots, rng)
        return self.diag.energies[idx]

    def objective(self, params: ParameterVector, rng: Optional[np.random.Generator] = None) -> float:
        if self.cfg.objective == "expectation":
            return self.expectation(params)
        if rng is None:
            rng = qsim.make_rng(self.cfg.seed)
        return cvar(self.sample_energies(params, rng), self.cfg.cvar_alpha)

    def feasible_mass(self, state: StateVector) -> float:
        return float(state.probabilities[self.feasible].sum())


def run_circuit(instance: QkrdInstance, params: ParameterVector, cfg: QaoaConfig) -> StateVector:
    return Circuit.build(instance, cfg).state(params)


def cvar(energies, alpha: float) -> float:
    """Mean of the lowest ceil(alpha * shots) sampled energies."""
    e = np.sort(np.asarray(energies, dtype=float))
    k = max(1, math.ceil(alpha * e.size - 1e-12))
    return float(e[:k].mean())


def objective_value(instance: QkrdInstance, params: ParameterVector, cfg: QaoaConfig,
                    rng: Optional[np.random.Generator] = None) -> float:
    return Circuit.build(instance, cfg).objective(params, rng)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class OptimizationTrace:
    energies: list = field(default_factory=list)
    params: list = field(default_factory=list)
    steps_run: int = 0
    converged_early: bool = False
    final_params: Optional[ParameterVector] = None
    final_objective: float = math.nan
    final_energy: float = math.nan      # exact <H> of the final state
    feasible_mass: float = math.nan
    decoded: Optional["Decoded"] = None
    evaluations: int = 0

    def record(self, energy: float, params: ParameterVector) -> None:
        self.energies.append(float(energy))
        self.params.append(params.to_list())
        self.steps_run = len(self.energies)

    def summary(self) -> dict:
        return {
            "steps_run": self.steps_run,
            "converged_early": self.converged_early,
            "evaluations": self.evaluations,
            "final_objective": self.final_objective,
            "final_energy": self.final_energy,
            "feasible_mass": self.feasible_mass,
            "convergence_steps": convergence_steps(self),
            "final_params": self.final_params.to_list() if self.final_params is not None else None,
            "decoded": self.decoded.to_dict() if self.decoded is not None else None,
        }


def _plateau(energies: list, window: int, threshold: float) -> bool:
    return len(energies) >= window and float(np.std(energies[-window:])) < threshold


def _check(value: float, trace: OptimizationTrace) -> float:
    if not math.isfinite(value):
        raise OptimizationError(f"non-finite objective after {trace.steps_run} steps", trace)
    return value


def fd_gradient(fun, x: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _adam(circuit: Circuit, x: np.ndarray, trace: OptimizationTrace) -> np.ndarray:
    cfg = circuit.cfg
    m = np.zeros_like(x)
    v = np.zeros_like(x)

    def fun(y):
        trace.evaluations += 1
        return circuit.expectation(ParameterVector.from_flat(y))

    for t in range(1, cfg.max_steps + 1):
        trace.record(_check(fun(x), trace), ParameterVector.from_flat(x))
        if _plateau(trace.energies, cfg.window, cfg.threshold):
            trace.converged_early = True
            break
        if t == cfg.max_steps:
            break
        g = fd_gradient(fun, x, cfg.fd_step)
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite gradient at step {t}", trace)
        m = cfg.b1 * m + (1 - cfg.b1) * g
        v = cfg.b2 * v + (1 - cfg.b2) * g * g
        m_hat = m / (1 - cfg.b1 ** t)
        v_hat = v / (1 - cfg.b2 ** t)
        x = x - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return x


def _simplex(circuit: Circuit, x0: np.ndarray, trace: OptimizationTrace, rng) -> np.ndarray:
    """Nelder-Mead with a budget of ``max_steps`` objective calls.

    Every call is one step; the trace holds the best value seen so far.
    """
    cfg = circuit.cfg
    best = [math.inf, x0]

    class Budget(Exception):
        pass

    def fun(y):
        if trace.steps_run >= cfg.max_steps:
            raise Budget
        val = _check(circuit.objective(ParameterVector.from_flat(y), rng), trace)
        trace.evaluations += 1
        if val < best[0]:
            best[0], best[1] = val, y.copy()
        trace.record(best[0], ParameterVector.from_flat(best[1]))
        if _plateau(trace.energies, cfg.window, cfg.threshold):
            trace.converged_early = True
            raise Budget
        return val

    dim = x0.size
    try:
        pts = [x0.copy()]
        for i in range(dim):
            y = x0.copy()
            y[i] += cfg.simplex_step
            pts.append(y)
        vals = [fun(y) for y in pts]
        while True:
            order = np.argsort(vals, kind="stable")
            pts = [pts[i] for i in order]
            vals = [vals[i] for i in order]
            centroid = np.mean(pts[:-1], axis=0)
            xr = centroid + (centroid - pts[-1])
            fr = fun(xr)
            if fr < vals[0]:
                xe = centroid + 2.0 * (centroid - pts[-1])
                fe = fun(xe)
                pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < vals[-2]:
                pts[-1], vals[-1] = xr, fr
            else:
                outside = fr < vals[-1]
                xc = centroid + 0.5 * ((xr if outside else pts[-1]) - centroid)
                fc = fun(xc)
                if fc < (fr if outside else vals[-1]):
                    pts[-1], vals[-1] = xc, fc
                else:
                    for i in range(1, dim + 1):
                        pts[i] = pts[0] + 0.5 * (pts[i] - pts[0])
                        vals[i] = fun(pts[i])
    except Budget:
        pass
    return best[1]


def optimize(instance: QkrdInstance, cfg: QaoaConfig, init_params: Optional[ParameterVector] = None,
             shot_seed=None) -> OptimizationTrace:
    """Optimise the angles and summarise the final state.

    ``init_params`` defaults to a draw from ``cfg.seed``; ``shot_seed``
    (default ``cfg.seed``) drives every measurement sample.
    """
    circuit = Circuit.build(instance, cfg)
    if init_params is None:
        init_params = initial_parameters(cfg, qsim.make_rng(np.random.SeedSequence([cfg.seed, 0])))
    shot_rng = qsim.make_rng(shot_seed if shot_seed is not None else np.random.SeedSequence([cfg.seed, 1]))
    trace = OptimizationTrace()
    x0 = init_params.flat()
    if cfg.optimizer == "adam":
        if cfg.objective != "expectation":
            raise ConfigError("adam runs on the exact expectation; use the simplex optimizer for cvar")
        x = _adam(circuit, x0, trace)
    else:
        x = _simplex(circuit, x0, trace, shot_rng)
    final = ParameterVector.from_flat(x)
    state = circuit.state(final)
    trace.final_params = final
    trace.final_objective = trace.energies[-1]
    trace.final_energy = qsim.expectation(state, circuit.diag)
    trace.feasible_mass = circuit.feasible_mass(state)
    trace.decoded = decode_solution(state, instance)
    return trace


# ---------------------------------------------------------------------------
# decoding and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decoded:
    choice: int
    followup: Optional[int]
    move: str
    followup_move: Optional[str]
    energy: float
    coverage: int
    feasible: bool      # False: nothing feasible had support, greedy fallback used
    probability: float

    def to_dict(self) -> dict:
        return asdict(self)


def decode_solution(source, instance: QkrdInstance, min_support: float = 1e-14) -> Decoded:
    """Most probable feasible assignment (ties to the lower basis index).

    ``source`` is a StateVector or a bitstring -> count map.
    """
    layout = instance.layout
    feas = np.sort(layout.feasible_indices())
    if isinstance(source, StateVector):
        weights = source.probabilities[feas]
    else:
        total = sum(source.values()) or 1
        counts = {int(sum(int(b) << i for i, b in enumerate(k))): v for k, v in source.items()}
        weights = np.array([counts.get(int(i), 0) / total for i in feas])
    j = int(np.argmax(weights))
    if weights[j] > min_support:
        bits = [(int(feas[j]) >> i) & 1 for i in range(layout.n_qubits)]
        m, f = layout.decode(bits)
        ok, prob = True, float(weights[j])
    else:
        m, f = greedy_choice(instance)
        ok, prob = False, 0.0
    fmove = instance.followups[m][f].move if f is not None else None
    return Decoded(m, f, instance.candidates[m].move, fmove, instance.energy_of(m, f),
                   instance.selection_coverage(m, f), ok, prob)


def convergence_steps(trace) -> int:
    """First step reaching 95% of the total descent; steps_run for a flat trace."""
    e = trace.energies if hasattr(trace, "energies") else list(trace)
    n = len(e)
    if n == 0:
        raise ValueError("empty trace")
    drop = e[0] - e[-1]
    if drop == 0:
        return n
    for t, et in enumerate(e):
        if e[0] - et >= 0.95 * drop:
            return t
    return n
