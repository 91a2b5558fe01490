"""Dense statevector simulation of QAOA layers.

Qubit ``i`` is bit ``i`` of the basis-state index.  Bitstrings written as
text list qubit 0 first, so ``"10"`` is index 1.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .instancegen import DOMAIN_WALL, QuboModel, VariableLayout

log = logging.getLogger(__name__)

MAX_QUBITS = 24

X = "x"
XY_PRIMARY = "xy_primary"
XY_BLOCKS = "xy_blocks"
DW = "domain_wall"
MIXER_KINDS = (X, XY_PRIMARY, XY_BLOCKS, DW)


class SimulationResourceError(RuntimeError):
    pass


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class DiagonalCost:
    energies: np.ndarray

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        levels, inverse = np.unique(self.energies, return_inverse=True)
        # phases are computed per distinct level when that saves work
        if levels.size * 4 <= self.energies.size:
            self._levels, self._inverse = levels, inverse.astype(np.intp)
        else:
            self._levels = self._inverse = None

    @property
    def n_qubits(self) -> int:
        return int(self.energies.size).bit_length() - 1

    def phases(self, gamma: float) -> np.ndarray:
        if self._levels is None:
            return np.exp(-1j * gamma * self.energies)
        return np.exp(-1j * gamma * self._levels)[self._inverse]


@dataclass(frozen=True)
class MixerSpec:
    kind: str
    blocks: tuple = field(default_factory=tuple)
    exact: bool = False  # exact block exponential instead of edge-coloured Trotter order

    def __post_init__(self):
        if self.kind not in MIXER_KINDS:
            raise ValueError(f"unknown mixer {self.kind!r}; choose from {MIXER_KINDS}")
        seen = set()
        for b in self.blocks:
            if seen & set(b):
                raise ValueError("mixer blocks overlap")
            seen |= set(b)


def mixer_for_layout(kind: str, layout: VariableLayout, exact: bool = False) -> MixerSpec:
    if kind == DW and layout.encoding != DOMAIN_WALL:
        raise ValueError("domain-wall mixer needs a domain-wall encoded instance")
    if kind != DW and layout.encoding == DOMAIN_WALL:
        raise ValueError(f"{kind} mixer needs a one-hot encoded instance")
    if kind == X:
        blocks = ()
    elif kind == XY_PRIMARY:
        blocks = (tuple(layout.primary),)
    else:
        blocks = (tuple(layout.primary),) + tuple(tuple(b) for b in layout.followups)
    return MixerSpec(kind, blocks, exact)


def check_size(n: int, cap: int = MAX_QUBITS) -> None:
    if n > cap:
        raise SimulationResourceError(f"{n} qubits exceeds the dense simulation cap of {cap}")


def bit_table(n: int) -> np.ndarray:
    """Row b holds the bits of basis index b, qubit 0 first."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def build_diagonal(qubo: QuboModel, layout: VariableLayout | None = None, cap: int = MAX_QUBITS) -> DiagonalCost:
    n = qubo.n
    check_size(n, cap)
    bits = bit_table(n).astype(float)
    energies = np.full(1 << n, float(qubo.constant))
    energies += bits @ np.asarray(qubo.linear, dtype=float)
    for (i, j), c in qubo.quadratic.items():
        energies += c * (bits[:, i] * bits[:, j])
    return DiagonalCost(energies)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def uniform_state(n: int) -> StateVector:
    check_size(n)
    return StateVector(np.full(1 << n, 2 ** (-n / 2), dtype=complex), n)


def basis_state(n: int, bits) -> StateVector:
    check_size(n)
    if len(bits) != n:
        raise ValueError(f"bitstring has {len(bits)} entries for {n} qubits")
    amp = np.zeros(1 << n, dtype=complex)
    amp[sum(1 << i for i, b in enumerate(bits) if int(b))] = 1.0
    return StateVector(amp, n)


def subspace_uniform_state(n: int, indices) -> StateVector:
    """Equal superposition over the given basis indices (e.g. every feasible assignment)."""
    check_size(n)
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("empty subspace")
    amp = np.zeros(1 << n, dtype=complex)
    amp[idx] = 1.0 / np.sqrt(idx.size)
    return StateVector(amp, n)


def init_state(n: int, kind: str = "uniform", bits=None, mixer: MixerSpec | None = None,
               theta: float = 0.1, indices=None) -> StateVector:
    """``uniform``, ``basis``, ``local_superposition`` or ``feasible_uniform`` initial state.

    ``local_superposition`` is the basis state followed by one application
    of ``mixer`` (normally the XY ring of each block) at angle ``theta``.
    ``feasible_uniform`` spreads evenly over ``indices``.
    """
    if kind == "uniform":
        return uniform_state(n)
    if kind == "feasible_uniform":
        return subspace_uniform_state(n, indices)
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    state = basis_state(n, bits)
    if kind == "basis":
        return state
    if kind == "local_superposition":
        if mixer is None:
            raise ValueError("local_superposition needs a block mixer")
        apply_mixer(state, mixer, theta)
        return state
    raise ValueError(f"unknown initial state {kind!r}")


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

@njit(cache=True)
def _x_rotation(psi, q, c, s):
    m = 1 << q
    low = m - 1
    for r in range(psi.size >> 1):
        k = ((r & ~low) << 1) | (r & low)
        l = k | m
        a = psi[k]
        b = psi[l]
        psi[k] = c * a + s * b
        psi[l] = c * b + s * a


@njit(cache=True)
def _xy_rotation(psi, i, j, c, s):
    # enumerate indices with bits i and j cleared, then rotate |..1_i..0_j..> <-> |..0_i..1_j..>
    lo = min(i, j)
    hi = max(i, j)
    mlo = (1 << lo) - 1
    mhi = (1 << hi) - 1
    mi = 1 << i
    mj = 1 << j
    for r in range(psi.size >> 2):
        base = ((r & ~mlo) << 1) | (r & mlo)
        base = ((base & ~mhi) << 1) | (base & mhi)
        k = base | mi
        l = base | mj
        a = psi[k]
        b = psi[l]
        psi[k] = c * a + s * b
        psi[l] = c * b + s * a


def apply_cost_phase(state: StateVector, diag: DiagonalCost, gamma: float) -> None:
    state.amplitudes *= diag.phases(gamma)


def apply_x_mixer(state: StateVector, beta: float) -> None:
    """exp(-i beta X) on every qubit."""
    c, s = complex(np.cos(beta)), complex(0.0, -np.sin(beta))
    for q in range(state.n_qubits):
        _x_rotation(state.amplitudes, q, c, s)


def ring_edges(block) -> list:
    """Edges of the ring over ``block`` grouped into colour classes.

    Consecutive members are joined and the ring closed; a two-member block
    has a single edge.  Classes are applied in order, even edges first.
    """
    k = len(block)
    if k < 2:
        return []
    if k == 2:
        return [[(block[0], block[1])]]
    even = [(block[i], block[i + 1]) for i in range(0, k - 1, 2)]
    odd = [(block[i], block[i + 1]) for i in range(1, k - 1, 2)]
    closing = (block[k - 1], block[0])
    if k % 2 == 0:
        return [even, odd + [closing]]
    return [even, odd, [closing]]


def _xy_edge(state: StateVector, i: int, j: int, beta: float) -> None:
    """exp(-i beta (X_i X_j + Y_i Y_j)): rotates |01> <-> |10> by angle 2 beta."""
    _xy_rotation(state.amplitudes, i, j, complex(np.cos(2 * beta)), complex(0.0, -np.sin(2 * beta)))


def _block_matrix_apply(state: StateVector, qubits, unitary: np.ndarray) -> None:
    n = state.n_qubits
    k = len(qubits)
    s = state.amplitudes.reshape((2,) * n)
    axes = [n - 1 - q for q in reversed(qubits)]
    view = np.moveaxis(s, axes, range(n - k, n))
    flat = view.reshape(-1, 1 << k)
    view[...] = (flat @ unitary.T).reshape(view.shape)


@lru_cache(maxsize=64)
def _xy_ring_eig(k: int):
    h = np.zeros((1 << k, 1 << k))
    edges = [e for cls in ring_edges(list(range(k))) for e in cls]
    for idx in range(1 << k):
        for i, j in edges:
            if ((idx >> i) & 1) != ((idx >> j) & 1):
                h[idx ^ (1 << i) ^ (1 << j), idx] += 2.0
    return np.linalg.eigh(h)


def xy_ring_hamiltonian(k: int) -> np.ndarray:
    w, v = _xy_ring_eig(k)
    return (v * w) @ v.T


def apply_xy_ring_mixer(state: StateVector, blocks, beta: float, exact: bool = False) -> None:
    for block in blocks:
        block = list(block)
        if len(block) < 2:
            log.warning("XY mixer block %s has one member; skipped", block)
            continue
        if exact:
            if len(block) > 12:
                raise SimulationResourceError("exact XY block exponential limited to 12 qubits")
            w, v = _xy_ring_eig(len(block))
            u = (v * np.exp(-1j * beta * w)) @ v.conj().T
            _block_matrix_apply(state, block, u)
            continue
        for colour in ring_edges(block):
            for i, j in colour:
                _xy_edge(state, i, j, beta)


@lru_cache(maxsize=64)
def _path_eig(k: int):
    t = np.zeros((k, k))
    for i in range(k - 1):
        t[i, i + 1] = t[i + 1, i] = 1.0
    return np.linalg.eigh(t)


def domain_wall_hopping(k: int) -> np.ndarray:
    w, v = _path_eig(k)
    return (v * w) @ v.T


def apply_domain_wall_mixer(state: StateVector, walls, beta: float) -> None:
    """Hop between adjacent valid wall states of ``walls`` (K-1 qubits).

    Acts as exp(-i beta T) on the K valid states, T the path-graph
    adjacency, and as the identity on every invalid wall pattern.
    """
    walls = list(walls)
    k = len(walls) + 1
    w, v = _path_eig(k)
    u = (v * np.exp(-1j * beta * w)) @ v.conj().T
    n = state.n_qubits
    m = len(walls)
    s = state.amplitudes.reshape((2,) * n)
    axes = [n - 1 - q for q in reversed(walls)]
    view = np.moveaxis(s, axes, range(n - m, n))
    flat = view.reshape(-1, 1 << m)
    valid = [(1 << c) - 1 for c in range(k)]
    flat[:, valid] = flat[:, valid] @ u.T
    view[...] = flat.reshape(view.shape)


def apply_mixer(state: StateVector, spec: MixerSpec, beta: float) -> None:
    if spec.kind == X:
        apply_x_mixer(state, beta)
    elif spec.kind in (XY_PRIMARY, XY_BLOCKS):
        apply_xy_ring_mixer(state, spec.blocks, beta, spec.exact)
    else:
        apply_domain_wall_mixer(state, spec.blocks[0], beta)
        apply_xy_ring_mixer(state, spec.blocks[1:], beta, spec.exact)


# ---------------------------------------------------------------------------
# readout
# ---------------------------------------------------------------------------

def expectation(state: StateVector, diag: DiagonalCost) -> float:
    return float(np.dot(state.probabilities, diag.energies))


def make_rng(seed) -> np.random.Generator:
    """Philox generator; ``seed`` is an int or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


def sample_indices(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    cdf = np.cumsum(state.probabilities)
    u = rng.random(shots) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def index_to_bitstring(index: int, n: int) -> str:
    return "".join(str((index >> i) & 1) for i in range(n))


def sample(state: StateVector, shots: int, seed=0) -> dict:
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    counts = Counter(sample_indices(state, shots, rng).tolist())
    return {index_to_bitstring(i, state.n_qubits): c for i, c in sorted(counts.items())}


def feasible_mass(state: StateVector, layout: VariableLayout) -> float:
    return float(state.probabilities[layout.feasible_indices()].sum())
