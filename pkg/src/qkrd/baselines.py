"""Classical reference points: greedy, uniform random, exhaustive QUBO minimum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .instancegen import QkrdInstance, QuboModel, VariableLayout, index_to_bits

BRUTE_FORCE_CAP = 26


@dataclass(frozen=True)
class BaselineResult:
    method: str
    choice: int
    followup: Optional[int]
    move: str
    followup_move: Optional[str]
    energy: float
    coverage: int

    def to_dict(self) -> dict:
        return {"method": self.method, "choice": self.choice, "followup": self.followup, "move": self.move,
                "followup_move": self.followup_move, "energy": self.energy, "coverage": self.coverage}


def _result(method: str, inst: QkrdInstance, m: int, f: Optional[int]) -> BaselineResult:
    fmove = inst.followups[m][f].move if f is not None else None
    return BaselineResult(method, m, f, inst.candidates[m].move, fmove, inst.energy_of(m, f),
                          inst.selection_coverage(m, f))


def _best(cands) -> int:
    # candidates are stored best-first, but re-rank defensively: score desc, UCI asc
    return min(range(len(cands)), key=lambda i: (-cands[i].score, cands[i].move))


def greedy_choice(inst: QkrdInstance) -> tuple:
    m = _best(inst.candidates)
    f = _best(inst.followups[m]) if inst.followups else None
    return m, f


def greedy_select(inst: QkrdInstance) -> BaselineResult:
    return _result("greedy", inst, *greedy_choice(inst))


def random_select(inst: QkrdInstance, seed=0) -> BaselineResult:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    m = int(rng.integers(len(inst.candidates)))
    f = int(rng.integers(len(inst.followups[m]))) if inst.followups else None
    return _result("random", inst, m, f)


@dataclass(frozen=True)
class BruteForceResult:
    bits: tuple
    energy: float
    feasible_bits: tuple
    feasible_energy: float


def brute_force_min(qubo: QuboModel, layout: VariableLayout, cap: int = BRUTE_FORCE_CAP) -> BruteForceResult:
    """Global and feasible-restricted minimum over all 2^n assignments.

    Energies are updated incrementally along the reflected Gray code, so each
    step costs O(n) instead of O(n^2).  Ties go to the lower basis index.
    """
    from .qsim import SimulationResourceError

    n = qubo.n
    if n > cap:
        raise SimulationResourceError(f"brute force over {n} variables exceeds cap {cap}")
    lin = np.asarray(qubo.linear, dtype=float)
    coup = np.zeros((n, n))
    for (i, j), c in qubo.quadratic.items():
        coup[i, j] += c
        coup[j, i] += c

    # field[i] = lin[i] + sum_j coup[i, j] * x_j
    x = np.zeros(n, dtype=np.int8)
    field = lin.copy()
    e = float(qubo.constant)
    best_e, best_idx = e, 0
    idx = 0
    for step in range(1, 1 << n):
        bit = (step & -step).bit_length() - 1
        if x[bit]:
            e -= field[bit]
            x[bit] = 0
            field -= coup[:, bit]
            idx &= ~(1 << bit)
        else:
            e += field[bit]
            x[bit] = 1
            field += coup[:, bit]
            idx |= 1 << bit
        if e < best_e - 1e-9 or (abs(e - best_e) <= 1e-9 and idx < best_idx):
            best_e, best_idx = e, idx
    best_bits = tuple(index_to_bits(best_idx, n))
    # exact recomputation removes accumulated rounding
    best_e = qubo.energy(best_bits)

    feas = sorted(layout.feasible_indices().tolist())
    f_energies = [qubo.energy(index_to_bits(i, n)) for i in feas]
    k = int(np.argmin(f_energies))
    return BruteForceResult(best_bits, best_e, tuple(index_to_bits(feas[k], n)), f_energies[k])


def brute_force_choice(inst: QkrdInstance) -> tuple:
    res = brute_force_min(inst.qubo, inst.layout)
    return inst.layout.decode(res.feasible_bits)


def brute_force_select(inst: QkrdInstance) -> BaselineResult:
    return _result("brute", inst, *brute_force_choice(inst))
