import itertools
import random
import sys
from pathlib import Path

import pytest

from qkrd.chesscore import parse_fen
from qkrd.instancegen import Candidate, InstanceConfig, QkrdInstance, QuboWeights, build_qubo, classical_score

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
FIG1_FEN = "8/8/8/8/3k4/5P2/8/3Q4 w - - 0 1"


@pytest.fixture
def fig1():
    return parse_fen(FIG1_FEN, strict=False)


def synthetic_instance(k=3, f=0, seed=0, weights=None, max_cov=6):
    """Instance with random coverage numbers; moves are placeholder UCI strings."""
    rng = random.Random(seed)
    w = weights or QuboWeights()
    squares = [a + b for a, b in itertools.product("abcdefgh", "12345678")]

    def cand(i):
        c1, c2, risk = rng.randint(0, max_cov), rng.randint(0, max_cov), rng.randint(0, 2)
        return Candidate(squares[i % 64] + squares[(i * 7 + 3) % 64], c1, c2, risk, classical_score(c1, c2, risk, w))

    cands = sorted((cand(i) for i in range(k)), key=lambda c: (-c.score, c.move))
    fups = [[cand(100 + m * 10 + j) for j in range(f)] for m in range(k)] if f else []
    cfg = InstanceConfig(k=k, f=f, weights=w)
    qubo, layout = build_qubo(cands, fups, cfg)
    return QkrdInstance(f"synthetic-{k}-{f}-{seed}", {"fen": "synthetic"}, cfg, cands, fups, layout, qubo)


@pytest.fixture
def make_instance():
    return synthetic_instance


# acceptance summary lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
