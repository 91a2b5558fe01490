"""Position -> QKRD QUBO instance.

Pipeline: region of interest around the enemy king, top-K coverage
increasing candidates, optional gated follow-ups (lifted temporal variant),
QUBO assembly, and an optional domain-wall re-encoding of the primary block.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .chesscore import Move, Position, _make, chebyshev, legal_moves, parse_fen, square
from .kingring import (
    ScoredMove,
    coverage_increasing_moves,
    king_rings,
    piece_ring_attacks,
    score_move,
)

FORMAT_NAME = "qkrd-instance"
FORMAT_VERSION = 1
ONE_HOT = "one-hot"
DOMAIN_WALL = "domain-wall"


class InstanceRejected(Exception):
    """The position cannot yield an instance under the given config."""


class InstanceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class QuboWeights:
    alpha1: float = 3.0
    alpha2: float = 1.0
    beta_risk: float = 1.0
    lambda_onehot: float = 10.0
    lambda_gate: float = 10.0

    def __post_init__(self):
        if not (self.alpha1 >= self.alpha2 > 0):
            raise ValueError("weights need alpha1 >= alpha2 > 0")
        if self.lambda_onehot <= 0 or self.lambda_gate <= 0 or self.beta_risk < 0:
            raise ValueError("penalties must be positive and beta_risk non-negative")


@dataclass(frozen=True)
class InstanceConfig:
    roi_size: int = 5
    k: int = 8
    f: int = 0
    weights: QuboWeights = field(default_factory=QuboWeights)

    def __post_init__(self):
        if self.roi_size < 3 or self.roi_size % 2 == 0:
            raise ValueError("roi_size must be an odd integer >= 3")
        if self.k < 1 or self.f < 0:
            raise ValueError("need k >= 1 and f >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceConfig":
        data = dict(data)
        weights = QuboWeights(**data.pop("weights", {}))
        return cls(weights=weights, **data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Candidate:
    move: str  # UCI
    c1: int
    c2: int
    risk: int
    score: float

    @property
    def coverage(self) -> int:
        return self.c1 + self.c2


def classical_score(c1: int, c2: int, risk: int, w: QuboWeights) -> float:
    return w.alpha1 * c1 + w.alpha2 * c2 - w.beta_risk * risk


def _candidate(s: ScoredMove, w: QuboWeights) -> Candidate:
    c = s.coverage
    return Candidate(s.move.uci(), c.c1, c.c2, s.risk, classical_score(c.c1, c.c2, s.risk, w))


def _rank(cands: list[Candidate]) -> list[Candidate]:
    return sorted(cands, key=lambda c: (-c.score, c.move))


# ---------------------------------------------------------------------------
# QUBO containers
# ---------------------------------------------------------------------------

@dataclass
class QuboModel:
    """Quadratic pseudo-boolean function ``constant + sum l_i b_i + sum q_ij b_i b_j``."""

    n: int
    linear: list = field(default_factory=list)
    quadratic: dict = field(default_factory=dict)  # (i, j) with i < j
    constant: float = 0.0

    def __post_init__(self):
        if not self.linear:
            self.linear = [0.0] * self.n

    def add_linear(self, i: int, c: float) -> None:
        self.linear[i] += c

    def add_quadratic(self, i: int, j: int, c: float) -> None:
        if i == j:
            self.linear[i] += c
            return
        key = (i, j) if i < j else (j, i)
        self.quadratic[key] = self.quadratic.get(key, 0.0) + c

    def energy(self, bits) -> float:
        e = self.constant + sum(c for c, b in zip(self.linear, bits) if b)
        return e + sum(c for (i, j), c in self.quadratic.items() if bits[i] and bits[j])

    def triples(self) -> list:
        out = [[i, i, c] for i, c in enumerate(self.linear) if c != 0.0]
        out += [[i, j, c] for (i, j), c in sorted(self.quadratic.items()) if c != 0.0]
        return out

    def matrix(self) -> np.ndarray:
        """Upper-triangular matrix with linear terms on the diagonal."""
        q = np.diag(np.asarray(self.linear, dtype=float))
        for (i, j), c in self.quadratic.items():
            q[i, j] += c
        return q


@dataclass(frozen=True)
class VariableLayout:
    encoding: str
    n_choices: int             # K
    primary: tuple             # K indices (one-hot) or K-1 wall indices (domain-wall)
    followups: tuple = ()      # per primary choice, a tuple of F indices
    n_qubits: int = 0

    @property
    def f(self) -> int:
        return len(self.followups[0]) if self.followups else 0

    @property
    def blocks(self) -> list:
        """Primary block followed by every follow-up block."""
        return [list(self.primary)] + [list(b) for b in self.followups]

    def encode(self, choice: int, followup: Optional[int] = None) -> list:
        bits = [0] * self.n_qubits
        if self.encoding == ONE_HOT:
            bits[self.primary[choice]] = 1
        else:
            for w in self.primary[:choice]:
                bits[w] = 1
        if self.followups:
            bits[self.followups[choice][followup or 0]] = 1
        return bits

    def encode_index(self, choice: int, followup: Optional[int] = None) -> int:
        return bits_to_index(self.encode(choice, followup))

    def decode(self, bits) -> Optional[tuple]:
        """``(choice, followup)`` for a feasible assignment, else ``None``."""
        if self.encoding == ONE_HOT:
            on = [i for i, q in enumerate(self.primary) if bits[q]]
            if len(on) != 1:
                return None
            choice = on[0]
        else:
            wall = [bits[q] for q in self.primary]
            choice = sum(wall)
            if wall != [1] * choice + [0] * (len(wall) - choice):
                return None
        if not self.followups:
            return choice, None
        for m, block in enumerate(self.followups):
            weight = sum(bits[q] for q in block)
            if weight != (1 if m == choice else 0):
                return None
        picked = [f for f, q in enumerate(self.followups[choice]) if bits[q]]
        return choice, picked[0]

    def feasible_assignments(self) -> list:
        fs = range(self.f) if self.followups else [None]
        return [(m, f) for m in range(self.n_choices) for f in fs]

    def feasible_indices(self) -> np.ndarray:
        return np.array([self.encode_index(m, f) for m, f in self.feasible_assignments()], dtype=np.int64)

    def to_dict(self) -> dict:
        return {"encoding": self.encoding, "n_choices": self.n_choices, "primary": list(self.primary),
                "followups": [list(b) for b in self.followups], "n_qubits": self.n_qubits}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableLayout":
        return cls(d["encoding"], d["n_choices"], tuple(d["primary"]),
                   tuple(tuple(b) for b in d["followups"]), d["n_qubits"])


def bits_to_index(bits) -> int:
    """Variable i maps to bit i of the basis-state index."""
    return sum(1 << i for i, b in enumerate(bits) if b)


def index_to_bits(index: int, n: int) -> list:
    return [(index >> i) & 1 for i in range(n)]


@dataclass
class QkrdInstance:
    id: str
    source: dict
    config: InstanceConfig
    candidates: list
    followups: list  # K lists of F Candidates (marginal coverage)
    layout: VariableLayout
    qubo: QuboModel
    metadata: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    def selection_score(self, choice: int, followup: Optional[int] = None) -> float:
        s = self.candidates[choice].score
        if followup is not None:
            s += self.followups[choice][followup].score
        return s

    def selection_coverage(self, choice: int, followup: Optional[int] = None) -> int:
        c = self.candidates[choice].coverage
        if followup is not None:
            c += self.followups[choice][followup].coverage
        return c

    def energy_of(self, choice: int, followup: Optional[int] = None) -> float:
        return self.qubo.energy(self.layout.encode(choice, followup))

    def with_penalties(self, lambda_onehot: Optional[float] = None,
                       lambda_gate: Optional[float] = None) -> "QkrdInstance":
        """Same candidates, QUBO rebuilt with other penalty strengths (one-hot layouts only)."""
        if self.layout.encoding != ONE_HOT:
            raise ValueError("re-weight before re-encoding")
        w = self.config.weights
        w = replace(w, lambda_onehot=w.lambda_onehot if lambda_onehot is None else lambda_onehot,
                    lambda_gate=w.lambda_gate if lambda_gate is None else lambda_gate)
        if w == self.config.weights:
            return self
        cfg = replace(self.config, weights=w)
        qubo, layout = build_qubo(self.candidates, self.followups, cfg)
        return replace(self, config=cfg, qubo=qubo, layout=layout)

    def with_encoding(self, encoding: str) -> "QkrdInstance":
        if encoding == self.layout.encoding:
            return self
        if encoding != DOMAIN_WALL:
            raise ValueError(f"cannot re-encode {self.layout.encoding} as {encoding}")
        qubo, layout = encode_domain_wall(self.qubo, self.layout, self.config.weights.lambda_onehot)
        return replace(self, qubo=qubo, layout=layout)


# ---------------------------------------------------------------------------
# generation steps
# ---------------------------------------------------------------------------

def extract_roi(p: Position, roi_size: int, defender: Optional[str] = None) -> set:
    defender = defender or ("b" if p.turn == "w" else "w")
    ksq = p.king_square(defender)
    if ksq is None:
        raise InstanceRejected("defending king missing")
    half = roi_size // 2
    return {sq for sq in range(64) if chebyshev(sq, ksq) <= half}


def _roi_moves(p: Position, roi: set) -> list:
    return [m for m in legal_moves(p) if m.to_sq in roi]


def eligible_moves(p: Position, cfg: InstanceConfig) -> list:
    roi = extract_roi(p, cfg.roi_size)
    return coverage_increasing_moves(p, _roi_moves(p, roi))


def select_candidates(p: Position, cfg: InstanceConfig) -> list:
    ranked = _rank([_candidate(s, cfg.weights) for s in eligible_moves(p, cfg)])
    if len(ranked) < cfg.k:
        raise InstanceRejected(f"only {len(ranked)} eligible moves for K={cfg.k}")
    return ranked[:cfg.k]


def generate_followups(p: Position, primary: Move, cfg: InstanceConfig) -> list:
    """Top-F follow-ups after ``primary`` with the opponent passing.

    Coverage is marginal: ring squares the primary already attacks are not
    counted again.  Moves that add no new ring square pad the list only when
    fewer than F strict follow-ups exist.
    """
    if cfg.f == 0:
        return []
    if isinstance(primary, str):
        primary = Move.from_uci(primary)
    rings = king_rings(p, p.turn)
    after = _make(p, primary)
    covered = frozenset(piece_ring_attacks(after.board, primary.to_sq, rings))
    replay = after.null_move()
    roi = extract_roi(p, cfg.roi_size)
    strict, loose = [], []
    for m in _roi_moves(replay, roi):
        scored, pre, post = score_move(replay, m, rings, covered)
        (strict if post - pre - covered else loose).append(_candidate(scored, cfg.weights))
    picked = _rank(strict)[:cfg.f]
    if len(picked) < cfg.f:
        picked += _rank(loose)[:cfg.f - len(picked)]
    if len(picked) < cfg.f:
        raise InstanceRejected(f"only {len(picked)} follow-ups for {primary.uci()} with F={cfg.f}")
    return picked


def _one_hot_layout(k: int, f: int) -> VariableLayout:
    primary = tuple(range(k))
    followups = tuple(tuple(k + m * f + j for j in range(f)) for m in range(k)) if f else ()
    return VariableLayout(ONE_HOT, k, primary, followups, k * (1 + f))


def add_onehot_penalty(qubo: QuboModel, block, lam: float, sign: float = 1.0) -> None:
    """lam * (sum_block x - 1)^2 expanded with x^2 = x."""
    for i in block:
        qubo.add_linear(i, -sign * lam)
    for i, j in itertools.combinations(block, 2):
        qubo.add_quadratic(i, j, sign * 2 * lam)
    qubo.constant += sign * lam


def build_qubo(candidates: list, followups: list, cfg: InstanceConfig) -> tuple:
    k, f = len(candidates), cfg.f
    if k != cfg.k:
        raise ValueError(f"expected {cfg.k} candidates, got {k}")
    if f and (len(followups) != k or any(len(b) != f for b in followups)):
        raise ValueError("each primary needs exactly F follow-ups")
    w = cfg.weights
    layout = _one_hot_layout(k, f)
    qubo = QuboModel(layout.n_qubits)
    for m, cand in enumerate(candidates):
        qubo.add_linear(layout.primary[m], -cand.score)
        for j, fu in enumerate(followups[m] if f else ()):
            qubo.add_linear(layout.followups[m][j], -fu.score)
    add_onehot_penalty(qubo, layout.primary, w.lambda_onehot)
    if f:
        for m in range(k):
            x = layout.primary[m]
            ys = layout.followups[m]
            # lambda_gate * (sum_f y - x)^2
            for y in ys:
                qubo.add_linear(y, w.lambda_gate)
                qubo.add_quadratic(y, x, -2 * w.lambda_gate)
            for a, b in itertools.combinations(ys, 2):
                qubo.add_quadratic(a, b, 2 * w.lambda_gate)
            qubo.add_linear(x, w.lambda_gate)
    return qubo, layout


def encode_domain_wall(qubo: QuboModel, layout: VariableLayout, lambda_onehot: float) -> tuple:
    """Re-express the primary one-hot block over K-1 domain-wall variables.

    With walls w_1..w_{K-1} (w_0 = 1, w_K = 0) the indicator of choice i is
    x_i = w_i - w_{i+1}.  The one-hot penalty of the primary block is dropped
    since every valid wall state selects exactly one choice.
    """
    if layout.encoding != ONE_HOT:
        raise ValueError("domain-wall encoding needs a one-hot layout")
    k = layout.n_choices
    stripped = QuboModel(qubo.n, list(qubo.linear), dict(qubo.quadratic), qubo.constant)
    add_onehot_penalty(stripped, layout.primary, lambda_onehot, sign=-1.0)

    primary_set = {q: i for i, q in enumerate(layout.primary)}
    others = [q for q in range(qubo.n) if q not in primary_set]
    new_index = {q: (k - 1) + pos for pos, q in enumerate(others)}
    n_new = qubo.n - 1

    def expand(q):
        """Old variable -> list of (new variable or None for constant 1, coefficient)."""
        if q not in primary_set:
            return [(new_index[q], 1.0)]
        i = primary_set[q]
        terms = []
        terms.append((None, 1.0) if i == 0 else (i - 1, 1.0))  # w_i
        if i + 1 <= k - 1:
            terms.append((i, -1.0))  # -w_{i+1}
        return terms

    out = QuboModel(n_new)
    out.constant = stripped.constant
    for q, c in enumerate(stripped.linear):
        if c:
            for v, a in expand(q):
                if v is None:
                    out.constant += a * c
                else:
                    out.add_linear(v, a * c)
    for (i, j), c in stripped.quadratic.items():
        if not c:
            continue
        if i in primary_set and j in primary_set:
            raise AssertionError("primary-primary coupling survives penalty removal")
        for (u, a), (v, b) in itertools.product(expand(i), expand(j)):
            coef = a * b * c
            if u is None and v is None:
                out.constant += coef
            elif u is None or v is None:
                out.add_linear(v if u is None else u, coef)
            else:
                out.add_quadratic(u, v, coef)
    _clean(out)
    followups = tuple(tuple(new_index[q] for q in block) for block in layout.followups)
    new_layout = VariableLayout(DOMAIN_WALL, k, tuple(range(k - 1)), followups, n_new)
    return out, new_layout


def _clean(qubo: QuboModel, tol: float = 1e-12) -> None:
    qubo.linear = [0.0 if abs(c) < tol else c for c in qubo.linear]
    qubo.quadratic = {key: c for key, c in qubo.quadratic.items() if abs(c) >= tol}


def filter_position(p: Position, cfg: InstanceConfig) -> bool:
    """Dataset filter: not in check, move 10 or later, enough eligible moves."""
    if p.in_check() or p.fullmove_number < 10:
        return False
    try:
        return len(eligible_moves(p, cfg)) >= max(cfg.k, 8)
    except InstanceRejected:
        return False


def instance_id(fen: str, cfg: InstanceConfig) -> str:
    blob = json.dumps({"fen": fen, "config": cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_instance(p: Position, cfg: InstanceConfig, source: Optional[dict] = None) -> QkrdInstance:
    candidates = select_candidates(p, cfg)
    followups = [generate_followups(p, Move.from_uci(c.move), cfg) for c in candidates] if cfg.f else []
    qubo, layout = build_qubo(candidates, followups, cfg)
    fen = p.fen()
    src = {"fen": fen}
    src.update(source or {})
    return QkrdInstance(
        id=instance_id(fen, cfg),
        source=src,
        config=cfg,
        candidates=candidates,
        followups=followups,
        layout=layout,
        qubo=qubo,
        metadata={"followup_reply": "null-move", "coverage": "moving piece, defending king transparent",
                  "candidate_rule": "newly attacked ring square, destination in ROI"},
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_CAND_SCHEMA = {
    "type": "object",
    "required": ["move", "c1", "c2", "risk", "score"],
    "properties": {"move": {"type": "string"}, "c1": {"type": "integer", "minimum": 0},
                   "c2": {"type": "integer", "minimum": 0}, "risk": {"type": "integer", "minimum": 0},
                   "score": {"type": "number"}},
}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "id", "source", "config", "candidates", "followups",
                 "layout", "qubo"],
    "properties": {
        "format": {"const": FORMAT_NAME},
        "version": {"type": "integer"},
        "id": {"type": "string"},
        "source": {"type": "object", "required": ["fen"]},
        "config": {"type": "object"},
        "candidates": {"type": "array", "items": _CAND_SCHEMA, "minItems": 1},
        "followups": {"type": "array", "items": {"type": "array", "items": _CAND_SCHEMA}},
        "layout": {"type": "object", "required": ["encoding", "n_choices", "primary", "followups", "n_qubits"]},
        "qubo": {"type": "object", "required": ["n", "constant", "terms"],
                 "properties": {"terms": {"type": "array",
                                          "items": {"type": "array", "minItems": 3, "maxItems": 3}}}},
        "metadata": {"type": "object"},
    },
}


def instance_to_dict(inst: QkrdInstance) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "id": inst.id,
        "source": inst.source,
        "config": inst.config.to_dict(),
        "candidates": [asdict(c) for c in inst.candidates],
        "followups": [[asdict(c) for c in block] for block in inst.followups],
        "layout": inst.layout.to_dict(),
        "qubo": {"n": inst.qubo.n, "constant": inst.qubo.constant, "terms": inst.qubo.triples()},
        "metadata": inst.metadata,
    }


def instance_from_dict(data: dict) -> QkrdInstance:
    import jsonschema

    if data.get("format") == FORMAT_NAME and data.get("version") != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported instance version {data.get('version')!r}; "
                                  f"this reader handles version {FORMAT_VERSION}")
    try:
        jsonschema.validate(data, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InstanceFormatError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from None

    cfg = InstanceConfig.from_dict(data["config"])
    cands = [Candidate(**c) for c in data["candidates"]]
    fups = [[Candidate(**c) for c in block] for block in data["followups"]]
    for c in cands + [c for b in fups for c in b]:
        expected = classical_score(c.c1, c.c2, c.risk, cfg.weights)
        if abs(expected - c.score) > 1e-9:
            raise InstanceFormatError(f"candidate {c.move}: score {c.score} != weighted coverage {expected}")
    if _rank(cands) != cands:
        raise InstanceFormatError("candidates violate the score/tie-break order")
    if len(cands) != cfg.k:
        raise InstanceFormatError(f"expected {cfg.k} candidates, found {len(cands)}")

    q = data["qubo"]
    qubo = QuboModel(q["n"])
    qubo.constant = float(q["constant"])
    for i, j, c in q["terms"]:
        if i == j:
            qubo.add_linear(int(i), float(c))
        else:
            qubo.add_quadratic(int(i), int(j), float(c))
    layout = VariableLayout.from_dict(data["layout"])
    if layout.n_qubits != qubo.n:
        raise InstanceFormatError("layout and QUBO disagree on variable count")
    return QkrdInstance(data["id"], data["source"], cfg, cands, fups, layout, qubo, data.get("metadata", {}))


def write_instance(inst: QkrdInstance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n")
    return path


def read_instance(path) -> QkrdInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not JSON ({exc})") from None
    return instance_from_dict(data)


def position_of(inst: QkrdInstance) -> Position:
    return parse_fen(inst.source["fen"], strict=False)
