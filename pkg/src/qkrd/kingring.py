"""King-ring geometry, per-move coverage and risk, and the candidate filter.

Coverage attributes attacks to the moving piece only.  The defending king
never blocks a slider for coverage purposes, so a queen checking along a
file keeps counting the ring squares behind the king.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chesscore import (
    Move,
    Position,
    _make,
    attackers,
    chebyshev,
    legal_moves,
    opposite,
    piece_attacks,
)


class KingRingError(ValueError):
    pass


@dataclass(frozen=True)
class RingPair:
    king: int
    r1: frozenset
    r2: frozenset

    @property
    def squares(self) -> frozenset:
        return self.r1 | self.r2


@dataclass(frozen=True)
class CoverageScore:
    c1: int
    c2: int

    @property
    def total(self) -> int:
        return self.c1 + self.c2

    def weighted(self, alpha1: float, alpha2: float) -> float:
        return alpha1 * self.c1 + alpha2 * self.c2


@dataclass(frozen=True)
class ScoredMove:
    move: Move
    coverage: CoverageScore
    risk: int


def rings_around(king_sq: int) -> RingPair:
    r1, r2 = set(), set()
    for sq in range(64):
        d = chebyshev(sq, king_sq)
        if d == 1:
            r1.add(sq)
        elif d == 2:
            r2.add(sq)
    return RingPair(king_sq, frozenset(r1), frozenset(r2))


def king_rings(p: Position, attacker_color: str) -> RingPair:
    king_sq = p.king_square(opposite(attacker_color))
    if king_sq is None:
        raise KingRingError("defending king missing")
    return rings_around(king_sq)


def ring_coverage(attacked: set, rings: RingPair) -> CoverageScore:
    return CoverageScore(len(attacked & rings.r1), len(attacked & rings.r2))


def piece_ring_attacks(board, sq: int, rings: RingPair) -> set:
    """Ring squares attacked by the piece on ``sq``, x-raying the ring's king."""
    return piece_attacks(board, sq, board[sq], transparent=rings.king) & rings.squares


def move_attacks(p: Position, m: Move, rings: RingPair | None = None) -> tuple[set, set]:
    """Ring squares hit by the moving piece before (from origin) and after (from destination)."""
    rings = rings or king_rings(p, p.turn)
    after = _make(p, m)
    pre = piece_ring_attacks(p.board, m.from_sq, rings)
    post = piece_ring_attacks(after.board, m.to_sq, rings)
    return pre, post


def move_coverage(p: Position, m: Move) -> CoverageScore:
    if m not in legal_moves(p):
        raise KingRingError(f"illegal move {m.uci()}")
    rings = king_rings(p, p.turn)
    _, post = move_attacks(p, m, rings)
    return ring_coverage(post, rings)


def _risk_after(after: Position, to_sq: int, mover: str) -> int:
    threats = len(attackers(after, to_sq, opposite(mover)))
    support = len(attackers(after, to_sq, mover))
    return max(0, threats - support)


def move_risk(p: Position, m: Move) -> int:
    """max(0, enemy attackers - own defenders) of the destination after the move."""
    if m not in legal_moves(p):
        raise KingRingError(f"illegal move {m.uci()}")
    return _risk_after(_make(p, m), m.to_sq, p.turn)


def score_move(p: Position, m: Move, rings: RingPair, covered: frozenset = frozenset()) -> tuple[ScoredMove, set, set]:
    """Coverage (excluding ``covered`` squares) and risk of a move already known legal."""
    after = _make(p, m)
    pre = piece_ring_attacks(p.board, m.from_sq, rings)
    post = piece_ring_attacks(after.board, m.to_sq, rings)
    counted = post - covered
    scored = ScoredMove(m, ring_coverage(counted, rings), _risk_after(after, m.to_sq, p.turn))
    return scored, pre, post


def coverage_increasing_moves(p: Position, moves: list[Move] | None = None) -> list[ScoredMove]:
    """Legal moves whose piece newly attacks at least one ring square.

    A move qualifies when the moved piece, from its destination, attacks a
    ring square it did not attack from its origin.  Order follows
    ``legal_moves``.
    """
    rings = king_rings(p, p.turn)
    out = []
    for m in legal_moves(p) if moves is None else moves:
        scored, pre, post = score_move(p, m, rings)
        if post - pre:
            out.append(scored)
    return out

