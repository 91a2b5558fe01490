"""Chess positions, FEN/PGN ingestion, legal move generation and attacks.

Squares are integers 0..63 with a1 = 0, b1 = 1, ..., h8 = 63, so
``file = sq % 8`` and ``rank = sq // 8``.  Pieces are single FEN letters
(uppercase white, lowercase black); an empty square is ``None``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

log = logging.getLogger(__name__)

WHITE = "w"
BLACK = "b"

FILES = "abcdefgh"
STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

KNIGHT_STEPS = ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2))
KING_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
ROOK_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))
BISHOP_DIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
QUEEN_DIRS = ROOK_DIRS + BISHOP_DIRS


class ChessError(ValueError):
    pass


class FenError(ChessError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"invalid FEN {field_name}: {message}")
        self.field = field_name


class IllegalMoveError(ChessError):
    pass


def square(file: int, rank: int) -> int:
    if not (0 <= file < 8 and 0 <= rank < 8):
        raise ValueError(f"square off board: file={file} rank={rank}")
    return rank * 8 + file


def file_of(sq: int) -> int:
    return sq & 7


def rank_of(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return FILES[sq & 7] + str((sq >> 3) + 1)


def parse_square(name: str) -> int:
    if len(name) != 2 or name[0] not in FILES or name[1] not in "12345678":
        raise ValueError(f"bad square name {name!r}")
    return square(FILES.index(name[0]), int(name[1]) - 1)


def chebyshev(a: int, b: int) -> int:
    return max(abs(file_of(a) - file_of(b)), abs(rank_of(a) - rank_of(b)))


def color_of(piece: str) -> str:
    return WHITE if piece.isupper() else BLACK


def opposite(color: str) -> str:
    return BLACK if color == WHITE else WHITE


def _build_tables():
    knight, king = [], []
    rays = {d: [] for d in QUEEN_DIRS}
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        knight.append(tuple(square(f + df, r + dr) for df, dr in KNIGHT_STEPS
                            if 0 <= f + df < 8 and 0 <= r + dr < 8))
        king.append(tuple(square(f + df, r + dr) for df, dr in KING_STEPS
                          if 0 <= f + df < 8 and 0 <= r + dr < 8))
        for df, dr in QUEEN_DIRS:
            ray = []
            ff, rr = f + df, r + dr
            while 0 <= ff < 8 and 0 <= rr < 8:
                ray.append(rr * 8 + ff)
                ff += df
                rr += dr
            rays[(df, dr)].append(tuple(ray))
    return tuple(knight), tuple(king), {d: tuple(v) for d, v in rays.items()}


KNIGHT_TARGETS, KING_TARGETS, RAYS = _build_tables()
_SLIDER_DIRS = {"b": BISHOP_DIRS, "r": ROOK_DIRS, "q": QUEEN_DIRS}


@dataclass(frozen=True, order=True)
class Move:
    from_sq: int
    to_sq: int
    promotion: Optional[str] = None  # lowercase piece kind: q, r, b, n

    def uci(self) -> str:
        return square_name(self.from_sq) + square_name(self.to_sq) + (self.promotion or "")

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise ValueError(f"bad UCI move {text!r}")
        promo = text[4] if len(text) == 5 else None
        if promo is not None and promo not in "qrbn":
            raise ValueError(f"bad promotion piece in {text!r}")
        return cls(parse_square(text[:2]), parse_square(text[2:4]), promo)

    def __str__(self) -> str:
        return self.uci()


@dataclass(frozen=True)
class Position:
    board: tuple  # 64 entries: FEN piece letter or None
    turn: str = WHITE
    castling: str = ""  # subset of "KQkq", canonical order
    ep_square: Optional[int] = None
    halfmove_clock: int = 0
    fullmove_number: int = 1

    # -- construction -------------------------------------------------
    @classmethod
    def from_fen(cls, text: str) -> "Position":
        return parse_fen(text)

    @classmethod
    def start(cls) -> "Position":
        return parse_fen(STARTING_FEN)

    def fen(self) -> str:
        rows = []
        for rank in range(7, -1, -1):
            row, empty = "", 0
            for file in range(8):
                piece = self.board[rank * 8 + file]
                if piece is None:
                    empty += 1
                    continue
                if empty:
                    row += str(empty)
                    empty = 0
                row += piece
            if empty:
                row += str(empty)
            rows.append(row)
        ep = square_name(self.ep_square) if self.ep_square is not None else "-"
        return (f"{'/'.join(rows)} {self.turn} {self.castling or '-'} {ep} "
                f"{self.halfmove_clock} {self.fullmove_number}")

    def __str__(self) -> str:
        return self.fen()

    # -- queries ------------------------------------------------------
    def piece_at(self, sq: int) -> Optional[str]:
        return self.board[sq]

    def king_square(self, color: str) -> Optional[int]:
        target = "K" if color == WHITE else "k"
        try:
            return self.board.index(target)
        except ValueError:
            return None

    def pieces(self, color: str) -> Iterator[tuple[int, str]]:
        for sq, piece in enumerate(self.board):
            if piece is not None and color_of(piece) == color:
                yield sq, piece

    def is_attacked_by(self, sq: int, color: str) -> bool:
        return bool(attackers(self, sq, color, first_only=True))

    def in_check(self, color: Optional[str] = None) -> bool:
        color = color or self.turn
        ksq = self.king_square(color)
        return ksq is not None and self.is_attacked_by(ksq, opposite(color))

    def legal_moves(self) -> list[Move]:
        return legal_moves(self)

    def push(self, move: Move) -> "Position":
        return apply_move(self, move)

    def null_move(self) -> "Position":
        """Pass the turn without moving; en-passant rights are cleared."""
        return replace(self, turn=opposite(self.turn), ep_square=None)


# ---------------------------------------------------------------------------
# FEN
# ---------------------------------------------------------------------------

def parse_fen(text: str, strict: bool = True) -> Position:
    """Parse a 6-field FEN record.

    ``strict=False`` skips the king-count and check-legality rules so that
    textbook diagrams (e.g. a lone queen against a king) can be loaded.
    """
    fields = text.split()
    if len(fields) != 6:
        raise FenError("record", f"expected 6 fields, got {len(fields)}")
    placement, turn, castling, ep, half, full = fields

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError("placement", f"expected 8 ranks, got {len(ranks)}")
    board: list = [None] * 64
    for i, row in enumerate(ranks):
        rank = 7 - i
        file = 0
        for ch in row:
            if ch.isdigit():
                file += int(ch)
            elif ch in "PNBRQKpnbrqk":
                if file >= 8:
                    raise FenError("placement", f"rank {rank + 1} overflows")
                board[rank * 8 + file] = ch
                file += 1
            else:
                raise FenError("placement", f"unknown piece character {ch!r}")
        if file != 8:
            raise FenError("placement", f"rank {rank + 1} has {file} files")

    if turn not in (WHITE, BLACK):
        raise FenError("side to move", repr(turn))
    if castling != "-":
        if not castling or any(c not in "KQkq" for c in castling) or len(set(castling)) != len(castling):
            raise FenError("castling", repr(castling))
    rights = "".join(c for c in "KQkq" if c in castling) if castling != "-" else ""
    ep_sq = None
    if ep != "-":
        try:
            ep_sq = parse_square(ep)
        except ValueError:
            raise FenError("en passant", repr(ep)) from None
        if rank_of(ep_sq) not in (2, 5):
            raise FenError("en passant", f"{ep} not on rank 3 or 6")
    try:
        half_n, full_n = int(half), int(full)
    except ValueError:
        raise FenError("move counters", f"{half!r} {full!r}") from None
    if half_n < 0 or full_n < 1:
        raise FenError("move counters", f"{half!r} {full!r}")

    for king in "Kk":
        count = board.count(king)
        if count > 1 or (strict and count != 1):
            raise FenError("placement", f"{count} {'white' if king == 'K' else 'black'} kings")
    for sq in list(range(8)) + list(range(56, 64)):
        if board[sq] in ("P", "p"):
            raise FenError("placement", f"pawn on back rank {square_name(sq)}")

    pos = Position(tuple(board), turn, rights, ep_sq, half_n, full_n)
    if strict and pos.in_check(opposite(turn)):
        raise FenError("side to move", "side not to move is in check")
    return pos


# ---------------------------------------------------------------------------
# attacks
# ---------------------------------------------------------------------------

def piece_attacks(board, sq: int, piece: str, transparent: Optional[int] = None) -> set[int]:
    """Squares attacked by ``piece`` standing on ``sq`` given ``board`` occupancy.

    Sliders stop at (and include) the first occupied square; the square in
    ``transparent`` never blocks.
    """
    kind = piece.lower()
    if kind == "p":
        f, r = sq & 7, sq >> 3
        r2 = r + (1 if piece == "P" else -1)
        out = set()
        if 0 <= r2 < 8:
            if f > 0:
                out.add(r2 * 8 + f - 1)
            if f < 7:
                out.add(r2 * 8 + f + 1)
        return out
    if kind == "n":
        return set(KNIGHT_TARGETS[sq])
    if kind == "k":
        return set(KING_TARGETS[sq])
    out = set()
    for d in _SLIDER_DIRS[kind]:
        for t in RAYS[d][sq]:
            out.add(t)
            if board[t] is not None and t != transparent:
                break
    return out


def attack_squares(p: Position, sq: int) -> set[int]:
    piece = p.board[sq]
    if piece is None:
        raise ChessError(f"no piece on {square_name(sq)}")
    return piece_attacks(p.board, sq, piece)


def attackers(p: Position, target: int, color: str, first_only: bool = False) -> list[int]:
    """Squares of ``color`` pieces attacking ``target`` (occupancy-aware)."""
    board = p.board
    found = []
    white = color == WHITE
    pawn, knight, king = ("P", "N", "K") if white else ("p", "n", "k")
    diag = ("B", "Q") if white else ("b", "q")
    straight = ("R", "Q") if white else ("r", "q")

    f, r = target & 7, target >> 3
    pr = r - 1 if white else r + 1
    if 0 <= pr < 8:
        for pf in (f - 1, f + 1):
            if 0 <= pf < 8 and board[pr * 8 + pf] == pawn:
                found.append(pr * 8 + pf)
                if first_only:
                    return found
    for s in KNIGHT_TARGETS[target]:
        if board[s] == knight:
            found.append(s)
            if first_only:
                return found
    for s in KING_TARGETS[target]:
        if board[s] == king:
            found.append(s)
            if first_only:
                return found
    for dirs, kinds in ((BISHOP_DIRS, diag), (ROOK_DIRS, straight)):
        for d in dirs:
            for s in RAYS[d][target]:
                piece = board[s]
                if piece is None:
                    continue
                if piece in kinds:
                    found.append(s)
                    if first_only:
                        return found
                break
    return found


# ---------------------------------------------------------------------------
# move generation
# ---------------------------------------------------------------------------

def _pseudo_moves(p: Position) -> Iterator[Move]:
    board = p.board
    us = p.turn
    white = us == WHITE
    for sq, piece in enumerate(board):
        if piece is None or (piece.isupper() != white):
            continue
        kind = piece.lower()
        if kind == "p":
            yield from _pawn_moves(p, sq)
        elif kind in "nk":
            targets = KNIGHT_TARGETS[sq] if kind == "n" else KING_TARGETS[sq]
            for t in targets:
                occ = board[t]
                if occ is None or occ.isupper() != white:
                    yield Move(sq, t)
            if kind == "k":
                yield from _castling_moves(p, sq)
        else:
            for d in _SLIDER_DIRS[kind]:
                for t in RAYS[d][sq]:
                    occ = board[t]
                    if occ is None:
                        yield Move(sq, t)
                        continue
                    if occ.isupper() != white:
                        yield Move(sq, t)
                    break


def _pawn_moves(p: Position, sq: int) -> Iterator[Move]:
    board = p.board
    white = p.turn == WHITE
    step = 8 if white else -8
    start_rank, last_rank = (1, 7) if white else (6, 0)
    f, r = sq & 7, sq >> 3

    def emit(to):
        if to >> 3 == last_rank:
            for promo in "bnqr":
                yield Move(sq, to, promo)
        else:
            yield Move(sq, to)

    one = sq + step
    if board[one] is None:
        yield from emit(one)
        two = one + step
        if r == start_rank and board[two] is None:
            yield Move(sq, two)
    for df in (-1, 1):
        if not 0 <= f + df < 8:
            continue
        to = one + df
        occ = board[to]
        if occ is not None and occ.isupper() != white:
            yield from emit(to)
        elif to == p.ep_square:
            yield Move(sq, to)


def _castling_moves(p: Position, ksq: int) -> Iterator[Move]:
    white = p.turn == WHITE
    home = 4 if white else 60
    if ksq != home or not p.castling:
        return
    them = opposite(p.turn)
    board = p.board
    rook = "R" if white else "r"
    short, long_ = ("K", "Q") if white else ("k", "q")
    if short in p.castling and board[home + 3] == rook and board[home + 1] is None and board[home + 2] is None:
        if not any(p.is_attacked_by(s, them) for s in (home, home + 1, home + 2)):
            yield Move(home, home + 2)
    if (long_ in p.castling and board[home - 4] == rook and board[home - 1] is None
            and board[home - 2] is None and board[home - 3] is None):
        if not any(p.is_attacked_by(s, them) for s in (home, home - 1, home - 2)):
            yield Move(home, home - 2)


def _make(p: Position, m: Move) -> Position:
    """Apply a pseudo-legal move without legality checks."""
    board = list(p.board)
    piece = board[m.from_sq]
    white = piece.isupper()
    kind = piece.lower()
    captured = board[m.to_sq]
    board[m.from_sq] = None
    ep = None

    if kind == "p":
        if m.to_sq == p.ep_square and captured is None and file_of(m.to_sq) != file_of(m.from_sq):
            board[m.to_sq - 8 if white else m.to_sq + 8] = None
        if abs(m.to_sq - m.from_sq) == 16:
            ep = (m.from_sq + m.to_sq) // 2
        if m.promotion:
            piece = m.promotion.upper() if white else m.promotion
    elif kind == "k" and abs(m.to_sq - m.from_sq) == 2:
        if m.to_sq > m.from_sq:
            board[m.from_sq + 1], board[m.from_sq + 3] = board[m.from_sq + 3], None
        else:
            board[m.from_sq - 1], board[m.from_sq - 4] = board[m.from_sq - 4], None
    board[m.to_sq] = piece

    rights = p.castling
    if rights:
        lost = set()
        for sq in (m.from_sq, m.to_sq):
            if sq == 4:
                lost |= {"K", "Q"}
            elif sq == 60:
                lost |= {"k", "q"}
            elif sq == 7:
                lost.add("K")
            elif sq == 0:
                lost.add("Q")
            elif sq == 63:
                lost.add("k")
            elif sq == 56:
                lost.add("q")
        if lost:
            rights = "".join(c for c in rights if c not in lost)

    half = 0 if kind == "p" or captured is not None else p.halfmove_clock + 1
    full = p.fullmove_number + (0 if white else 1)
    return Position(tuple(board), opposite(p.turn), rights, ep, half, full)


def legal_moves(p: Position) -> list[Move]:
    """All legal moves, ordered by ascending UCI string."""
    us = p.turn
    them = opposite(us)
    enemy_king = p.king_square(them)
    out = []
    for m in _pseudo_moves(p):
        if m.to_sq == enemy_king:
            continue
        nxt = _make(p, m)
        ksq = nxt.king_square(us)
        if ksq is not None and nxt.is_attacked_by(ksq, them):
            continue
        out.append(m)
    out.sort(key=Move.uci)
    return out


def apply_move(p: Position, m: Move) -> Position:
    if m not in legal_moves(p):
        raise IllegalMoveError(f"illegal move {m.uci()} in {p.fen()}")
    return _make(p, m)


def perft(p: Position, depth: int) -> int:
    if depth == 0:
        return 1
    moves = legal_moves(p)
    if depth == 1:
        return len(moves)
    return sum(perft(_make(p, m), depth - 1) for m in moves)


# ---------------------------------------------------------------------------
# SAN
# ---------------------------------------------------------------------------

_SAN_RE = re.compile(
    r"^(?P<piece>[NBRQK])?(?P<ff>[a-h])?(?P<fr>[1-8])?(?P<cap>x)?(?P<to>[a-h][1-8])(?:=?(?P<promo>[NBRQ]))?$")


def move_to_san(p: Position, m: Move) -> str:
    piece = p.board[m.from_sq]
    kind = piece.lower()
    legal = legal_moves(p)
    if kind == "k" and abs(m.to_sq - m.from_sq) == 2:
        san = "O-O" if m.to_sq > m.from_sq else "O-O-O"
    else:
        capture = p.board[m.to_sq] is not None or (kind == "p" and file_of(m.from_sq) != file_of(m.to_sq))
        if kind == "p":
            san = (FILES[file_of(m.from_sq)] + "x" if capture else "") + square_name(m.to_sq)
            if m.promotion:
                san += "=" + m.promotion.upper()
        else:
            rivals = [o.from_sq for o in legal if o.to_sq == m.to_sq and o.from_sq != m.from_sq
                      and p.board[o.from_sq] == piece]
            dis = ""
            if rivals:
                if all(file_of(s) != file_of(m.from_sq) for s in rivals):
                    dis = FILES[file_of(m.from_sq)]
                elif all(rank_of(s) != rank_of(m.from_sq) for s in rivals):
                    dis = str(rank_of(m.from_sq) + 1)
                else:
                    dis = square_name(m.from_sq)
            san = kind.upper() + dis + ("x" if capture else "") + square_name(m.to_sq)
    nxt = _make(p, m)
    if nxt.in_check():
        san += "#" if not legal_moves(nxt) else "+"
    return san


def parse_san(p: Position, san: str) -> Move:
    text = san.rstrip("+#!?")
    legal = legal_moves(p)
    if text in ("O-O", "0-0", "O-O-O", "0-0-0"):
        home = 4 if p.turn == WHITE else 60
        to = home + 2 if text in ("O-O", "0-0") else home - 2
        for m in legal:
            if m.from_sq == home and m.to_sq == to and p.board[home].lower() == "k":
                return m
        raise IllegalMoveError(f"illegal castling {san!r} in {p.fen()}")
    match = _SAN_RE.match(text)
    if not match:
        raise IllegalMoveError(f"unparseable SAN {san!r}")
    kind = (match["piece"] or "P").lower()
    to = parse_square(match["to"])
    promo = match["promo"].lower() if match["promo"] else None
    hits = []
    for m in legal:
        piece = p.board[m.from_sq]
        if piece.lower() != kind or m.to_sq != to or m.promotion != promo:
            continue
        if kind == "k" and abs(m.to_sq - m.from_sq) == 2:
            continue
        if match["ff"] and FILES[file_of(m.from_sq)] != match["ff"]:
            continue
        if match["fr"] and str(rank_of(m.from_sq) + 1) != match["fr"]:
            continue
        hits.append(m)
    if len(hits) != 1:
        what = "ambiguous" if hits else "illegal"
        raise IllegalMoveError(f"{what} SAN {san!r} in {p.fen()}")
    return hits[0]


# ---------------------------------------------------------------------------
# PGN
# ---------------------------------------------------------------------------

@dataclass
class PgnGame:
    headers: dict
    moves: list = field(default_factory=list)      # Move per ply
    positions: list = field(default_factory=list)  # Position after each ply
    warnings: list = field(default_factory=list)

    @property
    def start(self) -> Position:
        return parse_fen(self.headers["FEN"]) if "FEN" in self.headers else Position.start()


_TAG_RE = re.compile(r'^\[(\w+)\s+"((?:[^"\\]|\\.)*)"\]\s*$')
_RESULTS = {"1-0", "0-1", "1/2-1/2", "*"}


def _strip_movetext(text: str) -> list[str]:
    out = []
    depth = 0
    i = 0
    n = len(text)
    buf = []
    while i < n:
        ch = text[i]
        if ch == "{":
            end = text.find("}", i)
            i = n if end < 0 else end + 1
            buf.append(" ")
            continue
        if ch == ";":
            end = text.find("\n", i)
            i = n if end < 0 else end + 1
            buf.append(" ")
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif depth == 0:
            buf.append(ch)
        else:
            pass
        if ch in "()":
            buf.append(" ")
        i += 1
    for tok in "".join(buf).split():
        if tok in _RESULTS or tok.startswith("$"):
            continue
        tok = re.sub(r"^\d+\.+", "", tok)
        if tok and not re.fullmatch(r"\d+\.*", tok):
            out.append(tok)
    return out


def _split_games(text: str) -> Iterator[tuple[dict, str]]:
    headers: dict = {}
    movetext: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("%"):
            continue
        tag = _TAG_RE.match(stripped)
        if tag:
            if movetext:
                yield headers, "\n".join(movetext)
                headers, movetext = {}, []
            headers[tag[1]] = tag[2].replace('\\"', '"')
        elif stripped:
            movetext.append(line)
    if headers or movetext:
        yield headers, "\n".join(movetext)


def parse_pgn_games(text: str) -> list[PgnGame]:
    """Replay every game's mainline; bad SAN truncates that game with a warning."""
    games = []
    for headers, movetext in _split_games(text):
        game = PgnGame(headers=dict(headers))
        try:
            pos = game.start
        except FenError as exc:
            game.warnings.append(f"bad FEN tag: {exc}")
            games.append(game)
            continue
        for ply, san in enumerate(_strip_movetext(movetext), start=1):
            try:
                move = parse_san(pos, san)
            except (IllegalMoveError, ValueError) as exc:
                msg = f"ply {ply}: {exc}; game truncated"
                log.warning(msg)
                game.warnings.append(msg)
                break
            pos = _make(pos, move)
            game.moves.append(move)
            game.positions.append(pos)
        games.append(game)
    return games


def write_pgn(headers: dict, start: Position, moves: list[Move]) -> str:
    lines = [f'[{k} "{v}"]' for k, v in headers.items()]
    tokens = []
    pos = start
    for m in moves:
        if pos.turn == WHITE:
            tokens.append(f"{pos.fullmove_number}.")
        elif not tokens:
            tokens.append(f"{pos.fullmove_number}...")
        tokens.append(move_to_san(pos, m))
        pos = _make(pos, m)
    tokens.append(headers.get("Result", "*"))
    body, line = [], ""
    for tok in tokens:
        if len(line) + len(tok) + 1 > 79:
            body.append(line)
            line = tok
        else:
            line = f"{line} {tok}" if line else tok
    body.append(line)
    return "\n".join(lines) + "\n\n" + "\n".join(body) + "\n"
