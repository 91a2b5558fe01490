"""Instance datasets: PGN/FEN sources -> filtered instances + a manifest."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ..chesscore import Position, _make, legal_moves, parse_fen, parse_pgn_games, write_pgn
from ..instancegen import (
    InstanceConfig,
    InstanceRejected,
    build_instance,
    filter_position,
    read_instance,
    write_instance,
)
from ..kingring import king_rings, score_move

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "qkrd-manifest"
MANIFEST_VERSION = 1


class DatasetError(RuntimeError):
    pass


def canonical_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def derive_seed(*parts) -> np.random.SeedSequence:
    """Independent stream for any tuple of labels (master seed, instance id, arm, ...)."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return np.random.SeedSequence(int.from_bytes(digest[:16], "little"))


def fixture_paths() -> list:
    root = resources.files("qkrd") / "data"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".pgn"))


# ---------------------------------------------------------------------------
# synthetic games
# ---------------------------------------------------------------------------

def synthesize_game(seed, max_plies: int = 100, aggression: float = 2.0) -> tuple:
    """Seeded playout biased towards moves that hit the enemy king rings.

    Each legal move is drawn with weight 1 + aggression * (ring squares it
    attacks).  Returns ``(moves, final position)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    pos = Position.start()
    moves = []
    for _ in range(max_plies):
        options = legal_moves(pos)
        if not options:
            break
        rings = king_rings(pos, pos.turn)
        w = np.array([1.0 + aggression * score_move(pos, m, rings)[0].coverage.total for m in options])
        m = options[int(rng.choice(len(options), p=w / w.sum()))]
        moves.append(m)
        pos = _make(pos, m)
    return moves, pos


def synthesize_pgn(n_games: int, seed: int, max_plies: int = 100) -> str:
    out = []
    for g in range(n_games):
        moves, _ = synthesize_game(derive_seed("synthetic-game", seed, g), max_plies)
        headers = {"Event": "QKRD synthetic playout", "Site": "local", "Round": str(g + 1),
                   "White": "playout", "Black": "playout", "Result": "*", "Seed": f"{seed}:{g}"}
        out.append(write_pgn(headers, Position.start(), moves))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    max_instances: int = 60
    per_game: int = 2           # positions drawn from each game at most
    sources: tuple = ()         # PGN or FEN-list files; empty -> bundled fixtures

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        data = dict(data)
        unknown = set(data) - {"instance", "max_instances", "per_game", "sources"}
        if unknown:
            raise DatasetError(f"unknown gen config fields: {sorted(unknown)}")
        inst = InstanceConfig.from_dict(data.pop("instance", {}))
        return cls(instance=inst, sources=tuple(data.pop("sources", ())), **data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sources"] = list(self.sources)
        return d


def _read_source(path: Path) -> list:
    """(game label, ply, Position) triples from a PGN file or a FEN-per-line file."""
    text = path.read_text()
    if path.suffix.lower() in (".fen", ".txt", ".epd"):
        out = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                out.append((f"{path.name}:{lineno}", 0, parse_fen(line)))
        return out
    out = []
    for g, game in enumerate(parse_pgn_games(text), start=1):
        for w in game.warnings:
            log.warning("%s game %d: %s", path.name, g, w)
        label = f"{path.name}#{g}"
        out += [(label, ply, p) for ply, p in enumerate(game.positions, start=1)]
    return out


def generate_dataset(cfg: GenConfig, out_dir, seed: int = 0) -> dict:
    """Filter positions, build instances, write them plus ``manifest.json``.

    From each game up to ``per_game`` passing positions are drawn with a
    stream derived from ``seed``; duplicates (same instance id) are dropped
    and the first ``max_instances`` in source order are kept.
    """
    out_dir = Path(out_dir)
    sources = [Path(s) for s in cfg.sources] or [Path(p) for p in fixture_paths()]
    if not sources:
        raise DatasetError("no source files")
    entries, seen = [], set()
    stats = {"positions": 0, "passed_filter": 0, "rejected": 0, "duplicates": 0}
    source_meta = []
    for src in sources:
        if not src.exists():
            raise DatasetError(f"missing source {src}")
        source_meta.append({"name": src.name, "sha256": hashlib.sha256(src.read_bytes()).hexdigest()})
        by_game: dict = {}
        for label, ply, pos in _read_source(src):
            by_game.setdefault(label, []).append((ply, pos))
        for label, plies in by_game.items():
            stats["positions"] += len(plies)
            passing = [(ply, pos) for ply, pos in plies if filter_position(pos, cfg.instance)]
            stats["passed_filter"] += len(passing)
            rng = np.random.Generator(np.random.Philox(derive_seed("gen", seed, src.name, label)))
            order = rng.permutation(len(passing)).tolist()
            taken = 0
            for i in order:
                if taken >= cfg.per_game:
                    break
                ply, pos = passing[i]
                try:
                    inst = build_instance(pos, cfg.instance, {"game": label, "ply": ply})
                except InstanceRejected:
                    stats["rejected"] += 1
                    continue
                if inst.id in seen:
                    stats["duplicates"] += 1
                    continue
                seen.add(inst.id)
                taken += 1
                entries.append((label, ply, inst))
    entries = entries[:cfg.max_instances]
    records = []
    for label, ply, inst in entries:
        rel = Path("instances") / f"{inst.id}.json"
        write_instance(inst, out_dir / rel)
        records.append({"id": inst.id, "path": rel.as_posix(), "n_qubits": inst.n_qubits,
                        "fen": inst.source["fen"], "game": label, "ply": ply})
    # paths differ between machines, so only file names enter the hash
    conf = cfg.to_dict()
    conf["sources"] = [Path(s).name for s in cfg.sources]
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "seed": seed,
        "config": conf,
        "config_hash": canonical_hash({"gen": conf, "seed": seed}),
        "sources": source_meta,
        "counts": stats,
        "instances": records,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


@dataclass
class Manifest:
    path: Path
    data: dict

    @property
    def root(self) -> Path:
        return self.path.parent

    @property
    def entries(self) -> list:
        return self.data["instances"]

    @property
    def digest(self) -> str:
        return canonical_hash(self.data)

    def instance_path(self, entry: dict) -> Path:
        return self.root / entry["path"]

    def load(self, entry: dict):
        return read_instance(self.instance_path(entry))


def load_manifest(path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"manifest not found: {path}") from None
    if data.get("format") != MANIFEST_FORMAT:
        raise DatasetError(f"{path} is not a dataset manifest")
    if data.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {data.get('version')!r}")
    return Manifest(path, data)


def instances_from(manifest: Manifest, limit: Optional[int] = None) -> list:
    entries = manifest.entries[:limit] if limit else manifest.entries
    return [manifest.load(e) for e in entries]
