"""Game-state data model: map, units, cities, players, fog of war, saves.

Coordinates are (x, y) with x in [0, width) growing east and y in
[0, height) growing north. Map arrays are indexed [x, y]. All mutable
state lives in plain dataclasses so the engine can update it in place;
serialization is a versioned JSON document with base64-packed grids.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import GameRng, derive_seed
from .ruleset import (
    INFRA_INDEX,
    Ruleset,
    UnitDef,
    ruleset_from_dict,
    ruleset_to_dict,
)

SAVE_FORMAT = "civarena-save"
SAVE_VERSION = 1

NO_OWNER = -1
NO_CITY = -1
NO_TECH = -1
NO_GOVERNMENT = -1

# Diplomatic state ids 0..4 come from the ruleset's five named states.
# Two extra ids complete the 7-slot domain: "never met" and a reserved slot.
DIPL_NO_CONTACT = 5
DIPL_RESERVED = 6

CITY_VISION_RADIUS = 2

# 21-tile city work area: radius-2 square minus the four corners.
# Offsets are ordered north-to-south, west-to-east; the center tile is
# worked automatically and is not part of WORK_OFFSETS.
FAT_CROSS_OFFSETS = tuple(
    (dx, dy)
    for dy in (2, 1, 0, -1, -2)
    for dx in (-2, -1, 0, 1, 2)
    if not (abs(dx) == 2 and abs(dy) == 2)
)
WORK_OFFSETS = tuple(o for o in FAT_CROSS_OFFSETS if o != (0, 0))

MOODS = ("peaceful", "combat")
CITY_STATES = ("peace", "disorder", "celebrating")


class StateError(ValueError):
    """Raised for invalid configs, saves, or broken state invariants."""


@dataclass
class GameConfig:
    """Immutable-by-convention game setup parameters."""

    width: int = 20
    height: int = 20
    players: int = 2
    seed: int = 0
    land_fraction: float = 0.5
    max_turns: int = 200
    reveal_map: bool = False
    ai_fill: tuple = ()
    instance: str = ""
    unit_cap: int = 128
    city_cap: int = 64
    player_cap: int = 16

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "players": self.players,
            "seed": self.seed,
            "land_fraction": self.land_fraction,
            "max_turns": self.max_turns,
            "reveal_map": self.reveal_map,
            "ai_fill": list(self.ai_fill),
            "instance": self.instance,
            "unit_cap": self.unit_cap,
            "city_cap": self.city_cap,
            "player_cap": self.player_cap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameConfig":
        kwargs = dict(data)
        kwargs["ai_fill"] = tuple(kwargs.get("ai_fill", ()))
        return cls(**kwargs)


@dataclass
class Unit:
    id: int
    owner: int
    x: int
    y: int
    type: int
    hp: int
    veteran: bool = False
    moves_left: int = 0
    home_city: int | None = None
    fortified: bool = False
    transported_by: int | None = None
    upkeep_food: int = 0
    upkeep_shield: int = 0
    upkeep_gold: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id, "owner": self.owner, "x": self.x, "y": self.y,
            "type": self.type, "hp": self.hp, "veteran": self.veteran,
            "moves_left": self.moves_left, "home_city": self.home_city,
            "fortified": self.fortified, "transported_by": self.transported_by,
            "upkeep_food": self.upkeep_food, "upkeep_shield": self.upkeep_shield,
            "upkeep_gold": self.upkeep_gold,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Unit":
        return cls(**data)


@dataclass
class City:
    id: int
    name: str
    owner: int
    x: int
    y: int
    size: int = 1
    food_stock: int = 0
    shield_stock: int = 0
    production_kind: str = "unit"
    production_value: int = 0
    worked: list = field(default_factory=list)
    specialists: dict = field(default_factory=lambda: {"luxury": 0, "science": 0, "tax": 0})
    buildings: list = field(default_factory=list)
    trade_partners: list = field(default_factory=list)
    state: str = "peace"
    disorder_turns: int = 0
    last_completion_turn: int = -1
    # Per-turn outputs and moods, refreshed by the engine's economy pass.
    output_food: int = 0
    output_shield: int = 0
    output_trade: int = 0
    output_gold: int = 0
    output_science: int = 0
    output_luxury: int = 0
    output_bulbs: int = 0
    surplus_food: int = 0
    surplus_shield: int = 0
    surplus_gold: int = 0
    surplus_trade: int = 0
    angry: int = 0
    unhappy: int = 0
    content: int = 0
    happy: int = 0

    @property
    def granary_size(self) -> int:
        return 10 * (self.size + 1)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "owner": self.owner,
            "x": self.x, "y": self.y, "size": self.size,
            "food_stock": self.food_stock, "shield_stock": self.shield_stock,
            "production_kind": self.production_kind,
            "production_value": self.production_value,
            "worked": [list(o) for o in self.worked],
            "specialists": dict(self.specialists),
            "buildings": sorted(self.buildings),
            "trade_partners": sorted(self.trade_partners),
            "state": self.state, "disorder_turns": self.disorder_turns,
            "last_completion_turn": self.last_completion_turn,
            "output_food": self.output_food, "output_shield": self.output_shield,
            "output_trade": self.output_trade, "output_gold": self.output_gold,
            "output_science": self.output_science, "output_luxury": self.output_luxury,
            "output_bulbs": self.output_bulbs,
            "surplus_food": self.surplus_food, "surplus_shield": self.surplus_shield,
            "surplus_gold": self.surplus_gold, "surplus_trade": self.surplus_trade,
            "angry": self.angry, "unhappy": self.unhappy,
            "content": self.content, "happy": self.happy,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "City":
        kwargs = dict(data)
        kwargs["worked"] = [tuple(o) for o in kwargs.get("worked", [])]
        # Copy mutable containers so the restored city never aliases the
        # source document (a shared snapshot must stay frozen).
        if "specialists" in kwargs:
            kwargs["specialists"] = dict(kwargs["specialists"])
        for key in ("buildings", "trade_partners"):
            if key in kwargs:
                kwargs[key] = list(kwargs[key])
        return cls(**kwargs)


@dataclass
class Relation:
    """One player's stance toward another."""

    state: int = DIPL_NO_CONTACT
    embassy: bool = False
    love: int = 0
    shares_vision: bool = False

    def to_dict(self) -> dict:
        return {
            "state": self.state, "embassy": self.embassy,
            "love": self.love, "shares_vision": self.shares_vision,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Relation":
        return cls(**data)


_DEFAULT_RELATION = Relation()

COUNTER_KEYS = ("units_built", "units_killed", "units_lost", "units_used")


@dataclass
class Player:
    id: int
    name: str
    team: int = 0
    nation: int = 0
    is_alive: bool = True
    score: int = 0
    turns_alive: int = 0
    mood: str = "peaceful"
    government: int = 0
    goal_government: int = NO_GOVERNMENT
    revolution_finishes: int = -1
    gold: int = 50
    rate_luxury: int = 0
    rate_science: int = 50
    rate_tax: int = 50
    researched: set = field(default_factory=set)
    researching: int = NO_TECH
    tech_goal: int = NO_TECH
    bulbs_researched: int = 0
    tech_upkeep: int = 0
    science_cost: int = 100
    relations: dict = field(default_factory=dict)
    counters: dict = field(default_factory=lambda: {k: 0 for k in COUNTER_KEYS})
    frozen_score: list | None = None

    def relation(self, other: int) -> Relation:
        """Read-only view of the stance toward `other` (default if unset)."""
        return self.relations.get(other, _DEFAULT_RELATION)

    def relation_mut(self, other: int) -> Relation:
        """Mutable stance record, created on first write access."""
        if other not in self.relations:
            self.relations[other] = Relation()
        return self.relations[other]

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "team": self.team,
            "nation": self.nation, "is_alive": self.is_alive,
            "score": self.score, "turns_alive": self.turns_alive,
            "mood": self.mood, "government": self.government,
            "goal_government": self.goal_government,
            "revolution_finishes": self.revolution_finishes,
            "gold": self.gold, "rate_luxury": self.rate_luxury,
            "rate_science": self.rate_science, "rate_tax": self.rate_tax,
            "researched": sorted(self.researched),
            "researching": self.researching, "tech_goal": self.tech_goal,
            "bulbs_researched": self.bulbs_researched,
            "tech_upkeep": self.tech_upkeep, "science_cost": self.science_cost,
            "relations": {
                str(k): v.to_dict()
                for k, v in sorted(self.relations.items())
                if v != _DEFAULT_RELATION
            },
            "counters": dict(self.counters),
            "frozen_score": self.frozen_score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Player":
        kwargs = dict(data)
        kwargs["researched"] = set(kwargs.get("researched", []))
        kwargs["relations"] = {
            int(k): Relation.from_dict(v)
            for k, v in kwargs.get("relations", {}).items()
        }
        if "counters" in kwargs:
            kwargs["counters"] = dict(kwargs["counters"])
        if kwargs.get("frozen_score") is not None:
            kwargs["frozen_score"] = list(kwargs["frozen_score"])
        return cls(**kwargs)


class WorldMap:
    """Tile grids plus per-player fog status and a unit-position index."""

    def __init__(self, width: int, height: int):
        if width < 1 or height < 1:
            raise StateError("map dimensions must be positive")
        self.width = width
        self.height = height
        self.terrain = np.zeros((width, height), dtype=np.int8)
        self.tile_owner = np.full((width, height), NO_OWNER, dtype=np.int16)
        self.city_id = np.full((width, height), NO_CITY, dtype=np.int32)
        self.infra = np.zeros((width, height), dtype=np.uint64)
        self.status: dict[int, np.ndarray] = {}
        self.unit_stacks: dict[tuple, list] = {}

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def neighbors(self, x: int, y: int):
        for dy in (1, 0, -1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = x + dx, y + dy
                if self.in_bounds(nx, ny):
                    yield nx, ny

    def has_infra(self, x: int, y: int, name: str) -> bool:
        return bool(int(self.infra[x, y]) >> INFRA_INDEX[name] & 1)

    def set_infra(self, x: int, y: int, name: str) -> None:
        self.infra[x, y] = np.uint64(int(self.infra[x, y]) | (1 << INFRA_INDEX[name]))

    def clear_infra(self, x: int, y: int, name: str) -> None:
        self.infra[x, y] = np.uint64(int(self.infra[x, y]) & ~(1 << INFRA_INDEX[name]))

    def infra_names(self, x: int, y: int) -> list:
        bits = int(self.infra[x, y])
        return [name for name, i in INFRA_INDEX.items() if bits >> i & 1]

    def units_at(self, x: int, y: int) -> list:
        return self.unit_stacks.get((x, y), [])

    def ensure_status(self, player_id: int) -> np.ndarray:
        if player_id not in self.status:
            self.status[player_id] = np.zeros((self.width, self.height), dtype=np.uint8)
        return self.status[player_id]


@dataclass
class GameState:
    ruleset: Ruleset
    config: GameConfig
    world: WorldMap
    units: dict = field(default_factory=dict)
    cities: dict = field(default_factory=dict)
    players: dict = field(default_factory=dict)
    turn: int = 0
    current_player: int = 0
    rng: GameRng = None
    events: list = field(default_factory=list)
    negotiations: dict = field(default_factory=dict)
    next_unit_id: int = 1
    next_city_id: int = 1
    next_player_id: int = 0

    def unit_def(self, unit: Unit) -> UnitDef:
        return self.ruleset.unit_defs[unit.type]

    def alive_players(self) -> list:
        return [p for p in self.players.values() if p.is_alive]

    def add_event(self, kind: str, **data) -> dict:
        event = {"turn": self.turn, "kind": kind}
        event.update(data)
        self.events.append(event)
        return event

    def city_at(self, x: int, y: int):
        cid = int(self.world.city_id[x, y])
        return self.cities.get(cid) if cid != NO_CITY else None


# ---------------------------------------------------------------------------
# Registry maintenance


def place_unit(state: GameState, unit: Unit) -> None:
    state.units[unit.id] = unit
    state.world.unit_stacks.setdefault((unit.x, unit.y), []).append(unit.id)


def remove_unit(state: GameState, unit_id: int) -> Unit:
    unit = state.units.pop(unit_id)
    stack = state.world.unit_stacks.get((unit.x, unit.y), [])
    if unit_id in stack:
        stack.remove(unit_id)
        if not stack:
            state.world.unit_stacks.pop((unit.x, unit.y), None)
    for other in state.units.values():
        if other.transported_by == unit_id:
            other.transported_by = None
    return unit


def move_unit(state: GameState, unit: Unit, x: int, y: int) -> None:
    """Relocate a unit (and anything it transports) updating the index."""
    stack = state.world.unit_stacks.get((unit.x, unit.y), [])
    if unit.id in stack:
        stack.remove(unit.id)
        if not stack:
            state.world.unit_stacks.pop((unit.x, unit.y), None)
    unit.x, unit.y = x, y
    state.world.unit_stacks.setdefault((x, y), []).append(unit.id)
    for other in list(state.units.values()):
        if other.transported_by == unit.id and (other.x, other.y) != (x, y):
            move_unit(state, other, x, y)


def spawn_unit(state: GameState, owner: int, type_index: int, x: int, y: int,
               home_city: int | None = None, veteran: bool = False) -> Unit:
    udef = state.ruleset.unit_defs[type_index]
    unit = Unit(
        id=state.next_unit_id, owner=owner, x=x, y=y, type=type_index,
        hp=udef.max_hp, veteran=veteran, moves_left=udef.move_points,
        home_city=home_city,
    )
    if home_city is not None:
        unit.upkeep_shield = 1
        if udef.is_settler:
            unit.upkeep_food = 1
    state.next_unit_id += 1
    place_unit(state, unit)
    state.players[owner].counters["units_built"] += 1
    return unit


# ---------------------------------------------------------------------------
# Visibility


def _sight_sources(state: GameState, player_id: int):
    """(x, y, radius) triples the player sees through, incl. shared vision."""
    viewers = [player_id]
    for other in state.players.values():
        if other.id != player_id and other.relation(player_id).shares_vision:
            viewers.append(other.id)
    for pid in viewers:
        for unit in state.units.values():
            if unit.owner == pid:
                yield unit.x, unit.y, state.unit_def(unit).vision_radius
        for city in state.cities.values():
            if city.owner == pid:
                yield city.x, city.y, CITY_VISION_RADIUS


def visible_mask(state: GameState, player_id: int) -> np.ndarray:
    """Boolean grid of tiles currently in sight of the player."""
    world = state.world
    mask = np.zeros((world.width, world.height), dtype=bool)
    if state.config.reveal_map:
        mask[:] = True
        return mask
    for x, y, radius in _sight_sources(state, player_id):
        x0, x1 = max(0, x - radius), min(world.width, x + radius + 1)
        y0, y1 = max(0, y - radius), min(world.height, y + radius + 1)
        mask[x0:x1, y0:y1] = True
    return mask


def recompute_visibility(state: GameState, player_id: int) -> None:
    """Refresh one player's fog grid: in-sight = 2, remembered = 1."""
    if player_id not in state.players:
        raise StateError(f"unknown player id {player_id}")
    grid = state.world.ensure_status(player_id)
    mask = visible_mask(state, player_id)
    np.copyto(grid, np.where(mask, 2, np.minimum(grid, 1)).astype(np.uint8))


def refresh_all_visibility(state: GameState) -> None:
    for pid in state.players:
        recompute_visibility(state, pid)


def visibility(state: GameState, player_id: int) -> np.ndarray:
    """Current fog status grid for a player (copy)."""
    if player_id not in state.players:
        raise StateError(f"unknown player id {player_id}")
    recompute_visibility(state, player_id)
    return state.world.ensure_status(player_id).copy()


# ---------------------------------------------------------------------------
# Game creation


def new_game(ruleset: Ruleset, config: GameConfig) -> GameState:
    """Create a fresh deterministic game from (ruleset, config)."""
    from . import mapgen

    if not 2 <= config.players <= 255:
        raise StateError("player count must be in [2, 255]")
    if config.width < 5 or config.height < 5:
        raise StateError("map must be at least 5x5")
    if not 0.0 < config.land_fraction < 1.0:
        raise StateError("land_fraction must be in (0, 1)")

    build = mapgen.generate_map(ruleset, config)
    world = WorldMap(config.width, config.height)
    world.terrain = build.terrain
    world.infra = build.infra

    state = GameState(
        ruleset=ruleset,
        config=config,
        world=world,
        rng=GameRng(derive_seed(config.seed, "game")),
    )

    initial_gov = ruleset.initial_government
    for pid in range(config.players):
        player = Player(id=pid, name=f"Player {pid}", team=pid, nation=pid,
                        government=initial_gov)
        state.players[pid] = player
        state.next_player_id = pid + 1

    for pid in range(config.players):
        sx, sy = build.start_positions[pid]
        for type_index in ruleset.opening_units:
            spawn_unit(state, pid, type_index, sx, sy)

    refresh_all_visibility(state)
    state.add_event("game_start", seed=config.seed, players=config.players,
                    width=config.width, height=config.height)
    return state


# ---------------------------------------------------------------------------
# Serialization


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


def pack_status(grid: np.ndarray) -> bytes:
    """Pack a {0,1,2} grid at 2 bits per tile, x-major, LSB-first."""
    flat = grid.astype(np.uint8).reshape(-1)
    pad = (-len(flat)) % 4
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, dtype=np.uint8)])
    quads = flat.reshape(-1, 4)
    weights = np.array([1, 4, 16, 64], dtype=np.uint8)
    return (quads * weights).sum(axis=1).astype(np.uint8).tobytes()


def unpack_status(data: bytes, width: int, height: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    tiles = np.zeros(len(raw) * 4, dtype=np.uint8)
    for i in range(4):
        tiles[i::4] = (raw >> (2 * i)) & 3
    tiles = tiles[: width * height]
    if tiles.max(initial=0) > 2:
        raise StateError("corrupt status grid")
    return tiles.reshape(width, height)


def _grid_to_b64(arr: np.ndarray, dtype) -> str:
    return _b64(np.ascontiguousarray(arr.astype(dtype)).tobytes())


def _grid_from_b64(text: str, dtype, width: int, height: int) -> np.ndarray:
    arr = np.frombuffer(_unb64(text), dtype=dtype)
    if arr.size != width * height:
        raise StateError("grid size mismatch in save data")
    return arr.reshape(width, height).copy()


def state_to_dict(state: GameState, include_events: bool = True) -> dict:
    world = state.world
    doc = {
        "format": SAVE_FORMAT,
        "version": SAVE_VERSION,
        "ruleset": ruleset_to_dict(state.ruleset),
        "config": state.config.to_dict(),
        "turn": state.turn,
        "current_player": state.current_player,
        "next_unit_id": state.next_unit_id,
        "next_city_id": state.next_city_id,
        "next_player_id": state.next_player_id,
        "rng": state.rng.state_dict(),
        "map": {
            "width": world.width,
            "height": world.height,
            "terrain": _grid_to_b64(world.terrain, np.int8),
            "tile_owner": _grid_to_b64(world.tile_owner, np.int16),
            "city_id": _grid_to_b64(world.city_id, np.int32),
            "infrastructure": _grid_to_b64(world.infra, np.uint64),
            "status": {
                str(pid): _b64(pack_status(grid))
                for pid, grid in sorted(world.status.items())
            },
        },
        "units": [state.units[k].to_dict() for k in sorted(state.units)],
        "cities": [state.cities[k].to_dict() for k in sorted(state.cities)],
        "players": [state.players[k].to_dict() for k in sorted(state.players)],
        "negotiations": {
            f"{a}:{b}": dict(sess) for (a, b), sess in sorted(state.negotiations.items())
        },
    }
    if include_events:
        doc["events"] = list(state.events)
    return doc


def validate_state(state: GameState) -> None:
    """Check registry closure and basic invariants; raise StateError."""
    world = state.world
    for unit in state.units.values():
        if unit.owner not in state.players:
            raise StateError(f"unit {unit.id} owner {unit.owner} unknown")
        if not world.in_bounds(unit.x, unit.y):
            raise StateError(f"unit {unit.id} off map")
        if unit.home_city is not None and unit.home_city not in state.cities:
            raise StateError(f"unit {unit.id} home city {unit.home_city} unknown")
        if unit.transported_by is not None:
            carrier = state.units.get(unit.transported_by)
            if carrier is None:
                raise StateError(f"unit {unit.id} transporter missing")
            if (carrier.x, carrier.y) != (unit.x, unit.y):
                raise StateError(f"unit {unit.id} not at transporter position")
        if unit.id not in world.units_at(unit.x, unit.y):
            raise StateError(f"unit {unit.id} missing from tile index")
    for city in state.cities.values():
        if city.owner not in state.players:
            raise StateError(f"city {city.id} owner unknown")
        if int(world.city_id[city.x, city.y]) != city.id:
            raise StateError(f"city {city.id} grid cross-reference broken")
        if len(city.worked) + sum(city.specialists.values()) != city.size:
            raise StateError(f"city {city.id} workforce does not sum to size")
    for (x, y), stack in world.unit_stacks.items():
        for uid in stack:
            unit = state.units.get(uid)
            if unit is None or (unit.x, unit.y) != (x, y):
                raise StateError("tile index references missing unit")
    cid_grid = world.city_id
    for x, y in zip(*np.nonzero(cid_grid != NO_CITY)):
        if int(cid_grid[x, y]) not in state.cities:
            raise StateError("city grid references missing city")
    for player in state.players.values():
        if player.rate_luxury + player.rate_science + player.rate_tax != 100:
            raise StateError(f"player {player.id} rates do not sum to 100")
        if not player.is_alive:
            if any(u.owner == player.id for u in state.units.values()):
                raise StateError(f"dead player {player.id} owns units")
            if any(c.owner == player.id for c in state.cities.values()):
                raise StateError(f"dead player {player.id} owns cities")


def state_from_dict(doc: dict) -> GameState:
    if doc.get("format") != SAVE_FORMAT:
        raise StateError("not a game save document")
    if doc.get("version") != SAVE_VERSION:
        raise StateError(f"unsupported save version {doc.get('version')}")
    ruleset = ruleset_from_dict(doc["ruleset"])
    config = GameConfig.from_dict(doc["config"])
    m = doc["map"]
    world = WorldMap(m["width"], m["height"])
    world.terrain = _grid_from_b64(m["terrain"], np.int8, world.width, world.height)
    world.tile_owner = _grid_from_b64(m["tile_owner"], np.int16, world.width, world.height)
    world.city_id = _grid_from_b64(m["city_id"], np.int32, world.width, world.height)
    world.infra = _grid_from_b64(m["infrastructure"], np.uint64, world.width, world.height)
    for pid, packed in m.get("status", {}).items():
        world.status[int(pid)] = unpack_status(_unb64(packed), world.width, world.height)

    state = GameState(
        ruleset=ruleset,
        config=config,
        world=world,
        turn=doc["turn"],
        current_player=doc["current_player"],
        rng=GameRng.from_state(doc["rng"]),
        events=[dict(e) for e in doc.get("events", [])],
        next_unit_id=doc["next_unit_id"],
        next_city_id=doc["next_city_id"],
        next_player_id=doc["next_player_id"],
    )
    for pd in doc["players"]:
        player = Player.from_dict(pd)
        state.players[player.id] = player
    for ud in doc["units"]:
        place_unit(state, Unit.from_dict(ud))
    for cd in doc["cities"]:
        city = City.from_dict(cd)
        state.cities[city.id] = city
    for key, sess in doc.get("negotiations", {}).items():
        a, b = key.split(":")
        state.negotiations[(int(a), int(b))] = {
            "initiator": sess["initiator"],
            "responder": sess["responder"],
            "clauses": [list(c) for c in sess["clauses"]],
            "accepted": list(sess["accepted"]),
        }
    validate_state(state)
    return state


def snapshot(state: GameState) -> dict:
    """Deep-frozen serializable view of the state (JSON round-trip copy)."""
    return json.loads(json.dumps(state_to_dict(state)))


def restore(snap: dict) -> GameState:
    return state_from_dict(snap)


def save_state(state: GameState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"))


def load_state(text: str) -> GameState:
    return state_from_dict(json.loads(text))


def state_hash(state: GameState) -> str:
    """Hash of everything that affects future play (event log excluded)."""
    doc = state_to_dict(state, include_events=False)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
