"""Mini-game generation, scoring, and adjudication.

Ten scenario families (ids 1..14) cover development, battle, and
diplomacy skills on small maps. Each generated instance freezes a
complete start state plus everything needed to judge it afterwards:
a turn limit, victory parameters, difficulty statistics, and a record
of which setup dimensions were randomized. Generation, scoring, and
victory checks are pure functions of (ruleset, seed), so batches can
be produced in parallel and replayed bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from . import engine
from .engine import tile_yield
from .rng import GameRng, derive_seed
from .ruleset import Ruleset
from .world import (
    FAT_CROSS_OFFSETS,
    GameConfig,
    GameState,
    Player,
    WorldMap,
    refresh_all_visibility,
    restore,
    snapshot,
    spawn_unit,
)

FILE_FORMAT = "civarena-minigame"
FILE_VERSION = 1

DIFFICULTIES = ("easy", "normal", "hard")

GAME_NAMES = {
    1: "SettlerBuildCity",
    2: "WorkerBuildInfra",
    3: "CityTileWonder",
    4: "TransBuildCity",
    5: "LandBattleAncient",
    6: "LandBattleMedieval",
    7: "LandBattleIndustry",
    8: "LandBattleModern",
    9: "LandBattleInfo",
    10: "LandBattleAttackCity",
    11: "LandBattleDefendCity",
    12: "NavalBattle",
    13: "NavalBattleModern",
    14: "TradeTechs",
}

GAME_CATEGORIES = {gid: "development" for gid in (1, 2, 3, 4)}
GAME_CATEGORIES.update({gid: "battle" for gid in range(5, 14)})
GAME_CATEGORIES[14] = "diplomacy"

BATTLE_IDS = tuple(range(5, 14))
UNIT_BATTLE_IDS = (5, 6, 7, 8, 9, 12, 13)
CITY_BATTLE_IDS = (10, 11)

# Setup dimensions the generator may randomize, per game id.
RANDOMIZED_DIMENSIONS = {
    1: ("terrain_type", "terrain_location", "resource_type",
        "resource_location", "unit_location"),
    2: ("terrain_type", "terrain_location", "resource_type",
        "resource_location", "unit_location", "unit_number",
        "city_location"),
    3: ("terrain_type", "terrain_location", "resource_type",
        "resource_location", "unit_location", "city_location",
        "tech_degree"),
    4: ("terrain_location", "resource_location", "unit_location",
        "city_location"),
    5: ("terrain_type", "terrain_location", "resource_type",
        "resource_location", "unit_type", "unit_location", "unit_number"),
    10: ("terrain_type", "terrain_location", "resource_type",
         "resource_location", "unit_type", "unit_location", "unit_number",
         "city_location"),
    12: ("terrain_type", "terrain_location", "resource_type",
         "resource_location", "unit_location", "unit_number"),
    14: ("tech_degree",),
}
for _gid in (6, 7, 8, 9):
    RANDOMIZED_DIMENSIONS[_gid] = RANDOMIZED_DIMENSIONS[5]
RANDOMIZED_DIMENSIONS[11] = RANDOMIZED_DIMENSIONS[10]
RANDOMIZED_DIMENSIONS[13] = RANDOMIZED_DIMENSIONS[12]

# Difficulty bands. Development (ids 1-2) partitions on the best
# achievable work-area value; battles partition on the enemy/own
# strength ratio; ids 3-4 encode difficulty directly as the turn limit.
DEVELOPMENT_HARD_MAX = 2.5
DEVELOPMENT_NORMAL_MAX = 7.0
BATTLE_BANDS = {"easy": (0.5, 0.9), "normal": (0.9, 1.1), "hard": (1.1, 2.0)}
TURN_LIMIT_LEVELS = {5: "hard", 10: "normal", 15: "easy"}
TURN_LIMIT_BY_LEVEL = {level: turns for turns, level in TURN_LIMIT_LEVELS.items()}

DEFAULT_DEVELOPMENT_TURNS = 20
DEFAULT_BATTLE_TURNS = 30
DEFAULT_DIPLOMACY_TURNS = 20

# Trading opponents by difficulty: a generous partner accepts anything
# that gives it value, a fair one wants at least parity, a shrewd one
# only signs deals that favour it strictly.
NEGOTIATORS = {"easy": "generous", "normal": "fair", "hard": "shrewd"}
NEGOTIATOR_LEVELS = {name: level for level, name in NEGOTIATORS.items()}

GENERATION_ATTEMPTS = 1000
PLACEMENT_SAMPLES = 512
QUANTILE_LEVEL = 0.8
TOP_TILE_COUNT = 6

RESOURCE_KINDS = ("special_food", "special_shield", "special_trade")
WORKER_IMPROVEMENTS = ("road", "irrigation", "mine")

ARENA_SIZE = 16

# Unit pools by era for the land battles (ids 5-9); resolved against the
# ruleset by name, so a pool silently shrinks if a ruleset lacks a type.
LAND_BATTLE_POOLS = {
    5: ("Warriors",),
    6: ("Warriors", "Phalanx"),
    7: ("Phalanx", "Archers"),
    8: ("Archers",),
    9: ("Warriors", "Phalanx", "Archers"),
}
NAVAL_BATTLE_POOLS = {12: ("Frigate",), 13: ("Galley", "Frigate")}

LAND_POOL_LUSH = (("Grassland", 40), ("Plains", 20), ("Forest", 25),
                  ("Hills", 10), ("Mountains", 5))
LAND_POOL_PLAIN = (("Plains", 40), ("Hills", 35), ("Mountains", 15),
                   ("Grassland", 10))
LAND_POOL_BARREN = (("Mountains", 1),)
LAND_POOL_MIXED = (("Grassland", 30), ("Plains", 25), ("Forest", 20),
                   ("Hills", 15), ("Mountains", 10))
DEVELOPMENT_POOLS = {"easy": LAND_POOL_LUSH, "normal": LAND_POOL_PLAIN,
                     "hard": LAND_POOL_BARREN}


class MiniGameError(ValueError):
    """Bad request, unreachable difficulty band, or spec/state mismatch."""


class _Retry(Exception):
    """Internal signal: this sample missed the target, draw again."""


# ---------------------------------------------------------------------------
# Tile scoring primitives


def tile_value(food: int, production: int, trade: int) -> float:
    """Combined worth of one tile's outputs."""
    return 0.4 * food + 0.4 * production + 0.2 * trade


def tile_value_at(state: GameState, x: int, y: int) -> float:
    return tile_value(*tile_yield(state, x, y))


def top_tiles_sum(values, count: int = TOP_TILE_COUNT) -> float:
    """Sum of the `count` largest values (all of them if fewer)."""
    return float(sum(sorted(values, reverse=True)[:count]))


def work_area_value(state: GameState, x: int, y: int) -> float:
    """Top-6 tile value sum over the city work area centered at (x, y)."""
    values = []
    for dx, dy in FAT_CROSS_OFFSETS:
        tx, ty = x + dx, y + dy
        if state.world.in_bounds(tx, ty):
            values.append(tile_value_at(state, tx, ty))
    return top_tiles_sum(values)


def sample_quantile(values, level: float) -> float:
    """Smallest sample v such that at least `level` of the samples are <= v."""
    if not values:
        raise MiniGameError("quantile of an empty sample")
    ordered = sorted(values)
    index = max(0, math.ceil(level * len(ordered)) - 1)
    return ordered[index]


# ---------------------------------------------------------------------------
# Instance container


@dataclass
class MiniGameSpec:
    """One frozen benchmark instance: start state plus adjudication data."""

    game_id: int
    name: str
    category: str
    difficulty: str
    seed: int
    player: int
    opponent: int | None
    opponent_ai: str | None
    tau_max: int
    victory_params: dict
    randomized: tuple
    stats: dict
    snapshot: dict

    def __post_init__(self):
        if self.game_id not in GAME_NAMES:
            raise MiniGameError(f"unknown game id {self.game_id}")
        if self.difficulty not in DIFFICULTIES:
            raise MiniGameError(f"unknown difficulty {self.difficulty!r}")
        if self.tau_max < 1:
            raise MiniGameError("turn limit must be at least 1")
        allowed = set(RANDOMIZED_DIMENSIONS[self.game_id])
        extra = set(self.randomized) - allowed
        if extra:
            raise MiniGameError(f"dimensions {sorted(extra)} are not "
                                f"randomizable for game {self.game_id}")

    @property
    def instance_tag(self) -> str:
        return f"minigame:{self.game_id}:{self.difficulty}:{self.seed}"

    def start_state(self) -> GameState:
        """A fresh playable copy of the instance's initial state."""
        return restore(self.snapshot)

    def to_dict(self) -> dict:
        return {
            "format": FILE_FORMAT,
            "version": FILE_VERSION,
            "game_id": self.game_id,
            "name": self.name,
            "category": self.category,
            "difficulty": self.difficulty,
            "seed": self.seed,
            "player": self.player,
            "opponent": self.opponent,
            "opponent_ai": self.opponent_ai,
            "tau_max": self.tau_max,
            "victory_params": self.victory_params,
            "randomized": list(self.randomized),
            "stats": self.stats,
            "snapshot": self.snapshot,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MiniGameSpec":
        if doc.get("format") != FILE_FORMAT:
            raise MiniGameError("not a mini-game instance document")
        if doc.get("version") != FILE_VERSION:
            raise MiniGameError(f"unsupported version {doc.get('version')}")
        return cls(
            game_id=doc["game_id"],
            name=doc["name"],
            category=doc["category"],
            difficulty=doc["difficulty"],
            seed=doc["seed"],
            player=doc["player"],
            opponent=doc["opponent"],
            opponent_ai=doc.get("opponent_ai"),
            tau_max=doc["tau_max"],
            victory_params=dict(doc["victory_params"]),
            randomized=tuple(doc["randomized"]),
            stats=dict(doc["stats"]),
            snapshot=doc["snapshot"],
        )


def save_spec(spec: MiniGameSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), sort_keys=True,
                                     separators=(",", ":")) + "\n")


def load_spec(path) -> MiniGameSpec:
    return MiniGameSpec.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Scoring and adjudication


def _check_origin(state: GameState, spec: MiniGameSpec) -> None:
    if state.config.instance != spec.instance_tag:
        raise MiniGameError("state does not belong to this mini-game instance")


def _units_of(state: GameState, player_id: int) -> list:
    return [u for u in state.units.values() if u.owner == player_id]


def _cities_of(state: GameState, player_id: int) -> list:
    return sorted((c for c in state.cities.values() if c.owner == player_id),
                  key=lambda c: c.id)


def _wonder_turns(state: GameState, spec: MiniGameSpec) -> int:
    """Turns still needed to finish the target wonder (0 once built)."""
    wonder = spec.victory_params["wonder"]
    for city in _cities_of(state, spec.player):
        if wonder in city.buildings:
            return 0
    city = state.cities.get(spec.victory_params["city"])
    if city is None or city.owner != spec.player:
        return engine.TURNS_TO_COMPLETE_CAP
    if city.production_kind == "building" and city.production_value == wonder:
        return engine.turns_to_complete(state, city)
    return engine.TURNS_TO_COMPLETE_CAP


def _techs_gained_by_trade(state: GameState, player_id: int) -> int:
    return sum(1 for e in state.events
               if e["kind"] == "tech_traded" and e["to_player"] == player_id)


def score(state: GameState, spec: MiniGameSpec) -> float:
    """The instance's scalar score on this state."""
    _check_origin(state, spec)
    gid = spec.game_id
    if gid == 1:
        cities = _cities_of(state, spec.player)
        if not cities:
            return 0.0
        first = cities[0]
        return work_area_value(state, first.x, first.y)
    if gid == 2:
        return float(sum(tile_value_at(state, c.x, c.y)
                         for c in _cities_of(state, spec.player)))
    if gid == 3:
        return float(spec.tau_max - _wonder_turns(state, spec))
    if gid == 4:
        home = {tuple(t) for t in spec.victory_params["home_tiles"]}
        return float(sum(1 for c in _cities_of(state, spec.player)
                         if (c.x, c.y) not in home))
    if gid in CITY_BATTLE_IDS:
        own = len(_units_of(state, spec.player)) + len(_cities_of(state, spec.player))
        foe = len(_units_of(state, spec.opponent)) + len(_cities_of(state, spec.opponent))
        return float(own - foe)
    if gid == 14:
        return float(_techs_gained_by_trade(state, spec.player))
    return float(len(_units_of(state, spec.player))
                 - len(_units_of(state, spec.opponent)))


def victory(state: GameState, spec: MiniGameSpec) -> str:
    """Adjudicate the state: 'win', 'loss', or 'ongoing'."""
    _check_origin(state, spec)
    gid = spec.game_id
    deadline = state.turn >= spec.tau_max
    if gid in UNIT_BATTLE_IDS:
        # A joint wipe-out counts as a loss: the attacker must survive.
        if not _units_of(state, spec.player):
            return "loss"
        if not _units_of(state, spec.opponent):
            return "win"
        return "loss" if deadline else "ongoing"
    if gid == 10:
        if not _units_of(state, spec.player):
            return "loss"
        if not _cities_of(state, spec.opponent):
            return "win"
        return "loss" if deadline else "ongoing"
    if gid == 11:
        if not _cities_of(state, spec.player):
            return "loss"
        return "win" if deadline else "ongoing"
    if gid == 1:
        threshold = spec.victory_params["threshold"]
        if _cities_of(state, spec.player) and score(state, spec) >= threshold:
            return "win"
        return "loss" if deadline else "ongoing"
    if gid == 2:
        if score(state, spec) >= spec.victory_params["threshold"]:
            return "win"
        return "loss" if deadline else "ongoing"
    if gid == 3:
        if _wonder_turns(state, spec) == 0:
            return "win"
        return "loss" if deadline else "ongoing"
    if gid in (4, 14):
        if score(state, spec) > 0:
            return "win"
        return "loss" if deadline else "ongoing"
    raise MiniGameError(f"unknown game id {gid}")


def stepwise_reward(prev_state: GameState, next_state: GameState,
                    spec: MiniGameSpec) -> float:
    """Per-step reward: the score delta between consecutive states."""
    return score(next_state, spec) - score(prev_state, spec)


def classify_difficulty(spec: MiniGameSpec) -> str:
    """Recover the difficulty level from instance statistics."""
    gid = spec.game_id
    if gid in (1, 2):
        best = spec.stats["rho_best"]
        if best <= DEVELOPMENT_HARD_MAX:
            return "hard"
        if best <= DEVELOPMENT_NORMAL_MAX:
            return "normal"
        return "easy"
    if gid in (3, 4):
        level = TURN_LIMIT_LEVELS.get(spec.tau_max)
        if level is None:
            raise MiniGameError(f"turn limit {spec.tau_max} maps to no level")
        return level
    if gid in BATTLE_IDS:
        ratio = spec.stats["strength_ratio"]
        if not 0.5 < ratio <= 2.0:
            raise MiniGameError(f"strength ratio {ratio:.3f} outside (0.5, 2]")
        if ratio <= 0.9:
            return "easy"
        if ratio <= 1.1:
            return "normal"
        return "hard"
    if gid == 14:
        name = spec.victory_params.get("negotiator")
        if name not in NEGOTIATOR_LEVELS:
            raise MiniGameError(f"unknown negotiator policy {name!r}")
        return NEGOTIATOR_LEVELS[name]
    raise MiniGameError(f"unknown game id {gid}")


# ---------------------------------------------------------------------------
# Generation helpers


def _base_state(ruleset: Ruleset, seed: int, players: int, tau_max: int,
                tag: str) -> GameState:
    config = GameConfig(width=ARENA_SIZE, height=ARENA_SIZE, players=players,
                        seed=seed, max_turns=tau_max, instance=tag)
    state = GameState(ruleset=ruleset, config=config,
                      world=WorldMap(ARENA_SIZE, ARENA_SIZE),
                      rng=GameRng(derive_seed(seed, "game")))
    for pid in range(players):
        state.players[pid] = Player(id=pid, name=f"Player {pid}", team=pid,
                                    nation=pid,
                                    government=ruleset.initial_government)
    state.next_player_id = players
    return state


def _weighted_choice(rng: GameRng, pairs) -> object:
    total = sum(w for _, w in pairs)
    roll = rng.randbelow(total)
    for value, weight in pairs:
        roll -= weight
        if roll < 0:
            return value
    return pairs[-1][0]


def _terrain_pool(ruleset: Ruleset, pairs):
    pool = [(ruleset.terrain_index(name), w) for name, w in pairs]
    pool = [(idx, w) for idx, w in pool if idx is not None]
    if not pool:
        raise MiniGameError("ruleset lacks the terrains this scenario needs")
    return pool


def _fill_terrain(state: GameState, rng: GameRng, pairs) -> None:
    pool = _terrain_pool(state.ruleset, pairs)
    for x in range(state.world.width):
        for y in range(state.world.height):
            state.world.terrain[x, y] = _weighted_choice(rng, pool)


def _is_land(state: GameState, x: int, y: int) -> bool:
    return state.ruleset.terrain_defs[int(state.world.terrain[x, y])].is_land


def _random_tile(state: GameState, rng: GameRng, *, land: bool,
                 avoid=frozenset(), margin: int = 0) -> tuple:
    world = state.world
    for _ in range(400):
        x = margin + rng.randbelow(world.width - 2 * margin)
        y = margin + rng.randbelow(world.height - 2 * margin)
        if (x, y) in avoid:
            continue
        if _is_land(state, x, y) == land:
            return x, y
    raise _Retry("no tile of the wanted kind")


def _scatter_resources(state: GameState, rng: GameRng, count: int,
                       avoid=frozenset(), land: bool | None = True) -> list:
    placed = []
    for _ in range(count):
        for _ in range(40):
            x = rng.randbelow(state.world.width)
            y = rng.randbelow(state.world.height)
            if (x, y) in avoid:
                continue
            if land is not None and _is_land(state, x, y) != land:
                continue
            if any(state.world.has_infra(x, y, k) for k in RESOURCE_KINDS):
                continue
            kind = RESOURCE_KINDS[rng.randbelow(len(RESOURCE_KINDS))]
            state.world.set_infra(x, y, kind)
            placed.append([x, y, kind])
            break
    return placed


def _place_city(state: GameState, player_id: int, x: int, y: int,
                size: int = 1):
    city = engine._found_city(state, state.players[player_id], x, y)
    for _ in range(size - 1):
        city.size += 1
        city.specialists["luxury"] += 1
        engine._auto_assign_citizen(state, city)
    return city


def _set_relations(state: GameState, a: int, b: int, name: str) -> None:
    states = state.ruleset.diplomatic_states
    if name not in states:
        raise MiniGameError(f"ruleset lacks the {name!r} diplomatic state")
    idx = states.index(name)
    state.players[a].relation_mut(b).state = idx
    state.players[b].relation_mut(a).state = idx
    mood = "combat" if name == "War" else "peaceful"
    state.players[a].mood = mood
    state.players[b].mood = mood


def _rho_grid(state: GameState) -> list:
    return [[tile_value_at(state, x, y) for y in range(state.world.height)]
            for x in range(state.world.width)]


def _area_value_from_grid(state: GameState, grid, x: int, y: int) -> float:
    values = []
    for dx, dy in FAT_CROSS_OFFSETS:
        tx, ty = x + dx, y + dy
        if state.world.in_bounds(tx, ty):
            values.append(grid[tx][ty])
    return top_tiles_sum(values)


def _reachable_land(state: GameState, start: tuple, steps: int) -> list:
    """Land tiles reachable by single-tile steps within `steps` moves."""
    seen = {start}
    frontier = [start]
    for _ in range(steps):
        new_frontier = []
        for x, y in frontier:
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nx, ny = x + dx, y + dy
                    if (nx, ny) in seen or not state.world.in_bounds(nx, ny):
                        continue
                    if not _is_land(state, nx, ny):
                        continue
                    seen.add((nx, ny))
                    new_frontier.append((nx, ny))
        if not new_frontier:
            break
        frontier = new_frontier
    return sorted(seen)


def _landmass_tiles(state: GameState, start: tuple) -> list:
    """All land tiles 8-connected to `start`."""
    return _reachable_land(state, start,
                           state.world.width * state.world.height)


def _closed_tech_sample(ruleset: Ruleset, rng: GameRng, count: int) -> set:
    """A random prerequisite-closed set of `count` technologies."""
    chosen = set()
    while len(chosen) < count:
        ready = [t for t in range(len(ruleset.tech_defs))
                 if t not in chosen
                 and all(p in chosen for p in ruleset.tech_defs[t].prerequisites)]
        if not ready:
            break
        chosen.add(ready[rng.randbelow(len(ready))])
    return chosen


def _unit_pool(ruleset: Ruleset, names) -> list:
    pool = [ruleset.unit_index(n) for n in names]
    pool = [i for i in pool if i is not None]
    if not pool:
        raise MiniGameError("ruleset lacks the unit types this scenario needs")
    return pool


def _strength(ruleset: Ruleset, types) -> int:
    return sum(ruleset.unit_defs[t].attack_strength
               + ruleset.unit_defs[t].defense_strength for t in types)


def _compose_armies(ruleset: Ruleset, rng: GameRng, pool_a, pool_b,
                    difficulty: str, randomize_types: bool = True):
    """Two army type-lists whose strength ratio lands in the wanted band."""
    lo, hi = BATTLE_BANDS[difficulty]
    for _ in range(400):
        n_a = 3 + rng.randbelow(4)
        if randomize_types:
            types_a = [pool_a[rng.randbelow(len(pool_a))] for _ in range(n_a)]
        else:
            types_a = [pool_a[i % len(pool_a)] for i in range(n_a)]
        s_a = _strength(ruleset, types_a)
        types_b = []
        s_b = 0
        while s_b <= lo * s_a and len(types_b) < 4 * n_a:
            if randomize_types:
                t = pool_b[rng.randbelow(len(pool_b))]
            else:
                t = pool_b[len(types_b) % len(pool_b)]
            types_b.append(t)
            s_b += _strength(ruleset, [t])
        ratio = s_b / s_a
        if lo < ratio <= hi:
            return types_a, types_b, ratio
    raise _Retry("no army composition lands in the requested band")


def _place_army(state: GameState, rng: GameRng, player_id: int, types,
                anchor: tuple, *, land: bool = True) -> None:
    for t in types:
        for _ in range(80):
            x = anchor[0] + rng.randbelow(5) - 2
            y = anchor[1] + rng.randbelow(5) - 2
            x = min(max(x, 0), state.world.width - 1)
            y = min(max(y, 0), state.world.height - 1)
            if _is_land(state, x, y) != land:
                continue
            spawn_unit(state, player_id, t, x, y)
            break
        else:
            raise _Retry("no room to deploy a unit near its anchor")


def _battle_anchors(rng: GameRng) -> tuple:
    ax = 2 + rng.randbelow(4)
    bx = 10 + rng.randbelow(4)
    ay = 3 + rng.randbelow(10)
    by = 3 + rng.randbelow(10)
    return (ax, ay), (bx, by)


def _finish_spec(state: GameState, *, game_id, difficulty, seed, player,
                 opponent, opponent_ai, tau_max, victory_params, stats):
    for city in sorted(state.cities.values(), key=lambda c: c.id):
        engine.refresh_city_economy(state, city)
        if city.surplus_food < 0:
            # A city starving on its best assignment would shrink away on
            # its own and decide the game without the player acting.
            raise _Retry("a city starves as founded")
        if city.state == "disorder":
            raise _Retry("a city opens in disorder")
    refresh_all_visibility(state)
    return MiniGameSpec(
        game_id=game_id,
        name=GAME_NAMES[game_id],
        category=GAME_CATEGORIES[game_id],
        difficulty=difficulty,
        seed=seed,
        player=player,
        opponent=opponent,
        opponent_ai=opponent_ai,
        tau_max=tau_max,
        victory_params=victory_params,
        randomized=RANDOMIZED_DIMENSIONS[game_id],
        stats=stats,
        snapshot=snapshot(state),
    )


# ---------------------------------------------------------------------------
# Per-id builders


def _tag(game_id: int, difficulty: str, seed: int) -> str:
    return f"minigame:{game_id}:{difficulty}:{seed}"


def _build_settler_city(ruleset, difficulty, seed, rng):
    tau_max = DEFAULT_DEVELOPMENT_TURNS
    state = _base_state(ruleset, seed, 1, tau_max, _tag(1, difficulty, seed))
    _fill_terrain(state, rng, DEVELOPMENT_POOLS[difficulty])
    if difficulty == "hard":
        resources = []
    elif difficulty == "normal":
        resources = _scatter_resources(state, rng, rng.randbelow(3))
    else:
        resources = _scatter_resources(state, rng, 8 + rng.randbelow(9))
    sx, sy = _random_tile(state, rng, land=True)
    settler = ruleset.unit_index("Settlers")
    if settler is None:
        raise MiniGameError("ruleset has no settler unit")
    spawn_unit(state, 0, settler, sx, sy)

    # One turn is reserved for founding, the rest for walking.
    reach = _reachable_land(state, (sx, sy), tau_max - 1)
    grid = _rho_grid(state)
    area = {t: _area_value_from_grid(state, grid, t[0], t[1]) for t in reach}
    rho_best = max(area.values())
    samples = [area[reach[rng.randbelow(len(reach))]]
               for _ in range(PLACEMENT_SAMPLES)]
    threshold = sample_quantile(samples, QUANTILE_LEVEL)
    return _finish_spec(
        state, game_id=1, difficulty=difficulty, seed=seed, player=0,
        opponent=None, opponent_ai=None, tau_max=tau_max,
        victory_params={"threshold": threshold},
        stats={"rho_best": rho_best, "resources": len(resources)},
    )


def _improved_center_value(state: GameState, x: int, y: int) -> float:
    """Center tile value with every worker improvement in place."""
    original = int(state.world.infra[x, y])
    for kind in WORKER_IMPROVEMENTS:
        state.world.set_infra(x, y, kind)
    value = tile_value_at(state, x, y)
    state.world.infra[x, y] = original
    return value


def _value_with_added(state, x, y, kinds) -> float:
    original = int(state.world.infra[x, y])
    for kind in kinds:
        state.world.set_infra(x, y, kind)
    value = tile_value_at(state, x, y)
    state.world.infra[x, y] = original
    return value


def _build_worker_infra(ruleset, difficulty, seed, rng):
    tau_max = DEFAULT_DEVELOPMENT_TURNS
    state = _base_state(ruleset, seed, 1, tau_max, _tag(2, difficulty, seed))
    pool = LAND_POOL_MIXED if difficulty == "hard" else DEVELOPMENT_POOLS[difficulty]
    _fill_terrain(state, rng, pool)
    worker = ruleset.unit_index("Workers")
    if worker is None:
        raise MiniGameError("ruleset has no worker unit")

    city_count = {"hard": 1, "normal": 2, "easy": 4}[difficulty]
    good_terrain = {ruleset.terrain_index(n)
                    for n in ("Grassland", "Plains", "Forest")}
    centers = []
    for _ in range(city_count):
        for _ in range(200):
            x, y = _random_tile(state, rng, land=True, margin=2)
            if any(max(abs(x - cx), abs(y - cy)) < 3 for cx, cy in centers):
                continue
            if difficulty == "easy" and int(state.world.terrain[x, y]) not in good_terrain:
                continue
            centers.append((x, y))
            break
        else:
            raise _Retry("could not spread the cities out")
    resources = _scatter_resources(state, rng, 2 + rng.randbelow(3),
                                   avoid=frozenset(centers))
    cities = [_place_city(state, 0, x, y, size=1 + rng.randbelow(2))
              for x, y in centers]
    workers = [spawn_unit(state, 0, worker, *_random_tile(state, rng, land=True))
               for _ in range(1 + rng.randbelow(3))]

    initial = sum(tile_value_at(state, c.x, c.y) for c in cities)
    rho_best = sum(_improved_center_value(state, c.x, c.y) for c in cities)
    move_points = ruleset.unit_defs[worker].move_points
    budget = tau_max * move_points
    samples = []
    for _ in range(PLACEMENT_SAMPLES):
        added = {c.id: set() for c in cities}
        for w in workers:
            city = cities[rng.randbelow(len(cities))]
            travel = max(abs(w.x - city.x), abs(w.y - city.y))
            room = budget - travel
            missing = [k for k in WORKER_IMPROVEMENTS
                       if not state.world.has_infra(city.x, city.y, k)
                       and k not in added[city.id]]
            limit = min(len(missing), max(0, room))
            picks = rng.randbelow(limit + 1)
            for _ in range(picks):
                added[city.id].add(missing.pop(rng.randbelow(len(missing))))
        total = sum(_value_with_added(state, c.x, c.y, sorted(added[c.id]))
                    for c in cities)
        samples.append(total)
    threshold = sample_quantile(samples, QUANTILE_LEVEL)
    if threshold <= initial + 1e-9:
        raise _Retry("threshold would be met before any work is done")
    return _finish_spec(
        state, game_id=2, difficulty=difficulty, seed=seed, player=0,
        opponent=None, opponent_ai=None, tau_max=tau_max,
        victory_params={"threshold": threshold},
        stats={"rho_best": rho_best, "initial": initial,
               "workers": len(workers), "cities": len(cities),
               "resources": len(resources)},
    )


def _build_city_wonder(ruleset, difficulty, seed, rng):
    tau_max = TURN_LIMIT_BY_LEVEL[difficulty]
    state = _base_state(ruleset, seed, 1, tau_max, _tag(3, difficulty, seed))
    _fill_terrain(state, rng, LAND_POOL_MIXED)
    _scatter_resources(state, rng, 2 + rng.randbelow(5))
    player = state.players[0]
    player.researched = _closed_tech_sample(
        ruleset, rng, rng.randbelow(len(ruleset.tech_defs) + 1))

    wonders = [i for i, b in enumerate(ruleset.building_defs)
               if b.is_wonder and (b.required_tech is None
                                   or b.required_tech in player.researched)]
    if not wonders:
        raise _Retry("no wonder is buildable with the sampled technologies")
    wonder = wonders[rng.randbelow(len(wonders))]

    cx, cy = _random_tile(state, rng, land=True, margin=2)
    city = _place_city(state, 0, cx, cy, size=3 + rng.randbelow(2))
    city.production_kind = "building"
    city.production_value = wonder
    worker = ruleset.unit_index("Workers")
    if worker is not None:
        for _ in range(1 + rng.randbelow(2)):
            wx = min(max(cx + rng.randbelow(7) - 3, 0), state.world.width - 1)
            wy = min(max(cy + rng.randbelow(7) - 3, 0), state.world.height - 1)
            if _is_land(state, wx, wy):
                spawn_unit(state, 0, worker, wx, wy)

    engine.refresh_city_economy(state, city)
    if city.surplus_shield <= 0:
        raise _Retry("the city cannot produce any shields as founded")
    surplus = city.surplus_shield
    cost = ruleset.building_defs[wonder].cost
    stock = max(0, cost - surplus * (tau_max - 1)) + rng.randbelow(3)
    city.shield_stock = min(stock, cost - 1)
    engine.refresh_city_economy(state, city)
    return _finish_spec(
        state, game_id=3, difficulty=difficulty, seed=seed, player=0,
        opponent=None, opponent_ai=None, tau_max=tau_max,
        victory_params={"wonder": wonder, "city": city.id},
        stats={"initial_turns": engine.turns_to_complete(state, city),
               "techs": len(player.researched)},
    )


def _build_trans_city(ruleset, difficulty, seed, rng):
    tau_max = TURN_LIMIT_BY_LEVEL[difficulty]
    state = _base_state(ruleset, seed, 1, tau_max, _tag(4, difficulty, seed))
    grass = ruleset.terrain_index("Grassland")
    ocean = ruleset.terrain_index("Ocean")
    if grass is None or ocean is None:
        raise MiniGameError("scenario needs Grassland and Ocean terrains")
    state.world.terrain[:, :] = grass
    channel_x = 6 + rng.randbelow(3)
    width = 1 + rng.randbelow(2)
    for x in range(channel_x, channel_x + width):
        state.world.terrain[x, :] = ocean

    settler = ruleset.unit_index("Settlers")
    carrier = next((i for i, u in enumerate(ruleset.unit_defs)
                    if u.is_naval and u.can_transport), None)
    if settler is None or carrier is None:
        raise MiniGameError("scenario needs a settler and a naval transport")
    sy = 2 + rng.randbelow(state.world.height - 4)
    spawn_unit(state, 0, settler, channel_x - 1, sy)
    spawn_unit(state, 0, carrier, channel_x, sy)
    _scatter_resources(state, rng, rng.randbelow(5))

    home_tiles = _landmass_tiles(state, (channel_x - 1, sy))
    return _finish_spec(
        state, game_id=4, difficulty=difficulty, seed=seed, player=0,
        opponent=None, opponent_ai=None, tau_max=tau_max,
        victory_params={"home_tiles": [list(t) for t in home_tiles]},
        stats={"channel_width": width},
    )


def _build_land_battle(game_id):
    def build(ruleset, difficulty, seed, rng):
        tau_max = DEFAULT_BATTLE_TURNS
        state = _base_state(ruleset, seed, 2, tau_max,
                            _tag(game_id, difficulty, seed))
        _fill_terrain(state, rng, LAND_POOL_MIXED)
        _scatter_resources(state, rng, rng.randbelow(5))
        pool = _unit_pool(ruleset, LAND_BATTLE_POOLS[game_id])
        types_a, types_b, ratio = _compose_armies(ruleset, rng, pool, pool,
                                                  difficulty)
        anchor_a, anchor_b = _battle_anchors(rng)
        _place_army(state, rng, 0, types_a, anchor_a)
        _place_army(state, rng, 1, types_b, anchor_b)
        _set_relations(state, 0, 1, "War")
        return _finish_spec(
            state, game_id=game_id, difficulty=difficulty, seed=seed,
            player=0, opponent=1, opponent_ai="aggressor", tau_max=tau_max,
            victory_params={},
            stats={"strength_ratio": ratio,
                   "unit_ratio": len(types_b) / len(types_a),
                   "units_a": len(types_a), "units_b": len(types_b)},
        )
    return build


def _build_attack_city(ruleset, difficulty, seed, rng):
    tau_max = DEFAULT_BATTLE_TURNS
    state = _base_state(ruleset, seed, 2, tau_max, _tag(10, difficulty, seed))
    _fill_terrain(state, rng, LAND_POOL_MIXED)
    _scatter_resources(state, rng, rng.randbelow(5))
    pool = _unit_pool(ruleset, LAND_BATTLE_POOLS[9])
    types_a, types_b, ratio = _compose_armies(ruleset, rng, pool, pool,
                                              difficulty)
    anchor_a, anchor_b = _battle_anchors(rng)
    if not _is_land(state, *anchor_b):
        raise _Retry("city anchor fell on water")
    city = _place_city(state, 1, anchor_b[0], anchor_b[1],
                       size=1 + rng.randbelow(3))
    wonders = [i for i, b in enumerate(ruleset.building_defs) if b.is_wonder]
    if wonders:
        # Lock the garrison size in: a wonder will not finish in 30 turns.
        city.production_kind = "building"
        city.production_value = wonders[0]
    _place_army(state, rng, 0, types_a, anchor_a)
    for t in types_b:
        spawn_unit(state, 1, t, city.x, city.y)
    _set_relations(state, 0, 1, "War")
    return _finish_spec(
        state, game_id=10, difficulty=difficulty, seed=seed, player=0,
        opponent=1, opponent_ai="aggressor", tau_max=tau_max,
        victory_params={},
        stats={"strength_ratio": ratio,
               "unit_ratio": len(types_b) / len(types_a),
               "units_a": len(types_a), "units_b": len(types_b)},
    )


def _build_defend_city(ruleset, difficulty, seed, rng):
    tau_max = DEFAULT_BATTLE_TURNS
    state = _base_state(ruleset, seed, 2, tau_max, _tag(11, difficulty, seed))
    _fill_terrain(state, rng, LAND_POOL_MIXED)
    _scatter_resources(state, rng, rng.randbelow(5))
    pool = _unit_pool(ruleset, LAND_BATTLE_POOLS[9])
    types_a, types_b, ratio = _compose_armies(ruleset, rng, pool, pool,
                                              difficulty)
    anchor_a, anchor_b = _battle_anchors(rng)
    if not _is_land(state, *anchor_a):
        raise _Retry("city anchor fell on water")
    city = _place_city(state, 0, anchor_a[0], anchor_a[1],
                       size=1 + rng.randbelow(3))
    for t in types_a:
        spawn_unit(state, 0, t, city.x, city.y)
    _place_army(state, rng, 1, types_b, anchor_b)
    _set_relations(state, 0, 1, "War")
    return _finish_spec(
        state, game_id=11, difficulty=difficulty, seed=seed, player=0,
        opponent=1, opponent_ai="aggressor", tau_max=tau_max,
        victory_params={},
        stats={"strength_ratio": ratio,
               "unit_ratio": len(types_b) / len(types_a),
               "units_a": len(types_a), "units_b": len(types_b)},
    )


def _build_naval_battle(game_id):
    def build(ruleset, difficulty, seed, rng):
        tau_max = DEFAULT_BATTLE_TURNS
        state = _base_state(ruleset, seed, 2, tau_max,
                            _tag(game_id, difficulty, seed))
        ocean = ruleset.terrain_index("Ocean")
        if ocean is None:
            raise MiniGameError("scenario needs an Ocean terrain")
        state.world.terrain[:, :] = ocean
        land_pool = _terrain_pool(ruleset, LAND_POOL_MIXED)
        for _ in range(1 + rng.randbelow(3)):
            ix = 4 + rng.randbelow(8)
            iy = 4 + rng.randbelow(8)
            for _ in range(1 + rng.randbelow(3)):
                state.world.terrain[ix, iy] = _weighted_choice(rng, land_pool)
                ix = min(max(ix + rng.randbelow(3) - 1, 0), 15)
                iy = min(max(iy + rng.randbelow(3) - 1, 0), 15)
        _scatter_resources(state, rng, rng.randbelow(3), land=None)
        pool = _unit_pool(ruleset, NAVAL_BATTLE_POOLS[game_id])
        types_a, types_b, ratio = _compose_armies(ruleset, rng, pool, pool,
                                                  difficulty,
                                                  randomize_types=False)
        anchor_a, anchor_b = _battle_anchors(rng)
        if _is_land(state, *anchor_a) or _is_land(state, *anchor_b):
            raise _Retry("fleet anchor fell on an island")
        _place_army(state, rng, 0, types_a, anchor_a, land=False)
        _place_army(state, rng, 1, types_b, anchor_b, land=False)
        _set_relations(state, 0, 1, "War")
        return _finish_spec(
            state, game_id=game_id, difficulty=difficulty, seed=seed,
            player=0, opponent=1, opponent_ai="aggressor", tau_max=tau_max,
            victory_params={},
            stats={"strength_ratio": ratio,
                   "unit_ratio": len(types_b) / len(types_a),
                   "units_a": len(types_a), "units_b": len(types_b)},
        )
    return build


def _build_trade_techs(ruleset, difficulty, seed, rng):
    tau_max = DEFAULT_DIPLOMACY_TURNS
    state = _base_state(ruleset, seed, 2, tau_max, _tag(14, difficulty, seed))
    grass = ruleset.terrain_index("Grassland")
    if grass is None:
        raise MiniGameError("scenario needs a Grassland terrain")
    state.world.terrain[:, :] = grass
    _place_city(state, 0, 4, 8, size=2)
    _place_city(state, 1, 11, 8, size=2)
    _set_relations(state, 0, 1, "Peace")

    n = len(ruleset.tech_defs)
    if n < 2:
        raise MiniGameError("scenario needs at least two technologies")
    count_b = 2 + rng.randbelow(max(1, n - 2))
    count_a = rng.randbelow(count_b)
    state.players[1].researched = _closed_tech_sample(ruleset, rng, count_b)
    state.players[0].researched = _closed_tech_sample(ruleset, rng, count_a)
    if not (state.players[1].researched - state.players[0].researched):
        raise _Retry("the partner has nothing new to offer")

    def tech_value(techs):
        return sum(ruleset.tech_defs[t].cost for t in techs)

    negotiator = NEGOTIATORS[difficulty]
    return _finish_spec(
        state, game_id=14, difficulty=difficulty, seed=seed, player=0,
        opponent=1, opponent_ai=f"negotiator_{negotiator}", tau_max=tau_max,
        victory_params={"negotiator": negotiator},
        stats={
            "tech_count_diff": len(state.players[1].researched)
            - len(state.players[0].researched),
            "tech_value_diff": tech_value(state.players[1].researched)
            - tech_value(state.players[0].researched),
        },
    )


_BUILDERS = {
    1: _build_settler_city,
    2: _build_worker_infra,
    3: _build_city_wonder,
    4: _build_trans_city,
    10: _build_attack_city,
    11: _build_defend_city,
    14: _build_trade_techs,
}
for _gid in (5, 6, 7, 8, 9):
    _BUILDERS[_gid] = _build_land_battle(_gid)
for _gid in (12, 13):
    _BUILDERS[_gid] = _build_naval_battle(_gid)


def generate(ruleset: Ruleset, game_id: int, difficulty: str,
             seed: int) -> MiniGameSpec:
    """Build one instance of the requested type, difficulty, and seed."""
    if game_id not in GAME_NAMES:
        raise MiniGameError(f"unknown game id {game_id}")
    if difficulty not in DIFFICULTIES:
        raise MiniGameError(f"unknown difficulty {difficulty!r}")
    rng = GameRng(derive_seed(seed, f"minigame-{game_id}-{difficulty}"))
    builder = _BUILDERS[game_id]
    for _ in range(GENERATION_ATTEMPTS):
        try:
            spec = builder(ruleset, difficulty, seed, rng)
        except _Retry:
            continue
        if classify_difficulty(spec) == difficulty:
            return spec
    raise MiniGameError(
        f"could not generate a {difficulty} instance of game {game_id} "
        f"within {GENERATION_ATTEMPTS} attempts")


def generate_batch(ruleset: Ruleset, game_id: int, difficulty: str,
                   seed: int, count: int) -> list:
    """`count` instances; instance i is generated from seed + i."""
    return [generate(ruleset, game_id, difficulty, seed + i)
            for i in range(count)]
