"""Per-player score vectors, weighted aggregate score, and reports.

The 16 score dimensions are derived from the live registries plus the
event-backed counters maintained by the engine. Eliminated players keep
the vector frozen at the moment of elimination.

Stand-in definitions, both configurable nowhere else: "economics" is
gold output per turn and "culture" is wonders owned x 10 plus happy
citizens.
"""

from __future__ import annotations

from .world import FAT_CROSS_OFFSETS, GameState

SCORE_KEYS = (
    "population", "economics", "production", "cities", "researched_techs",
    "military_units", "wonders", "research_speed", "land_area", "settled_area",
    "gold", "units_built", "units_killed", "units_lost", "units_used", "culture",
)

DEFAULT_WEIGHTS = {
    "population": 1.0,
    "researched_techs": 2.0,
    "wonders": 5.0,
    "units_built": 0.5,
    "units_killed": 0.5,
    "culture": 1.0,
}

SPACESHIP_BONUS = 100.0

# Row layout of the per-turn report file: identifiers, the 16 dimensions
# in SCORE_KEYS order, then the weighted aggregate.
REPORT_COLUMNS = ("turn", "player") + SCORE_KEYS + ("aggregate",)


def spaceship_complete(state: GameState, player_id: int) -> bool:
    """True when the player owns every building in the victory chain."""
    chain = state.ruleset.spaceship_buildings
    if not chain:
        return False
    owned = set()
    for city in state.cities.values():
        if city.owner == player_id:
            owned.update(city.buildings)
    return all(b in owned for b in chain)


def score_vector(state: GameState, player_id: int) -> list:
    """The 16-dimensional score vector, ordered as SCORE_KEYS."""
    player = state.players[player_id]
    if not player.is_alive and player.frozen_score is not None:
        return list(player.frozen_score)

    own_cities = [c for c in state.cities.values() if c.owner == player_id]
    own_units = [u for u in state.units.values() if u.owner == player_id]
    wonder_count = sum(
        1
        for c in own_cities
        for b in c.buildings
        if state.ruleset.building_defs[b].is_wonder
    )
    settled = set()
    for city in own_cities:
        for dx, dy in FAT_CROSS_OFFSETS:
            x, y = city.x + dx, city.y + dy
            if state.world.in_bounds(x, y):
                settled.add((x, y))
    values = {
        "population": sum(c.size for c in own_cities),
        "economics": sum(c.output_gold for c in own_cities),
        "production": sum(c.output_shield for c in own_cities),
        "cities": len(own_cities),
        "researched_techs": len(player.researched),
        "military_units": sum(
            1 for u in own_units if state.ruleset.unit_defs[u.type].is_military
        ),
        "wonders": wonder_count,
        "research_speed": sum(c.output_bulbs for c in own_cities),
        "land_area": int((state.world.tile_owner == player_id).sum()),
        "settled_area": len(settled),
        "gold": player.gold,
        "units_built": player.counters["units_built"],
        "units_killed": player.counters["units_killed"],
        "units_lost": player.counters["units_lost"],
        "units_used": player.counters["units_used"],
        "culture": wonder_count * 10 + sum(c.happy for c in own_cities),
    }
    return [values[k] for k in SCORE_KEYS]


def aggregate(vector, weights: dict | None = None,
              spaceship_achieved: bool = False) -> float:
    """Weighted sum over the vector plus the spaceship bonus if flagged."""
    if weights is None:
        weights = DEFAULT_WEIGHTS
    for key, w in weights.items():
        if key not in SCORE_KEYS:
            raise ValueError(f"unknown score dimension {key!r}")
        if w < 0:
            raise ValueError(f"negative weight for {key!r}")
    total = sum(weights.get(k, 0.0) * v for k, v in zip(SCORE_KEYS, vector))
    if spaceship_achieved:
        total += SPACESHIP_BONUS
    return total


def aggregate_score(state: GameState, player_id: int, weights: dict | None = None) -> float:
    """Aggregate of the player's current vector, spaceship included."""
    return aggregate(score_vector(state, player_id), weights,
                     spaceship_complete(state, player_id))


def unit_ledger_balanced(state: GameState, player_id: int) -> bool:
    """built - lost - used must equal the player's live unit count."""
    c = state.players[player_id].counters
    alive = sum(1 for u in state.units.values() if u.owner == player_id)
    return c["units_built"] - c["units_lost"] - c["units_used"] == alive


def report_row(state: GameState, player_id: int,
               weights: dict | None = None) -> list:
    """One report-file row, laid out per REPORT_COLUMNS."""
    return ([state.turn, player_id] + score_vector(state, player_id)
            + [aggregate_score(state, player_id, weights)])


def report(state: GameState, weights: dict | None = None) -> str:
    """Plain-text end-of-game metrics table, one row per player."""
    used = DEFAULT_WEIGHTS if weights is None else weights
    lines = ["weights: " + " ".join(
        f"{k}={used[k]:g}" for k in SCORE_KEYS if k in used
    ) + f" spaceship_bonus={SPACESHIP_BONUS:g}"]
    header = ["player", "alive", "score"] + list(SCORE_KEYS)
    lines.append("  ".join(header))
    for pid in sorted(state.players):
        player = state.players[pid]
        vector = score_vector(state, pid)
        row = [str(pid), "yes" if player.is_alive else "no",
               f"{aggregate_score(state, pid, weights):.1f}"]
        row += [f"{v:g}" for v in vector]
        lines.append("  ".join(row))
    return "\n".join(lines)
