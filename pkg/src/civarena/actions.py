"""Action catalog: key grammar, direction numbering, candidate enumeration.

An action is a triplet (actor_type, actor_id, action_key). Keys follow
the grammar `name` or `name_param[_param...]` where params are decimal
integers or fixed words. Direction parameters number the eight
neighboring tiles counterclockwise starting north:

    1=north, 2=northwest, 3=west, 4=southwest,
    5=south, 6=southeast, 7=east, 8=northeast
"""

from __future__ import annotations

from .ruleset import SPECIALIST_KINDS, Ruleset
from .world import WORK_OFFSETS, GameState

ACTOR_TYPES = ("unit", "city", "government", "technology", "diplomacy")

DIRECTIONS = {
    1: (0, 1),
    2: (-1, 1),
    3: (-1, 0),
    4: (-1, -1),
    5: (0, -1),
    6: (1, -1),
    7: (1, 0),
    8: (1, 1),
}
DIRECTION_NAMES = {
    1: "North", 2: "Northwest", 3: "West", 4: "Southwest",
    5: "South", 6: "Southeast", 7: "East", 8: "Northeast",
}

# Unit actions that take a direction parameter, in catalog order.
UNIT_DIRECTIONAL = (
    "goto", "attack", "conquer_city", "enter_hut", "bribe",
    "sabotage_city", "steal_tech", "investigate", "establish_embassy",
    "sell_goods", "establish_trade_route", "embark", "disembark",
)

# Parameterless unit actions, in catalog order.
UNIT_SINGLE = (
    "fortify", "build_city", "join_city",
    "mine", "irrigate", "build_road", "build_railroad",
    "plant", "cultivate", "transform",
    "build_fortress", "build_airbase", "pillage",
    "board", "deboard", "unload",
    "upgrade", "disband", "set_homecity", "keep_activity",
)

UNIT_ACTION_KEYS = tuple(
    f"goto_{d}" for d in range(1, 9)
) + UNIT_SINGLE[:3] + tuple(
    key
    for family in UNIT_DIRECTIONAL[1:]
    for key in (f"{family}_{d}" for d in range(1, 9))
) + UNIT_SINGLE[3:]

GOLD_CLAUSE_AMOUNTS = (25, 50, 100, 200, 400)
BASIC_CLAUSE_KINDS = ("ceasefire", "armistice", "peace", "alliance", "embassy", "vision")

TRANSFORM_RESULT = {
    "Swamp": "Grassland",
    "Jungle": "Plains",
    "Desert": "Plains",
    "Tundra": "Plains",
    "Glacier": "Tundra",
    "Mountains": "Hills",
    "Hills": "Plains",
    "Forest": "Grassland",
}


def format_offset_key(prefix: str, dx: int, dy: int) -> str:
    return f"{prefix}_{dx}_{dy}"


def city_action_keys(ruleset: Ruleset) -> tuple:
    """Full city action catalog for a ruleset, in fixed order."""
    keys = ["buy"]
    keys += [format_offset_key("work", dx, dy) for dx, dy in WORK_OFFSETS]
    keys += [format_offset_key("unwork", dx, dy) for dx, dy in WORK_OFFSETS]
    keys += [f"sell_{b}" for b in range(len(ruleset.building_defs))]
    keys += [f"produce_unit_{u}" for u in range(len(ruleset.unit_defs))]
    keys += [f"produce_building_{b}" for b in range(len(ruleset.building_defs))]
    keys += [
        f"change_specialist_{a}_{b}"
        for a in SPECIALIST_KINDS
        for b in SPECIALIST_KINDS
        if a != b
    ]
    return tuple(keys)


def rate_combinations() -> tuple:
    """All (luxury, science, tax) decades summing to 100, fixed order."""
    combos = []
    for lux in range(0, 101, 10):
        for sci in range(0, 101 - lux, 10):
            combos.append((lux, sci, 100 - lux - sci))
    return tuple(combos)


def government_action_keys(ruleset: Ruleset) -> tuple:
    keys = [f"revolution_{g}" for g in range(len(ruleset.government_defs))]
    keys += [f"set_rates_{l}_{s}_{t}" for l, s, t in rate_combinations()]
    return tuple(keys)


def technology_action_keys(ruleset: Ruleset) -> tuple:
    keys = [f"research_{t}" for t in range(len(ruleset.tech_defs))]
    keys += [f"tech_goal_{t}" for t in range(len(ruleset.tech_defs))]
    return tuple(keys)


def diplomacy_action_keys(state: GameState, player: int) -> tuple:
    """Candidate diplomacy keys against the current live registries."""
    me = state.players[player]
    keys = []
    others = [p for p in sorted(state.players) if p != player and state.players[p].is_alive]
    for pid in others:
        keys.append(f"start_negotiation_{pid}")
        keys.append(f"cancel_negotiation_{pid}")
        keys.append(f"accept_treaty_{pid}")
        keys.append(f"cancel_treaty_{pid}")
        keys.append(f"cancel_vision_{pid}")
        for kind in BASIC_CLAUSE_KINDS:
            keys.append(f"basic_clause_{pid}_{kind}")
        for giver in (player, pid):
            techs = state.players[giver].researched
            for tid in sorted(techs):
                keys.append(f"trade_tech_{pid}_{giver}_{tid}")
            for amount in GOLD_CLAUSE_AMOUNTS:
                keys.append(f"trade_gold_{pid}_{giver}_{amount}")
            for cid in sorted(state.cities):
                if state.cities[cid].owner == giver:
                    keys.append(f"trade_city_{pid}_{giver}_{cid}")
        session = find_session(state, player, pid)
        if session is not None:
            for idx in range(len(session["clauses"])):
                keys.append(f"remove_clause_{pid}_{idx}")
    return tuple(keys)


def find_session(state: GameState, a: int, b: int):
    """The open negotiation between a and b in either direction, if any."""
    return state.negotiations.get((a, b)) or state.negotiations.get((b, a))


class KeyParseError(ValueError):
    pass


def split_key(key: str, prefixes) -> tuple:
    """Match key against known prefixes; return (prefix, param strings)."""
    for prefix in sorted(prefixes, key=len, reverse=True):
        if key == prefix:
            return prefix, ()
        if key.startswith(prefix + "_"):
            rest = key[len(prefix) + 1:]
            return prefix, tuple(rest.split("_"))
    raise KeyParseError(f"unknown action key: {key}")


UNIT_PREFIXES = UNIT_SINGLE + UNIT_DIRECTIONAL
CITY_PREFIXES = ("buy", "work", "unwork", "sell", "produce_unit",
                 "produce_building", "change_specialist")
GOVERNMENT_PREFIXES = ("revolution", "set_rates")
TECHNOLOGY_PREFIXES = ("research", "tech_goal")
DIPLOMACY_PREFIXES = (
    "start_negotiation", "cancel_negotiation", "accept_treaty", "cancel_treaty",
    "cancel_vision", "basic_clause", "trade_tech", "trade_gold", "trade_city",
    "remove_clause",
)

PREFIXES_BY_ACTOR = {
    "unit": UNIT_PREFIXES,
    "city": CITY_PREFIXES,
    "government": GOVERNMENT_PREFIXES,
    "technology": TECHNOLOGY_PREFIXES,
    "diplomacy": DIPLOMACY_PREFIXES,
}
