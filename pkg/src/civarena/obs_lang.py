"""Text observations and a reversible human-readable action grammar.

Each spatial actor (an own unit or city) gets a zoomed-in 5x5 tile view
and a zoomed-out view that condenses the surrounding 15x15 region into
nine aggregated 5x5 blocks. Tile and block keys use relative direction
names with the latitudinal part first ("tile_north_1_east_1"), ordered
by (dy, dx) ascending so serialized output is diffable.

Action names are a bijection over the engine's key catalog: "move
North" is goto_1, "produce unit Warriors" picks the unit by name, and
so on. parse functions invert the mapping exactly and suggest close
catalog entries for near-miss input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

from . import actions as A
from . import engine
from .ruleset import INFRASTRUCTURE, SPECIALIST_KINDS, Ruleset
from .world import FAT_CROSS_OFFSETS, GameState

VIEW_RANGE = 7
ZOOM_IN_HALF = 2
BLOCK = 5

NO_CONTACT_TAG = "No contact"
MYSELF_TAG = "myself"


def _component(value: int, positive: str, negative: str) -> str:
    if value > 0:
        return f"{positive}_{value}"
    if value < 0:
        return f"{negative}_{-value}"
    return ""


def relative_tile_name(dx: int, dy: int) -> str:
    """Name a tile by its offset, east-positive dx and north-positive dy."""
    if abs(dx) > VIEW_RANGE or abs(dy) > VIEW_RANGE:
        raise ValueError(f"offset ({dx}, {dy}) outside the supported range")
    if dx == 0 and dy == 0:
        return "current_tile"
    parts = [p for p in (_component(dy, "north", "south"),
                         _component(dx, "east", "west")) if p]
    return "tile_" + "_".join(parts)


def relative_block_name(bx: int, by: int) -> str:
    """Name one of the nine 5x5 blocks by its offset from the center."""
    if abs(bx) > 1 or abs(by) > 1:
        raise ValueError(f"block offset ({bx}, {by}) outside the 3x3 grid")
    if bx == 0 and by == 0:
        return "current_block"
    parts = [p for p in (_component(by, "north", "south"),
                         _component(bx, "east", "west")) if p]
    return "block_" + "_".join(parts)


_TILE_RE = re.compile(
    r"^tile(?:_(north|south)_(\d+))?(?:_(east|west)_(\d+))?$")


def parse_tile_name(name: str) -> tuple:
    """Invert relative_tile_name back to a (dx, dy) offset."""
    if name == "current_tile":
        return (0, 0)
    m = _TILE_RE.match(name)
    if not m or (m.group(1) is None and m.group(3) is None):
        raise ValueError(f"not a tile name: {name!r}")
    dy = int(m.group(2)) * (1 if m.group(1) == "north" else -1) \
        if m.group(1) else 0
    dx = int(m.group(4)) * (1 if m.group(3) == "east" else -1) \
        if m.group(3) else 0
    return (dx, dy)


# ---------------------------------------------------------------------------
# Action naming


def _phrase(family: str) -> str:
    return "move" if family == "goto" else family.replace("_", " ")


@lru_cache(maxsize=None)
def unit_action_names(ruleset: Ruleset) -> dict:
    """Human name -> engine key for every unit action."""
    names = {}
    for key in A.UNIT_ACTION_KEYS:
        family, params = A.split_key(key, A.UNIT_PREFIXES)
        if params:
            direction = A.DIRECTION_NAMES[int(params[0])]
            names[f"{_phrase(family)} {direction}"] = key
        else:
            names[_phrase(family)] = key
    return names


@lru_cache(maxsize=None)
def city_action_names(ruleset: Ruleset) -> dict:
    names = {}
    for key in A.city_action_keys(ruleset):
        prefix, params = A.split_key(key, A.CITY_PREFIXES)
        if prefix == "buy":
            names["buy"] = key
        elif prefix in ("work", "unwork"):
            dx, dy = int(params[0]), int(params[1])
            names[f"{prefix} {relative_tile_name(dx, dy)}"] = key
        elif prefix == "sell":
            names[f"sell {ruleset.building_defs[int(params[0])].name}"] = key
        elif prefix == "produce_unit":
            names[f"produce unit {ruleset.unit_defs[int(params[0])].name}"] \
                = key
        elif prefix == "produce_building":
            bdef = ruleset.building_defs[int(params[0])]
            names[f"produce building {bdef.name}"] = key
        elif prefix == "change_specialist":
            src, dst = params
            names[f"change specialist {src} to {dst}"] = key
    return names


@lru_cache(maxsize=None)
def government_action_names(ruleset: Ruleset) -> dict:
    names = {}
    for key in A.government_action_keys(ruleset):
        prefix, params = A.split_key(key, A.GOVERNMENT_PREFIXES)
        if prefix == "revolution":
            gdef = ruleset.government_defs[int(params[0])]
            names[f"revolution to {gdef.name}"] = key
        else:
            lux, sci, tax = params
            names[f"set rates luxury {lux} science {sci} tax {tax}"] = key
    return names


@lru_cache(maxsize=None)
def technology_action_names(ruleset: Ruleset) -> dict:
    names = {}
    for key in A.technology_action_keys(ruleset):
        prefix, params = A.split_key(key, A.TECHNOLOGY_PREFIXES)
        tname = ruleset.tech_defs[int(params[0])].name
        if prefix == "research":
            names[f"research {tname}"] = key
        else:
            names[f"set tech goal {tname}"] = key
    return names


def diplomacy_action_name(ruleset: Ruleset, player_id: int, key: str) -> str:
    """Human name for a diplomacy key, from the acting player's side."""
    prefix, params = A.split_key(key, A.DIPLOMACY_PREFIXES)
    pid = int(params[0]) if params else None
    if prefix == "start_negotiation":
        return f"start negotiation with player {pid}"
    if prefix == "cancel_negotiation":
        return f"cancel negotiation with player {pid}"
    if prefix == "accept_treaty":
        return f"accept treaty with player {pid}"
    if prefix == "cancel_treaty":
        return f"cancel treaty with player {pid}"
    if prefix == "cancel_vision":
        return f"cancel shared vision with player {pid}"
    if prefix == "basic_clause":
        return f"propose {params[1]} to player {pid}"
    if prefix == "remove_clause":
        return f"remove clause {params[1]} with player {pid}"
    giver = int(params[1])
    payload = params[2]
    if prefix == "trade_tech":
        tname = ruleset.tech_defs[int(payload)].name
        if giver == player_id:
            return f"offer technology {tname} to player {pid}"
        return f"request technology {tname} from player {pid}"
    if prefix == "trade_gold":
        if giver == player_id:
            return f"offer {payload} gold to player {pid}"
        return f"request {payload} gold from player {pid}"
    if prefix == "trade_city":
        if giver == player_id:
            return f"offer city {payload} to player {pid}"
        return f"request city {payload} from player {pid}"
    raise A.KeyParseError(f"unknown diplomacy key: {key}")


def _tech_id(ruleset: Ruleset, name: str) -> int:
    idx = ruleset.tech_index(name)
    if idx is None:
        raise ValueError(f"unknown technology {name!r}")
    return idx


_DIPLOMACY_PATTERNS = (
    (re.compile(r"^start negotiation with player (\d+)$"),
     lambda rs, me, m: f"start_negotiation_{m.group(1)}"),
    (re.compile(r"^cancel negotiation with player (\d+)$"),
     lambda rs, me, m: f"cancel_negotiation_{m.group(1)}"),
    (re.compile(r"^accept treaty with player (\d+)$"),
     lambda rs, me, m: f"accept_treaty_{m.group(1)}"),
    (re.compile(r"^cancel treaty with player (\d+)$"),
     lambda rs, me, m: f"cancel_treaty_{m.group(1)}"),
    (re.compile(r"^cancel shared vision with player (\d+)$"),
     lambda rs, me, m: f"cancel_vision_{m.group(1)}"),
    (re.compile(r"^propose (\w+) to player (\d+)$"),
     lambda rs, me, m: f"basic_clause_{m.group(2)}_{m.group(1)}"),
    (re.compile(r"^remove clause (\d+) with player (\d+)$"),
     lambda rs, me, m: f"remove_clause_{m.group(2)}_{m.group(1)}"),
    (re.compile(r"^offer technology (.+) to player (\d+)$"),
     lambda rs, me, m:
     f"trade_tech_{m.group(2)}_{me}_{_tech_id(rs, m.group(1))}"),
    (re.compile(r"^request technology (.+) from player (\d+)$"),
     lambda rs, me, m:
     f"trade_tech_{m.group(2)}_{m.group(2)}_{_tech_id(rs, m.group(1))}"),
    (re.compile(r"^offer (\d+) gold to player (\d+)$"),
     lambda rs, me, m: f"trade_gold_{m.group(2)}_{me}_{m.group(1)}"),
    (re.compile(r"^request (\d+) gold from player (\d+)$"),
     lambda rs, me, m: f"trade_gold_{m.group(2)}_{m.group(2)}_{m.group(1)}"),
    (re.compile(r"^offer city (\d+) to player (\d+)$"),
     lambda rs, me, m: f"trade_city_{m.group(2)}_{me}_{m.group(1)}"),
    (re.compile(r"^request city (\d+) from player (\d+)$"),
     lambda rs, me, m: f"trade_city_{m.group(2)}_{m.group(2)}_{m.group(1)}"),
)


class LangParseError(ValueError):
    """Unrecognized action name, with nearby catalog suggestions."""

    def __init__(self, message: str, suggestions=()):
        super().__init__(message)
        self.suggestions = tuple(suggestions)


def edit_distance(a: str, b: str, limit: int = 3) -> int:
    """Levenshtein distance, short-circuited above limit."""
    if abs(len(a) - len(b)) > limit:
        return limit + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        best = i
        for j, cb in enumerate(b, start=1):
            cost = min(prev[j] + 1, cur[j - 1] + 1,
                       prev[j - 1] + (ca != cb))
            cur.append(cost)
            best = min(best, cost)
        if best > limit:
            return limit + 1
        prev = cur
    return prev[-1]


def _suggest(name: str, candidates) -> tuple:
    scored = []
    for cand in candidates:
        d = edit_distance(name, cand, limit=2)
        if d <= 2:
            scored.append((d, cand))
    return tuple(cand for _, cand in sorted(scored))


def parse_lang_action(ruleset: Ruleset, actor_type: str, actor_id: int,
                      name: str) -> tuple:
    """Translate a human-readable action name into an engine triplet."""
    if name == "end turn":
        return ("player", -1, "end_turn")
    if actor_type == "unit":
        catalog = unit_action_names(ruleset)
    elif actor_type == "city":
        catalog = city_action_names(ruleset)
    elif actor_type == "government":
        catalog = government_action_names(ruleset)
    elif actor_type == "technology":
        catalog = technology_action_names(ruleset)
    elif actor_type == "diplomacy":
        for pattern, build in _DIPLOMACY_PATTERNS:
            m = pattern.match(name)
            if m is not None:
                try:
                    return (actor_type, actor_id, build(ruleset, actor_id, m))
                except ValueError as exc:
                    raise LangParseError(str(exc)) from exc
        raise LangParseError(f"unrecognized diplomacy action: {name!r}")
    else:
        raise LangParseError(f"unknown actor type: {actor_type!r}")
    key = catalog.get(name)
    if key is None:
        suggestions = _suggest(name, catalog)
        detail = f"; did you mean {suggestions[0]!r}?" if suggestions else ""
        raise LangParseError(
            f"unrecognized {actor_type} action: {name!r}{detail}",
            suggestions)
    return (actor_type, actor_id, key)


def action_name(ruleset: Ruleset, player_id: int, triplet: tuple) -> str:
    """Inverse of parse_lang_action for a full engine triplet."""
    actor_type, _, key = triplet
    if (actor_type, key) == ("player", "end_turn"):
        return "end turn"
    if actor_type == "diplomacy":
        return diplomacy_action_name(ruleset, player_id, key)
    table = {
        "unit": unit_action_names,
        "city": city_action_names,
        "government": government_action_names,
        "technology": technology_action_names,
    }.get(actor_type)
    if table is None:
        raise A.KeyParseError(f"unknown actor type: {actor_type!r}")
    for name, catalog_key in table(ruleset).items():
        if catalog_key == key:
            return name
    raise A.KeyParseError(f"key {key!r} not in the {actor_type} catalog")


# ---------------------------------------------------------------------------
# Observation encoding


def _relation_tag(state: GameState, player_id: int, owner: int) -> str:
    if owner == player_id:
        return MYSELF_TAG
    rel = state.players[player_id].relation(owner).state
    names = state.ruleset.diplomatic_states
    return names[rel] if 0 <= rel < len(names) else NO_CONTACT_TAG


def _tile_descriptors(state: GameState, player_id: int,
                      x: int, y: int) -> list:
    """What one tile shows the player, or [] when unknown."""
    world = state.world
    if not (0 <= x < world.width and 0 <= y < world.height):
        return []
    status = int(world.ensure_status(player_id)[x, y])
    if status == 0:
        return []
    out = [state.ruleset.terrain_defs[int(world.terrain[x, y])].name]
    for name in INFRASTRUCTURE:
        if not name.startswith("reserved_") and world.has_infra(x, y, name):
            out.append(name)
    if status != 2:
        return out
    counts = {}
    for uid in world.unit_stacks.get((x, y), ()):
        unit = state.units[uid]
        counts.setdefault((unit.owner, unit.type), 0)
        counts[(unit.owner, unit.type)] += 1
    for (owner, utype), n in sorted(counts.items()):
        tag = _relation_tag(state, player_id, owner)
        tname = state.ruleset.unit_defs[utype].name
        out.append(f"{n} {tname} units belong to {tag} player")
    city = state.city_at(x, y)
    if city is not None:
        tag = _relation_tag(state, player_id, city.owner)
        out.append(f"city {city.name} of size {city.size} "
                   f"belongs to {tag} player")
    return out


def _block_descriptors(state: GameState, player_id: int,
                       cx: int, cy: int) -> list:
    """Aggregate one 5x5 block: terrain histogram, units, cities."""
    world = state.world
    grid = world.ensure_status(player_id)
    terrain_counts = {}
    unit_counts = {}
    city_counts = {}
    for dx in range(-ZOOM_IN_HALF, ZOOM_IN_HALF + 1):
        for dy in range(-ZOOM_IN_HALF, ZOOM_IN_HALF + 1):
            x, y = cx + dx, cy + dy
            if not (0 <= x < world.width and 0 <= y < world.height):
                continue
            status = int(grid[x, y])
            if status == 0:
                continue
            tname = state.ruleset.terrain_defs[int(world.terrain[x, y])].name
            terrain_counts[tname] = terrain_counts.get(tname, 0) + 1
            if status != 2:
                continue
            for uid in world.unit_stacks.get((x, y), ()):
                owner = state.units[uid].owner
                unit_counts[owner] = unit_counts.get(owner, 0) + 1
            city = state.city_at(x, y)
            if city is not None:
                city_counts[city.owner] = city_counts.get(city.owner, 0) + 1
    out = [f"{n} {tname} tiles"
           for tname, n in sorted(terrain_counts.items())]
    for owner in sorted(unit_counts):
        tag = _relation_tag(state, player_id, owner)
        out.append(f"{unit_counts[owner]} units belong to {tag} player")
    for owner in sorted(city_counts):
        tag = _relation_tag(state, player_id, owner)
        out.append(f"{city_counts[owner]} cities belong to {tag} player")
    return out


def _offset_order(half: int):
    return sorted(((dx, dy) for dx in range(-half, half + 1)
                   for dy in range(-half, half + 1)),
                  key=lambda o: (o[1], o[0]))


@dataclass
class ActorView:
    actor_type: str
    actor_id: int
    name: str
    available_actions: list
    zoomed_in: dict
    zoomed_out: dict

    def to_dict(self) -> dict:
        return {
            "actor_type": self.actor_type, "actor_id": self.actor_id,
            "name": self.name, "available_actions": self.available_actions,
            "zoomed_in": self.zoomed_in, "zoomed_out": self.zoomed_out,
        }


@dataclass
class LangObservation:
    player_id: int
    world_summary: str
    actors: list = field(default_factory=list)
    national_actions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "player_id": self.player_id,
            "world_summary": self.world_summary,
            "actors": [a.to_dict() for a in self.actors],
            "national_actions": self.national_actions,
        }


def encode_lang_actor(state: GameState, player_id: int, actor_type: str,
                      actor_id: int, available_actions=None) -> ActorView:
    """Zoomed views and action names for one own unit or city."""
    if actor_type == "unit":
        actor = state.units.get(actor_id)
    elif actor_type == "city":
        actor = state.cities.get(actor_id)
    else:
        raise ValueError(f"{actor_type!r} actors have no map location")
    if actor is None or actor.owner != player_id:
        raise ValueError(f"player {player_id} has no {actor_type} {actor_id}")

    zoomed_in = {}
    for dx, dy in _offset_order(ZOOM_IN_HALF):
        zoomed_in[relative_tile_name(dx, dy)] = _tile_descriptors(
            state, player_id, actor.x + dx, actor.y + dy)
    zoomed_out = {}
    for bx, by in _offset_order(1):
        zoomed_out[relative_block_name(bx, by)] = _block_descriptors(
            state, player_id, actor.x + bx * BLOCK, actor.y + by * BLOCK)

    if actor_type == "unit":
        display = f"{state.ruleset.unit_defs[actor.type].name} {actor_id}"
    else:
        display = f"city {actor.name}"
    return ActorView(
        actor_type=actor_type, actor_id=actor_id, name=display,
        available_actions=list(available_actions or ()),
        zoomed_in=zoomed_in, zoomed_out=zoomed_out)


def _join_counts(parts: list) -> str:
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def _plural_city(n: int) -> str:
    return "city" if n == 1 else "cities"


def world_summary(state: GameState, player_id: int) -> str:
    """One-sentence-per-topic nation overview."""
    rs = state.ruleset
    me = state.players[player_id]
    grid = state.world.ensure_status(player_id)

    type_counts = {}
    own_units = 0
    for unit in state.units.values():
        if unit.owner == player_id:
            own_units += 1
            type_counts[unit.type] = type_counts.get(unit.type, 0) + 1
    if own_units:
        parts = [f"{n} {rs.unit_defs[t].name}"
                 for t, n in sorted(type_counts.items())]
        units_part = f"We have {own_units} units: {_join_counts(parts)}."
    else:
        units_part = "We have 0 units."

    at_war = {pid for pid in state.players
              if pid != player_id and me.relation(pid).state == 0}
    enemy_units = sum(
        1 for unit in state.units.values()
        if unit.owner in at_war and grid[unit.x, unit.y] == 2)

    own_cities = [c for c in state.cities.values() if c.owner == player_id]
    total_size = sum(c.size for c in own_cities)
    enemy_cities = other_cities = 0
    for city in state.cities.values():
        if city.owner == player_id or grid[city.x, city.y] != 2:
            continue
        if city.owner in at_war:
            enemy_cities += 1
        else:
            other_cities += 1

    attacked = False
    for city in own_cities:
        for dx, dy in FAT_CROSS_OFFSETS:
            x, y = city.x + dx, city.y + dy
            if not (0 <= x < state.world.width and 0 <= y < state.world.height):
                continue
            for uid in state.world.unit_stacks.get((x, y), ()):
                unit = state.units[uid]
                if unit.owner in at_war and \
                        rs.unit_defs[unit.type].attack_strength > 0:
                    attacked = True
    status_part = "We are under attack." if attacked else "We are at peace."

    return (f"{units_part} We can see {enemy_units} enemy units. "
            f"We have {len(own_cities)} cities of a total size of "
            f"{total_size}. We can see {enemy_cities} enemy "
            f"{_plural_city(enemy_cities)} and {other_cities} other "
            f"{_plural_city(other_cities)}. {status_part}")


def encode_lang(state: GameState, player_id: int) -> LangObservation:
    """Full language observation: summary, actor views, national actions."""
    if player_id not in state.players:
        raise ValueError(f"unknown player id {player_id}")
    rs = state.ruleset
    legal = engine.legal_actions(state, player_id) \
        if state.current_player == player_id else {}

    actors = []
    for uid in sorted(state.units):
        unit = state.units[uid]
        if unit.owner != player_id:
            continue
        keys = legal.get(("unit", uid), ())
        names = [action_name(rs, player_id, ("unit", uid, k)) for k in keys]
        actors.append(encode_lang_actor(state, player_id, "unit", uid, names))
    for cid in sorted(state.cities):
        city = state.cities[cid]
        if city.owner != player_id:
            continue
        keys = legal.get(("city", cid), ())
        names = [action_name(rs, player_id, ("city", cid, k)) for k in keys]
        actors.append(encode_lang_actor(state, player_id, "city", cid, names))

    national = {}
    for kind in ("government", "technology", "diplomacy"):
        keys = legal.get((kind, player_id), ())
        national[kind] = [action_name(rs, player_id, (kind, player_id, k))
                          for k in keys]
    return LangObservation(
        player_id=player_id,
        world_summary=world_summary(state, player_id),
        actors=actors,
        national_actions=national)
