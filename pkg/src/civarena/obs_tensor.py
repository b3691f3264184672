"""Constant-shape numeric observation and action-mask encoders.

Every array's shape depends only on the map size, the entity caps, and
the ruleset's declared capacities, never on live entity counts. Rows
beyond the mask are filled with sentinels: -1 for scalar table columns,
0 for categorical map layers (real ids are stored shifted by +1 so 0
can mean "unknown or none").

Fog rules applied here, from weakest knowledge to strongest:

* status 0 (never explored): every layer is sentinel.
* status 1 (explored, fogged): terrain, infrastructure, output and
  tile ownership are shown; units and cities are not.
* status 2 (in sight): everything is shown.

Map layers follow the status grid strictly. The unit and city tables
additionally always include the player's own entities, whose private
columns the player knows regardless of what the grid says.
"""

from __future__ import annotations

import base64
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import actions as A
from . import engine
from .ruleset import INFRA_INDEX, INFRA_YIELD, Ruleset
from .world import CITY_STATES, MOODS, NO_OWNER, GameState

TURNS_CAP = 32767

UNIT_COMMON_FIELDS = (
    "x", "y", "owner", "hp", "produce_cost", "veteran", "can_transport",
    "type", "obsoleted_by", "attack_strength", "defense_strength", "firepower",
)
UNIT_MY_FIELDS = (
    "id", "moves_left", "home_city", "upkeep_shield", "upkeep_gold",
    "upkeep_food",
)
UNIT_FIELDS = UNIT_COMMON_FIELDS + UNIT_MY_FIELDS

CITY_COMMON_FIELDS = ("x", "y", "owner", "size")
CITY_MY_FIELDS = (
    "id", "food_stock", "shield_stock", "granary_size", "buy_cost",
    "turns_to_complete", "output_luxury", "output_science", "output_food",
    "output_gold", "output_shield", "output_trade", "output_bulbs",
    "waste", "corruption", "pollution", "growth_in", "state",
    "production_kind", "production_value", "angry", "unhappy", "content",
    "happy", "surplus_food", "surplus_gold", "surplus_shield",
    "surplus_trade", "last_completion_turn",
)
CITY_SCALAR_FIELDS = CITY_COMMON_FIELDS + CITY_MY_FIELDS

PLAYER_FIELDS = (
    "id", "team", "is_alive", "score", "turns_alive", "nation",
    "dipl_state_to_me", "dipl_state_from_me", "love_to_me", "embassy_with_me",
    "mood",
)

GOVERNMENT_FIELDS = (
    "government", "goal_government", "gold", "revolution_finishes",
    "rate_luxury", "rate_science", "rate_tax",
)

TECH_SCALAR_FIELDS = (
    "researching", "tech_goal", "bulbs_researched", "tech_upkeep",
    "science_cost", "researching_cost",
)

REMOVE_CLAUSE_SLOTS = 16


@dataclass(frozen=True)
class TensorCaps:
    """Entity-count ceilings shared by all tensor shapes."""

    units: int = 128
    cities: int = 64
    players: int = 16

    def __post_init__(self):
        if min(self.units, self.cities, self.players) < 1:
            raise ValueError("tensor caps must be at least 1")


def city_field_count(ruleset: Ruleset) -> int:
    caps = ruleset.capacities
    return (len(CITY_SCALAR_FIELDS) + caps.unit_types
            + 2 * caps.building_types)


@dataclass
class TensorObservation:
    """One player's fogged view as fixed-shape arrays."""

    width: int
    height: int
    caps: TensorCaps
    status: np.ndarray          # (M, N) uint8, 0..2
    terrain: np.ndarray         # (M, N) uint8, 0 unknown, else id + 1
    tile_owner: np.ndarray      # (M, N) uint8, 0 none, else player + 1
    infrastructure: np.ndarray  # (34, M, N) uint8 binary
    output: np.ndarray          # (6, M, N) uint8 binary
    unit_owner: np.ndarray      # (M, N) uint8, 0 none, else player + 1
    city_owner: np.ndarray      # (M, N) uint8, 0 none, else player + 1
    unit_distribution: np.ndarray  # (unit_types, M, N) int16 counts
    units: np.ndarray           # (U_cap, 18) int32, -1 fill
    unit_mask: np.ndarray       # (U_cap,) uint8
    cities: np.ndarray          # (C_cap, F_c) int32, -1 fill
    city_mask: np.ndarray       # (C_cap,) uint8
    players: np.ndarray         # (P_cap, 11) int32, -1 fill
    player_mask: np.ndarray     # (P_cap,) uint8
    government: np.ndarray      # (7,) int32
    technology: np.ndarray      # (tech_types + 6,) int32
    diplomacy: np.ndarray       # (P_cap, P_cap) int32, -1 fill

    ARRAY_ORDER = (
        "status", "terrain", "tile_owner", "infrastructure", "output",
        "unit_owner", "city_owner", "unit_distribution", "units",
        "unit_mask", "cities", "city_mask", "players", "player_mask",
        "government", "technology", "diplomacy",
    )

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in self.ARRAY_ORDER}

    def shapes(self) -> dict:
        return {name: arr.shape for name, arr in self.arrays().items()}


def _owner_plus_one(owner: int) -> int:
    return 0 if owner == NO_OWNER else owner + 1


def tile_yield(state: GameState, x: int, y: int) -> tuple:
    """(food, shield, trade) produced by a tile, terrain plus infrastructure."""
    tdef = state.ruleset.terrain_defs[int(state.world.terrain[x, y])]
    food, shield, trade = tdef.food, tdef.shield, tdef.trade
    for name, (df, ds, dt) in INFRA_YIELD.items():
        if state.world.has_infra(x, y, name):
            food += df
            shield += ds
            trade += dt
    return food, shield, trade


def _growth_in(city) -> int:
    remaining = city.granary_size - city.food_stock
    if remaining <= 0:
        return 1
    if city.surplus_food <= 0:
        return TURNS_CAP
    return min(TURNS_CAP, math.ceil(remaining / city.surplus_food))


def _visible_unit_ids(state: GameState, player_id: int) -> list:
    grid = state.world.ensure_status(player_id)
    out = []
    for uid in sorted(state.units):
        unit = state.units[uid]
        if unit.owner == player_id or grid[unit.x, unit.y] == 2:
            out.append(uid)
    return out


def _visible_city_ids(state: GameState, player_id: int) -> list:
    grid = state.world.ensure_status(player_id)
    out = []
    for cid in sorted(state.cities):
        city = state.cities[cid]
        if city.owner == player_id or grid[city.x, city.y] == 2:
            out.append(cid)
    return out


def encode_tensor(state: GameState, player_id: int,
                  caps: TensorCaps | None = None) -> TensorObservation:
    """Encode one player's fogged view of the state."""
    if player_id not in state.players:
        raise ValueError(f"unknown player id {player_id}")
    caps = caps or TensorCaps()
    rs = state.ruleset
    rcaps = rs.capacities
    world = state.world
    width, height = world.width, world.height
    me = state.players[player_id]
    grid = world.ensure_status(player_id)
    status = np.asarray(grid, dtype=np.uint8).copy()
    explored = status >= 1
    in_sight = status == 2

    terrain = np.where(explored, world.terrain.astype(np.int16) + 1, 0)
    terrain = terrain.astype(np.uint8)
    tile_owner = np.where(
        explored & (world.tile_owner >= 0),
        world.tile_owner.astype(np.int16) + 1, 0).astype(np.uint8)

    bits = world.infra.astype(np.uint64)
    infra_layers = np.zeros((rcaps.infrastructure_layers, width, height),
                            dtype=np.uint8)
    for layer in range(rcaps.infrastructure_layers):
        infra_layers[layer] = ((bits >> np.uint64(layer)) & np.uint64(1)) \
            .astype(np.uint8)

    tids = world.terrain.astype(np.int16)
    food = np.array([d.food for d in rs.terrain_defs], dtype=np.int16)[tids]
    shield = np.array([d.shield for d in rs.terrain_defs],
                      dtype=np.int16)[tids]
    trade = np.array([d.trade for d in rs.terrain_defs], dtype=np.int16)[tids]
    for name, (df, ds, dt) in INFRA_YIELD.items():
        layer = infra_layers[INFRA_INDEX[name]].astype(np.int16)
        food += df * layer
        shield += ds * layer
        trade += dt * layer
    output = np.zeros((rcaps.output_types, width, height), dtype=np.uint8)
    output[0] = food > 0
    output[1] = shield > 0
    output[2] = trade > 0
    output &= explored.astype(np.uint8)[None, :, :]
    infrastructure = infra_layers & explored.astype(np.uint8)[None, :, :]

    unit_owner = np.zeros((width, height), dtype=np.uint8)
    unit_distribution = np.zeros((rcaps.unit_types, width, height),
                                 dtype=np.int16)
    visible_units = _visible_unit_ids(state, player_id)
    for uid in sorted(state.units):
        unit = state.units[uid]
        if grid[unit.x, unit.y] == 2:
            unit_owner[unit.x, unit.y] = _owner_plus_one(unit.owner)
            unit_distribution[unit.type, unit.x, unit.y] += 1

    city_owner = np.zeros((width, height), dtype=np.uint8)
    visible_cities = _visible_city_ids(state, player_id)
    for cid in sorted(state.cities):
        city = state.cities[cid]
        if grid[city.x, city.y] == 2:
            city_owner[city.x, city.y] = _owner_plus_one(city.owner)

    units = np.full((caps.units, len(UNIT_FIELDS)), -1, dtype=np.int32)
    unit_mask = np.zeros(caps.units, dtype=np.uint8)
    for row, uid in enumerate(visible_units[: caps.units]):
        unit = state.units[uid]
        udef = rs.unit_defs[unit.type]
        common = (
            unit.x, unit.y, unit.owner, unit.hp, udef.produce_cost,
            int(unit.veteran), int(udef.can_transport), unit.type,
            -1 if udef.obsoleted_by is None else udef.obsoleted_by,
            udef.attack_strength, udef.defense_strength, udef.firepower,
        )
        units[row, : len(UNIT_COMMON_FIELDS)] = common
        if unit.owner == player_id:
            mine = (
                unit.id, unit.moves_left,
                -1 if unit.home_city is None else unit.home_city,
                unit.upkeep_shield, unit.upkeep_gold, unit.upkeep_food,
            )
            units[row, len(UNIT_COMMON_FIELDS):] = mine
        unit_mask[row] = 1

    f_c = city_field_count(rs)
    cities = np.full((caps.cities, f_c), -1, dtype=np.int32)
    city_mask = np.zeros(caps.cities, dtype=np.uint8)
    for row, cid in enumerate(visible_cities[: caps.cities]):
        city = state.cities[cid]
        cities[row, : len(CITY_COMMON_FIELDS)] = (
            city.x, city.y, city.owner, city.size)
        if city.owner == player_id:
            scalars = (
                city.id, city.food_stock, city.shield_stock,
                city.granary_size, engine.buy_cost(state, city),
                engine.turns_to_complete(state, city),
                city.output_luxury, city.output_science, city.output_food,
                city.output_gold, city.output_shield, city.output_trade,
                city.output_bulbs, 0, 0, 0, _growth_in(city),
                CITY_STATES.index(city.state),
                0 if city.production_kind == "unit" else 1,
                city.production_value, city.angry, city.unhappy,
                city.content, city.happy, city.surplus_food,
                city.surplus_gold, city.surplus_shield, city.surplus_trade,
                city.last_completion_turn,
            )
            cities[row, len(CITY_COMMON_FIELDS): len(CITY_SCALAR_FIELDS)] = \
                scalars
            base = len(CITY_SCALAR_FIELDS)
            can_unit = np.zeros(rcaps.unit_types, dtype=np.int32)
            for t, udef in enumerate(rs.unit_defs):
                if udef.required_tech is None or \
                        udef.required_tech in me.researched:
                    can_unit[t] = 1
            cities[row, base: base + rcaps.unit_types] = can_unit
            base += rcaps.unit_types
            can_building = np.zeros(rcaps.building_types, dtype=np.int32)
            having = np.zeros(rcaps.building_types, dtype=np.int32)
            for b, bdef in enumerate(rs.building_defs):
                if b in city.buildings:
                    having[b] = 1
                elif bdef.required_tech is None or \
                        bdef.required_tech in me.researched:
                    can_building[b] = 1
            cities[row, base: base + rcaps.building_types] = can_building
            base += rcaps.building_types
            cities[row, base: base + rcaps.building_types] = having
        city_mask[row] = 1

    players = np.full((caps.players, len(PLAYER_FIELDS)), -1, dtype=np.int32)
    player_mask = np.zeros(caps.players, dtype=np.uint8)
    pids = sorted(state.players)[: caps.players]
    for row, pid in enumerate(pids):
        other = state.players[pid]
        rel_to_me = -1 if pid == player_id else other.relation(player_id).state
        rel_from_me = -1 if pid == player_id else me.relation(pid).state
        players[row] = (
            other.id, other.team, int(other.is_alive), other.score,
            other.turns_alive, other.nation, rel_to_me, rel_from_me,
            -1 if pid == player_id else other.relation(player_id).love,
            -1 if pid == player_id else int(me.relation(pid).embassy),
            MOODS.index(me.mood) if pid == player_id else -1,
        )
        player_mask[row] = 1

    government = np.array(
        (me.government, me.goal_government, me.gold, me.revolution_finishes,
         me.rate_luxury, me.rate_science, me.rate_tax), dtype=np.int32)

    technology = np.full(rcaps.tech_types + len(TECH_SCALAR_FIELDS), 0,
                         dtype=np.int32)
    for tid in me.researched:
        if 0 <= tid < rcaps.tech_types:
            technology[tid] = 1
    researching_cost = (rs.tech_defs[me.researching].cost
                        if 0 <= me.researching < len(rs.tech_defs) else -1)
    technology[rcaps.tech_types:] = (
        me.researching, me.tech_goal, me.bulbs_researched, me.tech_upkeep,
        me.science_cost, researching_cost)

    diplomacy = np.full((caps.players, caps.players), -1, dtype=np.int32)
    my_row = pids.index(player_id) if player_id in pids else None
    if my_row is not None:
        for row, pid in enumerate(pids):
            if pid == player_id:
                continue
            diplomacy[my_row, row] = me.relation(pid).state
            diplomacy[row, my_row] = state.players[pid].relation(player_id).state

    return TensorObservation(
        width=width, height=height, caps=caps, status=status,
        terrain=terrain, tile_owner=tile_owner,
        infrastructure=infrastructure, output=output, unit_owner=unit_owner,
        city_owner=city_owner, unit_distribution=unit_distribution,
        units=units, unit_mask=unit_mask, cities=cities, city_mask=city_mask,
        players=players, player_mask=player_mask, government=government,
        technology=technology, diplomacy=diplomacy,
    )


# ---------------------------------------------------------------------------
# Action masks


def diplomacy_key_templates(ruleset: Ruleset, caps: TensorCaps) -> tuple:
    """Fixed per-counterparty diplomacy catalog.

    Templates use "me"/"them" for the giver and a city table row for
    trade_city, so the catalog size depends only on (ruleset, caps).
    """
    keys = ["start_negotiation", "cancel_negotiation", "accept_treaty",
            "cancel_treaty", "cancel_vision"]
    keys += [f"basic_clause_{kind}" for kind in A.BASIC_CLAUSE_KINDS]
    for giver in ("me", "them"):
        keys += [f"trade_tech_{giver}_{t}"
                 for t in range(len(ruleset.tech_defs))]
        keys += [f"trade_gold_{giver}_{amt}" for amt in A.GOLD_CLAUSE_AMOUNTS]
        keys += [f"trade_city_{giver}_row_{r}" for r in range(caps.cities)]
    keys += [f"remove_clause_{i}" for i in range(REMOVE_CLAUSE_SLOTS)]
    return tuple(keys)


@dataclass
class ActionMask:
    """Binary legality masks aligned with the tensor entity rows."""

    player_id: int
    caps: TensorCaps
    unit_keys: tuple
    city_keys: tuple
    government_keys: tuple
    technology_keys: tuple
    diplomacy_keys: tuple
    unit: np.ndarray        # (U_cap, len(unit_keys)) uint8
    unit_ids: np.ndarray    # (U_cap,) int32, -1 for empty rows
    city: np.ndarray        # (C_cap, len(city_keys)) uint8
    city_ids: np.ndarray    # (C_cap,) int32
    government: np.ndarray  # (len(government_keys),) uint8
    technology: np.ndarray  # (len(technology_keys),) uint8
    diplomacy: np.ndarray   # (P_cap, len(diplomacy_keys)) uint8
    player_ids: np.ndarray  # (P_cap,) int32
    turn_done: np.ndarray   # (1,) uint8

    SECTIONS = ("unit", "city", "government", "technology", "diplomacy",
                "turn_done")

    def flat_size(self) -> int:
        return (self.unit.size + self.city.size + self.government.size
                + self.technology.size + self.diplomacy.size + 1)


def _diplomacy_template_index(mask: ActionMask, pid: int, key: str):
    """Map an engine diplomacy key to its template column, if it fits."""
    prefix, params = A.split_key(key, A.DIPLOMACY_PREFIXES)
    if prefix in ("start_negotiation", "cancel_negotiation", "accept_treaty",
                  "cancel_treaty", "cancel_vision"):
        return mask.diplomacy_keys.index(prefix)
    if prefix == "basic_clause":
        return mask.diplomacy_keys.index(f"basic_clause_{params[1]}")
    if prefix == "remove_clause":
        idx = int(params[1])
        if idx >= REMOVE_CLAUSE_SLOTS:
            return None
        return mask.diplomacy_keys.index(f"remove_clause_{idx}")
    if prefix in ("trade_tech", "trade_gold", "trade_city"):
        giver = "me" if int(params[1]) == mask.player_id else "them"
        payload = int(params[2])
        if prefix == "trade_city":
            rows = np.flatnonzero(mask.city_ids == payload)
            if rows.size == 0:
                return None
            template = f"trade_city_{giver}_row_{int(rows[0])}"
        elif prefix == "trade_tech":
            template = f"trade_tech_{giver}_{payload}"
        else:
            template = f"trade_gold_{giver}_{payload}"
        try:
            return mask.diplomacy_keys.index(template)
        except ValueError:
            return None
    return None


def encode_action_mask(state: GameState, player_id: int,
                       caps: TensorCaps | None = None) -> ActionMask:
    """Legality masks for the player, aligned with encode_tensor rows.

    A player who is not the current mover gets all-zero masks,
    including the turn-done pseudo-action.
    """
    caps = caps or TensorCaps()
    rs = state.ruleset
    unit_keys = A.UNIT_ACTION_KEYS
    city_keys = A.city_action_keys(rs)
    government_keys = A.government_action_keys(rs)
    technology_keys = A.technology_action_keys(rs)
    diplomacy_keys = diplomacy_key_templates(rs, caps)

    visible_units = _visible_unit_ids(state, player_id)[: caps.units]
    visible_cities = _visible_city_ids(state, player_id)[: caps.cities]
    pids = sorted(state.players)[: caps.players]

    mask = ActionMask(
        player_id=player_id, caps=caps, unit_keys=unit_keys,
        city_keys=city_keys,
        government_keys=government_keys, technology_keys=technology_keys,
        diplomacy_keys=diplomacy_keys,
        unit=np.zeros((caps.units, len(unit_keys)), dtype=np.uint8),
        unit_ids=np.full(caps.units, -1, dtype=np.int32),
        city=np.zeros((caps.cities, len(city_keys)), dtype=np.uint8),
        city_ids=np.full(caps.cities, -1, dtype=np.int32),
        government=np.zeros(len(government_keys), dtype=np.uint8),
        technology=np.zeros(len(technology_keys), dtype=np.uint8),
        diplomacy=np.zeros((caps.players, len(diplomacy_keys)), dtype=np.uint8),
        player_ids=np.full(caps.players, -1, dtype=np.int32),
        turn_done=np.zeros(1, dtype=np.uint8),
    )
    mask.unit_ids[: len(visible_units)] = visible_units
    mask.city_ids[: len(visible_cities)] = visible_cities
    mask.player_ids[: len(pids)] = pids

    player = state.players.get(player_id)
    if player is None or not player.is_alive or \
            state.current_player != player_id:
        return mask

    unit_row = {uid: row for row, uid in enumerate(visible_units)}
    city_row = {cid: row for row, cid in enumerate(visible_cities)}
    player_row = {pid: row for row, pid in enumerate(pids)}

    legal = engine.legal_actions(state, player_id)
    for (actor_type, actor_id), keys in legal.items():
        if actor_type == "unit":
            row = unit_row.get(actor_id)
            if row is None:
                continue
            for key in keys:
                mask.unit[row, unit_keys.index(key)] = 1
        elif actor_type == "city":
            row = city_row.get(actor_id)
            if row is None:
                continue
            for key in keys:
                mask.city[row, city_keys.index(key)] = 1
        elif actor_type == "government":
            for key in keys:
                mask.government[government_keys.index(key)] = 1
        elif actor_type == "technology":
            for key in keys:
                mask.technology[technology_keys.index(key)] = 1
        elif actor_type == "diplomacy":
            for key in keys:
                prefix, params = A.split_key(key, A.DIPLOMACY_PREFIXES)
                pid = int(params[0])
                row = player_row.get(pid)
                if row is None:
                    continue
                col = _diplomacy_template_index(mask, pid, key)
                if col is not None:
                    mask.diplomacy[row, col] = 1
    mask.turn_done[0] = 1
    return mask


class ActionDecodeError(ValueError):
    pass


def _diplomacy_engine_key(mask: ActionMask, player_id: int, pid: int,
                          template: str) -> str:
    """Expand a diplomacy template into a live engine key."""
    parts = template.split("_")
    if template.startswith(("trade_tech_", "trade_gold_", "trade_city_")):
        giver = player_id if parts[2] == "me" else pid
        if parts[1] == "city":
            row = int(parts[4])
            cid = int(mask.city_ids[row])
            if cid < 0:
                raise ActionDecodeError(f"no city in table row {row}")
            return f"trade_city_{pid}_{giver}_{cid}"
        return f"{parts[0]}_{parts[1]}_{pid}_{giver}_{parts[3]}"
    if template.startswith("basic_clause_"):
        return f"basic_clause_{pid}_{parts[2]}"
    if template.startswith("remove_clause_"):
        return f"remove_clause_{pid}_{parts[2]}"
    return f"{template}_{pid}"


def decode_action(mask: ActionMask, actor_type: str, slot: int,
                  key_index: int) -> tuple:
    """Translate mask coordinates into an engine action triplet."""
    if actor_type == "turn_done":
        if slot != 0 or key_index != 0:
            raise ActionDecodeError("turn_done has a single slot")
        return ("player", -1, "end_turn")
    if actor_type == "unit":
        if not (0 <= slot < mask.caps.units
                and 0 <= key_index < len(mask.unit_keys)):
            raise ActionDecodeError("unit index out of range")
        uid = int(mask.unit_ids[slot])
        if uid < 0:
            raise ActionDecodeError(f"no unit in table row {slot}")
        return ("unit", uid, mask.unit_keys[key_index])
    if actor_type == "city":
        if not (0 <= slot < mask.caps.cities
                and 0 <= key_index < len(mask.city_keys)):
            raise ActionDecodeError("city index out of range")
        cid = int(mask.city_ids[slot])
        if cid < 0:
            raise ActionDecodeError(f"no city in table row {slot}")
        return ("city", cid, mask.city_keys[key_index])
    if actor_type == "government":
        if not (slot == 0 and 0 <= key_index < len(mask.government_keys)):
            raise ActionDecodeError("government index out of range")
        return ("government", mask.player_id, mask.government_keys[key_index])
    if actor_type == "technology":
        if not (slot == 0 and 0 <= key_index < len(mask.technology_keys)):
            raise ActionDecodeError("technology index out of range")
        return ("technology", mask.player_id, mask.technology_keys[key_index])
    if actor_type == "diplomacy":
        if not (0 <= slot < mask.caps.players
                and 0 <= key_index < len(mask.diplomacy_keys)):
            raise ActionDecodeError("diplomacy index out of range")
        pid = int(mask.player_ids[slot])
        if pid < 0:
            raise ActionDecodeError(f"no player in table row {slot}")
        key = _diplomacy_engine_key(mask, mask.player_id, pid,
                                    mask.diplomacy_keys[key_index])
        return ("diplomacy", mask.player_id, key)
    raise ActionDecodeError(f"unknown actor type {actor_type!r}")


def action_index(mask: ActionMask, triplet: tuple) -> tuple:
    """Inverse of decode_action: (actor_type, slot, key_index)."""
    actor_type, actor_id, key = triplet
    if (actor_type, key) == ("player", "end_turn"):
        return ("turn_done", 0, 0)
    if actor_type == "unit":
        rows = np.flatnonzero(mask.unit_ids == actor_id)
        if rows.size == 0:
            raise ActionDecodeError(f"unit {actor_id} not in the table")
        return ("unit", int(rows[0]), mask.unit_keys.index(key))
    if actor_type == "city":
        rows = np.flatnonzero(mask.city_ids == actor_id)
        if rows.size == 0:
            raise ActionDecodeError(f"city {actor_id} not in the table")
        return ("city", int(rows[0]), mask.city_keys.index(key))
    if actor_type == "government":
        return ("government", 0, mask.government_keys.index(key))
    if actor_type == "technology":
        return ("technology", 0, mask.technology_keys.index(key))
    if actor_type == "diplomacy":
        prefix, params = A.split_key(key, A.DIPLOMACY_PREFIXES)
        pid = int(params[0])
        rows = np.flatnonzero(mask.player_ids == pid)
        if rows.size == 0:
            raise ActionDecodeError(f"player {pid} not in the table")
        col = _diplomacy_template_index(mask, pid, key)
        if col is None:
            raise ActionDecodeError(f"key {key!r} does not fit the catalog")
        return ("diplomacy", int(rows[0]), col)
    raise ActionDecodeError(f"unknown actor type {actor_type!r}")


def flat_action_index(mask: ActionMask, triplet: tuple) -> int:
    """Position of the triplet in the concatenated flat mask."""
    actor_type, slot, key_index = action_index(mask, triplet)
    offset = 0
    for section in ActionMask.SECTIONS:
        if section == actor_type:
            break
        arr = getattr(mask, section)
        offset += arr.size
    if actor_type == "turn_done":
        return offset
    if actor_type in ("government", "technology"):
        return offset + key_index
    width = getattr(mask, actor_type).shape[1]
    return offset + slot * width + key_index


def decode_flat_action(mask: ActionMask, index: int) -> tuple:
    """Translate a flat mask position back into an engine triplet."""
    if not 0 <= index < mask.flat_size():
        raise ActionDecodeError("flat index out of range")
    for section in ActionMask.SECTIONS:
        arr = getattr(mask, section)
        if index < arr.size:
            if arr.ndim == 1:
                return decode_action(mask, section, 0, index)
            width = arr.shape[1]
            return decode_action(mask, section, index // width, index % width)
        index -= arr.size
    raise ActionDecodeError("flat index out of range")


# ---------------------------------------------------------------------------
# Byte packing for the wire
#
# Arrays travel as {dtype, shape, data} with the raw C-order buffer
# base64-encoded and the dtype forced to little-endian, so two machines
# always agree byte for byte.

MASK_ARRAY_NAMES = ("unit", "unit_ids", "city", "city_ids", "government",
                    "technology", "diplomacy", "player_ids", "turn_done")


def _pack_array(arr: np.ndarray) -> dict:
    canon = np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<")))
    return {
        "dtype": canon.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(canon.tobytes()).decode("ascii"),
    }


def _unpack_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"].encode("ascii"))
    arr = np.frombuffer(raw, dtype=np.dtype(doc["dtype"]))
    return arr.reshape(tuple(doc["shape"])).copy()


def pack_tensor(obs: TensorObservation) -> dict:
    """JSON-safe wire form of a tensor observation."""
    return {
        "kind": "tensor_observation",
        "width": obs.width,
        "height": obs.height,
        "caps": asdict(obs.caps),
        "arrays": {name: _pack_array(arr)
                   for name, arr in obs.arrays().items()},
    }


def unpack_tensor(doc: dict) -> TensorObservation:
    if doc.get("kind") != "tensor_observation":
        raise ValueError("not a packed tensor observation")
    arrays = {name: _unpack_array(doc["arrays"][name])
              for name in TensorObservation.ARRAY_ORDER}
    return TensorObservation(width=doc["width"], height=doc["height"],
                             caps=TensorCaps(**doc["caps"]), **arrays)


def mask_catalogs(ruleset: Ruleset, caps: TensorCaps | None = None) -> dict:
    """Per-section key catalogs a client needs to read an action mask."""
    caps = caps or TensorCaps()
    return {
        "unit": list(A.UNIT_ACTION_KEYS),
        "city": list(A.city_action_keys(ruleset)),
        "government": list(A.government_action_keys(ruleset)),
        "technology": list(A.technology_action_keys(ruleset)),
        "diplomacy": list(diplomacy_key_templates(ruleset, caps)),
    }


def pack_action_mask(mask: ActionMask) -> dict:
    """JSON-safe wire form of an action mask (catalogs travel separately)."""
    return {
        "kind": "action_mask",
        "player_id": mask.player_id,
        "caps": asdict(mask.caps),
        "arrays": {name: _pack_array(getattr(mask, name))
                   for name in MASK_ARRAY_NAMES},
    }


def unpack_action_mask(doc: dict, catalogs: dict) -> ActionMask:
    if doc.get("kind") != "action_mask":
        raise ValueError("not a packed action mask")
    arrays = {name: _unpack_array(doc["arrays"][name])
              for name in MASK_ARRAY_NAMES}
    return ActionMask(
        player_id=doc["player_id"], caps=TensorCaps(**doc["caps"]),
        unit_keys=tuple(catalogs["unit"]), city_keys=tuple(catalogs["city"]),
        government_keys=tuple(catalogs["government"]),
        technology_keys=tuple(catalogs["technology"]),
        diplomacy_keys=tuple(catalogs["diplomacy"]),
        **arrays,
    )
