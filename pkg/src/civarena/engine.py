"""Rules engine: legality checks, action application, turns, victory.

Legality and application share one validation path per action family, so
the legal-action mask is sound and complete by construction. A failing
apply_action raises before any mutation, keeping the state hash intact.
All stochastic draws (combat, huts, tech theft) flow through the state's
own RNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import actions as A
from . import combat
from . import metrics
from .ruleset import INFRA_INDEX, INFRA_YIELD, SPECIALIST_KINDS, tech_reachable
from .rng import GameRng
from .world import (
    DIPL_NO_CONTACT,
    FAT_CROSS_OFFSETS,
    NO_GOVERNMENT,
    NO_OWNER,
    NO_TECH,
    WORK_OFFSETS,
    City,
    GameState,
    Player,
    move_unit,
    recompute_visibility,
    refresh_all_visibility,
    remove_unit,
    spawn_unit,
)

DIPL_WAR = 0

TURNS_TO_COMPLETE_CAP = 32767
PILLAGEABLE = ("railroad", "road", "farmland", "irrigation", "mine",
               "fortress", "airbase", "oil_well", "buoy")
SPECIALIST_DRAIN_ORDER = ("luxury", "science", "tax")
BARRACKS_NAMES = ("Barracks", "Barracks II", "Barracks III")


class ActionError(ValueError):
    """Illegal action, carrying a machine-readable reason code."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


@dataclass(frozen=True)
class ActionTriplet:
    actor_type: str
    actor_id: int
    action_key: str

    def as_tuple(self) -> tuple:
        return (self.actor_type, self.actor_id, self.action_key)


def _require(condition: bool, code: str, message: str = "") -> None:
    if not condition:
        raise ActionError(code, message)


def _int_params(params, count, code="target_invalid"):
    if len(params) != count:
        raise ActionError(code, f"expected {count} parameters")
    try:
        return tuple(int(p) for p in params)
    except ValueError:
        raise ActionError(code, "non-integer parameter") from None


# ---------------------------------------------------------------------------
# Small state queries


def terrain_def_at(state: GameState, x: int, y: int):
    return state.ruleset.terrain_defs[int(state.world.terrain[x, y])]


def tile_yield(state: GameState, x: int, y: int) -> tuple:
    """(food, shield, trade) of a tile including infrastructure bonuses."""
    tdef = terrain_def_at(state, x, y)
    food, shield, trade = tdef.food, tdef.shield, tdef.trade
    bits = int(state.world.infra[x, y])
    for name, (df, ds, dt) in INFRA_YIELD.items():
        if bits >> INFRA_INDEX[name] & 1:
            food += df
            shield += ds
            trade += dt
    return food, shield, trade


def foreign_units_at(state: GameState, player: int, x: int, y: int) -> list:
    return [state.units[uid] for uid in state.world.units_at(x, y)
            if state.units[uid].owner != player]


def own_units_at(state: GameState, player: int, x: int, y: int) -> list:
    return [state.units[uid] for uid in state.world.units_at(x, y)
            if state.units[uid].owner == player]


def transport_load(state: GameState, carrier_id: int) -> int:
    return sum(1 for u in state.units.values() if u.transported_by == carrier_id)


def _tech_known_or_absent(state: GameState, player: Player, name: str) -> bool:
    idx = state.ruleset.tech_index(name)
    return idx is None or idx in player.researched


def _tech_requirement_met(state: GameState, player: Player, tech: int | None) -> bool:
    return tech is None or tech in player.researched


def _terrain_index_or_none(state: GameState, name: str):
    return state.ruleset.terrain_index(name)


def _cultivate_target(state: GameState):
    idx = state.ruleset.terrain_index("Plains")
    if idx is None:
        idx = state.ruleset.terrain_index("Grassland")
    return idx


def research_cost(state: GameState, player: Player) -> int:
    if player.researching == NO_TECH:
        return 0
    base = state.ruleset.tech_defs[player.researching].cost
    return max(1, base * player.science_cost // 100)


def worked_by_any_city(state: GameState, x: int, y: int, ignore_city: int = -1) -> bool:
    for city in state.cities.values():
        if city.id == ignore_city:
            continue
        if (x - city.x, y - city.y) in city.worked or (city.x, city.y) == (x, y):
            return True
    return False


def cheapest_buildable_unit(state: GameState, city: City) -> int:
    """Lowest-cost unit the city's owner can produce (tie: lowest index)."""
    player = state.players[city.owner]
    best = 0
    best_cost = None
    for idx, udef in enumerate(state.ruleset.unit_defs):
        if not _tech_requirement_met(state, player, udef.required_tech):
            continue
        if udef.is_naval and not _adjacent_water(state, city.x, city.y):
            continue
        if best_cost is None or udef.produce_cost < best_cost:
            best = idx
            best_cost = udef.produce_cost
    return best


def _adjacent_water(state: GameState, x: int, y: int) -> bool:
    return any(
        not terrain_def_at(state, nx, ny).is_land
        for nx, ny in state.world.neighbors(x, y)
    )


def production_cost(state: GameState, city: City) -> int:
    if city.production_kind == "unit":
        return state.ruleset.unit_defs[city.production_value].produce_cost
    return state.ruleset.building_defs[city.production_value].cost


def buy_cost(state: GameState, city: City) -> int:
    return 2 * max(0, production_cost(state, city) - city.shield_stock)


def turns_to_complete(state: GameState, city: City) -> int:
    remaining = production_cost(state, city) - city.shield_stock
    if remaining <= 0:
        return 1
    if city.surplus_shield <= 0:
        return TURNS_TO_COMPLETE_CAP
    return min(TURNS_TO_COMPLETE_CAP, math.ceil(remaining / city.surplus_shield))


def wonder_built_anywhere(state: GameState, building: int) -> bool:
    return any(building in c.buildings for c in state.cities.values())


def _has_building(state: GameState, city: City, name: str) -> bool:
    idx = state.ruleset.building_index(name)
    return idx is not None and idx in city.buildings


# ---------------------------------------------------------------------------
# Diplomacy helpers


def contact_established(state: GameState, a: int, b: int) -> bool:
    return state.players[a].relation(b).state != DIPL_NO_CONTACT


def _set_contact(state: GameState, a: int, b: int) -> None:
    ra = state.players[a].relation_mut(b)
    rb = state.players[b].relation_mut(a)
    if ra.state == DIPL_NO_CONTACT or rb.state == DIPL_NO_CONTACT:
        ra.state = DIPL_WAR
        rb.state = DIPL_WAR
        state.add_event("first_contact", players=[a, b])


def update_contacts(state: GameState) -> None:
    """Establish first contact where foreign units/cities are in sight."""
    for player in state.players.values():
        if not player.is_alive:
            continue
        grid = state.world.ensure_status(player.id)
        for unit in state.units.values():
            if unit.owner != player.id and grid[unit.x, unit.y] == 2:
                if state.players[unit.owner].is_alive:
                    _set_contact(state, player.id, unit.owner)
        for city in state.cities.values():
            if city.owner != player.id and grid[city.x, city.y] == 2:
                if state.players[city.owner].is_alive:
                    _set_contact(state, player.id, city.owner)
    for player in state.players.values():
        at_war = any(
            player.relation(other.id).state == DIPL_WAR
            for other in state.players.values()
            if other.id != player.id and other.is_alive
        )
        player.mood = "combat" if at_war and player.is_alive else "peaceful"


def _clamp_rates(player: Player, ruleset) -> None:
    """Fit rates to the current government's caps, preserving the sum."""
    gov = ruleset.government_defs[player.government]
    caps = {"luxury": gov.max_luxury, "science": gov.max_science, "tax": gov.max_tax}
    rates = {
        "luxury": min(player.rate_luxury, caps["luxury"]),
        "science": min(player.rate_science, caps["science"]),
        "tax": min(player.rate_tax, caps["tax"]),
    }
    deficit = 100 - sum(rates.values())
    for kind in ("tax", "science", "luxury"):
        if deficit <= 0:
            break
        room = caps[kind] - rates[kind]
        add = min(room, deficit)
        rates[kind] += add
        deficit -= add
    player.rate_luxury = rates["luxury"]
    player.rate_science = rates["science"]
    player.rate_tax = rates["tax"]


# ---------------------------------------------------------------------------
# City lifecycle helpers


def _take_specialist(city: City) -> str | None:
    for kind in SPECIALIST_DRAIN_ORDER:
        if city.specialists[kind] > 0:
            city.specialists[kind] -= 1
            return kind
    return None


def _drop_citizen(state: GameState, city: City) -> None:
    if _take_specialist(city) is None and city.worked:
        city.worked.pop()


def _auto_assign_citizen(state: GameState, city: City) -> None:
    """Move one luxury specialist onto the best free workable tile."""
    if city.specialists["luxury"] < 1:
        return
    best = None
    best_score = -1
    for dx, dy in WORK_OFFSETS:
        if (dx, dy) in city.worked:
            continue
        x, y = city.x + dx, city.y + dy
        if not state.world.in_bounds(x, y):
            continue
        if worked_by_any_city(state, x, y, ignore_city=city.id):
            continue
        if foreign_units_at(state, city.owner, x, y):
            continue
        food, shield, trade = tile_yield(state, x, y)
        score = food + shield + trade
        if score > best_score:
            best = (dx, dy)
            best_score = score
    if best is not None:
        city.specialists["luxury"] -= 1
        city.worked.append(best)


def _transfer_city(state: GameState, city: City, new_owner: int) -> None:
    old = city.owner
    city.owner = new_owner
    city.specialists = {"luxury": city.size, "science": 0, "tax": 0}
    city.worked = []
    city.state = "peace"
    city.disorder_turns = 0
    for dx, dy in FAT_CROSS_OFFSETS:
        x, y = city.x + dx, city.y + dy
        if state.world.in_bounds(x, y) and int(state.world.tile_owner[x, y]) == old:
            state.world.tile_owner[x, y] = new_owner
    state.world.tile_owner[city.x, city.y] = new_owner
    for unit in state.units.values():
        if unit.owner == old and unit.home_city == city.id:
            unit.home_city = None
            unit.upkeep_food = unit.upkeep_shield = unit.upkeep_gold = 0
    city.production_kind = "unit"
    city.production_value = cheapest_buildable_unit(state, city)


def _found_city(state: GameState, player: Player, x: int, y: int) -> City:
    city = City(
        id=state.next_city_id,
        name=f"City {state.next_city_id}",
        owner=player.id,
        x=x,
        y=y,
        size=1,
        specialists={"luxury": 1, "science": 0, "tax": 0},
    )
    state.next_city_id += 1
    state.cities[city.id] = city
    state.world.city_id[x, y] = city.id
    for dx, dy in FAT_CROSS_OFFSETS:
        tx, ty = x + dx, y + dy
        if state.world.in_bounds(tx, ty) and int(state.world.tile_owner[tx, ty]) == NO_OWNER:
            state.world.tile_owner[tx, ty] = player.id
    state.world.tile_owner[x, y] = player.id
    city.production_value = cheapest_buildable_unit(state, city)
    _auto_assign_citizen(state, city)
    return city


# ---------------------------------------------------------------------------
# Hut resolution


def _resolve_hut(state: GameState, player: Player, unit) -> None:
    x, y = unit.x, unit.y
    state.world.clear_infra(x, y, "hut")
    roll = state.rng.randbelow(4)
    if roll == 0:
        player.gold += 50
        state.add_event("hut_gold", player=player.id, x=x, y=y, amount=50)
    elif roll == 1:
        unknown = sorted(set(range(len(state.ruleset.tech_defs))) - player.researched)
        if unknown:
            tech = unknown[state.rng.randbelow(len(unknown))]
            player.researched.add(tech)
            state.add_event("hut_tech", player=player.id, x=x, y=y, tech=tech)
        else:
            state.add_event("hut_empty", player=player.id, x=x, y=y)
    elif roll == 2:
        candidate = next(
            (i for i, u in enumerate(state.ruleset.unit_defs)
             if u.is_military and u.required_tech is None and not u.is_naval),
            None,
        )
        if candidate is not None:
            new = spawn_unit(state, player.id, candidate, x, y)
            state.add_event("hut_unit", player=player.id, x=x, y=y, unit=new.id)
        else:
            state.add_event("hut_empty", player=player.id, x=x, y=y)
    else:
        state.add_event("hut_empty", player=player.id, x=x, y=y)


# ---------------------------------------------------------------------------
# Unit actions


def _unit_action(state: GameState, player: Player, unit, prefix: str, params,
                 run: bool) -> None:
    rs = state.ruleset
    udef = rs.unit_defs[unit.type]

    if prefix == "keep_activity":
        if run:
            state.add_event("unit_idle", player=player.id, unit=unit.id)
        return

    if prefix == "disband":
        if run:
            remove_unit(state, unit.id)
            player.counters["units_used"] += 1
            state.add_event("unit_disbanded", player=player.id, unit=unit.id)
        return

    _require(unit.moves_left >= 1, "no_moves", "unit has no moves left")

    if prefix in ("goto", "enter_hut", "disembark"):
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        tdef = terrain_def_at(state, tx, ty)
        target_city = state.city_at(tx, ty)
        if prefix == "disembark":
            _require(unit.transported_by is not None, "target_invalid",
                     "unit is not aboard a transport")
            _require(not udef.is_naval, "target_invalid", "naval units sail out")
            _require(tdef.is_land, "target_invalid", "must disembark onto land")
        else:
            _require(unit.transported_by is None, "target_invalid",
                     "aboard a transport; disembark instead")
            if udef.is_naval:
                _require(
                    not tdef.is_land or (target_city is not None
                                         and target_city.owner == player.id),
                    "target_invalid", "naval units need water or a friendly port",
                )
            else:
                _require(tdef.is_land, "target_invalid", "land units cannot enter water")
        if prefix == "enter_hut":
            _require(state.world.has_infra(tx, ty, "hut"), "target_invalid", "no hut there")
        _require(not foreign_units_at(state, player.id, tx, ty), "target_invalid",
                 "foreign units on target tile")
        _require(target_city is None or target_city.owner == player.id,
                 "target_invalid", "cannot walk into a foreign city")
        if not run:
            return
        cost = min(unit.moves_left, tdef.move_cost)
        move_unit(state, unit, tx, ty)
        unit.moves_left -= cost
        unit.fortified = False
        if prefix == "disembark":
            unit.transported_by = None
        state.add_event("unit_moved", player=player.id, unit=unit.id,
                        x=tx, y=ty, direction=d, cost=cost)
        if not udef.is_naval and state.world.has_infra(tx, ty, "hut"):
            _resolve_hut(state, player, unit)
        return

    if prefix == "attack":
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        _require(udef.is_military and udef.attack_strength >= 1,
                 "prerequisite_missing", "unit cannot attack")
        _require(unit.transported_by is None, "target_invalid",
                 "cannot attack while transported")
        enemies = foreign_units_at(state, player.id, tx, ty)
        _require(bool(enemies), "target_invalid", "no units to attack")
        owner = enemies[0].owner
        _require(player.relation(owner).state == DIPL_WAR,
                 "prerequisite_missing", "not at war with target")
        tdef = terrain_def_at(state, tx, ty)
        target_city = state.city_at(tx, ty)
        if udef.is_naval:
            _require(not tdef.is_land or target_city is not None,
                     "target_invalid", "naval units cannot strike inland")
        else:
            _require(tdef.is_land, "target_invalid", "land units cannot attack at sea")
        if not run:
            return
        defender = _pick_defender(state, enemies, tx, ty)
        a_power = combat.attack_power(udef, unit.veteran)
        d_power = _defense_power_at(state, defender, tx, ty)
        ddef = rs.unit_defs[defender.type]
        outcome = combat.resolve_combat(unit, defender, udef, ddef,
                                        a_power, d_power, state.rng)
        unit.moves_left = 0
        if outcome.winner == "attacker":
            unit.hp = outcome.attacker_hp
            _destroy_in_combat(state, defender, killer=player.id)
            if not unit.veteran and state.rng.chance(1, 2):
                unit.veteran = True
        else:
            defender.hp = outcome.defender_hp
            _destroy_in_combat(state, unit, killer=defender.owner)
            if not defender.veteran and state.rng.chance(1, 2):
                defender.veteran = True
        state.add_event(
            "combat", player=player.id, attacker=unit.id, defender=defender.id,
            defender_owner=defender.owner, winner=outcome.winner,
            rounds=outcome.rounds, attacker_hp=outcome.attacker_hp,
            defender_hp=outcome.defender_hp, x=tx, y=ty,
        )
        return

    if prefix == "conquer_city":
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        city = state.city_at(tx, ty)
        _require(city is not None and city.owner != player.id,
                 "target_invalid", "no foreign city there")
        _require(not foreign_units_at(state, player.id, tx, ty),
                 "target_invalid", "city is defended")
        _require(udef.is_military and not udef.is_naval,
                 "prerequisite_missing", "needs a land military unit")
        _require(unit.transported_by is None, "target_invalid",
                 "cannot conquer from a transport")
        _require(player.relation(city.owner).state == DIPL_WAR,
                 "prerequisite_missing", "not at war with city owner")
        if not run:
            return
        old_owner = city.owner
        cost = min(unit.moves_left, terrain_def_at(state, tx, ty).move_cost)
        move_unit(state, unit, tx, ty)
        unit.moves_left -= cost
        unit.fortified = False
        _transfer_city(state, city, player.id)
        victim = state.players[old_owner]
        victim.relation_mut(player.id).love = max(
            -1000, victim.relation(player.id).love - 100)
        state.add_event("city_conquered", player=player.id, city=city.id,
                        from_player=old_owner, x=tx, y=ty)
        return

    _is_agent = not (udef.is_military or udef.is_settler or udef.is_worker
                     or udef.is_naval)

    if prefix in ("bribe", "sabotage_city", "steal_tech", "investigate",
                  "establish_embassy"):
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        _require(_is_agent, "prerequisite_missing", "needs a civilian agent unit")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        if prefix == "bribe":
            targets = foreign_units_at(state, player.id, tx, ty)
            _require(len(targets) == 1, "target_invalid",
                     "bribe needs exactly one foreign unit on the tile")
            victim = targets[0]
            _require(victim.transported_by is None, "target_invalid",
                     "cannot bribe a transported unit")
            _require(contact_established(state, player.id, victim.owner),
                     "prerequisite_missing", "no contact with unit owner")
            cost = 2 * rs.unit_defs[victim.type].produce_cost
            _require(player.gold >= cost, "insufficient_gold",
                     f"bribe costs {cost}")
            if not run:
                return
            player.gold -= cost
            old_owner = victim.owner
            state.players[old_owner].counters["units_lost"] += 1
            player.counters["units_built"] += 1
            victim.owner = player.id
            victim.home_city = None
            victim.upkeep_food = victim.upkeep_shield = victim.upkeep_gold = 0
            victim.moves_left = 0
            victim.fortified = False
            unit.moves_left = 0
            state.add_event("unit_bribed", player=player.id, unit=victim.id,
                            from_player=old_owner, cost=cost)
            return
        city = state.city_at(tx, ty)
        _require(city is not None and city.owner != player.id,
                 "target_invalid", "no foreign city there")
        _require(contact_established(state, player.id, city.owner),
                 "prerequisite_missing", "no contact with city owner")
        if prefix == "steal_tech":
            victim = state.players[city.owner]
            candidates = sorted(victim.researched - player.researched)
            _require(bool(candidates), "target_invalid", "nothing to steal")
            if not run:
                return
            tech = candidates[state.rng.randbelow(len(candidates))]
            player.researched.add(tech)
            unit.moves_left = 0
            state.add_event("tech_stolen", player=player.id, city=city.id,
                            from_player=city.owner, tech=tech)
            return
        if prefix == "establish_embassy":
            _require(not player.relation(city.owner).embassy,
                     "target_invalid", "embassy already established")
        if not run:
            return
        unit.moves_left = 0
        if prefix == "sabotage_city":
            city.shield_stock //= 2
            state.add_event("city_sabotaged", player=player.id, city=city.id,
                            owner=city.owner, shield_stock=city.shield_stock)
        elif prefix == "investigate":
            state.add_event(
                "city_investigated", player=player.id, city=city.id,
                owner=city.owner, size=city.size,
                production_kind=city.production_kind,
                production_value=city.production_value,
                food_stock=city.food_stock, shield_stock=city.shield_stock,
                buildings=sorted(city.buildings),
            )
        else:
            player.relation_mut(city.owner).embassy = True
            state.add_event("embassy_established", player=player.id,
                            with_player=city.owner, city=city.id)
        return

    if prefix == "sell_goods":
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        _require(not udef.is_military, "prerequisite_missing",
                 "military units cannot trade")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        city = state.city_at(tx, ty)
        _require(city is not None, "target_invalid", "no city there")
        if city.owner != player.id:
            _require(contact_established(state, player.id, city.owner),
                     "prerequisite_missing", "no contact with city owner")
        if not run:
            return
        player.gold += 25
        unit.moves_left = 0
        state.add_event("goods_sold", player=player.id, unit=unit.id,
                        city=city.id, amount=25)
        return

    if prefix == "establish_trade_route":
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        _require(not udef.is_military and not udef.is_settler,
                 "prerequisite_missing", "unit cannot carry trade")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        home = state.cities.get(unit.home_city) if unit.home_city is not None else None
        _require(home is not None and home.owner == player.id,
                 "prerequisite_missing", "unit needs a home city")
        city = state.city_at(tx, ty)
        _require(city is not None and city.id != home.id,
                 "target_invalid", "needs another city")
        if city.owner != player.id:
            _require(contact_established(state, player.id, city.owner),
                     "prerequisite_missing", "no contact with city owner")
        _require(city.id not in home.trade_partners, "target_invalid",
                 "route already exists")
        _require(len(home.trade_partners) < 4 and len(city.trade_partners) < 4,
                 "target_invalid", "trade route capacity reached")
        if not run:
            return
        home.trade_partners.append(city.id)
        city.trade_partners.append(home.id)
        remove_unit(state, unit.id)
        player.counters["units_used"] += 1
        state.add_event("trade_route_established", player=player.id,
                        home_city=home.id, city=city.id)
        return

    if prefix == "embark":
        (d,) = _int_params(params, 1)
        _require(d in A.DIRECTIONS, "target_invalid", "bad direction")
        dx, dy = A.DIRECTIONS[d]
        tx, ty = unit.x + dx, unit.y + dy
        _require(state.world.in_bounds(tx, ty), "target_invalid", "off map")
        _require(not udef.is_naval, "prerequisite_missing", "already a ship")
        _require(unit.transported_by is None, "target_invalid", "already aboard")
        _require(not terrain_def_at(state, tx, ty).is_land, "target_invalid",
                 "embark targets water")
        _require(not foreign_units_at(state, player.id, tx, ty), "target_invalid",
                 "foreign units on target tile")
        carrier = _free_transport(state, player.id, tx, ty)
        _require(carrier is not None, "target_invalid", "no transport with space")
        if not run:
            return
        move_unit(state, unit, tx, ty)
        unit.transported_by = carrier.id
        unit.moves_left = 0
        unit.fortified = False
        state.add_event("unit_embarked", player=player.id, unit=unit.id,
                        carrier=carrier.id, x=tx, y=ty)
        return

    if prefix == "board":
        _require(not udef.is_naval, "prerequisite_missing", "already a ship")
        _require(unit.transported_by is None, "target_invalid", "already aboard")
        carrier = _free_transport(state, player.id, unit.x, unit.y,
                                  exclude=unit.id)
        _require(carrier is not None, "target_invalid", "no transport here")
        if not run:
            return
        unit.transported_by = carrier.id
        unit.moves_left = 0
        unit.fortified = False
        state.add_event("unit_boarded", player=player.id, unit=unit.id,
                        carrier=carrier.id)
        return

    if prefix == "deboard":
        _require(unit.transported_by is not None, "target_invalid", "not aboard")
        _require(terrain_def_at(state, unit.x, unit.y).is_land, "target_invalid",
                 "can only step off on land")
        if not run:
            return
        unit.transported_by = None
        state.add_event("unit_deboarded", player=player.id, unit=unit.id)
        return

    if prefix == "unload":
        _require(udef.can_transport, "prerequisite_missing", "unit cannot transport")
        carried = [u for u in state.units.values() if u.transported_by == unit.id]
        _require(bool(carried), "target_invalid", "nothing aboard")
        here_city = state.city_at(unit.x, unit.y)
        _require(terrain_def_at(state, unit.x, unit.y).is_land
                 or (here_city is not None and here_city.owner == player.id),
                 "target_invalid", "unload needs land or a friendly port")
        if not run:
            return
        for u in sorted(carried, key=lambda c: c.id):
            u.transported_by = None
        state.add_event("transport_unloaded", player=player.id, unit=unit.id,
                        count=len(carried))
        return

    if prefix == "fortify":
        _require(udef.is_military, "prerequisite_missing", "only military fortify")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        _require(not unit.fortified, "target_invalid", "already fortified")
        if not run:
            return
        unit.fortified = True
        unit.moves_left = 0
        state.add_event("unit_fortified", player=player.id, unit=unit.id)
        return

    if prefix == "build_city":
        _require(udef.is_settler, "prerequisite_missing", "only settlers found cities")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        _require(terrain_def_at(state, unit.x, unit.y).is_land, "target_invalid",
                 "cities need land")
        owner_here = int(state.world.tile_owner[unit.x, unit.y])
        _require(owner_here in (NO_OWNER, player.id), "target_invalid",
                 "tile owned by another player")
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                x, y = unit.x + dx, unit.y + dy
                if state.world.in_bounds(x, y):
                    _require(state.city_at(x, y) is None, "target_invalid",
                             "too close to another city")
        if not run:
            return
        city = _found_city(state, player, unit.x, unit.y)
        remove_unit(state, unit.id)
        player.counters["units_used"] += 1
        state.add_event("city_founded", player=player.id, city=city.id,
                        x=city.x, y=city.y)
        return

    if prefix == "join_city":
        _require(udef.is_settler, "prerequisite_missing", "only settlers join cities")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        city = state.city_at(unit.x, unit.y)
        _require(city is not None and city.owner == player.id, "target_invalid",
                 "stand in an own city to join it")
        _require(city.size < 255, "target_invalid", "city is at maximum size")
        if not run:
            return
        city.size += 1
        city.specialists["luxury"] += 1
        _auto_assign_citizen(state, city)
        remove_unit(state, unit.id)
        player.counters["units_used"] += 1
        state.add_event("city_joined", player=player.id, city=city.id, size=city.size)
        return

    if prefix in ("mine", "irrigate", "build_road", "build_railroad", "plant",
                  "cultivate", "transform", "build_fortress", "build_airbase",
                  "pillage"):
        _require(udef.is_worker, "prerequisite_missing", "needs a worker unit")
        _require(unit.transported_by is None, "target_invalid", "unit is transported")
        x, y = unit.x, unit.y
        tdef = terrain_def_at(state, x, y)
        _require(tdef.is_land, "target_invalid", "cannot work water tiles")
        world = state.world
        if prefix == "mine":
            _require(not world.has_infra(x, y, "mine"), "target_invalid",
                     "mine already present")
        elif prefix == "irrigate":
            _require(not world.has_infra(x, y, "irrigation"), "target_invalid",
                     "irrigation already present")
        elif prefix == "build_road":
            _require(not world.has_infra(x, y, "road"), "target_invalid",
                     "road already present")
        elif prefix == "build_railroad":
            _require(world.has_infra(x, y, "road"), "prerequisite_missing",
                     "railroad needs a road")
            _require(not world.has_infra(x, y, "railroad"), "target_invalid",
                     "railroad already present")
            _require(_tech_known_or_absent(state, player, "Railroad"),
                     "prerequisite_missing", "railroad technology unknown")
        elif prefix == "plant":
            forest = _terrain_index_or_none(state, "Forest")
            _require(forest is not None, "target_invalid", "no forest terrain defined")
            _require(int(world.terrain[x, y]) != forest, "target_invalid",
                     "already forest")
        elif prefix == "cultivate":
            forest = _terrain_index_or_none(state, "Forest")
            _require(forest is not None and int(world.terrain[x, y]) == forest,
                     "target_invalid", "only forest can be cultivated")
            result = _cultivate_target(state)
            _require(result is not None, "target_invalid", "no open terrain defined")
        elif prefix == "transform":
            name = tdef.name
            target_name = A.TRANSFORM_RESULT.get(name)
            _require(target_name is not None, "target_invalid",
                     f"{name} cannot be transformed")
            _require(_terrain_index_or_none(state, target_name) is not None,
                     "target_invalid", "transform target terrain missing")
        elif prefix == "build_fortress":
            _require(not world.has_infra(x, y, "fortress"), "target_invalid",
                     "fortress already present")
            _require(_tech_known_or_absent(state, player, "Construction"),
                     "prerequisite_missing", "construction unknown")
        elif prefix == "build_airbase":
            _require(not world.has_infra(x, y, "airbase"), "target_invalid",
                     "airbase already present")
            _require(_tech_known_or_absent(state, player, "Radio"),
                     "prerequisite_missing", "radio unknown")
        elif prefix == "pillage":
            _require(any(world.has_infra(x, y, n) for n in PILLAGEABLE),
                     "target_invalid", "nothing to pillage")
        if not run:
            return
        unit.moves_left -= 1
        if prefix == "mine":
            world.set_infra(x, y, "mine")
        elif prefix == "irrigate":
            world.set_infra(x, y, "irrigation")
        elif prefix == "build_road":
            world.set_infra(x, y, "road")
        elif prefix == "build_railroad":
            world.set_infra(x, y, "railroad")
        elif prefix == "plant":
            world.terrain[x, y] = _terrain_index_or_none(state, "Forest")
        elif prefix == "cultivate":
            world.terrain[x, y] = _cultivate_target(state)
        elif prefix == "transform":
            target_name = A.TRANSFORM_RESULT[tdef.name]
            world.terrain[x, y] = _terrain_index_or_none(state, target_name)
        elif prefix == "build_fortress":
            world.set_infra(x, y, "fortress")
        elif prefix == "build_airbase":
            world.set_infra(x, y, "airbase")
        elif prefix == "pillage":
            for name in PILLAGEABLE:
                if world.has_infra(x, y, name):
                    world.clear_infra(x, y, name)
                    break
        state.add_event("terrain_worked", player=player.id, unit=unit.id,
                        task=prefix, x=x, y=y)
        return

    if prefix == "upgrade":
        newer = udef.obsoleted_by
        _require(newer is not None, "target_invalid", "no upgrade path")
        ndef = rs.unit_defs[newer]
        _require(_tech_requirement_met(state, player, ndef.required_tech),
                 "prerequisite_missing", "upgrade technology unknown")
        city = state.city_at(unit.x, unit.y)
        _require(city is not None and city.owner == player.id, "target_invalid",
                 "upgrades happen in own cities")
        cost = 20 + 2 * max(0, ndef.produce_cost - udef.produce_cost)
        _require(player.gold >= cost, "insufficient_gold", f"upgrade costs {cost}")
        if not run:
            return
        player.gold -= cost
        unit.type = newer
        unit.hp = ndef.max_hp
        unit.moves_left = 0
        state.add_event("unit_upgraded", player=player.id, unit=unit.id,
                        to_type=newer, cost=cost)
        return

    if prefix == "set_homecity":
        city = state.city_at(unit.x, unit.y)
        _require(city is not None and city.owner == player.id, "target_invalid",
                 "stand in an own city first")
        _require(unit.home_city != city.id, "target_invalid", "already home here")
        if not run:
            return
        unit.home_city = city.id
        unit.upkeep_shield = 1
        unit.upkeep_food = 1 if udef.is_settler else 0
        state.add_event("unit_rehomed", player=player.id, unit=unit.id, city=city.id)
        return

    raise ActionError("target_invalid", f"unhandled unit action {prefix}")


def _free_transport(state: GameState, player: int, x: int, y: int, exclude: int = -1):
    best = None
    for uid in sorted(state.world.units_at(x, y)):
        if uid == exclude:
            continue
        cand = state.units[uid]
        if cand.owner != player:
            continue
        cdef = state.ruleset.unit_defs[cand.type]
        if not cdef.can_transport:
            continue
        if transport_load(state, cand.id) < cdef.transport_capacity:
            if best is None:
                best = cand
    return best


def _destroy_in_combat(state: GameState, unit, killer: int) -> None:
    """Remove a unit killed in battle; cargo goes down with its transport."""
    doomed = [unit] + [u for u in state.units.values()
                       if u.transported_by == unit.id]
    for victim in doomed:
        remove_unit(state, victim.id)
        state.players[victim.owner].counters["units_lost"] += 1
        state.players[killer].counters["units_killed"] += 1
        if victim is not unit:
            state.add_event("unit_drowned", player=victim.owner, unit=victim.id,
                            carrier=unit.id, killer=killer)


def _pick_defender(state: GameState, enemies: list, x: int, y: int):
    return max(enemies, key=lambda u: (_defense_power_at(state, u, x, y), -u.id))


def _defense_power_at(state: GameState, defender, x: int, y: int) -> int:
    ddef = state.ruleset.unit_defs[defender.type]
    tdef = terrain_def_at(state, x, y)
    city = state.city_at(x, y)
    fortified = defender.fortified or city is not None
    walls_pct = 100
    if city is not None and _has_building(state, city, "City Walls"):
        walls_pct = 300
    return combat.defense_power(ddef, defender.veteran, fortified,
                                tdef.defense_bonus_pct, walls_pct)


# ---------------------------------------------------------------------------
# City actions


def _city_action(state: GameState, player: Player, city: City, prefix: str,
                 params, run: bool) -> None:
    rs = state.ruleset

    if prefix == "buy":
        cost = production_cost(state, city)
        remaining = cost - city.shield_stock
        _require(remaining > 0, "target_invalid", "production already paid for")
        price = 2 * remaining
        _require(player.gold >= price, "insufficient_gold",
                 f"buying costs {price}")
        if not run:
            return
        player.gold -= price
        city.shield_stock = cost
        state.add_event("production_bought", player=player.id, city=city.id,
                        cost=price)
        return

    if prefix == "work":
        dx, dy = _int_params(params, 2)
        _require((dx, dy) in WORK_OFFSETS, "target_invalid", "offset outside work area")
        x, y = city.x + dx, city.y + dy
        _require(state.world.in_bounds(x, y), "target_invalid", "off map")
        _require((dx, dy) not in city.worked, "target_invalid", "already worked")
        _require(not worked_by_any_city(state, x, y, ignore_city=city.id),
                 "target_invalid", "tile worked by another city")
        _require(not foreign_units_at(state, player.id, x, y), "target_invalid",
                 "foreign units occupy the tile")
        _require(sum(city.specialists.values()) >= 1, "target_invalid",
                 "no free citizen")
        if not run:
            return
        _take_specialist(city)
        city.worked.append((dx, dy))
        state.add_event("tile_worked", player=player.id, city=city.id, dx=dx, dy=dy)
        return

    if prefix == "unwork":
        dx, dy = _int_params(params, 2)
        _require((dx, dy) in city.worked, "target_invalid", "tile not worked")
        if not run:
            return
        city.worked.remove((dx, dy))
        city.specialists["luxury"] += 1
        state.add_event("tile_unworked", player=player.id, city=city.id, dx=dx, dy=dy)
        return

    if prefix == "sell":
        (bid,) = _int_params(params, 1)
        _require(0 <= bid < len(rs.building_defs), "target_invalid", "bad building")
        _require(bid in city.buildings, "target_invalid", "building not present")
        _require(not rs.building_defs[bid].is_wonder, "target_invalid",
                 "wonders cannot be sold")
        if not run:
            return
        city.buildings.remove(bid)
        refund = rs.building_defs[bid].cost // 2
        player.gold += refund
        state.add_event("building_sold", player=player.id, city=city.id,
                        building=bid, refund=refund)
        return

    if prefix == "produce_unit":
        (uid,) = _int_params(params, 1)
        _require(0 <= uid < len(rs.unit_defs), "target_invalid", "bad unit type")
        udef = rs.unit_defs[uid]
        _require(_tech_requirement_met(state, player, udef.required_tech),
                 "prerequisite_missing", "technology unknown")
        if udef.is_naval:
            _require(_adjacent_water(state, city.x, city.y), "target_invalid",
                     "no water adjacent for shipyard")
        if not run:
            return
        city.production_kind = "unit"
        city.production_value = uid
        state.add_event("production_changed", player=player.id, city=city.id,
                        target="unit", value=uid)
        return

    if prefix == "produce_building":
        (bid,) = _int_params(params, 1)
        _require(0 <= bid < len(rs.building_defs), "target_invalid", "bad building")
        bdef = rs.building_defs[bid]
        _require(bid not in city.buildings, "target_invalid", "already built")
        _require(_tech_requirement_met(state, player, bdef.required_tech),
                 "prerequisite_missing", "technology unknown")
        if bdef.is_wonder:
            _require(not wonder_built_anywhere(state, bid), "target_invalid",
                     "wonder already exists")
        if not run:
            return
        city.production_kind = "building"
        city.production_value = bid
        state.add_event("production_changed", player=player.id, city=city.id,
                        target="building", value=bid)
        return

    if prefix == "change_specialist":
        _require(len(params) == 2, "target_invalid", "expected two kinds")
        a, b = params
        _require(a in SPECIALIST_KINDS and b in SPECIALIST_KINDS and a != b,
                 "target_invalid", "bad specialist kinds")
        _require(city.specialists[a] >= 1, "target_invalid", f"no {a} specialist")
        if not run:
            return
        city.specialists[a] -= 1
        city.specialists[b] += 1
        state.add_event("specialist_changed", player=player.id, city=city.id,
                        source=a, target=b)
        return

    raise ActionError("target_invalid", f"unhandled city action {prefix}")


# ---------------------------------------------------------------------------
# Government / technology actions


def _government_action(state: GameState, player: Player, prefix: str, params,
                       run: bool) -> None:
    rs = state.ruleset
    if prefix == "revolution":
        (gid,) = _int_params(params, 1)
        _require(0 <= gid < len(rs.government_defs), "target_invalid", "bad government")
        _require(gid != player.government, "target_invalid", "already that government")
        _require(rs.government_defs[gid].name != "Anarchy", "target_invalid",
                 "cannot revolt into anarchy")
        _require(player.revolution_finishes < 0, "target_invalid",
                 "revolution already underway")
        if not run:
            return
        anarchy = rs.anarchy_government
        if anarchy is not None:
            player.government = anarchy
            player.goal_government = gid
            player.revolution_finishes = state.turn + 2
        else:
            player.government = gid
            player.goal_government = NO_GOVERNMENT
        _clamp_rates(player, rs)
        state.add_event("revolution_started", player=player.id, target=gid,
                        finishes=player.revolution_finishes)
        return

    if prefix == "set_rates":
        lux, sci, tax = _int_params(params, 3)
        for value in (lux, sci, tax):
            _require(0 <= value <= 100 and value % 10 == 0, "target_invalid",
                     "rates are decades in [0, 100]")
        _require(lux + sci + tax == 100, "target_invalid", "rates must sum to 100")
        gov = rs.government_defs[player.government]
        _require(lux <= gov.max_luxury and sci <= gov.max_science
                 and tax <= gov.max_tax, "prerequisite_missing",
                 "rate exceeds government cap")
        if not run:
            return
        player.rate_luxury = lux
        player.rate_science = sci
        player.rate_tax = tax
        state.add_event("rates_set", player=player.id, luxury=lux, science=sci,
                        tax=tax)
        return

    raise ActionError("target_invalid", f"unhandled government action {prefix}")


def _technology_action(state: GameState, player: Player, prefix: str, params,
                       run: bool) -> None:
    rs = state.ruleset
    (tid,) = _int_params(params, 1)
    _require(0 <= tid < len(rs.tech_defs), "target_invalid", "bad tech index")
    _require(tid not in player.researched, "target_invalid", "already researched")

    if prefix == "research":
        prereqs = rs.tech_defs[tid].prerequisites
        _require(all(p in player.researched for p in prereqs),
                 "prerequisite_missing", "prerequisites not yet researched")
        _require(player.researching != tid, "target_invalid", "already researching")
        if not run:
            return
        player.researching = tid
        state.add_event("research_set", player=player.id, tech=tid)
        return

    if prefix == "tech_goal":
        _require(player.tech_goal != tid, "target_invalid", "goal already set")
        if not run:
            return
        player.tech_goal = tid
        if player.researching == NO_TECH:
            known = [t in player.researched for t in range(len(rs.tech_defs))]
            path = tech_reachable(rs, known, tid)
            if path:
                player.researching = path[0]
        state.add_event("tech_goal_set", player=player.id, tech=tid,
                        researching=player.researching)
        return

    raise ActionError("target_invalid", f"unhandled technology action {prefix}")


# ---------------------------------------------------------------------------
# Diplomacy actions


def _clause_signature(clause: list) -> tuple:
    return tuple(clause)


def _diplomacy_action(state: GameState, player: Player, prefix: str, params,
                      run: bool) -> None:
    rs = state.ruleset
    _require(len(params) >= 1, "target_invalid", "missing player parameter")
    try:
        pid = int(params[0])
    except ValueError:
        raise ActionError("target_invalid", "bad player parameter") from None
    other = state.players.get(pid)
    _require(other is not None and other.is_alive and pid != player.id,
             "target_invalid", "no such counterparty")
    rest = params[1:]

    if prefix == "start_negotiation":
        _require(contact_established(state, player.id, pid), "prerequisite_missing",
                 "no contact yet")
        _require(A.find_session(state, player.id, pid) is None, "target_invalid",
                 "negotiation already open")
        if not run:
            return
        state.negotiations[(player.id, pid)] = {
            "initiator": player.id, "responder": pid,
            "clauses": [], "accepted": [False, False],
        }
        state.add_event("negotiation_started", player=player.id, with_player=pid)
        return

    if prefix == "cancel_negotiation":
        session = A.find_session(state, player.id, pid)
        _require(session is not None, "target_invalid", "no open negotiation")
        if not run:
            return
        key = (session["initiator"], session["responder"])
        del state.negotiations[key]
        state.add_event("negotiation_cancelled", player=player.id, with_player=pid)
        return

    if prefix == "cancel_treaty":
        _require(contact_established(state, player.id, pid), "prerequisite_missing",
                 "no contact yet")
        current = player.relation(pid).state
        _require(0 < current < len(rs.diplomatic_states), "target_invalid",
                 "no pact to cancel")
        if not run:
            return
        player.relation_mut(pid).state = DIPL_WAR
        other.relation_mut(player.id).state = DIPL_WAR
        rel = other.relation_mut(player.id)
        rel.love = max(-1000, rel.love - 200)
        state.add_event("war_declared", player=player.id, with_player=pid)
        return

    if prefix == "cancel_vision":
        _require(player.relation(pid).shares_vision, "target_invalid",
                 "not sharing vision")
        if not run:
            return
        player.relation_mut(pid).shares_vision = False
        state.add_event("vision_cancelled", player=player.id, with_player=pid)
        return

    if prefix == "accept_treaty":
        session = A.find_session(state, player.id, pid)
        _require(session is not None, "target_invalid", "no open negotiation")
        side = 0 if session["initiator"] == player.id else 1
        _require(not session["accepted"][side], "target_invalid", "already accepted")
        if not run:
            return
        session["accepted"][side] = True
        state.add_event("treaty_accepted", player=player.id, with_player=pid)
        if all(session["accepted"]):
            _execute_treaty(state, session)
        return

    # Clause edits below require an open session.
    session = A.find_session(state, player.id, pid)
    _require(session is not None, "target_invalid", "no open negotiation")

    if prefix == "remove_clause":
        (idx,) = _int_params(rest, 1)
        _require(0 <= idx < len(session["clauses"]), "target_invalid", "bad clause index")
        if not run:
            return
        removed = session["clauses"].pop(idx)
        session["accepted"] = [False, False]
        state.add_event("clause_removed", player=player.id, with_player=pid,
                        clause=removed)
        return

    if prefix == "basic_clause":
        _require(len(rest) == 1, "target_invalid", "expected clause kind")
        kind = rest[0]
        _require(kind in A.BASIC_CLAUSE_KINDS, "target_invalid", "unknown clause kind")
        clause = ["basic", player.id, kind]
        _require(_clause_signature(clause) not in
                 {_clause_signature(c) for c in session["clauses"]},
                 "target_invalid", "clause already present")
        if not run:
            return
        session["clauses"].append(clause)
        session["accepted"] = [False, False]
        state.add_event("clause_added", player=player.id, with_player=pid,
                        clause=clause)
        return

    if prefix in ("trade_tech", "trade_gold", "trade_city"):
        _require(len(rest) == 2, "target_invalid", "expected giver and payload")
        try:
            giver = int(rest[0])
            payload = int(rest[1])
        except ValueError:
            raise ActionError("target_invalid", "bad clause parameters") from None
        _require(giver in (player.id, pid), "target_invalid",
                 "giver must be a negotiation party")
        receiver = pid if giver == player.id else player.id
        if prefix == "trade_tech":
            _require(0 <= payload < len(rs.tech_defs), "target_invalid", "bad tech")
            _require(payload in state.players[giver].researched,
                     "target_invalid", "giver lacks that tech")
            _require(payload not in state.players[receiver].researched,
                     "target_invalid", "receiver already has that tech")
            clause = ["tech", giver, payload]
        elif prefix == "trade_gold":
            _require(payload in A.GOLD_CLAUSE_AMOUNTS, "target_invalid",
                     "gold amount not offered")
            pledged = sum(c[2] for c in session["clauses"]
                          if c[0] == "gold" and c[1] == giver)
            _require(state.players[giver].gold >= pledged + payload,
                     "insufficient_gold", "giver cannot cover pledged gold")
            clause = ["gold", giver, payload]
        else:
            city = state.cities.get(payload)
            _require(city is not None and city.owner == giver, "target_invalid",
                     "giver does not own that city")
            clause = ["city", giver, payload]
        _require(_clause_signature(clause) not in
                 {_clause_signature(c) for c in session["clauses"]},
                 "target_invalid", "clause already present")
        if not run:
            return
        session["clauses"].append(clause)
        session["accepted"] = [False, False]
        state.add_event("clause_added", player=player.id, with_player=pid,
                        clause=clause)
        return

    raise ActionError("target_invalid", f"unhandled diplomacy action {prefix}")


def _treaty_assets_valid(state: GameState, session: dict) -> bool:
    a, b = session["initiator"], session["responder"]
    pledged_gold = {a: 0, b: 0}
    for kind, giver, payload in session["clauses"]:
        receiver = b if giver == a else a
        if kind == "tech":
            if payload not in state.players[giver].researched:
                return False
            if payload in state.players[receiver].researched:
                return False
        elif kind == "gold":
            pledged_gold[giver] += payload
        elif kind == "city":
            city = state.cities.get(payload)
            if city is None or city.owner != giver:
                return False
    return all(state.players[g].gold >= amount for g, amount in pledged_gold.items())


def _execute_treaty(state: GameState, session: dict) -> None:
    a, b = session["initiator"], session["responder"]
    key = (a, b)
    if not _treaty_assets_valid(state, session):
        del state.negotiations[key]
        state.add_event("treaty_cancelled", players=[a, b], reason="assets")
        return
    for kind, giver, payload in session["clauses"]:
        receiver = b if giver == a else a
        if kind == "tech":
            state.players[receiver].researched.add(payload)
            state.add_event("tech_traded", from_player=giver, to_player=receiver,
                            tech=payload)
        elif kind == "gold":
            state.players[giver].gold -= payload
            state.players[receiver].gold += payload
            state.add_event("gold_traded", from_player=giver, to_player=receiver,
                            amount=payload)
        elif kind == "city":
            city = state.cities[payload]
            _transfer_city(state, city, receiver)
            state.add_event("city_traded", from_player=giver, to_player=receiver,
                            city=payload)
        elif kind == "basic":
            name = payload.capitalize()
            if name in state.ruleset.diplomatic_states:
                idx = state.ruleset.diplomatic_states.index(name)
                state.players[a].relation_mut(b).state = idx
                state.players[b].relation_mut(a).state = idx
                state.add_event("pact_signed", players=[a, b], state=payload)
            elif payload == "embassy":
                state.players[receiver].relation_mut(giver).embassy = True
                state.add_event("embassy_established", player=receiver,
                                with_player=giver, city=None)
            elif payload == "vision":
                state.players[giver].relation_mut(receiver).shares_vision = True
                state.add_event("vision_shared", from_player=giver,
                                to_player=receiver)
    for x, yy in ((a, b), (b, a)):
        rel = state.players[x].relation_mut(yy)
        rel.love = min(1000, rel.love + 50)
    del state.negotiations[key]
    state.add_event("treaty_executed", players=[a, b],
                    clauses=[list(c) for c in session["clauses"]])


# ---------------------------------------------------------------------------
# Dispatch


def check_action(state: GameState, player_id: int, triplet) -> None:
    """Raise ActionError when triplet is illegal for player right now."""
    _dispatch(state, player_id, triplet, run=False)


def apply_action(state: GameState, player_id: int, triplet) -> list:
    """Validate then apply; returns the events the action appended."""
    before = len(state.events)
    _dispatch(state, player_id, triplet, run=False)
    _dispatch(state, player_id, triplet, run=True)
    refresh_all_visibility(state)
    update_contacts(state)
    if len(state.events) > before:
        state.events[-1]["draws"] = state.rng.draws
    return state.events[before:]


def _dispatch(state: GameState, player_id: int, triplet, run: bool) -> None:
    if isinstance(triplet, ActionTriplet):
        actor_type, actor_id, key = triplet.as_tuple()
    else:
        actor_type, actor_id, key = triplet
    player = state.players.get(player_id)
    _require(player is not None and player.is_alive, "wrong_owner", "unknown player")
    _require(state.current_player == player_id, "not_your_turn",
             f"current player is {state.current_player}")
    _require(actor_type in A.ACTOR_TYPES, "target_invalid",
             f"unknown actor type {actor_type}")
    try:
        prefix, params = A.split_key(key, A.PREFIXES_BY_ACTOR[actor_type])
    except A.KeyParseError as exc:
        raise ActionError("target_invalid", str(exc)) from None

    if actor_type == "unit":
        unit = state.units.get(actor_id)
        _require(unit is not None, "target_invalid", "no such unit")
        _require(unit.owner == player_id, "wrong_owner", "not your unit")
        _unit_action(state, player, unit, prefix, params, run)
    elif actor_type == "city":
        city = state.cities.get(actor_id)
        _require(city is not None, "target_invalid", "no such city")
        _require(city.owner == player_id, "wrong_owner", "not your city")
        _city_action(state, player, city, prefix, params, run)
    else:
        _require(actor_id == player_id, "wrong_owner",
                 f"{actor_type} actions use your own player id")
        if actor_type == "government":
            _government_action(state, player, prefix, params, run)
        elif actor_type == "technology":
            _technology_action(state, player, prefix, params, run)
        else:
            _diplomacy_action(state, player, prefix, params, run)


def legal_actions(state: GameState, player_id: int) -> dict:
    """All currently legal action keys, grouped by (actor_type, actor_id)."""
    player = state.players.get(player_id)
    _require(player is not None and player.is_alive, "wrong_owner", "unknown player")
    _require(state.current_player == player_id, "not_your_turn",
             f"current player is {state.current_player}")
    result = {}

    def probe(actor_type, actor_id, keys):
        legal = []
        for key in keys:
            try:
                _dispatch(state, player_id, (actor_type, actor_id, key), run=False)
            except ActionError:
                continue
            legal.append(key)
        if legal:
            result[(actor_type, actor_id)] = legal

    for uid in sorted(state.units):
        if state.units[uid].owner == player_id:
            probe("unit", uid, A.UNIT_ACTION_KEYS)
    city_keys = A.city_action_keys(state.ruleset)
    for cid in sorted(state.cities):
        if state.cities[cid].owner == player_id:
            probe("city", cid, city_keys)
    probe("government", player_id, A.government_action_keys(state.ruleset))
    probe("technology", player_id, A.technology_action_keys(state.ruleset))
    probe("diplomacy", player_id, A.diplomacy_action_keys(state, player_id))
    return result


# ---------------------------------------------------------------------------
# Turn advancement


def turn_done(state: GameState, player_id: int) -> list:
    """Mark the player done; advances the cursor or rolls the turn over."""
    player = state.players.get(player_id)
    _require(player is not None and player.is_alive, "wrong_owner", "unknown player")
    _require(state.current_player == player_id, "not_your_turn",
             f"current player is {state.current_player}")
    before = len(state.events)
    state.add_event("turn_done", player=player_id)
    later = [pid for pid in sorted(state.players)
             if pid > player_id and state.players[pid].is_alive]
    if later:
        state.current_player = later[0]
    else:
        end_turn(state)
    return state.events[before:]


def end_turn(state: GameState) -> list:
    """Advance the world one turn: economy, research, upkeep, eliminations."""
    before = len(state.events)

    for cid in sorted(state.cities):
        refresh_city_economy(state, state.cities[cid])
    for cid in sorted(state.cities):
        if cid in state.cities:
            _city_growth(state, state.cities[cid])
    for cid in sorted(state.cities):
        if cid in state.cities:
            _city_production(state, state.cities[cid])

    for pid in sorted(state.players):
        player = state.players[pid]
        if not player.is_alive:
            continue
        _player_research(state, player)
        _player_income(state, player)
        if player.revolution_finishes >= 0 and state.turn + 1 >= player.revolution_finishes:
            player.government = player.goal_government
            player.goal_government = NO_GOVERNMENT
            player.revolution_finishes = -1
            _clamp_rates(player, state.ruleset)
            state.add_event("revolution_finished", player=pid,
                            government=player.government)

    for unit in state.units.values():
        udef = state.ruleset.unit_defs[unit.type]
        unit.moves_left = udef.move_points
        city = state.city_at(unit.x, unit.y)
        if city is not None and city.owner == unit.owner:
            unit.hp = udef.max_hp
        else:
            unit.hp = min(udef.max_hp, unit.hp + 1)

    _disorder_and_secession(state)
    _eliminations(state)

    for pid in sorted(state.players):
        player = state.players[pid]
        if player.is_alive:
            player.turns_alive += 1
            player.score = max(0, min(65535, int(round(
                metrics.aggregate_score(state, pid)))))

    state.turn += 1
    alive = sorted(p.id for p in state.alive_players())
    if alive:
        state.current_player = alive[0]
    refresh_all_visibility(state)
    update_contacts(state)
    state.add_event("turn_end", draws=state.rng.draws)
    return state.events[before:]


def refresh_city_economy(state: GameState, city: City) -> None:
    """Recompute a city's outputs, surpluses, moods, and civil state."""
    rs = state.ruleset
    player = state.players[city.owner]

    for offset in list(city.worked):
        x, y = city.x + offset[0], city.y + offset[1]
        if not state.world.in_bounds(x, y) or foreign_units_at(state, city.owner, x, y):
            city.worked.remove(offset)
            city.specialists["luxury"] += 1

    food, shield, trade = tile_yield(state, city.x, city.y)
    food = max(1, food)
    shield = max(1, shield)
    for dx, dy in city.worked:
        f, s, t = tile_yield(state, city.x + dx, city.y + dy)
        food += f
        shield += s
        trade += t
    trade += 2 * len(city.trade_partners)

    sci = trade * player.rate_science // 100
    lux = trade * player.rate_luxury // 100
    gold = trade - sci - lux
    lux += 2 * city.specialists["luxury"]
    sci += 2 * city.specialists["science"]
    gold += 2 * city.specialists["tax"]

    if _has_building(state, city, "Marketplace"):
        gold += gold // 2
        lux += lux // 2
    if _has_building(state, city, "Bank"):
        gold += gold // 2
    if _has_building(state, city, "Stock Exchange"):
        gold += gold // 2
    bulbs = sci
    for name in ("Library", "University", "Research Lab"):
        if _has_building(state, city, name):
            bulbs += sci // 2
    if _has_building(state, city, "Factory"):
        shield += shield // 2
    if _has_building(state, city, "Mfg. Plant"):
        shield += shield // 2

    unhappy = max(0, city.size - 4)
    content = city.size - unhappy
    happy = 0
    for name, relief in (("Temple", 2), ("Colosseum", 3)):
        if _has_building(state, city, name):
            moved = min(relief, unhappy)
            unhappy -= moved
            content += moved
    for _ in range(lux // 2):
        if content > 0:
            content -= 1
            happy += 1
        elif unhappy > 0:
            unhappy -= 1
            content += 1
        else:
            break

    if unhappy > happy:
        city.state = "disorder"
    elif unhappy == 0 and happy * 2 >= city.size and city.size >= 3:
        city.state = "celebrating"
    else:
        city.state = "peace"

    if city.state == "disorder":
        shield = 0
        trade = 0
        gold = 0
        sci = 0
        bulbs = 0

    home_units = [u for u in state.units.values() if u.home_city == city.id]
    shield_upkeep = sum(u.upkeep_shield for u in home_units)
    food_upkeep = sum(u.upkeep_food for u in home_units)
    building_upkeep = sum(rs.building_defs[b].upkeep for b in city.buildings)

    city.output_food = food
    city.output_shield = shield
    city.output_trade = trade
    city.output_gold = gold
    city.output_science = sci
    city.output_luxury = lux
    city.output_bulbs = bulbs
    city.surplus_food = food - 2 * city.size - food_upkeep
    city.surplus_shield = shield - shield_upkeep
    city.surplus_gold = gold - building_upkeep
    city.surplus_trade = trade
    city.angry = 0
    city.unhappy = unhappy
    city.content = content
    city.happy = happy


def _city_growth(state: GameState, city: City) -> None:
    threshold = city.granary_size
    city.food_stock += city.surplus_food
    if city.food_stock >= threshold:
        city.size += 1
        city.food_stock = threshold // 2 if _has_building(state, city, "Granary") else 0
        city.specialists["luxury"] += 1
        _auto_assign_citizen(state, city)
        state.add_event("city_grown", player=city.owner, city=city.id, size=city.size)
    elif city.food_stock < 0:
        city.food_stock = 0
        if city.size > 1:
            city.size -= 1
            _drop_citizen(state, city)
            state.add_event("city_famine", player=city.owner, city=city.id,
                            size=city.size)


def _city_production(state: GameState, city: City) -> None:
    if city.state != "disorder":
        city.shield_stock += max(0, city.surplus_shield)
    cost = production_cost(state, city)
    if cost <= 0 or city.shield_stock < cost:
        return
    rs = state.ruleset
    if city.production_kind == "unit":
        udef = rs.unit_defs[city.production_value]
        veteran = udef.is_military and any(
            _has_building(state, city, n) for n in BARRACKS_NAMES)
        unit = spawn_unit(state, city.owner, city.production_value,
                          city.x, city.y, home_city=city.id, veteran=veteran)
        city.shield_stock -= cost
        city.last_completion_turn = state.turn
        state.add_event("unit_completed", player=city.owner, city=city.id,
                        unit=unit.id, type=city.production_value)
    else:
        bid = city.production_value
        bdef = rs.building_defs[bid]
        if bdef.is_wonder and wonder_built_anywhere(state, bid):
            city.production_kind = "unit"
            city.production_value = cheapest_buildable_unit(state, city)
            state.add_event("wonder_preempted", player=city.owner, city=city.id,
                            building=bid)
            return
        city.buildings.append(bid)
        city.shield_stock -= cost
        city.last_completion_turn = state.turn
        state.add_event("building_completed", player=city.owner, city=city.id,
                        building=bid)
        city.production_kind = "unit"
        city.production_value = cheapest_buildable_unit(state, city)


def _player_research(state: GameState, player: Player) -> None:
    player.bulbs_researched += sum(
        c.output_bulbs for c in state.cities.values() if c.owner == player.id)
    while player.researching != NO_TECH:
        cost = research_cost(state, player)
        if player.bulbs_researched < cost:
            break
        player.bulbs_researched -= cost
        tech = player.researching
        player.researched.add(tech)
        state.add_event("tech_researched", player=player.id, tech=tech)
        player.researching = NO_TECH
        if player.tech_goal != NO_TECH:
            if player.tech_goal in player.researched:
                player.tech_goal = NO_TECH
            else:
                known = [t in player.researched
                         for t in range(len(state.ruleset.tech_defs))]
                path = tech_reachable(state.ruleset, known, player.tech_goal)
                if path:
                    player.researching = path[0]


def _player_income(state: GameState, player: Player) -> None:
    own_cities = [c for c in state.cities.values() if c.owner == player.id]
    income = sum(c.output_gold for c in own_cities)
    upkeep_due = sum(
        state.ruleset.building_defs[b].upkeep for c in own_cities for b in c.buildings)
    upkeep_due += sum(u.upkeep_gold for u in state.units.values()
                      if u.owner == player.id)
    paid = min(player.gold + income, upkeep_due)
    player.gold = player.gold + income - paid
    state.add_event("player_income", player=player.id, income=income,
                    upkeep_due=upkeep_due, upkeep_paid=paid, gold=player.gold)


def _disorder_and_secession(state: GameState) -> None:
    for cid in sorted(state.cities):
        city = state.cities[cid]
        if city.state == "disorder":
            city.disorder_turns += 1
        else:
            city.disorder_turns = 0
            continue
        owner_cities = sum(1 for c in state.cities.values() if c.owner == city.owner)
        if city.disorder_turns >= 3 and owner_cities >= 2 and state.next_player_id <= 255:
            rebel = Player(
                id=state.next_player_id,
                name=f"Player {state.next_player_id}",
                team=state.next_player_id,
                nation=state.next_player_id % 560,
                government=state.ruleset.initial_government,
            )
            state.next_player_id += 1
            state.players[rebel.id] = rebel
            old_owner = city.owner
            rebel.relation_mut(old_owner).state = DIPL_WAR
            state.players[old_owner].relation_mut(rebel.id).state = DIPL_WAR
            _transfer_city(state, city, rebel.id)
            city.disorder_turns = 0
            state.add_event("city_seceded", city=city.id, from_player=old_owner,
                            to_player=rebel.id)


def _eliminations(state: GameState) -> None:
    for pid in sorted(state.players):
        player = state.players[pid]
        if not player.is_alive:
            continue
        has_units = any(u.owner == pid for u in state.units.values())
        has_cities = any(c.owner == pid for c in state.cities.values())
        if not has_units and not has_cities:
            player.frozen_score = metrics.score_vector(state, pid)
            player.is_alive = False
            state.add_event("player_eliminated", player=pid)


# ---------------------------------------------------------------------------
# Victory


def full_game_result(state: GameState) -> dict:
    alive = state.alive_players()
    if len({p.team for p in alive}) <= 1:
        return {"status": "over", "reason": "conquest",
                "winners": sorted(p.id for p in alive)}
    for player in sorted(alive, key=lambda p: p.id):
        if metrics.spaceship_complete(state, player.id):
            return {"status": "over", "reason": "science", "winners": [player.id]}
    if state.turn >= state.config.max_turns:
        best = max(alive, key=lambda p: (p.score, -p.id)) if alive else None
        winners = [best.id] if best else []
        return {"status": "over", "reason": "time", "winners": winners}
    return {"status": "ongoing"}
