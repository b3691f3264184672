"""Scripted players.

Three general policies fill empty server slots (random, expander,
aggressor) and three negotiator policies answer treaty proposals in
the tech-trading mini-game. A policy takes its turn by applying
actions directly to the state, then marks the player done; it returns
the list of triplets it executed, ending with the turn-done sentinel.
Every draw comes from the caller's RNG, so a session replays exactly.
"""

from __future__ import annotations

from . import actions as A
from . import engine
from .engine import ActionError
from .minigames import work_area_value
from .rng import GameRng, derive_seed
from .world import NO_TECH, GameState

AI_LEVELS = ("random", "expander", "aggressor")
NEGOTIATOR_AIS = ("negotiator_generous", "negotiator_fair", "negotiator_shrewd")

TURN_DONE = ("player", -1, "end_turn")

MAX_ACTIONS_PER_TURN = 64
MAX_ACTIONS_PER_UNIT = 6

DIR_BY_DELTA = {delta: d for d, delta in A.DIRECTIONS.items()}

CITY_TRADE_VALUE = 200


def session_rng(seed: int, player_id: int) -> GameRng:
    """The per-player RNG stream a session uses to drive this policy."""
    return GameRng(derive_seed(seed, f"ai-{player_id}"))


def builtin_ai_act(state: GameState, player_id: int, level: str,
                   rng: GameRng) -> list:
    """Play out one turn for the player; returns the applied triplets."""
    applied = []
    if level == "random":
        _random_turn(state, player_id, rng, applied)
    elif level == "expander":
        _expander_turn(state, player_id, rng, applied)
    elif level == "aggressor":
        _aggressor_turn(state, player_id, rng, applied)
    elif level in NEGOTIATOR_AIS:
        _negotiator_turn(state, player_id, level.split("_", 1)[1], applied)
    else:
        raise ValueError(f"unknown AI level {level!r}")
    engine.turn_done(state, player_id)
    applied.append(TURN_DONE)
    return applied


def _try(state: GameState, player_id: int, triplet: tuple, applied: list) -> bool:
    try:
        engine.apply_action(state, player_id, triplet)
    except ActionError:
        return False
    applied.append(triplet)
    return True


# ---------------------------------------------------------------------------
# Random policy


def _random_turn(state: GameState, player_id: int, rng: GameRng,
                 applied: list) -> None:
    for _ in range(MAX_ACTIONS_PER_TURN):
        legal = engine.legal_actions(state, player_id)
        flat = [(actor, key) for actor, keys in sorted(legal.items())
                for key in keys]
        if not flat or rng.chance(1, 4):
            return
        actor, key = flat[rng.randbelow(len(flat))]
        engine.apply_action(state, player_id, (actor[0], actor[1], key))
        applied.append((actor[0], actor[1], key))


# ---------------------------------------------------------------------------
# Movement helpers shared by the goal-directed policies


def _own_units(state: GameState, player_id: int) -> list:
    return sorted((u for u in state.units.values() if u.owner == player_id),
                  key=lambda u: u.id)


def _step_toward(state: GameState, player_id: int, unit, tx: int, ty: int,
                 rng: GameRng, applied: list) -> bool:
    """One greedy move toward (tx, ty); falls back to any legal step."""
    dx = (tx > unit.x) - (tx < unit.x)
    dy = (ty > unit.y) - (ty < unit.y)
    candidates = []
    if (dx, dy) != (0, 0):
        candidates.append((dx, dy))
        # Slide along one axis when the diagonal is blocked.
        if dx and dy:
            candidates.extend([(dx, 0), (0, dy)])
    for delta in candidates:
        if _try(state, player_id, ("unit", unit.id, f"goto_{DIR_BY_DELTA[delta]}"),
                applied):
            return True
    return _random_step(state, player_id, unit, rng, applied)


def _random_step(state: GameState, player_id: int, unit, rng: GameRng,
                 applied: list) -> bool:
    order = sorted(A.DIRECTIONS)
    start = rng.randbelow(len(order))
    for i in range(len(order)):
        d = order[(start + i) % len(order)]
        if _try(state, player_id, ("unit", unit.id, f"goto_{d}"), applied):
            return True
    return False


def _nearest(items, x: int, y: int):
    """Deterministic nearest pick: Chebyshev distance, then position."""
    best = None
    best_key = None
    for ix, iy in items:
        key = (max(abs(ix - x), abs(iy - y)), ix, iy)
        if best_key is None or key < best_key:
            best_key = key
            best = (ix, iy)
    return best


def _explore_step(state: GameState, player_id: int, unit, rng: GameRng,
                  applied: list) -> bool:
    grid = state.world.ensure_status(player_id)
    unknown = [(x, y) for x in range(state.world.width)
               for y in range(state.world.height) if grid[x, y] == 0]
    if unknown:
        tx, ty = _nearest(unknown, unit.x, unit.y)
        return _step_toward(state, player_id, unit, tx, ty, rng, applied)
    return _random_step(state, player_id, unit, rng, applied)


# ---------------------------------------------------------------------------
# Expander: settle good land, improve it, keep research moving


def _explored_land_tiles(state: GameState, player_id: int) -> list:
    grid = state.world.ensure_status(player_id)
    out = []
    for x in range(state.world.width):
        for y in range(state.world.height):
            if grid[x, y] >= 1 and \
                    state.ruleset.terrain_defs[int(state.world.terrain[x, y])].is_land:
                out.append((x, y))
    return out


def _pick_research(state: GameState, player_id: int, applied: list) -> None:
    player = state.players[player_id]
    if player.researching != NO_TECH:
        return
    options = [
        (tdef.cost, idx)
        for idx, tdef in enumerate(state.ruleset.tech_defs)
        if idx not in player.researched
        and all(p in player.researched for p in tdef.prerequisites)
    ]
    if options:
        _, tech = min(options)
        _try(state, player_id, ("technology", player_id, f"research_{tech}"),
             applied)


def _expander_turn(state: GameState, player_id: int, rng: GameRng,
                   applied: list) -> None:
    _pick_research(state, player_id, applied)
    rs = state.ruleset

    settler_type = next((i for i, u in enumerate(rs.unit_defs) if u.is_settler),
                        None)
    own_settlers = sum(1 for u in state.units.values()
                       if u.owner == player_id and rs.unit_defs[u.type].is_settler)
    if settler_type is not None and own_settlers == 0:
        for city in sorted(state.cities.values(), key=lambda c: c.id):
            if city.owner != player_id:
                continue
            if (city.production_kind, city.production_value) == \
                    ("unit", settler_type):
                continue
            if _try(state, player_id,
                    ("city", city.id, f"produce_unit_{settler_type}"), applied):
                break

    explored = _explored_land_tiles(state, player_id)
    area = {t: work_area_value(state, t[0], t[1]) for t in explored}
    for unit in _own_units(state, player_id):
        udef = rs.unit_defs[unit.type]
        for _ in range(MAX_ACTIONS_PER_UNIT):
            if unit.id not in state.units or unit.moves_left < 1:
                break
            if udef.is_settler:
                here = work_area_value(state, unit.x, unit.y)
                best = max(area.values()) if area else here
                if here >= best - 1e-9:
                    if _try(state, player_id, ("unit", unit.id, "build_city"),
                            applied):
                        break
                    if not _random_step(state, player_id, unit, rng, applied):
                        break
                else:
                    targets = [t for t, v in area.items() if v >= best - 1e-9]
                    tx, ty = _nearest(targets, unit.x, unit.y)
                    if not _step_toward(state, player_id, unit, tx, ty, rng,
                                        applied):
                        break
            elif udef.is_worker:
                worked = False
                for key in ("build_road", "irrigate", "mine"):
                    if _try(state, player_id, ("unit", unit.id, key), applied):
                        worked = True
                        break
                if not worked and not _explore_step(state, player_id, unit,
                                                    rng, applied):
                    break
            else:
                if not _explore_step(state, player_id, unit, rng, applied):
                    break


# ---------------------------------------------------------------------------
# Aggressor: close with the nearest visible enemy and strike


def _visible_enemy_tiles(state: GameState, player_id: int) -> list:
    grid = state.world.ensure_status(player_id)
    tiles = []
    for unit in state.units.values():
        if unit.owner != player_id and grid[unit.x, unit.y] == 2:
            tiles.append((unit.x, unit.y))
    for city in state.cities.values():
        if city.owner != player_id and grid[city.x, city.y] == 2:
            tiles.append((city.x, city.y))
    return tiles


def _strike_adjacent(state: GameState, player_id: int, unit,
                     applied: list) -> bool:
    for d in sorted(A.DIRECTIONS):
        if _try(state, player_id, ("unit", unit.id, f"attack_{d}"), applied):
            return True
    for d in sorted(A.DIRECTIONS):
        if _try(state, player_id, ("unit", unit.id, f"conquer_city_{d}"),
                applied):
            return True
    return False


def _aggressor_turn(state: GameState, player_id: int, rng: GameRng,
                    applied: list) -> None:
    rs = state.ruleset
    for unit in _own_units(state, player_id):
        udef = rs.unit_defs[unit.type]
        if not udef.is_military:
            continue
        for _ in range(MAX_ACTIONS_PER_UNIT):
            if unit.id not in state.units or unit.moves_left < 1:
                break
            if _strike_adjacent(state, player_id, unit, applied):
                continue
            enemies = _visible_enemy_tiles(state, player_id)
            if enemies:
                tx, ty = _nearest(enemies, unit.x, unit.y)
                if max(abs(tx - unit.x), abs(ty - unit.y)) <= 1:
                    break  # adjacent but nothing strikeable (not at war yet)
                if not _step_toward(state, player_id, unit, tx, ty, rng,
                                    applied):
                    break
            else:
                if not _explore_step(state, player_id, unit, rng, applied):
                    break


# ---------------------------------------------------------------------------
# Negotiators: answer open treaty proposals by value


def _clause_value(state: GameState, clause) -> int:
    kind, _, payload = clause
    if kind == "tech":
        return state.ruleset.tech_defs[payload].cost
    if kind == "gold":
        return payload
    if kind == "city":
        return CITY_TRADE_VALUE
    return 0


def _deal_balance(state: GameState, session: dict, player_id: int) -> tuple:
    a, b = session["initiator"], session["responder"]
    received = 0
    given = 0
    for clause in session["clauses"]:
        giver = clause[1]
        receiver = b if giver == a else a
        value = _clause_value(state, clause)
        if receiver == player_id:
            received += value
        if giver == player_id:
            given += value
    return received, given


def _acceptable(policy: str, received: int, given: int) -> bool:
    if policy == "generous":
        return received > 0
    if policy == "fair":
        return received >= given
    if policy == "shrewd":
        return received > given
    raise ValueError(f"unknown negotiator policy {policy!r}")


def _negotiator_turn(state: GameState, player_id: int, policy: str,
                     applied: list) -> None:
    for key in sorted(state.negotiations):
        if player_id not in key:
            continue
        session = state.negotiations[key]
        other = key[0] if key[1] == player_id else key[1]
        side = 0 if session["initiator"] == player_id else 1
        if session["accepted"][side]:
            continue
        if not session["clauses"]:
            continue  # empty table; leave it to the proposer
        received, given = _deal_balance(state, session, player_id)
        if _acceptable(policy, received, given):
            _try(state, player_id,
                 ("diplomacy", player_id, f"accept_treaty_{other}"), applied)
        else:
            _try(state, player_id,
                 ("diplomacy", player_id, f"cancel_negotiation_{other}"),
                 applied)
