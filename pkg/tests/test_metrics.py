"""Score vectors, aggregate weighting, and event-log counter oracles."""

import dataclasses

import pytest

from civarena import engine, metrics
from civarena.rng import GameRng, derive_seed
from civarena.ruleset import builtin_ruleset_path, load_ruleset
from civarena.world import (
    COUNTER_KEYS,
    FAT_CROSS_OFFSETS,
    GameConfig,
    new_game,
    refresh_all_visibility,
    remove_unit,
    spawn_unit,
)


@pytest.fixture(scope="module")
def mini():
    return load_ruleset(builtin_ruleset_path("mini"))


def flat_state(rs, width=9, height=9, players=2, seed=0):
    state = new_game(rs, GameConfig(width=width, height=height,
                                    players=players, seed=seed))
    state.world.terrain[:, :] = rs.terrain_index("Grassland")
    state.world.infra[:, :] = 0
    for uid in list(state.units):
        remove_unit(state, uid)
    for p in state.players.values():
        p.counters = {k: 0 for k in COUNTER_KEYS}
        p.relations.clear()
    refresh_all_visibility(state)
    return state


def random_game(rs, seed, max_turns=100, width=12, height=12,
                on_turn_end=None):
    cfg = GameConfig(width=width, height=height, players=2, seed=seed,
                     max_turns=max_turns)
    state = new_game(rs, cfg)
    ai = {p: GameRng(derive_seed(seed, f"ai-{p}")) for p in state.players}
    guard = 0
    while engine.full_game_result(state)["status"] == "ongoing" and guard < 8000:
        guard += 1
        pid = state.current_player
        if pid not in ai:
            ai[pid] = GameRng(derive_seed(seed, f"ai-{pid}"))
        legal = engine.legal_actions(state, pid)
        flat = [(a, k) for a, keys in sorted(legal.items()) for k in keys]
        rng = ai[pid]
        turn_before = state.turn
        if not flat or rng.chance(1, 4):
            engine.turn_done(state, pid)
        else:
            actor, key = flat[rng.randbelow(len(flat))]
            engine.apply_action(state, pid, (actor[0], actor[1], key))
        if on_turn_end is not None and state.turn != turn_before:
            on_turn_end(state)
    return state


def dim(vector, key):
    return vector[metrics.SCORE_KEYS.index(key)]


# ---------------------------------------------------------------------------
# Counter reconstruction purely from the event log


def fold_counters(events, player_ids):
    """Independent per-player counter tally folded from game events."""
    tally = {p: {k: 0 for k in COUNTER_KEYS} for p in player_ids}
    for e in events:
        kind = e["kind"]
        if kind in ("unit_completed", "hut_unit"):
            tally[e["player"]]["units_built"] += 1
        elif kind in ("unit_disbanded", "trade_route_established",
                      "city_founded", "city_joined"):
            tally[e["player"]]["units_used"] += 1
        elif kind == "unit_bribed":
            tally[e["player"]]["units_built"] += 1
            tally[e["from_player"]]["units_lost"] += 1
        elif kind == "combat":
            if e["winner"] == "attacker":
                killer, victim = e["player"], e["defender_owner"]
            else:
                killer, victim = e["defender_owner"], e["player"]
            tally[killer]["units_killed"] += 1
            tally[victim]["units_lost"] += 1
        elif kind == "unit_drowned":
            tally[e["player"]]["units_lost"] += 1
            tally[e["killer"]]["units_killed"] += 1
    return tally


@pytest.mark.parametrize("seed", [11, 47])
def test_counters_equal_event_log_fold_over_random_game(mini, seed):
    cfg = GameConfig(width=12, height=12, players=2, seed=seed, max_turns=100)
    state = new_game(mini, cfg)
    baseline = {p: dict(pl.counters) for p, pl in state.players.items()}
    start = len(state.events)

    ai = {p: GameRng(derive_seed(seed, f"ai-{p}")) for p in state.players}
    guard = 0
    while engine.full_game_result(state)["status"] == "ongoing" and guard < 8000:
        guard += 1
        pid = state.current_player
        if pid not in ai:
            ai[pid] = GameRng(derive_seed(seed, f"ai-{pid}"))
        legal = engine.legal_actions(state, pid)
        flat = [(a, k) for a, keys in sorted(legal.items()) for k in keys]
        rng = ai[pid]
        if not flat or rng.chance(1, 4):
            engine.turn_done(state, pid)
        else:
            actor, key = flat[rng.randbelow(len(flat))]
            engine.apply_action(state, pid, (actor[0], actor[1], key))

    assert state.turn >= 20  # the fold saw a real game
    tally = fold_counters(state.events[start:], state.players)
    for pid, player in state.players.items():
        base = baseline.get(pid, {k: 0 for k in COUNTER_KEYS})
        for key in COUNTER_KEYS:
            assert player.counters[key] == base.get(key, 0) + tally[pid][key], (
                pid, key)


@pytest.mark.parametrize("seed", [5, 23])
def test_counters_are_monotone_nondecreasing(mini, seed):
    previous = {}

    def check(state):
        for pid, player in state.players.items():
            before = previous.get(pid, {k: 0 for k in COUNTER_KEYS})
            for key in COUNTER_KEYS:
                assert player.counters[key] >= before[key]
            previous[pid] = dict(player.counters)

    random_game(mini, seed, max_turns=80, on_turn_end=check)
    assert previous  # at least one turn completed


# ---------------------------------------------------------------------------
# Vector dimensions


def test_fresh_game_has_no_cities_kills_or_losses(mini):
    state = new_game(mini, GameConfig(width=9, height=9, players=2, seed=3))
    vector = metrics.score_vector(state, 0)
    assert dim(vector, "cities") == 0
    assert dim(vector, "units_killed") == 0
    assert dim(vector, "units_lost") == 0
    assert dim(vector, "units_used") == 0
    # opening units count toward the build ledger
    assert dim(vector, "units_built") == len(mini.opening_units)


def test_fresh_game_without_opening_units_is_all_zero_counters(mini):
    bare = dataclasses.replace(mini, opening_units=())
    state = new_game(bare, GameConfig(width=9, height=9, players=2, seed=3))
    vector = metrics.score_vector(state, 0)
    for key in ("units_built", "units_killed", "units_lost", "units_used",
                "cities", "population", "wonders"):
        assert dim(vector, key) == 0, key


def test_producing_a_unit_increments_units_built_by_one(mini):
    state = flat_state(mini)
    engine._found_city(state, state.players[0], 4, 4)
    city = next(c for c in state.cities.values() if c.owner == 0)
    engine.apply_action(
        state, 0, ("city", city.id, f"produce_unit_{mini.unit_index('Warriors')}"))
    city.shield_stock = 10_000
    before = state.players[0].counters["units_built"]
    engine.turn_done(state, 0)
    engine.turn_done(state, 1)
    assert state.players[0].counters["units_built"] == before + 1


def test_vector_matches_registry_recount_after_random_game(mini):
    state = random_game(mini, 61, max_turns=60)
    for pid, player in state.players.items():
        if not player.is_alive:
            continue
        vector = metrics.score_vector(state, pid)
        cities = [c for c in state.cities.values() if c.owner == pid]
        units = [u for u in state.units.values() if u.owner == pid]
        wonders = sum(1 for c in cities for b in c.buildings
                      if mini.building_defs[b].is_wonder)
        settled = set()
        for c in cities:
            for dx, dy in FAT_CROSS_OFFSETS:
                if state.world.in_bounds(c.x + dx, c.y + dy):
                    settled.add((c.x + dx, c.y + dy))
        owned = sum(1 for x in range(state.world.width)
                    for y in range(state.world.height)
                    if state.world.tile_owner[x, y] == pid)
        assert dim(vector, "population") == sum(c.size for c in cities)
        assert dim(vector, "economics") == sum(c.output_gold for c in cities)
        assert dim(vector, "production") == sum(c.output_shield for c in cities)
        assert dim(vector, "cities") == len(cities)
        assert dim(vector, "researched_techs") == len(player.researched)
        assert dim(vector, "military_units") == sum(
            1 for u in units if mini.unit_defs[u.type].is_military)
        assert dim(vector, "wonders") == wonders
        assert dim(vector, "research_speed") == sum(c.output_bulbs for c in cities)
        assert dim(vector, "land_area") == owned
        assert dim(vector, "settled_area") == len(settled)
        assert dim(vector, "gold") == player.gold
        assert dim(vector, "culture") == (
            wonders * 10 + sum(c.happy for c in cities))


def test_vector_has_sixteen_nonnegative_dimensions(mini):
    state = random_game(mini, 19, max_turns=40)
    for pid in state.players:
        vector = metrics.score_vector(state, pid)
        assert len(vector) == 16
        assert len(metrics.SCORE_KEYS) == 16
        assert all(v >= 0 for v in vector)


def test_eliminated_player_keeps_frozen_vector(mini):
    state = flat_state(mini)
    spawn_unit(state, 0, mini.unit_index("Warriors"), 4, 4)
    engine._found_city(state, state.players[1], 7, 7)
    frozen_expect = None
    for _ in range(3):
        engine.turn_done(state, 0)
        if 1 in {p.id for p in state.alive_players()}:
            engine.turn_done(state, 1)
    # eliminate player 0 by removing its last unit through the engine path
    unit = next(u for u in state.units.values() if u.owner == 0)
    engine.apply_action(state, 0, ("unit", unit.id, "disband"))
    frozen_expect = metrics.score_vector(state, 0)
    engine.turn_done(state, 1) if state.current_player == 1 else None
    engine.end_turn(state)
    assert not state.players[0].is_alive
    later = metrics.score_vector(state, 0)
    assert later == metrics.score_vector(state, 0)  # stable
    assert dim(later, "units_used") == dim(frozen_expect, "units_used")


# ---------------------------------------------------------------------------
# Aggregate


def test_zero_vector_aggregates_to_zero():
    assert metrics.aggregate([0] * 16) == 0.0


def test_unit_weights_dot_product():
    vector = [0] * 16
    vector[metrics.SCORE_KEYS.index("population")] = 3
    vector[metrics.SCORE_KEYS.index("researched_techs")] = 2
    weights = {"population": 1.0, "researched_techs": 1.0}
    assert metrics.aggregate(vector, weights) == 5.0


def test_spaceship_bonus_is_added_when_flagged():
    base = metrics.aggregate([0] * 16)
    assert metrics.aggregate([0] * 16, spaceship_achieved=True) == (
        base + metrics.SPACESHIP_BONUS)


def test_aggregate_monotone_in_every_contributing_dimension():
    rng = GameRng(77)
    for _ in range(1000):
        vector = [rng.randbelow(500) for _ in range(16)]
        base = metrics.aggregate(vector)
        i = rng.randbelow(16)
        bumped = list(vector)
        bumped[i] += 1 + rng.randbelow(9)
        assert metrics.aggregate(bumped) >= base


def test_negative_or_unknown_weights_rejected():
    with pytest.raises(ValueError):
        metrics.aggregate([0] * 16, {"population": -1.0})
    with pytest.raises(ValueError):
        metrics.aggregate([0] * 16, {"happiness": 1.0})


def test_spaceship_complete_requires_full_chain(mini):
    state = flat_state(mini)
    engine._found_city(state, state.players[0], 4, 4)
    city = next(c for c in state.cities.values() if c.owner == 0)
    assert not metrics.spaceship_complete(state, 0)
    chain = list(mini.spaceship_buildings)
    city.buildings.extend(chain[:-1])
    assert not metrics.spaceship_complete(state, 0)
    city.buildings.append(chain[-1])
    assert metrics.spaceship_complete(state, 0)
    assert metrics.aggregate_score(state, 0) >= metrics.SPACESHIP_BONUS


# ---------------------------------------------------------------------------
# Reports


def test_report_row_layout(mini):
    state = random_game(mini, 9, max_turns=20)
    row = metrics.report_row(state, 0)
    assert len(row) == len(metrics.REPORT_COLUMNS) == 19
    assert row[0] == state.turn
    assert row[1] == 0
    assert row[2:18] == metrics.score_vector(state, 0)
    assert row[18] == metrics.aggregate_score(state, 0)


def test_report_lists_weights_and_one_line_per_player(mini):
    state = random_game(mini, 13, max_turns=20)
    text = metrics.report(state)
    lines = text.splitlines()
    assert lines[0].startswith("weights: ")
    assert "wonders=5" in lines[0]
    assert "spaceship_bonus=100" in lines[0]
    assert len(lines) == 2 + len(state.players)
