"""World model: fog of war, saves, snapshots, validation."""

import numpy as np
import pytest

from civarena.ruleset import load_ruleset, builtin_ruleset_path
from civarena.world import (
    CITY_VISION_RADIUS,
    FAT_CROSS_OFFSETS,
    WORK_OFFSETS,
    City,
    GameConfig,
    StateError,
    load_state,
    new_game,
    pack_status,
    place_unit,
    restore,
    save_state,
    snapshot,
    spawn_unit,
    state_hash,
    state_from_dict,
    state_to_dict,
    unpack_status,
    validate_state,
    visibility,
    refresh_all_visibility,
    move_unit,
)
from civarena import engine


@pytest.fixture(scope="module")
def mini():
    return load_ruleset(builtin_ruleset_path("mini"))


def fresh(mini, **overrides):
    cfg = dict(width=12, height=12, players=2, seed=5)
    cfg.update(overrides)
    return new_game(mini, GameConfig(**cfg))


def brute_force_visible(state, player_id):
    """Independent visibility oracle: Chebyshev scan over every source."""
    w = state.world
    mask = np.zeros((w.width, w.height), dtype=bool)
    viewers = {player_id}
    for other in state.players.values():
        if other.id != player_id and other.relation(player_id).shares_vision:
            viewers.add(other.id)
    for unit in state.units.values():
        if unit.owner in viewers:
            r = state.ruleset.unit_defs[unit.type].vision_radius
            for x in range(w.width):
                for y in range(w.height):
                    if max(abs(x - unit.x), abs(y - unit.y)) <= r:
                        mask[x, y] = True
    for city in state.cities.values():
        if city.owner in viewers:
            for x in range(w.width):
                for y in range(w.height):
                    if max(abs(x - city.x), abs(y - city.y)) <= CITY_VISION_RADIUS:
                        mask[x, y] = True
    return mask


def test_opening_units_counts(mini):
    state = fresh(mini)
    for pid in state.players:
        mine = [u for u in state.units.values() if u.owner == pid]
        names = sorted(state.ruleset.unit_defs[u.type].name for u in mine)
        assert len(mine) == 5
        assert names.count("Settlers") == 2
        assert names.count("Workers") == 2
        assert names.count("Explorer") == 1


def test_turn0_visibility_matches_brute_force(mini):
    state = fresh(mini)
    for pid in state.players:
        grid = visibility(state, pid)
        oracle = brute_force_visible(state, pid)
        assert np.array_equal(grid == 2, oracle)
        assert not np.any(grid == 1)  # nothing explored-then-lost yet


def test_visibility_after_moves_matches_brute_force(mini):
    state = fresh(mini)
    for step in range(25):
        pid = state.current_player
        legal = engine.legal_actions(state, pid)
        moved = False
        for (atype, aid), keys in sorted(legal.items()):
            gotos = [k for k in keys if k.startswith("goto_")]
            if atype == "unit" and gotos:
                engine.apply_action(state, pid, (atype, aid, gotos[0]))
                moved = True
                break
        if not moved:
            engine.turn_done(state, pid)
        for p in state.players:
            grid = visibility(state, p)
            oracle = brute_force_visible(state, p)
            assert np.array_equal(grid == 2, oracle)


def test_fog_monotonic_over_random_play(mini):
    state = fresh(mini, seed=9)
    previous = {p: visibility(state, p).copy() for p in state.players}
    from civarena.rng import GameRng

    rng = GameRng(123)
    for _ in range(300):
        pid = state.current_player
        legal = engine.legal_actions(state, pid)
        flat = [(a, k) for a, keys in sorted(legal.items()) for k in keys]
        if not flat or rng.chance(1, 3):
            engine.turn_done(state, pid)
        else:
            actor, key = flat[rng.randbelow(len(flat))]
            engine.apply_action(state, pid, (actor[0], actor[1], key))
        for p, old in previous.items():
            new = visibility(state, p)
            # 0 can only be reached from 0; >=1 never drops back to 0.
            assert not np.any((old >= 1) & (new == 0))
            previous[p] = new.copy()


def test_reveal_map_flag(mini):
    state = fresh(mini, reveal_map=True)
    for pid in state.players:
        assert np.all(visibility(state, pid) == 2)


def test_same_seed_is_byte_identical(mini):
    a = save_state(fresh(mini, seed=77))
    b = save_state(fresh(mini, seed=77))
    assert a == b
    c = save_state(fresh(mini, seed=78))
    assert a != c


def test_snapshot_restore_fixpoint(mini):
    state = fresh(mini)
    snap = snapshot(state)
    again = snapshot(restore(snap))
    assert snap == again
    assert state_hash(restore(snap)) == state_hash(state)


def test_save_load_round_trip_mid_game(mini):
    state = fresh(mini, seed=31)
    from civarena.rng import GameRng

    rng = GameRng(4)
    for _ in range(200):
        pid = state.current_player
        legal = engine.legal_actions(state, pid)
        flat = [(a, k) for a, keys in sorted(legal.items()) for k in keys]
        if not flat or rng.chance(1, 3):
            engine.turn_done(state, pid)
        else:
            actor, key = flat[rng.randbelow(len(flat))]
            engine.apply_action(state, pid, (actor[0], actor[1], key))
    text = save_state(state)
    clone = load_state(text)
    assert save_state(clone) == text
    assert state_hash(clone) == state_hash(state)


def test_restore_rejects_corrupted_cross_reference(mini):
    state = fresh(mini)
    doc = state_to_dict(state)
    doc["units"][0]["home_city"] = 424242  # dangling reference
    with pytest.raises(StateError):
        state_from_dict(doc)


def test_restore_rejects_wrong_version(mini):
    state = fresh(mini)
    doc = state_to_dict(state)
    doc["version"] = 999
    with pytest.raises(StateError):
        state_from_dict(doc)


def test_status_grid_packing_round_trip():
    rng = np.random.default_rng(3)
    for shape in [(5, 5), (7, 3), (16, 16), (9, 13)]:
        grid = rng.integers(0, 3, size=shape).astype(np.uint8)
        blob = pack_status(grid)
        # 2 bits per tile, four tiles per byte.
        assert len(blob) == (shape[0] * shape[1] + 3) // 4
        assert np.array_equal(unpack_status(blob, *shape), grid)


def test_state_hash_ignores_event_log(mini):
    state = fresh(mini)
    h0 = state_hash(state)
    state.add_event("note", detail="hash should not move")
    assert state_hash(state) == h0


def test_state_hash_tracks_mutation(mini):
    state = fresh(mini)
    h0 = state_hash(state)
    state.players[0].gold += 1
    assert state_hash(state) != h0


def test_validate_state_catches_bad_rates(mini):
    state = fresh(mini)
    state.players[0].rate_science = 90  # sum now 140
    with pytest.raises(StateError):
        validate_state(state)


def test_validate_state_catches_dead_owner(mini):
    state = fresh(mini)
    state.players[1].is_alive = False
    with pytest.raises(StateError):
        validate_state(state)


def test_work_area_geometry():
    assert len(FAT_CROSS_OFFSETS) == 21
    assert len(WORK_OFFSETS) == 20
    assert (0, 0) in FAT_CROSS_OFFSETS
    for dx, dy in FAT_CROSS_OFFSETS:
        assert max(abs(dx), abs(dy)) <= 2
        assert not (abs(dx) == 2 and abs(dy) == 2)


def test_transported_unit_moves_with_carrier(mini):
    state = fresh(mini, seed=5)
    # Fabricate a carrier and rider on a water tile.
    water = None
    w = state.world
    for x in range(w.width):
        for y in range(w.height):
            if not state.ruleset.terrain_defs[int(w.terrain[x, y])].is_land:
                if not w.units_at(x, y):
                    water = (x, y)
                    break
        if water:
            break
    assert water is not None
    galley = state.ruleset.unit_index("Galley")
    warriors = state.ruleset.unit_index("Warriors")
    carrier = spawn_unit(state, 0, galley, *water)
    rider = spawn_unit(state, 0, warriors, *water)
    rider.transported_by = carrier.id
    nx, ny = water[0], water[1]
    # Find an adjacent water tile to sail to.
    for cx, cy in w.neighbors(*water):
        if not state.ruleset.terrain_defs[int(w.terrain[cx, cy])].is_land:
            nx, ny = cx, cy
            break
    move_unit(state, carrier, nx, ny)
    assert (rider.x, rider.y) == (carrier.x, carrier.y) == (nx, ny)
