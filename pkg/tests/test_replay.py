"""Game records: determinism, hash verification, tamper detection."""

import hashlib
import json

import pytest

from civarena import ai, engine, replay
from civarena import minigames as mg
from civarena.ruleset import builtin_ruleset_path, load_ruleset
from civarena.world import GameConfig, new_game, state_hash


@pytest.fixture(scope="module")
def mini():
    return load_ruleset(builtin_ruleset_path("mini"))


def record_random_game(mini, seed, max_turns=25, players=2):
    config = GameConfig(width=10, height=10, players=players, seed=seed,
                        max_turns=max_turns,
                        ai_fill=("random",) * players)
    state = new_game(mini, config)
    recorder = replay.Recorder(replay.standard_setup(mini, config), state)
    rngs = {pid: ai.session_rng(seed, pid) for pid in state.players}
    while engine.full_game_result(state)["status"] != "over":
        pid = state.current_player
        for triplet in ai.builtin_ai_act(state, pid, "random", rngs[pid]):
            recorder.action(pid, triplet)
        recorder.turn_boundary(state)
    result = engine.full_game_result(state)
    return recorder.finish(state, result), state


def test_same_seed_produces_identical_record_files(mini, tmp_path):
    digests = []
    for run in range(2):
        record, _ = record_random_game(mini, seed=7)
        path = tmp_path / f"run{run}.json"
        replay.save_record(record, path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_different_seeds_differ(mini, tmp_path):
    a, _ = record_random_game(mini, seed=7)
    b, _ = record_random_game(mini, seed=8)
    assert a.final_hash != b.final_hash


def test_execute_reproduces_the_recorded_game(mini):
    record, state = record_random_game(mini, seed=11)
    end = replay.execute(record)
    assert state_hash(end) == record.final_hash == state_hash(state)
    assert end.turn == state.turn


def test_save_load_round_trip_is_byte_stable(mini, tmp_path):
    record, _ = record_random_game(mini, seed=3)
    path = tmp_path / "a.json"
    replay.save_record(record, path)
    loaded = replay.load_record(path)
    again = tmp_path / "b.json"
    replay.save_record(loaded, again)
    assert path.read_bytes() == again.read_bytes()
    end = replay.execute(loaded)
    assert state_hash(end) == record.final_hash


def test_tampered_action_reports_first_divergent_turn(mini):
    record, _ = record_random_game(mini, seed=13)
    doc = record.to_dict()
    moves = [i for i, entry in enumerate(doc["actions"])
             if entry[1] == "unit"]
    assert moves, "expected at least one unit action in a random game"
    victim = moves[len(moves) // 2]
    doc["actions"] = [list(e) for e in doc["actions"]]
    doc["actions"].pop(victim)
    tampered = replay.GameRecord.from_dict(doc)
    with pytest.raises(replay.ReplayError) as err:
        replay.execute(tampered)
    message = str(err.value)
    assert "at turn" in message or "mismatch" in message
    if err.value.turn is not None:
        assert f"turn {err.value.turn}" in message


def test_tampered_hash_trail_names_the_turn(mini):
    record, _ = record_random_game(mini, seed=17)
    doc = record.to_dict()
    doc["turn_hashes"] = [list(t) for t in doc["turn_hashes"]]
    k = doc["turn_hashes"][2][0]
    doc["turn_hashes"][2][1] = "0" * 64
    with pytest.raises(replay.ReplayError) as err:
        replay.execute(replay.GameRecord.from_dict(doc))
    assert str(err.value) == f"hash mismatch at turn {k}"
    assert err.value.turn == k


def test_tampered_final_hash_detected(mini):
    record, _ = record_random_game(mini, seed=19)
    record.final_hash = "f" * 64
    with pytest.raises(replay.ReplayError):
        replay.execute(record)


def test_record_document_is_versioned(mini):
    record, _ = record_random_game(mini, seed=2, max_turns=3)
    doc = record.to_dict()
    assert doc["format"] == "civarena-replay"
    assert doc["version"] == 1
    with pytest.raises(replay.ReplayError):
        replay.GameRecord.from_dict({**doc, "format": "other"})
    with pytest.raises(replay.ReplayError):
        replay.GameRecord.from_dict({**doc, "version": 99})


def test_build_start_state_rejects_unknown_setup():
    with pytest.raises(replay.ReplayError):
        replay.build_start_state({"kind": "mystery"})


def test_setup_is_self_contained(mini, tmp_path):
    record, _ = record_random_game(mini, seed=23, max_turns=4)
    path = tmp_path / "r.json"
    replay.save_record(record, path)
    doc = json.loads(path.read_text())
    assert doc["setup"]["kind"] == "standard"
    assert doc["setup"]["ruleset"]["name"] == "mini"
    assert doc["setup"]["config"]["seed"] == 23


def test_minigame_record_round_trip(mini, tmp_path):
    spec = mg.generate(mini, 1, "easy", seed=5)
    state = spec.start_state()
    recorder = replay.Recorder(replay.minigame_setup(spec), state)
    rngs = {pid: ai.session_rng(5, pid) for pid in state.players}
    while mg.victory(state, spec) == "ongoing":
        pid = state.current_player
        for triplet in ai.builtin_ai_act(state, pid, "expander", rngs[pid]):
            recorder.action(pid, triplet)
        recorder.turn_boundary(state)
    record = recorder.finish(state, {"status": "over", "reason": "minigame",
                                     "verdict": mg.victory(state, spec)})
    path = tmp_path / "m.json"
    replay.save_record(record, path)
    end = replay.execute(replay.load_record(path))
    assert state_hash(end) == record.final_hash
    assert mg.victory(end, spec) != "ongoing"
