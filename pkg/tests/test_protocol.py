"""Wire framing, envelopes, and the session state machine."""

import io
import json
from pathlib import Path

import pytest

from civarena import metrics
from civarena import protocol as P
from civarena.ruleset import builtin_ruleset_path, load_ruleset
from civarena.world import state_hash
from civarena import minigames as mg

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="module")
def mini():
    return load_ruleset(builtin_ruleset_path("mini"))


def canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def two_slot_config(**overrides):
    base = dict(
        session_id="t", seed=5, width=8, height=8, max_turns=20,
        timeout=30.0,
        slots=(P.SlotSpec(control="external", mode="lang"),
               P.SlotSpec(control="random", mode="lang")),
    )
    base.update(overrides)
    return P.SessionConfig(**base)


def joined_session(mini, **overrides):
    session = P.GameSession(two_slot_config(**overrides), mini)
    hello = P.envelope("hello", session=session.config.session_id,
                       payload={"protocol": P.PROTOCOL_VERSION})
    slot, out = session.hello(hello)
    assert slot is not None
    return session, slot, out


def end_turn_msg(session, pid):
    return P.envelope("action", session=session.config.session_id,
                      turn=session.state.turn, player=pid,
                      payload={"action": ["player", -1, "end_turn"]})


# ---------------------------------------------------------------------------
# Framing


def test_frame_round_trip():
    msg = P.envelope("hello", session="s", payload={"protocol": 1})
    stream = io.BytesIO(P.encode_frame(msg))
    assert P.read_frame(stream) == msg
    assert P.read_frame(stream) is None


def test_frame_bytes_are_canonical():
    a = {"b": 1, "a": {"y": 2, "x": 3}}
    b = {"a": {"x": 3, "y": 2}, "b": 1}
    assert P.encode_frame(a) == P.encode_frame(b)


def test_frame_layout_is_length_prefixed_json():
    blob = P.encode_frame({"k": "v"})
    length = int.from_bytes(blob[:4], "big")
    assert length == len(blob) - 4
    assert json.loads(blob[4:].decode("utf-8")) == {"k": "v"}


def test_read_frame_truncation_is_fatal():
    msg = P.encode_frame({"k": "v"})
    with pytest.raises(P.ProtocolError) as err:
        P.read_frame(io.BytesIO(msg[:2]))
    assert not err.value.recoverable
    with pytest.raises(P.ProtocolError) as err:
        P.read_frame(io.BytesIO(msg[:-1]))
    assert not err.value.recoverable


def test_read_frame_bad_json_is_recoverable():
    body = b"not json"
    stream = io.BytesIO(len(body).to_bytes(4, "big") + body
                        + P.encode_frame({"ok": 1}))
    with pytest.raises(P.ProtocolError) as err:
        P.read_frame(stream)
    assert err.value.recoverable
    assert P.read_frame(stream) == {"ok": 1}


def test_read_frame_non_object_is_recoverable():
    body = b"[1,2]"
    stream = io.BytesIO(len(body).to_bytes(4, "big") + body)
    with pytest.raises(P.ProtocolError) as err:
        P.read_frame(stream)
    assert err.value.recoverable


def test_read_frame_oversize_is_drained_and_recoverable(monkeypatch):
    monkeypatch.setattr(P, "MAX_FRAME_BYTES", 64)
    body = b"x" * 100
    stream = io.BytesIO(len(body).to_bytes(4, "big") + body
                        + P.encode_frame({"ok": 1}))
    with pytest.raises(P.ProtocolError) as err:
        P.read_frame(stream)
    assert err.value.recoverable
    assert P.read_frame(stream) == {"ok": 1}


def test_encode_frame_rejects_oversize(monkeypatch):
    monkeypatch.setattr(P, "MAX_FRAME_BYTES", 8)
    with pytest.raises(P.ProtocolError):
        P.encode_frame({"k": "a long enough value"})


# ---------------------------------------------------------------------------
# Envelopes


def test_envelope_shape_and_defaults():
    env = P.envelope("state", session="s", turn=3, player=1,
                     payload={"a": 1})
    assert env == {"session": "s", "turn": 3, "player": 1,
                   "kind": "state", "payload": {"a": 1}}
    bare = P.envelope("error")
    assert bare["turn"] == -1 and bare["player"] == -1
    assert bare["payload"] == {}


def test_envelope_rejects_unknown_kind():
    with pytest.raises(P.ProtocolError):
        P.envelope("gossip")


@pytest.mark.parametrize("mutate", [
    lambda e: e.pop("session"),
    lambda e: e.pop("payload"),
    lambda e: e.update(turn="0"),
    lambda e: e.update(turn=True),
    lambda e: e.update(player=1.5),
    lambda e: e.update(kind="gossip"),
    lambda e: e.update(payload=[1]),
])
def test_check_envelope_rejects_malformed(mutate):
    env = P.envelope("action", session="s", turn=0, player=0)
    mutate(env)
    with pytest.raises(P.ProtocolError):
        P.check_envelope(env)


# ---------------------------------------------------------------------------
# Configuration


def test_slot_spec_validation():
    with pytest.raises(P.ProtocolError):
        P.SlotSpec(control="chess_master")
    with pytest.raises(P.ProtocolError):
        P.SlotSpec(mode="audio")


def test_session_config_validation():
    with pytest.raises(P.ProtocolError):
        P.SessionConfig(slots=())
    with pytest.raises(P.ProtocolError):
        P.SessionConfig(timeout=0)


def test_session_config_round_trip():
    config = two_slot_config()
    again = P.SessionConfig.from_dict(json.loads(canonical(config.to_dict())))
    assert again == config


# ---------------------------------------------------------------------------
# Lobby


def test_two_clients_join_and_both_get_state(mini):
    config = two_slot_config(slots=(P.SlotSpec(), P.SlotSpec()))
    session = P.GameSession(config, mini)
    hello = P.envelope("hello", session="t",
                       payload={"protocol": P.PROTOCOL_VERSION})
    slot_a, out_a = session.hello(hello)
    assert slot_a == 0
    kinds_a = [e["kind"] for _, e in out_a]
    assert kinds_a == ["join"]

    slot_b, out_b = session.hello(hello)
    assert slot_b == 1
    states = [(s, e) for s, e in out_b if e["kind"] == "state"]
    assert sorted(s for s, _ in states) == [0, 1]
    for _, env in states:
        assert "lang" in env["payload"]
    assert session.phase == "playing"


def test_hello_rejects_wrong_protocol_version(mini):
    session = P.GameSession(two_slot_config(), mini)
    slot, out = session.hello(P.envelope("hello", session="t",
                                         payload={"protocol": 99}))
    assert slot is None
    assert out[0][1]["kind"] == "join"
    assert out[0][1]["payload"]["accepted"] is False


def test_hello_rejects_when_full(mini):
    session, _, _ = joined_session(mini)
    slot, out = session.hello(P.envelope(
        "hello", session="t", payload={"protocol": P.PROTOCOL_VERSION}))
    assert slot is None
    assert out[0][1]["payload"] == {"accepted": False, "reason": "slot full"}


def test_join_payload_contents(mini):
    session, slot, out = joined_session(
        mini, slots=(P.SlotSpec(mode="both"), P.SlotSpec(control="random")))
    join = next(e for _, e in out if e["kind"] == "join")
    payload = join["payload"]
    assert payload["accepted"] is True
    assert payload["slot"] == slot and payload["player"] == 0
    assert payload["mode"] == "both"
    assert payload["ruleset"] == "mini"
    assert set(payload["catalogs"]) == {"unit", "city", "government",
                                        "technology", "diplomacy"}


# ---------------------------------------------------------------------------
# Actions and results


def test_action_answered_by_exactly_one_result(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    sent = 0
    results = 0
    for _ in range(30):
        if session.phase != "playing":
            break
        out = session.handle(slot, end_turn_msg(session, pid))
        sent += 1
        results += sum(1 for _, e in out if e["kind"] == "action_result")
    assert sent > 0 and results == sent


def test_rejected_action_still_gets_one_result(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    bad = P.envelope("action", session="t", turn=session.state.turn,
                     player=pid, payload={"action": ["unit", 9999, "disband"]})
    out = session.handle(slot, bad)
    assert [e["kind"] for _, e in out] == ["action_result"]
    payload = out[0][1]["payload"]
    assert payload["ok"] is False
    assert payload["code"]
    assert payload["action"] == ["unit", 9999, "disband"]


def test_out_of_turn_action_errors_and_leaves_state_alone(mini):
    config = two_slot_config(slots=(P.SlotSpec(), P.SlotSpec()))
    session = P.GameSession(config, mini)
    hello = P.envelope("hello", session="t",
                       payload={"protocol": P.PROTOCOL_VERSION})
    session.hello(hello)
    session.hello(hello)
    mover = session.state.current_player
    idle_slot = next(i for i, pid in enumerate(session.players)
                     if pid != mover)
    before = state_hash(session.state)
    out = session.handle(idle_slot,
                         end_turn_msg(session, session.players[idle_slot]))
    assert [e["kind"] for _, e in out] == ["error"]
    assert out[0][1]["payload"]["code"] == "not_your_turn"
    assert "not" in out[0][1]["payload"]["reason"] or \
        out[0][1]["payload"]["reason"]
    assert state_hash(session.state) == before


def test_successful_action_refreshes_actor_state(mini):
    session, slot, _ = joined_session(mini, seed=99)
    pid = session.players[slot]
    from civarena import engine
    legal = engine.legal_actions(session.state, pid)
    triplet = next((kind, actor, key)
                   for (kind, actor), keys in sorted(legal.items())
                   for key in keys if kind == "unit")
    msg = P.envelope("action", session="t", turn=session.state.turn,
                     player=pid, payload={"action": list(triplet)})
    out = session.handle(slot, msg)
    kinds = [e["kind"] for _, e in out]
    assert kinds[0] == "action_result"
    assert out[0][1]["payload"]["ok"] is True
    assert kinds[1] == "state"
    assert out[1][0] == slot


def test_malformed_action_payload_is_an_error(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    msg = P.envelope("action", session="t", turn=session.state.turn,
                     player=pid, payload={"action": ["unit", "one"]})
    out = session.handle(slot, msg)
    assert out[0][1]["kind"] == "error"
    assert out[0][1]["payload"]["code"] == "malformed_payload"


def test_handle_rejects_wrong_session_and_foreign_player(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    msg = end_turn_msg(session, pid)
    msg["session"] = "elsewhere"
    assert session.handle(slot, msg)[0][1]["payload"]["code"] == \
        "wrong_session"
    msg = end_turn_msg(session, pid)
    msg["player"] = pid + 1
    assert session.handle(slot, msg)[0][1]["payload"]["code"] == \
        "wrong_player"


def test_turn_numbers_never_decrease(mini):
    session, slot, _ = joined_session(mini, max_turns=10)
    pid = session.players[slot]
    seen = []
    while session.phase == "playing":
        for _, env in session.handle(slot, end_turn_msg(session, pid)):
            seen.append(env["turn"])
    assert seen == sorted(seen) or all(
        b >= a for a, b in zip(seen, seen[1:]))
    assert [t for t, _ in session.turn_hashes] == sorted(
        t for t, _ in session.turn_hashes)


def test_turn_done_sentinel_accepted_as_turn_done_kind(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    turn = session.state.turn
    out = session.handle(slot, P.envelope(
        "turn_done", session="t", turn=turn, player=pid))
    kinds = [e["kind"] for _, e in out]
    assert "action_result" not in kinds
    assert session.state.turn == turn + 1


# ---------------------------------------------------------------------------
# Timeout and game over


def test_timeout_auto_issues_turn_done(mini):
    session, slot, _ = joined_session(mini)
    pid = session.players[slot]
    turn = session.state.turn
    out = session.timeout(slot)
    notice = out[0][1]
    assert notice["kind"] == "turn_done"
    assert notice["player"] == pid
    assert notice["payload"] == {"reason": "timeout"}
    assert session.state.turn == turn + 1


def test_timeout_ignored_when_not_waiting_on_that_slot(mini):
    config = two_slot_config(slots=(P.SlotSpec(), P.SlotSpec()))
    session = P.GameSession(config, mini)
    hello = P.envelope("hello", session="t",
                       payload={"protocol": P.PROTOCOL_VERSION})
    session.hello(hello)
    session.hello(hello)
    mover = session.state.current_player
    idle_slot = next(i for i, pid in enumerate(session.players)
                     if pid != mover)
    assert session.timeout(idle_slot) == []


def test_game_over_broadcast_and_scores(mini):
    session, slot, _ = joined_session(mini, max_turns=4)
    pid = session.players[slot]
    over = None
    while session.phase == "playing":
        for s, env in session.handle(slot, end_turn_msg(session, pid)):
            if env["kind"] == "game_over":
                over = env
    assert over is not None
    payload = over["payload"]
    assert payload["result"]["status"] == "over"
    assert set(payload["scores"]) == {str(p) for p in session.players}
    for p in session.players:
        assert payload["scores"][str(p)] == pytest.approx(
            metrics.aggregate_score(session.state, p))
    assert payload["hash"] == state_hash(session.state)
    out = session.handle(slot, end_turn_msg(session, pid))
    assert out[0][1]["payload"]["code"] == "game_over"


# ---------------------------------------------------------------------------
# Mini-game sessions


def test_minigame_session_flow(mini):
    spec = mg.generate(mini, 1, "easy", seed=3)
    config = P.SessionConfig(
        session_id="m", seed=3, timeout=30.0,
        slots=(P.SlotSpec(mode="lang"),), minigame=spec.to_dict())
    session = P.GameSession(config, mini)
    slot, out = session.hello(P.envelope(
        "hello", session="m", payload={"protocol": P.PROTOCOL_VERSION}))
    join = next(e for _, e in out if e["kind"] == "join")
    summary = join["payload"]["minigame"]
    assert summary["game_id"] == spec.game_id
    assert summary["difficulty"] == "easy"
    assert summary["tau_max"] == spec.tau_max
    state_env = next(e for _, e in out if e["kind"] == "state")
    assert set(state_env["payload"]["minigame"]) == {"score", "victory"}
    pid = session.players[slot]
    while session.phase == "playing":
        out = session.handle(slot, end_turn_msg(session, pid))
    over = next(e for _, e in out if e["kind"] == "game_over")
    result = over["payload"]["result"]
    assert result["reason"] == "minigame"
    assert result["verdict"] in ("win", "loss", "draw")
    assert result["score"] == pytest.approx(
        mg.score(session.state, spec))


def test_minigame_slot_count_must_match(mini):
    spec = mg.generate(mini, 5, "easy", seed=2)
    assert len(spec.snapshot["players"]) == 2
    with pytest.raises(P.ProtocolError):
        P.GameSession(P.SessionConfig(
            session_id="m", slots=(P.SlotSpec(),), timeout=5.0,
            minigame=spec.to_dict()), mini)


# ---------------------------------------------------------------------------
# Golden transcripts


def replay_transcript(mini, name):
    doc = json.loads((FIXTURES / name).read_text())
    session = P.GameSession(P.SessionConfig.from_dict(doc["config"]), mini)
    for step in doc["steps"]:
        if step["op"] == "hello":
            slot, out = session.hello(step["message"])
            assert slot == step["slot"]
        elif step["op"] == "handle":
            out = session.handle(step["slot"], step["message"])
        else:
            out = session.timeout(step["slot"])
        got = [[s, e] for s, e in out]
        assert canonical(got) == canonical(step["out"]), \
            f"{name}: outputs diverge at op {step['op']}"
    return session


def test_golden_transcript_join_and_action(mini):
    session = replay_transcript(mini, "transcript_join_action.json")
    assert session.phase == "playing"


def test_golden_transcript_timeout(mini):
    replay_transcript(mini, "transcript_timeout.json")


def test_golden_transcript_game_over(mini):
    session = replay_transcript(mini, "transcript_game_over.json")
    assert session.phase == "over"
    assert session.result["status"] == "over"
