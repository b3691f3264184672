"""Regenerate the golden wire-format fixtures under fixtures/.

The fixtures pin the byte-level contracts a client must satisfy: the
packed tensor observation and action mask, the language observation
document, and three recorded protocol transcripts (join and a first
action, a timeout, and a run to game over). Tests compare live output
against these files verbatim, so regenerate them only after a
deliberate format change:

    python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from civarena import engine, obs_lang, obs_tensor
from civarena import protocol as P
from civarena.ruleset import builtin_ruleset_path, load_ruleset
from civarena.world import GameConfig, new_game

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

OBS_SEED = 2024
OBS_SIZE = 10
TRANSCRIPT_SEED = 99


def dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    print(f"wrote {path.relative_to(ROOT)}")


def make_observation_fixtures(ruleset) -> None:
    config = GameConfig(width=OBS_SIZE, height=OBS_SIZE, players=2,
                        seed=OBS_SEED)
    state = new_game(ruleset, config)
    pid = sorted(state.players)[0]

    obs = obs_tensor.encode_tensor(state, pid)
    mask = obs_tensor.encode_action_mask(state, pid)
    dump(FIXTURES / "tensor_observation.json", {
        "seed": OBS_SEED,
        "config": config.to_dict(),
        "player_id": pid,
        "catalogs": obs_tensor.mask_catalogs(ruleset),
        "tensor": obs_tensor.pack_tensor(obs),
        "mask": obs_tensor.pack_action_mask(mask),
    })

    dump(FIXTURES / "lang_observation.json", {
        "seed": OBS_SEED,
        "config": config.to_dict(),
        "player_id": pid,
        "observation": obs_lang.encode_lang(state, pid).to_dict(),
    })


class _Capture:
    """Runs a session while recording every input and output envelope."""

    def __init__(self, config: P.SessionConfig, ruleset):
        self.session = P.GameSession(config, ruleset)
        self.steps = []

    def hello(self, message: dict) -> int:
        slot, out = self.session.hello(message)
        self.steps.append({"op": "hello", "slot": slot, "message": message,
                           "out": [[s, e] for s, e in out]})
        return slot

    def handle(self, slot: int, message: dict) -> list:
        out = self.session.handle(slot, message)
        self.steps.append({"op": "handle", "slot": slot, "message": message,
                           "out": [[s, e] for s, e in out]})
        return out

    def timeout(self, slot: int) -> list:
        out = self.session.timeout(slot)
        self.steps.append({"op": "timeout", "slot": slot, "message": None,
                           "out": [[s, e] for s, e in out]})
        return out

    def doc(self, config: P.SessionConfig) -> dict:
        return {"config": config.to_dict(), "steps": self.steps}


def _hello_msg(sid: str) -> dict:
    return P.envelope("hello", session=sid,
                      payload={"protocol": P.PROTOCOL_VERSION,
                               "client": "fixture"})


def _end_turn(sid: str, session: P.GameSession, pid: int) -> dict:
    return P.envelope("action", session=sid, turn=session.state.turn,
                      player=pid,
                      payload={"action": ["player", -1, "end_turn"]})


def make_transcript_fixtures(ruleset) -> None:
    base = dict(seed=TRANSCRIPT_SEED, width=8, height=8, timeout=30.0,
                ruleset_name="mini",
                slots=(P.SlotSpec(control="external", mode="lang"),
                       P.SlotSpec(control="random", mode="lang")))

    # 1. Join, then one legal unit action and its result.
    config = P.SessionConfig(session_id="fix-join", max_turns=10, **base)
    cap = _Capture(config, ruleset)
    slot = cap.hello(_hello_msg("fix-join"))
    state = cap.session.state
    pid = cap.session.players[slot]
    legal = engine.legal_actions(state, pid)
    move = next(
        (kind, actor, key)
        for (kind, actor), keys in sorted(legal.items())
        for key in keys
        if kind == "unit" and key.startswith("goto_"))
    cap.handle(slot, P.envelope(
        "action", session="fix-join", turn=state.turn, player=pid,
        payload={"action": list(move)}))
    dump(FIXTURES / "transcript_join_action.json", cap.doc(config))

    # 2. Join, sit on the move, transport fires the action timer.
    config = P.SessionConfig(session_id="fix-timeout", max_turns=10, **base)
    cap = _Capture(config, ruleset)
    slot = cap.hello(_hello_msg("fix-timeout"))
    cap.timeout(slot)
    dump(FIXTURES / "transcript_timeout.json", cap.doc(config))

    # 3. Join and end every turn until the game is adjudicated over.
    config = P.SessionConfig(session_id="fix-over", max_turns=3, **base)
    cap = _Capture(config, ruleset)
    slot = cap.hello(_hello_msg("fix-over"))
    pid = cap.session.players[slot]
    while cap.session.phase == "playing":
        cap.handle(slot, _end_turn("fix-over", cap.session, pid))
    dump(FIXTURES / "transcript_game_over.json", cap.doc(config))


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    ruleset = load_ruleset(builtin_ruleset_path("mini"))
    make_observation_fixtures(ruleset)
    make_transcript_fixtures(ruleset)


if __name__ == "__main__":
    main()
