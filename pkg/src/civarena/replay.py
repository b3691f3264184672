"""Deterministic game records: write, re-execute, verify.

A record stores the complete game setup plus every accepted action in
order, together with the state hash at each turn boundary. Re-running
the actions from the same setup must revisit exactly the same hashes;
the first divergence is reported by turn number, so a tampered or
stale file fails loudly instead of replaying something subtly wrong.

Setups are self-contained: standard games embed the full ruleset
document, mini-games embed the frozen instance (which embeds its own
snapshot), so a record needs no files besides itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import engine
from .ai import TURN_DONE
from .engine import ActionError
from .minigames import MiniGameSpec
from .ruleset import Ruleset, ruleset_from_dict, ruleset_to_dict
from .world import GameConfig, GameState, new_game, state_hash

REPLAY_FORMAT = "civarena-replay"
REPLAY_VERSION = 1


class ReplayError(ValueError):
    """A record that cannot be reproduced; carries the failing turn."""

    def __init__(self, message: str, turn: int | None = None):
        self.turn = turn
        super().__init__(message)


@dataclass
class GameRecord:
    """Setup, action transcript, and per-turn hash trail of one game."""

    setup: dict
    actions: list = field(default_factory=list)
    turn_hashes: list = field(default_factory=list)
    final_hash: str = ""
    result: dict | None = None

    def to_dict(self) -> dict:
        return {
            "format": REPLAY_FORMAT,
            "version": REPLAY_VERSION,
            "setup": self.setup,
            "actions": self.actions,
            "turn_hashes": self.turn_hashes,
            "final_hash": self.final_hash,
            "result": self.result,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GameRecord":
        if doc.get("format") != REPLAY_FORMAT:
            raise ReplayError("not a game record document")
        if doc.get("version") != REPLAY_VERSION:
            raise ReplayError(f"unsupported record version {doc.get('version')}")
        return cls(setup=doc["setup"], actions=list(doc["actions"]),
                   turn_hashes=[list(t) for t in doc["turn_hashes"]],
                   final_hash=doc.get("final_hash", ""),
                   result=doc.get("result"))


def save_record(record: GameRecord, path) -> None:
    Path(path).write_text(json.dumps(record.to_dict(), sort_keys=True,
                                     separators=(",", ":")) + "\n")


def load_record(path) -> GameRecord:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ReplayError(f"record is not valid JSON: {exc}") from exc
    return GameRecord.from_dict(doc)


# ---------------------------------------------------------------------------
# Setups


def standard_setup(ruleset: Ruleset, config: GameConfig) -> dict:
    return {"kind": "standard", "ruleset": ruleset_to_dict(ruleset),
            "config": config.to_dict()}


def minigame_setup(spec: MiniGameSpec) -> dict:
    return {"kind": "minigame", "spec": spec.to_dict()}


def build_start_state(setup: dict) -> GameState:
    kind = setup.get("kind")
    if kind == "standard":
        return new_game(ruleset_from_dict(setup["ruleset"]),
                        GameConfig.from_dict(setup["config"]))
    if kind == "minigame":
        return MiniGameSpec.from_dict(setup["spec"]).start_state()
    raise ReplayError(f"unknown setup kind {kind!r}")


# ---------------------------------------------------------------------------
# Recording


class Recorder:
    """Accumulates a GameRecord while a live game is driven."""

    def __init__(self, setup: dict, state: GameState):
        self.record = GameRecord(setup=setup)
        self.record.turn_hashes.append([state.turn, state_hash(state)])
        self._last_turn = state.turn

    def action(self, player_id: int, triplet) -> None:
        self.record.actions.append([player_id, *triplet])

    def turn_boundary(self, state: GameState) -> None:
        if state.turn != self._last_turn:
            self.record.turn_hashes.append([state.turn, state_hash(state)])
            self._last_turn = state.turn

    def finish(self, state: GameState, result: dict | None) -> GameRecord:
        self.turn_boundary(state)
        self.record.final_hash = state_hash(state)
        self.record.result = result
        return self.record


# ---------------------------------------------------------------------------
# Re-execution


def execute(record: GameRecord) -> GameState:
    """Re-run the record, verifying every recorded hash; returns the end state."""
    state = build_start_state(record.setup)
    trail = [list(t) for t in record.turn_hashes]
    if not trail:
        raise ReplayError("record has no hash trail")
    if trail[0] != [state.turn, state_hash(state)]:
        raise ReplayError(f"hash mismatch at turn {state.turn}",
                          turn=state.turn)
    cursor = 1
    for entry in record.actions:
        if len(entry) != 4:
            raise ReplayError(f"malformed transcript entry {entry!r}")
        pid, actor_type, actor_id, key = entry
        triplet = (actor_type, actor_id, key)
        try:
            if triplet == TURN_DONE:
                engine.turn_done(state, pid)
            else:
                engine.apply_action(state, pid, triplet)
        except ActionError as exc:
            raise ReplayError(
                f"action {entry!r} is illegal on replay at turn "
                f"{state.turn}: {exc}", turn=state.turn) from exc
        if state.turn != trail[cursor - 1][0]:
            if cursor >= len(trail):
                raise ReplayError(f"hash trail ends before turn {state.turn}",
                                  turn=state.turn)
            if trail[cursor] != [state.turn, state_hash(state)]:
                raise ReplayError(f"hash mismatch at turn {state.turn}",
                                  turn=state.turn)
            cursor += 1
    if cursor != len(trail):
        raise ReplayError("hash trail is longer than the transcript")
    if record.final_hash and record.final_hash != state_hash(state):
        raise ReplayError(f"hash mismatch at turn {state.turn}",
                          turn=state.turn)
    return state
