"""Wire protocol: framed JSON envelopes and the session state machine.

Transport frames are a 4-byte big-endian length prefix followed by one
UTF-8 JSON object. Every message, in either direction, is an envelope

    {"session": str, "turn": int, "player": int, "kind": str,
     "payload": {...}}

with a fixed payload schema per kind. GameSession is a pure state
machine: it consumes one incoming envelope (or an injected timeout
tick) at a time and returns the envelopes to deliver, each addressed
by slot index. It never touches sockets, so an identical message
sequence always produces an identical reply sequence.

Delivery rules the machine follows:

* at game start and at every engine-turn boundary, each external slot
  receives a fresh ``state``;
* every change of mover broadcasts ``turn_begin`` naming the player;
* each ``action`` is answered by exactly one ``action_result`` (or by
  ``error`` when it was not the sender's move, leaving state untouched);
* a slot whose action timer expires is auto-issued turn-done and told
  so with a ``turn_done`` envelope;
* ``game_over`` broadcasts the result, final scores, and state hash.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from . import ai, engine, metrics, minigames, obs_lang, obs_tensor
from .engine import ActionError
from .minigames import MiniGameSpec
from .ruleset import Ruleset
from .world import GameConfig, new_game, state_hash

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024

MESSAGE_KINDS = ("hello", "join", "state", "action", "action_result",
                 "turn_begin", "turn_done", "game_over", "error")

OBS_MODES = ("tensor", "lang", "both")

EXTERNAL = "external"

TURN_DONE_TRIPLET = list(ai.TURN_DONE)


class ProtocolError(ValueError):
    """A frame or envelope that violates the wire format.

    recoverable is True when the byte stream is still in sync (the
    offending frame was fully consumed) so the connection can go on.
    """

    def __init__(self, message: str, recoverable: bool = False):
        self.recoverable = recoverable
        super().__init__(message)


# ---------------------------------------------------------------------------
# Framing


def encode_frame(message: dict) -> bytes:
    blob = json.dumps(message, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    if len(blob) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(blob)} bytes exceeds the limit")
    return struct.pack(">I", len(blob)) + blob


def write_frame(stream, message: dict) -> None:
    stream.write(encode_frame(message))
    stream.flush()


def _read_exact(stream, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        piece = stream.read(remaining)
        if not piece:
            break
        chunks.append(piece)
        remaining -= len(piece)
    return b"".join(chunks)


def read_frame(stream) -> dict | None:
    """Next message from a blocking stream; None on a clean close."""
    header = _read_exact(stream, 4)
    if not header:
        return None
    if len(header) < 4:
        raise ProtocolError("connection closed inside a frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        remaining = length
        while remaining:  # drain so the stream stays in sync
            piece = stream.read(min(remaining, 1 << 20))
            if not piece:
                raise ProtocolError("connection closed inside a frame body")
            remaining -= len(piece)
        raise ProtocolError(f"announced frame of {length} bytes is too large",
                            recoverable=True)
    body = _read_exact(stream, length)
    if len(body) < length:
        raise ProtocolError("connection closed inside a frame body")
    try:
        message = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}",
                            recoverable=True) from exc
    if not isinstance(message, dict):
        raise ProtocolError("frame payload must be a JSON object",
                            recoverable=True)
    return message


# ---------------------------------------------------------------------------
# Envelopes


def envelope(kind: str, *, session: str = "", turn: int = -1,
             player: int = -1, payload: dict | None = None) -> dict:
    if kind not in MESSAGE_KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    return {"session": session, "turn": turn, "player": player,
            "kind": kind, "payload": payload or {}}


def check_envelope(message: dict) -> dict:
    """Validate envelope structure; raises ProtocolError."""
    if not isinstance(message, dict):
        raise ProtocolError("message must be a JSON object")
    for key, kind in (("session", str), ("turn", int), ("player", int),
                      ("kind", str), ("payload", dict)):
        if key not in message:
            raise ProtocolError(f"envelope is missing {key!r}")
        if not isinstance(message[key], kind) or isinstance(message[key], bool):
            raise ProtocolError(f"envelope field {key!r} has the wrong type")
    if message["kind"] not in MESSAGE_KINDS:
        raise ProtocolError(f"unknown message kind {message['kind']!r}")
    return message


# ---------------------------------------------------------------------------
# Session configuration


@dataclass(frozen=True)
class SlotSpec:
    """One player seat: externally controlled or a built-in policy."""

    control: str = EXTERNAL
    mode: str = "lang"

    def __post_init__(self):
        allowed = (EXTERNAL,) + ai.AI_LEVELS + ai.NEGOTIATOR_AIS
        if self.control not in allowed:
            raise ProtocolError(f"unknown slot control {self.control!r}")
        if self.mode not in OBS_MODES:
            raise ProtocolError(f"unknown observation mode {self.mode!r}")


@dataclass
class SessionConfig:
    """Everything needed to reproduce a hosted game."""

    session_id: str = "main"
    seed: int = 0
    slots: tuple = (SlotSpec(), SlotSpec(control="random"))
    width: int = 12
    height: int = 12
    land_fraction: float = 0.5
    max_turns: int = 200
    timeout: float = 30.0
    minigame: dict | None = None
    ruleset_name: str = "mini"

    def __post_init__(self):
        self.slots = tuple(
            s if isinstance(s, SlotSpec) else SlotSpec(**s) for s in self.slots
        )
        if not self.slots:
            raise ProtocolError("a session needs at least one slot")
        if self.timeout <= 0:
            raise ProtocolError("the action timeout must be positive")

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "seed": self.seed,
            "slots": [{"control": s.control, "mode": s.mode}
                      for s in self.slots],
            "width": self.width,
            "height": self.height,
            "land_fraction": self.land_fraction,
            "max_turns": self.max_turns,
            "timeout": self.timeout,
            "minigame": self.minigame,
            "ruleset_name": self.ruleset_name,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        return cls(**doc)


# ---------------------------------------------------------------------------
# The session state machine


@dataclass
class _Slot:
    spec: SlotSpec
    joined: bool
    client: str = ""


class GameSession:
    """One hosted game: lobby, round-robin play, adjudication."""

    def __init__(self, config: SessionConfig, ruleset: Ruleset):
        self.config = config
        self.ruleset = ruleset
        self.slots = [_Slot(spec=s, joined=s.control != EXTERNAL)
                      for s in config.slots]
        self.phase = "lobby"
        self.state = None
        self.players = []
        self.spec = (MiniGameSpec.from_dict(config.minigame)
                     if config.minigame else None)
        self.ai_rngs = {}
        self.transcript = []
        self.turn_hashes = []
        self.result = None
        self.game_over_payload = None
        self._begun = set()
        if self.spec is not None:
            snapshot_players = self.spec.snapshot["players"]
            if len(snapshot_players) != len(self.slots):
                raise ProtocolError(
                    f"instance has {len(snapshot_players)} players but the "
                    f"session defines {len(self.slots)} slots")

    # -- helpers ------------------------------------------------------------

    def _env(self, kind: str, player: int = -1, payload: dict | None = None,
             turn: int | None = None) -> dict:
        if turn is None:
            turn = self.state.turn if self.state is not None else -1
        return envelope(kind, session=self.config.session_id, turn=turn,
                        player=player, payload=payload)

    def _external_slots(self):
        return [i for i, slot in enumerate(self.slots)
                if slot.spec.control == EXTERNAL]

    def _player_of(self, slot: int) -> int:
        return self.players[slot]

    def _slot_of(self, player_id: int) -> int:
        return self.players.index(player_id)

    def record(self):
        """The game as a verifiable record (complete once phase is over)."""
        from . import replay
        if self.spec is not None:
            setup = replay.minigame_setup(self.spec)
        else:
            setup = replay.standard_setup(self.ruleset, GameConfig(
                width=self.config.width, height=self.config.height,
                players=len(self.slots), seed=self.config.seed,
                land_fraction=self.config.land_fraction,
                max_turns=self.config.max_turns,
                ai_fill=tuple(s.spec.control for s in self.slots),
            ))
        return replay.GameRecord(
            setup=setup,
            actions=[list(entry) for entry in self.transcript],
            turn_hashes=[list(t) for t in self.turn_hashes],
            final_hash=state_hash(self.state) if self.state else "",
            result=self.result,
        )

    def observation_payload(self, player_id: int) -> dict:
        mode = self.slots[self._slot_of(player_id)].spec.mode
        payload = {}
        if mode in ("lang", "both"):
            payload["lang"] = obs_lang.encode_lang(self.state,
                                                   player_id).to_dict()
        if mode in ("tensor", "both"):
            obs = obs_tensor.encode_tensor(self.state, player_id)
            mask = obs_tensor.encode_action_mask(self.state, player_id)
            payload["tensor"] = obs_tensor.pack_tensor(obs)
            payload["mask"] = obs_tensor.pack_action_mask(mask)
        if self.spec is not None:
            payload["minigame"] = {
                "score": minigames.score(self.state, self.spec),
                "victory": minigames.victory(self.state, self.spec),
            }
        return payload

    def _state_msg(self, slot: int) -> tuple:
        pid = self._player_of(slot)
        return (slot, self._env("state", player=pid,
                                payload=self.observation_payload(pid)))

    def _error(self, slot: int, code: str, reason: str) -> tuple:
        return (slot, self._env("error", payload={"code": code,
                                                  "reason": reason}))

    # -- lobby --------------------------------------------------------------

    def hello(self, message: dict) -> tuple:
        """Claim a slot; returns (slot or None, outgoing messages)."""
        doc = check_envelope(message)
        if doc["kind"] != "hello":
            raise ProtocolError("expected a hello message")
        payload = doc["payload"]
        version = payload.get("protocol")
        if version != PROTOCOL_VERSION:
            reply = self._env("join", payload={
                "accepted": False,
                "reason": f"unsupported protocol version {version!r}",
            })
            return None, [(None, reply)]
        free = [i for i in self._external_slots() if not self.slots[i].joined]
        if not free:
            reply = self._env("join", payload={"accepted": False,
                                               "reason": "slot full"})
            return None, [(None, reply)]
        slot = free[0]
        self.slots[slot].joined = True
        self.slots[slot].client = str(payload.get("client", ""))
        accepted = {
            "accepted": True,
            "slot": slot,
            "player": slot,
            "mode": self.slots[slot].spec.mode,
            "ruleset": self.ruleset.name,
            "session": self.config.session_id,
            "caps": {"units": obs_tensor.TensorCaps().units,
                     "cities": obs_tensor.TensorCaps().cities,
                     "players": obs_tensor.TensorCaps().players},
        }
        if self.slots[slot].spec.mode in ("tensor", "both"):
            accepted["catalogs"] = obs_tensor.mask_catalogs(self.ruleset)
        if self.config.minigame is not None:
            accepted["minigame"] = {
                k: self.config.minigame[k]
                for k in ("game_id", "name", "difficulty", "seed", "player",
                          "opponent", "tau_max")
            }
        out = [(slot, self._env("join", player=slot, payload=accepted))]
        if all(s.joined for s in self.slots):
            out.extend(self._start())
        return slot, out

    def _start(self) -> list:
        if self.spec is not None:
            self.state = self.spec.start_state()
        else:
            self.state = new_game(self.ruleset, GameConfig(
                width=self.config.width, height=self.config.height,
                players=len(self.slots), seed=self.config.seed,
                land_fraction=self.config.land_fraction,
                max_turns=self.config.max_turns,
                ai_fill=tuple(s.spec.control for s in self.slots),
            ))
        self.players = sorted(self.state.players)
        if len(self.players) != len(self.slots):
            raise ProtocolError("slot count does not match the game's players")
        for slot, pid in enumerate(self.players):
            control = self.slots[slot].spec.control
            if control != EXTERNAL:
                self.ai_rngs[pid] = ai.session_rng(self.config.seed, pid)
        self.phase = "playing"
        self.turn_hashes.append([self.state.turn, state_hash(self.state)])
        out = [self._state_msg(i) for i in self._external_slots()]
        return out + self._drive()

    # -- play ---------------------------------------------------------------

    def handle(self, slot: int, message: dict) -> list:
        """Process one envelope from a joined client."""
        try:
            doc = check_envelope(message)
        except ProtocolError as exc:
            return [self._error(slot, "bad_envelope", str(exc))]
        kind = doc["kind"]
        if doc["session"] not in ("", self.config.session_id):
            return [self._error(slot, "wrong_session",
                                f"this is session {self.config.session_id!r}")]
        if kind == "hello":
            return [self._error(slot, "already_joined",
                                "this connection already holds a slot")]
        if kind not in ("action", "turn_done"):
            return [self._error(slot, "unexpected_kind",
                                f"clients may not send {kind!r}")]
        if self.phase == "lobby":
            return [self._error(slot, "not_started",
                                "waiting for all players to join")]
        if self.phase == "over":
            return [self._error(slot, "game_over", "the game has ended")]
        pid = self._player_of(slot)
        if doc["player"] not in (-1, pid):
            return [self._error(slot, "wrong_player",
                                f"slot {slot} speaks for player {pid}")]
        if kind == "action":
            return self._handle_action(slot, pid, doc)
        return self._handle_turn_done(slot, pid)

    def _handle_action(self, slot: int, pid: int, doc: dict) -> list:
        action = doc["payload"].get("action")
        if (not isinstance(action, list) or len(action) != 3
                or not isinstance(action[0], str)
                or not isinstance(action[1], int)
                or not isinstance(action[2], str)):
            return [self._error(slot, "malformed_payload",
                                "payload.action must be [type, id, key]")]
        if self.state.current_player != pid:
            return [self._error(slot, "not_your_turn",
                                f"current player is "
                                f"{self.state.current_player}")]
        triplet = (action[0], action[1], action[2])
        if list(triplet) == TURN_DONE_TRIPLET:
            engine.turn_done(self.state, pid)
            self.transcript.append([pid] + TURN_DONE_TRIPLET)
            ok = (slot, self._env("action_result", player=pid,
                                  payload={"ok": True, "action": action}))
            return [ok] + self._drive()
        try:
            engine.apply_action(self.state, pid, triplet)
        except ActionError as exc:
            reply = self._env("action_result", player=pid, payload={
                "ok": False, "action": action,
                "code": exc.code, "reason": str(exc),
            })
            return [(slot, reply)]
        self.transcript.append([pid, *action])
        ok = (slot, self._env("action_result", player=pid,
                              payload={"ok": True, "action": action}))
        return [ok, self._state_msg(slot)] + self._drive()

    def _handle_turn_done(self, slot: int, pid: int) -> list:
        if self.state.current_player != pid:
            return [self._error(slot, "not_your_turn",
                                f"current player is "
                                f"{self.state.current_player}")]
        engine.turn_done(self.state, pid)
        self.transcript.append([pid] + TURN_DONE_TRIPLET)
        return self._drive()

    def timeout(self, slot: int) -> list:
        """The transport's action timer fired for this slot."""
        if self.phase != "playing":
            return []
        if self.slots[slot].spec.control != EXTERNAL:
            return []
        pid = self._player_of(slot)
        if self.state.current_player != pid:
            return []
        engine.turn_done(self.state, pid)
        self.transcript.append([pid] + TURN_DONE_TRIPLET)
        notice = (slot, self._env("turn_done", player=pid,
                                  payload={"reason": "timeout"}))
        return [notice] + self._drive()

    # -- adjudication and the drive loop -------------------------------------

    def _adjudicate(self) -> dict | None:
        if self.spec is not None:
            verdict = minigames.victory(self.state, self.spec)
            if verdict == "ongoing":
                return None
            return {"status": "over", "reason": "minigame",
                    "verdict": verdict,
                    "score": minigames.score(self.state, self.spec)}
        result = engine.full_game_result(self.state)
        return result if result["status"] == "over" else None

    def _drive(self) -> list:
        out = []
        last_turn = self.turn_hashes[-1][0]
        while True:
            if self.state.turn != last_turn:
                self.turn_hashes.append([self.state.turn,
                                         state_hash(self.state)])
                last_turn = self.state.turn
                out.extend(self._state_msg(i) for i in self._external_slots())
            result = self._adjudicate()
            if result is not None:
                self.result = result
                self.phase = "over"
                payload = {
                    "result": result,
                    "scores": {str(pid): metrics.aggregate_score(self.state,
                                                                 pid)
                               for pid in self.players},
                    "hash": state_hash(self.state),
                }
                self.game_over_payload = payload
                out.extend((i, self._env("game_over", payload=payload))
                           for i in self._external_slots())
                return out
            pid = self.state.current_player
            if (self.state.turn, pid) not in self._begun:
                self._begun.add((self.state.turn, pid))
                out.extend(
                    (i, self._env("turn_begin", player=pid,
                                  payload={"current": pid}))
                    for i in self._external_slots())
            slot = self._slot_of(pid)
            control = self.slots[slot].spec.control
            if control == EXTERNAL:
                return out
            applied = ai.builtin_ai_act(self.state, pid, control,
                                        self.ai_rngs[pid])
            self.transcript.extend([pid, *t] for t in applied)
