"""Command-line entry point.

One executable wraps the library: run local games, host sessions,
generate and play mini-game instances, re-verify replays, print the
state-space estimates, and validate ruleset files.

Exit codes: 0 success, 1 any validation or verification failure,
2 bad command-line usage (argparse).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import ai, engine, estimator, metrics, minigames, replay
from .protocol import EXTERNAL, SessionConfig, SlotSpec
from .ruleset import RulesetError, builtin_ruleset_path, load_ruleset
from .world import GameConfig, new_game

DEFAULT_TIMEOUT_ENV = "CIVARENA_TIMEOUT"

SCRIPT_CONTROL = "script"


def _resolve_ruleset(name: str):
    path = Path(name)
    if not path.exists():
        path = Path(builtin_ruleset_path(name))
    return load_ruleset(path)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# play


def _parse_ai_list(text: str, players: int) -> list:
    levels = [part.strip() for part in text.split(",")] if text else []
    if len(levels) < players:
        levels += ["random"] * (players - len(levels))
    if len(levels) != players:
        raise ValueError(f"{len(levels)} AI entries for {players} players")
    allowed = set(ai.AI_LEVELS) | set(ai.NEGOTIATOR_AIS) | {SCRIPT_CONTROL}
    for level in levels:
        if level not in allowed:
            raise ValueError(f"unknown AI level {level!r}")
    return levels


def _load_script(path: str) -> list:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    entries = json.loads(text)
    if not isinstance(entries, list):
        raise ValueError("a script must be a JSON list of actions")
    return [list(e) for e in entries]


def _scripted_turn(state, pid: int, script: list, recorder) -> None:
    """Apply the next scripted actions for pid up to its turn-done."""
    while script and script[0][0] == pid:
        entry = script.pop(0)
        triplet = (entry[1], entry[2], entry[3])
        if triplet == ai.TURN_DONE:
            engine.turn_done(state, pid)
            recorder.action(pid, triplet)
            return
        engine.apply_action(state, pid, triplet)
        recorder.action(pid, triplet)
    engine.turn_done(state, pid)
    recorder.action(pid, ai.TURN_DONE)


def _drive_local_game(state, levels: list, seed: int, recorder,
                      script: list, on_turn=None) -> dict:
    rngs = {pid: ai.session_rng(seed, pid) for pid in state.players}
    while True:
        result = engine.full_game_result(state)
        if result["status"] == "over":
            return result
        pid = state.current_player
        level = levels[pid] if pid < len(levels) else "random"
        before = state.turn
        if level == SCRIPT_CONTROL:
            _scripted_turn(state, pid, script, recorder)
        else:
            if pid not in rngs:
                rngs[pid] = ai.session_rng(seed, pid)
            for triplet in ai.builtin_ai_act(state, pid, level, rngs[pid]):
                recorder.action(pid, triplet)
        recorder.turn_boundary(state)
        if state.turn != before and on_turn is not None:
            on_turn(state)


def _write_report(state, rows: list, result: dict, elapsed: float,
                  config_echo: dict, out_dir: Path, weights=None) -> None:
    turns = state.turn
    lines = ["configuration: " + " ".join(f"{k}={v}"
                                          for k, v in config_echo.items())]
    lines.append(metrics.report(state, weights))
    lines.append(f"result: {json.dumps(result, sort_keys=True)}")
    rate = turns / elapsed if elapsed > 0 else float("inf")
    lines.append(f"turns: {turns}  wall_clock_s: {elapsed:.3f}  "
                 f"turns_per_second: {rate:.1f}")
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    sidecar = {
        "config": config_echo,
        "columns": list(metrics.REPORT_COLUMNS),
        "rows": rows,
        "result": result,
        "wall_clock_s": elapsed,
        "turns_per_second": rate,
        "weights": weights or metrics.DEFAULT_WEIGHTS,
    }
    (out_dir / "report.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    print(text, end="")


def cmd_play(args) -> int:
    ruleset = _resolve_ruleset(args.ruleset)
    try:
        levels = _parse_ai_list(args.ai, args.players)
    except ValueError as exc:
        return _fail(str(exc))
    script = _load_script(args.script) if args.script else []
    config = GameConfig(width=args.width, height=args.height,
                        players=args.players, seed=args.seed,
                        max_turns=args.max_turns,
                        ai_fill=tuple(levels))
    state = new_game(ruleset, config)
    recorder = replay.Recorder(replay.standard_setup(ruleset, config), state)
    rows = []

    def collect(st):
        rows.extend(metrics.report_row(st, pid) for pid in sorted(st.players))

    started = time.perf_counter()
    try:
        result = _drive_local_game(state, levels, args.seed, recorder,
                                   script, on_turn=collect)
    except engine.ActionError as exc:
        return _fail(f"scripted action rejected: {exc}")
    elapsed = time.perf_counter() - started

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = recorder.finish(state, result)
    replay.save_record(record, out_dir / "replay.json")
    echo = {"ruleset": ruleset.name, "players": args.players,
            "ai": ",".join(levels), "seed": args.seed,
            "width": args.width, "height": args.height,
            "max_turns": args.max_turns}
    _write_report(state, rows, result, elapsed, echo, out_dir)
    print(f"replay written to {out_dir / 'replay.json'}")
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    from .server import ArenaServer, serve_forever

    host, _, port_text = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        return _fail(f"bad bind address {args.bind!r}")
    default_timeout = float(os.environ.get(DEFAULT_TIMEOUT_ENV, "30"))
    timeout = args.timeout if args.timeout is not None else default_timeout
    slots = []
    for part in (args.ai.split(",") if args.ai else []):
        part = part.strip()
        slots.append(SlotSpec(control=part or EXTERNAL, mode=args.mode))
    while len(slots) < args.players:
        slots.append(SlotSpec(control=EXTERNAL, mode=args.mode))
    minigame_doc = None
    if args.minigame:
        minigame_doc = minigames.load_spec(args.minigame).to_dict()
    config = SessionConfig(
        session_id=args.session_id, seed=args.seed, slots=tuple(slots),
        width=args.width, height=args.height, max_turns=args.max_turns,
        timeout=timeout, minigame=minigame_doc, ruleset_name=args.ruleset,
    )
    server = ArenaServer({args.session_id: config}, _resolve_ruleset,
                         host=host, port=port)
    bound = server.start()
    print(f"listening on {bound[0]}:{bound[1]} "
          f"(session {args.session_id!r}, timeout {timeout:g}s)")
    serve_forever(server)
    return 0


# ---------------------------------------------------------------------------
# minigame


def _gen_one(task) -> dict:
    ruleset_name, game_id, difficulty, seed, out_dir = task
    ruleset = _resolve_ruleset(ruleset_name)
    spec = minigames.generate(ruleset, game_id, difficulty, seed)
    name = f"minigame_{game_id:02d}_{difficulty}_{seed}.json"
    minigames.save_spec(spec, Path(out_dir) / name)
    return {"file": name, "difficulty": minigames.classify_difficulty(spec)}


def cmd_minigame_gen(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(args.ruleset, args.type, args.difficulty, args.seed + i,
              str(out_dir)) for i in range(args.count)]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and args.count > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_gen_one, tasks))
    else:
        results = [_gen_one(t) for t in tasks]
    bands = {}
    for item in results:
        bands[item["difficulty"]] = bands.get(item["difficulty"], 0) + 1
    print(f"generated {len(results)} instances of game {args.type} "
          f"in {out_dir}")
    for band in sorted(bands):
        print(f"  {band}: {bands[band]}")
    return 0


def cmd_minigame_stats(args) -> int:
    files = sorted(Path(args.dir).glob("*.json"))
    if not files:
        return _fail(f"no instance files in {args.dir}")
    rows = []
    for path in files:
        try:
            spec = minigames.load_spec(path)
        except (minigames.MiniGameError, json.JSONDecodeError):
            continue
        rows.append({
            "file": path.name,
            "game_id": spec.game_id,
            "name": spec.name,
            "difficulty": spec.difficulty,
            "classified": minigames.classify_difficulty(spec),
            "seed": spec.seed,
            "tau_max": spec.tau_max,
            "stats": spec.stats,
        })
    if not rows:
        return _fail(f"no readable instance files in {args.dir}")
    header = f"{'file':<40} {'game':>4} {'difficulty':<10} {'tau':>4}  stats"
    print(header)
    for row in rows:
        stat_text = " ".join(f"{k}={v:.3f}" if isinstance(v, float)
                             else f"{k}={v}"
                             for k, v in sorted(row["stats"].items()))
        print(f"{row['file']:<40} {row['game_id']:>4} "
              f"{row['difficulty']:<10} {row['tau_max']:>4}  {stat_text}")
    counts = {}
    for row in rows:
        key = (row["game_id"], row["difficulty"])
        counts[key] = counts.get(key, 0) + 1
    print("totals:")
    for (gid, band), n in sorted(counts.items()):
        print(f"  game {gid} {band}: {n}")
    if args.json:
        Path(args.json).write_text(
            json.dumps(rows, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_minigame_play(args) -> int:
    spec = minigames.load_spec(args.file)
    state = spec.start_state()
    levels = {}
    levels[spec.player] = args.agent
    if spec.opponent is not None:
        levels[spec.opponent] = args.opponent or spec.opponent_ai or "random"
    recorder = replay.Recorder(replay.minigame_setup(spec), state)
    rngs = {pid: ai.session_rng(args.seed, pid) for pid in state.players}
    verdict = minigames.victory(state, spec)
    while verdict == "ongoing":
        pid = state.current_player
        level = levels.get(pid, "random")
        for triplet in ai.builtin_ai_act(state, pid, level, rngs[pid]):
            recorder.action(pid, triplet)
        recorder.turn_boundary(state)
        verdict = minigames.victory(state, spec)
    score = minigames.score(state, spec)
    result = {"status": "over", "reason": "minigame", "verdict": verdict,
              "score": score}
    record = recorder.finish(state, result)
    if args.replay:
        replay.save_record(record, args.replay)
        print(f"replay written to {args.replay}")
    print(f"{spec.name} ({spec.difficulty}, seed {spec.seed}): "
          f"{verdict} with score {score:g} after {state.turn} turns")
    return 0


# ---------------------------------------------------------------------------
# replay / estimate / ruleset


def cmd_replay(args) -> int:
    try:
        record = replay.load_record(args.file)
        state = replay.execute(record)
    except replay.ReplayError as exc:
        return _fail(str(exc))
    blob = Path(args.file).read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    print(f"replay ok: {state.turn} turns, {len(record.actions)} actions, "
          f"file sha256 {digest[:16]}")
    return 0


def cmd_estimate(args) -> int:
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        if not _:
            return _fail(f"bad --param {item!r}, expected key=value")
        params[key] = int(value)
    try:
        if args.preset == "turn5":
            if params:
                return _fail("the turn5 preset takes no parameters")
            estimate = estimator.estimate_turn5()
        else:
            estimate = estimator.estimate_midgame(**params)
    except (TypeError, ValueError) as exc:
        return _fail(str(exc))
    for line in estimator.report_lines(estimate):
        print(line)
    if args.json:
        doc = {
            "preset": args.preset,
            "inputs": estimate.inputs,
            "settlers_states": estimate.settlers_states,
            "workers_states": estimate.workers_states,
            "explorer_states": estimate.explorer_states,
            "turn5_total_states": estimate.turn5_total_states,
            "turn5_actions": estimate.turn5_actions,
            "late_state_log10": estimate.late_state_log10,
            "late_action_log10": estimate.late_action_log10,
        }
        Path(args.json).write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_ruleset_validate(args) -> int:
    try:
        ruleset = load_ruleset(args.path)
    except (RulesetError, OSError) as exc:
        return _fail(str(exc))
    caps = ruleset.capacities
    print(f"ok: ruleset {ruleset.name!r} version {ruleset.version}")
    print(f"  terrain types: {len(ruleset.terrain_defs)}")
    print(f"  unit types: {len(ruleset.unit_defs)} / {caps.unit_types}")
    print(f"  building types: {len(ruleset.building_defs)} "
          f"/ {caps.building_types}")
    print(f"  tech types: {len(ruleset.tech_defs)} / {caps.tech_types}")
    print(f"  governments: {len(ruleset.government_defs)}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="civ-arena",
        description="Turn-based strategy arena: engine, server, mini-games.")
    sub = parser.add_subparsers(dest="command", required=True)

    play = sub.add_parser("play", help="run a local game with builtin or "
                                       "scripted players")
    play.add_argument("--ruleset", default="mini")
    play.add_argument("--players", type=int, default=2)
    play.add_argument("--ai", default="",
                      help="comma list per player: random, expander, "
                           "aggressor, or script")
    play.add_argument("--seed", type=int, default=0)
    play.add_argument("--width", type=int, default=12)
    play.add_argument("--height", type=int, default=12)
    play.add_argument("--max-turns", type=int, default=100)
    play.add_argument("--script", default="",
                      help="JSON action list file for script slots "
                           "('-' for stdin)")
    play.add_argument("--out", default=".", help="artifact directory")
    play.set_defaults(func=cmd_play)

    serve = sub.add_parser("serve", help="host sessions over the wire "
                                         "protocol")
    serve.add_argument("--bind", default="127.0.0.1:4746")
    serve.add_argument("--ruleset", default="mini")
    serve.add_argument("--players", type=int, default=2)
    serve.add_argument("--ai", default="",
                       help="comma list per slot; empty entry = external")
    serve.add_argument("--mode", default="lang",
                       choices=("tensor", "lang", "both"))
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--width", type=int, default=12)
    serve.add_argument("--height", type=int, default=12)
    serve.add_argument("--max-turns", type=int, default=200)
    serve.add_argument("--timeout", type=float, default=None,
                       help=f"action timeout seconds (default from "
                            f"${DEFAULT_TIMEOUT_ENV} or 30)")
    serve.add_argument("--session-id", default="main")
    serve.add_argument("--minigame", default="",
                       help="host this instance file instead of a full game")
    serve.set_defaults(func=cmd_serve)

    mg = sub.add_parser("minigame", help="generate, inspect, or play "
                                         "instances")
    mg_sub = mg.add_subparsers(dest="minigame_command", required=True)

    gen = mg_sub.add_parser("gen", help="generate instance files")
    gen.add_argument("--ruleset", default="mini")
    gen.add_argument("--type", type=int, required=True)
    gen.add_argument("--difficulty", required=True,
                     choices=("easy", "normal", "hard"))
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=".")
    gen.add_argument("--jobs", type=int, default=0,
                     help="parallel workers (default: all cores)")
    gen.set_defaults(func=cmd_minigame_gen)

    stats = mg_sub.add_parser("stats", help="summarize instance files")
    stats.add_argument("--dir", default=".")
    stats.add_argument("--json", default="", help="also write a JSON sidecar")
    stats.set_defaults(func=cmd_minigame_stats)

    mplay = mg_sub.add_parser("play", help="play one instance with builtin "
                                           "policies")
    mplay.add_argument("file")
    mplay.add_argument("--agent", default="random",
                       choices=ai.AI_LEVELS + ai.NEGOTIATOR_AIS)
    mplay.add_argument("--opponent", default="",
                       help="override the instance's opponent policy")
    mplay.add_argument("--seed", type=int, default=0)
    mplay.add_argument("--replay", default="", help="write a replay here")
    mplay.set_defaults(func=cmd_minigame_play)

    rep = sub.add_parser("replay", help="re-execute a replay and verify "
                                        "its hashes")
    rep.add_argument("file")
    rep.set_defaults(func=cmd_replay)

    est = sub.add_parser("estimate", help="print the state-space estimates")
    est.add_argument("--preset", required=True, choices=("turn5", "midgame"))
    est.add_argument("--param", action="append",
                     help="midgame override, key=value (repeatable)")
    est.add_argument("--json", default="", help="also write a JSON sidecar")
    est.set_defaults(func=cmd_estimate)

    rules = sub.add_parser("ruleset", help="ruleset tools")
    rules_sub = rules.add_subparsers(dest="ruleset_command", required=True)
    validate = rules_sub.add_parser("validate", help="load and check a "
                                                     "ruleset file")
    validate.add_argument("path")
    validate.set_defaults(func=cmd_ruleset_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
