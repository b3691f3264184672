"""Socket service hosting game sessions over the framed JSON protocol.

Each session is one GameSession guarded by its own lock, so a session
processes one message at a time while different sessions run freely in
parallel. Connections are plain TCP; a connection claims a slot with a
hello message, then exchanges envelopes until the game ends or it
disconnects. A monitor thread watches the per-turn action timer and
auto-issues turn-done for slots that sit on their move too long, which
keeps games live even when a client stalls or drops.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field

from . import protocol
from .protocol import GameSession, ProtocolError, SessionConfig
from .ruleset import Ruleset

MONITOR_INTERVAL = 0.025


@dataclass
class _Hosted:
    """A session plus its transport bookkeeping."""

    session: GameSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    writers: dict = field(default_factory=dict)
    waiting_slot: int | None = None
    waiting_since: float = 0.0

    def refresh_wait(self) -> None:
        """Recompute whose action timer is running (lock held)."""
        ses = self.session
        if ses.phase != "playing":
            self.waiting_slot = None
            return
        slot = ses.players.index(ses.state.current_player)
        if ses.slots[slot].spec.control != protocol.EXTERNAL:
            self.waiting_slot = None
            return
        if slot != self.waiting_slot:
            self.waiting_slot = slot
            self.waiting_since = time.monotonic()


class ArenaServer:
    """Hosts one or more sessions; start() binds, stop() tears down."""

    def __init__(self, sessions: dict, ruleset_for, host: str = "127.0.0.1",
                 port: int = 0):
        """sessions: {session_id: SessionConfig}; ruleset_for: name -> Ruleset."""
        self._host = host
        self._port = port
        self._hosted = {}
        for sid, config in sessions.items():
            ruleset = ruleset_for(config.ruleset_name)
            if not isinstance(ruleset, Ruleset):
                raise TypeError("ruleset_for must return a Ruleset")
            self._hosted[sid] = _Hosted(session=GameSession(config, ruleset))
        if not self._hosted:
            raise ValueError("a server needs at least one session")
        self._default_sid = next(iter(self._hosted))
        self._listener = None
        self._threads = []
        self._running = False

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> tuple:
        self._listener = socket.create_server((self._host, self._port))
        self._listener.settimeout(0.2)
        self._running = True
        accept = threading.Thread(target=self._accept_loop, daemon=True)
        accept.start()
        monitor = threading.Thread(target=self._monitor_loop, daemon=True)
        monitor.start()
        self._threads = [accept, monitor]
        return self._listener.getsockname()

    def stop(self) -> None:
        self._running = False
        if self._listener is not None:
            self._listener.close()
        for hosted in self._hosted.values():
            with hosted.lock:
                for writer in list(hosted.writers.values()):
                    writer.close()
                hosted.writers.clear()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    @property
    def address(self) -> tuple:
        return self._listener.getsockname()

    def session(self, sid: str | None = None) -> GameSession:
        return self._hosted[sid or self._default_sid].session

    # -- internals -----------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            thread = threading.Thread(target=self._serve_connection,
                                      args=(conn,), daemon=True)
            thread.start()

    def _monitor_loop(self) -> None:
        while self._running:
            time.sleep(MONITOR_INTERVAL)
            for hosted in self._hosted.values():
                with hosted.lock:
                    hosted.refresh_wait()
                    slot = hosted.waiting_slot
                    if slot is None:
                        continue
                    elapsed = time.monotonic() - hosted.waiting_since
                    if elapsed < hosted.session.config.timeout:
                        continue
                    out = hosted.session.timeout(slot)
                    hosted.refresh_wait()
                    self._deliver(hosted, out)

    def _deliver(self, hosted: _Hosted, messages, fallback=None) -> None:
        """Route (slot, envelope) pairs to writers (session lock held)."""
        for slot, env in messages:
            writer = hosted.writers.get(slot, fallback if slot is None else None)
            if writer is None:
                continue
            try:
                writer.send(env)
            except OSError:
                hosted.writers.pop(slot, None)

    def _serve_connection(self, conn: socket.socket) -> None:
        writer = _Writer(conn)
        stream = conn.makefile("rb")
        hosted = None
        slot = None
        try:
            while self._running:
                try:
                    message = protocol.read_frame(stream)
                except ProtocolError as exc:
                    if not getattr(exc, "recoverable", False):
                        return
                    writer.send(protocol.envelope(
                        "error", payload={"code": "bad_frame",
                                          "reason": str(exc)}))
                    continue
                if message is None:
                    return
                if hosted is None:
                    hosted, slot = self._handle_hello(message, writer)
                    continue
                with hosted.lock:
                    out = hosted.session.handle(slot, message)
                    hosted.refresh_wait()
                    self._deliver(hosted, out, fallback=writer)
        finally:
            stream.close()
            if hosted is not None and slot is not None:
                with hosted.lock:
                    hosted.writers.pop(slot, None)
            writer.close()

    def _handle_hello(self, message: dict, writer) -> tuple:
        """Returns (hosted, slot); (None, None) keeps the connection open."""
        try:
            doc = protocol.check_envelope(message)
        except ProtocolError as exc:
            writer.send(protocol.envelope(
                "error", payload={"code": "bad_envelope", "reason": str(exc)}))
            return None, None
        if doc["kind"] != "hello":
            writer.send(protocol.envelope(
                "error", payload={"code": "expected_hello",
                                  "reason": "send hello first"}))
            return None, None
        sid = doc["session"] or self._default_sid
        hosted = self._hosted.get(sid)
        if hosted is None:
            writer.send(protocol.envelope(
                "join", payload={"accepted": False,
                                 "reason": f"unknown session {sid!r}"}))
            return None, None
        with hosted.lock:
            slot, out = hosted.session.hello(doc)
            if slot is not None:
                hosted.writers[slot] = writer
            hosted.refresh_wait()
            self._deliver(hosted, out, fallback=writer)
        if slot is None:
            return None, None
        return hosted, slot


class _Writer:
    """Thread-safe framed writer over one socket."""

    def __init__(self, conn: socket.socket):
        self._conn = conn
        self._lock = threading.Lock()

    def send(self, env: dict) -> None:
        data = protocol.encode_frame(env)
        with self._lock:
            self._conn.sendall(data)

    def close(self) -> None:
        try:
            self._conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._conn.close()


def serve_forever(server: ArenaServer) -> None:
    """Block a started server until interrupted, then tear it down."""
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
