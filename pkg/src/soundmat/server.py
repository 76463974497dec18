"""The serving process: hosts sessions, speaks the wire protocol.

Devices and UIs attach to a session by sending HELLO with a shared
session_id; every message for that session is then serialized through
the session's lock, while forest training runs in a worker thread so
one session's training never stalls another session's traffic.

Transports: length-prefixed frames over TCP, plus a WebSocket endpoint
carrying identical JSON bodies (one envelope per text frame) for
browsers.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import logging
import struct
import time
from dataclasses import dataclass, field

from . import protocol
from .actions import Action
from .audio import CANONICAL_RATE_HZ, AudioClip, FeatureConfig, LogMelExtractor, validate_clip
from .errors import BindFailed, FrameTooLarge, MalformedJson, SoundmatError, UnknownType
from .forest import ForestConfig, train_forest
from .mat import DevicePose, MatLayout, canonical_layout, zone_at
from .session import Mode, Session
from .wavio import pcm16_decode, resample_linear
from .websocket import WebSocketClosed, WebSocketStream, server_handshake

log = logging.getLogger("soundmat.server")


@dataclass
class ServerConfig:
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    forest_config: ForestConfig = field(default_factory=ForestConfig)
    layout: MatLayout = field(default_factory=canonical_layout)
    session_seed: int = 42


def decode_clip_payload(payload: dict) -> AudioClip:
    """pcm_b64 + sample_rate_hz -> canonical-rate 1-second clip."""
    try:
        pcm = base64.b64decode(payload["pcm_b64"], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedJson(f"pcm_b64 is not valid base64: {exc}") from exc
    samples = pcm16_decode(pcm)
    rate = payload["sample_rate_hz"]
    if rate != CANONICAL_RATE_HZ:
        samples = resample_linear(samples, rate, CANONICAL_RATE_HZ)
    return validate_clip(samples, CANONICAL_RATE_HZ)


class _Connection:
    _next_id = 0

    def __init__(self, send_body) -> None:
        _Connection._next_id += 1
        self.id = _Connection._next_id
        self.kind: str | None = None
        self.session_id: str | None = None
        self.last_seq_in = 0
        self._seq_out = 0
        self._send_body = send_body
        self._send_lock = asyncio.Lock()
        self.open = True

    async def send(self, msg_type: str, payload: dict) -> None:
        if not self.open:
            return
        async with self._send_lock:
            self._seq_out += 1
            env = protocol.Envelope(
                type=msg_type,
                session_id=self.session_id or "",
                seq=self._seq_out,
                payload=payload,
            )
            try:
                await self._send_body(protocol.encode_body(env))
            except (ConnectionError, RuntimeError, WebSocketClosed):
                self.open = False

    async def send_error(self, code: str, message: str) -> None:
        await self.send("ERROR", {"code": code, "message": message})


class SessionHost:
    def __init__(self, session: Session) -> None:
        self.session = session
        self.lock = asyncio.Lock()
        self.attachments: set[_Connection] = set()
        self.last_zone: Action | None = None
        self.training_task: asyncio.Task | None = None


class SoundServer:
    def __init__(self, config: ServerConfig | None = None) -> None:
        self.config = config or ServerConfig()
        self.sessions: dict[str, SessionHost] = {}
        self._tcp_server: asyncio.AbstractServer | None = None
        self._ws_server: asyncio.AbstractServer | None = None

    # -- lifecycle -----------------------------------------------------------

    async def start(self, host: str = "127.0.0.1", tcp_port: int = 7440, ws_port: int | None = None) -> tuple[int, int | None]:
        """Bind listeners; returns the actual (tcp_port, ws_port)."""
        try:
            self._tcp_server = await asyncio.start_server(self._serve_tcp, host, tcp_port)
        except OSError as exc:
            raise BindFailed(f"cannot bind tcp {host}:{tcp_port}: {exc}") from exc
        actual_tcp = self._tcp_server.sockets[0].getsockname()[1]
        actual_ws = None
        if ws_port is not None:
            try:
                self._ws_server = await asyncio.start_server(self._serve_ws, host, ws_port)
            except OSError as exc:
                raise BindFailed(f"cannot bind ws {host}:{ws_port}: {exc}") from exc
            actual_ws = self._ws_server.sockets[0].getsockname()[1]
        return actual_tcp, actual_ws

    async def stop(self) -> None:
        for server in (self._tcp_server, self._ws_server):
            if server is not None:
                server.close()
                await server.wait_closed()
        for host in self.sessions.values():
            if host.training_task is not None and not host.training_task.done():
                host.training_task.cancel()

    async def wait_for_training(self, session_id: str) -> None:
        host = self.sessions.get(session_id)
        if host is not None and host.training_task is not None:
            await asyncio.shield(host.training_task)

    # -- transports ----------------------------------------------------------

    async def _serve_tcp(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        async def send_body(body: bytes) -> None:
            writer.write(struct.pack(">I", len(body)) + body)
            await writer.drain()

        conn = _Connection(send_body)
        try:
            while True:
                try:
                    header = await reader.readexactly(protocol.HEADER_BYTES)
                except (asyncio.IncompleteReadError, ConnectionError):
                    break
                (declared,) = struct.unpack(">I", header)
                if declared > protocol.MAX_FRAME_BYTES:
                    # cannot resync the byte stream after an oversized header
                    await conn.send_error(FrameTooLarge.code, f"declared {declared} bytes")
                    break
                try:
                    body = await reader.readexactly(declared)
                except (asyncio.IncompleteReadError, ConnectionError):
                    break
                await self._handle_body(conn, body)
        finally:
            self._detach(conn)
            writer.close()

    async def _serve_ws(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            await server_handshake(reader, writer)
        except (WebSocketClosed, asyncio.IncompleteReadError, ConnectionError, asyncio.LimitOverrunError):
            writer.close()
            return
        ws = WebSocketStream(reader, writer, mask_outgoing=False)

        async def send_body(body: bytes) -> None:
            await ws.send_text(body.decode("utf-8"))

        conn = _Connection(send_body)
        try:
            while True:
                try:
                    opcode, payload = await ws.recv_message()
                except (WebSocketClosed, ConnectionError, asyncio.IncompleteReadError):
                    break
                await self._handle_body(conn, payload)
        finally:
            self._detach(conn)
            writer.close()

    # -- dispatch ------------------------------------------------------------

    async def _handle_body(self, conn: _Connection, body: bytes) -> None:
        try:
            env = protocol.decode_body(body)
        except (MalformedJson, UnknownType, FrameTooLarge) as exc:
            await conn.send_error(exc.code, str(exc))
            return
        if env.seq <= conn.last_seq_in:
            await conn.send_error("SEQ_ORDER", f"seq {env.seq} not after {conn.last_seq_in}")
            return
        conn.last_seq_in = env.seq
        try:
            await self._handle_envelope(conn, env)
        except SoundmatError as exc:
            await conn.send_error(exc.code, str(exc))
        except Exception:  # keep the connection healthy, whatever the handler hit
            log.exception("internal error handling %s", env.type)
            await conn.send_error("INTERNAL", f"internal error handling {env.type}")

    async def _handle_envelope(self, conn: _Connection, env: protocol.Envelope) -> None:
        if conn.session_id is None:
            if env.type != "HELLO":
                await conn.send_error("HELLO_REQUIRED", "send HELLO before other messages")
                return
            await self._handle_hello(conn, env)
            return
        if env.session_id != conn.session_id:
            await conn.send_error("SESSION_MISMATCH", "envelope session_id differs from HELLO")
            return

        host = self.sessions[conn.session_id]
        handler = {
            "POSITION_UPDATE": self._handle_position,
            "RECORD_SAMPLE": self._handle_record,
            "DELETE_LAST": self._handle_delete_last,
            "RESET_ALL": self._handle_reset_all,
            "TRAIN_REQUEST": self._handle_train_request,
            "MODE_BUTTON": self._handle_mode_button,
            "INFER_REQUEST": self._handle_infer,
            "HELLO": None,
            "ERROR": None,
        }.get(env.type, "unexpected")
        if handler == "unexpected":
            await conn.send_error("UNEXPECTED_TYPE", f"{env.type} is not a client message")
            return
        if handler is None:
            if env.type == "ERROR":
                log.warning("client error on session %s: %s", conn.session_id, env.payload)
            else:
                await conn.send_error("UNEXPECTED_TYPE", "connection already attached")
            return
        await handler(conn, host, env.payload)

    async def _handle_hello(self, conn: _Connection, env: protocol.Envelope) -> None:
        if env.payload["protocol_version"] != protocol.PROTOCOL_VERSION:
            await conn.send_error(
                "UNSUPPORTED_VERSION",
                f"server speaks protocol version {protocol.PROTOCOL_VERSION}",
            )
            return
        host = self.sessions.get(env.session_id)
        if host is None:
            session = Session(
                seed=self.config.session_seed,
                extractor=LogMelExtractor(self.config.feature_config),
                forest_config=self.config.forest_config,
            )
            host = SessionHost(session)
            self.sessions[env.session_id] = host
        conn.kind = env.payload["client_kind"]
        conn.session_id = env.session_id
        host.attachments.add(conn)
        # state sync so a late attachment derives everything from messages;
        # fixed shape (mode, zone, six counts) lets clients consume it blindly
        async with host.lock:
            mode = host.session.mode.value
            counts = host.session.counts()
            zone = host.session.current_zone
        await conn.send("MODE_CHANGED", {"mode": mode})
        await conn.send("ZONE_CHANGED", {"action_id": int(zone) if zone is not None else None})
        for action in Action:
            await conn.send("RECORD_ACK", {"action_id": int(action), "count": counts[action]})

    async def _handle_position(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        pose = DevicePose(payload["x_mm"], payload["y_mm"], payload["heading_deg"])
        zone = zone_at(self.config.layout, pose)
        async with host.lock:
            host.session.set_zone(zone)
            changed = zone != host.last_zone
            host.last_zone = zone
        if changed:
            await self._broadcast(
                host, "ZONE_CHANGED", {"action_id": int(zone) if zone is not None else None}
            )

    async def _handle_record(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        clip = decode_clip_payload(payload)
        label = Action(payload["action_id"])
        async with host.lock:
            count = host.session.record_sample(clip, label=label)
        await self._broadcast(host, "RECORD_ACK", {"action_id": int(label), "count": count})

    async def _handle_delete_last(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        async with host.lock:
            label = host.session.delete_last()
            count = len(host.session.dataset[label])
        await self._broadcast(host, "RECORD_ACK", {"action_id": int(label), "count": count})

    async def _handle_reset_all(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        async with host.lock:
            host.session.reset_all()
        for action in Action:
            await self._broadcast(host, "RECORD_ACK", {"action_id": int(action), "count": 0})

    async def _handle_train_request(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        await self._start_training(host)

    async def _handle_mode_button(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        async with host.lock:
            mode = host.session.mode
            if mode is Mode.INFERENCE:
                host.session.press_mode_button()
        if mode is Mode.INFERENCE:
            await self._broadcast(host, "MODE_CHANGED", {"mode": Mode.TRAINING.value})
        elif mode is Mode.TRAINING:
            await self._start_training(host)
        # TRAINING_IN_PROGRESS: the button does nothing

    async def _start_training(self, host: SessionHost) -> None:
        # "started" always precedes the matching done/error, even when a
        # guard rejects the request
        async with host.lock:
            present = sorted(int(a) for a, s in host.session.dataset.items() if s)
            await self._broadcast(
                host, "TRAIN_STATUS", {"state": "started", "duration_ms": 0, "classes": present}
            )
            try:
                samples = host.session.begin_training()
            except SoundmatError as exc:
                await self._broadcast(
                    host,
                    "TRAIN_STATUS",
                    {"state": "error", "duration_ms": 0, "classes": [], "error_msg": f"{exc.code}: {exc}"},
                )
                return
        await self._broadcast(host, "MODE_CHANGED", {"mode": Mode.TRAINING_IN_PROGRESS.value})
        host.training_task = asyncio.get_running_loop().create_task(self._run_training(host, samples))

    async def _run_training(self, host: SessionHost, samples) -> None:
        loop = asyncio.get_running_loop()
        start = time.perf_counter()
        try:
            model = await loop.run_in_executor(
                None, train_forest, samples, self.config.forest_config, host.session.seed
            )
        except Exception as exc:
            async with host.lock:
                host.session.abort_training()
            code = exc.code if isinstance(exc, SoundmatError) else "TRAIN_FAILED"
            await self._broadcast(
                host,
                "TRAIN_STATUS",
                {"state": "error", "duration_ms": 0, "classes": [], "error_msg": f"{code}: {exc}"},
            )
            await self._broadcast(host, "MODE_CHANGED", {"mode": Mode.TRAINING.value})
            return
        duration_ms = int((time.perf_counter() - start) * 1000)
        async with host.lock:
            host.session.complete_training(model)
        await self._broadcast(
            host,
            "TRAIN_STATUS",
            {
                "state": "done",
                "duration_ms": duration_ms,
                "classes": [int(a) for a in model.classes_present],
            },
        )
        await self._broadcast(host, "MODE_CHANGED", {"mode": Mode.INFERENCE.value})

    async def _handle_infer(self, conn: _Connection, host: SessionHost, payload: dict) -> None:
        clip = decode_clip_payload(payload)
        async with host.lock:
            result = host.session.infer(clip)
        result_payload = {
            "probs": {str(int(a)): p for a, p in result.probabilities.items()},
            "top_action_id": int(result.top),
            "latency_ms": result.latency_ms,
        }
        command_payload = {"action_id": int(result.top)}
        await conn.send("INFER_RESULT", result_payload)
        await conn.send("ACTION_COMMAND", command_payload)
        for other in list(host.attachments):
            if other is conn:
                continue
            await other.send("INFER_RESULT", result_payload)
            if other.kind == "device":
                await other.send("ACTION_COMMAND", command_payload)

    # -- plumbing ------------------------------------------------------------

    async def _broadcast(self, host: SessionHost, msg_type: str, payload: dict) -> None:
        for conn in list(host.attachments):
            await conn.send(msg_type, payload)

    def _detach(self, conn: _Connection) -> None:
        conn.open = False
        if conn.session_id is not None:
            host = self.sessions.get(conn.session_id)
            if host is not None:
                host.attachments.discard(conn)


async def serve_forever(config: ServerConfig, host: str, tcp_port: int, ws_port: int | None) -> None:
    server = SoundServer(config)
    tcp, ws = await server.start(host, tcp_port, ws_port)
    log.info("listening on tcp %s:%s%s", host, tcp, f", ws {host}:{ws}" if ws else "")
    try:
        await asyncio.Event().wait()
    finally:
        await server.stop()
