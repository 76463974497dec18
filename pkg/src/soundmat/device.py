"""Simulated device: pose on the mat, synthetic microphone, action motors.

The simulator replaces the physical unit: it holds a pose, renders
clips from configurable sound sources instead of a microphone, executes
action commands as kinematic updates on a deterministic virtual clock,
and talks to the server over the regular wire protocol.
"""

from __future__ import annotations

import asyncio
import base64
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .actions import ACTION_EMOTICONS, Action, action_from_id, action_from_name
from .audio import CANONICAL_RATE_HZ, AudioClip, validate_clip
from .errors import (
    NoZoneSelected,
    ServerUnreachable,
    SoundmatError,
    UnknownZone,
    error_from_code,
)
from .mat import DevicePose, MatLayout, canonical_layout
from .session import InferenceResult
from .wavio import load_wav, pcm16_encode, resample_linear


class SimClock:
    """Virtual time source; only ever advanced by the simulation."""

    def __init__(self) -> None:
        self.now_s = 0.0

    def advance(self, dt_s: float) -> None:
        if dt_s < 0:
            raise ValueError("cannot advance the clock backwards")
        self.now_s += dt_s


@dataclass
class SoundSource:
    """Stands in for hand-held sound makers: sine, noise, clicks, or a WAV."""

    kind: str
    amplitude: float = 0.5
    freq_hz: float = 440.0
    rate_hz: float = 4.0
    seed: int = 0
    wav_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("sine", "white_noise", "click_train", "wav_file"):
            raise ValueError(f"unknown sound source kind: {self.kind!r}")
        self._rng = np.random.default_rng(self.seed)
        if self.kind == "wav_file":
            if self.wav_path is None:
                raise ValueError("wav_file source needs a path")
            samples, rate = load_wav(self.wav_path)
            self._wav_samples = resample_linear(samples, rate, CANONICAL_RATE_HZ)

    @classmethod
    def sine(cls, freq_hz: float = 440.0, amplitude: float = 0.5) -> "SoundSource":
        return cls(kind="sine", freq_hz=freq_hz, amplitude=amplitude)

    @classmethod
    def white_noise(cls, amplitude: float = 0.5, seed: int = 0) -> "SoundSource":
        return cls(kind="white_noise", amplitude=amplitude, seed=seed)

    @classmethod
    def click_train(cls, rate_hz: float = 4.0, amplitude: float = 0.5) -> "SoundSource":
        return cls(kind="click_train", rate_hz=rate_hz, amplitude=amplitude)

    @classmethod
    def wav_file(cls, path: str, amplitude: float = 0.5) -> "SoundSource":
        return cls(kind="wav_file", wav_path=path, amplitude=amplitude)

    def render(self, duration_s: float = 1.0, rate: int = CANONICAL_RATE_HZ,
               amplitude: float | None = None) -> AudioClip:
        amp = self.amplitude if amplitude is None else amplitude
        n = int(round(duration_s * rate))
        t = np.arange(n) / rate
        if self.kind == "sine":
            samples = amp * np.sin(2.0 * np.pi * self.freq_hz * t)
        elif self.kind == "white_noise":
            samples = amp * self._rng.uniform(-1.0, 1.0, size=n)
        elif self.kind == "click_train":
            samples = np.zeros(n)
            click_len = max(1, int(0.002 * rate))
            decay = np.exp(-np.arange(click_len) / (click_len / 4.0))
            onset = 0.0
            while onset < duration_s:
                start = int(round(onset * rate))
                stop = min(start + click_len, n)
                samples[start:stop] = amp * decay[: stop - start]
                onset += 1.0 / self.rate_hz
        else:
            samples = amp / max(self.amplitude, 1e-9) * self._wav_samples
        return validate_clip(samples, rate)


def source_from_json(doc: dict) -> SoundSource:
    kwargs = {k: v for k, v in doc.items() if k != "kind" and k != "path"}
    if "path" in doc:
        kwargs["wav_path"] = doc["path"]
    return SoundSource(kind=doc["kind"], **kwargs)


@dataclass
class ScreenState:
    mode_text: str = "training"
    action_name: str = ""
    emoticon: str = ""
    sample_count: int = 0
    probs: dict[Action, float] | None = None


@dataclass
class MotionRecord:
    action: Action
    start: DevicePose
    end: DevicePose
    duration_s: float
    clamped: bool
    waypoints: list[DevicePose] = field(default_factory=list)
    led_pulse_s: float = 0.0


FORWARD_MM = 50.0
TURN_DEG = 90.0
SHAKE_MM = 3.0
SHAKE_OSCILLATIONS = 5
ACTION_DURATION_S = 1.0


class SimDevice:
    def __init__(self, layout: MatLayout | None = None,
                 pose: DevicePose | None = None,
                 clock: SimClock | None = None) -> None:
        self.layout = layout or canonical_layout()
        self.pose = pose or DevicePose(self.layout.width_mm / 2, self.layout.height_mm / 2, 0.0)
        self.clock = clock or SimClock()
        self.led_on = False
        self.screen = ScreenState()
        self.zone: Action | None = None
        self.motion_log: list[MotionRecord] = []

    def handle_server_envelope(self, env: protocol.Envelope) -> None:
        """Mirror server pushes onto the screen, like the real firmware."""
        if env.type == "ZONE_CHANGED":
            action_id = env.payload["action_id"]
            self.zone = Action(action_id) if action_id is not None else None
            self.screen.action_name = self.zone.canonical_name if self.zone else ""
            self.screen.emoticon = ACTION_EMOTICONS[self.zone] if self.zone else ""
        elif env.type == "RECORD_ACK":
            if self.zone is not None and env.payload["action_id"] == int(self.zone):
                self.screen.sample_count = env.payload["count"]
        elif env.type == "MODE_CHANGED":
            self.screen.mode_text = env.payload["mode"]
        elif env.type == "INFER_RESULT":
            self.screen.probs = {
                Action(int(k)): v for k, v in env.payload["probs"].items()
            }


def _clamp_pose(layout: MatLayout, x: float, y: float, heading: float) -> tuple[DevicePose, bool]:
    cx = min(max(x, 0.0), layout.width_mm)
    cy = min(max(y, 0.0), layout.height_mm)
    return DevicePose(cx, cy, heading), (cx != x or cy != y)


def apply_action(device: SimDevice, action: Action) -> MotionRecord:
    """Execute one action: translate, rotate, shake, or pulse the LED.

    Heading 0 deg points along +x and the angle grows toward +y;
    translations are clamped to the mat with the clamping recorded.
    """
    start = device.pose
    heading_rad = math.radians(start.heading_deg)
    clamped = False
    waypoints: list[DevicePose] = []
    led_pulse_s = 0.0
    end = start

    if action in (Action.GO_FORWARD, Action.GO_BACKWARD):
        sign = 1.0 if action is Action.GO_FORWARD else -1.0
        x = start.x_mm + sign * FORWARD_MM * math.cos(heading_rad)
        y = start.y_mm + sign * FORWARD_MM * math.sin(heading_rad)
        end, clamped = _clamp_pose(device.layout, x, y, start.heading_deg)
    elif action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        sign = 1.0 if action is Action.TURN_LEFT else -1.0
        end = DevicePose(start.x_mm, start.y_mm, start.heading_deg + sign * TURN_DEG)
    elif action is Action.SHAKE:
        perp = heading_rad + math.pi / 2.0
        for k in range(SHAKE_OSCILLATIONS):
            for offset in (SHAKE_MM, -SHAKE_MM):
                wx = start.x_mm + offset * math.cos(perp)
                wy = start.y_mm + offset * math.sin(perp)
                waypoint, was_clamped = _clamp_pose(device.layout, wx, wy, start.heading_deg)
                clamped = clamped or was_clamped
                waypoints.append(waypoint)
        end = start  # zero net displacement
    elif action is Action.LIGHT_UP:
        device.led_on = True
        led_pulse_s = ACTION_DURATION_S

    device.clock.advance(ACTION_DURATION_S)
    if action is Action.LIGHT_UP:
        device.led_on = False
    device.pose = end
    record = MotionRecord(
        action=action,
        start=start,
        end=end,
        duration_s=ACTION_DURATION_S,
        clamped=clamped,
        waypoints=waypoints,
        led_pulse_s=led_pulse_s,
    )
    device.motion_log.append(record)
    return record


class DeviceClient:
    """Protocol client for a simulated device (or any scripted peer)."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 session_id: str, device: SimDevice | None = None) -> None:
        self.reader = reader
        self.writer = writer
        self.session_id = session_id
        self.device = device
        self.known_counts: dict[Action, int] = {}
        self._seq = 0
        self._incoming: asyncio.Queue[protocol.Envelope | None] = asyncio.Queue()
        self._reader_task = asyncio.get_running_loop().create_task(self._read_loop())

    @classmethod
    async def connect(cls, host: str, port: int, session_id: str,
                      device: SimDevice | None = None, kind: str = "device") -> "DeviceClient":
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except (ConnectionError, OSError) as exc:
            raise ServerUnreachable(f"cannot connect to {host}:{port}: {exc}") from exc
        client = cls(reader, writer, session_id, device)
        await client.send("HELLO", {"client_kind": kind, "protocol_version": protocol.PROTOCOL_VERSION})
        # fixed-shape state sync: mode, zone, then one count per action
        await client.expect("MODE_CHANGED")
        zone_env = await client.expect("ZONE_CHANGED")
        if device is not None and zone_env.payload["action_id"] is not None:
            device.zone = Action(zone_env.payload["action_id"])
        counts = {}
        for _ in Action:
            ack = await client.expect("RECORD_ACK")
            counts[Action(ack.payload["action_id"])] = ack.payload["count"]
        client.known_counts = counts
        return client

    async def _read_loop(self) -> None:
        try:
            while True:
                header = await self.reader.readexactly(protocol.HEADER_BYTES)
                declared = int.from_bytes(header, "big")
                body = await self.reader.readexactly(declared)
                env = protocol.decode_body(body)
                if self.device is not None:
                    self.device.handle_server_envelope(env)
                await self._incoming.put(env)
        except (asyncio.IncompleteReadError, ConnectionError, SoundmatError):
            await self._incoming.put(None)

    async def send(self, msg_type: str, payload: dict) -> None:
        self._seq += 1
        env = protocol.Envelope(type=msg_type, session_id=self.session_id,
                                seq=self._seq, payload=payload)
        try:
            self.writer.write(protocol.encode(env))
            await self.writer.drain()
        except (ConnectionError, RuntimeError) as exc:
            raise ServerUnreachable(f"send failed: {exc}") from exc

    async def expect(self, *types: str, timeout: float = 10.0) -> protocol.Envelope:
        """Next envelope of one of the given types; others keep feeding
        the device screen and are dropped from the queue."""
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ServerUnreachable(f"timed out waiting for {types}")
            try:
                env = await asyncio.wait_for(self._incoming.get(), remaining)
            except asyncio.TimeoutError:
                raise ServerUnreachable(f"timed out waiting for {types}") from None
            if env is None:
                raise ServerUnreachable("connection closed by server")
            if env.type in types:
                return env
            if env.type == "ERROR":
                raise error_from_code(
                    env.payload.get("code", "INTERNAL"),
                    env.payload.get("message", "server reported an error"),
                )

    async def close(self) -> None:
        self._reader_task.cancel()
        try:
            self.writer.close()
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


def _resolve_action(label) -> Action:
    try:
        if isinstance(label, Action):
            return label
        if isinstance(label, str):
            return action_from_name(label)
        return action_from_id(label)
    except ValueError as exc:
        raise UnknownZone(str(exc)) from exc


async def move_to_zone(device: SimDevice, client: DeviceClient, label) -> Action:
    """Teleport onto a zone's center and wait for the server to agree."""
    action = _resolve_action(label)
    rect = device.layout.rect_for(action)
    cx, cy = rect.center
    device.pose = DevicePose(cx, cy, device.pose.heading_deg)
    previous = device.zone
    await client.send("POSITION_UPDATE", {"x_mm": cx, "y_mm": cy,
                                          "heading_deg": device.pose.heading_deg})
    if previous != action:
        env = await client.expect("ZONE_CHANGED")
        device.zone = Action(env.payload["action_id"]) if env.payload["action_id"] is not None else None
    return action


def clip_to_payload(clip: AudioClip) -> dict:
    return {
        "pcm_b64": base64.b64encode(pcm16_encode(clip.samples)).decode("ascii"),
        "sample_rate_hz": clip.sample_rate_hz,
    }


async def record_from(device: SimDevice, client: DeviceClient, source: SoundSource,
                      repeat: int = 1, amplitude: float | None = None) -> list[int]:
    """Capture and upload clips labeled with the device's current zone."""
    if device.zone is None:
        raise NoZoneSelected("device is not on any action zone")
    counts = []
    for _ in range(repeat):
        clip = source.render(amplitude=amplitude)
        device.clock.advance(1.0)  # capture takes real (simulated) time
        payload = clip_to_payload(clip)
        payload["action_id"] = int(device.zone)
        await client.send("RECORD_SAMPLE", payload)
        ack = await client.expect("RECORD_ACK")
        counts.append(ack.payload["count"])
    return counts


@dataclass
class LoopCycle:
    capture_start_s: float
    result: InferenceResult
    action_executed: Action
    round_trip_ms: float  # wall time, capture end -> action start


CAPTURE_PERIOD_S = 2.5
CAPTURE_DURATION_S = 1.0
LATENCY_BUDGET_S = 3.0


async def run_inference_loop(device: SimDevice, client: DeviceClient,
                             source: SoundSource, n_cycles: int) -> list[LoopCycle]:
    """Capture 1 s every 2.5 s (simulated), classify, act.

    Capture starts fall on exact multiples of the period. The recorded
    round trip is wall time from capture end to action start and must
    stay within LATENCY_BUDGET_S.
    """
    cycles: list[LoopCycle] = []
    loop_origin = device.clock.now_s
    for i in range(n_cycles):
        target = loop_origin + CAPTURE_PERIOD_S * i
        # max() absorbs a possible 1-ulp float overshoot of the schedule
        device.clock.advance(max(0.0, target - device.clock.now_s))
        capture_start = device.clock.now_s
        clip = source.render()
        device.clock.advance(CAPTURE_DURATION_S)
        wall_start = time.perf_counter()
        try:
            await client.send("INFER_REQUEST", clip_to_payload(clip))
            result_env = await client.expect("INFER_RESULT")
            command_env = await client.expect("ACTION_COMMAND")
        except ServerUnreachable as exc:
            raise ServerUnreachable(str(exc), partial=cycles) from None
        round_trip_ms = (time.perf_counter() - wall_start) * 1000.0
        action = Action(command_env.payload["action_id"])
        result = InferenceResult(
            probabilities={Action(int(k)): v for k, v in result_env.payload["probs"].items()},
            top=Action(result_env.payload["top_action_id"]),
            latency_ms=result_env.payload["latency_ms"],
        )
        apply_action(device, action)
        cycles.append(LoopCycle(
            capture_start_s=capture_start,
            result=result,
            action_executed=action,
            round_trip_ms=round_trip_ms,
        ))
    return cycles
