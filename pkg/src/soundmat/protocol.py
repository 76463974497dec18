"""Wire protocol: envelopes and the length-prefixed JSON frame codec.

A frame is a 4-byte big-endian length prefix followed by a UTF-8 JSON
body (canonical form: sorted keys, no whitespace), so re-encoding a
decoded envelope reproduces the original bytes. The same JSON bodies
travel one-per-text-frame over the WebSocket endpoint.

Message catalog (payload fields in schemas/protocol.schema.json):

    HELLO            client_kind (device|ui), protocol_version
    POSITION_UPDATE  x_mm, y_mm, heading_deg
    ZONE_CHANGED     action_id | null
    RECORD_SAMPLE    action_id, pcm_b64, sample_rate_hz
    RECORD_ACK       action_id, count
    DELETE_LAST      (empty)
    RESET_ALL        (empty)
    TRAIN_REQUEST    (empty)
    TRAIN_STATUS     state (started|done|error), duration_ms, classes, error_msg?
    INFER_REQUEST    pcm_b64, sample_rate_hz
    INFER_RESULT     probs (action id string -> probability), top_action_id, latency_ms
    ACTION_COMMAND   action_id
    MODE_BUTTON      (empty)
    MODE_CHANGED     mode (training|training_in_progress|inference)
    ERROR            code, message

``pcm_b64`` carries little-endian signed 16-bit mono PCM, base64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from numbers import Real

from .errors import FrameTooLarge, MalformedJson, UnknownType

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 4 * 1024 * 1024
HEADER_BYTES = 4

_VALID_ACTION_IDS = frozenset(range(6))
_TRAIN_STATES = frozenset({"started", "done", "error"})
_MODES = frozenset({"training", "training_in_progress", "inference"})
_CLIENT_KINDS = frozenset({"device", "ui"})


@dataclass(frozen=True)
class Envelope:
    type: str
    session_id: str
    seq: int
    payload: dict


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, Real) and not isinstance(v, bool)


def _is_action_id(v) -> bool:
    return _is_int(v) and v in _VALID_ACTION_IDS


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise MalformedJson(msg)


def _validate_payload(msg_type: str, p: dict) -> None:
    if msg_type == "HELLO":
        _check(p.get("client_kind") in _CLIENT_KINDS, "HELLO.client_kind must be device|ui")
        _check(_is_int(p.get("protocol_version")) and p["protocol_version"] >= 1,
               "HELLO.protocol_version must be a positive integer")
    elif msg_type == "POSITION_UPDATE":
        for key in ("x_mm", "y_mm", "heading_deg"):
            _check(_is_num(p.get(key)), f"POSITION_UPDATE.{key} must be a number")
    elif msg_type == "ZONE_CHANGED":
        _check("action_id" in p, "ZONE_CHANGED.action_id missing")
        _check(p["action_id"] is None or _is_action_id(p["action_id"]),
               "ZONE_CHANGED.action_id must be an action id or null")
    elif msg_type == "RECORD_SAMPLE":
        _check(_is_action_id(p.get("action_id")), "RECORD_SAMPLE.action_id must be an action id")
        _check(isinstance(p.get("pcm_b64"), str), "RECORD_SAMPLE.pcm_b64 must be a string")
        _check(_is_int(p.get("sample_rate_hz")) and p["sample_rate_hz"] > 0,
               "RECORD_SAMPLE.sample_rate_hz must be a positive integer")
    elif msg_type == "RECORD_ACK":
        _check(_is_action_id(p.get("action_id")), "RECORD_ACK.action_id must be an action id")
        _check(_is_int(p.get("count")) and p["count"] >= 0, "RECORD_ACK.count must be >= 0")
    elif msg_type in ("DELETE_LAST", "RESET_ALL", "TRAIN_REQUEST", "MODE_BUTTON"):
        pass  # empty payloads
    elif msg_type == "TRAIN_STATUS":
        _check(p.get("state") in _TRAIN_STATES, "TRAIN_STATUS.state must be started|done|error")
        _check(_is_int(p.get("duration_ms")) and p["duration_ms"] >= 0,
               "TRAIN_STATUS.duration_ms must be >= 0")
        classes = p.get("classes")
        _check(isinstance(classes, list) and all(_is_action_id(c) for c in classes),
               "TRAIN_STATUS.classes must be a list of action ids")
        if "error_msg" in p:
            _check(isinstance(p["error_msg"], str), "TRAIN_STATUS.error_msg must be a string")
    elif msg_type == "INFER_REQUEST":
        _check(isinstance(p.get("pcm_b64"), str), "INFER_REQUEST.pcm_b64 must be a string")
        _check(_is_int(p.get("sample_rate_hz")) and p["sample_rate_hz"] > 0,
               "INFER_REQUEST.sample_rate_hz must be a positive integer")
    elif msg_type == "INFER_RESULT":
        probs = p.get("probs")
        _check(isinstance(probs, dict), "INFER_RESULT.probs must be an object")
        for key, value in probs.items():
            _check(isinstance(key, str) and key.isdigit() and int(key) in _VALID_ACTION_IDS,
                   "INFER_RESULT.probs keys must be action id strings")
            _check(_is_num(value) and 0.0 <= value <= 1.0,
                   "INFER_RESULT.probs values must be probabilities")
        _check(_is_action_id(p.get("top_action_id")), "INFER_RESULT.top_action_id must be an action id")
        _check(_is_int(p.get("latency_ms")) and p["latency_ms"] >= 0,
               "INFER_RESULT.latency_ms must be >= 0")
    elif msg_type == "ACTION_COMMAND":
        _check(_is_action_id(p.get("action_id")), "ACTION_COMMAND.action_id must be an action id")
    elif msg_type == "MODE_CHANGED":
        _check(p.get("mode") in _MODES, "MODE_CHANGED.mode must be a session mode")
    elif msg_type == "ERROR":
        _check(isinstance(p.get("code"), str), "ERROR.code must be a string")
        _check(isinstance(p.get("message"), str), "ERROR.message must be a string")


MESSAGE_TYPES = frozenset({
    "HELLO", "POSITION_UPDATE", "ZONE_CHANGED", "RECORD_SAMPLE", "RECORD_ACK",
    "DELETE_LAST", "RESET_ALL", "TRAIN_REQUEST", "TRAIN_STATUS",
    "INFER_REQUEST", "INFER_RESULT", "ACTION_COMMAND", "MODE_BUTTON",
    "MODE_CHANGED", "ERROR",
})


def encode_body(envelope: Envelope) -> bytes:
    """Canonical UTF-8 JSON body without the length prefix."""
    if envelope.type not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type: {envelope.type!r}")
    if not isinstance(envelope.session_id, str) or not isinstance(envelope.payload, dict):
        raise MalformedJson("envelope fields have wrong types")
    if not _is_int(envelope.seq) or envelope.seq < 0:
        raise MalformedJson("envelope seq must be a non-negative integer")
    _validate_payload(envelope.type, envelope.payload)
    body = {
        "type": envelope.type,
        "session_id": envelope.session_id,
        "seq": envelope.seq,
        "payload": envelope.payload,
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_body(data: bytes | str) -> Envelope:
    """Parse one JSON body into an Envelope, validating shape and payload."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedJson("body must be a JSON object")
    missing = {"type", "session_id", "seq", "payload"} - doc.keys()
    if missing:
        raise MalformedJson(f"body missing fields: {sorted(missing)}")
    msg_type = doc["type"]
    if not isinstance(msg_type, str):
        raise MalformedJson("type must be a string")
    if msg_type not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type: {msg_type!r}")
    if not isinstance(doc["session_id"], str):
        raise MalformedJson("session_id must be a string")
    if not _is_int(doc["seq"]) or doc["seq"] < 0:
        raise MalformedJson("seq must be a non-negative integer")
    if not isinstance(doc["payload"], dict):
        raise MalformedJson("payload must be an object")
    _validate_payload(msg_type, doc["payload"])
    return Envelope(
        type=msg_type,
        session_id=doc["session_id"],
        seq=doc["seq"],
        payload=doc["payload"],
    )


def encode(envelope: Envelope) -> bytes:
    """Envelope -> length-prefixed frame."""
    body = encode_body(envelope)
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame body of {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(body)) + body


def decode(frame: bytes) -> Envelope:
    """Length-prefixed frame -> Envelope. The frame must be complete."""
    if len(frame) < HEADER_BYTES:
        raise MalformedJson("frame shorter than its length header")
    (declared,) = struct.unpack(">I", frame[:HEADER_BYTES])
    if declared > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared body of {declared} bytes exceeds {MAX_FRAME_BYTES}")
    body = frame[HEADER_BYTES:]
    if len(body) != declared:
        raise MalformedJson(f"declared {declared} body bytes, got {len(body)}")
    return decode_body(body)
