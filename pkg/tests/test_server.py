"""Server behavior over live TCP and WebSocket connections."""

import asyncio
import json
import random
import struct

from soundmat.protocol import decode_body, encode, Envelope
from soundmat.websocket import WebSocketStream, client_handshake

from generators import malformed_frames
from server_helpers import (
    RawClient,
    noise_payload,
    sine_payload,
    start_server,
    train_two_classes,
)


def test_hello_state_sync():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port, hello=True, drain_sync=False)
            sync = await client.drain_hello_sync()
            assert sync[0].payload["mode"] == "training"
            assert sync[1].payload["action_id"] is None
            assert [env.payload["action_id"] for env in sync[2:]] == [0, 1, 2, 3, 4, 5]
            assert all(env.payload["count"] == 0 for env in sync[2:])
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_record_sample_acks_count():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await client.send("RECORD_SAMPLE", noise_payload(action_id=0))
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload == {"action_id": 0, "count": 1}
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_train_with_one_class_reports_error_status():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await client.send("RECORD_SAMPLE", noise_payload(action_id=3))
            await client.recv_until("RECORD_ACK")
            await client.send("TRAIN_REQUEST", {})
            started = await client.recv_until("TRAIN_STATUS")
            assert started.payload["state"] == "started"
            error = await client.recv_until("TRAIN_STATUS")
            assert error.payload["state"] == "error"
            assert "INSUFFICIENT_CLASSES" in error.payload["error_msg"]
            # the session is still usable for recording
            await client.send("RECORD_SAMPLE", noise_payload(seed=5, action_id=3))
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload["count"] == 2
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_full_scripted_session_infers_expected_class():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await train_two_classes(client)
            await client.send("INFER_REQUEST", sine_payload(amplitude=0.45))
            result = await client.recv_until("INFER_RESULT")
            command = await client.recv_until("ACTION_COMMAND")
            assert result.payload["top_action_id"] == 1  # the sine class
            assert command.payload["action_id"] == 1
            assert abs(sum(result.payload["probs"].values()) - 1.0) <= 1e-6
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_zone_changed_is_edge_triggered():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            # center of shake's zone on the canonical mat
            await client.send("POSITION_UPDATE", {"x_mm": 73.3, "y_mm": 76.75, "heading_deg": 0})
            env = await client.recv()
            assert env.type == "ZONE_CHANGED" and env.payload["action_id"] == 0
            # same zone again: no ZONE_CHANGED; next reply is the record ack
            await client.send("POSITION_UPDATE", {"x_mm": 80.0, "y_mm": 80.0, "heading_deg": 0})
            await client.send("RECORD_SAMPLE", noise_payload(action_id=0))
            env = await client.recv()
            assert env.type == "RECORD_ACK"
            # gutter: the zone becomes null
            await client.send("POSITION_UPDATE", {"x_mm": 5.0, "y_mm": 5.0, "heading_deg": 0})
            env = await client.recv()
            assert env.type == "ZONE_CHANGED" and env.payload["action_id"] is None
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_hello_required_before_other_messages():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port, hello=False)
            await client.send("RECORD_SAMPLE", noise_payload(action_id=0))
            env = await client.recv()
            assert env.type == "ERROR" and env.payload["code"] == "HELLO_REQUIRED"
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_seq_must_strictly_increase():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await client.send("RECORD_SAMPLE", noise_payload(action_id=0), seq=5)
            await client.recv_until("RECORD_ACK")
            await client.send("RECORD_SAMPLE", noise_payload(seed=1, action_id=0), seq=5)
            env = await client.recv()
            assert env.type == "ERROR" and env.payload["code"] == "SEQ_ORDER"
            await client.send("RECORD_SAMPLE", noise_payload(seed=2, action_id=0), seq=6)
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload["count"] == 2  # the duplicate-seq message never landed
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_malformed_frames_get_errors_and_leave_state_intact():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await client.send("RECORD_SAMPLE", noise_payload(action_id=2))
            await client.recv_until("RECORD_ACK")
            rand = random.Random(7)
            for frame in malformed_frames(rand, 30):
                await client.send_raw(frame)
                env = await client.recv()
                assert env.type == "ERROR"
            # still alive, same session state
            await client.send("RECORD_SAMPLE", noise_payload(seed=9, action_id=2))
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload == {"action_id": 2, "count": 2}
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_oversized_header_closes_connection_but_not_server():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            await client.send_raw(struct.pack(">I", 64 * 1024 * 1024))
            env = await client.recv()
            assert env.type == "ERROR" and env.payload["code"] == "FRAME_TOO_LARGE"
            await client.close()
            fresh = await RawClient.connect(port)
            await fresh.send("RECORD_SAMPLE", noise_payload(action_id=4))
            ack = await fresh.recv_until("RECORD_ACK")
            assert ack.payload["count"] == 1
            await fresh.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_error_reply_never_changes_state():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            done = await train_two_classes(client)
            assert done.payload["classes"] == [0, 1]
            # recording while in inference is rejected
            await client.send("RECORD_SAMPLE", noise_payload(seed=30, action_id=0))
            env = await client.recv()
            assert env.type == "ERROR" and env.payload["code"] == "NOT_IN_TRAINING_MODE"
            # back to training: counts are exactly as before the error
            await client.send("MODE_BUTTON", {})
            mode = await client.recv_until("MODE_CHANGED")
            assert mode.payload["mode"] == "training"
            await client.send("RECORD_SAMPLE", noise_payload(seed=31, action_id=0))
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload["count"] == 5  # 4 from training, +1 now
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_replies_preserve_request_order():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            for i in range(6):
                await client.send("RECORD_SAMPLE", noise_payload(seed=i, action_id=5))
            counts = []
            for _ in range(6):
                ack = await client.recv_until("RECORD_ACK")
                counts.append(ack.payload["count"])
            assert counts == [1, 2, 3, 4, 5, 6]
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_broadcasts_reach_all_attachments():
    async def run():
        server, port, _ = await start_server()
        try:
            device = await RawClient.connect(port, session_id="shared", kind="device")
            ui = await RawClient.connect(port, session_id="shared", kind="ui")
            await device.send("RECORD_SAMPLE", noise_payload(action_id=1))
            ack_device = await device.recv_until("RECORD_ACK")
            ack_ui = await ui.recv_until("RECORD_ACK")
            assert ack_device.payload == ack_ui.payload == {"action_id": 1, "count": 1}
            await device.close()
            await ui.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_sessions_are_independent():
    async def run():
        server, port, _ = await start_server()
        try:
            a = await RawClient.connect(port, session_id="a")
            b = await RawClient.connect(port, session_id="b")
            await a.send("RECORD_SAMPLE", noise_payload(action_id=0))
            await a.recv_until("RECORD_ACK")
            await b.send("DELETE_LAST", {})
            env = await b.recv()
            assert env.type == "ERROR" and env.payload["code"] == "NOTHING_TO_DELETE"
            await a.close()
            await b.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_session_id_must_match_hello():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port, session_id="s1")
            client.session_id = "other"
            await client.send("DELETE_LAST", {})
            env = await client.recv()
            assert env.type == "ERROR" and env.payload["code"] == "SESSION_MISMATCH"
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_delete_and_reset_sync_counts():
    async def run():
        server, port, _ = await start_server()
        try:
            client = await RawClient.connect(port)
            for i in range(2):
                await client.send("RECORD_SAMPLE", noise_payload(seed=i, action_id=3))
                await client.recv_until("RECORD_ACK")
            await client.send("DELETE_LAST", {})
            ack = await client.recv_until("RECORD_ACK")
            assert ack.payload == {"action_id": 3, "count": 1}
            await client.send("RESET_ALL", {})
            acks = [await client.recv_until("RECORD_ACK") for _ in range(6)]
            assert [a.payload["action_id"] for a in acks] == [0, 1, 2, 3, 4, 5]
            assert all(a.payload["count"] == 0 for a in acks)
            await client.close()
        finally:
            await server.stop()

    asyncio.run(run())


def test_websocket_endpoint_speaks_same_protocol():
    async def run():
        server, _, ws_port = await start_server()
        try:
            reader, writer = await asyncio.open_connection("127.0.0.1", ws_port)
            await client_handshake(reader, writer, f"127.0.0.1:{ws_port}", "/?session_id=wstest")
            ws = WebSocketStream(reader, writer, mask_outgoing=True)
            hello = Envelope(type="HELLO", session_id="wstest", seq=1,
                             payload={"client_kind": "ui", "protocol_version": 1})
            await ws.send_text(json.dumps({
                "type": hello.type, "session_id": hello.session_id,
                "seq": hello.seq, "payload": hello.payload,
            }))
            sync = [decode_body(await ws.recv_text()) for _ in range(8)]
            assert sync[0].type == "MODE_CHANGED"
            record = Envelope(type="RECORD_SAMPLE", session_id="wstest", seq=2,
                              payload=noise_payload(action_id=0))
            await ws.send_text(encode(record)[4:].decode("utf-8"))
            ack = decode_body(await ws.recv_text())
            assert ack.type == "RECORD_ACK" and ack.payload == {"action_id": 0, "count": 1}
            await ws.close()
        finally:
            await server.stop()

    asyncio.run(run())
