"""Minimal RFC 6455 WebSocket support over asyncio streams.

Just enough for one-envelope-per-text-frame traffic with browsers:
HTTP/1.1 upgrade handshake, text/binary frames with continuation,
ping/pong, and clean closes. No extensions, no compression, no TLS.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import os
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WebSocketClosed(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


async def _read_http_head(reader: asyncio.StreamReader) -> tuple[str, dict[str, str]]:
    raw = await reader.readuntil(b"\r\n\r\n")
    lines = raw.decode("latin-1").split("\r\n")
    request_line = lines[0]
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if ":" in line:
            name, _, value = line.partition(":")
            headers[name.strip().lower()] = value.strip()
    return request_line, headers


async def server_handshake(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> str:
    """Complete the upgrade; returns the request target (path + query)."""
    request_line, headers = await _read_http_head(reader)
    parts = request_line.split(" ")
    target = parts[1] if len(parts) >= 2 else "/"
    key = headers.get("sec-websocket-key")
    if headers.get("upgrade", "").lower() != "websocket" or key is None:
        writer.write(b"HTTP/1.1 400 Bad Request\r\nConnection: close\r\n\r\n")
        await writer.drain()
        raise WebSocketClosed("not a websocket upgrade request")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    writer.write(response.encode("ascii"))
    await writer.drain()
    return target


async def client_handshake(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter, host: str, target: str = "/"
) -> None:
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {target} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n"
        "\r\n"
    )
    writer.write(request.encode("ascii"))
    await writer.drain()
    status_line, headers = await _read_http_head(reader)
    if " 101 " not in f" {status_line} " and not status_line.startswith("HTTP/1.1 101"):
        raise WebSocketClosed(f"handshake rejected: {status_line}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WebSocketClosed("bad Sec-WebSocket-Accept")


def encode_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    header = bytearray([0x80 | opcode])
    length = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if length < 126:
        header.append(mask_bit | length)
    elif length < (1 << 16):
        header.append(mask_bit | 126)
        header += struct.pack(">H", length)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", length)
    if mask:
        key = os.urandom(4)
        header += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(header) + payload


async def _read_raw_frame(reader: asyncio.StreamReader) -> tuple[bool, int, bytes]:
    try:
        first = await reader.readexactly(2)
    except (asyncio.IncompleteReadError, ConnectionError):
        raise WebSocketClosed("connection dropped")
    fin = bool(first[0] & 0x80)
    opcode = first[0] & 0x0F
    masked = bool(first[1] & 0x80)
    length = first[1] & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", await reader.readexactly(2))
    elif length == 127:
        (length,) = struct.unpack(">Q", await reader.readexactly(8))
    mask_key = await reader.readexactly(4) if masked else None
    payload = await reader.readexactly(length) if length else b""
    if mask_key:
        payload = bytes(b ^ mask_key[i % 4] for i, b in enumerate(payload))
    return fin, opcode, payload


class WebSocketStream:
    """Message-level wrapper; set ``mask_outgoing`` on the client side."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter, mask_outgoing: bool) -> None:
        self.reader = reader
        self.writer = writer
        self.mask_outgoing = mask_outgoing
        self._closed = False

    async def send_text(self, text: str) -> None:
        self.writer.write(encode_frame(OP_TEXT, text.encode("utf-8"), self.mask_outgoing))
        await self.writer.drain()

    async def recv_message(self) -> tuple[int, bytes]:
        """Next complete text/binary message as (opcode, payload)."""
        buffered = b""
        buffered_opcode: int | None = None
        while True:
            fin, opcode, payload = await _read_raw_frame(self.reader)
            if opcode == OP_PING:
                self.writer.write(encode_frame(OP_PONG, payload, self.mask_outgoing))
                await self.writer.drain()
                continue
            if opcode == OP_PONG:
                continue
            if opcode == OP_CLOSE:
                await self.close()
                raise WebSocketClosed("peer sent close")
            if opcode in (OP_TEXT, OP_BINARY):
                if fin:
                    return opcode, payload
                buffered, buffered_opcode = payload, opcode
                continue
            if opcode == OP_CONT:
                if buffered_opcode is None:
                    raise WebSocketClosed("continuation without a start frame")
                buffered += payload
                if fin:
                    return buffered_opcode, buffered
                continue
            raise WebSocketClosed(f"unsupported opcode {opcode}")

    async def recv_text(self) -> str:
        opcode, payload = await self.recv_message()
        if opcode != OP_TEXT:
            raise WebSocketClosed("expected a text frame")
        return payload.decode("utf-8")

    async def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.writer.write(encode_frame(OP_CLOSE, b"", self.mask_outgoing))
            await self.writer.drain()
        except (ConnectionError, RuntimeError):
            pass
        self.writer.close()
