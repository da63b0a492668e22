"""Frame-streaming service: one WebSocket per session, latest-input-wins.

Control messages are JSON text frames; rendered frames are binary frames:

    u32 frame_id | u8 eye_count | u16 width | u16 height | u8 encoding
    then per eye: u32 payload_length | payload bytes

with encoding 0 = raw RGB8 rows top-down, 1 = PNG. All integers are
little-endian. Every frame is followed by a ``{"type":"stats", ...}`` text
message carrying the timing breakdown and the gaze actually used.

Handshake: the server greets with its protocol version and config; the
client's first message must be ``{"type":"hello","protocol":N}``. A
version mismatch is rejected before any frame is sent. Pose messages
update a one-slot mailbox: while a frame renders, newer poses overwrite
older ones, which are dropped, never queued.
"""

from __future__ import annotations

import asyncio
import io
import json
import logging
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .compositor import DisplayFrame
from .engine import Engine, SessionState
from .foveation import StereoRig

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
ENCODING_RAW = 0
ENCODING_PNG = 1


def quat_to_rotation(w: float, x: float, y: float, z: float) -> np.ndarray:
    n = np.sqrt(w * w + x * x + y * y + z * z)
    if n == 0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.asarray(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def gaze_uv_to_direction(u: float, v: float, display) -> np.ndarray:
    """Display coordinates in [0,1]^2 to a head-frame gaze direction."""
    cam = display.camera(np.zeros(3), np.eye(3))
    dx = (2.0 * u - 1.0) * cam.tan_half_x
    dy = (1.0 - 2.0 * v) * cam.tan_half_y
    d = np.asarray([dx, dy, 1.0])
    return d / np.linalg.norm(d)


def rig_from_pose_message(msg: dict, engine: Engine) -> StereoRig:
    pos = np.asarray(msg["pos"], dtype=np.float64)
    rot = quat_to_rotation(*msg["quat"])
    u, v = msg.get("gaze", (0.5, 0.5))
    gaze = gaze_uv_to_direction(float(u), float(v), engine.display)
    ipd = engine.config.ipd_m if msg.get("stereo", True) else 0.0
    return StereoRig(position=pos, rotation=rot, ipd=ipd, gaze_dir=gaze)


def encode_frame_message(
    frame_id: int, frame: DisplayFrame, encoding: int = ENCODING_PNG
) -> bytes:
    eyes = [frame.left, frame.right]
    h, w = frame.left.shape[:2]
    buf = io.BytesIO()
    buf.write(struct.pack("<IBHHB", frame_id, len(eyes), w, h, encoding))
    for img in eyes:
        u8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        if encoding == ENCODING_RAW:
            payload = u8.tobytes()
        else:
            from PIL import Image

            out = io.BytesIO()
            Image.fromarray(u8, mode="RGB").save(out, format="PNG")
            payload = out.getvalue()
        buf.write(struct.pack("<I", len(payload)))
        buf.write(payload)
    return buf.getvalue()


def config_message(engine: Engine) -> dict:
    return {
        "type": "config",
        "protocol": PROTOCOL_VERSION,
        "display": {
            "width": engine.display.width,
            "height": engine.display.height,
            "fov_deg": engine.display.fov_deg,
        },
        "mode": engine.config.mode,
        "layers": {
            tag: {"fov_deg": spec.fov_deg, "width": spec.width,
                  "height": spec.height}
            for tag, spec in engine.layers.items()
        },
        "budget_ms": engine.config.budget_ms,
    }


@dataclass
class Session:
    state: SessionState = dc_field(default_factory=SessionState)
    wake: asyncio.Event = dc_field(default_factory=asyncio.Event)
    poses_received: int = 0
    poses_dropped: int = 0
    frames_sent: int = 0


async def _render_loop(ws, engine: Engine, session: Session, encoding: int) -> None:
    loop = asyncio.get_running_loop()
    while True:
        await session.wake.wait()
        session.wake.clear()
        rig = session.state.take()
        if rig is None:
            continue
        frame = await loop.run_in_executor(None, engine.render_frame, rig)
        session.frames_sent += 1
        frame_id = session.frames_sent
        await ws.send(encode_frame_message(frame_id, frame, encoding))
        t = frame.timings_ms
        await ws.send(json.dumps({
            "type": "stats",
            "frame_id": frame_id,
            "fovea_per_eye_ms": t.get("fovea_per_eye", 0.0),
            "periphery_per_eye_ms": t.get("periphery_per_eye", 0.0),
            "blend_contrast_ms": t.get("blend_contrast", 0.0),
            "total_ms": t.get("total", 0.0),
            "mode": t.get("mode", engine.config.mode),
            "gaze_px": list(frame.gaze_px),
            "poses_received": session.poses_received,
            "poses_dropped": session.poses_dropped,
        }))


async def _handle_session(ws, engine: Engine, encoding: int) -> None:
    await ws.send(json.dumps({"type": "hello", "protocol": PROTOCOL_VERSION,
                              "config": config_message(engine)}))
    try:
        first = await ws.recv()
    except Exception:
        return
    try:
        hello = json.loads(first)
        assert hello.get("type") == "hello"
    except Exception:
        await ws.send(json.dumps({"type": "error", "code": "bad_handshake",
                                  "detail": "first message must be a hello"}))
        await ws.close(code=1002)
        return
    if hello.get("protocol") != PROTOCOL_VERSION:
        await ws.send(json.dumps({
            "type": "error", "code": "version",
            "detail": f"server speaks protocol {PROTOCOL_VERSION}",
        }))
        await ws.close(code=1002)
        return

    session = Session()
    renderer = asyncio.create_task(_render_loop(ws, engine, session, encoding))
    try:
        async for raw in ws:
            if isinstance(raw, bytes):
                await ws.send(json.dumps({"type": "error", "code": "bad_message",
                                          "detail": "binary input not accepted"}))
                continue
            try:
                msg = json.loads(raw)
                kind = msg["type"]
            except Exception:
                await ws.send(json.dumps({"type": "error", "code": "bad_message",
                                          "detail": "not a JSON control message"}))
                continue
            if kind == "pose":
                try:
                    rig = rig_from_pose_message(msg, engine)
                except Exception as exc:
                    await ws.send(json.dumps({"type": "error", "code": "bad_pose",
                                              "detail": str(exc)}))
                    continue
                session.poses_received += 1
                had_pending = session.state.latest_rig is not None
                accepted = session.state.offer(rig, float(msg.get("t_ms", 0.0)))
                if had_pending or not accepted:
                    session.poses_dropped += 1
                session.wake.set()
            elif kind == "config":
                await ws.send(json.dumps(config_message(engine)))
            else:
                await ws.send(json.dumps({"type": "error", "code": "bad_message",
                                          "detail": f"unknown type {kind!r}"}))
    finally:
        renderer.cancel()


async def serve_async(engine: Engine, host: str = "127.0.0.1", port: int = 8765,
                      encoding: int = ENCODING_PNG, ready: asyncio.Event | None = None):
    import websockets

    async def handler(ws):
        log.info("session connected")
        try:
            await _handle_session(ws, engine, encoding)
        except Exception:
            log.exception("session ended with an error")
        finally:
            log.info("session closed")

    async with websockets.serve(handler, host, port, max_size=64 * 1024 * 1024):
        log.info("serving on ws://%s:%d", host, port)
        if ready is not None:
            ready.set()
        await asyncio.Future()


def serve(engine: Engine, host: str = "127.0.0.1", port: int = 8765,
          encoding: str = "png") -> None:
    enc = ENCODING_PNG if encoding == "png" else ENCODING_RAW
    asyncio.run(serve_async(engine, host, port, enc))
