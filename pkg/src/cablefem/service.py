"""Websocket steering service: live state out, cable/insertion commands in.

The engine loop runs in its own thread as the single writer of simulation
state; each frame it drains the bounded input queue (commands latch at frame
boundaries, never mid-frame) and publishes an immutable JSON snapshot. Client
sessions each run a sender task that pushes the newest snapshot, skipping
frames for slow consumers so the engine is never delayed, capped at 60 Hz.

Endpoints: /sim (bidirectional stream), /health (liveness), /scenario
(read-only config). All messages carry a schema version field "v": 1.
"""

import asyncio
import http
import json
import mimetypes
import queue
import threading
import time
from pathlib import Path

import numpy as np
from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.http11 import Response

from .engine import contact_node

PROTOCOL_VERSION = 1
BROADCAST_CAP_HZ = 60.0
INPUT_QUEUE_SIZE = 64

DEFAULT_MAX_TENSION = 5.0  # N
DEFAULT_MAX_INSERTION_RATE = 0.02  # m/s


def state_message(scenario_time, frame_index, record):
    positions = record.coords.reshape(-1, 6)[:, :3]
    contacts = [
        {
            "position": positions[contact_node(c)].tolist(),
            "normal": c.normal.tolist(),
            "force_N": float(np.linalg.norm(f)),
        }
        for c, f in zip(record.contact_points, record.contact_force_vectors)
    ]
    return {
        "v": PROTOCOL_VERSION,
        "type": "state",
        "t": scenario_time,
        "frame_index": frame_index,
        "node_positions": positions.tolist(),
        "contacts": contacts,
        "n_c": record.n_c,
        "tip": record.tip_position.tolist(),
        "frame_ms": record.total_ms,
    }


def error_message(reason):
    return {"v": PROTOCOL_VERSION, "type": "error", "reason": reason}


class SteeringService:
    """Bridges one engine loop to any number of websocket clients."""

    def __init__(self, scenario, host="127.0.0.1", port=8700,
                 max_tension=DEFAULT_MAX_TENSION,
                 max_insertion_rate=DEFAULT_MAX_INSERTION_RATE,
                 realtime=True, ui_dir=None):
        self.scenario = scenario
        self.host = host
        self.port = port
        self.max_tension = max_tension
        self.max_insertion_rate = max_insertion_rate
        self.realtime = realtime  # False: step as fast as possible (tests)
        self.ui_dir = Path(ui_dir) if ui_dir is not None else None

        self._engine = scenario.build_engine()
        self._x = self._engine.initial_configuration()
        self._inputs = queue.Queue(maxsize=INPUT_QUEUE_SIZE)
        self._tension_overrides = {}
        self._insertion_override = None
        self._paused = False
        self._t = 0.0
        self._frame_index = 0
        self._stop = threading.Event()

        self._loop = None
        self._server = None
        self._thread = None
        self._latest = None
        self._frame_seq = 0
        self._cond = None  # asyncio.Condition bound to the server loop

    # ------------------------------------------------------------------
    # engine thread
    # ------------------------------------------------------------------

    def _drain_inputs(self):
        while True:
            try:
                msg = self._inputs.get_nowait()
            except queue.Empty:
                return
            kind = msg["type"]
            if kind == "tension":
                self._tension_overrides[int(msg["cable"])] = float(msg["newtons"])
            elif kind == "insertion_rate":
                self._insertion_override = float(msg["m_per_s"])
            elif kind == "pause":
                self._paused = True
            elif kind == "resume":
                self._paused = False
            elif kind == "reset":
                self._x = self._engine.initial_configuration()
                self._t = 0.0
                self._frame_index = 0
                self._tension_overrides.clear()
                self._insertion_override = None
                self._engine._warm_multipliers = {}

    def _frame_inputs(self):
        inputs = self.scenario.inputs_at(self._t)
        tensions = inputs.tensions.copy()
        for cable, value in self._tension_overrides.items():
            tensions[cable - 1] = value
        increment = inputs.insertion_increment
        if self._insertion_override is not None:
            increment = self._insertion_override * self.scenario.frame_period
        inputs.tensions = tensions
        inputs.insertion_increment = increment
        return inputs

    def _engine_loop(self):
        period = self.scenario.frame_period
        next_deadline = time.monotonic()
        # publish the initial state so joining clients see something at t=0
        from .engine import _initial_record

        self._publish_threadsafe(state_message(
            self._t, self._frame_index, _initial_record(self._engine, self._x)))
        while not self._stop.is_set():
            self._drain_inputs()
            if not self._paused:
                self._t += period
                self._frame_index += 1
                self._x, record = self._engine.step(
                    self._x, self._frame_inputs(), t=self._t,
                    frame_index=self._frame_index)
                self._publish_threadsafe(
                    state_message(self._t, self._frame_index, record))
            if self.realtime:
                # monotonic schedule: late wakeups are amortized by running
                # the next frames back to back, so the mean rate holds
                next_deadline += period
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    self._stop.wait(delay)
                elif delay < -5.0:
                    next_deadline = time.monotonic()  # give up after a very long stall
            elif self._paused:
                self._stop.wait(0.005)

    def _publish_threadsafe(self, snapshot):
        if self._loop is None:
            return
        self._loop.call_soon_threadsafe(self._publish, snapshot)

    def _publish(self, snapshot):
        self._latest = snapshot
        self._frame_seq += 1

        async def notify():
            async with self._cond:
                self._cond.notify_all()

        asyncio.ensure_future(notify())

    # ------------------------------------------------------------------
    # websocket side
    # ------------------------------------------------------------------

    def _validate(self, msg):
        if not isinstance(msg, dict) or "type" not in msg:
            return "malformed_message"
        kind = msg["type"]
        if kind == "tension":
            try:
                cable = int(msg["cable"])
                newtons = float(msg["newtons"])
            except (KeyError, TypeError, ValueError):
                return "malformed_message"
            if cable not in (1, 2, 3):
                return "unknown_cable"
            if not 0.0 <= newtons <= self.max_tension:
                return "tension_out_of_bounds"
            return None
        if kind == "insertion_rate":
            try:
                rate = float(msg["m_per_s"])
            except (KeyError, TypeError, ValueError):
                return "malformed_message"
            if abs(rate) > self.max_insertion_rate:
                return "insertion_rate_out_of_bounds"
            return None
        if kind in ("pause", "resume", "reset"):
            return None
        return "unknown_message_type"

    async def _handle_client(self, websocket):
        if self._latest is not None:
            await websocket.send(json.dumps(self._latest))
        sender = asyncio.create_task(self._send_frames(websocket))
        try:
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send(json.dumps(error_message("invalid_json")))
                    continue
                reason = self._validate(msg)
                if reason is not None:
                    await websocket.send(json.dumps(error_message(reason)))
                    continue
                try:
                    self._inputs.put_nowait(msg)
                except queue.Full:
                    await websocket.send(json.dumps(error_message("input_queue_full")))
        finally:
            sender.cancel()

    async def _send_frames(self, websocket):
        # token bucket at the broadcast cap: steady streams are never
        # throttled, scheduler-stall bursts up to the bucket capacity drain
        # without coalescing, and only a producer genuinely above the cap
        # loses frames (latest-state wins)
        burst = 6.0
        last_sent = self._frame_seq
        tokens = 1.0
        refilled = time.monotonic()
        while True:
            async with self._cond:
                await self._cond.wait_for(lambda: self._frame_seq > last_sent)
                snapshot = self._latest
                last_sent = self._frame_seq
            now = time.monotonic()
            tokens = min(burst, tokens + (now - refilled) * BROADCAST_CAP_HZ)
            refilled = now
            if tokens < 1.0:
                await asyncio.sleep((1.0 - tokens) / BROADCAST_CAP_HZ)
                now = time.monotonic()
                tokens = min(burst, tokens + (now - refilled) * BROADCAST_CAP_HZ)
                refilled = now
                async with self._cond:
                    snapshot = self._latest
                    last_sent = self._frame_seq
            tokens -= 1.0
            await websocket.send(json.dumps(snapshot))

    def _process_request(self, connection, request):
        path = request.path.split("?")[0]
        if path == "/health":
            return connection.respond(http.HTTPStatus.OK, '{"ok": true}\n')
        if path == "/scenario":
            return connection.respond(http.HTTPStatus.OK,
                                      json.dumps(self.scenario.raw) + "\n")
        if path == "/mesh":
            mesh = self._engine.mesh
            if mesh is None:
                payload = {"vertices": [], "triangles": []}
            else:
                payload = {"vertices": mesh.vertices.tolist(),
                           "triangles": mesh.triangles.tolist()}
            return connection.respond(http.HTTPStatus.OK, json.dumps(payload) + "\n")
        if path == "/sim":
            return None
        if self.ui_dir is not None:
            return self._serve_static(path)
        return connection.respond(http.HTTPStatus.NOT_FOUND,
                                  "unknown endpoint; use /sim, /health, /scenario, /mesh\n")

    def _serve_static(self, path):
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            return Response(http.HTTPStatus.NOT_FOUND, "Not Found",
                            Headers({"Content-Type": "text/plain"}), b"not found\n")
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        return Response(http.HTTPStatus.OK, "OK",
                        Headers({"Content-Type": ctype,
                                 "Content-Length": str(len(body))}), body)

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    async def start(self):
        """Bind the server and start the engine thread; returns when listening."""
        self._loop = asyncio.get_running_loop()
        self._cond = asyncio.Condition()
        try:
            self._server = await serve(
                self._handle_client, self.host, self.port,
                process_request=self._process_request)
        except OSError as exc:
            raise RuntimeError(
                f"cannot bind steering service to {self.host}:{self.port}: {exc}"
            ) from exc
        self.port = self._server.sockets[0].getsockname()[1]
        self._thread = threading.Thread(target=self._engine_loop,
                                        name="cablefem-engine", daemon=True)
        self._thread.start()

    async def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def serve_forever(self):
        await self.start()
        try:
            await asyncio.Future()
        finally:
            await self.stop()


def run_service(scenario, host="127.0.0.1", port=8700, **kwargs):
    """Blocking entry point used by the CLI `serve` subcommand."""
    service = SteeringService(scenario, host=host, port=port, **kwargs)
    try:
        asyncio.run(service.serve_forever())
    except KeyboardInterrupt:
        pass
