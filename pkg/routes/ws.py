import asyncio
import json
import logging

from fastapi import APIRouter, WebSocket, WebSocketDisconnect
from websockets.exceptions import ConnectionClosedError, ConnectionClosedOK

from services.errors import DomainError, EngineError
from services.sweep import SweepSpec, iter_sweep, json_safe, spec_from_params

logger = logging.getLogger(__name__)

router = APIRouter()

RECEIVE_TIMEOUT = 90.0


async def _send(websocket: WebSocket, payload: dict):
    await websocket.send_text(json.dumps(json_safe(payload)))


async def stream_sweep(websocket: WebSocket, spec: SweepSpec) -> int:
    """
    Sends one row message per swept value, in order, then a done message.
    Each row is computed in the default executor so the event loop stays free.

    Returns:
        int: Number of rows sent
    """
    loop = asyncio.get_running_loop()
    rows = iter_sweep(spec)
    sent = 0
    while True:
        try:
            row = await loop.run_in_executor(None, next, rows, None)
        except EngineError as e:
            logger.warning("Sweep %s stopped after %d rows: %s", spec.variable, sent, e)
            await _send(websocket, {"type": "error", "message": str(e)})
            return sent
        if row is None:
            break
        await _send(websocket, {"type": "row", **row.to_dict(spec.variable)})
        sent += 1
    await _send(websocket, {"type": "done", "rows": sent})
    logger.info("Streamed sweep %s: %d rows", spec.variable, sent)
    return sent


@router.websocket("/ws/sweep")
async def sweep_endpoint(websocket: WebSocket):
    """
    WebSocket endpoint streaming sweep rows as they are computed.
    Clients send {"sweep": {...}} with the same parameters as /api/sweep.
    """
    await websocket.accept()
    logger.info("Sweep client connected")

    try:
        while True:
            try:
                msg = await asyncio.wait_for(websocket.receive_text(), timeout=RECEIVE_TIMEOUT)
            except asyncio.TimeoutError:
                # idle client, check it is still there
                await _send(websocket, {"type": "ping"})
                continue

            try:
                data = json.loads(msg)
            except json.JSONDecodeError as e:
                logger.warning("Invalid JSON from client: %s", e)
                await _send(websocket, {"type": "error", "message": "Invalid JSON format"})
                continue

            if not isinstance(data, dict):
                await _send(websocket, {"type": "error", "message": "Expected a JSON object"})
                continue

            if "pong" in data:
                logger.debug("Received pong from client")
                continue

            params = data.get("sweep")
            if not isinstance(params, dict):
                await _send(websocket, {"type": "error", "message": "Missing sweep parameters"})
                continue

            try:
                spec = spec_from_params(params)
            except DomainError as e:
                logger.warning("Rejected sweep request: %s", e)
                await _send(websocket, {"type": "error", "message": str(e)})
                continue

            await stream_sweep(websocket, spec)

    except WebSocketDisconnect:
        logger.info("Sweep client disconnected")
    except (ConnectionClosedOK, ConnectionClosedError) as e:
        logger.info("Connection closed: %s", e)
    except Exception as e:
        logger.error("WebSocket handler error: %s", e, exc_info=True)
