"""Request/response plumbing for serving an environment to an mdpfuzz client.

The fuzzer drives out-of-process environments over newline-delimited JSON:
one request object per line, one response object per line, exactly one
request in flight per connection.  This module owns the wire handling so a
wrapper only has to supply three callables (sample / validate / rollout)
plus a static description of the state space, bundled in :class:`EnvAdapter`.

Wire schema (protocol version 1)::

    -> {"id": 7, "cmd": "spec"}
    <- {"id": 7, "name": "...", "state_dim": 1, "bounds": [[lo, hi], ...],
        "horizon_max": 100, "version": 1}

    -> {"id": 8, "cmd": "sample", "rng": 123}
    <- {"id": 8, "state": [...]}

    -> {"id": 9, "cmd": "validate", "state": [...]}
    <- {"id": 9, "valid": true}

    -> {"id": 10, "cmd": "rollout", "state": [...], "horizon": 60, "rng": 5}
    <- {"id": 10, "states": [[...], ...], "reward": -3.25,
        "crash": false, "crash_step": null}

Failures never tear the connection down: the faulty request gets
``{"id": ..., "error": "..."}`` and the loop keeps reading.  A line that
does not parse as a JSON object is answered with id ``null``, because there
is no trustworthy id to echo back.
"""

from __future__ import annotations

import io
import json
import math
import socketserver
import sys
from dataclasses import dataclass
from typing import Callable, IO, Iterable, Sequence

PROTOCOL_VERSION = 1


class AdapterError(ValueError):
    """A request that the adapter cannot satisfy (bad field, unknown command)."""


@dataclass(frozen=True)
class RolloutReply:
    """What a wrapper's rollout callable must hand back.

    ``states`` holds every state the episode visited, starting with the
    initial state, one row per step.  A crashing episode is truncated at the
    offending state and reports its index in ``crash_step``; a clean episode
    reports ``crash_step = None`` and exactly ``horizon`` states.
    """

    states: list[list[float]]
    cumulative_reward: float
    crashed: bool
    crash_step: int | None


@dataclass(frozen=True)
class EnvAdapter:
    """Bundles the environment callables the serve loop dispatches to.

    sample
        ``sample(rng_seed) -> sequence of float`` drawing one initial state.
    validate
        ``validate(state) -> bool`` deciding whether a state is an
        acceptable episode start.  Structural checks (length, finiteness)
        are done by the SDK before this is called.
    rollout
        ``rollout(state, horizon, rng_seed) -> RolloutReply`` running one
        full episode under the wrapped policy.
    """

    name: str
    state_dim: int
    bounds: list[list[float]]
    horizon_max: int
    sample: Callable[[int], Sequence[float]]
    validate: Callable[[Sequence[float]], bool]
    rollout: Callable[[Sequence[float], int, int], RolloutReply]

    def __post_init__(self) -> None:
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be >= 1, got {self.state_dim}")
        if self.horizon_max < 1:
            raise ValueError(f"horizon_max must be >= 1, got {self.horizon_max}")
        if len(self.bounds) != self.state_dim:
            raise ValueError(
                f"bounds has {len(self.bounds)} rows for state_dim {self.state_dim}"
            )
        for row in self.bounds:
            if len(row) != 2 or not float(row[0]) < float(row[1]):
                raise ValueError(f"each bounds row must be [lo, hi] with lo < hi, got {row!r}")

    def spec_payload(self) -> dict:
        return {
            "name": self.name,
            "state_dim": self.state_dim,
            "bounds": [[float(lo), float(hi)] for lo, hi in self.bounds],
            "horizon_max": self.horizon_max,
            "version": PROTOCOL_VERSION,
        }


def _require_int(request: dict, key: str) -> int:
    value = request.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise AdapterError(f"field {key!r} must be an integer, got {value!r}")
    return value


def _require_state(adapter: EnvAdapter, request: dict) -> list[float]:
    value = request.get("state")
    if not isinstance(value, list):
        raise AdapterError(f"field 'state' must be a list, got {value!r}")
    if len(value) != adapter.state_dim:
        raise AdapterError(
            f"state has {len(value)} entries, environment expects {adapter.state_dim}"
        )
    state = []
    for entry in value:
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            raise AdapterError(f"state entries must be numbers, got {entry!r}")
        number = float(entry)
        if not math.isfinite(number):
            raise AdapterError("state entries must be finite")
        state.append(number)
    return state


def _state_row(values: Iterable[float], dim: int, what: str) -> list[float]:
    row = [float(v) for v in values]
    if len(row) != dim:
        raise AdapterError(f"{what} has {len(row)} entries, expected {dim}")
    return row


def handle_request(adapter: EnvAdapter, request: dict) -> dict:
    """Dispatch one parsed request and return the response payload (sans id)."""
    cmd = request.get("cmd")
    if cmd == "spec":
        return adapter.spec_payload()
    if cmd == "sample":
        seed = _require_int(request, "rng")
        state = _state_row(adapter.sample(seed), adapter.state_dim, "sampled state")
        return {"state": state}
    if cmd == "validate":
        state = _require_state(adapter, request)
        return {"valid": bool(adapter.validate(state))}
    if cmd == "rollout":
        state = _require_state(adapter, request)
        horizon = _require_int(request, "horizon")
        seed = _require_int(request, "rng")
        if not 1 <= horizon <= adapter.horizon_max:
            raise AdapterError(
                f"horizon must be in [1, {adapter.horizon_max}], got {horizon}"
            )
        reply = adapter.rollout(state, horizon, seed)
        states = [_state_row(row, adapter.state_dim, "rollout state") for row in reply.states]
        if not states:
            raise AdapterError("rollout returned no states")
        crashed = bool(reply.crashed)
        crash_step = reply.crash_step
        if crashed != (crash_step is not None):
            raise AdapterError("crash_step must be set when and only when crashed")
        if crash_step is not None and not 0 <= crash_step < len(states):
            raise AdapterError(f"crash_step {crash_step} outside the returned episode")
        return {
            "states": states,
            "reward": float(reply.cumulative_reward),
            "crash": crashed,
            "crash_step": crash_step,
        }
    raise AdapterError(f"unknown cmd {cmd!r}")


def _reply(wfile: IO[str], rid: object, payload: dict) -> None:
    body = {"id": rid}
    body.update(payload)
    wfile.write(json.dumps(body, separators=(",", ":"), allow_nan=False) + "\n")
    wfile.flush()


def serve(adapter: EnvAdapter, rfile: IO[str], wfile: IO[str]) -> None:
    """Answer requests from ``rfile`` on ``wfile`` until the stream ends.

    Blank lines are skipped.  Responses carry fixed error strings for
    unparseable input so transcripts stay stable across Python versions.
    """
    for line in rfile:
        text = line.strip()
        if not text:
            continue
        try:
            request = json.loads(text)
        except json.JSONDecodeError:
            _reply(wfile, None, {"error": "bad request: not valid JSON"})
            continue
        if not isinstance(request, dict):
            _reply(wfile, None, {"error": "bad request: expected a JSON object"})
            continue
        rid = request.get("id")
        try:
            payload = handle_request(adapter, request)
        except Exception as exc:  # answer and keep serving
            _reply(wfile, rid, {"error": f"{type(exc).__name__}: {exc}"})
            continue
        _reply(wfile, rid, payload)


def serve_stdio(adapter: EnvAdapter) -> None:
    serve(adapter, sys.stdin, sys.stdout)


def serve_tcp(adapter: EnvAdapter, port: int, host: str = "127.0.0.1") -> None:
    """Serve one adapter to any number of concurrent TCP clients."""

    class _Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            rfile = io.TextIOWrapper(self.rfile, encoding="utf-8")
            wfile = io.TextIOWrapper(self.wfile, encoding="utf-8")
            serve(adapter, rfile, wfile)
            wfile.flush()

    class _Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with _Server((host, port), _Handler) as server:
        server.serve_forever()
