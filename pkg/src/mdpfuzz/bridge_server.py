"""Reference protocol server exposing the built-in environments.

Run as a module (``python -m mdpfuzz.bridge_server --env acas-toy``) it
serves one connection over stdio, or any number of concurrent connections
with ``--listen PORT``. Exists so the loopback path (fuzzer -> wire ->
built-in env) can be exercised and compared bit for bit against in-process
rollouts, and as the executable reference for peers implementing the
protocol in other languages.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import sys
from typing import IO

import numpy as np

from .artifacts import dumps_compact
from .bridge import PROTOCOL_VERSION
from .environments import make_environment
from .mdp import Environment, Policy


def handle_request(env: Environment, policy: Policy, horizon_max: int,
                   request: dict) -> dict:
    """Map one decoded request to its response fields (sans id)."""
    cmd = request.get("cmd")
    if cmd == "spec":
        return {
            "state_dim": env.spec.state_dim,
            "bounds": [[float(lo), float(hi)] for lo, hi in env.spec.bounds],
            "horizon_max": horizon_max,
            "version": PROTOCOL_VERSION,
        }
    if cmd == "sample":
        state = env.sample_initial(int(request["rng"]))
        return {"state": [float(v) for v in state]}
    if cmd == "validate":
        state = np.asarray(request["state"], dtype=float)
        return {"valid": bool(env.validate(state))}
    if cmd == "rollout":
        horizon = int(request["horizon"])
        if not 1 <= horizon <= horizon_max:
            raise ValueError(
                f"horizon {horizon} outside [1, {horizon_max}]")
        state = np.asarray(request["state"], dtype=float)
        result = env.rollout(policy, state, horizon, int(request["rng"]))
        return {
            "states": [[float(v) for v in row] for row in result.states],
            "reward": float(result.cumulative_reward),
            "crash": bool(result.crashed),
            "crash_step": result.crash_step,
        }
    raise ValueError(f"unknown cmd {cmd!r}")


def serve(env: Environment, policy: Policy, rfile: IO[str], wfile: IO[str],
          horizon_max: int = 1000) -> None:
    """Answer requests line by line until EOF.

    Malformed JSON gets an error response with id null; any handler
    exception becomes an error response and the connection stays up.
    """
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            _respond(wfile, {"id": None, "error": f"bad request: {exc}"})
            continue
        rid = request.get("id")
        try:
            response = handle_request(env, policy, horizon_max, request)
            response["id"] = rid
        except Exception as exc:  # report, keep serving
            response = {"id": rid, "error": f"{type(exc).__name__}: {exc}"}
        _respond(wfile, response)


def _respond(wfile: IO[str], response: dict) -> None:
    # id leads purely for human readability of transcripts
    ordered = {"id": response.pop("id")}
    ordered.update(response)
    wfile.write(dumps_compact(ordered) + "\n")
    wfile.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mdpfuzz-bridge-server",
        description="Serve a built-in environment over the wire protocol.")
    parser.add_argument("--env", required=True,
                        help="registered environment name")
    parser.add_argument("--overrides", default=None,
                        help="JSON dict of environment constructor overrides")
    parser.add_argument("--horizon-max", type=int, default=1000)
    parser.add_argument("--listen", type=int, default=None, metavar="PORT",
                        help="serve TCP on this port instead of stdio")
    args = parser.parse_args(argv)

    overrides = json.loads(args.overrides) if args.overrides else None
    env = make_environment(args.env, overrides)
    policy = env.policy()

    if args.listen is None:
        serve(env, policy, sys.stdin, sys.stdout,
              horizon_max=args.horizon_max)
        return 0

    class Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            lines = (line.decode() for line in self.rfile)
            serve(env, policy, lines,  # type: ignore[arg-type]
                  _SocketWriter(self.wfile), horizon_max=args.horizon_max)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server(("127.0.0.1", args.listen), Handler) as server:
        print(f"[bridge-server] listening on 127.0.0.1:{args.listen}",
              file=sys.stderr)
        server.serve_forever()
    return 0


class _SocketWriter:
    """Adapts a binary socket file to the text writer serve() expects."""

    def __init__(self, wfile: IO[bytes]):
        self._wfile = wfile

    def write(self, text: str) -> None:
        self._wfile.write(text.encode())

    def flush(self) -> None:
        self._wfile.flush()


if __name__ == "__main__":
    sys.exit(main())
