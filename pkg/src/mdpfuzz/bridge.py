"""Client side of the wire protocol that lets an external process serve as
the blackbox (environment + policy) under test.

Framing is one JSON object per line. Every request carries a monotonically
increasing ``id`` and a ``cmd``; the matching response echoes the id. One
request is in flight per connection at any time — worker lanes each get
their own connection (thread-local), never sharing one.

Request/response field names are a wire contract shared with non-Python
peers; do not rename them.
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .artifacts import dumps_compact
from .errors import (BridgeError, BridgeTimeout, ConfigError, ProtocolError,
                     RemoteError)
from .mdp import Environment, EnvironmentSpec, Policy, RolloutResult

PROTOCOL_VERSION = 1

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class BridgeSpec:
    """Peer-declared state space, as sent in the handshake response."""

    state_dim: int
    bounds: np.ndarray
    horizon_max: int
    protocol_version: int


class StdioTransport:
    """Line transport over a child process's stdin/stdout pipes."""

    def __init__(self, cmd: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=False)
        except OSError as exc:
            raise BridgeError(f"could not spawn {argv[0]!r}: {exc}") from exc
        self.timeout = timeout
        self._buf = bytearray()
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line.encode() + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"peer pipe closed: {exc}") from exc

    def recv_line(self) -> str:
        deadline = time.monotonic() + self.timeout
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = self._buf[:nl].decode()
                del self._buf[:nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout(
                    f"no response within {self.timeout:.1f}s")
            if not self._sel.select(timeout=remaining):
                continue
            chunk = os.read(self.proc.stdout.fileno(), 65536)
            if not chunk:
                raise BridgeError("peer closed its output")
            self._buf.extend(chunk)

    def close(self) -> None:
        self._sel.close()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self.proc.terminate()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class TcpTransport:
    """Line transport over a TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BridgeError(f"connect {host}:{port} failed: {exc}") from exc
        self.sock.settimeout(timeout)
        self._buf = bytearray()

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode() + b"\n")
        except OSError as exc:
            raise BridgeError(f"send failed: {exc}") from exc

    def recv_line(self) -> str:
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = self._buf[:nl].decode()
                del self._buf[:nl + 1]
                return line
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as exc:
                raise BridgeTimeout(
                    f"no response within {self.timeout:.1f}s") from exc
            except OSError as exc:
                raise BridgeError(f"recv failed: {exc}") from exc
            if not chunk:
                raise BridgeError("peer closed the connection")
            self._buf.extend(chunk)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class BridgeClient:
    """Single-connection protocol client (one request in flight)."""

    def __init__(self, transport):
        self.transport = transport
        self._next_id = 0

    def call(self, cmd: str, **fields: Any) -> dict:
        self._next_id += 1
        request = {"id": self._next_id, "cmd": cmd}
        request.update(fields)
        self.transport.send_line(dumps_compact(request))
        line = self.transport.recv_line()
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable response: {line!r}") from exc
        if not isinstance(response, dict) or "id" not in response:
            raise ProtocolError(f"response without id: {line!r}")
        if response["id"] != request["id"]:
            raise ProtocolError(
                f"out-of-order response: sent id {request['id']}, "
                f"got {response['id']}")
        if "error" in response:
            raise RemoteError(str(response["error"]))
        return response

    def _require(self, response: dict, *keys: str) -> None:
        missing = [k for k in keys if k not in response]
        if missing:
            raise ProtocolError(f"response missing fields: {missing}")

    def handshake(self) -> BridgeSpec:
        r = self.call("spec")
        self._require(r, "state_dim", "bounds", "horizon_max", "version")
        if int(r["version"]) != PROTOCOL_VERSION:
            raise ProtocolError(
                f"peer speaks protocol version {r['version']}, "
                f"this client requires {PROTOCOL_VERSION}")
        bounds = np.asarray(r["bounds"], dtype=float)
        dim = int(r["state_dim"])
        if bounds.shape != (dim, 2):
            raise ProtocolError(
                f"bounds shape {bounds.shape} inconsistent with "
                f"state_dim {dim}")
        return BridgeSpec(state_dim=dim, bounds=bounds,
                          horizon_max=int(r["horizon_max"]),
                          protocol_version=int(r["version"]))

    def sample(self, rng_seed: int) -> np.ndarray:
        r = self.call("sample", rng=int(rng_seed))
        self._require(r, "state")
        return np.asarray(r["state"], dtype=float)

    def validate(self, state: np.ndarray) -> bool:
        r = self.call("validate", state=[float(v) for v in state])
        self._require(r, "valid")
        return bool(r["valid"])

    def rollout(self, state: np.ndarray, horizon: int,
                rng_seed: int) -> RolloutResult:
        r = self.call("rollout", state=[float(v) for v in state],
                      horizon=int(horizon), rng=int(rng_seed))
        self._require(r, "states", "reward", "crash", "crash_step")
        states = np.asarray(r["states"], dtype=float)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ProtocolError(
                f"rollout states have shape {states.shape}")
        crashed = bool(r["crash"])
        crash_step = r["crash_step"]
        if crashed:
            if crash_step is None or not 0 <= int(crash_step) < states.shape[0]:
                raise ProtocolError(
                    f"crash at step {crash_step} outside sequence of "
                    f"length {states.shape[0]}")
            crash_step = int(crash_step)
        elif crash_step is not None:
            raise ProtocolError("crash_step set on a non-crash rollout")
        return RolloutResult(states=states,
                             cumulative_reward=float(r["reward"]),
                             crashed=crashed, crash_step=crash_step,
                             rng_seed=int(rng_seed))

    def close(self) -> None:
        self.transport.close()


class BridgeEnvironment(Environment):
    """A remote peer presented as an Environment.

    The peer runs the whole rollout on its side, so :meth:`rollout` is
    overridden and the stepwise primitives are unavailable. Each thread that
    touches the environment gets its own connection (single-flight rule).
    """

    def __init__(self, connect: Callable[[], BridgeClient],
                 name: str = "bridge"):
        self._connect = connect
        self._local = threading.local()
        self._clients: list[BridgeClient] = []
        self._clients_lock = threading.Lock()
        bspec = self._client().handshake()
        self.bridge_spec = bspec
        self.spec = EnvironmentSpec(name=name, state_dim=bspec.state_dim,
                                    bounds=bspec.bounds,
                                    default_horizon=bspec.horizon_max)

    def _client(self) -> BridgeClient:
        client = getattr(self._local, "client", None)
        if client is None:
            client = self._connect()
            self._local.client = client
            with self._clients_lock:
                self._clients.append(client)
        return client

    def sample_initial(self, rng_seed: int) -> np.ndarray:
        return self._client().sample(rng_seed)

    def validate(self, state: np.ndarray) -> bool:
        return self._client().validate(np.asarray(state, dtype=float))

    def rollout(self, policy: Policy, initial_state: np.ndarray,
                horizon: int, rng_seed: int) -> RolloutResult:
        if horizon > self.bridge_spec.horizon_max:
            raise ConfigError(
                f"horizon {horizon} exceeds peer horizon_max "
                f"{self.bridge_spec.horizon_max}")
        return self._client().rollout(np.asarray(initial_state, dtype=float),
                                      horizon, rng_seed)

    # The stepwise primitives never run locally for a remote peer.
    def transition(self, state, action, rng):
        raise BridgeError("remote environment exposes whole rollouts only")

    def reward(self, state, action):
        raise BridgeError("remote environment exposes whole rollouts only")

    def oracle(self, state):
        raise BridgeError("remote environment exposes whole rollouts only")

    def policy(self) -> Policy:
        # the policy under test lives on the peer; rollout ignores this
        return lambda state: None

    def close(self) -> None:
        with self._clients_lock:
            clients, self._clients = self._clients, []
        for client in clients:
            try:
                client.close()
            except BridgeError:
                pass


def connect_stdio(cmd: str | list[str],
                  timeout: float = DEFAULT_TIMEOUT) -> Callable[[], BridgeClient]:
    """Connection factory: spawn one child process per connection."""
    return lambda: BridgeClient(StdioTransport(cmd, timeout=timeout))


def connect_tcp(address: str,
                timeout: float = DEFAULT_TIMEOUT) -> Callable[[], BridgeClient]:
    """Connection factory for ``host:port`` addresses."""
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"bridge address must be host:port, got {address!r}")
    return lambda: BridgeClient(TcpTransport(host, int(port), timeout=timeout))
