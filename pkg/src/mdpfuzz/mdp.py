"""Core MDP abstractions: environments, policies, and the rollout loop.

States are 1-d float64 ndarrays; a trajectory is the (L, state_dim) stack of
visited states. Environments own their dynamics, reward, crash oracle,
initial-state sampler and validator; the rollout loop below is the single
place trajectories are produced, so truncation and accounting rules live in
exactly one spot.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import InvalidInitialState, NonFiniteState

# A policy maps a state to an action. Actions are environment-specific
# (discrete ints for the avoidance env, velocity arrays for the navigation
# env), so the type is deliberately loose.
Policy = Callable[[np.ndarray], Any]


@dataclass(frozen=True)
class EnvironmentSpec:
    """Static description of an environment's state space.

    :param name: registry name of the environment
    :param state_dim: dimensionality d of the state vector
    :param bounds: (d, 2) array of closed per-dimension intervals
    :param default_horizon: rollout length used when none is configured
    """

    name: str
    state_dim: int
    bounds: np.ndarray
    default_horizon: int

    def __post_init__(self) -> None:
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (self.state_dim, 2):
            raise ValueError(
                f"bounds shape {b.shape} != ({self.state_dim}, 2)")
        if not np.all(b[:, 0] <= b[:, 1]):
            raise ValueError("lower bounds must not exceed upper bounds")
        if self.default_horizon < 1:
            raise ValueError("default_horizon must be >= 1")
        object.__setattr__(self, "bounds", b)

    @property
    def widths(self) -> np.ndarray:
        """Per-dimension bound widths (d,)."""
        return self.bounds[:, 1] - self.bounds[:, 0]


@dataclass
class RolloutResult:
    """One trajectory of a policy in an environment.

    ``states`` has shape (L, state_dim) with ``1 <= L <= horizon``; if
    ``crashed`` the sequence is truncated at the crash state and
    ``crash_step == L - 1``, otherwise ``L == horizon`` and ``crash_step``
    is None. ``cumulative_reward`` sums one reward per acted-upon state
    (the crash state is never acted upon).
    """

    states: np.ndarray
    cumulative_reward: float
    crashed: bool
    crash_step: int | None
    rng_seed: int = 0

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def length(self) -> int:
        return self.states.shape[0]


class Environment(ABC):
    """Abstract MDP environment.

    Subclasses fill in dynamics; the generic :func:`rollout` below drives the
    loop. Remote (bridge) environments override :meth:`rollout` wholesale
    because the peer runs the whole loop on its side.
    """

    spec: EnvironmentSpec

    @property
    def mutable_mask(self) -> np.ndarray:
        """Boolean (d,) mask of dimensions the fuzzer may perturb.

        Defaults to everything; environments with frozen context dimensions
        (e.g. landmark positions) override this.
        """
        return np.ones(self.spec.state_dim, dtype=bool)

    @abstractmethod
    def sample_initial(self, rng_seed: int) -> np.ndarray:
        """Draw one initial state. Output must satisfy :meth:`validate`."""

    @abstractmethod
    def validate(self, state: np.ndarray) -> bool:
        """True iff ``state`` is a legitimate initial state."""

    @abstractmethod
    def transition(self, state: np.ndarray, action: Any,
                   rng: np.random.Generator) -> np.ndarray:
        """One dynamics step."""

    @abstractmethod
    def reward(self, state: np.ndarray, action: Any) -> float:
        """Immediate reward for acting in ``state``."""

    @abstractmethod
    def oracle(self, state: np.ndarray) -> bool:
        """True iff ``state`` is abnormal (a crash)."""

    @abstractmethod
    def policy(self) -> Policy:
        """The policy under test for this environment."""

    def rollout(self, policy: Policy, initial_state: np.ndarray,
                horizon: int, rng_seed: int) -> RolloutResult:
        return rollout(self, policy, initial_state, horizon, rng_seed)

    def in_bounds(self, state: np.ndarray, atol: float = 1e-9) -> bool:
        b = self.spec.bounds
        return bool(np.all(state >= b[:, 0] - atol)
                    and np.all(state <= b[:, 1] + atol))

    def clip_to_bounds(self, state: np.ndarray) -> np.ndarray:
        b = self.spec.bounds
        return np.clip(state, b[:, 0], b[:, 1])


def rollout(env: Environment, policy: Policy, initial_state: np.ndarray,
            horizon: int, rng_seed: int) -> RolloutResult:
    """Run ``policy`` in ``env`` from ``initial_state`` for up to ``horizon``
    states.

    The oracle is checked on every visited state before acting; a crash
    truncates the trajectory at the crash state, which contributes no
    reward. A non-crashing trajectory visits exactly ``horizon`` states and
    collects ``horizon`` rewards.

    :raises InvalidInitialState: validator rejects ``initial_state``
    :raises NonFiniteState: a transition produced NaN/inf
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    s0 = np.asarray(initial_state, dtype=float).reshape(-1)
    if s0.shape[0] != env.spec.state_dim:
        raise InvalidInitialState(
            f"state dim {s0.shape[0]} != {env.spec.state_dim}")
    if not np.all(np.isfinite(s0)) or not env.validate(s0):
        raise InvalidInitialState(
            f"validator of '{env.spec.name}' rejected initial state")
    rng = np.random.default_rng(int(rng_seed))
    states = [s0]
    total = 0.0
    crash_step: int | None = None
    while True:
        s = states[-1]
        if env.oracle(s):
            crash_step = len(states) - 1
            break
        action = policy(s)
        total += float(env.reward(s, action))
        if len(states) >= horizon:
            break
        s_next = np.asarray(env.transition(s, action, rng), dtype=float)
        if not np.all(np.isfinite(s_next)):
            raise NonFiniteState(
                f"transition of '{env.spec.name}' produced non-finite state "
                f"at step {len(states)}")
        states.append(s_next)
    return RolloutResult(
        states=np.stack(states),
        cumulative_reward=total,
        crashed=crash_step is not None,
        crash_step=crash_step,
        rng_seed=int(rng_seed),
    )
