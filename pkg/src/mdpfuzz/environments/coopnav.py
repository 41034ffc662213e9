"""Toy cooperative-navigation environment.

Three agents must cover three landmarks in a square arena. State (12,):
agent positions first, landmark positions last —

    [a0x, a0y, a1x, a1y, a2x, a2y, l0x, l0y, l1x, l1y, l2x, l2y]

The scripted policy assigns each agent (in index order) its nearest
still-unclaimed landmark and drives straight at it, with no collision
avoidance whatsoever — crossing paths are the policy's weakness. A state is
a crash when any two agents are closer than one diameter.

Only the agent positions are on the fuzzer's mutation surface; landmark
positions are frozen context.
"""

from __future__ import annotations

import numpy as np

from ..mdp import Environment, EnvironmentSpec, Policy

N_AGENTS = 3
N_LANDMARKS = 3
ARENA = 2.0          # positions live in [-ARENA, ARENA]^2
RADIUS = 0.15        # agent body radius
SPEED = 0.5          # speed cap, units/s
DT = 0.1             # s per step
MIN_SEPARATION = 2.0 * RADIUS   # below this two agents have collided
_INIT_SEPARATION = 3.0 * RADIUS  # sampler keeps a margin beyond the crash line


class CoopNavEnv(Environment):
    """Multi-agent point navigation with a greedy, avoidance-free policy."""

    def __init__(self, horizon: int = 100):
        dim = 2 * (N_AGENTS + N_LANDMARKS)
        bounds = np.tile([-ARENA, ARENA], (dim, 1)).astype(float)
        self.spec = EnvironmentSpec(name="coopnav-toy", state_dim=dim,
                                    bounds=bounds, default_horizon=horizon)
        mask = np.zeros(dim, dtype=bool)
        mask[:2 * N_AGENTS] = True
        self._mutable = mask

    @property
    def mutable_mask(self) -> np.ndarray:
        return self._mutable

    @staticmethod
    def split(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(agents (3,2), landmarks (3,2)) views of a state vector."""
        agents = state[:2 * N_AGENTS].reshape(N_AGENTS, 2)
        landmarks = state[2 * N_AGENTS:].reshape(N_LANDMARKS, 2)
        return agents, landmarks

    def sample_initial(self, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(int(rng_seed))
        landmarks = rng.uniform(-ARENA, ARENA, size=(N_LANDMARKS, 2))
        agents = np.empty((N_AGENTS, 2))
        for i in range(N_AGENTS):
            for _ in range(1000):
                p = rng.uniform(-ARENA, ARENA, size=2)
                if all(np.linalg.norm(p - agents[j]) >= _INIT_SEPARATION
                       for j in range(i)):
                    agents[i] = p
                    break
            else:  # pragma: no cover - essentially impossible in a 4x4 arena
                raise RuntimeError("could not place agents apart")
        return np.concatenate([agents.ravel(), landmarks.ravel()])

    def validate(self, state: np.ndarray) -> bool:
        if not (np.all(np.isfinite(state)) and self.in_bounds(state)):
            return False
        agents, _ = self.split(np.asarray(state, dtype=float))
        for i in range(N_AGENTS):
            for j in range(i + 1, N_AGENTS):
                if np.linalg.norm(agents[i] - agents[j]) <= MIN_SEPARATION:
                    return False
        return True

    def oracle(self, state: np.ndarray) -> bool:
        agents, _ = self.split(np.asarray(state, dtype=float))
        for i in range(N_AGENTS):
            for j in range(i + 1, N_AGENTS):
                if np.linalg.norm(agents[i] - agents[j]) < MIN_SEPARATION:
                    return True
        return False

    def transition(self, state: np.ndarray, action: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
        agents, landmarks = self.split(np.asarray(state, dtype=float))
        vel = np.asarray(action, dtype=float).reshape(N_AGENTS, 2)
        speeds = np.linalg.norm(vel, axis=1)
        over = speeds > SPEED
        if np.any(over):  # physics enforces the cap regardless of the policy
            vel = vel.copy()
            vel[over] *= (SPEED / speeds[over])[:, None]
        new_agents = np.clip(agents + vel * DT, -ARENA, ARENA)
        return np.concatenate([new_agents.ravel(), landmarks.ravel()])

    def reward(self, state: np.ndarray, action: np.ndarray) -> float:
        agents, landmarks = self.split(np.asarray(state, dtype=float))
        total = 0.0
        for lm in landmarks:
            total -= float(np.min(np.linalg.norm(agents - lm, axis=1)))
        return total

    def policy(self) -> Policy:
        def greedy(state: np.ndarray) -> np.ndarray:
            agents, landmarks = self.split(np.asarray(state, dtype=float))
            vel = np.zeros((N_AGENTS, 2))
            taken: list[int] = []
            for i in range(N_AGENTS):
                free = [j for j in range(N_LANDMARKS) if j not in taken]
                dists = [np.linalg.norm(landmarks[j] - agents[i])
                         for j in free]
                target = free[int(np.argmin(dists))]
                taken.append(target)
                to_target = landmarks[target] - agents[i]
                dist = float(np.linalg.norm(to_target))
                if dist > 1e-12:
                    # arrive exactly instead of overshooting on the last step
                    vel[i] = to_target / dist * min(SPEED, dist / DT)
            return vel

        return greedy
