"""Linear-Gaussian chain with a closed-form trajectory density.

Dynamics: S_{t+1} = a * S_t + b + noise * eps,  eps ~ N(0, I), |a| < 1.

The stationary law is N(mu*, Sigma*) with mu* = b / (1 - a) and Sigma*
solving the discrete Lyapunov equation. The log density of a whole
trajectory under the stationary law,

    log N(S_0 | mu*, Sigma*) + sum_t log N(S_{t+1} | a S_t + b, noise^2 I),

is exact and cheap, which makes this environment the ground truth for
judging estimated sequence densities. The policy is a no-op (the chain is
uncontrolled); the crash oracle is off by default but a spherical crash
region can be switched on for replay/bridge exercises.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from ..density import GmmDensity, GmmParams
from ..mdp import Environment, EnvironmentSpec, Policy

_LOG_2PI = float(np.log(2.0 * np.pi))


class ChainEnv(Environment):
    """Uncontrolled stable AR(1) process in d dimensions."""

    def __init__(self, dim: int = 2, a: float = 0.9, drift: float = 0.5,
                 noise: float = 0.1, crash_radius: float = 0.0,
                 horizon: int = 30):
        if not abs(a) < 1.0:
            raise ValueError(f"chain requires |a| < 1, got {a}")
        if noise < 0.0:
            raise ValueError("noise must be non-negative")
        self.a = float(a)
        self.noise = float(noise)
        self.drift_vec = np.full(dim, float(drift))
        self.mu_star = self.drift_vec / (1.0 - self.a)
        self.sigma_star = solve_discrete_lyapunov(
            self.a * np.eye(dim), self.noise ** 2 * np.eye(dim))
        std = np.sqrt(np.diag(self.sigma_star))
        # a noise-free chain is a fixed-point toy; give it usable bounds
        span = np.where(std > 0.0, std, 1.0)
        bounds = np.stack([self.mu_star - 8.0 * span,
                           self.mu_star + 8.0 * span], axis=1)
        self.spec = EnvironmentSpec(name="chain", state_dim=dim,
                                    bounds=bounds, default_horizon=horizon)
        self._sample_lo = self.mu_star - 2.0 * std
        self._sample_hi = self.mu_star + 2.0 * std
        self.crash_radius = float(crash_radius)
        # crash region (when enabled) sits off-centre along the first axis
        self.crash_center = self.mu_star + np.eye(dim)[0] * 3.0 * std[0]
        self._stationary = None if noise == 0.0 else GmmDensity(GmmParams(
            weights=np.ones(1), means=self.mu_star[None, :],
            covariances=self.sigma_star[None, :, :]))

    def sample_initial(self, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(int(rng_seed))
        return rng.uniform(self._sample_lo, self._sample_hi)

    def validate(self, state: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(state)) and self.in_bounds(state))

    def oracle(self, state: np.ndarray) -> bool:
        if self.crash_radius <= 0.0:
            return False
        return bool(np.linalg.norm(state - self.crash_center)
                    < self.crash_radius)

    def transition(self, state: np.ndarray, action: object,
                   rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal(self.spec.state_dim)
        return self.a * state + self.drift_vec + self.noise * eps

    def reward(self, state: np.ndarray, action: object) -> float:
        return -float(np.mean((state - self.mu_star) ** 2))

    def policy(self) -> Policy:
        zero = np.zeros(self.spec.state_dim)
        return lambda state: zero

    def exact_log_density(self, states: np.ndarray) -> float:
        """Closed-form log density of a trajectory under the stationary law."""
        if self._stationary is None:
            raise ValueError(
                "exact density is undefined for a noise-free chain")
        states = np.atleast_2d(np.asarray(states, dtype=float))
        total = float(self._stationary.log_pdf(states[0])[0])
        if states.shape[0] >= 2:
            d = self.spec.state_dim
            pred = self.a * states[:-1] + self.drift_vec
            sq = np.sum((states[1:] - pred) ** 2, axis=1)
            total += float(np.sum(
                -0.5 * d * _LOG_2PI - d * np.log(self.noise)
                - 0.5 * sq / self.noise ** 2))
        return total
