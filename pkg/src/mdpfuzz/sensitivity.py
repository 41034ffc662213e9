"""Seed sensitivity: how sharply cumulative reward reacts to a nudge of the
initial state.

Two rollouts — one from the seed, one from a slightly perturbed copy — give an
energy estimate |r - r_d| / ||dS||_2. Seeds with high energy sit near decision
boundaries of the policy and get proportionally more of the mutation budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PerturbationRejected
from .mdp import Environment, Policy, RolloutResult

# Smallest admissible perturbation norm: anything below is a numerical no-op
# (bound clipping can cancel a draw entirely at a corner of the state space).
_MIN_NORM = 1e-12


@dataclass
class EnergyEstimate:
    """Result of one sensitivity probe.

    energy == |base_reward - perturbed_reward| / perturbation_norm.
    """

    energy: float
    perturbation_norm: float
    base_reward: float
    perturbed_reward: float


def energy_from(base_reward: float, perturbed_reward: float,
                perturbation_norm: float) -> float:
    """The energy formula on its own, for reuse and direct testing."""
    if perturbation_norm <= 0.0:
        raise ValueError("perturbation norm must be positive")
    return abs(base_reward - perturbed_reward) / perturbation_norm


def sensitivity(env: Environment, policy: Policy, initial_state: np.ndarray,
                horizon: int, rollout_seed: int, perturb_rng: np.random.Generator,
                delta: float = 0.01, retries: int = 8,
                base: RolloutResult | None = None) -> EnergyEstimate:
    """Estimate the energy of ``initial_state``.

    The perturbation is drawn per dimension uniformly in +/- ``delta`` x
    (bound width), projected back into bounds; draws whose projected result
    the validator rejects (or that project to a zero perturbation) are redrawn
    up to ``retries`` times.

    :param rollout_seed: seed for the two rollouts' transition noise; both
        rollouts use the same seed so the comparison isolates the initial
        state.
    :param base: optional precomputed rollout of ``initial_state`` with the
        same ``horizon`` and ``rollout_seed``, to avoid repeating it.
    :raises PerturbationRejected: no admissible perturbation within budget
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    s0 = np.asarray(initial_state, dtype=float).reshape(-1)
    widths = env.spec.widths
    perturbed_state = None
    for _ in range(max(1, retries)):
        step = perturb_rng.uniform(-delta, delta, size=s0.shape[0]) * widths
        candidate = env.clip_to_bounds(s0 + step)
        if float(np.linalg.norm(candidate - s0)) <= _MIN_NORM:
            continue
        if env.validate(candidate):
            perturbed_state = candidate
            break
    if perturbed_state is None:
        raise PerturbationRejected(
            f"no admissible perturbation after {retries} draws")
    if base is None:
        base = env.rollout(policy, s0, horizon, rollout_seed)
    perturbed = env.rollout(policy, perturbed_state, horizon, rollout_seed)
    norm = float(np.linalg.norm(perturbed_state - s0))
    return EnergyEstimate(
        energy=energy_from(base.cumulative_reward,
                           perturbed.cumulative_reward, norm),
        perturbation_norm=norm,
        base_reward=base.cumulative_reward,
        perturbed_reward=perturbed.cumulative_reward,
    )
