"""Reference bridge wrapper: a one-dimensional noisy random walk.

This doubles as the SDK's executable example and as the conformance target
for the recorded-transcript tests: everything below is plain numpy plus the
serve loop, so for a given request stream the responses are bit-for-bit
reproducible.

The walk starts uniformly in [-5, 5] and steps by x + N(0, 1); reaching
|x| >= 8 is a crash. The policy under test is a passive drift monitor that
never intervenes, and the per-step reward is -|x|, so episodes that stray
toward the crash threshold also score worse.

Run ``mdpfuzz-bridge-randomwalk`` (stdio) or with ``--listen PORT`` (TCP).
"""

from __future__ import annotations

import argparse
from typing import Sequence

import numpy as np

from .sdk import EnvAdapter, RolloutReply, serve_stdio, serve_tcp

NAME = "randomwalk"
BOUND = 10.0
START_HALF_WIDTH = 5.0
CRASH_AT = 8.0
STEP_SIGMA = 1.0
HORIZON_MAX = 100


def sample(rng_seed: int) -> list[float]:
    """Draw a start point uniformly from the safe middle of the line."""
    rng = np.random.default_rng(int(rng_seed))
    return [float(rng.uniform(-START_HALF_WIDTH, START_HALF_WIDTH))]


def validate(state: Sequence[float]) -> bool:
    """A start is acceptable iff it is inside bounds and not already a crash."""
    x = float(state[0])
    return -BOUND <= x <= BOUND and abs(x) < CRASH_AT


def rollout(state: Sequence[float], horizon: int, rng_seed: int) -> RolloutReply:
    """Walk for up to ``horizon`` states, truncating at the first crash.

    The crash check runs on every visited state before the reward for that
    state is collected, so a crash state contributes no reward and a clean
    episode collects exactly ``horizon`` rewards.
    """
    rng = np.random.default_rng(int(rng_seed))
    states = [[float(state[0])]]
    total = 0.0
    crash_step = None
    while True:
        x = states[-1][0]
        if abs(x) >= CRASH_AT:
            crash_step = len(states) - 1
            break
        total += -abs(x)  # the monitor never intervenes, reward is state-only
        if len(states) >= horizon:
            break
        states.append([x + STEP_SIGMA * rng.standard_normal()])
    return RolloutReply(
        states=states,
        cumulative_reward=total,
        crashed=crash_step is not None,
        crash_step=crash_step,
    )


def make_adapter() -> EnvAdapter:
    return EnvAdapter(
        name=NAME,
        state_dim=1,
        bounds=[[-BOUND, BOUND]],
        horizon_max=HORIZON_MAX,
        sample=sample,
        validate=validate,
        rollout=rollout,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mdpfuzz-bridge-randomwalk",
        description="Serve the reference random-walk environment over the "
                    "fuzzer bridge protocol.",
    )
    parser.add_argument(
        "--listen", type=int, metavar="PORT",
        help="serve over TCP on this port instead of stdio",
    )
    args = parser.parse_args(argv)
    adapter = make_adapter()
    if args.listen is not None:
        serve_tcp(adapter, args.listen)
    else:
        serve_stdio(adapter)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
