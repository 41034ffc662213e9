"""Campaign orchestration: seed corpus, energy scheduling, mutation, the
fuzz loop, and resumable artifact checkpoints.

One iteration of the loop is: pick a seed with probability proportional to
its energy, mutate its initial state inside the legitimate state space, roll
the policy out, score the trajectory's density (updating the mixture model
when the trajectory is fresh), then either record a crash or retain the
mutant if it lowered the reward or looked novel. Crash-triggering states are
never recycled into the corpus — they are the product.
"""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import artifacts
from .density import DensityEstimator
from .errors import (ConfigError, EmptyCorpus, MutationExhausted,
                     PerturbationRejected, SamplingExhausted)
from .mdp import Environment, Policy, RolloutResult
from .rng import StreamFactory
from .sensitivity import sensitivity

DEFAULT_N_COMPONENTS = 10
DEFAULT_TAU = 0.01
DEFAULT_GAMMA = 0.01
DEFAULT_BETA = 0.05
DEFAULT_DELTA_SENS = 0.01

STATS_EVERY = 10          # iterations between stats rows
CHECKPOINT_EVERY = 100    # iterations between corpus/model checkpoints


# --- domain types --------------------------------------------------------------

@dataclass
class Seed:
    """One corpus member: an initial state plus its bookkeeping."""

    id: int
    s0: np.ndarray
    reward: float
    energy: float
    step_density: float | None
    raw_log_density: float | None
    parent_id: int | None
    created_at_iteration: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "s0": [float(v) for v in self.s0],
            "reward": self.reward,
            "energy": self.energy,
            "step_density": self.step_density,
            "raw_log_density": self.raw_log_density,
            "parent_id": self.parent_id,
            "created_at_iteration": self.created_at_iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Seed":
        return cls(
            id=int(d["id"]),
            s0=np.asarray(d["s0"], dtype=float),
            reward=float(d["reward"]),
            energy=float(d["energy"]),
            step_density=(None if d.get("step_density") is None
                          else float(d["step_density"])),
            raw_log_density=(None if d.get("raw_log_density") is None
                             else float(d["raw_log_density"])),
            parent_id=(None if d.get("parent_id") is None
                       else int(d["parent_id"])),
            created_at_iteration=int(d.get("created_at_iteration", 0)),
        )


class Corpus:
    """Ordered seed pool. Unbounded by default; an optional capacity evicts
    the lowest-energy member once exceeded."""

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ConfigError("corpus capacity must be positive")
        self.capacity = capacity
        self.seeds: list[Seed] = []
        self._ids: set[int] = set()

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self):
        return iter(self.seeds)

    def add(self, seed: Seed) -> None:
        if seed.id in self._ids:
            raise ValueError(f"duplicate seed id {seed.id}")
        if not np.isfinite(seed.energy) or seed.energy < 0.0:
            raise ValueError(f"seed {seed.id} has bad energy {seed.energy}")
        self.seeds.append(seed)
        self._ids.add(seed.id)
        if self.capacity is not None and len(self.seeds) > self.capacity:
            victim = min(range(len(self.seeds)),
                         key=lambda i: self.seeds[i].energy)
            dropped = self.seeds.pop(victim)
            self._ids.discard(dropped.id)

    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.seeds], dtype=float)

    def mean_energy(self) -> float:
        return float(np.mean(self.energies())) if self.seeds else 0.0

    def median_energy(self) -> float:
        return float(np.median(self.energies())) if self.seeds else 0.0


@dataclass
class CrashRecord:
    """A crash-triggering initial state and what is needed to replay it."""

    s0: np.ndarray
    crash_step: int
    cumulative_reward: float
    rng_seed: int
    env: str
    iteration: int
    wall_clock_offset: float
    horizon: int

    def to_dict(self) -> dict:
        return {
            "s0": [float(v) for v in self.s0],
            "crash_step": self.crash_step,
            "cumulative_reward": self.cumulative_reward,
            "rng_seed": self.rng_seed,
            "env": self.env,
            "iteration": self.iteration,
            "wall_clock_offset": self.wall_clock_offset,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrashRecord":
        crash_step = int(d["crash_step"])
        # records from other tools may omit horizon; crash_step + 1 states
        # suffice to reproduce the crash
        return cls(
            s0=np.asarray(d["s0"], dtype=float),
            crash_step=crash_step,
            cumulative_reward=float(d["cumulative_reward"]),
            rng_seed=int(d["rng_seed"]),
            env=str(d["env"]),
            iteration=int(d["iteration"]),
            wall_clock_offset=float(d["wall_clock_offset"]),
            horizon=int(d.get("horizon", crash_step + 1)),
        )


@dataclass
class StatsRow:
    elapsed_s: float
    iterations: int
    mutations: int
    crashes: int
    corpus_size: int
    mean_energy: float
    last_density: float | None = None

    def csv_line(self) -> str:
        return artifacts.stats_csv_line(
            self.elapsed_s, self.iterations, self.mutations, self.crashes,
            self.corpus_size, self.mean_energy)


@dataclass
class CampaignConfig:
    """Everything a campaign needs; round-trips through config.json."""

    env_name: str
    corpus_size: int = 50
    horizon: int | None = None
    budget_iterations: int | None = None
    budget_seconds: float | None = None
    n_components: int = DEFAULT_N_COMPONENTS
    tau: float = DEFAULT_TAU
    gamma: float = DEFAULT_GAMMA
    beta: float = DEFAULT_BETA
    delta_sens: float = DEFAULT_DELTA_SENS
    rng_seed: int = 0
    density_guidance: bool = True
    responsibility_normalization: bool = True
    lanes: int = 1
    mutation_retries: int = 16
    sensitivity_retries: int = 8
    corpus_capacity: int | None = None
    env_overrides: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.corpus_size < 1:
            raise ConfigError("corpus_size must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.budget_iterations is None and self.budget_seconds is None:
            raise ConfigError(
                "set a budget: budget_iterations or budget_seconds")
        if self.budget_iterations is not None and self.budget_iterations < 0:
            raise ConfigError("budget_iterations must be >= 0")
        if self.budget_seconds is not None and self.budget_seconds < 0:
            raise ConfigError("budget_seconds must be >= 0")
        if self.n_components < 1:
            raise ConfigError("n_components must be >= 1")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        if not 0.0 < self.delta_sens <= 1.0:
            raise ConfigError("delta_sens must lie in (0, 1]")
        if self.lanes < 1:
            raise ConfigError("lanes must be >= 1")

    def to_dict(self) -> dict:
        return {
            "env_name": self.env_name,
            "corpus_size": self.corpus_size,
            "horizon": self.horizon,
            "budget_iterations": self.budget_iterations,
            "budget_seconds": self.budget_seconds,
            "n_components": self.n_components,
            "tau": self.tau,
            "gamma": self.gamma,
            "beta": self.beta,
            "delta_sens": self.delta_sens,
            "rng_seed": self.rng_seed,
            "density_guidance": self.density_guidance,
            "responsibility_normalization": self.responsibility_normalization,
            "lanes": self.lanes,
            "mutation_retries": self.mutation_retries,
            "sensitivity_retries": self.sensitivity_retries,
            "corpus_capacity": self.corpus_capacity,
            "env_overrides": dict(self.env_overrides),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        kwargs = {k: v for k, v in d.items() if k in known}
        if "env_name" not in kwargs:
            raise ConfigError("config is missing env_name")
        return cls(**kwargs)


# --- scheduling / mutation ------------------------------------------------------

def select_seed(corpus: Corpus, rng: np.random.Generator) -> Seed:
    """Energy-proportional seed choice; uniform when every energy is zero."""
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot select from an empty corpus")
    energies = corpus.energies()
    total = float(np.sum(energies))
    if total <= 0.0:
        idx = int(rng.integers(n))
    else:
        idx = int(rng.choice(n, p=energies / total))
    return corpus.seeds[idx]


def mutate(seed: Seed, env: Environment, rng: np.random.Generator,
           beta: float = DEFAULT_BETA, retries: int = 16) -> np.ndarray:
    """Perturb a seed's initial state inside the legitimate state space.

    Per mutable dimension, uniform in +/- beta x (bound width), clamped to
    bounds; candidates the validator rejects are redrawn.

    :raises MutationExhausted: after ``retries`` rejected candidates
    """
    widths = env.spec.widths
    mask = env.mutable_mask
    for _ in range(max(1, retries)):
        step = rng.uniform(-beta, beta, size=env.spec.state_dim) * widths
        step[~mask] = 0.0
        candidate = env.clip_to_bounds(seed.s0 + step)
        if env.validate(candidate):
            return candidate
    raise MutationExhausted(
        f"seed {seed.id}: no valid mutant in {retries} draws")


# --- campaign -------------------------------------------------------------------

class _Clock:
    """Wall clock, or a frozen clock for deterministic iteration budgets."""

    def __init__(self, virtual: bool, already_elapsed: float = 0.0):
        self.virtual = virtual
        self._base = already_elapsed
        self._t0 = time.monotonic()

    def elapsed(self) -> float:
        if self.virtual:
            return 0.0
        return self._base + (time.monotonic() - self._t0)


@dataclass
class _Job:
    """One dispatched loop iteration (mutant may be None when mutation
    was exhausted)."""

    iteration: int
    parent: Seed
    mutant: np.ndarray | None
    rollout_seed: int


class Campaign:
    """Owns corpus, density model, crash set and stats for one campaign.

    All mutation of shared state happens on the coordinator (the thread
    calling :meth:`run`); worker lanes only execute rollouts.
    """

    def __init__(self, config: CampaignConfig, env: Environment):
        config.validate()
        self.config = config
        self.env = env
        self.policy: Policy = env.policy()
        self.horizon = config.horizon or env.spec.default_horizon
        self.factory = StreamFactory(config.rng_seed)
        self.corpus = Corpus(capacity=config.corpus_capacity)
        self.estimator: DensityEstimator | None = None
        self.crashes: list[CrashRecord] = []
        self.stats_rows: list[StatsRow] = []
        self.iteration = 0
        self.mutations = 0
        self._next_seed_id = 0
        self._clock = _Clock(virtual=config.budget_iterations is not None)
        self._checkpoint: Callable[["Campaign"], None] | None = None

    # --- initialization ---

    def initialize(self) -> None:
        """Sample, roll out and weigh the initial corpus; seed the mixtures."""
        cfg = self.config
        states: list[np.ndarray] = []
        attempts, cap = 0, cfg.corpus_size * 100
        while len(states) < cfg.corpus_size:
            attempts += 1
            if attempts > cap:
                raise SamplingExhausted(
                    f"validator rejected too many samples "
                    f"({attempts - len(states)} of {attempts})")
            s = self.env.sample_initial(self.factory.next_seed("sample"))
            if self.env.validate(s):
                states.append(np.asarray(s, dtype=float))
        rollouts = [self.env.rollout(self.policy, s0, self.horizon,
                                     self.factory.next_seed("rollout"))
                    for s0 in states]
        # Mixture statistics seed from the first rollout; the standardization
        # draws on every initial rollout so that state coordinates an
        # individual trajectory holds constant still get a meaningful scale.
        # Built even when density guidance is off so a guided run and its
        # baseline consume identical random streams and stay step-for-step
        # comparable until the first density retention.
        self.estimator = DensityEstimator.from_states(
            cfg.n_components, self.env.spec.state_dim, rollouts[0].states,
            cfg.tau, cfg.gamma, self.factory.next_stream("dynem-init"),
            normalize=cfg.responsibility_normalization,
            norm_states=np.concatenate([r.states for r in rollouts]))
        for s0, base in zip(states, rollouts):
            dens = self.estimator.score_and_maybe_update(base.states)
            self.corpus.add(Seed(
                id=self._take_seed_id(),
                s0=s0,
                reward=base.cumulative_reward,
                energy=self._fresh_energy(s0, base),
                step_density=dens.step_density,
                raw_log_density=dens.raw_log_density,
                parent_id=None,
                created_at_iteration=0,
            ))

    def _take_seed_id(self) -> int:
        i = self._next_seed_id
        self._next_seed_id += 1
        return i

    def _fresh_energy(self, s0: np.ndarray, base: RolloutResult) -> float:
        cfg = self.config
        try:
            est = sensitivity(
                self.env, self.policy, s0, self.horizon, base.rng_seed,
                self.factory.next_stream("sens"), delta=cfg.delta_sens,
                retries=cfg.sensitivity_retries, base=base)
            return est.energy
        except PerturbationRejected:
            # no admissible probe: fall back to a typical corpus energy
            return self.corpus.median_energy()

    # --- the loop ---

    def run(self, checkpoint: Callable[["Campaign"], None] | None = None
            ) -> None:
        """Run until the budget is exhausted. ``checkpoint`` is called at the
        checkpoint cadence and once at the end."""
        if len(self.corpus) == 0:
            raise EmptyCorpus("initialize() must run before run()")
        self._checkpoint = checkpoint
        if self.config.lanes == 1:
            self._run_serial()
        else:
            self._run_lanes()
        self._emit_stats()
        if self._checkpoint:
            self._checkpoint(self)

    def _budget_allows(self, next_iteration: int) -> bool:
        cfg = self.config
        if cfg.budget_iterations is not None:
            return next_iteration <= cfg.budget_iterations
        return self._clock.elapsed() < cfg.budget_seconds

    def _run_serial(self) -> None:
        while self._budget_allows(self.iteration + 1):
            job = self._prepare()
            result = None
            if job.mutant is not None:
                result = self.env.rollout(self.policy, job.mutant,
                                          self.horizon, job.rollout_seed)
            self._apply(job, result)

    def _run_lanes(self) -> None:
        lanes = self.config.lanes
        pending: deque = deque()
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            while True:
                while (len(pending) < lanes
                       and self._budget_allows(self.iteration + 1)):
                    job = self._prepare()
                    if job.mutant is None:
                        pending.append((job, None))
                    else:
                        fut = pool.submit(self.env.rollout, self.policy,
                                          job.mutant, self.horizon,
                                          job.rollout_seed)
                        pending.append((job, fut))
                if not pending:
                    break
                job, fut = pending.popleft()
                self._apply(job, fut.result() if fut is not None else None)

    def _prepare(self) -> _Job:
        self.iteration += 1
        parent = select_seed(self.corpus, self.factory.next_stream("select"))
        mutant: np.ndarray | None = None
        try:
            mutant = mutate(parent, self.env,
                            self.factory.next_stream("mutate"),
                            beta=self.config.beta,
                            retries=self.config.mutation_retries)
        except MutationExhausted:
            pass  # the iteration is spent; a different seed comes up next
        return _Job(iteration=self.iteration, parent=parent, mutant=mutant,
                    rollout_seed=self.factory.next_seed("rollout"))

    def _apply(self, job: _Job, result: RolloutResult | None) -> None:
        cfg = self.config
        crashed = False
        density = None
        if result is not None:
            self.mutations += 1
            if self.estimator is not None:
                density = self.estimator.score_and_maybe_update(result.states)
            if result.crashed:
                crashed = True
                self.crashes.append(CrashRecord(
                    s0=result.initial_state,
                    crash_step=int(result.crash_step),
                    cumulative_reward=result.cumulative_reward,
                    rng_seed=result.rng_seed,
                    env=self.env.spec.name,
                    iteration=job.iteration,
                    wall_clock_offset=round(self._clock.elapsed(), 3),
                    horizon=self.horizon,
                ))
            else:
                novel = (cfg.density_guidance and density is not None
                         and density.step_density < cfg.tau)
                if result.cumulative_reward < job.parent.reward or novel:
                    self.corpus.add(Seed(
                        id=self._take_seed_id(),
                        s0=np.asarray(job.mutant, dtype=float),
                        reward=result.cumulative_reward,
                        energy=self._fresh_energy(job.mutant, result),
                        step_density=(density.step_density
                                      if density else None),
                        raw_log_density=(density.raw_log_density
                                         if density else None),
                        parent_id=job.parent.id,
                        created_at_iteration=job.iteration,
                    ))
        if crashed or job.iteration % STATS_EVERY == 0:
            self._emit_stats(
                last_density=density.step_density if density else None)
        if self._checkpoint and job.iteration % CHECKPOINT_EVERY == 0:
            self._checkpoint(self)

    def _emit_stats(self, last_density: float | None = None) -> None:
        self.stats_rows.append(StatsRow(
            elapsed_s=self._clock.elapsed(),
            iterations=self.iteration,
            mutations=self.mutations,
            crashes=len(self.crashes),
            corpus_size=len(self.corpus),
            mean_energy=self.corpus.mean_energy(),
            last_density=last_density,
        ))

    # --- persistence ---

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        artifacts.write_json(out / "config.json", self.resolved_config())
        artifacts.write_jsonl(out / "crashes.jsonl",
                              (c.to_dict() for c in self.crashes))
        artifacts.write_jsonl(out / "corpus.jsonl",
                              (s.to_dict() for s in self.corpus))
        artifacts.write_stats_csv(out / "stats.csv",
                                  (r.csv_line() for r in self.stats_rows))
        if self.estimator is not None:
            self.estimator.save(out / "dynem.snapshot")
        artifacts.write_json(out / "resume.json", {
            "iteration": self.iteration,
            "mutations": self.mutations,
            "next_seed_id": self._next_seed_id,
            "stream_counters": self.factory.counters(),
            "elapsed_s": round(self._clock.elapsed(), 3),
            "stats": [
                [r.elapsed_s, r.iterations, r.mutations, r.crashes,
                 r.corpus_size, r.mean_energy] for r in self.stats_rows
            ],
        })

    def resolved_config(self) -> dict:
        d = self.config.to_dict()
        d["horizon"] = self.horizon  # echo the resolved value
        return d

    @classmethod
    def resume(cls, out_dir: str | Path, env: Environment) -> "Campaign":
        """Rebuild a campaign from its artifact directory and keep going."""
        out = Path(out_dir)
        config = CampaignConfig.from_dict(artifacts.read_json(
            out / "config.json"))
        state = artifacts.read_json(out / "resume.json")
        campaign = cls(config, env)
        campaign.factory = StreamFactory(config.rng_seed,
                                         state["stream_counters"])
        for row in artifacts.read_jsonl(out / "corpus.jsonl"):
            campaign.corpus.add(Seed.from_dict(row))
        for row in artifacts.read_jsonl(out / "crashes.jsonl"):
            campaign.crashes.append(CrashRecord.from_dict(row))
        snapshot = out / "dynem.snapshot"
        if snapshot.exists():
            campaign.estimator = DensityEstimator.load(snapshot)
        campaign.iteration = int(state["iteration"])
        campaign.mutations = int(state["mutations"])
        campaign._next_seed_id = int(state["next_seed_id"])
        campaign.stats_rows = [
            StatsRow(elapsed_s=r[0], iterations=int(r[1]),
                     mutations=int(r[2]), crashes=int(r[3]),
                     corpus_size=int(r[4]), mean_energy=r[5])
            for r in state.get("stats", [])
        ]
        campaign._clock = _Clock(
            virtual=config.budget_iterations is not None,
            already_elapsed=float(state.get("elapsed_s", 0.0)))
        return campaign
