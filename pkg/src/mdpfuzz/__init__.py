"""Blackbox fuzz testing for agent policies solving Markov decision
processes.

The fuzzer mutates only initial states, schedules seeds by reward
sensitivity, and steers exploration with an online Gaussian-mixture density
over state sequences: low-density (fresh) trajectories and reward drops are
kept for further mutation, oracle-firing states are reported as crashes.
"""

__version__ = "0.1.0"

from .density import (DensityEstimator, DynEmPair, DynEmState, GmmDensity,
                      GmmParams, SequenceDensity, dynem_update, get_gmm_params,
                      gmm_pdf, init_dynem, log_gmm_pdf, seq_density,
                      update_params)
from .fuzzer import (Campaign, CampaignConfig, Corpus, CrashRecord, Seed,
                     mutate, select_seed)
from .mdp import Environment, EnvironmentSpec, Policy, RolloutResult, rollout
from .sensitivity import EnergyEstimate, energy_from, sensitivity

__all__ = [
    "__version__",
    "Campaign", "CampaignConfig", "Corpus", "CrashRecord", "Seed",
    "mutate", "select_seed",
    "DensityEstimator", "DynEmPair", "DynEmState", "GmmDensity", "GmmParams",
    "SequenceDensity", "dynem_update", "get_gmm_params", "gmm_pdf",
    "init_dynem", "log_gmm_pdf", "seq_density", "update_params",
    "Environment", "EnvironmentSpec", "Policy", "RolloutResult", "rollout",
    "EnergyEstimate", "energy_from", "sensitivity",
]
