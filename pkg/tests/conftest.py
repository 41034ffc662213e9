"""Shared fixtures for the mdpfuzz test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from mdpfuzz.environments import make_environment


@pytest.fixture
def chain_env():
    return make_environment("chain")


@pytest.fixture
def acas_env():
    return make_environment("acas-toy")


@pytest.fixture
def coopnav_env():
    return make_environment("coopnav-toy")


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    """A scratch campaign directory, also set as MDPFUZZ_OUT."""
    target = tmp_path / "out"
    monkeypatch.setenv("MDPFUZZ_OUT", str(target))
    return target


def random_gmm(k: int, d: int, rng: np.random.Generator):
    """A well-conditioned random mixture (weights, means, covariances)."""
    weights = rng.uniform(0.5, 1.5, k)
    weights = weights / weights.sum()
    means = rng.uniform(-3.0, 3.0, (k, d))
    covs = np.empty((k, d, d))
    for i in range(k):
        a = rng.uniform(-1.0, 1.0, (d, d))
        covs[i] = a @ a.T + np.eye(d) * rng.uniform(0.5, 1.5)
    return weights, means, covs
