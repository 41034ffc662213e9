"""Exception types shared across the package.

Grouped by the boundary they belong to so callers can catch at the right
granularity: configuration problems, environment/rollout problems, density
model problems, and bridge (remote environment) problems.
"""

from __future__ import annotations


class MdpFuzzError(Exception):
    """Base class for every error raised by this package."""


# --- configuration ---------------------------------------------------------

class ConfigError(MdpFuzzError):
    """Invalid campaign or CLI configuration."""


# --- environments / rollouts ----------------------------------------------

class EnvironmentError_(MdpFuzzError):
    """Base class for environment-side failures."""


class InvalidInitialState(EnvironmentError_):
    """Initial state rejected by the environment's validator."""


class NonFiniteState(EnvironmentError_):
    """A transition produced NaN or infinity."""


class SamplingExhausted(EnvironmentError_):
    """Too many sampler draws rejected by the validator."""


class MutationExhausted(MdpFuzzError):
    """Every mutation attempt for a seed was rejected by the validator."""


class EmptyCorpus(MdpFuzzError):
    """Selection from a corpus with no seeds."""


class PerturbationRejected(MdpFuzzError):
    """No admissible sensitivity perturbation found within the retry budget."""


# --- density model ----------------------------------------------------------

class DensityError(MdpFuzzError):
    """Base class for Gaussian-mixture / streaming-update failures."""


class DimensionMismatch(DensityError):
    """Input dimensionality disagrees with the model."""


class NonPositiveDefiniteCovariance(DensityError):
    """A covariance matrix could not be Cholesky-factorised."""


class DegenerateComponent(DensityError):
    """A mixture component's weight statistic collapsed to (near) zero."""


class SnapshotError(DensityError):
    """A density snapshot file is missing, corrupt, or version-incompatible."""


# --- detector ----------------------------------------------------------------

class EmptyInput(MdpFuzzError):
    """Detector fit/eval called with no data."""


# --- bridge ------------------------------------------------------------------

class BridgeError(MdpFuzzError):
    """Base class for remote-environment failures."""


class ProtocolError(BridgeError):
    """Malformed frame, id mismatch, or unsupported protocol version."""


class RemoteError(BridgeError):
    """The peer answered with an error response."""


class BridgeTimeout(BridgeError):
    """The peer did not answer within the configured timeout."""
