"""Online Gaussian-mixture density of state sequences.

Two mixtures score a trajectory: one over single states (dimension d) and one
over concatenated transition pairs (dimension 2d). The log density of a
sequence {S_0..S_{L-1}} factors as

    log p = log g_s(S_0) + sum_{t=0}^{L-2} [log g_c(S_t || S_{t+1}) - log g_s(S_t)]

where g_s / g_c are the single / concatenated mixtures. Both mixtures are
maintained by an exponentially-weighted streaming update over complete and
sufficient statistics per component:

    G0_k <- gamma * w_k       + (1 - gamma) * G0_k
    G1_k <- gamma * w_k x     + (1 - gamma) * G1_k
    G2_k <- gamma * w_k x x^T + (1 - gamma) * G2_k

from which weights, means and covariances are recovered in closed form. The
cost of scoring one trajectory is constant in the number of trajectories seen
so far — only the K components are touched.

All Gaussian evaluation is done in log space through Cholesky factors; raw
determinants or densities are never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import (DegenerateComponent, DimensionMismatch,
                     NonPositiveDefiniteCovariance, SnapshotError)

# Diagonal loading applied to every covariance recovered from statistics.
EPS_COV = 1e-6
# Below this weight statistic a component is considered collapsed.
EPS_WEIGHT = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))
# exp() exponent cap keeping step densities finite (and JSON-serializable)
# even when a component has collapsed onto near-duplicate states; ordering
# anywhere near a practical tau is unaffected.
_MAX_EXPONENT = 700.0

_SNAPSHOT_VERSION = 1


# --- GMM parameters and evaluation -------------------------------------------

@dataclass
class GmmParams:
    """Weights (K,), means (K, d) and covariances (K, d, d) of a mixture."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


class GmmDensity:
    """A mixture frozen for evaluation: Cholesky factors precomputed once.

    Scoring N points costs K triangular solves on an (N, d) block — no
    determinants, no matrix inversions.
    """

    def __init__(self, params: GmmParams):
        k, d = params.n_components, params.dim
        self.params = params
        self._chol = np.empty((k, d, d))
        self._log_norm = np.empty(k)  # -d/2 log 2pi - sum log diag L_k
        for i in range(k):
            try:
                L = cholesky(params.covariances[i], lower=True)
            except np.linalg.LinAlgError as exc:
                raise NonPositiveDefiniteCovariance(
                    f"component {i} covariance is not positive definite"
                ) from exc
            self._chol[i] = L
            self._log_norm[i] = (-0.5 * d * _LOG_2PI
                                 - np.sum(np.log(np.diag(L))))
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(params.weights)

    def log_component_pdfs(self, x: np.ndarray) -> np.ndarray:
        """(N, K) matrix of log N(x_n | mu_k, Sigma_k)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.params.dim:
            raise DimensionMismatch(
                f"input dim {x.shape[1]} != model dim {self.params.dim}")
        k = self.params.n_components
        out = np.empty((x.shape[0], k))
        for i in range(k):
            diff = x - self.params.means[i]
            z = solve_triangular(self._chol[i], diff.T, lower=True)
            out[:, i] = self._log_norm[i] - 0.5 * np.sum(z * z, axis=0)
        return out

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(N,) log mixture densities via log-sum-exp over components."""
        lp = self.log_component_pdfs(x) + self._log_weights
        return logsumexp(lp, axis=1)

    def responsibilities(self, x: np.ndarray,
                         normalize: bool = True) -> np.ndarray:
        """(N, K) per-component responsibilities w_k(x).

        ``normalize=True`` gives the usual posterior (rows sum to 1);
        ``normalize=False`` gives the raw weighted density values
        phi_k * N(x | mu_k, Sigma_k).
        """
        lp = self.log_component_pdfs(x) + self._log_weights
        if normalize:
            return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
        return np.exp(lp)


def log_gmm_pdf(params: GmmParams, x: np.ndarray) -> np.ndarray:
    """Log mixture density of one or more points (convenience wrapper)."""
    return GmmDensity(params).log_pdf(x)


def gmm_pdf(params: GmmParams, x: np.ndarray) -> np.ndarray:
    """Mixture density of one or more points. Prefer log_gmm_pdf for scoring."""
    return np.exp(log_gmm_pdf(params, x))


# --- streaming statistics -----------------------------------------------------

@dataclass
class DynEmState:
    """Per-component complete and sufficient statistics of one mixture.

    ``g0`` (K,) accumulates responsibilities, ``g1`` (K, d) responsibility-
    weighted observations, ``g2`` (K, d, d) responsibility-weighted outer
    products. ``last_x`` is the most recent observation, kept for re-seeding
    collapsed components.
    """

    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    gamma: float
    last_x: np.ndarray | None = None

    @property
    def n_components(self) -> int:
        return self.g0.shape[0]

    @property
    def dim(self) -> int:
        return self.g1.shape[1]

    def copy(self) -> "DynEmState":
        return DynEmState(self.g0.copy(), self.g1.copy(), self.g2.copy(),
                          self.gamma,
                          None if self.last_x is None else self.last_x.copy())


@dataclass
class DynEmPair:
    """The two mixtures scoring a sequence: single states and state pairs."""

    single: DynEmState
    concat: DynEmState


def update_params(stats: DynEmState, w: np.ndarray,
                  x: np.ndarray) -> DynEmState:
    """Fold one observation with responsibilities ``w`` into the statistics.

    Pure: returns a new state, inputs untouched.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != stats.dim:
        raise DimensionMismatch(
            f"observation dim {x.shape[0]} != stats dim {stats.dim}")
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != stats.n_components:
        raise DimensionMismatch(
            f"got {w.shape[0]} responsibilities for "
            f"{stats.n_components} components")
    g = stats.gamma
    keep = 1.0 - g
    g0 = g * w + keep * stats.g0
    g1 = g * w[:, None] * x + keep * stats.g1
    g2 = g * w[:, None, None] * np.outer(x, x) + keep * stats.g2
    return DynEmState(g0, g1, g2, stats.gamma, x.copy())


def get_gmm_params(stats: DynEmState, eps_cov: float = EPS_COV) -> GmmParams:
    """Recover mixture parameters from the accumulated statistics.

    phi_k = G0_k / sum G0, mu_k = G1_k / G0_k,
    Sigma_k = G2_k / G0_k - mu_k mu_k^T, then symmetrised and diagonally
    loaded with ``eps_cov``. A covariance that still fails to factorise is
    replaced by its own diagonal (a Gaussian never has zero mass anywhere, so
    the fallback keeps every component scorable).

    :raises DegenerateComponent: some G0_k <= EPS_WEIGHT
    """
    if np.any(stats.g0 <= EPS_WEIGHT):
        bad = int(np.argmin(stats.g0))
        raise DegenerateComponent(
            f"component {bad} weight statistic {stats.g0[bad]:.3e} <= "
            f"{EPS_WEIGHT:.0e}")
    weights = stats.g0 / np.sum(stats.g0)
    means = stats.g1 / stats.g0[:, None]
    k, d = stats.n_components, stats.dim
    covs = np.empty((k, d, d))
    eye = np.eye(d)
    for i in range(k):
        c = stats.g2[i] / stats.g0[i] - np.outer(means[i], means[i])
        c = 0.5 * (c + c.T) + eps_cov * eye
        try:
            cholesky(c, lower=True)
        except np.linalg.LinAlgError:
            c = np.diag(np.maximum(np.diag(c), eps_cov))
        covs[i] = c
    return GmmParams(weights, means, covs)


def init_dynem(n_components: int, dim: int, seed_states: np.ndarray,
               gamma: float, rng: np.random.Generator) -> DynEmPair:
    """Initialise both mixtures' statistics from one observed trajectory.

    Component means are seeded at states drawn from ``seed_states`` (without
    replacement when possible), covariances at the per-dimension sample
    variance floored at 1, and every component starts with weight statistic
    1/K. The pair mixture is seeded from the trajectory's consecutive
    concatenated pairs (a lone state is paired with itself).
    """
    states = np.atleast_2d(np.asarray(seed_states, dtype=float))
    if states.shape[1] != dim:
        raise DimensionMismatch(
            f"seed states dim {states.shape[1]} != {dim}")
    if states.shape[0] < 1:
        raise ValueError("need at least one seed state")
    if n_components < 1:
        raise ValueError("need at least one component")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if states.shape[0] >= 2:
        pairs = np.hstack([states[:-1], states[1:]])
    else:
        pairs = np.hstack([states, states])

    def _seed_one(pool: np.ndarray) -> DynEmState:
        n, d = pool.shape
        replace = n < n_components
        idx = rng.choice(n, size=n_components, replace=replace)
        var = np.maximum(np.var(pool, axis=0), 1.0)
        base_cov = np.diag(var)
        g0 = np.full(n_components, 1.0 / n_components)
        g1 = g0[:, None] * pool[idx]
        g2 = np.empty((n_components, d, d))
        for i, j in enumerate(idx):
            g2[i] = g0[i] * (np.outer(pool[j], pool[j]) + base_cov)
        return DynEmState(g0, g1, g2, gamma, pool[-1].copy())

    return DynEmPair(single=_seed_one(states), concat=_seed_one(pairs))


# --- sequence scoring ---------------------------------------------------------

@dataclass
class SequenceDensity:
    """Density of one trajectory under the current pair of mixtures.

    ``raw_log_density`` is the full factored log density;
    ``step_density`` = exp(raw / max(1, L-1)) is its per-transition geometric
    mean, the quantity compared against the freshness threshold tau so one
    threshold stays meaningful across horizons.
    """

    raw_log_density: float
    step_density: float
    length: int


def _as_sequence(seq: np.ndarray, dim: int) -> np.ndarray:
    s = np.atleast_2d(np.asarray(seq, dtype=float))
    if s.shape[0] < 1:
        raise ValueError("sequence must contain at least one state")
    if s.shape[1] != dim:
        raise DimensionMismatch(f"sequence dim {s.shape[1]} != {dim}")
    return s


def seq_log_density(seq: np.ndarray, single: GmmDensity,
                    concat: GmmDensity) -> float:
    """Factored log density of a trajectory under the two mixtures."""
    states = _as_sequence(seq, single.params.dim)
    log_s = single.log_pdf(states)
    total = float(log_s[0])
    if states.shape[0] >= 2:
        pairs = np.hstack([states[:-1], states[1:]])
        log_c = concat.log_pdf(pairs)
        total += float(np.sum(log_c - log_s[:-1]))
    return total


def seq_density(seq: np.ndarray, single: GmmDensity,
                concat: GmmDensity) -> SequenceDensity:
    states = _as_sequence(seq, single.params.dim)
    raw = seq_log_density(states, single, concat)
    steps = max(1, states.shape[0] - 1)
    exponent = min(raw / steps, _MAX_EXPONENT)
    return SequenceDensity(raw_log_density=raw,
                           step_density=float(np.exp(exponent)),
                           length=states.shape[0])


def dynem_update(pair: DynEmPair, seq: np.ndarray,
                 normalize: bool = True) -> DynEmPair:
    """Fold one trajectory into both mixtures' statistics.

    Mixture parameters are fetched once at entry; every responsibility in the
    pass is computed against those frozen parameters, then observations are
    folded in sequentially in time order. Components whose weight statistic
    collapsed below EPS_WEIGHT afterwards are re-seeded at the most recent
    observation with identity covariance.

    Pure: returns a new pair.
    """
    states = _as_sequence(seq, pair.single.dim)
    new_single = _dynem_update_one(pair.single, states, normalize)
    if states.shape[0] >= 2:
        pairs = np.hstack([states[:-1], states[1:]])
        new_concat = _dynem_update_one(pair.concat, pairs, normalize)
    else:
        new_concat = pair.concat.copy()
    return DynEmPair(single=new_single, concat=new_concat)


def _dynem_update_one(stats: DynEmState, xs: np.ndarray,
                      normalize: bool) -> DynEmState:
    density = GmmDensity(get_gmm_params(stats))
    resp = density.responsibilities(xs, normalize=normalize)
    out = stats
    for t in range(xs.shape[0]):
        out = update_params(out, resp[t], xs[t])
    return _reseed_collapsed(out)


def _reseed_collapsed(stats: DynEmState) -> DynEmState:
    """Re-seed components whose weight statistic collapsed to (near) zero."""
    dead = stats.g0 < EPS_WEIGHT
    if not np.any(dead):
        return stats
    x = stats.last_x
    if x is None:
        x = np.zeros(stats.dim)
    g0 = stats.g0.copy()
    g1 = stats.g1.copy()
    g2 = stats.g2.copy()
    k = stats.n_components
    fresh = np.outer(x, x) + np.eye(stats.dim)
    for i in np.flatnonzero(dead):
        g0[i] = 1.0 / k
        g1[i] = g0[i] * x
        g2[i] = g0[i] * fresh
    return DynEmState(g0, g1, g2, stats.gamma, stats.last_x)


# --- owner object used by the fuzzer ------------------------------------------

class DensityEstimator:
    """Owns a DynEmPair, caches frozen evaluators, applies tau-gated updates.

    The fuzzer holds exactly one of these per campaign; all mutation of the
    statistics goes through it.

    :meth:`from_states` standardizes states by the per-dimension mean and
    standard deviation of the reference rollout before scoring or updating.
    That keeps one tau meaningful across environments whose raw units differ
    by orders of magnitude, and puts the variance floor of the seeding step
    exactly at the data's own spread. Rankings are unchanged (the map only
    shifts log densities by its constant Jacobian).
    """

    def __init__(self, pair: DynEmPair, tau: float, normalize: bool = True,
                 offset: np.ndarray | None = None,
                 scale: np.ndarray | None = None):
        if not 0.0 < tau:
            raise ValueError(f"tau must be positive, got {tau}")
        self.pair = pair
        self.tau = float(tau)
        self.normalize = bool(normalize)
        dim = pair.single.dim
        self.offset = (np.zeros(dim) if offset is None
                       else np.asarray(offset, dtype=float))
        self.scale = (np.ones(dim) if scale is None
                      else np.asarray(scale, dtype=float))
        self._single_density: GmmDensity | None = None
        self._concat_density: GmmDensity | None = None

    def _map(self, seq: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(seq, dtype=float))
        return (states - self.offset) * self.scale

    @classmethod
    def from_states(cls, n_components: int, dim: int, seed_states: np.ndarray,
                    tau: float, gamma: float, rng: np.random.Generator,
                    normalize: bool = True,
                    norm_states: np.ndarray | None = None
                    ) -> "DensityEstimator":
        """Seed the statistics from ``seed_states`` (one reference rollout).

        ``norm_states`` — when given, a broader pool of states (e.g. every
        initial rollout) from which the standardization is derived; a single
        trajectory often holds some coordinates constant, which would
        degenerate its standard deviation.
        """
        states = np.atleast_2d(np.asarray(seed_states, dtype=float))
        pool = (states if norm_states is None
                else np.atleast_2d(np.asarray(norm_states, dtype=float)))
        offset = pool.mean(axis=0)
        std = pool.std(axis=0)
        # dims without measurable spread stay in raw units
        floor = 1e-9 * (1.0 + np.abs(offset))
        scale = 1.0 / np.where(std > floor, std, 1.0)
        mapped = (states - offset) * scale
        pair = init_dynem(n_components, dim, mapped, gamma, rng)
        return cls(pair, tau, normalize, offset=offset, scale=scale)

    def _evaluators(self) -> tuple[GmmDensity, GmmDensity]:
        if self._single_density is None:
            self._single_density = GmmDensity(get_gmm_params(self.pair.single))
            self._concat_density = GmmDensity(get_gmm_params(self.pair.concat))
        return self._single_density, self._concat_density

    def gmm_params(self) -> tuple[GmmParams, GmmParams]:
        single, concat = self._evaluators()
        return single.params, concat.params

    def score(self, seq: np.ndarray) -> SequenceDensity:
        """Density of a trajectory; never updates the model."""
        single, concat = self._evaluators()
        return seq_density(self._map(seq), single, concat)

    def score_and_maybe_update(self, seq: np.ndarray) -> SequenceDensity:
        """Score a trajectory and fold it in iff it is fresh (below tau)."""
        dens = self.score(seq)
        if dens.step_density < self.tau:
            self.pair = dynem_update(self.pair, self._map(seq),
                                     self.normalize)
            self._single_density = None
            self._concat_density = None
        return dens

    def update(self, seq: np.ndarray) -> None:
        """Fold a trajectory in unconditionally (training use)."""
        self.pair = dynem_update(self.pair, self._map(seq), self.normalize)
        self._single_density = None
        self._concat_density = None

    # --- persistence ---

    def save(self, path: str | Path) -> None:
        """Bit-exact snapshot of the statistics (atomic: temp + rename)."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        pair = self.pair
        np.savez(
            tmp,
            version=np.int64(_SNAPSHOT_VERSION),
            tau=np.float64(self.tau),
            normalize=np.int64(self.normalize),
            gamma=np.float64(pair.single.gamma),
            offset=self.offset, scale=self.scale,
            s_g0=pair.single.g0, s_g1=pair.single.g1, s_g2=pair.single.g2,
            c_g0=pair.concat.g0, c_g1=pair.concat.g1, c_g2=pair.concat.g2,
            s_last=(pair.single.last_x if pair.single.last_x is not None
                    else np.zeros(0)),
            c_last=(pair.concat.last_x if pair.concat.last_x is not None
                    else np.zeros(0)),
        )
        # np.savez appends .npz to the temp name
        Path(str(tmp) + ".npz").rename(path)

    @classmethod
    def load(cls, path: str | Path) -> "DensityEstimator":
        path = Path(path)
        if not path.exists():
            raise SnapshotError(f"snapshot not found: {path}")
        try:
            with np.load(path) as z:
                version = int(z["version"])
                if version != _SNAPSHOT_VERSION:
                    raise SnapshotError(
                        f"snapshot version {version} unsupported "
                        f"(expected {_SNAPSHOT_VERSION})")
                gamma = float(z["gamma"])
                single = DynEmState(
                    z["s_g0"], z["s_g1"], z["s_g2"], gamma,
                    z["s_last"] if z["s_last"].size else None)
                concat = DynEmState(
                    z["c_g0"], z["c_g1"], z["c_g2"], gamma,
                    z["c_last"] if z["c_last"].size else None)
                return cls(DynEmPair(single, concat), float(z["tau"]),
                           bool(int(z["normalize"])),
                           offset=z["offset"], scale=z["scale"])
        except SnapshotError:
            raise
        except Exception as exc:
            raise SnapshotError(f"snapshot unreadable: {path}: {exc}") from exc
