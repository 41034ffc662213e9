"""Mean-shift anomaly detector over behaviour feature vectors.

Feature vectors (raw states from crash vs. normal rollouts, or externally
supplied activation vectors) are clustered with flat-kernel mean-shift;
cluster centers inherit a normal/abnormal label from the majority of their
training points. A new observation's abnormality score is its distance to
the nearest normal center — far from everything normal means abnormal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import rankdata

from . import artifacts
from .errors import EmptyInput

CONVERGENCE_FACTOR = 1e-4   # a mode stops once it shifts less than this * h
MAX_ITERATIONS = 300
MERGE_FACTOR = 0.5          # modes closer than h * this collapse into one
_CHUNK = 256                # modes shifted per vectorised block

MODEL_VERSION = 1


@dataclass
class ClusterModel:
    """Fitted mean-shift centers plus which of them count as normal."""

    centers: np.ndarray            # (C, d)
    bandwidth: float
    normal_center_ids: np.ndarray  # indices into centers

    @property
    def normal_centers(self) -> np.ndarray:
        return self.centers[self.normal_center_ids]


def default_bandwidth(points: np.ndarray, max_points: int = 500,
                      rng: np.random.Generator | None = None) -> float:
    """Rule-of-thumb bandwidth: median pairwise distance of a subsample."""
    pts = _as_points(points)
    if pts.shape[0] > max_points:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(pts.shape[0], size=max_points, replace=False)
        pts = pts[idx]
    if pts.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pts)))
    return med if med > 0.0 else 1.0


def meanshift_fit(points: np.ndarray, bandwidth: float) -> ClusterModel:
    """Flat-kernel mean-shift.

    Each point's mode is iterated by averaging all points within
    ``bandwidth`` until the shift drops below CONVERGENCE_FACTOR * bandwidth
    (at most MAX_ITERATIONS sweeps); converged modes closer than
    bandwidth * MERGE_FACTOR are merged, densest first. Every center is
    considered normal until labels say otherwise (see fit_detector).
    """
    pts = _as_points(points)
    if bandwidth <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    n = pts.shape[0]
    modes = pts.copy()
    support = np.ones(n, dtype=int)  # neighbour count at convergence
    active = np.arange(n)
    tol = CONVERGENCE_FACTOR * bandwidth
    h2 = bandwidth * bandwidth
    for _ in range(MAX_ITERATIONS):
        if active.size == 0:
            break
        still = []
        for start in range(0, active.size, _CHUNK):
            idx = active[start:start + _CHUNK]
            diff = modes[idx, None, :] - pts[None, :, :]
            within = np.einsum("abc,abc->ab", diff, diff) <= h2
            counts = within.sum(axis=1)
            counts = np.maximum(counts, 1)  # a mode never strays this far
            new = (within @ pts) / counts[:, None]
            shift = np.linalg.norm(new - modes[idx], axis=1)
            modes[idx] = new
            support[idx] = counts
            still.extend(idx[shift >= tol])
        active = np.array(still, dtype=int)
    # merge converged modes, densest first
    order = np.argsort(-support, kind="stable")
    centers: list[np.ndarray] = []
    merge_dist = bandwidth * MERGE_FACTOR
    for i in order:
        if all(np.linalg.norm(modes[i] - c) >= merge_dist for c in centers):
            centers.append(modes[i])
    center_arr = np.stack(centers)
    return ClusterModel(centers=center_arr, bandwidth=float(bandwidth),
                        normal_center_ids=np.arange(center_arr.shape[0]))


def assign(model: ClusterModel, points: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each point."""
    pts = _as_points(points)
    diff = pts[:, None, :] - model.centers[None, :, :]
    return np.argmin(np.einsum("abc,abc->ab", diff, diff), axis=1)


def fit_detector(points: np.ndarray, abnormal: np.ndarray | None = None,
                 bandwidth: float | None = None) -> ClusterModel:
    """Cluster training features and mark the normal centers.

    A center is normal when at most half of its assigned training points are
    abnormal; with no labels at all, every center is normal (pure novelty
    scoring).
    """
    pts = _as_points(points)
    if bandwidth is None:
        bandwidth = default_bandwidth(pts)
    model = meanshift_fit(pts, bandwidth)
    if abnormal is not None:
        flags = np.asarray(abnormal, dtype=bool)
        if flags.shape[0] != pts.shape[0]:
            raise ValueError("one label per point required")
        which = assign(model, pts)
        normal_ids = []
        for c in range(model.centers.shape[0]):
            members = flags[which == c]
            if members.size and np.sum(members) * 2 <= members.size:
                normal_ids.append(c)
        model.normal_center_ids = np.array(normal_ids, dtype=int)
    return model


def abnormality_score(model: ClusterModel, x: np.ndarray) -> np.ndarray:
    """Distance to the nearest normal center, per input point."""
    pts = _as_points(x)
    if model.normal_center_ids.size == 0:
        return np.full(pts.shape[0], np.inf)
    diff = pts[:, None, :] - model.normal_centers[None, :, :]
    d2 = np.einsum("abc,abc->ab", diff, diff)
    return np.sqrt(np.min(d2, axis=1))


def classify(model: ClusterModel, x: np.ndarray,
             threshold: float) -> np.ndarray:
    """Boolean abnormal-flags: score strictly above the threshold."""
    return abnormality_score(model, x) > threshold


def auc_roc(scores: np.ndarray, abnormal: np.ndarray) -> float:
    """Rank-based AUC: probability a random abnormal outscores a random
    normal, counting ties as half (average ranks)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(abnormal, dtype=bool)
    n_pos = int(np.sum(y))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both abnormal and normal examples")
    ranks = rankdata(s)
    return float((np.sum(ranks[y]) - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def roc_points(scores: np.ndarray, abnormal: np.ndarray
               ) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) triples from +inf down through every score."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(abnormal, dtype=bool)
    thresholds = [np.inf] + sorted(set(s.tolist()), reverse=True)
    n_pos = max(1, int(np.sum(y)))
    n_neg = max(1, int(np.sum(~y)))
    out = []
    for t in thresholds:
        predicted = s > t
        tpr = float(np.sum(predicted & y)) / n_pos
        fpr = float(np.sum(predicted & ~y)) / n_neg
        out.append((fpr, tpr, float(t)))
    return out


# --- file formats ---------------------------------------------------------------

def read_labeled_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read `label,f0,f1,...` rows -> (points, abnormal flags)."""
    points: list[list[float]] = []
    flags: list[bool] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "label":
            raise ValueError(f"{path}: expected header label,f0,f1,...")
        for row in reader:
            if not row:
                continue
            if row[0] not in ("normal", "abnormal"):
                raise ValueError(f"{path}: bad label {row[0]!r}")
            flags.append(row[0] == "abnormal")
            points.append([float(v) for v in row[1:]])
    if not points:
        raise EmptyInput(f"{path}: no data rows")
    return np.asarray(points, dtype=float), np.asarray(flags, dtype=bool)


def write_labeled_csv(path: str | Path, points: np.ndarray,
                      abnormal: np.ndarray) -> None:
    pts = _as_points(points)
    lines = ["label," + ",".join(f"f{i}" for i in range(pts.shape[1]))]
    for row, bad in zip(pts, np.asarray(abnormal, dtype=bool)):
        label = "abnormal" if bad else "normal"
        lines.append(label + "," + ",".join(repr(float(v)) for v in row))
    artifacts.atomic_write_text(path, "\n".join(lines) + "\n")


def save_model(model: ClusterModel, path: str | Path) -> None:
    artifacts.write_json(path, {
        "version": MODEL_VERSION,
        "bandwidth": model.bandwidth,
        "centers": [[float(v) for v in c] for c in model.centers],
        "normal_center_ids": [int(i) for i in model.normal_center_ids],
    })


def load_model(path: str | Path) -> ClusterModel:
    d = artifacts.read_json(path)
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version "
                         f"{d.get('version')}")
    return ClusterModel(
        centers=np.asarray(d["centers"], dtype=float),
        bandwidth=float(d["bandwidth"]),
        normal_center_ids=np.asarray(d["normal_center_ids"], dtype=int),
    )


def write_roc_csv(path: str | Path, scores: np.ndarray,
                  abnormal: np.ndarray) -> None:
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, t in roc_points(scores, abnormal):
        lines.append(f"{fpr!r},{tpr!r},{t!r}")
    artifacts.atomic_write_text(path, "\n".join(lines) + "\n")


def _as_points(points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise EmptyInput("no points")
    return pts
