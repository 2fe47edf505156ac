"""Turn query scores into particle/noise training windows for the classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .micrograph_io import Micrograph
from .references import build_integral_images, sliding_window_stats
from .response import QuerySet, ScoreField

__all__ = [
    "TrainingSet",
    "EmptyClassError",
    "top_count",
    "particle_regions",
    "noise_regions",
    "extract_training",
]


class EmptyClassError(ValueError):
    """A training class ended up with no windows; ``which`` is "particle" or "noise"."""

    def __init__(self, which: str):
        super().__init__(f"{which} class empty")
        self.which = which


@dataclass(frozen=True)
class TrainingSet:
    features: np.ndarray  # (N, 2): window mean, window std
    labels: np.ndarray  # (N,) 1 = particle, 0 = noise
    feature_mean: np.ndarray
    feature_std: np.ndarray
    positions: np.ndarray | None = None

    @classmethod
    def from_features(cls, features, labels, positions=None) -> "TrainingSet":
        x = np.asarray(features, dtype=np.float64).reshape(-1, 2)
        y = np.asarray(labels, dtype=np.int64).ravel()
        if len(x) != len(y):
            raise ValueError("features and labels differ in length")
        if not (np.any(y == 1) and np.any(y == 0)):
            raise EmptyClassError("particle" if not np.any(y == 1) else "noise")
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(x, y, mu, sd, positions)

    def standardized(self) -> np.ndarray:
        return (self.features - self.feature_mean) / self.feature_std

    @property
    def n_particle(self) -> int:
        return int(np.count_nonzero(self.labels == 1))

    @property
    def n_noise(self) -> int:
        return int(np.count_nonzero(self.labels == 0))


def top_count(tau: float, total: int) -> int:
    """Number of queries in the top ``tau`` percent (rounded up)."""
    if not 0 < tau <= 100:
        raise ValueError(f"percentage must lie in (0, 100], got {tau}")
    # round() guards against 5 * 20000 / 100 landing a hair above an integer
    return min(total, math.ceil(round(tau * total / 100.0, 9)))


def _top_queries(scores: ScoreField, tau: float) -> np.ndarray:
    order = np.argsort(-scores.k, kind="stable")
    return order[: top_count(tau, scores.size)]


def _union(queries: QuerySet, indices) -> np.ndarray:
    mask = np.zeros(queries.image_shape, dtype=bool)
    n = queries.n
    for r, c in queries.positions[indices]:
        mask[r : r + n, c : c + n] = True
    return mask


def particle_regions(queries: QuerySet, scores: ScoreField, tau1: float) -> np.ndarray:
    return _union(queries, _top_queries(scores, tau1))


def noise_regions(queries: QuerySet, scores: ScoreField, tau2: float) -> np.ndarray:
    """Pixels covered by some query but by none of the top ``tau2`` percent."""
    covered = _union(queries, slice(None))
    return covered & ~_union(queries, _top_queries(scores, tau2))


def _grid_windows_inside(mask: np.ndarray, n: int) -> np.ndarray:
    """Top-left corners of stride-``n`` grid windows lying entirely inside ``mask``."""
    h, w = mask.shape
    if h < n or w < n:
        return np.empty((0, 2), dtype=np.int64)
    means, _ = sliding_window_stats(build_integral_images(mask.astype(np.float64)), n, stride=n)
    rows, cols = np.nonzero(means > 1.0 - 1e-9)
    return np.stack([rows * n, cols * n], axis=1)


def extract_training(m, particle_mask: np.ndarray, noise_mask: np.ndarray, n: int) -> TrainingSet:
    data = m.data if isinstance(m, Micrograph) else np.asarray(m, dtype=np.float64)
    if particle_mask.shape != data.shape or noise_mask.shape != data.shape:
        raise ValueError("masks must match the micrograph shape")
    pos1 = _grid_windows_inside(particle_mask, n)
    pos2 = _grid_windows_inside(noise_mask, n)
    if len(pos1) == 0:
        raise EmptyClassError("particle")
    if len(pos2) == 0:
        raise EmptyClassError("noise")
    means, variances = sliding_window_stats(build_integral_images(data), n, stride=n)
    positions = np.concatenate([pos1, pos2])
    gr, gc = positions[:, 0] // n, positions[:, 1] // n
    features = np.stack([means[gr, gc], np.sqrt(variances[gr, gc])], axis=1)
    labels = np.concatenate([np.ones(len(pos1), dtype=np.int64), np.zeros(len(pos2), dtype=np.int64)])
    return TrainingSet.from_features(features, labels, positions)
