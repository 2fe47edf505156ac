"""Per-pixel classification, cluster extraction and pick generation."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .micrograph_io import Micrograph, Pick
from .references import build_integral_images, sliding_window_stats
from .svm import SvmModel, decision

__all__ = [
    "Cluster",
    "classify_pixels",
    "connected_components",
    "disk",
    "erode",
    "filter_clusters",
    "enforce_separation",
    "make_picks",
]

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Cluster:
    pixel_count: int
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)
    centroid: tuple[float, float]  # (row, col)
    label: int = 0

    @property
    def max_diameter(self) -> int:
        return max(self.bbox[2] - self.bbox[0], self.bbox[3] - self.bbox[1])


def classify_pixels(m, model: SvmModel, n: int, threads: int = 1, rows_per_task: int = 64) -> np.ndarray:
    """Label each pixel by the SVM decision on the ``n x n`` window centred on it.

    The window with top-left ``(i, j)`` is attributed to pixel
    ``(i + n // 2, j + n // 2)``; pixels that are not such a centre stay 0.
    """
    data = m.data if isinstance(m, Micrograph) else np.asarray(m, dtype=np.float64)
    h, w = data.shape
    mask = np.zeros((h, w), dtype=np.uint8)
    if h < n or w < n:
        return mask
    means, variances = sliding_window_stats(build_integral_images(data), n)
    stds = np.sqrt(variances)
    half = n // 2
    nr, nc = means.shape

    def band(r0: int) -> None:
        r1 = min(nr, r0 + rows_per_task)
        feats = np.stack([means[r0:r1].ravel(), stds[r0:r1].ravel()], axis=1)
        labels = decision(model, feats) > 0
        mask[r0 + half : r1 + half, half : half + nc] = labels.reshape(r1 - r0, nc)

    starts = range(0, nr, rows_per_task)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(band, starts))
    else:
        for r0 in starts:
            band(r0)
    return mask


def connected_components(mask: np.ndarray) -> list[Cluster]:
    """8-connected components of a binary mask."""
    labels, count = ndimage.label(np.asarray(mask) > 0, structure=_EIGHT)
    if count == 0:
        return []
    flat = labels.ravel()
    rows, cols = np.indices(labels.shape)
    sizes = np.bincount(flat, minlength=count + 1)
    row_sum = np.bincount(flat, weights=rows.ravel(), minlength=count + 1)
    col_sum = np.bincount(flat, weights=cols.ravel(), minlength=count + 1)
    clusters = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        clusters.append(Cluster(
            pixel_count=int(sizes[lab]),
            bbox=(sl[0].start, sl[1].start, sl[0].stop, sl[1].stop),
            centroid=(row_sum[lab] / sizes[lab], col_sum[lab] / sizes[lab]),
            label=lab,
        ))
    return clusters


def disk(radius: float) -> np.ndarray:
    """Discrete Euclidean disk: offsets with ``dy**2 + dx**2 <= radius**2``."""
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return yy * yy + xx * xx <= radius * radius


def erode(mask: np.ndarray, radius: float, structure: np.ndarray | None = None) -> np.ndarray:
    """Binary erosion by a disk; pixels outside the image count as background."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    se = disk(radius) if structure is None else np.asarray(structure, dtype=bool)
    out = ndimage.binary_erosion(np.asarray(mask) > 0, structure=se, border_value=0)
    return out.astype(np.uint8)


def filter_clusters(clusters, min_pixels: float = 0, max_pixels: float = np.inf,
                    min_diameter: float = 0, max_diameter: float = np.inf) -> list[Cluster]:
    if min_pixels > max_pixels or min_diameter > max_diameter:
        raise ValueError("filter minimum exceeds maximum")
    return [c for c in clusters
            if min_pixels <= c.pixel_count <= max_pixels
            and min_diameter <= c.max_diameter <= max_diameter]


def enforce_separation(clusters, min_center_distance: float) -> list[Cluster]:
    """Drop every cluster whose centroid is closer than the threshold to another one."""
    if min_center_distance < 0:
        raise ValueError("min_center_distance must be non-negative")
    if len(clusters) < 2 or min_center_distance == 0:
        return list(clusters)
    centers = np.array([c.centroid for c in clusters])
    tree = cKDTree(centers)
    close = np.zeros(len(clusters), dtype=bool)
    for i, j in tree.query_pairs(min_center_distance):
        if np.hypot(*(centers[i] - centers[j])) < min_center_distance:
            close[i] = close[j] = True
    return [c for c, bad in zip(clusters, close) if not bad]


def make_picks(m: Micrograph, clusters, particle_size: int) -> list[Pick]:
    """Boxes of ``particle_size`` original pixels around each cluster centroid.

    Picks whose box would leave the original micrograph are dropped.
    """
    height, width = m.original_shape
    half = particle_size / 2.0
    picks = []
    for c in clusters:
        row, col = m.to_original(*c.centroid)
        row, col = float(row), float(col)
        if col - half < 0 or row - half < 0 or col + half > width or row + half > height:
            continue
        picks.append(Pick(center_x=col, center_y=row, box_size=int(particle_size),
                          score=float(c.pixel_count)))
    return picks
