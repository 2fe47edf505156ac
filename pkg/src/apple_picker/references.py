"""Summed-area tables and container-based reference window selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .micrograph_io import Micrograph

__all__ = [
    "IntegralImages",
    "ReferenceSet",
    "CRITERIA",
    "build_integral_images",
    "window_stats",
    "sliding_window_stats",
    "select_references",
]

CRITERIA = ("min_mean", "max_mean", "min_var", "max_var")


@dataclass(frozen=True)
class IntegralImages:
    """Zero-padded cumulative sums of ``image - offset`` and its square.

    Subtracting ``offset`` (the first pixel) keeps the tables small for
    images with a large DC level and makes constant images produce exactly
    zero window sums, so ties among constant windows are exact.
    """

    sum: np.ndarray
    sum_sq: np.ndarray
    offset: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.sum.shape[0] - 1, self.sum.shape[1] - 1

    def rect_sum(self, top: int, left: int, height: int, width: int, squared: bool = False) -> float:
        t = self.sum_sq if squared else self.sum
        b, r = top + height, left + width
        return float(t[b, r] - t[top, r] - t[b, left] + t[top, left])


def _as_array(image) -> np.ndarray:
    if isinstance(image, Micrograph):
        return image.data
    return np.asarray(image, dtype=np.float64)


def build_integral_images(image) -> IntegralImages:
    data = _as_array(image)
    offset = float(data[0, 0])
    centered = data - offset
    s = np.zeros((data.shape[0] + 1, data.shape[1] + 1))
    q = np.zeros_like(s)
    np.cumsum(np.cumsum(centered, axis=0), axis=1, out=s[1:, 1:])
    np.cumsum(np.cumsum(centered * centered, axis=0), axis=1, out=q[1:, 1:])
    return IntegralImages(s, q, offset)


def window_stats(ii: IntegralImages, top_left: tuple[int, int], n: int) -> tuple[float, float]:
    """Mean and population variance of the ``n x n`` window at ``top_left``."""
    r, c = int(top_left[0]), int(top_left[1])
    h, w = ii.shape
    if n < 1 or r < 0 or c < 0 or r + n > h or c + n > w:
        raise IndexError(f"window at {(r, c)} of size {n} outside image of shape {(h, w)}")
    area = n * n
    m = ii.rect_sum(r, c, n, n) / area
    var = ii.rect_sum(r, c, n, n, squared=True) / area - m * m
    return m + ii.offset, max(var, 0.0)


def sliding_window_stats(ii: IntegralImages, n: int, stride: int = 1):
    """Mean and variance of every ``n x n`` window whose top-left lies on a ``stride`` grid.

    Returns two arrays indexed by ``[row // stride, col // stride]``.
    """
    h, w = ii.shape
    if n > h or n > w:
        raise ValueError(f"window size {n} exceeds image shape {(h, w)}")
    area = float(n * n)

    def box(t):
        a = t[n::stride, n::stride]
        b = t[: h - n + 1 : stride, n::stride]
        c = t[n::stride, : w - n + 1 : stride]
        d = t[: h - n + 1 : stride, : w - n + 1 : stride]
        return a - b - c + d

    mean_c = box(ii.sum) / area
    var = box(ii.sum_sq) / area - mean_c * mean_c
    np.maximum(var, 0.0, out=var)
    return mean_c + ii.offset, var


@dataclass(frozen=True)
class ReferenceSet:
    """Reference windows, four per container, with their provenance.

    ``provenance[i]`` is ``(container_index, criterion, (row, col))``.
    """

    windows: np.ndarray
    provenance: list

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def window_size(self) -> int:
        return self.windows.shape[-1]


def container_grid(shape: tuple[int, int], container_size: int) -> tuple[int, int]:
    return shape[0] // container_size, shape[1] // container_size


def select_references(m, n: int, container_size: int) -> ReferenceSet:
    """Pick the min/max-mean and min/max-variance ``n x n`` window of every container.

    Containers tile the image from the top-left corner; remainder strips are
    ignored. Candidates are all stride-1 windows inside a container and ties
    go to the smallest (row, col).
    """
    data = _as_array(m)
    if container_size < n:
        raise ValueError("container_size must be at least the window size")
    rows, cols = container_grid(data.shape, container_size)
    if rows < 1 or cols < 1:
        raise ValueError(f"micrograph of shape {data.shape} is smaller than one container of {container_size}")
    means, variances = sliding_window_stats(build_integral_images(data), n)
    span = container_size - n + 1

    windows = []
    provenance = []
    for idx in range(rows * cols):
        r0 = (idx // cols) * container_size
        c0 = (idx % cols) * container_size
        block_m = means[r0 : r0 + span, c0 : c0 + span]
        block_v = variances[r0 : r0 + span, c0 : c0 + span]
        picks = (
            np.argmin(block_m),
            np.argmax(block_m),
            np.argmin(block_v),
            np.argmax(block_v),
        )
        for criterion, flat in zip(CRITERIA, picks):
            dr, dc = divmod(int(flat), span)
            r, c = r0 + dr, c0 + dc
            windows.append(data[r : r + n, c : c + n])
            provenance.append((idx, criterion, (r, c)))
    return ReferenceSet(np.array(windows), provenance)
