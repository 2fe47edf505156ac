"""Normalized cross-correlation response signals and query scores.

Each query window is cross-correlated (circularly, via real FFTs) against
every reference window; the maximum of the mean-subtracted correlation map
is that reference's response.  A global threshold derived from all
responses turns each query's response vector into an integer score.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .micrograph_io import Micrograph
from .references import ReferenceSet

try:
    import pyfftw
except ImportError:  # pragma: no cover - exercised only without pyfftw
    pyfftw = None

log = logging.getLogger(__name__)

__all__ = [
    "QuerySet",
    "ResponseSignal",
    "ScoreField",
    "cross_correlate",
    "normalize_cc",
    "response_signal",
    "response_signals",
    "compute_threshold",
    "score",
    "grid_positions",
    "build_queries",
    "score_micrograph",
    "save_score_grid",
]

# complex elements held per FFT batch (~32 MB in complex128)
_BATCH_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class QuerySet:
    """Query windows on a stride ``n/2`` grid, stored by top-left position."""

    positions: np.ndarray  # (C, 2) int, row-major over the grid
    n: int
    grid_shape: tuple[int, int]
    image_shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.positions)

    def windows(self, image) -> np.ndarray:
        data = image.data if isinstance(image, Micrograph) else np.asarray(image)
        view = np.lib.stride_tricks.sliding_window_view(data, (self.n, self.n))
        return view[self.positions[:, 0], self.positions[:, 1]]


@dataclass(frozen=True)
class ResponseSignal:
    values: np.ndarray
    query_index: int = 0


@dataclass(frozen=True)
class ScoreField:
    k: np.ndarray  # (C,) int
    t: float

    @property
    def size(self) -> int:
        return len(self.k)


def cross_correlate(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Circular cross-correlation ``c(x, y) = sum f(x', y') g(x + x', y + y')``."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 2:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    return np.fft.irfft2(np.conj(np.fft.rfft2(f)) * np.fft.rfft2(g), s=f.shape)


def normalize_cc(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.size and c.min() == c.max():
        # the rounded mean of a constant map need not equal its value
        return np.zeros_like(c)
    return c - c.mean()


def _ref_windows(refs) -> np.ndarray:
    if isinstance(refs, ReferenceSet):
        return refs.windows
    return np.asarray(refs, dtype=np.float64)


def response_signal(g: np.ndarray, refs, query_index: int = 0) -> ResponseSignal:
    """Response of one query window to each reference (reference-by-reference)."""
    values = np.array([normalize_cc(cross_correlate(f, g)).max() for f in _ref_windows(refs)])
    return ResponseSignal(values, query_index)


class _BatchCorrelator:
    """Max normalized correlation of a batch of queries against fixed references.

    Reference spectra are computed once.  Each instance owns its own
    input/output buffers and FFTW plan, so one instance per worker thread.
    """

    def __init__(self, ref_spectra_conj: np.ndarray, ref_sums: np.ndarray, n: int, batch: int):
        self.fr = ref_spectra_conj
        self.ref_sums = ref_sums
        self.n = n
        self.batch = batch
        b = len(ref_sums)
        half = n // 2 + 1
        if pyfftw is not None:
            self.prod = pyfftw.empty_aligned((batch, b, n, half), dtype=np.complex128)
            self.corr = pyfftw.empty_aligned((batch, b, n, n), dtype=np.float64)
            # ESTIMATE planning is deterministic, so results are bit-reproducible
            self.plan = pyfftw.FFTW(self.prod, self.corr, axes=(2, 3), direction="FFTW_BACKWARD",
                                    flags=("FFTW_ESTIMATE", "FFTW_DESTROY_INPUT"), threads=1)
        else:
            self.prod = np.empty((batch, b, n, half), dtype=np.complex128)
            self.plan = None

    def __call__(self, queries: np.ndarray, out: np.ndarray) -> None:
        count = len(queries)
        n2 = float(self.n * self.n)
        fq = np.fft.rfft2(queries)
        np.multiply(fq[:, None], self.fr[None], out=self.prod[:count])
        if count < self.batch:
            self.prod[count:] = 0
        if self.plan is not None:
            self.plan()
            corr = self.corr[:count]
        else:
            corr = sfft.irfft2(self.prod[:count], s=(self.n, self.n))
        peak = corr.reshape(count, corr.shape[1], -1).max(axis=2)
        # mean of a circular correlation map is sum(f) * sum(g) / n^2
        query_sums = queries.reshape(count, -1).sum(axis=1)
        out[:] = peak - np.outer(query_sums, self.ref_sums) / n2


def response_signals(queries: np.ndarray, refs, threads: int = 1) -> np.ndarray:
    """Response signals of many query windows at once, shape ``(C, B)``.

    Work is split into fixed-size batches (independent of ``threads``) so the
    result is bit-identical for any thread count.
    """
    queries = np.asarray(queries, dtype=np.float64)
    windows = _ref_windows(refs)
    c, n = len(queries), windows.shape[-1]
    b = len(windows)
    out = np.empty((c, b))
    if c == 0:
        return out
    fr = np.conj(np.fft.rfft2(windows))
    ref_sums = windows.reshape(b, -1).sum(axis=1)
    batch = max(1, min(c, _BATCH_ELEMENTS // (b * n * (n // 2 + 1))))
    starts = list(range(0, c, batch))
    workers = max(1, min(int(threads), len(starts)))
    correlators = [_BatchCorrelator(fr, ref_sums, n, batch) for _ in range(workers)]

    def run(worker: int) -> None:
        corr = correlators[worker]
        for s in starts[worker::workers]:
            corr(queries[s : s + batch], out[s : s + batch])

    if workers == 1:
        run(0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(workers)))
    return out


def compute_threshold(signals, divisor: float = 20.0) -> float:
    if isinstance(signals, ResponseSignal):
        signals = [signals]
    if isinstance(signals, np.ndarray):
        values = signals
    else:
        values = [s.values if isinstance(s, ResponseSignal) else np.asarray(s) for s in signals]
        values = np.concatenate([np.ravel(v) for v in values]) if values else np.empty(0)
    if values.size == 0:
        raise ValueError("cannot compute a threshold from no response values")
    lo, hi = float(values.min()), float(values.max())
    return (hi - lo) / divisor + lo


def score(signal, t: float) -> int:
    values = signal.values if isinstance(signal, ResponseSignal) else np.asarray(signal)
    return int(np.count_nonzero(values > t))


def grid_positions(length: int, n: int) -> np.ndarray:
    """Stride-``n/2`` start offsets covering ``[0, length)``, plus one edge-aligned window if needed."""
    if length < n:
        raise ValueError(f"image extent {length} smaller than window size {n}")
    step = max(1, n // 2)
    pos = list(range(0, length - n + 1, step))
    if pos[-1] != length - n:
        pos.append(length - n)
    return np.array(pos, dtype=np.int64)


def build_queries(shape: tuple[int, int], n: int) -> QuerySet:
    rows = grid_positions(shape[0], n)
    cols = grid_positions(shape[1], n)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    positions = np.stack([rr.ravel(), cc.ravel()], axis=1)
    return QuerySet(positions, n, (len(rows), len(cols)), tuple(shape))


def score_micrograph(m, refs: ReferenceSet, n: int, threads: int = 1,
                     divisor: float = 20.0) -> tuple[QuerySet, ScoreField]:
    data = m.data if isinstance(m, Micrograph) else np.asarray(m, dtype=np.float64)
    if min(data.shape) < n:
        raise ValueError(f"micrograph of shape {data.shape} smaller than query size {n}")
    if refs.window_size != n:
        raise ValueError(f"reference size {refs.window_size} does not match query size {n}")
    queries = build_queries(data.shape, n)
    signals = response_signals(queries.windows(data), refs, threads=threads)
    t = compute_threshold(signals, divisor)
    k = np.count_nonzero(signals > t, axis=1)
    log.debug("scored %d queries against %d references, t=%.6g", len(queries), len(refs), t)
    return queries, ScoreField(k.astype(np.int64), t)


def save_score_grid(queries: QuerySet, scores: ScoreField, path) -> None:
    """Dump the score field reshaped to the query grid as CSV."""
    grid = scores.k.reshape(queries.grid_shape)
    np.savetxt(path, grid, fmt="%d", delimiter=",")
