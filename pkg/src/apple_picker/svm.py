"""Gaussian-RBF soft-margin SVM trained with sequential minimal optimization.

The dual is written in terms of ``beta_t = y_t * alpha_t`` with labels
``y_t`` in {-1, +1}: maximize ``sum(y * beta) - beta' K beta / 2`` subject to
``sum(beta) = 0`` and ``lo_t <= beta_t <= hi_t`` where ``[lo, hi]`` is
``[0, C]`` for particles and ``[-C, 0]`` for noise.  Each step moves the
maximal violating pair along ``e_i - e_j``.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .training import TrainingSet

log = logging.getLogger(__name__)

__all__ = ["SvmModel", "DegenerateTrainingError", "kernel", "gram", "solve_dual", "train",
           "decision", "save_model", "load_model"]

# below this many points the full Gram matrix is cached
_DENSE_LIMIT = 2500
_ALPHA_EPS = 1e-8


class DegenerateTrainingError(ValueError):
    pass


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray  # (S, 2) standardized
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    bandwidth: float
    slack: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def n_support(self) -> int:
        return len(self.dual_coef)


def kernel(x, z, bandwidth: float = 1.0) -> float:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    d = np.asarray(x, dtype=np.float64) - np.asarray(z, dtype=np.float64)
    return float(np.exp(-np.dot(d, d) / (2.0 * bandwidth**2)))


def gram(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(d2 * (-0.5 / bandwidth**2))


class _KernelRows:
    def __init__(self, x: np.ndarray, bandwidth: float, cache_rows: int = 512):
        self.x = x
        self.bandwidth = bandwidth
        self.dense = gram(x, x, bandwidth) if len(x) <= _DENSE_LIMIT else None
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.cache_rows = cache_rows

    def __getitem__(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i]
        row = self.cache.get(i)
        if row is None:
            row = gram(self.x[i : i + 1], self.x, self.bandwidth)[0]
            self.cache[i] = row
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return row


def solve_dual(x: np.ndarray, y: np.ndarray, bandwidth: float = 1.0, slack: float = 1.0,
               tol: float = 1e-3, max_iter: int = 10**6):
    """SMO on standardized points ``x`` with labels ``y`` in {-1, +1}.

    Returns ``(beta, bias, iterations, converged)`` with ``beta = alpha * y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    lo = np.where(y > 0, 0.0, -slack)
    hi = np.where(y > 0, slack, 0.0)
    beta = np.zeros(n)
    # v = y * gradient of the alpha-dual = y - K beta
    v = y.copy()
    rows = _KernelRows(x, bandwidth)
    neg_inf = -np.inf

    it = 0
    converged = False
    while it < max_iter:
        up = np.where(beta < hi, v, neg_inf)
        low = np.where(beta > lo, v, np.inf)
        i = int(np.argmax(up))
        j = int(np.argmin(low))
        gap = up[i] - low[j]
        if gap < tol:
            converged = True
            break
        ki, kj = rows[i], rows[j]
        curv = ki[i] + kj[j] - 2.0 * ki[j]
        if curv <= 1e-12:
            curv = 1e-12
        step = min(hi[i] - beta[i], beta[j] - lo[j], gap / curv)
        beta[i] += step
        beta[j] -= step
        # snap to the bound that limited the step so membership tests stay exact
        if hi[i] - beta[i] <= 1e-15 * slack:
            beta[i] = hi[i]
        if beta[j] - lo[j] <= 1e-15 * slack:
            beta[j] = lo[j]
        v -= step * (ki - kj)
        it += 1

    free = (beta > lo) & (beta < hi)
    if np.any(free):
        bias = float(v[free].mean())
    else:
        up = np.where(beta < hi, v, neg_inf).max()
        low = np.where(beta > lo, v, np.inf).min()
        finite = [b for b in (up, low) if np.isfinite(b)]
        bias = float(np.mean(finite)) if finite else 0.0
    if not converged:
        log.warning("SMO stopped after %d iterations without reaching tol=%g", it, tol)
    return beta, bias, it, converged


def train(ts: TrainingSet, bandwidth: float = 1.0, slack: float = 1.0, tol: float = 1e-3,
          max_iter: int = 10**6) -> SvmModel:
    x = ts.standardized()
    if len(x) < 2 or np.all(np.ptp(x, axis=0) == 0):
        raise DegenerateTrainingError("all training features identical")
    y = np.where(ts.labels == 1, 1.0, -1.0)
    beta, bias, it, converged = solve_dual(x, y, bandwidth, slack, tol, max_iter)
    keep = np.abs(beta) > _ALPHA_EPS
    return SvmModel(
        support_vectors=x[keep],
        dual_coef=beta[keep],
        bias=bias,
        bandwidth=float(bandwidth),
        slack=float(slack),
        feature_mean=np.array(ts.feature_mean, dtype=np.float64),
        feature_std=np.array(ts.feature_std, dtype=np.float64),
        iterations=it,
        converged=converged,
    )


def decision(model: SvmModel, x, chunk: int = 1 << 22):
    """Decision value(s) for raw (mean, std) feature vector(s); > 0 means particle."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = (x.reshape(-1, 2) - model.feature_mean) / model.feature_std
    out = np.empty(len(xs))
    step = max(1, chunk // max(1, model.n_support))
    for s in range(0, len(xs), step):
        k = gram(xs[s : s + step], model.support_vectors, model.bandwidth)
        out[s : s + step] = k @ model.dual_coef + model.bias
    return float(out[0]) if single else out


def save_model(model: SvmModel, path) -> None:
    """Text sidecar: header comments, then one ``x1 x2 coeff`` line per support vector."""
    mu = [float(v) for v in model.feature_mean]
    sd = [float(v) for v in model.feature_std]
    lines = [
        f"# bias {float(model.bias)!r}",
        f"# bandwidth {float(model.bandwidth)!r}",
        f"# slack {float(model.slack)!r}",
        f"# feature_mean {mu[0]!r} {mu[1]!r}",
        f"# feature_std {sd[0]!r} {sd[1]!r}",
    ]
    lines += [f"{sv[0]!r} {sv[1]!r} {c!r}" for sv, c in zip(model.support_vectors.tolist(),
                                                           model.dual_coef.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> SvmModel:
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, *vals = line[1:].split()
            header[key] = [float(v) for v in vals]
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return SvmModel(
        support_vectors=arr[:, :2],
        dual_coef=arr[:, 2],
        bias=header["bias"][0],
        bandwidth=header["bandwidth"][0],
        slack=header["slack"][0],
        feature_mean=np.array(header["feature_mean"]),
        feature_std=np.array(header["feature_std"]),
    )
