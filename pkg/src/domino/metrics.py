"""Ensemble statistics for reporting: interquartile ranges, thresholds,
block-averaged learning curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IQRSummary:
    q25: float
    median: float
    q75: float


def iqr(values):
    """25/50/75 percentiles with linear interpolation between order
    statistics (numpy's default, a.k.a. type-7), fixed so summaries are
    reproducible bit-for-bit."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("iqr of an empty sequence")
    q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    return IQRSummary(q25=float(q25), median=float(med), q75=float(q75))


def time_to_threshold(series, threshold=10.0):
    """First time at which the value drops to <= threshold; None if never.

    series is an iterable of (t, n) pairs in time order.
    """
    for t, n in series:
        if n <= threshold:
            return t
    return None


def block_mean_rewards(returns, block=100):
    """Mean of each consecutive full block; a trailing partial block is
    dropped."""
    if block < 1:
        raise ValueError("block must be >= 1")
    returns = np.asarray(returns, dtype=float)
    n_blocks = returns.size // block
    if n_blocks == 0:
        return np.zeros(0)
    return returns[:n_blocks * block].reshape(n_blocks, block).mean(axis=1)


@dataclass
class LearningCurve:
    """Per-episode returns plus the per-100-episode block means."""

    returns: np.ndarray
    block: int = 100

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)

    @property
    def block_means(self):
        return block_mean_rewards(self.returns, self.block)


def write_summary_csv(path_or_file, rows):
    """Summary table: one row per (metric, node) with quartiles and count.

    rows: iterables of (metric, node, IQRSummary, n_samples).
    """
    def _write(f):
        w = csv.writer(f)
        w.writerow(["metric", "node", "q25", "median", "q75", "n_samples"])
        for metric, node, s, n in rows:
            w.writerow([metric, node, repr(s.q25), repr(s.median),
                        repr(s.q75), n])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            _write(f)


def read_summary_csv(path):
    """Inverse of write_summary_csv (floats round-trip via repr)."""
    out = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        for metric, node, q25, med, q75, n in r:
            out.append((metric, int(node),
                        IQRSummary(float(q25), float(med), float(q75)),
                        int(n)))
    return out
