"""Pearson and Kendall tau_b, grouped correlations and system-level statistics.

Grouping strategies partition the aligned (segment, system) points before
correlating:

* ``NONE``    one correlation over every aligned point;
* ``SEGMENT`` one correlation per source segment, averaged;
* ``SYSTEM``  one correlation per MT system, averaged.

Averages weight every group equally. A group whose correlation is undefined
because one side is constant contributes 0; groups with fewer than two
aligned points are dropped.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Mapping

import numpy as np

from mtmeta.corpus import ScoreMatrix
from mtmeta.errors import (
    LengthMismatch,
    NoUntiedPairs,
    NoValidGroups,
    TooFewPoints,
    TooFewSystems,
)
from mtmeta.ties import TieCounts, tie_counts


class Grouping(enum.Enum):
    NONE = "none"
    SEGMENT = "segment"
    SYSTEM = "system"


class Statistic(enum.Enum):
    PEARSON = "pearson"
    KENDALL_TAU = "kendall"
    ACC_EQ = "acc_eq"
    SYS_PAIRWISE_ACC = "sys_acc"


class _ZeroVariance:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO_VARIANCE"

    def __reduce__(self):
        return (_ZeroVariance, ())


# Returned instead of a number when a correlation is undefined.
ZERO_VARIANCE = _ZeroVariance()


@dataclasses.dataclass(frozen=True)
class CorrelationValue:
    statistic: Statistic
    value: float
    n_groups: int
    n_points: int
    n_zero_variance: int = 0
    n_dropped: int = 0


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooFewPoints(f"need at least 2 points, got {x.size}")
    return x, y


def _constant_rows(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    hi = np.where(mask, x, -np.inf).max(axis=1)
    lo = np.where(mask, x, np.inf).min(axis=1)
    return hi == lo


def _pearson_rows(x: np.ndarray, y: np.ndarray, mask: np.ndarray):
    """Row-wise Pearson over masked cells; NaN where a side is constant."""
    n = mask.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = np.where(mask, x, 0.0).sum(axis=1) / n
        my = np.where(mask, y, 0.0).sum(axis=1) / n
        dx = np.where(mask, x - mx[:, None], 0.0)
        dy = np.where(mask, y - my[:, None], 0.0)
        r = (dx * dy).sum(axis=1) / (np.sqrt((dx * dx).sum(axis=1))
                                     * np.sqrt((dy * dy).sum(axis=1)))
    degenerate = _constant_rows(x, mask) | _constant_rows(y, mask)
    return np.where(degenerate, np.nan, np.clip(r, -1.0, 1.0))


def pearson(x, y) -> float | _ZeroVariance:
    """Sample Pearson correlation, or ZERO_VARIANCE if either side is constant."""
    x, y = _check_pair(x, y)
    r = _pearson_rows(x[None, :], y[None, :], np.ones((1, x.size), bool))[0]
    return ZERO_VARIANCE if math.isnan(r) else float(r)


def tau_from_counts(c: TieCounts) -> float | _ZeroVariance:
    left = c.C + c.D + c.T_h
    right = c.C + c.D + c.T_m
    if left == 0 or right == 0:
        return ZERO_VARIANCE
    return (c.C - c.D) / math.sqrt(left * right)


def kendall_tau(m, h) -> float | _ZeroVariance:
    """Kendall tau_b: (C - D) / sqrt((C + D + T_h)(C + D + T_m)) at epsilon = 0."""
    m, h = _check_pair(m, h)
    return tau_from_counts(tie_counts(m, h))


def _row_tie_counts(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> list[TieCounts]:
    n_cols = x.shape[1]
    if n_cols > 64:
        return [tie_counts(x[r][mask[r]], y[r][mask[r]]) for r in range(x.shape[0])]
    i, j = np.triu_indices(n_cols, k=1)
    both = mask[:, i] & mask[:, j]
    dm = np.where(both, x[:, i] - x[:, j], 0.0)
    dh = np.where(both, y[:, i] - y[:, j], 0.0)
    m_tie, h_tie = dm == 0, dh == 0
    untied = ~m_tie & ~h_tie
    agree = np.sign(dm) == np.sign(dh)

    def count(a):
        return (a & both).sum(axis=1)

    cs, ds = count(untied & agree), count(untied & ~agree)
    ths, tms, thms = count(h_tie & ~m_tie), count(m_tie & ~h_tie), count(m_tie & h_tie)
    return [TieCounts(int(a), int(b), int(c), int(d), int(e))
            for a, b, c, d, e in zip(cs, ds, ths, tms, thms)]


def _kendall_rows(x, y, mask):
    taus = [tau_from_counts(c) for c in _row_tie_counts(x, y, mask)]
    return np.array([math.nan if t is ZERO_VARIANCE else t for t in taus])


_ROW_FUNCS = {
    Statistic.PEARSON: _pearson_rows,
    Statistic.KENDALL_TAU: _kendall_rows,
}


def grouped_statistic(metric: ScoreMatrix, human: ScoreMatrix,
                      grouping: Grouping = Grouping.NONE,
                      statistic: Statistic = Statistic.PEARSON) -> CorrelationValue:
    """Average of per-group correlations between metric and human scores."""
    if not metric.same_key_space(human):
        raise ValueError(f"{metric.name!r} and {human.name!r} differ in key space")
    try:
        row_func = _ROW_FUNCS[statistic]
    except KeyError:
        raise ValueError(f"{statistic} is not a grouped correlation") from None
    both = metric.present & human.present
    x, y = metric.values, human.values
    if grouping is Grouping.NONE:
        rows, cols = np.nonzero(both)
        x, y = x[rows, cols][None, :], y[rows, cols][None, :]
        both = np.ones_like(x, dtype=bool)
    elif grouping is Grouping.SYSTEM:
        x, y, both = x.T, y.T, both.T

    sizes = both.sum(axis=1)
    valid = sizes >= 2
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidGroups(
            f"{metric.name}: no {grouping.value} group has 2 or more aligned points")
    x = np.where(both, x, 0.0)[valid]
    y = np.where(both, y, 0.0)[valid]
    per_group = row_func(x, y, both[valid])
    zero_var = np.isnan(per_group)
    per_group = np.where(zero_var, 0.0, per_group)
    value = math.fsum(per_group.tolist()) / n_valid
    return CorrelationValue(
        statistic=statistic,
        value=value,
        n_groups=n_valid,
        n_points=int(sizes[valid].sum()),
        n_zero_variance=int(zero_var.sum()),
        n_dropped=int((~valid).sum()),
    )


def _common_systems(metric_sys: Mapping[str, float], human_sys: Mapping[str, float]):
    systems = [s for s in human_sys if s in metric_sys]
    if len(systems) < 2:
        raise TooFewSystems(f"need 2 or more shared systems, got {len(systems)}")
    return (systems, np.array([metric_sys[s] for s in systems], dtype=float),
            np.array([human_sys[s] for s in systems], dtype=float))


def sys_pairwise_accuracy(metric_sys: Mapping[str, float],
                          human_sys: Mapping[str, float]) -> CorrelationValue:
    """Share of human-untied system pairs the metric orders the same way.

    Metric ties on such pairs count as errors.
    """
    systems, m, h = _common_systems(metric_sys, human_sys)
    i, j = np.triu_indices(len(systems), k=1)
    dh = np.sign(h[i] - h[j])
    dm = np.sign(m[i] - m[j])
    untied = dh != 0
    n = int(untied.sum())
    if n == 0:
        raise NoUntiedPairs("every system pair is tied in human scores")
    correct = int((dm[untied] == dh[untied]).sum())
    return CorrelationValue(Statistic.SYS_PAIRWISE_ACC, correct / n, 1, len(systems))


def system_level_pearson(metric_sys: Mapping[str, float],
                         human_sys: Mapping[str, float]) -> CorrelationValue | _ZeroVariance:
    systems, m, h = _common_systems(metric_sys, human_sys)
    r = pearson(m, h)
    if r is ZERO_VARIANCE:
        return r
    return CorrelationValue(Statistic.PEARSON, r, 1, len(systems))
