"""Synthetic probe metrics.

* ``segment_constant_scores``: one score per segment, shared by every system.
  It stands in for a scorer that only sees the source (or reference) and so
  can only judge segment difficulty.
* ``perturb_discrete``: small truncated Gaussian noise that makes a discrete
  metric continuous without reordering any two distinct levels.
* ``discretize``: snaps scores onto a fixed grid of levels.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Sequence

import numpy as np

from mtmeta.corpus import ScoreMatrix
from mtmeta.errors import EmptySegment, NotDiscrete, ZeroGap

SEGMENT_CONSTANT_NAME = "sentinel_seg_const"


class Reducer(enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclasses.dataclass(frozen=True)
class PerturbConfig:
    variance: float = 1e-4
    seed: int = 0
    truncation_factor: float = 0.4
    max_levels: int = 1000

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not 0 < self.truncation_factor < 0.5:
            raise ValueError("truncation_factor must lie in (0, 0.5)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclasses.dataclass(frozen=True)
class DiscreteLevels:
    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if len(levels) < 2:
            raise ValueError("need at least two levels")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    @property
    def min_gap(self) -> float:
        return min(b - a for a, b in zip(self.levels, self.levels[1:]))


def segment_constant_scores(human: ScoreMatrix, reducer: Reducer = Reducer.MEAN,
                            name: str = SEGMENT_CONSTANT_NAME) -> ScoreMatrix:
    """Every entry of a segment gets the reduced human score of that segment."""
    reduce = np.mean if reducer is Reducer.MEAN else np.median
    out = np.empty(human.shape)
    for i, seg in enumerate(human.segments):
        row = human.values[i]
        row = row[~np.isnan(row)]
        if row.size == 0:
            raise EmptySegment(f"segment {seg!r} has no human scores")
        out[i, :] = reduce(row)
    return human.with_values(out, name=name)


def _distinct_gap(values: np.ndarray, max_levels: int, name: str) -> float:
    distinct = np.unique(values)
    if distinct.size > max_levels:
        raise NotDiscrete(f"{name}: {distinct.size} distinct values exceeds cap {max_levels}")
    if distinct.size < 2:
        raise ZeroGap(f"{name}: fewer than two distinct values, gap undefined")
    return float(np.diff(distinct).min())


def perturb_discrete(metric: ScoreMatrix, config: PerturbConfig = PerturbConfig(),
                     levels: DiscreteLevels | None = None,
                     name: str | None = None) -> ScoreMatrix:
    """Add truncated Gaussian noise to every present score.

    Noise is redrawn until ``|noise| < truncation_factor * gap`` where gap is
    the smallest distance between distinct values (or between ``levels`` if
    given). Entry (i, j) draws from a generator seeded with ``(seed, i, j)``.
    """
    present = metric.present
    if levels is not None:
        gap = levels.min_gap
    else:
        gap = _distinct_gap(metric.values[present], config.max_levels, metric.name)
    bound = config.truncation_factor * gap
    sd = math.sqrt(config.variance)
    out = metric.values.copy()
    for i, j in zip(*np.nonzero(present)):
        rng = np.random.default_rng([config.seed, int(i), int(j)])
        while True:
            draws = rng.normal(0.0, sd, 64)
            ok = np.flatnonzero(np.abs(draws) < bound)
            if ok.size:
                out[i, j] += draws[ok[0]]
                break
    return metric.with_values(out, name=name or f"perturbed:{metric.name}")


def discretize(metric: ScoreMatrix, levels: DiscreteLevels | Sequence[float],
               name: str | None = None) -> ScoreMatrix:
    """Map each score to its nearest level; exact midpoints go to the lower level."""
    if not isinstance(levels, DiscreteLevels):
        levels = DiscreteLevels(tuple(levels))
    grid = np.asarray(levels.levels)
    x = metric.values
    hi_idx = np.clip(np.searchsorted(grid, x, side="left"), 1, grid.size - 1)
    lo, hi = grid[hi_idx - 1], grid[hi_idx]
    out = np.where(hi - x < x - lo, hi, lo)
    out = np.where(np.isnan(x), np.nan, out)
    return metric.with_values(out, name=name or f"discretized:{metric.name}")
