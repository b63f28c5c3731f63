"""Diagnostic experiment drivers.

* tie sweeps: subsample pairs to move the share of human ties, recalibrate
  epsilon at every point;
* held-out calibration: pick epsilon on one segment split, score another;
* length bias: least-squares fit of scores against candidate length;
* metric-vs-metric correlation matrices.

Every stochastic step draws from ``np.random.default_rng([seed, ...indices])``
so results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from mtmeta._format import fmt, rounded
from mtmeta.correlation import Grouping, Statistic, grouped_statistic
from mtmeta.corpus import Dataset
from mtmeta.errors import (
    AllPairsRemoved,
    ConstantX,
    EmptyAlignment,
    MissingLengths,
    SplitTooSmall,
    TooFewPoints,
)
from mtmeta.ties import (
    PairScope,
    PairSet,
    acc_eq_at,
    calibrate_epsilon,
    pair_indices,
    tie_fraction,
)


@dataclasses.dataclass(frozen=True)
class SubsampleConfig:
    p_t: float = 0.0
    p_n: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for p in (self.p_t, self.p_n):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"removal probability {p} outside [0, 1]")


# (p_t, p_n) grid used for the zh-en sweep: ties removed first, then untied pairs.
DEFAULT_GRID: tuple[SubsampleConfig, ...] = tuple(
    SubsampleConfig(pt, pn) for pt, pn in [
        (1.00, 0.00), (0.65, 0.00), (0.30, 0.00), (0.00, 0.00), (0.00, 0.20),
        (0.00, 0.40), (0.00, 0.50), (0.00, 0.60), (0.00, 0.65), (0.00, 0.70),
        (0.00, 0.75), (0.00, 0.80), (0.00, 0.85)])


def expected_tie_fraction(t: float, p_t: float, p_n: float) -> float:
    kept_tied = t * (1 - p_t)
    return kept_tied / (kept_tied + (1 - t) * (1 - p_n))


def _keep_mask(human_tied: np.ndarray, p_t: float, p_n: float,
               rng: np.random.Generator) -> np.ndarray:
    u = rng.random(human_tied.size)
    return np.where(human_tied, u < 1.0 - p_t, u < 1.0 - p_n)


def subsample_pairs(pairs: PairSet, config: SubsampleConfig) -> PairSet:
    """Drop human-tied pairs with probability p_t and the rest with p_n."""
    keep = _keep_mask(pairs.human_tied, config.p_t, config.p_n,
                      np.random.default_rng(config.seed))
    if not keep.any():
        raise AllPairsRemoved(f"p_t={config.p_t}, p_n={config.p_n} removed every pair")
    return pairs.subset(keep)


def shared_pairs(dataset: Dataset, metrics: Sequence[str],
                 scope: PairScope = PairScope.WITHIN_SEGMENT,
                 segment_mask: np.ndarray | None = None) -> dict[str, PairSet]:
    """One pair universe for all metrics: keys where human and every metric are present."""
    keep = dataset.human.present.copy()
    for name in metrics:
        keep &= dataset.metric(name).present
    if segment_mask is not None:
        keep &= segment_mask[:, None]
    left, right = pair_indices(keep, scope)
    if left.size == 0:
        raise EmptyAlignment("no pairs where human and all metrics are present")
    h = dataset.human.values.ravel()
    n_sys = len(dataset.systems)
    out = {}
    for name in metrics:
        m = dataset.metric(name).values.ravel()
        out[name] = PairSet(m[left], m[right], h[left], h[right], left, right, n_sys)
    return out


@dataclasses.dataclass(frozen=True)
class MetricPoint:
    epsilon: float
    acc_eq: float
    epsilon_scaled: float = math.nan


@dataclasses.dataclass(frozen=True)
class SweepRow:
    p_t: float
    p_n: float
    tie_fraction: float
    n_pairs: float
    metrics: dict[str, MetricPoint]


@dataclasses.dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    seeds_used: int
    info: dict = dataclasses.field(default_factory=dict)

    def metric_names(self) -> list[str]:
        return list(self.rows[0].metrics) if self.rows else []

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p_t", "p_n", "tie_fraction", "n_pairs", "metric", "epsilon",
                    "epsilon_scaled", "acc_eq"])
        for r in self.rows:
            for name, pt in r.metrics.items():
                w.writerow([fmt(r.p_t), fmt(r.p_n), fmt(r.tie_fraction), fmt(r.n_pairs),
                            name, fmt(pt.epsilon), fmt(pt.epsilon_scaled), fmt(pt.acc_eq)])
        return buf.getvalue()

    def to_json(self) -> dict:
        def point(pt):
            return {"epsilon": rounded(pt.epsilon), "epsilon_scaled": rounded(pt.epsilon_scaled),
                    "acc_eq": rounded(pt.acc_eq)}
        return {
            "seeds_used": self.seeds_used,
            "info": {k: rounded(v) if isinstance(v, float) else v for k, v in self.info.items()},
            "rows": [{"p_t": r.p_t, "p_n": r.p_n, "tie_fraction": rounded(r.tie_fraction),
                      "n_pairs": rounded(r.n_pairs),
                      "metrics": {n: point(p) for n, p in r.metrics.items()}}
                     for r in self.rows],
        }


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def _min_max_scale(rows: list[SweepRow]) -> list[SweepRow]:
    names = list(rows[0].metrics) if rows else []
    scaled = [dict(r.metrics) for r in rows]
    for name in names:
        eps = [r.metrics[name].epsilon for r in rows]
        lo, hi = min(eps), max(eps)
        for d, e in zip(scaled, eps):
            s = 0.0 if hi == lo else (e - lo) / (hi - lo)
            d[name] = dataclasses.replace(d[name], epsilon_scaled=s)
    return [dataclasses.replace(r, metrics=d) for r, d in zip(rows, scaled)]


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def tie_sweep(dataset: Dataset, metrics: Sequence[str],
              grid: Sequence[SubsampleConfig] = DEFAULT_GRID, n_seeds: int = 5,
              seed: int = 0, scope: PairScope = PairScope.WITHIN_SEGMENT,
              workers: int = 1) -> SweepResult:
    """Recalibrate epsilon on subsamples with different shares of human ties.

    Grid point ``g`` and run ``s`` subsample with generator ``(seed, g, s)``;
    the seed stored on each grid entry is ignored. Means are over runs.
    """
    if not grid:
        raise ValueError("empty grid")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    universe = shared_pairs(dataset, metrics, scope)
    human_tied = next(iter(universe.values())).human_tied

    def run(job):
        g, s = job
        cfg = grid[g]
        keep = _keep_mask(human_tied, cfg.p_t, cfg.p_n, np.random.default_rng([seed, g, s]))
        if not keep.any():
            raise AllPairsRemoved(f"p_t={cfg.p_t}, p_n={cfg.p_n} removed every pair")
        sub = {n: p.subset(keep) for n, p in universe.items()}
        first = sub[metrics[0]]
        results = {n: calibrate_epsilon(p) for n, p in sub.items()}
        return tie_fraction(first), len(first), results

    jobs = [(g, s) for g in range(len(grid)) for s in range(n_seeds)]
    outputs = dict(zip(jobs, _map(run, jobs, workers)))
    rows = []
    for g, cfg in enumerate(grid):
        runs = [outputs[(g, s)] for s in range(n_seeds)]
        rows.append(SweepRow(
            p_t=cfg.p_t, p_n=cfg.p_n,
            tie_fraction=_mean(r[0] for r in runs),
            n_pairs=_mean(r[1] for r in runs),
            metrics={n: MetricPoint(_mean(r[2][n].epsilon for r in runs),
                                    _mean(r[2][n].acc_eq for r in runs))
                     for n in metrics},
        ))
    full_ties = tie_fraction(next(iter(universe.values())))
    return SweepResult(tuple(_min_max_scale(rows)), n_seeds,
                       {"total_pairs": len(human_tied), "full_tie_fraction": full_ties})


@dataclasses.dataclass(frozen=True)
class HeldOutConfig:
    calibration_fraction: float = 0.2
    seed: int = 0
    subsample: SubsampleConfig = SubsampleConfig()

    def __post_init__(self):
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ValueError("calibration_fraction must lie in (0, 1)")


def split_segments(n_segments: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask of calibration segments from a seeded shuffle."""
    n_cal = int(round(fraction * n_segments))
    if n_cal < 1 or n_cal > n_segments - 1:
        raise SplitTooSmall(
            f"{n_segments} segments cannot be split at fraction {fraction}")
    order = np.random.default_rng([seed]).permutation(n_segments)
    mask = np.zeros(n_segments, dtype=bool)
    mask[order[:n_cal]] = True
    return mask


def held_out_sweep(dataset: Dataset, metrics: Sequence[str],
                   grid: Sequence[SubsampleConfig], calibration_fraction: float = 0.2,
                   seed: int = 0, n_seeds: int = 1,
                   scope: PairScope = PairScope.WITHIN_SEGMENT) -> SweepResult:
    """Calibrate on a subsampled segment split, evaluate on the rest.

    Rows report the calibration split's realized tie share and size; the
    per-metric acc_eq is measured on the untouched test split.
    """
    cal_segments = split_segments(len(dataset.segments), calibration_fraction, seed)
    try:
        cal = shared_pairs(dataset, metrics, scope, cal_segments)
        test = shared_pairs(dataset, metrics, scope, ~cal_segments)
    except EmptyAlignment:
        raise SplitTooSmall("a split has no pairs") from None
    human_tied = next(iter(cal.values())).human_tied
    rows = []
    for g, cfg in enumerate(grid):
        runs = []
        for s in range(n_seeds):
            keep = _keep_mask(human_tied, cfg.p_t, cfg.p_n,
                              np.random.default_rng([seed, 1, g, s]))
            if not keep.any():
                raise AllPairsRemoved(f"p_t={cfg.p_t}, p_n={cfg.p_n} removed every pair")
            sub = {n: p.subset(keep) for n, p in cal.items()}
            eps = {n: calibrate_epsilon(p).epsilon for n, p in sub.items()}
            acc = {n: acc_eq_at(test[n], eps[n]) for n in metrics}
            runs.append((tie_fraction(sub[metrics[0]]), len(sub[metrics[0]]), eps, acc))
        rows.append(SweepRow(
            p_t=cfg.p_t, p_n=cfg.p_n,
            tie_fraction=_mean(r[0] for r in runs),
            n_pairs=_mean(r[1] for r in runs),
            metrics={n: MetricPoint(_mean(r[2][n] for r in runs), _mean(r[3][n] for r in runs))
                     for n in metrics},
        ))
    first_test = test[metrics[0]]
    info = {"calibration_segments": int(cal_segments.sum()),
            "test_segments": int((~cal_segments).sum()),
            "test_pairs": len(first_test),
            "test_tie_fraction": tie_fraction(first_test)}
    return SweepResult(tuple(_min_max_scale(rows)), n_seeds, info)


def held_out_calibration(dataset: Dataset, metrics: Sequence[str],
                         config: HeldOutConfig = HeldOutConfig(), n_seeds: int = 1,
                         scope: PairScope = PairScope.WITHIN_SEGMENT) -> SweepResult:
    return held_out_sweep(dataset, metrics, [config.subsample], config.calibration_fraction,
                          config.seed, n_seeds, scope)


@dataclasses.dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    n: int

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def ols_fit(x, y) -> OlsFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y lengths differ")
    if x.size < 2:
        raise TooFewPoints("need at least 2 points")
    if np.all(x == x[0]):
        raise ConstantX("x is constant; slope undefined")
    dx = x - x.mean()
    slope = float((dx * (y - y.mean())).sum() / (dx * dx).sum())
    return OlsFit(slope, float(y.mean() - slope * x.mean()), int(x.size))


@dataclasses.dataclass(frozen=True)
class LengthBiasReport:
    metric: str
    lengths: np.ndarray
    scores: np.ndarray
    fit: OlsFit

    def scatter_csv(self) -> str:
        lines = ["chars,score"]
        lines += [f"{int(a)},{fmt(b)}" for a, b in zip(self.lengths, self.scores)]
        return "\n".join(lines) + "\n"


def length_bias_report(dataset: Dataset, metric: str,
                       min_human: float | None = None) -> LengthBiasReport:
    """Scores of ``metric`` (``"human"`` allowed) against candidate length.

    ``min_human`` drops entries whose human score is below it; off by default.
    """
    if dataset.candidate_lengths is None:
        raise MissingLengths("dataset has no candidate lengths")
    matrix = dataset.metric(metric)
    lengths = dataset.candidate_lengths
    keep = matrix.present & ~np.isnan(lengths)
    if min_human is not None:
        keep &= dataset.human.present & (np.nan_to_num(dataset.human.values, nan=-np.inf)
                                         >= min_human)
    x, y = lengths[keep], matrix.values[keep]
    return LengthBiasReport(metric, x, y, ols_fit(x, y))


def metric_correlation_matrix(dataset: Dataset, metrics: Sequence[str],
                              statistic: Statistic = Statistic.PEARSON,
                              grouping: Grouping = Grouping.NONE) -> np.ndarray:
    """Symmetric matrix of grouped correlations between metrics; human unused."""
    if len(metrics) < 2:
        raise ValueError("need at least two metrics")
    k = len(metrics)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            v = grouped_statistic(dataset.metric(metrics[i]), dataset.metric(metrics[j]),
                                  grouping, statistic).value
            out[i, j] = out[j, i] = v
    return out
