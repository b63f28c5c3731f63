"""PERM-BOTH permutation test, significance clusters and multi-task rankings."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Mapping, Sequence

import numpy as np

from mtmeta._format import fmt
from mtmeta.correlation import (
    ZERO_VARIANCE,
    Grouping,
    Statistic,
    grouped_statistic,
    sys_pairwise_accuracy,
    system_level_pearson,
)
from mtmeta.corpus import ScoreMatrix, system_scores
from mtmeta.errors import (
    DegenerateError,
    EmptyAlignment,
    InconsistentMetricSets,
    MissingPValue,
)
from mtmeta.ties import PairScope, calibrate_epsilon, enumerate_pairs

StatisticFn = Callable[[ScoreMatrix, ScoreMatrix], float]

STATISTIC_NAMES = ("pearson", "kendall", "acc_eq", "sys_acc", "sys_pearson")


@dataclasses.dataclass(frozen=True)
class PermConfig:
    n_resamples: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _system_inputs(metric: ScoreMatrix, human: ScoreMatrix):
    keep = metric.present & human.present
    return system_scores(metric.masked(keep)), system_scores(human.masked(keep))


def make_statistic(name: str, grouping: Grouping = Grouping.NONE,
                   scope: PairScope = PairScope.WITHIN_SEGMENT) -> StatisticFn:
    """Build ``f(metric, human) -> float`` for one of STATISTIC_NAMES.

    ``acc_eq`` is tie-calibrated on the evaluated pairs. System-level
    statistics average each system over the keys where both sides are present.
    """
    if name in ("pearson", "kendall"):
        stat = Statistic.PEARSON if name == "pearson" else Statistic.KENDALL_TAU

        def fn(metric, human):
            return grouped_statistic(metric, human, grouping, stat).value
    elif name == "acc_eq":
        def fn(metric, human):
            return calibrate_epsilon(enumerate_pairs(metric, human, scope)).acc_eq
    elif name == "sys_acc":
        def fn(metric, human):
            return sys_pairwise_accuracy(*_system_inputs(metric, human)).value
    elif name == "sys_pearson":
        def fn(metric, human):
            r = system_level_pearson(*_system_inputs(metric, human))
            if r is ZERO_VARIANCE:
                raise DegenerateError(f"{metric.name}: constant system-level scores")
            return r.value
    else:
        raise ValueError(f"unknown statistic {name!r}; choose from {STATISTIC_NAMES}")
    fn.__name__ = f"{name}_{grouping.value}"
    return fn


@dataclasses.dataclass(frozen=True)
class PermResult:
    observed_delta: float
    p_value: float
    n_at_least: int
    n_resamples: int
    n_items: int


def perm_both_test(metric_a: ScoreMatrix, metric_b: ScoreMatrix, human: ScoreMatrix,
                   statistic_fn: StatisticFn, config: PermConfig = PermConfig(),
                   workers: int = 1) -> PermResult:
    """One-sided paired permutation test of ``f(a) - f(b) > 0``.

    Each resample exchanges the two metrics' scores on every aligned key
    independently with probability 1/2. Resample ``k`` draws from a generator
    seeded with ``(seed, k)``, so the result does not depend on ``workers``.
    """
    if not (metric_a.same_key_space(human) and metric_b.same_key_space(human)):
        raise ValueError("metrics and human must share a key space")
    keep = metric_a.present & metric_b.present & human.present
    n_items = int(keep.sum())
    if n_items == 0:
        raise EmptyAlignment(f"{metric_a.name!r}, {metric_b.name!r} and human share no keys")
    a = np.where(keep, metric_a.values, np.nan)
    b = np.where(keep, metric_b.values, np.nan)
    rows, cols = np.nonzero(keep)
    observed = (statistic_fn(metric_a.with_values(a), human)
                - statistic_fn(metric_b.with_values(b), human))

    def resample(k: int) -> float:
        rng = np.random.default_rng([config.seed, k])
        swap = np.zeros_like(keep)
        swap[rows, cols] = rng.random(n_items) < 0.5
        a_k = np.where(swap, b, a)
        b_k = np.where(swap, a, b)
        return (statistic_fn(metric_a.with_values(a_k), human)
                - statistic_fn(metric_b.with_values(b_k), human))

    ks = range(config.n_resamples)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            deltas = list(pool.map(resample, ks))
    else:
        deltas = [resample(k) for k in ks]
    n_ge = sum(1 for d in deltas if d >= observed)
    return PermResult(observed, (1 + n_ge) / (1 + config.n_resamples), n_ge,
                      config.n_resamples, n_items)


def perm_both_pvalue(metric_a: ScoreMatrix, metric_b: ScoreMatrix, human: ScoreMatrix,
                     statistic_fn: StatisticFn, config: PermConfig = PermConfig(),
                     workers: int = 1) -> float:
    return perm_both_test(metric_a, metric_b, human, statistic_fn, config, workers).p_value


def cluster_ranks(metrics: Sequence[tuple[str, float]],
                  pairwise_p: Mapping[tuple[str, str], float],
                  alpha: float = 0.05) -> dict[str, int]:
    """rank = 1 + number of metrics with a higher value that beat it at ``alpha``."""
    ranks = {}
    for name, value in metrics:
        better = 0
        for other, other_value in metrics:
            if other_value > value:
                try:
                    p = pairwise_p[(other, name)]
                except KeyError:
                    raise MissingPValue(f"no p-value for ({other}, {name})") from None
                better += p < alpha
        ranks[name] = 1 + better
    return ranks


@dataclasses.dataclass(frozen=True)
class TaskResult:
    """Per-metric values of one evaluation task and its pairwise p-values.

    ``pvalues[(a, b)]`` tests "a better than b"; it is needed whenever a's
    value exceeds b's.
    """

    task_id: str
    values: Mapping[str, float]
    pvalues: Mapping[tuple[str, str], float]


@dataclasses.dataclass(frozen=True)
class RankingRow:
    metric: str
    values: tuple[float, ...]
    average: float
    rank: int


@dataclasses.dataclass(frozen=True)
class RankingTable:
    rows: tuple[RankingRow, ...]
    task_list: tuple[str, ...]
    excluded: Mapping[str, str] = dataclasses.field(default_factory=dict)

    def ranks(self) -> dict[str, int]:
        return {r.metric: r.rank for r in self.rows}

    def averages(self) -> dict[str, float]:
        return {r.metric: r.average for r in self.rows}

    def to_tsv(self) -> str:
        lines = ["\t".join(["metric", *self.task_list, "avg", "rank"])]
        for r in self.rows:
            lines.append("\t".join([r.metric, *map(fmt, r.values), fmt(r.average),
                                    str(r.rank)]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "tasks": list(self.task_list),
            "rows": [{"metric": r.metric,
                      "values": dict(zip(self.task_list, map(float, map(fmt, r.values)))),
                      "avg": float(fmt(r.average)), "rank": r.rank} for r in self.rows],
            "excluded": dict(self.excluded),
        }


def task_ranking(task: TaskResult, alpha: float = 0.05) -> RankingTable:
    return aggregate_ranking([task], alpha=alpha)


def aggregate_ranking(tasks: Sequence[TaskResult], weights: Sequence[float] | None = None,
                      alpha: float = 0.05,
                      excluded: Mapping[str, str] | None = None) -> RankingTable:
    """Average per-task values and cluster the averages by significance.

    A is significantly better than B overall when A's average is higher and
    A beat B significantly in a strict majority of the tasks where A's value
    exceeds B's. Metrics listed in ``excluded`` (name -> reason) are dropped
    from every task.
    """
    if not tasks:
        raise ValueError("no tasks to aggregate")
    excluded = dict(excluded or {})
    names = set(tasks[0].values) - set(excluded)
    for t in tasks[1:]:
        if set(t.values) - set(excluded) != names:
            raise InconsistentMetricSets(
                f"task {t.task_id!r} metrics differ from task {tasks[0].task_id!r}: "
                f"{sorted(names ^ (set(t.values) - set(excluded)))}")
    if weights is not None and len(weights) != len(tasks):
        raise ValueError("one weight per task required")

    def average(name):
        vals = [t.values[name] for t in tasks]
        if weights is None:
            return math.fsum(vals) / len(vals)
        return math.fsum(w * v for w, v in zip(weights, vals)) / math.fsum(weights)

    avgs = {n: average(n) for n in names}
    order = sorted(names, key=lambda n: (-avgs[n], n))

    def significant(a, b):
        wins = [t for t in tasks if t.values[a] > t.values[b]]
        sig = 0
        for t in wins:
            try:
                sig += t.pvalues[(a, b)] < alpha
            except KeyError:
                raise MissingPValue(f"task {t.task_id!r}: no p-value for ({a}, {b})") from None
        return 2 * sig > len(wins)

    rows = []
    for name in order:
        better = sum(1 for other in order if avgs[other] > avgs[name]
                     and significant(other, name))
        rows.append(RankingRow(name, tuple(t.values[name] for t in tasks), avgs[name],
                               1 + better))
    return RankingTable(tuple(rows), tuple(t.task_id for t in tasks), excluded)


def pairwise_pvalues(metrics: Mapping[str, ScoreMatrix], human: ScoreMatrix,
                     statistic_fn: StatisticFn, values: Mapping[str, float],
                     config: PermConfig = PermConfig(),
                     workers: int = 1) -> dict[tuple[str, str], float]:
    """p(a, b) for every ordered pair where a's value is at least b's.

    Equal-valued pairs are tested in both directions.
    """
    out = {}
    names = sorted(metrics)
    for a in names:
        for b in names:
            if a != b and values[a] >= values[b]:
                out[(a, b)] = perm_both_pvalue(metrics[a], metrics[b], human,
                                               statistic_fn, config, workers)
    return out
