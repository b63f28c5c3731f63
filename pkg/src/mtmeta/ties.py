"""Pair classification, tie-aware pairwise accuracy and tie calibration.

Two translations form a *pair*. Given a threshold ``epsilon`` the metric ties
a pair when ``|m_i - m_j| <= epsilon``; the human side ties a pair only on
exact equality. acc_eq rewards concordant pairs and correctly predicted ties:

    acc_eq = (C + T_hm) / (C + D + T_h + T_m + T_hm)

Tie calibration picks the epsilon that maximises acc_eq on a pair set.
acc_eq is a step function of epsilon that only changes at observed metric
gaps, so scanning ``{0} | {|m_i - m_j|}`` is exhaustive.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Iterable

import numpy as np

from mtmeta.corpus import Key, ScoreMatrix
from mtmeta.errors import EmptyAlignment, EmptyPairs, LengthMismatch


class PairScope(enum.Enum):
    WITHIN_SEGMENT = "segment"
    ALL = "all"


@dataclasses.dataclass(frozen=True)
class TieCounts:
    C: int
    D: int
    T_h: int
    T_m: int
    T_hm: int

    @property
    def total(self) -> int:
        return self.C + self.D + self.T_h + self.T_m + self.T_hm

    def acc_eq(self) -> float:
        if self.total == 0:
            raise EmptyPairs("acc_eq of an empty pair set")
        return (self.C + self.T_hm) / self.total

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class PairSet:
    """Unordered pairs of aligned points, stored column-wise.

    ``left``/``right`` are flat key indices (``segment * n_systems + system``)
    into the originating matrix, or plain positions for vector input.
    """

    m_left: np.ndarray
    m_right: np.ndarray
    h_left: np.ndarray
    h_right: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_systems: int = 0

    def __len__(self):
        return int(self.m_left.shape[0])

    @property
    def human_tied(self) -> np.ndarray:
        return self.h_left == self.h_right

    @property
    def metric_gaps(self) -> np.ndarray:
        return np.abs(self.m_left - self.m_right)

    def subset(self, keep: np.ndarray) -> PairSet:
        return PairSet(self.m_left[keep], self.m_right[keep], self.h_left[keep],
                       self.h_right[keep], self.left[keep], self.right[keep],
                       self.n_systems)

    def with_metric(self, matrix: ScoreMatrix) -> PairSet:
        """Same pairs, metric scores taken from another matrix."""
        flat = matrix.values.ravel()
        m_left, m_right = flat[self.left], flat[self.right]
        if np.isnan(m_left).any() or np.isnan(m_right).any():
            raise EmptyAlignment(f"{matrix.name!r} is missing scores on some pairs")
        return dataclasses.replace(self, m_left=m_left, m_right=m_right)

    def keys(self, segments, systems) -> list[tuple[Key, Key]]:
        n = len(systems)
        return [((segments[a // n], systems[a % n]), (segments[b // n], systems[b % n]))
                for a, b in zip(self.left.tolist(), self.right.tolist())]

    def iter_pairs(self) -> Iterable[tuple[float, float, float, float]]:
        return zip(self.m_left.tolist(), self.m_right.tolist(),
                   self.h_left.tolist(), self.h_right.tolist())


def pair_indices(present: np.ndarray, scope: PairScope) -> tuple[np.ndarray, np.ndarray]:
    """Flat index pairs (i < j) over the present cells of a 2-D mask."""
    n_sys = present.shape[1]
    if scope is PairScope.ALL:
        flat = np.flatnonzero(present)
        i, j = np.triu_indices(flat.size, k=1)
        return flat[i], flat[j]
    lefts, rights = [], []
    # Rows with the same number of present cells share one triu pattern.
    counts = present.sum(axis=1)
    for k in np.unique(counts):
        if k < 2:
            continue
        rows = np.flatnonzero(counts == k)
        cols = np.nonzero(present[rows])[1].reshape(len(rows), k)
        flat = rows[:, None] * n_sys + cols
        i, j = np.triu_indices(k, k=1)
        lefts.append(flat[:, i].ravel())
        rights.append(flat[:, j].ravel())
    if not lefts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    left = np.concatenate(lefts).astype(np.int64)
    right = np.concatenate(rights).astype(np.int64)
    # Flat indices are segment-major, so this restores canonical order.
    order = np.lexsort((right, left))
    return left[order], right[order]


def pairs_from_matrices(metric: ScoreMatrix, human: ScoreMatrix, keep: np.ndarray,
                        scope: PairScope) -> PairSet:
    left, right = pair_indices(keep, scope)
    m, h = metric.values.ravel(), human.values.ravel()
    return PairSet(m[left], m[right], h[left], h[right], left, right, len(human.systems))


def enumerate_pairs(metric: ScoreMatrix, human: ScoreMatrix,
                    scope: PairScope = PairScope.WITHIN_SEGMENT,
                    keys: np.ndarray | None = None) -> PairSet:
    """All unordered pairs of aligned points in the requested scope."""
    if not metric.same_key_space(human):
        raise ValueError(f"{metric.name!r} and {human.name!r} differ in key space")
    keep = metric.present & human.present
    if keys is not None:
        keep &= keys
    if not keep.any():
        raise EmptyAlignment(f"{metric.name!r} and {human.name!r} share no present scores")
    return pairs_from_matrices(metric, human, keep, scope)


def pairs_from_vectors(m, h) -> PairSet:
    """Every unordered pair of positions in two parallel vectors."""
    m = np.asarray(m, dtype=float)
    h = np.asarray(h, dtype=float)
    if m.shape != h.shape:
        raise LengthMismatch(f"lengths differ: {m.size} vs {h.size}")
    i, j = np.triu_indices(m.size, k=1)
    return PairSet(m[i], m[j], h[i], h[j], i, j, m.size)


def count_pairs(pairs: PairSet, epsilon: float = 0.0) -> TieCounts:
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    metric_tied = pairs.metric_gaps <= epsilon
    human_tied = pairs.human_tied
    dm = pairs.m_left - pairs.m_right
    dh = pairs.h_left - pairs.h_right
    untied = ~metric_tied & ~human_tied
    agree = np.sign(dm) == np.sign(dh)
    return TieCounts(
        C=int(np.count_nonzero(untied & agree)),
        D=int(np.count_nonzero(untied & ~agree)),
        T_h=int(np.count_nonzero(human_tied & ~metric_tied)),
        T_m=int(np.count_nonzero(metric_tied & ~human_tied)),
        T_hm=int(np.count_nonzero(metric_tied & human_tied)),
    )


def acc_eq_at(pairs: PairSet, epsilon: float = 0.0) -> float:
    if len(pairs) == 0:
        raise EmptyPairs("acc_eq of an empty pair set")
    return count_pairs(pairs, epsilon).acc_eq()


def _tied_pair_count(*columns: np.ndarray) -> int:
    if columns[0].size == 0:
        return 0
    _, counts = np.unique(np.stack(columns, axis=1), axis=0, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _strict_inversions(seq: np.ndarray) -> int:
    """Number of i < j with seq[i] > seq[j], in O(n log n) numpy passes.

    Works bit by bit on dense ranks: at each level, within a block of equal
    higher-order bits, every 0-bit element is inverted with every earlier
    1-bit element.
    """
    _, ranks = np.unique(seq, return_inverse=True)
    ranks = ranks.astype(np.int64)
    n_bits = int(ranks.max()).bit_length() if ranks.size else 0
    total = 0
    for b in range(n_bits - 1, -1, -1):
        prefix = ranks >> (b + 1)
        order = np.argsort(prefix, kind="stable")
        p = prefix[order]
        bit = (ranks[order] >> b) & 1
        ones_before = np.cumsum(bit) - bit
        starts = np.flatnonzero(np.r_[True, p[1:] != p[:-1]])
        block_offset = np.repeat(ones_before[starts], np.diff(np.r_[starts, p.size]))
        total += int((ones_before - block_offset)[bit == 0].sum())
    return total


def tie_counts(m, h) -> TieCounts:
    """TieCounts at epsilon = 0 over all pairs of two vectors, in O(n log n).

    Same integers as ``count_pairs(pairs_from_vectors(m, h), 0)``.
    """
    m = np.asarray(m, dtype=float)
    h = np.asarray(h, dtype=float)
    if m.shape != h.shape:
        raise LengthMismatch(f"lengths differ: {m.size} vs {h.size}")
    m, h = m + 0.0, h + 0.0  # fold -0.0 into 0.0 before bytewise unique
    n = m.size
    total = n * (n - 1) // 2
    t_hm = _tied_pair_count(m, h)
    t_m = _tied_pair_count(m) - t_hm
    t_h = _tied_pair_count(h) - t_hm
    # Sorted by m then h, strict inversions in h are exactly the discordant pairs.
    d = _strict_inversions(h[np.lexsort((h, m))])
    return TieCounts(C=total - d - t_m - t_h - t_hm, D=d, T_h=t_h, T_m=t_m, T_hm=t_hm)


@dataclasses.dataclass(frozen=True)
class CalibrationResult:
    epsilon: float
    acc_eq: float
    counts_at_epsilon: TieCounts
    candidates_evaluated: int

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "acc_eq": self.acc_eq,
                "counts": self.counts_at_epsilon.as_dict(),
                "candidates_evaluated": self.candidates_evaluated}


def calibrate_epsilon(pairs: PairSet) -> CalibrationResult:
    """Smallest epsilon maximising acc_eq; one sort plus cumulative sums."""
    n = len(pairs)
    if n == 0:
        raise EmptyPairs("cannot calibrate on an empty pair set")
    gaps = pairs.metric_gaps
    human_tied = pairs.human_tied
    dm = pairs.m_left - pairs.m_right
    dh = pairs.h_left - pairs.h_right
    concordant = ~human_tied & (np.sign(dm) == np.sign(dh)) & (dm != 0)

    order = np.argsort(gaps, kind="stable")
    sorted_gaps = gaps[order]
    tied_cum = np.r_[0, np.cumsum(human_tied[order])]
    conc_cum = np.r_[0, np.cumsum(concordant[order])]
    candidates = np.unique(np.r_[0.0, sorted_gaps])
    # Pairs with gap <= candidate become metric ties.
    k = np.searchsorted(sorted_gaps, candidates, side="right")
    correct = tied_cum[k] + (conc_cum[-1] - conc_cum[k])
    best = int(np.argmax(correct))  # first maximum = smallest epsilon
    epsilon = float(candidates[best])
    counts = count_pairs(pairs, epsilon)
    return CalibrationResult(epsilon, int(correct[best]) / n, counts, int(candidates.size))


def calibrate_epsilon_bruteforce(pairs: PairSet) -> CalibrationResult:
    """Reference scan: recount every pair at every candidate.

    Shares nothing with the sorted sweep in ``calibrate_epsilon`` beyond the
    candidate set; each candidate gets a full recount of the five classes.
    """
    n = len(pairs)
    if n == 0:
        raise EmptyPairs("cannot calibrate on an empty pair set")
    dm = pairs.m_left - pairs.m_right
    dh = pairs.h_left - pairs.h_right
    gap = np.abs(dm)
    h_tie = dh == 0
    agree = (dm > 0) == (dh > 0)
    candidates = sorted({0.0} | set(gap.tolist()))
    best = None
    for eps in candidates:
        m_tie = gap <= eps
        thm = int(np.count_nonzero(m_tie & h_tie))
        tm = int(np.count_nonzero(m_tie & ~h_tie))
        th = int(np.count_nonzero(~m_tie & h_tie))
        c = int(np.count_nonzero(~m_tie & ~h_tie & agree))
        d = n - thm - tm - th - c
        acc = (c + thm) / n
        if best is None or acc > best[1]:
            best = (eps, acc, TieCounts(c, d, th, tm, thm))
    return CalibrationResult(best[0], best[1], best[2], len(candidates))


def tie_fraction(pairs: PairSet) -> float:
    n = len(pairs)
    return math.nan if n == 0 else float(np.count_nonzero(pairs.human_tied)) / n
