"""Score matrices, datasets and the canonical TSV format.

A dataset directory looks like::

    human.tsv              segment_id  system_id  score
    metrics/<name>.tsv     segment_id  system_id  score
    lengths.tsv            segment_id  system_id  chars      (optional)
    flags.tsv              metric_name reference_free baseline sentinel  (optional)

Scores are decimal literals or the token ``NA``. Missing entries are kept as
NaN inside a matrix; present scores are always finite.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from mtmeta.errors import (
    DuplicateKey,
    EmptyAlignment,
    EmptySystem,
    KeyMismatch,
    ParseError,
)

MISSING_TOKEN = "NA"
SCORE_COLUMNS = ("segment_id", "system_id", "score")
LENGTH_COLUMNS = ("segment_id", "system_id", "chars")
FLAG_COLUMNS = ("metric_name", "reference_free", "baseline", "sentinel")

Key = tuple[str, str]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Scores indexed by (segment, system); NaN marks a MISSING entry."""

    name: str
    segments: tuple[str, ...]
    systems: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (len(self.segments), len(self.systems)):
            raise ValueError(
                f"{self.name}: shape {values.shape} does not match "
                f"{len(self.segments)} segments x {len(self.systems)} systems")
        if np.isinf(values).any():
            raise ValueError(f"{self.name}: scores must be finite")
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_entries(cls, name: str, segments: Sequence[str],
                     systems: Sequence[str],
                     entries: Mapping[Key, float | None]) -> ScoreMatrix:
        seg_index = {s: i for i, s in enumerate(segments)}
        sys_index = {s: j for j, s in enumerate(systems)}
        values = np.full((len(segments), len(systems)), np.nan)
        for (seg, system), score in entries.items():
            if score is not None:
                values[seg_index[seg], sys_index[system]] = score
        return cls(name, tuple(segments), tuple(systems), values)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def get(self, segment: str, system: str) -> float | None:
        v = self.values[self.segments.index(segment), self.systems.index(system)]
        return None if math.isnan(v) else float(v)

    def keys(self) -> list[Key]:
        """All keys in canonical order (segment-major, system-minor)."""
        return [(g, s) for g in self.segments for s in self.systems]

    def with_values(self, values: np.ndarray, name: str | None = None) -> ScoreMatrix:
        return ScoreMatrix(self.name if name is None else name,
                           self.segments, self.systems, values)

    def renamed(self, name: str) -> ScoreMatrix:
        return ScoreMatrix(name, self.segments, self.systems, self.values)

    def masked(self, keep: np.ndarray) -> ScoreMatrix:
        """Copy with every entry outside ``keep`` set to MISSING."""
        return self.with_values(np.where(keep, self.values, np.nan))

    def same_key_space(self, other: ScoreMatrix) -> bool:
        return self.segments == other.segments and self.systems == other.systems

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (self.name == other.name and self.same_key_space(other)
                and np.array_equal(self.values, other.values, equal_nan=True))

    def __hash__(self):
        return hash((self.name, self.segments, self.systems))


@dataclasses.dataclass(frozen=True)
class MetricFlags:
    reference_free: bool = False
    baseline: bool = False
    sentinel: bool = False


@dataclasses.dataclass(frozen=True)
class Dataset:
    language_pair: str
    segments: tuple[str, ...]
    systems: tuple[str, ...]
    human: ScoreMatrix
    metrics: Mapping[str, ScoreMatrix]
    candidate_lengths: np.ndarray | None = None
    metric_flags: Mapping[str, MetricFlags] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        for m in [self.human, *self.metrics.values()]:
            if m.segments != self.segments or m.systems != self.systems:
                raise ValueError(f"matrix {m.name!r} does not share the dataset key space")
        if self.candidate_lengths is not None:
            lengths = _frozen(self.candidate_lengths)
            if lengths.shape != self.human.shape:
                raise ValueError("candidate_lengths shape mismatch")
            if (lengths[~np.isnan(lengths)] < 0).any():
                raise ValueError("candidate_lengths must be non-negative")
            object.__setattr__(self, "candidate_lengths", lengths)
        object.__setattr__(self, "metrics", dict(self.metrics))

    def metric(self, name: str) -> ScoreMatrix:
        if name == self.human.name:
            return self.human
        try:
            return self.metrics[name]
        except KeyError:
            raise KeyError(f"unknown metric {name!r}; have {sorted(self.metrics)}") from None

    def with_metric(self, matrix: ScoreMatrix) -> Dataset:
        metrics = dict(self.metrics)
        metrics[matrix.name] = matrix
        return dataclasses.replace(self, metrics=metrics)


@dataclasses.dataclass(frozen=True)
class AlignedPairVector:
    metric_scores: np.ndarray
    human_scores: np.ndarray
    keys: tuple[Key, ...]
    segment_index: np.ndarray
    system_index: np.ndarray

    def __len__(self):
        return len(self.keys)


def align(metric: ScoreMatrix, human: ScoreMatrix,
          keys: Iterable[Key] | np.ndarray | None = None) -> AlignedPairVector:
    """Pairwise deletion: keep keys where both scores are present.

    ``keys`` restricts the result to a subset, given either as (segment,
    system) tuples or as a boolean mask over the matrix.
    """
    if not metric.same_key_space(human):
        raise ValueError(f"{metric.name!r} and {human.name!r} differ in key space")
    both = metric.present & human.present
    if keys is not None:
        if isinstance(keys, np.ndarray) and keys.dtype == bool:
            both &= keys
        else:
            subset = np.zeros_like(both)
            seg_index = {s: i for i, s in enumerate(human.segments)}
            sys_index = {s: j for j, s in enumerate(human.systems)}
            for seg, system in keys:
                subset[seg_index[seg], sys_index[system]] = True
            both &= subset
    rows, cols = np.nonzero(both)  # row-major, i.e. canonical order
    if rows.size == 0:
        raise EmptyAlignment(f"{metric.name!r} and {human.name!r} share no present scores")
    return AlignedPairVector(
        metric_scores=metric.values[rows, cols],
        human_scores=human.values[rows, cols],
        keys=tuple((human.segments[i], human.systems[j]) for i, j in zip(rows, cols)),
        segment_index=rows,
        system_index=cols,
    )


def system_scores(matrix: ScoreMatrix) -> dict[str, float]:
    """Per-system mean over present entries."""
    out = {}
    for j, system in enumerate(matrix.systems):
        col = matrix.values[:, j]
        col = col[~np.isnan(col)]
        if col.size == 0:
            raise EmptySystem(f"{matrix.name}: system {system!r} has no scores")
        out[system] = float(col.mean())
    return out


# -- canonical TSV ---------------------------------------------------------

def _read_rows(path: Path, columns: tuple[str, ...]):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file, expected a header line")
        if tuple(header) != columns:
            raise ParseError(path, 1, f"header {header} != expected {list(columns)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise ParseError(path, lineno, f"expected {len(columns)} columns, got {len(row)}")
            yield lineno, row


def _parse_score(path, lineno, text: str) -> float | None:
    if text == MISSING_TOKEN:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric score {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, lineno, f"non-finite score {text!r}")
    return value


def read_score_file(path) -> tuple[list[str], list[str], dict[Key, float | None]]:
    """Parse one score TSV; returns segments and systems by first appearance."""
    path = Path(path)
    segments: dict[str, None] = {}
    systems: dict[str, None] = {}
    entries: dict[Key, float | None] = {}
    for lineno, (seg, system, score) in _read_rows(path, SCORE_COLUMNS):
        if not seg or not system:
            raise ParseError(path, lineno, "empty segment or system id")
        if (seg, system) in entries:
            raise DuplicateKey(path, lineno, f"repeated key ({seg}, {system})")
        entries[(seg, system)] = _parse_score(path, lineno, score)
        segments.setdefault(seg)
        systems.setdefault(system)
    return list(segments), list(systems), entries


def _read_keyed(path: Path, columns, segments, systems, parse):
    seg_index = {s: i for i, s in enumerate(segments)}
    sys_index = {s: j for j, s in enumerate(systems)}
    values = np.full((len(segments), len(systems)), np.nan)
    seen = set()
    for lineno, (seg, system, text) in _read_rows(path, columns):
        if seg not in seg_index or system not in sys_index:
            raise KeyMismatch(path, lineno, f"unknown key ({seg}, {system})")
        if (seg, system) in seen:
            raise DuplicateKey(path, lineno, f"repeated key ({seg}, {system})")
        seen.add((seg, system))
        v = parse(path, lineno, text)
        if v is not None:
            values[seg_index[seg], sys_index[system]] = v
    return values


def _parse_length(path, lineno, text):
    if text == MISSING_TOKEN:
        return None
    if not text.isdigit():
        raise ParseError(path, lineno, f"length must be a non-negative integer, got {text!r}")
    return int(text)


def _parse_flag(path, lineno, text):
    if text not in ("0", "1"):
        raise ParseError(path, lineno, f"flag must be 0 or 1, got {text!r}")
    return text == "1"


def load_dataset(path, language_pair: str | None = None) -> Dataset:
    """Load a dataset directory in the canonical TSV layout."""
    root = Path(path)
    human_path = root / "human.tsv"
    if not human_path.is_file():
        raise ParseError(human_path, 0, "missing human.tsv")
    segments, systems, entries = read_score_file(human_path)
    human = ScoreMatrix.from_entries("human", segments, systems, entries)

    metrics = {}
    metric_dir = root / "metrics"
    if metric_dir.is_dir():
        for f in sorted(metric_dir.glob("*.tsv")):
            name = f.name[:-len(".tsv")]
            values = _read_keyed(f, SCORE_COLUMNS, segments, systems, _parse_score)
            metrics[name] = ScoreMatrix(name, segments, systems, values)

    lengths = None
    if (root / "lengths.tsv").is_file():
        lengths = _read_keyed(root / "lengths.tsv", LENGTH_COLUMNS, segments, systems,
                              _parse_length)

    flags = {}
    if (root / "flags.tsv").is_file():
        fpath = root / "flags.tsv"
        for lineno, (name, *bits) in _read_rows(fpath, FLAG_COLUMNS):
            if name not in metrics:
                raise KeyMismatch(fpath, lineno, f"flags for unknown metric {name!r}")
            flags[name] = MetricFlags(*(_parse_flag(fpath, lineno, b) for b in bits))

    if language_pair is None:
        language_pair = root.resolve().name
    return Dataset(language_pair, tuple(segments), tuple(systems), human, metrics,
                   lengths, flags)


def format_score(value: float) -> str:
    """Shortest text that parses back to the same float."""
    return MISSING_TOKEN if math.isnan(value) else repr(float(value))


def write_score_file(matrix: ScoreMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\t".join(SCORE_COLUMNS) + "\n")
        for i, seg in enumerate(matrix.segments):
            for j, system in enumerate(matrix.systems):
                f.write(f"{seg}\t{system}\t{format_score(matrix.values[i, j])}\n")


def write_dataset(dataset: Dataset, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_score_file(dataset.human, root / "human.tsv")
    for name, matrix in dataset.metrics.items():
        write_score_file(matrix, root / "metrics" / f"{name}.tsv")
    if dataset.candidate_lengths is not None:
        with open(root / "lengths.tsv", "w", encoding="utf-8", newline="") as f:
            f.write("\t".join(LENGTH_COLUMNS) + "\n")
            for i, seg in enumerate(dataset.segments):
                for j, system in enumerate(dataset.systems):
                    v = dataset.candidate_lengths[i, j]
                    f.write(f"{seg}\t{system}\t{MISSING_TOKEN if math.isnan(v) else int(v)}\n")
    if dataset.metric_flags:
        with open(root / "flags.tsv", "w", encoding="utf-8", newline="") as f:
            f.write("\t".join(FLAG_COLUMNS) + "\n")
            for name, fl in dataset.metric_flags.items():
                bits = (int(fl.reference_free), int(fl.baseline), int(fl.sentinel))
                f.write(name + "\t" + "\t".join(map(str, bits)) + "\n")


def file_digests(paths: Iterable[os.PathLike | str]) -> dict[str, str]:
    """sha256 of every regular file under the given paths."""
    import hashlib

    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
        for f in files:
            out[str(f)] = hashlib.sha256(f.read_bytes()).hexdigest()
    return out
