"""Command-line interface.

Exit codes: 0 success, 2 bad input data, 3 degenerate statistic,
4 invalid flags. Every command writes ``<out>.manifest.json`` next to its
output with the resolved configuration and sha256 digests of the inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys
from pathlib import Path

from mtmeta import __version__
from mtmeta._format import fmt, rounded
from mtmeta.correlation import Grouping, Statistic
from mtmeta.corpus import file_digests, load_dataset, write_score_file
from mtmeta.errors import DataError, DegenerateError, MetaEvalError
from mtmeta.experiments import (
    DEFAULT_GRID,
    SubsampleConfig,
    held_out_sweep,
    length_bias_report,
    metric_correlation_matrix,
    tie_sweep,
)
from mtmeta.sentinels import (
    DiscreteLevels,
    PerturbConfig,
    Reducer,
    discretize,
    perturb_discrete,
    segment_constant_scores,
)
from mtmeta.significance import (
    STATISTIC_NAMES,
    PermConfig,
    TaskResult,
    aggregate_ranking,
    make_statistic,
    pairwise_pvalues,
    task_ranking,
)
from mtmeta.ties import PairScope, calibrate_epsilon, enumerate_pairs

EXIT_DATA, EXIT_DEGENERATE, EXIT_FLAGS = 2, 3, 4

DEFAULT_STATISTICS = ("pearson", "acc_eq")


class FlagError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FLAGS, f"{self.prog}: error: {message}\n")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(args, inputs) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    _write_json(Path(str(args.out) + ".manifest.json"), {
        "command": args.command,
        "config": config,
        "inputs": file_digests(inputs),
        "tool_version": __version__,
    })


def _resolve_seed(args) -> None:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbelow(2**32)


def _metric_names(dataset, requested):
    names = list(requested) if requested else sorted(dataset.metrics)
    for n in names:
        if n != "human" and n not in dataset.metrics:
            raise DataError(f"unknown metric {n!r}; have {sorted(dataset.metrics)}")
    return names


def _read_grid(path) -> list[SubsampleConfig]:
    text = Path(path).read_text(encoding="utf-8")
    dialect = "excel-tab" if "\t" in text.splitlines()[0] else "excel"
    rows = list(csv.DictReader(text.splitlines(), dialect=dialect))
    try:
        grid = [SubsampleConfig(float(r["p_t"]), float(r["p_n"])) for r in rows]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: grid needs p_t and p_n columns in [0, 1] ({e})") from None
    if not grid:
        raise DataError(f"{path}: empty grid")
    return grid


def _grid_from_args(args) -> list[SubsampleConfig]:
    single = args.p_tied is not None or args.p_untied is not None
    if args.grid_file and single:
        raise FlagError("--grid-file cannot be combined with --p-tied/--p-untied")
    if args.grid_file:
        return _read_grid(args.grid_file)
    if single:
        try:
            return [SubsampleConfig(args.p_tied or 0.0, args.p_untied or 0.0)]
        except ValueError as e:
            raise FlagError(str(e)) from None
    return list(DEFAULT_GRID)


# -- commands --------------------------------------------------------------

def _evaluate(fn, metric, human, name):
    try:
        return fn(metric, human)
    except DegenerateError as e:
        raise DegenerateError(f"metric {name!r}: {e}") from None


def _read_precomputed(path) -> list[TaskResult]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        header = next(reader, None)
        if not header or header[0] != "metric" or len(header) < 2:
            raise DataError(f"{path}:1: header must be 'metric' followed by task ids")
        values = {t: {} for t in header[1:]}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
            for t, v in zip(header[1:], row[1:]):
                try:
                    values[t][row[0]] = float(v)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric value {v!r}") from None
    # Without resamples every strict difference is treated as significant.
    tasks = []
    for t, vals in values.items():
        p = {(a, b): 0.0 for a in vals for b in vals if vals[a] > vals[b]}
        tasks.append(TaskResult(t, vals, p))
    return tasks


def cmd_rank(args) -> None:
    out = Path(args.out)
    statistics = args.statistic or list(DEFAULT_STATISTICS)
    grouping = Grouping(args.grouping)
    scope = PairScope(args.pair_scope)
    config = PermConfig(args.resamples, args.alpha, args.seed)
    inputs = list(args.data or [])
    if args.precomputed:
        if args.data:
            raise FlagError("--precomputed cannot be combined with --data")
        tasks = _read_precomputed(args.precomputed)
        inputs.append(args.precomputed)
    else:
        if not args.data:
            raise FlagError("rank needs --data or --precomputed")
        tasks = []
        for d in args.data:
            ds = load_dataset(d)
            names = _metric_names(ds, args.metric)
            if len(names) < 2:
                raise DataError(f"{d}: ranking needs at least 2 metrics")
            metrics = {n: ds.metric(n) for n in names}
            for stat in statistics:
                fn = make_statistic(stat, grouping, scope)
                values = {n: _evaluate(fn, m, ds.human, n) for n, m in metrics.items()}
                pvals = pairwise_pvalues(metrics, ds.human, fn, values, config, args.workers)
                tasks.append(TaskResult(f"{ds.language_pair}:{stat}", values, pvals))
    table = aggregate_ranking(tasks, alpha=args.alpha)
    _write(out, table.to_tsv())
    _write_json(Path(str(out) + ".json"), {
        "aggregate": table.to_json(),
        "tasks": {t.task_id: task_ranking(t, args.alpha).to_json() for t in tasks},
    })
    _manifest(args, inputs)


def cmd_calibrate(args) -> None:
    ds = load_dataset(args.data)
    scope = PairScope(args.pair_scope)
    result = {}
    for name in _metric_names(ds, args.metric):
        metric = ds.metric(name)
        if not metric.present.any():
            raise DataError(f"metric {name!r} has no scores")
        r = calibrate_epsilon(enumerate_pairs(metric, ds.human, scope))
        result[name] = {"epsilon": rounded(r.epsilon), "acc_eq": rounded(r.acc_eq),
                        "counts": r.counts_at_epsilon.as_dict(),
                        "candidates_evaluated": r.candidates_evaluated}
    _write_json(Path(args.out), result)
    _manifest(args, [args.data])


def cmd_sweep(args) -> None:
    _resolve_seed(args)
    grid = _grid_from_args(args)
    ds = load_dataset(args.data)
    res = tie_sweep(ds, _metric_names(ds, args.metric), grid, args.n_seeds, args.seed,
                    PairScope(args.pair_scope), args.workers)
    _write(Path(args.out), res.to_csv())
    _write_json(Path(str(args.out) + ".json"), res.to_json())
    _manifest(args, [args.data] + ([args.grid_file] if args.grid_file else []))


def cmd_heldout(args) -> None:
    _resolve_seed(args)
    grid = _grid_from_args(args)
    ds = load_dataset(args.data)
    res = held_out_sweep(ds, _metric_names(ds, args.metric), grid,
                         args.calibration_fraction, args.seed, args.n_seeds,
                         PairScope(args.pair_scope))
    _write(Path(args.out), res.to_csv())
    _write_json(Path(str(args.out) + ".json"), res.to_json())
    _manifest(args, [args.data] + ([args.grid_file] if args.grid_file else []))


def cmd_lengthbias(args) -> None:
    ds = load_dataset(args.data)
    rep = length_bias_report(ds, args.metric, args.min_human)
    _write(Path(args.out), rep.scatter_csv())
    _write_json(Path(str(args.out) + ".json"), {
        "metric": rep.metric, "n": rep.fit.n,
        "slope": rounded(rep.fit.slope), "intercept": rounded(rep.fit.intercept)})
    _manifest(args, [args.data])


def cmd_matrix(args) -> None:
    ds = load_dataset(args.data)
    names = _metric_names(ds, args.metric)
    if len(names) < 2:
        raise FlagError("matrix needs at least two metrics")
    stat = Statistic.PEARSON if args.statistic == "pearson" else Statistic.KENDALL_TAU
    mat = metric_correlation_matrix(ds, names, stat, Grouping(args.grouping))
    lines = ["\t".join(["metric", *names])]
    lines += ["\t".join([n, *(fmt(v) for v in row)]) for n, row in zip(names, mat)]
    _write(Path(args.out), "\n".join(lines) + "\n")
    _manifest(args, [args.data])


def cmd_sentinel(args) -> None:
    ds = load_dataset(args.data)
    if args.kind == "seg-const":
        if args.metric:
            raise FlagError("seg-const is built from human scores; drop --metric")
        out = segment_constant_scores(ds.human, Reducer(args.reducer))
    else:
        if not args.metric:
            raise FlagError(f"{args.kind} needs --metric")
        metric = ds.metric(args.metric)
        levels = DiscreteLevels(tuple(args.levels)) if args.levels else None
        if args.kind == "perturb":
            _resolve_seed(args)
            try:
                cfg = PerturbConfig(args.variance, args.seed, args.truncation)
            except ValueError as e:
                raise FlagError(str(e)) from None
            out = perturb_discrete(metric, cfg, levels)
        else:
            if levels is None:
                raise FlagError("discretize needs --levels")
            out = discretize(metric, levels)
    write_score_file(out, Path(args.out))
    args.name = out.name
    _manifest(args, [args.data])


# -- parser ----------------------------------------------------------------

def _unit_interval(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} outside [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtmeta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=False):
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--metric", action="append", help="metric name (repeatable)")
        p.add_argument("--pair-scope", choices=[s.value for s in PairScope],
                       default=PairScope.WITHIN_SEGMENT.value)
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("rank", help="per-task and aggregated significance rankings")
    common(p)
    p.add_argument("--data", action="append", help="dataset directory (repeatable)")
    p.add_argument("--precomputed", help="TSV of per-task values instead of --data")
    p.add_argument("--statistic", action="append", choices=STATISTIC_NAMES)
    p.add_argument("--grouping", choices=[g.value for g in Grouping], default="none")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("calibrate", help="tie calibration per metric")
    common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_calibrate)

    for name, func, help_ in [("sweep", cmd_sweep, "tied-pair subsampling sweep"),
                              ("heldout", cmd_heldout, "held-out tie calibration")]:
        p = sub.add_parser(name, help=help_)
        common(p, seed=True)
        p.add_argument("--data", required=True)
        p.add_argument("--grid-file", help="CSV/TSV with p_t and p_n columns")
        p.add_argument("--p-tied", type=_unit_interval, default=None)
        p.add_argument("--p-untied", type=_unit_interval, default=None)
        p.add_argument("--n-seeds", type=int, default=5 if name == "sweep" else 1)
        if name == "sweep":
            p.add_argument("--workers", type=int, default=1)
        else:
            p.add_argument("--calibration-fraction", type=float, default=0.2)
        p.set_defaults(func=func)

    p = sub.add_parser("lengthbias", help="scores against candidate length")
    p.add_argument("--out", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--min-human", type=float, default=None)
    p.set_defaults(func=cmd_lengthbias)

    p = sub.add_parser("matrix", help="metric-vs-metric correlation matrix")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--grouping", choices=[g.value for g in Grouping], default="none")
    p.add_argument("--statistic", choices=["pearson", "kendall"], default="pearson")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("sentinel", help="write a synthetic sentinel metric")
    p.add_argument("kind", choices=["seg-const", "perturb", "discretize"])
    p.add_argument("--out", required=True, help="metric TSV to write")
    p.add_argument("--data", required=True)
    p.add_argument("--metric")
    p.add_argument("--reducer", choices=[r.value for r in Reducer], default="mean")
    p.add_argument("--levels", type=float, nargs="+")
    p.add_argument("--variance", type=float, default=1e-4)
    p.add_argument("--truncation", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sentinel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except FlagError as e:
        print(f"mtmeta {args.command}: {e}", file=sys.stderr)
        return EXIT_FLAGS
    except (DataError, FileNotFoundError, KeyError) as e:
        print(f"mtmeta {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateError as e:
        print(f"mtmeta {args.command}: degenerate statistic: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except MetaEvalError as e:
        print(f"mtmeta {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
