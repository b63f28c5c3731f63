"""Criterion 9: reproduction against the official WMT23 scores.

Needs the score files converted to the canonical layout, one directory per
language pair (en-de, he-en, zh-en) under ``$MTMETA_WMT23_DIR``. Skipped
otherwise.
"""

import csv
import os
from pathlib import Path

import pytest

from mtmeta.cli import main

FIXTURE = Path(__file__).parent / "fixtures" / "wmt23_segment_tasks.tsv"
ROOT = os.environ.get("MTMETA_WMT23_DIR")
PAIRS = {"ende": "en-de", "heen": "he-en", "zhen": "zh-en"}

pytestmark = [
    pytest.mark.wmt_data,
    pytest.mark.skipif(not ROOT, reason="set MTMETA_WMT23_DIR to run the WMT23 reproduction"),
]


def test_criterion_9_per_task_columns(tmp_path):
    with open(FIXTURE, newline="") as f:
        published = {r["metric"]: r for r in csv.DictReader(f, delimiter="\t")}
    out = tmp_path / "rank.tsv"
    argv = ["rank", "--out", str(out), "--resamples", "1000", "--seed", "0",
            "--grouping", "none", "--statistic", "pearson", "--statistic", "acc_eq"]
    for d in PAIRS.values():
        argv += ["--data", str(Path(ROOT) / d)]
    assert main(argv) == 0
    with open(out, newline="") as f:
        got = {r["metric"]: r for r in csv.DictReader(f, delimiter="\t")}
    for name, row in published.items():
        if name not in got:
            continue
        for short, lp in PAIRS.items():
            for stat in ("pearson", "acc_eq"):
                want = float(row[f"{short}_{stat}"])
                assert float(got[name][f"{lp}:{stat}"]) == pytest.approx(want, abs=3e-3)
