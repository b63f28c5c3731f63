import numpy as np
import pytest

from mtmeta.corpus import Dataset, ScoreMatrix, write_dataset


def matrix(values, name="m", segments=None, systems=None):
    values = np.asarray(values, dtype=float)
    segments = segments or [f"s{i}" for i in range(values.shape[0])]
    systems = systems or [f"sys{j}" for j in range(values.shape[1])]
    return ScoreMatrix(name, tuple(segments), tuple(systems), values)


def dataset(human, metrics, lengths=None, lp="xx-yy"):
    human = matrix(human, "human")
    ms = {n: matrix(v, n, human.segments, human.systems) for n, v in metrics.items()}
    return Dataset(lp, human.segments, human.systems, human, ms,
                   None if lengths is None else np.asarray(lengths, dtype=float))


def graded_data(n_seg=40, n_sys=8, seed=0, tie_levels=None):
    """Human scores = segment difficulty + system quality + noise.

    ``tie_levels`` rounds human scores onto that many discrete values.
    """
    rng = np.random.default_rng(seed)
    difficulty = rng.normal(0, 2, (n_seg, 1))
    quality = rng.normal(0, 1, (1, n_sys))
    human = difficulty + quality + rng.normal(0, 1, (n_seg, n_sys))
    if tie_levels:
        lo, hi = human.min(), human.max()
        human = np.round((human - lo) / (hi - lo) * (tie_levels - 1))
    metric = human + rng.normal(0, 1, (n_seg, n_sys))
    return human, metric


@pytest.fixture
def write_ds(tmp_path):
    def _write(ds, name="data"):
        root = tmp_path / name
        write_dataset(ds, root)
        return root
    return _write


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
