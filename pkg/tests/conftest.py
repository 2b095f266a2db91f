import sys

import numpy as np
import pytest

from cptree.data import SparseVector



@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sv(pairs):
    """SparseVector from ``{index: value}`` or ``[(index, value)]``."""
    items = list(pairs.items()) if isinstance(pairs, dict) else list(pairs)
    return SparseVector.canonical([i for i, _ in items], [v for _, v in items])


def random_x(rng, bits, nnz=5):
    idx = rng.choice(np.arange(1, 1 << bits), size=min(nnz, (1 << bits) - 1), replace=False)
    vals = rng.uniform(-1, 1, idx.size)
    return SparseVector.canonical(np.append(idx, 0), np.append(vals, 1.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
