import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from series2vec.data import make_synthetic, split  # noqa: E402


@pytest.fixture(scope="session")
def tones_split():
    """The acceptance fixture: 3 tone classes, 300 train / 150 test, L=64, sigma=0.3."""
    ds = make_synthetic("tones", 150, length=64, d_x=1, noise_sigma=0.3, seed=0)
    train, _, test = split(ds, (2 / 3, 0.0, 1 / 3), seed=0, stratified=True)
    return train, test


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
