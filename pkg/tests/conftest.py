import numpy as np
import pytest

from shareverse.config import Config
from shareverse.world.clips import generate_clips


@pytest.fixture(scope="session")
def desk_cfg():
    return Config()


@pytest.fixture(scope="session")
def sample_clips():
    """One simulation rendered in three weathers at desk resolution (nine clip pairs)."""
    return generate_clips(9, seed=7)


@pytest.fixture(scope="session")
def front_clips():
    return generate_clips(3, seed=8, four_views=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance verdict lines ---------------------------------------------------------

VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"[PRIMARY] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
