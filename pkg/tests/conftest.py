import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ontostore.bench.generator import ScaleConfig, generate_dataset  # noqa: E402

# one line per acceptance criterion, filled by test_acceptance and echoed in the summary
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])


@pytest.fixture(scope="session")
def small_ds():
    return generate_dataset(ScaleConfig(1000))


@pytest.fixture(scope="session")
def tiny_ds():
    return generate_dataset(ScaleConfig(60))
