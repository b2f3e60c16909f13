import os

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    # keep derived bounds out of the user's cache unless a location was chosen
    if "ORDBOUNDS_CACHE_DIR" not in os.environ:
        import tempfile

        os.environ["ORDBOUNDS_CACHE_DIR"] = tempfile.mkdtemp(prefix="ordbounds-test-cache-")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
