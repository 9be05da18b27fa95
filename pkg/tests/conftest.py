import sys
from pathlib import Path

import pytest

# make fifo_oracle importable from any test module
sys.path.insert(0, str(Path(__file__).parent))

from ilaunch.runner import SweepOutcome, run_sweep  # noqa: E402
from ilaunch.workload import builtin  # noqa: E402


@pytest.fixture(scope="session")
def fig6_sweep() -> SweepOutcome:
    """The full launch grid, run once and shared by every test that needs it."""
    return run_sweep(builtin("fig6-grid"), workers=4)
