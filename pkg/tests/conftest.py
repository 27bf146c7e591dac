import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from unified_wf import class_split, make_scenario  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def k15_scenario():
    """K = 15 split 5/5/5, N_t = 8, N_r = 2, P_total = 5 W at 10 dB SNR."""
    from unified_wf.sweep import ScenarioTemplate, trial_seed

    template = ScenarioTemplate()
    base = template.build(trial_seed(42, 0))
    return template.at(base, 10.0, 5.0)


@pytest.fixture
def mixed_scenario():
    return make_scenario(class_split(2, 2, 2), n_t=8, n_r=2, seed=7, p_total=3.0, n0=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
