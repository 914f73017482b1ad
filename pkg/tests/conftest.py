import numpy as np
import pytest

from subgroup_causal import ObservedTable, load_fixture

# Counts of the bundled trial, [t, x, y] for complete cases and [t, y] for
# units with the covariate missing; typed in here so the fixture file is
# checked against an independent copy.
ICD_N_OBS = np.array([[[4, 0], [6, 2]],
                      [[311, 62], [190, 20]]], dtype=float)
ICD_N_MIS = np.array([[382, 95], [136, 23]], dtype=float)


@pytest.fixture(scope="session")
def icd():
    return load_fixture("icd_trial")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_table():
    """A dense 2x2 table with roughly 30% missing covariates."""
    return ObservedTable([[[40, 25], [30, 45]], [[35, 50], [20, 55]]],
                         [[30, 25], [35, 30]])


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
