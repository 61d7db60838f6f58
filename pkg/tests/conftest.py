import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from envclass.features import FeatureSetId, extract_matrix
from envclass.pipeline import TrainSpec, train_bundle
from envclass.models.tree import TreeParams
from envclass.synth import GeneratorConfig, generate_dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status} {detail}")


@pytest.fixture(scope="session")
def small_sessions():
    return generate_dataset(GeneratorConfig(seed=5, sessions_per_label=4, records_per_session=24))


@pytest.fixture(scope="session")
def dt_bundles(small_sessions):
    """One small decision-tree bundle per layout (3 classes)."""
    matrix = extract_matrix(small_sessions)
    return {
        lid: train_bundle(matrix, None, TrainSpec("dt", lid, 3, 0, tree=TreeParams(6, 2)))
        for lid in FeatureSetId
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
