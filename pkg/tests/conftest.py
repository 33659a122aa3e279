import os

import numpy as np
import pytest

from flma.data import MultiLabelDataset

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def data_dir():
    return os.environ.get("FLMA_DATA_DIR", os.path.join(ROOT, "data"))


def synthetic_dataset(n=240, n_labels=6, n_features=8, seed=0, name="synthetic"):
    """Clustered features whose labels depend on the cluster plus correlated pairs."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=3.0, size=(n_labels, n_features))
    member = rng.random((n, n_labels)) < 0.3
    member[np.arange(n), rng.integers(0, n_labels, n)] = True
    # labels 0/1 and 2/3 tend to co-occur
    member[:, 1] |= member[:, 0] & (rng.random(n) < 0.7)
    member[:, 3] |= member[:, 2] & (rng.random(n) < 0.7)
    features = member.astype(float) @ centers + rng.normal(scale=1.5, size=(n, n_features))
    flip = rng.random((n, n_labels)) < 0.05
    labels = (member ^ flip).astype(np.int8)
    return MultiLabelDataset(features, labels, [f"L{j}" for j in range(n_labels)], name=name)


@pytest.fixture
def toy_transactions():
    # {A,B},{A,B},{A},{B} with A=0, B=1
    return [(0, 1), (0, 1), (0,), (1,)]


@pytest.fixture
def small_dataset():
    return synthetic_dataset(n=120, n_labels=5, n_features=6, seed=3)


# ---------------------------------------------------------------------------
# one PASS/FAIL line per acceptance criterion in the terminal summary
# ---------------------------------------------------------------------------

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _ACCEPTANCE.append((doc, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for doc, outcome in _ACCEPTANCE:
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{status}  {doc}")
