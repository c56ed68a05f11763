import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from datasets import bimodal  # noqa: E402
from tabgan.schema import ColumnSpec, Dataset, Kind, TableSchema, Task  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mixed_schema():
    return TableSchema((
        ColumnSpec("amount", Kind.CONTINUOUS),
        ColumnSpec("mortgage", Kind.MIXED, categorical_values_in_mixed=(0.0,)),
        ColumnSpec("color", Kind.CATEGORICAL),
        ColumnSpec("label", Kind.TARGET, target_task=Task.CLASSIFICATION),
    ))


@pytest.fixture
def mixed_data(mixed_schema):
    r = np.random.default_rng(7)
    n = 600
    amount = bimodal(r, n)
    mortgage = np.where(r.random(n) < 0.4, 0.0, bimodal(r, n, 50.0, 200.0, 10.0))
    color = r.choice(np.array(["red", "green", "blue"], dtype=object), n, p=[0.6, 0.3, 0.1])
    label = np.where(amount + r.normal(0, 2, n) > 5, "yes", "no").astype(object)
    return Dataset(mixed_schema, {"amount": amount, "mortgage": mortgage, "color": color, "label": label})


@pytest.fixture
def toy_imbalanced():
    """Bimodal continuous column plus a 90/10 categorical column."""
    r = np.random.default_rng(0)
    n = 400
    schema = TableSchema((ColumnSpec("x", Kind.CONTINUOUS), ColumnSpec("c", Kind.CATEGORICAL)))
    c = np.where(r.random(n) < 0.9, "major", "minor").astype(object)
    return Dataset(schema, {"x": bimodal(r, n), "c": c})


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion; lines are echoed in the terminal summary."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}"
        store[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
