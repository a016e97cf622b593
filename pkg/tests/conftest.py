import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybrid_screen.data import CLASSIFICATION, REGRESSION, DescriptorTable

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def planted_table(seed, n=400, p=21, informative=0, noise=0.1):
    """One informative column among ``p``; label = 1[x_j + noise > 0]."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = (X[:, informative] + noise * rng.normal(size=n) > 0).astype(float)
    return DescriptorTable([f"c{i}" for i in range(n)], [f"f{j}" for j in range(p)],
                           X, y, CLASSIFICATION)


def linear_regression_table(seed, n=200, p=6, noise=0.05):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 2.0 * X[:, 0] - X[:, 1] + noise * rng.normal(size=n)
    return DescriptorTable([f"r{i}" for i in range(n)], [f"g{j}" for j in range(p)],
                           X, y, REGRESSION)


def write_csv(path, table, id_column="Name", label_column="Label"):
    header = [id_column] + list(table.feature_names)
    if table.labels is not None:
        header.append(label_column)
    lines = [",".join(header)]
    for i, cid in enumerate(table.compound_ids):
        row = [cid] + [repr(float(v)) for v in table.matrix[i]]
        if table.labels is not None:
            label = table.labels[i]
            row.append(str(int(label)) if table.task_kind == CLASSIFICATION
                       else repr(float(label)))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def planted():
    return planted_table(0)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
