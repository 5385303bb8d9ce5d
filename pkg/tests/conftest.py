import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gcnfabric.graphprep import CooMatrix

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile("default")


def random_coo(rng: np.random.Generator, n_rows: int, n_cols: int, nnz: int, integer: bool = False) -> CooMatrix:
    """Distinct random entries; integer weights in [-4, 4] \\ {0} when asked."""
    nnz = min(nnz, n_rows * n_cols)
    keys = rng.choice(n_rows * n_cols, size=nnz, replace=False)
    if integer:
        vals = rng.integers(1, 5, size=nnz) * rng.choice([-1, 1], size=nnz)
    else:
        vals = rng.uniform(0.1, 2.0, size=nnz)
    return CooMatrix(keys // n_cols, keys % n_cols, vals, n_rows, n_cols)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary: one line per criterion -------------------------------------------------

_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.failed:
        prev = _criteria.get(name)
        if prev is None or prev[0] == "PASS":
            _criteria[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_criteria):
        status, detail = _criteria[name]
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
