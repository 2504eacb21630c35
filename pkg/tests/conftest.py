import csv
import os
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"


def dataset_path(name: str):
    """Path of a case-study CSV: $WBIC_<NAME>_CSV, else tests/data/<name>.csv, else None."""
    env = os.environ.get(f"WBIC_{name.upper()}_CSV")
    if env:
        return env
    path = DATA_DIR / f"{name}.csv"
    return str(path) if path.is_file() else None


def require_dataset(name: str) -> str:
    path = dataset_path(name)
    if path is None:
        pytest.skip(f"{name} dataset not supplied: put {name}.csv in tests/data or set WBIC_{name.upper()}_CSV")
    return path


@pytest.fixture
def pine_path():
    return require_dataset("pine")


@pytest.fixture
def pima_path():
    return require_dataset("pima")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def synthetic_pine(tmp_path):
    """42 rows shaped like the pine data (strength against two density measures)."""
    rng = np.random.default_rng(42)
    x = rng.uniform(20, 35, 42)
    z = x + rng.normal(0, 2, 42)
    y = 3000 + 185 * (x - x.mean()) + rng.normal(0, 250, 42)
    return write_csv(tmp_path / "pine.csv", ["y", "x", "z"], np.column_stack([y, x, z]).round(2).tolist())


@pytest.fixture
def synthetic_pima(tmp_path):
    rng = np.random.default_rng(7)
    n = 532
    cols = {
        "NP": rng.poisson(3, n), "PGC": rng.normal(120, 30, n).round(), "BP": rng.normal(70, 12, n).round(),
        "TST": rng.normal(29, 10, n).round(), "BMI": rng.normal(32, 6, n).round(1),
        "DP": rng.gamma(2, 0.25, n).round(3), "AGE": rng.integers(21, 70, n),
    }
    eta = -0.8 + 0.03 * (cols["PGC"] - 120) + 0.08 * (cols["BMI"] - 32)
    cols["diabetes"] = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    header = list(cols)
    return write_csv(tmp_path / "pima.csv", header, np.column_stack([cols[c] for c in header]).tolist())


# one verdict line per acceptance criterion, repeated in the terminal summary
_VERDICTS = []


def _record(label, text, verdict, detail=""):
    line = f"{verdict} criterion {label}: {text}" + (f" [{detail}]" if detail else "")
    print(line)
    _VERDICTS.append(line)


@pytest.fixture
def criterion():
    """``criterion(label, text, passed, detail)`` prints PASS/FAIL and returns ``passed``."""

    def record(label, text, passed, detail=""):
        _record(label, text, "PASS" if passed else "FAIL", detail)
        return passed

    def need(label, text, name):
        path = dataset_path(name)
        if path is None:
            reason = f"{name} dataset not supplied: put {name}.csv in tests/data or set WBIC_{name.upper()}_CSV"
            _record(label, text, "SKIP", reason)
            pytest.skip(reason)
        return path

    record.need = need
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
