"""CSV ingestion for the case-study datasets."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .logistic import standardize


class DataError(ValueError):
    """A dataset file is missing or malformed."""


SCHEMAS = {
    "pine": (("y", "x", "z"), 42),
    "pima": (("NP", "PGC", "BP", "TST", "BMI", "DP", "AGE", "diabetes"), 532),
    "mixture": (("y",), None),
}

_BINARY_WORDS = {"no": 0.0, "yes": 1.0}


def _binary(cell: str) -> float:
    """0/1 in any numeric spelling, or yes/no."""
    word = _BINARY_WORDS.get(cell.lower())
    if word is not None:
        return word
    value = float(cell)
    if value not in (0.0, 1.0):
        raise ValueError(cell)
    return value


@dataclass(frozen=True)
class Dataset:
    schema: str
    columns: dict
    n: int

    @property
    def prepared(self) -> dict:
        """Pine covariates centred, Pima covariates standardised; others as read."""
        cols = dict(self.columns)
        if self.schema == "pine":
            for c in ("x", "z"):
                cols[c] = cols[c] - cols[c].mean()
        elif self.schema == "pima":
            names = SCHEMAS["pima"][0][:-1]
            Z = standardize(np.column_stack([cols[c] for c in names]))
            for j, c in enumerate(names):
                cols[c] = Z[:, j]
        return cols


def ingest_csv(path, schema: str, expected_n: int | None = -1) -> Dataset:
    """Read and validate a dataset.

    ``expected_n=-1`` uses the schema's declared row count (if any); pass
    ``None`` to skip the row-count check.
    """
    if schema not in SCHEMAS:
        raise DataError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    header, declared_n = SCHEMAS[schema]
    if expected_n == -1:
        expected_n = declared_n
    if not os.path.isfile(path):
        raise DataError(f"{path}: file not found")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(got) != header:
            raise DataError(f"{path}: header {got} does not match expected {list(header)}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}")
            values = []
            for col_no, (name, cell) in enumerate(zip(header, row), start=1):
                cell = cell.strip()
                try:
                    if name == "diabetes":
                        value = _binary(cell)
                    else:
                        value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}, column {col_no} ({name}): bad value {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(f"{path}: line {line_no}, column {col_no} ({name}): non-finite value")
                values.append(value)
            rows.append(values)

    n = len(rows)
    if expected_n is not None and n != expected_n:
        raise DataError(f"{path}: {n} data rows, schema {schema!r} expects {expected_n}")
    if n == 0:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    columns = {name: arr[:, j].copy() for j, name in enumerate(header)}
    return Dataset(schema, columns, n)


def write_mixture_csv(path, data) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        for v in np.asarray(data, dtype=float):
            w.writerow([repr(float(v))])
