"""File formats: CSV ingestion, fit documents, and table emission.

CSV inputs require a header row, '.' decimal points, and UTF-8 encoding;
parse failures report the offending line and column. Emitted CSVs carry
floats at 17 significant digits and round-trip through :func:`read_table`;
JSON documents keep floats in shortest round-trip form, so re-loading
reproduces the stored values bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import Dataset
from .exceptions import ConfigError, DataError
from .solver import DualFit

__all__ = [
    "read_dataset_csv",
    "write_table",
    "read_table",
    "write_json",
    "read_json",
    "dual_fit_document",
    "dual_fit_from_document",
]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def read_dataset_csv(
    path,
    outcome: str,
    regressors,
    instruments=None,
) -> Dataset:
    """Load a dataset from a headed CSV file.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV file with a header row.
    outcome : str
        Name of the outcome column.
    regressors : sequence of str
        Regressor column names (may be empty for an intercept-only model).
    instruments : sequence of str, optional
        Instrument column names.

    Raises
    ------
    ConfigError
        If a referenced column is missing from the header.
    DataError
        If the file is empty, has no header, or a cell fails to parse;
        the message names the line and column.
    """
    path = Path(path)
    regressors = list(regressors)
    instruments = list(instruments or [])
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(header)}
        for name in [outcome, *regressors, *instruments]:
            if name not in index:
                raise ConfigError(f"column '{name}' not found in {path} header {header}")

        wanted = [outcome, *regressors, *instruments]
        cols: dict[str, list[float]] = {name: [] for name in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}"
                )
            for name in wanted:
                cell = row[index[name]].strip()
                try:
                    cols[name].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column '{name}': "
                        f"could not parse {cell!r} as a number"
                    ) from None

    y = np.asarray(cols[outcome])
    x = (
        np.column_stack([cols[name] for name in regressors])
        if regressors
        else np.empty((y.shape[0], 0))
    )
    z = np.column_stack([cols[name] for name in instruments]) if instruments else None
    return Dataset(
        y=y,
        x=x,
        z=z,
        y_name=outcome,
        x_names=tuple(regressors),
        z_names=tuple(instruments),
    )


def write_table(path, header, rows) -> None:
    """Write a CSV table with floats at 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_table(path) -> tuple[list[str], list[list]]:
    """Read back a CSV table, converting numeric cells to floats."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = []
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(parsed)
    return header, rows


def write_json(path, document: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2)
        handle.write("\n")


def read_json(path) -> dict:
    with Path(path).open(encoding="utf-8") as handle:
        return json.load(handle)


def dual_fit_document(fit: DualFit, se=None) -> dict:
    """JSON-ready document for a location-scale fit."""
    doc = {
        "lambda1": [float(v) for v in fit.lambda1],
        "lambda2": [float(v) for v in fit.lambda2],
        "e": [float(v) for v in fit.e],
        "u": [float(v) for v in fit.u],
        "objective_dual": float(fit.objective_dual),
        "objective_primal": float(fit.objective_primal),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "se": None if se is None else [float(v) for v in se],
    }
    return doc


def dual_fit_from_document(doc: dict) -> tuple[DualFit, np.ndarray | None]:
    """Rebuild a fit (and standard errors, if stored) from its document."""
    fit = DualFit(
        lambda1=np.asarray(doc["lambda1"], dtype=float),
        lambda2=np.asarray(doc["lambda2"], dtype=float),
        e=np.asarray(doc["e"], dtype=float),
        u=np.asarray(doc["u"], dtype=float),
        objective_dual=float(doc["objective_dual"]),
        objective_primal=float(doc["objective_primal"]),
        converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]),
    )
    se = None if doc.get("se") is None else np.asarray(doc["se"], dtype=float)
    return fit, se
