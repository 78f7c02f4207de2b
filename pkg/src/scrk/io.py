"""Persistence: Matrix Market matrices, JSON problem sidecars, CSV traces.

A problem bundle is a directory holding ``matrix.mtx`` plus ``problem.json``
(right-hand side, optional solution, trusted rows, corruption/noise records,
generator provenance). All floats are written with 17 significant digits so
round trips reproduce every bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError
from .solvers import ConvergenceTrace, LinearProblem

SCHEMA = "scrk/1"
MATRIX_FILE = "matrix.mtx"
SIDECAR_FILE = "problem.json"

TRACE_HEADER = ["k", "rel_error", "log10_rel_error", "residual_norm", "gamma_q", "seconds"]
AGGREGATE_HEADER = ["k", "median", "q10", "q90"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_market(a: np.ndarray, path, fmt: str = "array") -> None:
    """Write a dense real matrix in Matrix Market array or coordinate format."""
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    with open(path, "w") as fh:
        if fmt == "array":
            fh.write("%%MatrixMarket matrix array real general\n")
            fh.write(f"{m} {n}\n")
            for j in range(n):  # array format is column-major
                for i in range(m):
                    fh.write(_fmt(a[i, j]) + "\n")
        elif fmt == "coordinate":
            nz = np.nonzero(a)
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{m} {n} {len(nz[0])}\n")
            for i, j in zip(*nz):
                fh.write(f"{i + 1} {j + 1} {_fmt(a[i, j])}\n")
        else:
            raise ValueError(f"unknown Matrix Market format {fmt!r}")


def read_matrix_market(path) -> np.ndarray:
    """Read an array- or coordinate-format real general Matrix Market file."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", line=1)
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise ParseError("expected '%%MatrixMarket matrix <format> real general'", line=1)
    fmt, field, symmetry = (w.lower() for w in header[2:5])
    if field != "real" or symmetry != "general":
        raise ParseError(f"unsupported qualifier '{field} {symmetry}'", line=1)
    if fmt not in ("array", "coordinate"):
        raise ParseError(f"unsupported format '{fmt}'", line=1)

    body = [
        (lineno, text.strip())
        for lineno, text in enumerate(lines[1:], start=2)
        if text.strip() and not text.lstrip().startswith("%")
    ]
    if not body:
        raise ParseError("missing size line", line=len(lines))
    size_lineno, size_line = body[0]
    parts = size_line.split()
    expected = 2 if fmt == "array" else 3
    if len(parts) != expected:
        raise ParseError(f"size line needs {expected} integers", line=size_lineno)
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise ParseError("size line must contain integers", line=size_lineno) from None
    m, n = dims[0], dims[1]
    if m < 1 or n < 1:
        raise ParseError("dimensions must be positive", line=size_lineno)

    a = np.zeros((m, n))
    entries = body[1:]
    if fmt == "array":
        if len(entries) != m * n:
            raise ParseError(
                f"expected {m * n} values, found {len(entries)}", line=size_lineno
            )
        for pos, (lineno, text) in enumerate(entries):
            try:
                value = float(text)
            except ValueError:
                raise ParseError(f"bad value {text!r}", line=lineno) from None
            a[pos % m, pos // m] = value
    else:
        nnz = dims[2]
        if len(entries) != nnz:
            raise ParseError(f"expected {nnz} entries, found {len(entries)}", line=size_lineno)
        for lineno, text in entries:
            parts = text.split()
            if len(parts) != 3:
                raise ParseError("coordinate entries need 'i j value'", line=lineno)
            try:
                i, j, value = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"bad entry {text!r}", line=lineno) from None
            if not (1 <= i <= m and 1 <= j <= n):
                raise ParseError(f"index ({i}, {j}) out of range", line=lineno)
            a[i - 1, j - 1] += value
    return a


def _vector_out(v) -> list | None:
    return None if v is None else [float(x) for x in np.asarray(v).ravel()]


def _metadata_out(metadata: dict) -> dict:
    out = {}
    for key, value in metadata.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (np.integer, np.floating)):
            out[key] = value.item()
        elif isinstance(value, (dict, list, str, int, float, bool)) or value is None:
            out[key] = value
    return out


def save_problem(problem: LinearProblem, path) -> None:
    """Write a problem bundle (matrix.mtx + problem.json) into a directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_matrix_market(problem.a, path / MATRIX_FILE)
    sidecar = {
        "schema": SCHEMA,
        "b": _vector_out(problem.b),
        "x_star": _vector_out(problem.x_star),
        "i0": [int(i) for i in problem.i0],
        "corruption_support": None
        if problem.corruption_support is None
        else [int(i) for i in problem.corruption_support],
        "noise": _vector_out(problem.noise),
        "metadata": _metadata_out(problem.metadata),
    }
    with open(path / SIDECAR_FILE, "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_problem(path) -> LinearProblem:
    """Read a problem bundle directory written by save_problem."""
    path = Path(path)
    a = read_matrix_market(path / MATRIX_FILE)
    with open(path / SIDECAR_FILE) as fh:
        sidecar = json.load(fh)
    if sidecar.get("schema") != SCHEMA:
        raise ParseError(f"unsupported sidecar schema {sidecar.get('schema')!r}")
    b = np.asarray(sidecar["b"], dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"sidecar b has length {b.shape[0]} but the matrix has {a.shape[0]} rows"
        )
    i0 = np.asarray(sidecar.get("i0", []), dtype=np.intp)
    if i0.size and (i0.min() < 0 or i0.max() >= a.shape[0]):
        raise DimensionMismatch("sidecar i0 indices fall outside the matrix rows")
    x_star = sidecar.get("x_star")
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=np.float64)
        if x_star.shape[0] != a.shape[1]:
            raise DimensionMismatch(
                f"sidecar x_star has length {x_star.shape[0]} but the matrix has {a.shape[1]} columns"
            )
    support = sidecar.get("corruption_support")
    noise = sidecar.get("noise")
    return LinearProblem(
        a=a,
        b=b,
        x_star=x_star,
        i0=i0,
        corruption_support=None if support is None else np.asarray(support, dtype=np.intp),
        noise=None if noise is None else np.asarray(noise, dtype=np.float64),
        metadata=sidecar.get("metadata", {}),
    )


def trace_rows(trace: ConvergenceTrace) -> list[list[str]]:
    """CSV rows for one trace; unavailable quantities become empty fields."""
    err0 = trace.records[0].error
    rows = []
    for rec in trace.records:
        rel = ""
        log10 = ""
        if rec.error is not None and err0 is not None and err0 > 0.0:
            rel_value = rec.error / err0
            rel = _fmt(rel_value)
            log10 = _fmt(math.log10(max(rel_value, 1e-300)))
        gamma = "" if rec.quantile_threshold is None else _fmt(rec.quantile_threshold)
        rows.append(
            [str(rec.k), rel, log10, _fmt(rec.residual_norm), gamma, _fmt(rec.seconds)]
        )
    return rows


def write_trace_csv(trace: ConvergenceTrace, path) -> None:
    if not trace.records:
        raise ValueError("trace has no records")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace_rows(trace))


def lower_quantile(values: np.ndarray, p: float) -> float:
    """Lower empirical quantile by rank ceil(p * T) over T samples."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    rank = max(1, math.ceil(p * values.size))
    return float(values[rank - 1])


def trace_quantity(trace: ConvergenceTrace, quantity: str) -> np.ndarray:
    """Per-record series of one trace quantity."""
    if quantity == "log10_rel_error":
        err0 = trace.records[0].error
        if err0 is None or err0 <= 0.0:
            raise ValueError("log10_rel_error needs a known solution with nonzero initial error")
        return np.array(
            [math.log10(max(r.error / err0, 1e-300)) for r in trace.records]
        )
    if quantity == "rel_error":
        err0 = trace.records[0].error
        return np.array([r.error / err0 for r in trace.records])
    if quantity == "residual_norm":
        return np.array([r.residual_norm for r in trace.records])
    raise ValueError(f"unknown trace quantity {quantity!r}")


def aggregate_traces(traces: list[ConvergenceTrace], quantity: str = "log10_rel_error"):
    """Per-iteration median and 0.1/0.9 lower empirical quantiles across trials.

    All traces must share the same record grid (fixed budgets, no early stop).
    Returns (ks, median, q10, q90) arrays.
    """
    ks = traces[0].iterations()
    for t in traces[1:]:
        if not np.array_equal(t.iterations(), ks):
            raise ValueError("traces have mismatched record grids; aggregate needs fixed budgets")
    data = np.vstack([trace_quantity(t, quantity) for t in traces])
    med = np.array([lower_quantile(col, 0.5) for col in data.T])
    q10 = np.array([lower_quantile(col, 0.1) for col in data.T])
    q90 = np.array([lower_quantile(col, 0.9) for col in data.T])
    return ks, med, q10, q90


def write_aggregate_csv(traces: list[ConvergenceTrace], path, quantity: str = "log10_rel_error") -> None:
    ks, med, q10, q90 = aggregate_traces(traces, quantity)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_HEADER)
        for row in zip(ks, med, q10, q90):
            writer.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])
