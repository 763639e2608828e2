"""CSV/JSON persistence for datasets, paths, curves, folds and simulation results.

CSV files use RFC-4180 quoting and LF line endings; floats are written with
``repr`` so they parse back exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .core import SurvivalDataset
from .cv import CveCurve, FoldAssignment
from .errors import DatasetError
from .simulation import ScenarioConfig, ScenarioResult
from .solver import SolutionPath


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise DatasetError(f"{path} is empty; a header row is required", row=1)
    return [h.strip() for h in rows[0]], rows[1:]


def _parse_float(cell: str, line: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DatasetError(f"non-numeric value {cell!r} at line {line}, column {column!r}",
                           row=line, column=column) from None


def parse_dataset_csv(path) -> SurvivalDataset:
    """Read a CSV with ``time`` and ``status`` columns; every other column is a covariate.

    Error locations use file line numbers, the header being line 1.
    """
    header, rows = _read_rows(path)
    for required in ("time", "status"):
        if required not in header:
            raise DatasetError(f"missing required column {required!r}", row=1, column=required)
    if len(set(header)) != len(header):
        raise DatasetError("duplicate column names in header", row=1)
    if not rows:
        raise DatasetError("dataset has no data rows", row=2)
    ti, si = header.index("time"), header.index("status")
    cov_idx = [j for j in range(len(header)) if j not in (ti, si)]
    times = np.empty(len(rows))
    status = np.empty(len(rows))
    X = np.empty((len(rows), len(cov_idx)))
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != len(header):
            raise DatasetError(f"line {line} has {len(row)} fields, header has {len(header)}", row=line)
        t = _parse_float(row[ti], line, "time")
        if not (math.isfinite(t) and t >= 0):
            raise DatasetError(f"time must be finite and non-negative at line {line}", row=line, column="time")
        s = _parse_float(row[si], line, "status")
        if s not in (0.0, 1.0):
            raise DatasetError(f"status must be 0 or 1 at line {line}, got {row[si]!r}", row=line, column="status")
        times[r], status[r] = t, s
        for c, j in enumerate(cov_idx):
            x = _parse_float(row[j], line, header[j])
            if not math.isfinite(x):
                raise DatasetError(f"non-finite covariate at line {line}, column {header[j]!r}",
                                   row=line, column=header[j])
            X[r, c] = x
    return SurvivalDataset(times, status, X, tuple(header[j] for j in cov_idx))


def write_dataset_csv(data: SurvivalDataset, path) -> None:
    rows = (
        [data.times[i], int(data.status[i]), *data.covariates[i]]
        for i in range(data.n)
    )
    _write_rows(path, ["time", "status", *data.names], rows)


def parse_penalty_factors(path, names: Sequence[str]) -> np.ndarray:
    """Per-covariate penalty factors from a ``covariate,factor`` CSV.

    Covariates not listed keep factor 1; 0 leaves a covariate unpenalized.
    """
    header, rows = _read_rows(path)
    if header[:2] != ["covariate", "factor"]:
        raise DatasetError("penalty factor file needs header 'covariate,factor'", row=1)
    factors = np.ones(len(names))
    lookup = {name: j for j, name in enumerate(names)}
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) < 2:
            raise DatasetError(f"line {line} has too few fields", row=line)
        if row[0] not in lookup:
            raise DatasetError(f"unknown covariate {row[0]!r} at line {line}", row=line, column="covariate")
        f = _parse_float(row[1], line, "factor")
        if not (math.isfinite(f) and f >= 0):
            raise DatasetError(f"factor must be finite and non-negative at line {line}", row=line, column="factor")
        factors[lookup[row[0]]] = f
    return factors


def parse_status_file(path) -> np.ndarray:
    """Event indicators from a CSV with a ``status`` column."""
    header, rows = _read_rows(path)
    if "status" not in header:
        raise DatasetError("missing required column 'status'", row=1, column="status")
    si = header.index("status")
    status = np.empty(len(rows))
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) <= si:
            raise DatasetError(f"line {line} has no status field", row=line, column="status")
        s = _parse_float(row[si], line, "status")
        if s not in (0.0, 1.0):
            raise DatasetError(f"status must be 0 or 1 at line {line}", row=line, column="status")
        status[r] = s
    return status


def write_path_csv(path_obj: SolutionPath, names: Sequence[str], path) -> None:
    rows = (
        [path_obj.lambdas[l], int(path_obj.n_nonzero[l]), bool(path_obj.converged[l]), *path_obj.betas[l]]
        for l in range(len(path_obj))
    )
    _write_rows(path, ["lambda", "n_nonzero", "converged", *names], rows)


def read_path_csv(path) -> tuple[SolutionPath, tuple[str, ...]]:
    header, rows = _read_rows(path)
    arr = np.array([[float(c) for c in row] for row in rows]).reshape(len(rows), len(header))
    lambdas = arr[:, 0]
    path_obj = SolutionPath(lambdas, arr[:, 3:], arr[:, 2] == 1, float(lambdas[0]) if rows else float("nan"))
    return path_obj, tuple(header[3:])


CURVE_HEADER = ["method", "lambda", "cve", "cve_rescaled", "defined", "n_nonzero"]


def write_curves_csv(curves: Sequence[CveCurve], path) -> None:
    def rows():
        for curve in curves:
            scaled = curve.rescaled()
            for l in range(curve.lambdas.size):
                nz = "" if curve.n_nonzero is None else int(curve.n_nonzero[l])
                yield [curve.method, curve.lambdas[l], curve.cve[l], scaled[l], bool(curve.defined[l]), nz]

    _write_rows(path, CURVE_HEADER, rows())


def read_curves_csv(path) -> dict[str, CveCurve]:
    header, rows = _read_rows(path)
    if header != CURVE_HEADER:
        raise DatasetError("unexpected curve CSV header", row=1)
    grouped: dict[str, list[list[str]]] = {}
    for row in rows:
        grouped.setdefault(row[0], []).append(row)
    out = {}
    for method, rs in grouped.items():
        out[method] = CveCurve(
            lambdas=np.array([float(r[1]) for r in rs]),
            cve=np.array([float(r[2]) for r in rs]),
            defined=np.array([r[4] == "1" for r in rs]),
            method=method,
            n_nonzero=np.array([int(r[5]) for r in rs]) if all(r[5] for r in rs) else None,
        )
    return out


def write_folds_csv(folds: FoldAssignment, path) -> None:
    _write_rows(path, ["row", "fold"], ((i + 1, int(f)) for i, f in enumerate(folds.fold_of)))


def read_folds_csv(path) -> np.ndarray:
    _, rows = _read_rows(path)
    return np.array([int(r[1]) for r in rows], dtype=np.int64)


RECORD_HEADER = ["replication", "method", "lambda", "n_nonzero", "squared_error",
                 "oracle_squared_error", "brier", "kl", "c_index"]


def write_records_csv(result: ScenarioResult, path) -> None:
    records = sorted(result.records, key=lambda r: (r.replication, result.config.methods.index(r.method)))
    rows = ([r.replication, r.method, r.lam, r.n_nonzero, r.squared_error, r.oracle_squared_error,
             r.brier, r.kl, r.c_index] for r in records)
    _write_rows(path, RECORD_HEADER, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, nan/inf as null, trailing newline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_config(path) -> dict:
    """YAML or JSON mapping from ``path``."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise DatasetError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetError(f"config {path} must be a mapping")
    return raw


def load_scenario_config(path) -> ScenarioConfig:
    raw = load_config(path)
    try:
        return ScenarioConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"invalid scenario config {path}: {exc}") from exc


def write_scenario(result: ScenarioResult, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / "records.csv"
    json_path = out_dir / "summary.json"
    write_records_csv(result, csv_path)
    write_json({
        "config": result.config.to_dict(),
        "methods": result.summary(),
        "undefined_replications": result.undefined,
        "undefined_count": result.undefined_count,
    }, json_path)
    return csv_path, json_path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """What is needed to rerun a command and reproduce its outputs.

    Thread count and output directory are omitted: neither affects the bytes
    written.
    """

    command: str
    config: dict
    seed: Optional[int]
    version: str = __version__
    input_sha256: Optional[dict] = None

    def write(self, path) -> None:
        write_json(asdict(self), path)
