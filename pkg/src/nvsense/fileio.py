"""File formats: traces.csv, calib.csv, fit.json, model.json, config sidecars.

All writes are atomic (temp file in the destination directory, then rename)
and all floats are serialized with repr(), the shortest round-tripping form,
so write -> read -> write is a byte-level fixpoint and golden files diff
cleanly.  JSON is emitted with sorted keys and a trailing newline.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile

import numpy as np

from .assay import CalibrationModel, CalibrationPoint, ReplicateGroup
from .errors import SchemaError
from .fitting import FitResult
from .sequence import Trace

TRACE_COLUMNS = ("tau_s", "sig1_counts", "sig2_counts", "signal", "signal_err")
CALIB_COLUMNS = ("amount", "unit", "t1_ms", "t1_err_ms", "location_id")


def atomic_write_text(path: str, text: str) -> None:
    """Write text so readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_of_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: str):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _float_cell(value) -> str:
    return repr(float(value))


def write_traces_csv(path: str, trace: Trace) -> None:
    """Write a trace; count columns are included only when the trace has them."""
    columns = ["tau_s"]
    if trace.sig1 is not None and trace.sig2 is not None:
        columns += ["sig1_counts", "sig2_counts"]
    columns.append("signal")
    if trace.signal_err is not None:
        columns.append("signal_err")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for i in range(len(trace)):
        row = [_float_cell(trace.tau_s[i])]
        if "sig1_counts" in columns:
            row += [_float_cell(trace.sig1[i]), _float_cell(trace.sig2[i])]
        row.append(_float_cell(trace.signal[i]))
        if "signal_err" in columns:
            row.append(_float_cell(trace.signal_err[i]))
        writer.writerow(row)
    atomic_write_text(path, buffer.getvalue())


def _parse_float(cell: str, column: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise SchemaError(f"line {line}: {cell!r} is not a number",
                          column=column) from exc


def read_traces_csv(path: str) -> Trace:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaError("empty file, expected a header row")
    header = rows[0]
    for name in header:
        if name not in TRACE_COLUMNS:
            raise SchemaError("unknown column", column=name)
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column in header")
    for required in ("tau_s", "signal"):
        if required not in header:
            raise SchemaError("required column missing", column=required)
    if ("sig1_counts" in header) != ("sig2_counts" in header):
        raise SchemaError("sig1_counts and sig2_counts must appear together",
                          column="sig1_counts")
    index = {name: header.index(name) for name in header}
    data: dict[str, list[float]] = {name: [] for name in header}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"line {line_no}: expected {len(header)} cells, "
                              f"got {len(row)}")
        for name in header:
            data[name].append(_parse_float(row[index[name]], name, line_no))
    arrays = {name: np.array(values) for name, values in data.items()}
    return Trace(tau_s=arrays["tau_s"], signal=arrays["signal"],
                 signal_err=arrays.get("signal_err"),
                 sig1=arrays.get("sig1_counts"), sig2=arrays.get("sig2_counts"))


def write_calib_csv(path: str, points: list[CalibrationPoint]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CALIB_COLUMNS)
    for p in points:
        writer.writerow([_float_cell(p.amount), p.unit, _float_cell(p.t1_ms),
                         _float_cell(p.t1_err_ms), p.location_id])
    atomic_write_text(path, buffer.getvalue())


def read_calib_csv(path: str) -> list[CalibrationPoint]:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaError("empty file, expected a header row")
    header = rows[0]
    if tuple(header) != CALIB_COLUMNS:
        for name in header:
            if name not in CALIB_COLUMNS:
                raise SchemaError("unknown column", column=name)
        for name in CALIB_COLUMNS:
            if name not in header:
                raise SchemaError("required column missing", column=name)
        raise SchemaError(f"columns must be ordered {','.join(CALIB_COLUMNS)}")
    points = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(CALIB_COLUMNS):
            raise SchemaError(f"line {line_no}: expected {len(CALIB_COLUMNS)} "
                              f"cells, got {len(row)}")
        points.append(CalibrationPoint(
            amount=_parse_float(row[0], "amount", line_no),
            unit=row[1],
            t1_ms=_parse_float(row[2], "t1_ms", line_no),
            t1_err_ms=_parse_float(row[3], "t1_err_ms", line_no),
            location_id=row[4]))
    return points


def fit_result_to_dict(fit: FitResult, input_sha256: str | None = None) -> dict:
    payload = {
        "amplitude": fit.amplitude,
        "offset": fit.offset,
        "t1_ms": fit.t1_ms,
        "t1_err_ms": fit.t1_err_ms,
        "covariance": [[float(v) for v in row] for row in fit.covariance],
        "covariance_order": ["amplitude", "offset", "t1_ms"],
        "reduced_chi2": fit.reduced_chi2,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "bound_hit": fit.bound_hit,
    }
    if input_sha256 is not None:
        payload["input_sha256"] = input_sha256
    return payload


def fit_result_from_dict(payload: dict) -> FitResult:
    return FitResult(amplitude=payload["amplitude"], offset=payload["offset"],
                     t1_ms=payload["t1_ms"], t1_err_ms=payload["t1_err_ms"],
                     covariance=np.array(payload["covariance"]),
                     reduced_chi2=payload["reduced_chi2"],
                     iterations=payload["iterations"],
                     converged=payload["converged"],
                     bound_hit=payload.get("bound_hit", False))


def calibration_model_to_dict(model: CalibrationModel) -> dict:
    return {
        "slope": model.slope,
        "intercept": model.intercept,
        "slope_err": model.slope_err,
        "intercept_err": model.intercept_err,
        "sigma_t1": model.sigma_t1,
        "lod": model.lod,
        "k_factor": model.k_factor,
        "lod_definition": "k_factor * sigma_t1 / |slope|",
        "unit": model.unit,
        "n_points": model.n_points,
        "wrong_direction": model.wrong_direction,
        "groups": [
            {"amount": g.amount, "t1_mean_ms": g.t1_mean_ms,
             "t1_sem_ms": g.t1_sem_ms, "n": g.n, "unit": g.unit,
             "sem_from_fit_err": g.sem_from_fit_err}
            for g in model.groups
        ],
    }


def calibration_model_from_dict(payload: dict) -> CalibrationModel:
    groups = [ReplicateGroup(amount=g["amount"], t1_mean_ms=g["t1_mean_ms"],
                             t1_sem_ms=g["t1_sem_ms"], n=g["n"], unit=g["unit"],
                             sem_from_fit_err=g.get("sem_from_fit_err", False))
              for g in payload.get("groups", [])]
    return CalibrationModel(slope=payload["slope"], intercept=payload["intercept"],
                            slope_err=payload["slope_err"],
                            intercept_err=payload["intercept_err"],
                            sigma_t1=payload["sigma_t1"], lod=payload["lod"],
                            k_factor=payload["k_factor"], unit=payload["unit"],
                            n_points=payload["n_points"], groups=groups,
                            wrong_direction=payload.get("wrong_direction", False))


def sidecar_path(out_path: str) -> str:
    return out_path + ".config.json"


def write_config_sidecar(out_path: str, resolved: dict) -> None:
    write_json(sidecar_path(out_path), resolved)
