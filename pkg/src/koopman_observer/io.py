"""File formats: the model file, sample CSVs and simulation CSVs.

The model file is JSON written by a small deterministic emitter: keys in
insertion order, floats at 17 significant digits, non-finite values as
``null``.  Reading and re-writing a model file reproduces it byte for byte.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import SampleSet
from .exceptions import DataError

MODEL_FORMAT = "koopman-observer-model"
MODEL_FORMAT_VERSION = 1


def format_float(v) -> str:
    v = float(v)
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _scalar(v):
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _is_flat(seq):
    return all(not isinstance(x, (list, tuple, dict, np.ndarray)) for x in seq)


def _emit(obj, indent, out):
    pad = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for k, (key, val) in enumerate(items):
            out.append(f"{pad}  {json.dumps(str(key))}: ")
            _emit(val, indent + 1, out)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if _is_flat(obj):
            out.append("[" + ", ".join(_scalar(x) for x in obj) + "]")
            return
        out.append("[\n")
        for k, val in enumerate(obj):
            out.append(pad + "  ")
            _emit(val, indent + 1, out)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_scalar(obj))


def dumps_model(model: dict) -> str:
    out = []
    _emit(model, 0, out)
    out.append("\n")
    return "".join(out)


def write_model(path, model: dict) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def read_model(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file {path} does not exist")
    try:
        model = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    if model.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} file")
    return model


def matrix(value) -> np.ndarray:
    """Model-file matrix (list of rows, ``null`` for non-finite) as a float array."""
    arr = np.array(value, dtype=object)
    arr[arr == None] = np.nan  # noqa: E711
    return arr.astype(float)


def scalar(value) -> float:
    return float("nan") if value is None else float(value)


# --------------------------------------------------------------------------
# CSV

def sample_header(n: int):
    return [f"x{i + 1}" for i in range(n)] + [f"xdot{i + 1}" for i in range(n)]


def write_samples(path, samples: SampleSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sample_header(samples.n))
        for x, xd in zip(samples.states, samples.derivatives):
            w.writerow([format(float(v), ".17g") for v in np.concatenate([x, xd])])


def read_samples(path, n=None) -> SampleSet:
    """Read ``x1..xn,xdot1..xdotn`` rows; ``n`` checks the state dimension."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read sample file {path}: {exc}") from exc
    if not rows:
        raise DataError(f"sample file {path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) % 2 or len(header) == 0:
        raise DataError(f"sample file {path} must have 2n columns, found {len(header)}")
    dim = len(header) // 2
    if header != sample_header(dim):
        raise DataError(f"sample file {path} header must be {','.join(sample_header(dim))}")
    if n is not None and dim != n:
        raise DataError(f"sample file {path} has state dimension {dim}, dictionary expects {n}")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise DataError(f"sample file {path} contains no samples")
    try:
        data = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise DataError(f"sample file {path}: {exc}") from exc
    if data.shape[1] != 2 * dim:
        raise DataError(f"sample file {path} has ragged rows")
    return SampleSet(states=data[:, :dim], derivatives=data[:, dim:])


def write_simulation_csv(path, record) -> None:
    n = record.x_true.shape[1]
    header = (["time"] + [f"x{i + 1}" for i in range(n)] + [f"xhat{i + 1}" for i in range(n)]
              + ["e_lifted_norm", "e_state_norm"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = np.column_stack([record.times, record.x_true, record.x_hat,
                                record.e_lifted_norm, record.e_state_norm])
        for row in cols:
            w.writerow([format(float(v), ".17g") for v in row])


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".10g") if isinstance(v, float) else v for v in row])
