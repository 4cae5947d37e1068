"""Model JSON and dataset CSV readers and writers."""

import csv
import json
import math

import numpy as np

from .errors import InputError
from .inference import BivariateDataset, ReducedModel
from .model import CSPHModel, validate

__all__ = [
    "model_from_dict",
    "load_model",
    "save_json",
    "read_dataset",
    "read_points",
    "write_rows",
]

_MATRIX_KEYS = ("alpha", "T", "U", "Q1", "Q2")


def model_from_dict(d):
    """Build and validate a model from the JSON schema.

    Accepts either ``a1``/``a2`` or ``beta`` (first margin scaled, second
    unscaled), and also a fit result whose ``model`` key holds such an object.
    """
    if "model" in d and isinstance(d["model"], dict):
        d = d["model"]
    missing = [k for k in _MATRIX_KEYS if k not in d]
    if missing:
        raise InputError(f"model is missing keys: {', '.join(missing)}")
    try:
        if "beta" in d:
            if "a1" in d or "a2" in d:
                raise InputError("model gives both beta and a1/a2; use one parameterisation")
            m = ReducedModel(**{k: d[k] for k in _MATRIX_KEYS}, beta=d["beta"]).to_csph()
        else:
            m = CSPHModel(**{k: d[k] for k in _MATRIX_KEYS}, a1=d.get("a1", 1.0), a2=d.get("a2", 1.0))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed model: {exc}") from exc
    return validate(m)


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected a JSON object")
    return model_from_dict(d)


def save_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _read_pairs(path, names):
    """Two numeric columns from a CSV, header optional.

    With a header, columns named ``names`` are used when present, otherwise
    the first two.  Errors carry the 1-based line number.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if not rows:
        return np.zeros(0), np.zeros(0)
    cols = (0, 1)
    first = [c.strip() for c in rows[0][1]]
    if not all(_is_number(c) for c in first[:2]):
        if all(n in first for n in names):
            cols = tuple(first.index(n) for n in names)
        rows = rows[1:]
    a, b = [], []
    for lineno, row in rows:
        try:
            va, vb = (float(row[c]) for c in cols)
        except (IndexError, ValueError):
            raise InputError(f"{path}, line {lineno}: expected two numbers, got {','.join(row)!r}") from None
        if not (math.isfinite(va) and math.isfinite(vb)):
            raise InputError(f"{path}, line {lineno}: non-finite value")
        a.append(va)
        b.append(vb)
    return np.array(a), np.array(b)


def read_dataset(path):
    x1, x2 = _read_pairs(path, ("x1", "x2"))
    neg = np.flatnonzero((x1 < 0) | (x2 < 0))
    if neg.size:
        raise InputError(f"{path}: observation {neg[0] + 1} has a negative entry")
    return BivariateDataset(x1, x2)


def read_points(path):
    return _read_pairs(path, ("z1", "z2"))


def write_rows(path, header, rows):
    """CSV with 17 significant digits for floats."""

    def fmt(v):
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return format(float(v), ".17g")

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
