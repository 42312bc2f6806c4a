"""Matrix files and deterministic JSON output."""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .markov_core import StochasticMatrix, validate


def parse_matrix_text(text: str, row_tol: float = 1e-9) -> StochasticMatrix:
    """Parse JSON {"n": int, "rows": [[...], ...]} or CSV with n rows of n numbers."""
    stripped = text.strip()
    if not stripped:
        raise ValidationError("empty matrix file")
    if stripped[0] == "{":
        try:
            doc = json.loads(stripped)
            rows = doc["rows"]
            n = int(doc.get("n", len(rows)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"malformed JSON matrix: {exc}") from exc
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValidationError(f"matrix is not {n}x{n}")
    else:
        rows = []
        for lineno, line in enumerate(csv.reader(_io.StringIO(stripped)), start=1):
            if not line or all(not c.strip() for c in line):
                continue
            try:
                rows.append([float(c) for c in line])
            except ValueError as exc:
                raise ValidationError(f"malformed CSV on line {lineno}: {exc}") from exc
        if any(len(r) != len(rows) for r in rows):
            raise ValidationError("CSV matrix is not square")
    try:
        return validate(np.array(rows, dtype=float), row_tol)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed matrix: {exc}") from exc


def read_matrix(path, row_tol: float = 1e-9) -> StochasticMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    return parse_matrix_text(text, row_tol)


def matrix_json(P) -> dict:
    A = np.asarray(P)
    return {"n": int(A.shape[0]), "rows": A.tolist()}


def write_matrix(P, path, fmt: str = "json") -> None:
    A = np.asarray(P)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(A.tolist())
    else:
        Path(path).write_text(json.dumps(matrix_json(A)) + "\n")


def read_vector(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        if text.startswith("["):
            return np.asarray(json.loads(text), dtype=float)
        return np.asarray([float(t) for t in text.replace(",", " ").split()])
    except ValueError as exc:
        raise ValidationError(f"malformed vector file {path}: {exc}") from exc


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(doc) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, default=_default, allow_nan=True) + "\n"
