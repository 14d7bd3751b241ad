"""On-disk formats: key = value manifests, single-column CSV vectors,
Matrix Market matrices and versioned history CSVs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "write_manifest",
    "read_manifest",
    "write_vector",
    "read_vector",
    "write_matrix",
    "write_history",
    "read_history",
    "format_value",
]

SCHEMA_VERSION = 1


def format_value(v) -> str:
    """Round-trippable text for scalars (``repr`` keeps 17 significant digits)."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _parse_scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_manifest(path, entries: dict) -> None:
    lines = [f"{k} = {format_value(v)}" for k, v in sorted(entries.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse_scalar(value)
    return out


def write_vector(path, v) -> None:
    v = np.asarray(v, float).ravel()
    Path(path).write_text("".join(repr(float(x)) + "\n" for x in v))


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1)


def write_matrix(path, mat) -> None:
    """Matrix Market with 17 significant digits (coordinate for sparse input)."""
    if not sp.issparse(mat):
        mat = np.asarray(mat, float)
    scipy.io.mmwrite(str(path), mat, precision=17)


def write_history(path_or_file, rows, columns, schema: str, config: dict | None = None) -> None:
    """History CSV whose first line is ``# schema=<id>/v<N> config=<json>``.

    NaN entries are written blank.
    """
    header = f"# schema={schema}/v{SCHEMA_VERSION} config={json.dumps(config or {}, sort_keys=True, default=str)}\n"
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c, math.nan)) for c in columns])
    finally:
        if own:
            fh.close()


def read_history(path):
    """Return ``(meta, rows)``; ``meta`` holds ``schema`` and the decoded ``config``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = {}
        if first.startswith("#"):
            body = first[1:].strip()
            schema, _, cfg = body.partition(" config=")
            meta["schema"] = schema.removeprefix("schema=")
            meta["config"] = json.loads(cfg) if cfg else {}
        else:
            fh.seek(0)
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (math.nan if v == "" else _parse_scalar(v)) for k, v in rec.items()})
    return meta, rows
