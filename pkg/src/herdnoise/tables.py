"""Plain-text tables with a ``# key: value`` comment preamble."""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np


def write_table(path, columns: Sequence[str], data, header: Dict = None) -> Path:
    """Write a CSV whose first lines are ``# key: <json value>`` comments.

    Values use ``%.17g`` so the file round-trips bit-exactly.
    """
    path = Path(path)
    arr = np.column_stack([np.asarray(c, dtype=float) for c in data]) if len(data) else np.empty((0, len(columns)))
    lines = [f"# {k}: {json.dumps(v, sort_keys=True, default=_jsonable)}"
             for k, v in (header or {}).items()]
    lines.append(",".join(columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        np.savetxt(fh, arr, delimiter=",", fmt="%.17g")
    return path


def read_table(path) -> Tuple[Dict, Dict[str, np.ndarray]]:
    """Inverse of :func:`write_table`: returns (header, {column: values})."""
    header = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                header[key] = json.loads(val)
            else:
                names = line.strip().split(",")
                break
        else:
            raise ValueError(f"{path}: no column header")
        rows = fh.read()
    if rows.strip():
        body = np.loadtxt(io.StringIO(rows), delimiter=",", ndmin=2)
    else:
        body = np.empty((0, len(names)))
    return header, {n: body[:, i] for i, n in enumerate(names)}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")
