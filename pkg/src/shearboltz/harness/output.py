"""CSV and manifest output.

Every CSV starts with a ``# shearboltz-csv v<N> kind=<kind>`` comment line,
then a header row. Floats use ``%.17g`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

CSV_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, str)):
        return str(x)
    if hasattr(x, "item"):
        return _fmt(x.item())
    return "%.17g" % x


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path: str | Path, kind: str, columns, rows) -> Path:
    buf = io.StringIO()
    buf.write(f"# shearboltz-csv v{CSV_VERSION} kind={kind}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row of length {len(r)} for {len(columns)} columns")
        w.writerow([_fmt(x) for x in r])
    atomic_write_text(path, buf.getvalue())
    return Path(path)


def read_csv(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """Return (kind, header, rows as strings)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# shearboltz-csv"):
            raise ValueError(f"{path}: missing schema line")
        version = int(first.split()[2].lstrip("v"))
        if version != CSV_VERSION:
            raise ValueError(f"{path}: schema v{version}, expected v{CSV_VERSION}")
        kind = first.split("kind=")[1].strip()
        r = csv.reader(fh)
        header = next(r)
        return kind, header, [row for row in r]


def write_json(path: str | Path, obj) -> Path:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return Path(path)


def _json_default(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
