"""Deterministic CSV output shared by all modules."""
from __future__ import annotations

import csv
import hashlib
import math
from typing import Iterable, Mapping, Sequence


def fmt(x) -> str:
    """Shortest round-trip text for a number; ``''`` for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], metadata: Mapping | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if not isinstance(x, str) else x for x in row])


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return (metadata, header, rows) of a file written by :func:`write_csv`."""
    meta = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            else:
                body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    rows = [r for r in reader if r]
    return meta, header, rows


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
