"""Versioned plain-text container for named float arrays.

Layout::

    boltplan-params 1
    kind rpsn
    meta hidden 64,64
    array W0 64 7
    <one row per line, space separated, repr() floats>
    end

Floats are written with ``repr`` so every IEEE-754 double round-trips exactly.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

MAGIC = "boltplan-params"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps(kind: str, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> str:
    out = io.StringIO()
    out.write(f"{MAGIC} {VERSION}\n")
    out.write(f"kind {kind}\n")
    for k, v in (meta or {}).items():
        if " " in k or "\n" in str(v):
            raise FormatError(f"bad meta entry {k!r}")
        out.write(f"meta {k} {v}\n")
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            a2 = a[None, :]
        elif a.ndim == 2:
            a2 = a
        else:
            raise FormatError(f"array {name} must be 1-D or 2-D")
        out.write(f"array {name} {' '.join(str(s) for s in a.shape)}\n")
        for row in a2:
            out.write(" ".join(repr(float(x)) for x in row) + "\n")
    out.write("end\n")
    return out.getvalue()


def loads(text: str, kind: str | None = None) -> tuple[str, dict[str, str], dict[str, np.ndarray]]:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise FormatError("missing or unsupported header")
    it = iter(enumerate(lines[1:], start=2))
    found_kind = None
    meta: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    for lineno, line in it:
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "kind":
            found_kind = parts[1]
        elif tag == "meta":
            meta[parts[1]] = " ".join(parts[2:])
        elif tag == "array":
            name, shape = parts[1], tuple(int(s) for s in parts[2:])
            nrows = shape[0] if len(shape) == 2 else 1
            rows = []
            for _ in range(nrows):
                try:
                    _, row = next(it)
                except StopIteration:
                    raise FormatError(f"truncated array {name}") from None
                rows.append([float(x) for x in row.split()])
            arr = np.array(rows, dtype=float).reshape(shape)
            arrays[name] = arr
        elif tag == "end":
            break
        else:
            raise FormatError(f"line {lineno}: unknown tag {tag!r}")
    else:
        raise FormatError("missing end marker")
    if kind is not None and found_kind != kind:
        raise FormatError(f"expected kind {kind!r}, found {found_kind!r}")
    return found_kind or "", meta, arrays


def save(path: str | Path, kind: str, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> None:
    Path(path).write_text(dumps(kind, arrays, meta))


def load(path: str | Path, kind: str | None = None):
    return loads(Path(path).read_text(), kind)
