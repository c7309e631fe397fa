"""Versioned text container for named float64 arrays plus a JSON meta block.

Layout:
    # airgeo-arrays v1 kind=<kind>
    # meta <json>
    array <name> <ndim> <dim0> [dim1]
    <one whitespace-separated row of values per matrix row>

Values are written with Python float repr, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

_HEADER_PREFIX = "# airgeo-arrays v1 kind="


def save_arrays(path, kind: str, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    lines = [_HEADER_PREFIX + kind, "# meta " + json.dumps(meta, sort_keys=True)]
    for name, arr in arrays:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            lines.append(f"array {name} 1 {arr.shape[0]}")
            lines.append(" ".join(repr(float(v)) for v in arr))
        elif arr.ndim == 2:
            lines.append(f"array {name} 2 {arr.shape[0]} {arr.shape[1]}")
            for row in arr:
                lines.append(" ".join(repr(float(v)) for v in row))
        else:
            raise ValueError(f"array {name!r} has unsupported ndim {arr.ndim}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_arrays(path, expect_kind: str | None = None):
    """Returns (kind, meta, dict of arrays)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError(f"{path}: not an airgeo-arrays v1 file")
    kind = lines[0][len(_HEADER_PREFIX):]
    if expect_kind is not None and kind != expect_kind:
        raise ValueError(f"{path}: kind {kind!r}, expected {expect_kind!r}")
    if len(lines) < 2 or not lines[1].startswith("# meta "):
        raise ValueError(f"{path}: missing meta line")
    meta = json.loads(lines[1][len("# meta "):])
    arrays: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        parts = line.split()
        if parts[0] != "array":
            raise ValueError(f"{path}:{i + 1}: expected array header, got {line!r}")
        name, ndim = parts[1], int(parts[2])
        dims = [int(d) for d in parts[3 : 3 + ndim]]
        nrows = 1 if ndim == 1 else dims[0]
        rows = []
        for r in range(nrows):
            vals = [float(tok) for tok in lines[i + 1 + r].split()]
            rows.append(vals)
        arr = np.array(rows, dtype=np.float64)
        arr = arr.reshape(dims[0]) if ndim == 1 else arr
        if list(arr.shape) != dims:
            raise ValueError(f"{path}:{i + 1}: array {name!r} shape {arr.shape} != {dims}")
        arrays[name] = arr
        i += 1 + nrows
    return kind, meta, arrays
