"""Output writers: legacy VTK (ASCII) and CSV tables."""
from __future__ import annotations

import os

import numpy as np

from .errors import IoError, ParseError, SizeMismatch

VTK_TETRA = 10


def _g(x):
    return format(float(x), ".17g")


def format_vtk(mesh, fields=None, title="twogrid"):
    """Legacy VTK 3.0 ASCII text for a tet mesh.

    ``fields`` maps names to arrays: one value per element becomes CELL_DATA
    scalars, one per node POINT_DATA scalars and an (n_nodes, 3) array
    POINT_DATA vectors. Cell data wins when element and node counts coincide.
    """
    fields = fields or {}
    nn, ne = len(mesh.nodes), mesh.n_elements
    cell, point_s, point_v = {}, {}, {}
    for name, values in fields.items():
        arr = np.asarray(values, dtype=float)
        if " " in name:
            raise ValueError(f"field name {name!r} contains whitespace")
        if arr.shape == (ne,):
            cell[name] = arr
        elif arr.shape == (nn,):
            point_s[name] = arr
        elif arr.shape == (nn, 3):
            point_v[name] = arr
        else:
            raise SizeMismatch(f"field {name!r} has shape {arr.shape}; mesh has {ne} elements, {nn} nodes")

    out = ["# vtk DataFile Version 3.0", title.splitlines()[0][:255] if title else "twogrid",
           "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nn} double"]
    out += [" ".join(_g(v) for v in xyz) for xyz in mesh.nodes]
    out.append(f"CELLS {ne} {5 * ne}")
    out += ["4 " + " ".join(str(int(v)) for v in tet) for tet in mesh.tets]
    out.append(f"CELL_TYPES {ne}")
    out += [str(VTK_TETRA)] * ne
    if cell:
        out.append(f"CELL_DATA {ne}")
        for name, arr in cell.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [_g(v) for v in arr]
    if point_s or point_v:
        out.append(f"POINT_DATA {nn}")
        for name, arr in point_s.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [_g(v) for v in arr]
        for name, arr in point_v.items():
            out.append(f"VECTORS {name} double")
            out += [" ".join(_g(v) for v in row) for row in arr]
    return "\n".join(out) + "\n"


def write_text(path, text):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_vtk(mesh, fields, path, title="twogrid"):
    write_text(path, format_vtk(mesh, fields, title))


def parse_vtk(text):
    """Read back what :func:`format_vtk` writes.

    Returns (points, cells, cell_data, point_data); data dicts map names to arrays.
    """
    tokens = text.split("\n")
    i = 0
    points = cells = None
    cell_data, point_data = {}, {}
    target = None

    def nums(start, count, width, conv=float):
        rows = [line.split() for line in tokens[start:start + count]]
        if any(len(r) != width for r in rows) or len(rows) != count:
            raise ParseError(start + 1, "unexpected row width or truncated block")
        return np.array([[conv(v) for v in r] for r in rows])

    while i < len(tokens):
        head = tokens[i].split()
        if not head:
            i += 1
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            points = nums(i + 1, n, 3)
            i += n + 1
        elif key == "CELLS":
            n = int(head[1])
            cells = nums(i + 1, n, 5, int)[:, 1:]
            i += n + 1
        elif key == "CELL_TYPES":
            i += int(head[1]) + 1
        elif key in ("CELL_DATA", "POINT_DATA"):
            target = (cell_data if key == "CELL_DATA" else point_data, int(head[1]))
            i += 1
        elif key == "SCALARS":
            store, n = target
            store[head[1]] = nums(i + 2, n, 1)[:, 0]
            i += n + 2
        elif key == "VECTORS":
            store, n = target
            store[head[1]] = nums(i + 1, n, 3)
            i += n + 1
        else:
            i += 1
    return points, cells, cell_data, point_data


def format_csv(header, rows):
    """Comma-separated table with round-trip float formatting."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if not isinstance(v, str) else v for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    write_text(path, format_csv(header, rows))
