"""Text serialization: CSV tables and legacy-ASCII VTK structured points.

Floats are written with 17 significant digits so files round-trip exactly
and identical runs give byte-identical files.
"""
import csv
import hashlib
import json
import os
import tempfile

import numpy as np


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    """Return ``(header, rows)`` with numeric cells converted to float."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            out = []
            for v in row:
                try:
                    out.append(float(v))
                except ValueError:
                    out.append(v)
            rows.append(out)
    return header, rows


def read_csv_columns(path):
    header, rows = read_csv(path)
    cols = list(zip(*rows)) if rows else [() for _ in header]
    return {h: np.array(c) for h, c in zip(header, cols)}


def write_grid_csv(path, x, y, names, fields):
    """Cell-centre table ``x, y, <names...>`` in ``i``-major order."""
    X, Y = np.meshgrid(x, y, indexing="ij")
    cols = [X.ravel(), Y.ravel()] + [np.asarray(f).ravel() for f in fields]
    write_csv(path, ["x", "y"] + list(names), zip(*cols))


def read_grid_csv(path, shape):
    cols = read_csv_columns(path)
    return {k: v.reshape(shape) for k, v in cols.items()}


# --------------------------------------------------------------------------
# VTK

def write_vtk(path, shape, spacing, origin=(0.0, 0.0, 0.0), scalars=None, vectors=None,
              title="permahom field"):
    """Cell data on a structured-points grid with ``shape`` cells.

    Arrays are given in ``(i, j, k)`` index order and written x-fastest as
    the format requires.  2-D fields use ``shape = (nx, ny, 1)``.
    """
    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape))
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             "DIMENSIONS " + " ".join(str(s + 1) for s in shape),
             "ORIGIN " + " ".join(fmt(o) for o in origin),
             "SPACING " + " ".join(fmt(h) for h in spacing),
             f"CELL_DATA {n}"]
    for name, a in (scalars or {}).items():
        a = np.asarray(a, dtype=float).reshape(shape)
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in a.ravel(order="F")]
    for name, a in (vectors or {}).items():
        a = np.asarray(a, dtype=float).reshape(shape + (3,))
        flat = np.stack([a[..., c].ravel(order="F") for c in range(3)], axis=1)
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(fmt(v) for v in row) for row in flat]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mask_vtk(path, fluid, spacing, origin=(0.0, 0.0, 0.0)):
    """Voxel mask as a single 0/1 ``solid`` scalar."""
    fluid = np.asarray(fluid, dtype=bool)
    write_vtk(path, fluid.shape, spacing, origin, scalars={"solid": ~fluid},
              title="permahom voxel mask")


def read_vtk(path):
    """Inverse of :func:`write_vtk`: ``(shape, spacing, origin, scalars, vectors)``."""
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens[4:])
    shape = spacing = origin = None
    scalars, vectors = {}, {}
    for line in it:
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "DIMENSIONS":
            shape = tuple(int(p) - 1 for p in parts[1:])
        elif tag == "ORIGIN":
            origin = tuple(float(p) for p in parts[1:])
        elif tag == "SPACING":
            spacing = tuple(float(p) for p in parts[1:])
        elif tag == "SCALARS":
            next(it)  # lookup table
            n = int(np.prod(shape))
            vals = np.array([float(next(it)) for _ in range(n)])
            scalars[parts[1]] = vals.reshape(shape, order="F")
        elif tag == "VECTORS":
            n = int(np.prod(shape))
            vals = np.array([[float(v) for v in next(it).split()] for _ in range(n)])
            vectors[parts[1]] = np.stack([vals[:, c].reshape(shape, order="F")
                                          for c in range(3)], axis=-1)
    return shape, spacing, origin, scalars, vectors


# --------------------------------------------------------------------------
# manifest helpers

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path, obj):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
