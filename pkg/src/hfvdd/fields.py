"""Cell and face field output: VTK legacy polygons or CSV tables."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh, cell_vertex_loops

FIELD_NAMES = ("N", "P", "phi")


def _fields(state):
    return {"N": state.n, "P": state.p, "phi": state.phi}


def write_fields(mesh: Mesh, state, path, fmt="vtk", title="hfvdd fields"):
    """Write N, P and phi.  ``vtk`` writes one unstructured-grid file with
    cell data plus a ``<stem>_faces.csv`` companion; ``csv`` writes
    ``<stem>.csv`` (cells) and ``<stem>_faces.csv``.  Returns the paths."""
    path = Path(path)
    fields = _fields(state)
    if fmt == "vtk":
        main = path.with_suffix(".vtk")
        _write_vtk(mesh, fields, main, title)
    elif fmt == "csv":
        main = path.with_suffix(".csv")
        with open(main, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "x", "y", *FIELD_NAMES])
            for k in range(mesh.ncells):
                x, y = mesh.cell_centres[k]
                w.writerow([k, repr(float(x)), repr(float(y)),
                            *(repr(float(fields[n].cells[k])) for n in FIELD_NAMES)])
    else:
        raise ValueError(f"unknown field format {fmt!r}")
    faces = path.with_name(path.stem + "_faces.csv")
    with open(faces, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["face", "x", "y", "tag", *FIELD_NAMES])
        for f in range(mesh.nfaces):
            x, y = mesh.face_centres[f]
            w.writerow([f, repr(float(x)), repr(float(y)), int(mesh.face_tags[f]),
                        *(repr(float(fields[n].faces[f])) for n in FIELD_NAMES)])
    return main, faces


def _write_vtk(mesh, fields, path, title):
    loops = cell_vertex_loops(mesh)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(mesh.vertices)} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {len(loops)} {sum(len(l) + 1 for l in loops)}")
    lines += [" ".join(map(str, [len(l), *l])) for l in loops]
    lines.append(f"CELL_TYPES {len(loops)}")
    lines += ["7"] * len(loops)  # VTK_POLYGON
    lines.append(f"CELL_DATA {mesh.ncells}")
    for name in FIELD_NAMES:
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in fields[name].cells]
    path.write_text("\n".join(lines) + "\n")


def read_cell_fields(path):
    """Read the cell fields back from a file written by :func:`write_fields`."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return {n: np.array([float(r[n]) for r in rows]) for n in FIELD_NAMES}
    tokens = path.read_text().split("\n")
    out, i = {}, 0
    ncells = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("CELL_DATA"):
            ncells = int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            vals = tokens[i + 2: i + 2 + ncells]
            out[name] = np.array([float(v) for v in vals])
            i += 2 + ncells
            continue
        i += 1
    missing = [n for n in FIELD_NAMES if n not in out]
    if missing:
        raise ValueError(f"{path}: missing fields {missing}")
    return out
