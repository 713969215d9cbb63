"""Polygonal meshes: construction, geometry tables, validation and regularity.

A mesh is described by vertices, segment faces (pairs of vertex indices) and
cells (lists of face indices).  Geometry is precomputed once; per-cell data is
stored in :class:`CellGroup` blocks that gather all cells with the same number
of faces, so that local operators can be evaluated with batched numpy calls.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INTERIOR, D0, D1, NEUMANN = 0, 1, 2, 3
TAG_NAMES = {D0: "d0", D1: "d1", NEUMANN: "neumann"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class CellGroup:
    """All cells with ``nf`` faces, stored as stacked arrays."""

    cells: np.ndarray        # (nK,)
    faces: np.ndarray        # (nK, nf) global face indices
    normals: np.ndarray      # (nK, nf, 2) outward unit normals
    face_measure: np.ndarray  # (nK, nf)
    dist: np.ndarray         # (nK, nf) orthogonal distance from centre to face
    face_centres: np.ndarray  # (nK, nf, 2)
    centres: np.ndarray      # (nK, 2)
    volume: np.ndarray       # (nK,)

    @property
    def nf(self):
        return self.faces.shape[1]

    @property
    def pyramid(self):
        return 0.5 * self.face_measure * self.dist

    def local_dofs(self, ncells):
        """Hybrid indices (cell first, then faces) of each cell, shape (nK, nf+1)."""
        return np.concatenate([self.cells[:, None], ncells + self.faces], axis=1)


@dataclass(eq=False)
class Mesh:
    vertices: np.ndarray
    face_vertices: np.ndarray
    cell_faces: list
    face_tags: np.ndarray
    cell_centres: np.ndarray
    cell_measure: np.ndarray
    cell_diameter: np.ndarray
    face_measure: np.ndarray
    face_centres: np.ndarray
    face_cells: np.ndarray   # (nF, 2), -1 for missing neighbour
    groups: list = field(default_factory=list)
    dim: int = 2

    @property
    def ncells(self):
        return len(self.cell_faces)

    @property
    def nfaces(self):
        return len(self.face_vertices)

    @property
    def ndofs(self):
        return self.ncells + self.nfaces

    @property
    def size(self):
        return float(self.cell_diameter.max())

    @property
    def dirichlet_faces(self):
        return np.flatnonzero((self.face_tags == D0) | (self.face_tags == D1))

    @property
    def dirichlet_mask(self):
        return (self.face_tags == D0) | (self.face_tags == D1)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def cell_local(self, k):
        """Return (group, row) locating cell ``k`` in the group tables."""
        g, r = self._where[k]
        return self.groups[g], r

    def pairs(self):
        """Iterate over (cell, face, normal, |sigma|, d) for every incidence."""
        for grp in self.groups:
            for r, k in enumerate(grp.cells):
                for j, f in enumerate(grp.faces[r]):
                    yield k, f, grp.normals[r, j], grp.face_measure[r, j], grp.dist[r, j]

    def __post_init__(self):
        self._where = {}
        for g, grp in enumerate(self.groups):
            for r, k in enumerate(grp.cells):
                self._where[int(k)] = (g, r)


def _ordered_loop(k, faces, face_vertices):
    """Chain the segment faces of a cell into a closed vertex loop."""
    incident = {}
    for f in faces:
        a, b = face_vertices[f]
        incident.setdefault(a, []).append(f)
        incident.setdefault(b, []).append(f)
    if any(len(v) != 2 for v in incident.values()):
        raise MeshError(f"cell {k}: faces do not form a simple closed polygon")
    start = faces[0]
    loop, order = [face_vertices[start][0]], [start]
    cur_v, cur_f = face_vertices[start][1], start
    while cur_v != loop[0]:
        loop.append(cur_v)
        nxt = [f for f in incident[cur_v] if f != cur_f][0]
        a, b = face_vertices[nxt]
        cur_v = b if a == cur_v else a
        cur_f = nxt
        order.append(nxt)
        if len(order) > len(faces):
            break
    if len(order) != len(faces) or len(set(order)) != len(faces):
        raise MeshError(f"cell {k}: faces do not form a single closed loop")
    return loop, order


def cell_vertex_loops(mesh: "Mesh"):
    """Counter-clockwise vertex loops of every cell."""
    FV = mesh.face_vertices.tolist()
    out = []
    for k, cf in enumerate(mesh.cell_faces):
        loop, _ = _ordered_loop(k, [int(f) for f in cf], FV)
        P = mesh.vertices[loop]
        Q = np.roll(P, -1, axis=0)
        if (P[:, 0] * Q[:, 1] - Q[:, 0] * P[:, 1]).sum() < 0:
            loop = loop[::-1]
        out.append([int(v) for v in loop])
    return out


def build_mesh(vertices, face_vertices, cell_faces, face_tags=None, centres=None,
               validate=True) -> Mesh:
    """Assemble geometry tables from raw connectivity.

    ``face_tags`` holds per-face codes (0 interior, or D0/D1/NEUMANN);
    untagged boundary faces default to Neumann.  ``centres`` may give
    explicit cell centres (``None`` entries fall back to the barycentre).
    """
    V = np.asarray(vertices, dtype=float)
    FV = np.asarray(face_vertices, dtype=np.int64).reshape(-1, 2)
    nF = len(FV)
    cell_faces = [np.asarray(c, dtype=np.int64) for c in cell_faces]
    nC = len(cell_faces)
    if nC == 0:
        raise MeshError("mesh has no cells")
    if FV.size and (FV.min() < 0 or FV.max() >= len(V)):
        raise MeshError("face references an unknown vertex")

    seg = V[FV[:, 1]] - V[FV[:, 0]]
    fmeas = np.hypot(seg[:, 0], seg[:, 1])
    bad = np.flatnonzero(~(fmeas > 0))
    if bad.size:
        raise MeshError(f"face {bad[0]} has zero length")
    fcent = 0.5 * (V[FV[:, 0]] + V[FV[:, 1]])

    face_cells = -np.ones((nF, 2), dtype=np.int64)
    for k, cf in enumerate(cell_faces):
        if cf.size < 3:
            raise MeshError(f"cell {k} has fewer than three faces")
        if cf.min() < 0 or cf.max() >= nF:
            raise MeshError(f"cell {k} references an unknown face")
        for f in cf:
            slot = 0 if face_cells[f, 0] < 0 else 1
            if face_cells[f, slot] >= 0:
                raise MeshError(f"face {f} is shared by more than two cells")
            face_cells[f, slot] = k
    orphan = np.flatnonzero(face_cells[:, 0] < 0)
    if orphan.size:
        raise MeshError(f"face {orphan[0]} belongs to no cell")

    tags = np.zeros(nF, dtype=np.int64) if face_tags is None else np.asarray(face_tags, dtype=np.int64).copy()
    boundary = face_cells[:, 1] < 0
    for f in np.flatnonzero(~boundary & (tags != INTERIOR)):
        raise MeshError(f"interior face {f} carries a boundary tag")
    tags[boundary & (tags == INTERIOR)] = NEUMANN

    measure = np.empty(nC)
    bary = np.empty((nC, 2))
    diam = np.empty(nC)
    normals, order_faces = [], []
    for k, cf in enumerate(cell_faces):
        loop, order = _ordered_loop(k, [int(f) for f in cf], FV.tolist())
        P = V[loop]
        Q = np.roll(P, -1, axis=0)
        cross = P[:, 0] * Q[:, 1] - Q[:, 0] * P[:, 1]
        area = 0.5 * cross.sum()
        sign = 1.0 if area > 0 else -1.0
        area = abs(area)
        if not area > 0:
            raise MeshError(f"cell {k} has zero area")
        measure[k] = area
        bary[k] = sign * ((P + Q) * cross[:, None]).sum(axis=0) / (6.0 * area)
        diff = P[:, None, :] - P[None, :, :]
        diam[k] = np.sqrt((diff ** 2).sum(-1)).max()
        # outward normal of the edge P_i -> Q_i for a counter-clockwise loop
        e = (Q - P) * sign
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.hypot(n[:, 0], n[:, 1])[:, None]
        pos = {f: i for i, f in enumerate(order)}
        normals.append(n[[pos[int(f)] for f in cf]])
        order_faces.append(cf)

    xc = bary.copy()
    if centres is not None:
        for k, c in enumerate(centres):
            if c is not None:
                xc[k] = c

    by_nf = {}
    for k, cf in enumerate(cell_faces):
        by_nf.setdefault(len(cf), []).append(k)
    groups = []
    for nf in sorted(by_nf):
        ks = np.asarray(by_nf[nf], dtype=np.int64)
        faces = np.stack([cell_faces[k] for k in ks])
        nrm = np.stack([normals[k] for k in ks])
        fc = fcent[faces]
        dist = np.einsum("kfi,kfi->kf", fc - xc[ks][:, None, :], nrm)
        groups.append(CellGroup(ks, faces, nrm, fmeas[faces], dist, fc, xc[ks], measure[ks]))

    mesh = Mesh(V, FV, cell_faces, tags, xc, measure, diam, fmeas, fcent, face_cells, groups)
    if validate:
        validate_mesh(mesh)
    return mesh


def validate_mesh(mesh: Mesh, require_dirichlet=True):
    """Check the geometric invariants; raise MeshError naming the culprit."""
    for grp in mesh.groups:
        for r, k in enumerate(grp.cells):
            d = grp.dist[r]
            if np.any(~(d > 0)):
                j = int(np.argmin(d))
                raise MeshError(f"cell {k}: non-positive distance to face {grp.faces[r, j]} "
                                "(cell not star-shaped with respect to its centre)")
            hK = mesh.cell_diameter[k]
            closure = (grp.face_measure[r][:, None] * grp.normals[r]).sum(axis=0)
            if np.abs(closure).max() > 1e-12 * max(hK, 1.0):
                raise MeshError(f"cell {k}: normals do not close ({closure})")
            part = grp.pyramid[r].sum()
            if abs(part - grp.volume[r]) > 1e-12 * grp.volume[r] + 1e-15:
                raise MeshError(f"cell {k}: pyramid measures do not sum to the cell measure")
    interior = np.flatnonzero(mesh.face_cells[:, 1] >= 0)
    if interior.size:
        nrm = {}
        for k, f, n, _, _ in mesh.pairs():
            nrm[(int(k), int(f))] = n
        for f in interior:
            k, l = mesh.face_cells[f]
            if np.abs(nrm[(int(k), int(f))] + nrm[(int(l), int(f))]).max() > 1e-12:
                raise MeshError(f"face {f}: normals of adjacent cells are not opposite")
    if require_dirichlet and mesh.dirichlet_faces.size == 0:
        raise MeshError("mesh has no Dirichlet boundary face")


@dataclass
class RegularityReport:
    theta: float
    mesh_size: float
    cell_ratio: np.ndarray   # per cell max(h_K/d, h_K/|sigma|)

    @property
    def size_squared(self):
        # alternative size convention, h_D^2
        return self.mesh_size ** 2

    def flagged(self, threshold=50.0):
        return np.flatnonzero(self.cell_ratio > threshold)


def regularity(mesh: Mesh) -> RegularityReport:
    ratio = np.zeros(mesh.ncells)
    for grp in mesh.groups:
        hK = mesh.cell_diameter[grp.cells][:, None]
        r = np.maximum(hK / grp.dist, hK ** (mesh.dim - 1) / grp.face_measure).max(axis=1)
        ratio[grp.cells] = r
    return RegularityReport(float(ratio.max()), mesh.size, ratio)


# --------------------------------------------------------------------------
# builders

def _tag_boundary(vertices, face_vertices, face_cells, layout, domain):
    (x0, x1), (y0, y1) = domain
    tags = np.zeros(len(face_vertices), dtype=np.int64)
    mid = 0.5 * (vertices[face_vertices[:, 0]] + vertices[face_vertices[:, 1]])
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    for f in np.flatnonzero(face_cells[:, 1] < 0):
        x, y = mid[f]
        if layout == "dirichlet":
            tags[f] = D0
        elif abs(y - y0) < tol:
            tags[f] = D0
        elif abs(y - y1) < tol and x <= x0 + 0.25 * (x1 - x0):
            tags[f] = D1
        else:
            tags[f] = NEUMANN
    return tags


def _face_cells_from(face_vertices, cell_faces):
    fc = -np.ones((len(face_vertices), 2), dtype=np.int64)
    for k, cf in enumerate(cell_faces):
        for f in cf:
            fc[f, 0 if fc[f, 0] < 0 else 1] = k
    return fc


def _from_polygons(vertices, polygons, layout, domain):
    """Build a mesh from vertex loops, creating one face per distinct edge."""
    edge_id = {}
    face_vertices, cell_faces = [], []
    for poly in polygons:
        cf = []
        for a, b in zip(poly, poly[1:] + poly[:1]):
            key = (min(a, b), max(a, b))
            if key not in edge_id:
                edge_id[key] = len(face_vertices)
                face_vertices.append((a, b))
            cf.append(edge_id[key])
        cell_faces.append(cf)
    V = np.asarray(vertices, dtype=float)
    FV = np.asarray(face_vertices, dtype=np.int64)
    tags = _tag_boundary(V, FV, _face_cells_from(FV, cell_faces), layout, domain)
    return build_mesh(V, FV, cell_faces, tags)


def _check_layout(layout, domain):
    if layout not in ("diode", "dirichlet"):
        raise ValueError(f"unknown boundary layout {layout!r}")
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate domain")


UNIT = ((0.0, 1.0), (0.0, 1.0))


def _grid(xs, ys, layout, domain, triangles):
    nx, ny = len(xs) - 1, len(ys) - 1
    vid = lambda i, j: j * (nx + 1) + i
    vertices = [(x, y) for y in ys for x in xs]
    polys = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if triangles:
                polys += [[a, b, c], [a, c, d]]
            else:
                polys.append([a, b, c, d])
    return _from_polygons(vertices, polys, layout, domain)


def build_cartesian(nx, ny, domain=UNIT, layout="dirichlet") -> Mesh:
    """Uniform nx-by-ny rectangular grid on ``domain = ((x0, x1), (y0, y1))``."""
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")
    _check_layout(layout, domain)
    (x0, x1), (y0, y1) = domain
    return _grid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1), layout, domain, False)


# y-lines of the coarsest triangular mesh on the unit square: seven bands,
# with a line through the diode junction at y = 0.75
_TRI_Y = np.array([0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.875, 1.0])


def build_triangular(level, domain=UNIT, layout="dirichlet") -> Mesh:
    """Structured triangulation: 4 x 7 rectangles split along a diagonal (56 cells
    at level 0), each level halving every edge (4x more cells)."""
    if level < 0:
        raise MeshError("refinement level must be non-negative")
    _check_layout(layout, domain)
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(0.0, 1.0, 4 * 2 ** level + 1)
    ys = _TRI_Y
    for _ in range(level):
        ys = np.sort(np.concatenate([ys, 0.5 * (ys[1:] + ys[:-1])]))
    return _grid(x0 + (x1 - x0) * xs, y0 + (y1 - y0) * ys, layout, domain, True)


def _clip_convex(poly, x0, x1, y0, y1):
    """Sutherland-Hodgman clipping of a convex polygon by an axis-aligned box."""
    def clip(pts, inside, cut):
        out = []
        for i, p in enumerate(pts):
            q = pts[(i + 1) % len(pts)]
            pin, qin = inside(p), inside(q)
            if pin:
                out.append(p)
            if pin != qin:
                out.append(cut(p, q))
        return out

    def at_x(c):
        return lambda p, q: (c, p[1] + (q[1] - p[1]) * (c - p[0]) / (q[0] - p[0]))

    def at_y(c):
        return lambda p, q: (p[0] + (q[0] - p[0]) * (c - p[1]) / (q[1] - p[1]), c)

    pts = list(poly)
    for inside, cut in ((lambda p: p[0] >= x0, at_x(x0)), (lambda p: p[0] <= x1, at_x(x1)),
                        (lambda p: p[1] >= y0, at_y(y0)), (lambda p: p[1] <= y1, at_y(y1))):
        pts = clip(pts, inside, cut)
        if not pts:
            break
    return pts


def _polygon_area(pts):
    p = np.asarray(pts)
    q = np.roll(p, -1, axis=0)
    return 0.5 * abs((p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]).sum())


def build_hexagonal(radius=0.0777, tilt=math.pi / 6, offset=(0.298, 0.037), domain=UNIT,
                    layout="dirichlet") -> Mesh:
    """Tilted hexagonal tiling clipped to the domain (hexagonal-dominant: the
    boundary cells are clipped hexagons).

    The default parameters give 76 cells whose clipped pieces are all at least
    17% of a full hexagon.  The top side is split at x = x0 + (x1-x0)/4 so the
    diode contacts are resolved.
    """
    _check_layout(layout, domain)
    (x0, x1), (y0, y1) = domain
    rot = np.array([[math.cos(tilt), -math.sin(tilt)], [math.sin(tilt), math.cos(tilt)]])
    corners = np.array([[math.cos(a), math.sin(a)] for a in np.arange(6) * math.pi / 3]) * radius
    a1 = rot @ np.array([1.5 * radius, math.sqrt(3) / 2 * radius])
    a2 = rot @ np.array([0.0, math.sqrt(3) * radius])
    corners = corners @ rot.T
    origin = np.array([x0, y0]) + np.asarray(offset) * [x1 - x0, y1 - y0]
    span = int(math.ceil(2 * max(x1 - x0, y1 - y0) / radius)) + 2

    pieces = []
    for i in range(-span, span + 1):
        for j in range(-span, span + 1):
            c = origin + i * a1 + j * a2
            if c[0] < x0 - 2 * radius or c[0] > x1 + 2 * radius or c[1] < y0 - 2 * radius or c[1] > y1 + 2 * radius:
                continue
            pts = _clip_convex([tuple(p) for p in c + corners], x0, x1, y0, y1)
            if len(pts) >= 3 and _polygon_area(pts) > 1e-14:
                pieces.append(pts)

    # shared vertex numbering with snapping
    scale = 1e10
    vid, vertices = {}, []

    def index(p):
        key = (round(p[0] * scale), round(p[1] * scale))
        if key not in vid:
            vid[key] = len(vertices)
            vertices.append((float(p[0]), float(p[1])))
        return vid[key]

    polys = []
    for pts in pieces:
        loop = []
        for p in pts:
            v = index(p)
            if not loop or loop[-1] != v:
                loop.append(v)
        if loop[0] == loop[-1]:
            loop.pop()
        polys.append(loop)

    # insert the diode contact end point on the top boundary
    V = list(vertices)
    xs = x0 + 0.25 * (x1 - x0)
    for poly in polys:
        for t in range(len(poly)):
            a, b = poly[t], poly[(t + 1) % len(poly)]
            pa, pb = V[a], V[b]
            if abs(pa[1] - y1) < 1e-12 and abs(pb[1] - y1) < 1e-12 and min(pa[0], pb[0]) < xs - 1e-12 < xs + 1e-12 < max(pa[0], pb[0]):
                key = (round(xs * scale), round(y1 * scale))
                if key not in vid:
                    vid[key] = len(V)
                    V.append((xs, y1))
                poly.insert(t + 1, vid[key])
                break
    return _from_polygons(V, polys, layout, domain)


def build_from_spec(spec: str) -> Mesh:
    """Builder strings: ``cartesian:8x8[:diode]``, ``triangular:<level>[:diode]``,
    ``hexagonal[:diode]`` (shipped 76-cell fixture), ``hexagonal:<radius>[:diode]``
    (generated tiling) or a file path."""
    parts = spec.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    layout = "dirichlet"
    if args and args[-1] in ("diode", "dirichlet"):
        layout = args.pop()
    if kind == "cartesian":
        nx, ny = (int(v) for v in (args[0] if args else "8x8").lower().split("x"))
        return build_cartesian(nx, ny, layout=layout)
    if kind == "triangular":
        return build_triangular(int(args[0]) if args else 0, layout=layout)
    if kind == "hexagonal" and args:
        return build_hexagonal(float(args[0]), layout=layout)
    if kind == "hexagonal":
        mesh = load_mesh(HEXAGONAL_FIXTURE)
        return mesh if layout == "diode" else retag(mesh, "dirichlet")
    return load_mesh(spec)


def retag(mesh: Mesh, layout) -> Mesh:
    tags = _tag_boundary(mesh.vertices, mesh.face_vertices, mesh.face_cells, layout, UNIT)
    return build_mesh(mesh.vertices, mesh.face_vertices, mesh.cell_faces, tags, mesh.cell_centres)


# --------------------------------------------------------------------------
# text format

HEXAGONAL_FIXTURE = Path(__file__).with_name("data") / "hexagonal_76.mesh"


def load_mesh(source) -> Mesh:
    """Read the ``polymesh 2d`` text format from a path or an open text stream."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    return parse_mesh(text)


def parse_mesh(text: str) -> Mesh:
    section = None
    header = False
    verts, faces, tags, cells, centres = {}, {}, {}, {}, {}

    def fail(lineno, msg):
        raise MeshError(f"line {lineno}: {msg}")

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header:
            if line.split() != ["polymesh", "2d"]:
                fail(lineno, "expected header 'polymesh 2d'")
            header = True
            continue
        if line in ("vertices", "faces", "cells"):
            section = line
            continue
        if section is None:
            fail(lineno, "data before any section")
        m = re.match(r"^(\d+)\s*:?\s*(.*)$", line)
        if not m:
            fail(lineno, "expected an entity index")
        idx, rest = int(m.group(1)), m.group(2).split()
        try:
            if section == "vertices":
                if len(rest) != 2:
                    fail(lineno, "vertex needs two coordinates")
                verts[idx] = (float(rest[0]), float(rest[1]))
            elif section == "faces":
                tag = INTERIOR
                if rest and rest[-1].lower() in TAG_CODES:
                    tag = TAG_CODES[rest.pop().lower()]
                if len(rest) != 2:
                    fail(lineno, "a 2d face needs exactly two vertices")
                faces[idx] = (int(rest[0]), int(rest[1]))
                tags[idx] = tag
            else:
                centre = None
                if "centre" in rest:
                    p = rest.index("centre")
                    if len(rest) != p + 3:
                        fail(lineno, "centre needs two coordinates")
                    centre = (float(rest[p + 1]), float(rest[p + 2]))
                    rest = rest[:p]
                cells[idx] = [int(v) for v in rest]
                centres[idx] = centre
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise
            fail(lineno, f"malformed number ({exc})")
    if not header:
        raise MeshError("line 1: empty mesh file")
    for name, table in (("vertex", verts), ("face", faces), ("cell", cells)):
        if sorted(table) != list(range(len(table))):
            raise MeshError(f"{name} indices must be numbered 0..n-1 in order")
    n = len(verts)
    V = np.array([verts[i] for i in range(n)], dtype=float).reshape(-1, 2)
    FV = np.array([faces[i] for i in range(len(faces))], dtype=np.int64).reshape(-1, 2)
    T = np.array([tags[i] for i in range(len(faces))], dtype=np.int64)
    C = [cells[i] for i in range(len(cells))]
    X = [centres[i] for i in range(len(cells))]
    return build_mesh(V, FV, C, T, X)


def format_mesh(mesh: Mesh, explicit_centres=False) -> str:
    lines = ["polymesh 2d", "vertices"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    lines.append("faces")
    for f, (a, b) in enumerate(mesh.face_vertices.tolist()):
        tag = TAG_NAMES.get(int(mesh.face_tags[f]))
        lines.append(f"{f}: {a} {b}" + (f" {tag}" if tag else ""))
    lines.append("cells")
    for k, cf in enumerate(mesh.cell_faces):
        s = f"{k}: " + " ".join(str(int(f)) for f in cf)
        if explicit_centres:
            x, y = mesh.cell_centres[k]
            s += f" centre {x!r} {y!r}"
        lines.append(s)
    return "\n".join(lines) + "\n"
