"""Triangular meshes whose boundary is split into an accessible part S and a base B.

Two structured generators are provided (the parabola-bottomed lens used in the
numerical study, and the unit square for small tests) together with a plain
text file format and a validator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

REGIONS = ("S", "B")
SQUARE_SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    """Raised for invalid geometry parameters or meshes violating invariants."""


class MeshFormatError(MeshError):
    """Raised when a mesh file cannot be parsed."""


@dataclass(frozen=True)
class BoundaryPartition:
    """Node and edge bookkeeping for the two boundary regions.

    ``nodes[r]`` lists the vertex indices of region ``r`` in boundary-walk
    order; the interface nodes appear in both lists.
    """

    nodes: dict
    edges: dict
    interface: np.ndarray
    measure: dict

    def other(self, region: str) -> str:
        return "B" if region == "S" else "S"


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(
            self, "boundary_edges", np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        )
        object.__setattr__(self, "boundary_tags", np.asarray(self.boundary_tags, dtype="<U1"))
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.boundary_tags):
            arr.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.boundary_tags, other.boundary_tags)
        )

    __hash__ = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def h_max(self) -> float:
        t = self.triangles
        v = self.vertices
        lengths = [np.linalg.norm(v[t[:, i]] - v[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return float(np.max(lengths))

    def signed_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))

    def edge_lengths(self, region: str | None = None) -> np.ndarray:
        e = self.boundary_edges
        if region is not None:
            e = e[self.boundary_tags == region]
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @cached_property
    def partition(self) -> BoundaryPartition:
        edges = {r: self.boundary_edges[self.boundary_tags == r] for r in REGIONS}
        walk = _boundary_walk(self.boundary_edges)
        node_sets = {r: set(np.unique(edges[r]).tolist()) for r in REGIONS}
        interface = np.array(sorted(node_sets["S"] & node_sets["B"]), dtype=np.int64)
        nodes = {}
        for r in REGIONS:
            # start at an interface node whose next walk edge lies in r, so each piece of r is contiguous
            eset = {frozenset(e) for e in edges[r].tolist()}
            start = 0
            for i, node in enumerate(walk):
                if node in interface and frozenset((node, walk[(i + 1) % len(walk)])) in eset:
                    start = i
                    break
            seen = []
            for i in walk[start:] + walk[:start]:
                if i in node_sets[r] and i not in seen:
                    seen.append(i)
            nodes[r] = np.array(seen, dtype=np.int64)
        measure = {r: float(self.edge_lengths(r).sum()) for r in REGIONS}
        return BoundaryPartition(nodes=nodes, edges=edges, interface=interface, measure=measure)

    def region_nodes(self, region: str) -> np.ndarray:
        return self.partition.nodes[region]

    @property
    def interface(self) -> np.ndarray:
        return self.partition.interface

    def boundary_arclength(self, region: str) -> np.ndarray:
        """Cumulative arclength along the ordered node list of ``region``."""
        idx = self.region_nodes(region)
        pts = self.vertices[idx]
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])


def _boundary_walk(edges: np.ndarray) -> list:
    """Order boundary vertices by following edges around each boundary loop."""
    nbrs: dict = {}
    for a, b in edges.tolist():
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    order: list = []
    visited: set = set()
    for seed in sorted(nbrs):
        if seed in visited:
            continue
        prev, cur = None, seed
        while cur not in visited:
            visited.add(cur)
            order.append(cur)
            nxt = [n for n in nbrs[cur] if n != prev and n not in visited]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
    return order


def validate(mesh: Mesh) -> None:
    """Check the mesh invariants; raise :class:`MeshError` listing every violation."""
    problems = []
    nv = mesh.n_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= nv):
        problems.append("triangle references a missing vertex")
    if mesh.boundary_edges.size and (mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= nv):
        problems.append("boundary edge references a missing vertex")
    if problems:
        raise MeshError("; ".join(problems))
    if not np.all(np.isfinite(mesh.vertices)):
        problems.append("non-finite vertex coordinates")
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        problems.append(f"{int(np.sum(areas <= 0))} triangle(s) without positive signed area")
    bad_tags = set(mesh.boundary_tags.tolist()) - set(REGIONS)
    if bad_tags:
        problems.append(f"boundary tags must be S or B, got {sorted(bad_tags)}")

    t = mesh.triangles
    all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        problems.append("edge shared by more than two triangles")
    topo_boundary = {tuple(e) for e in uniq[counts == 1].tolist()}
    tagged = [tuple(sorted(e)) for e in mesh.boundary_edges.tolist()]
    if len(set(tagged)) != len(tagged):
        problems.append("boundary edge listed twice (regions must be edge-disjoint)")
    if set(tagged) != topo_boundary:
        missing = len(topo_boundary - set(tagged))
        extra = len(set(tagged) - topo_boundary)
        problems.append(f"boundary edges mismatch: {missing} untagged, {extra} not on the boundary")

    if not problems:
        part = mesh.partition
        for r in REGIONS:
            if part.measure[r] <= 0:
                problems.append(f"region {r} has zero measure")
        if len(part.interface) == 0:
            problems.append("interface between S and B is empty")
    if problems:
        raise MeshError("; ".join(problems))


def _zipper(left: list, right: list, xy: np.ndarray) -> list:
    """Triangulate the strip between two vertical node chains ordered top to bottom."""
    tris = []
    i = j = 0
    while i < len(left) - 1 or j < len(right) - 1:
        if i == len(left) - 1:
            advance_left = False
        elif j == len(right) - 1:
            advance_left = True
        else:
            d_left = np.linalg.norm(xy[left[i + 1]] - xy[right[j]])
            d_right = np.linalg.norm(xy[left[i]] - xy[right[j + 1]])
            advance_left = d_left <= d_right
        if advance_left:
            tris.append([left[i], left[i + 1], right[j]])
            i += 1
        else:
            tris.append([left[i], right[j + 1], right[j]])
            j += 1
    return tris


def _orient(tris: np.ndarray, xy: np.ndarray) -> np.ndarray:
    a, b, c = xy[tris[:, 0]], xy[tris[:, 1]], xy[tris[:, 2]]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    out = tris.copy()
    flip = area < 0
    out[flip, 1], out[flip, 2] = tris[flip, 2], tris[flip, 1]
    return out


def build_parabola_domain(d: float, h: float) -> Mesh:
    """Mesh the region between ``y = 0`` and ``y = -d (1 - x^2)`` for ``-1 <= x <= 1``.

    Columns of nodes are placed at uniformly spaced ``x``; each column is split
    into ``ceil(depth / h)`` vertical intervals so element size stays close to
    ``h`` as the domain pinches towards the interface points ``(+-1, 0)``.
    For steep parabolas (large ``d``) the column spacing shrinks so the
    boundary chords near ``x = +-1`` stay comparable to ``h``.
    The top segment is tagged S and the parabola B.
    """
    if not (d > 0 and math.isfinite(d)):
        raise MeshError(f"depth must be positive, got {d}")
    if not (0 < h < 1):
        raise MeshError(f"target edge length must lie in (0, 1), got {h}")
    # the steepest chord has length dx * sqrt(1 + 4 d^2); keep it below 1.5 h
    nx = 2 * math.ceil(max(1.0, math.sqrt(1.0 + 4.0 * d * d) / 1.5) / h - 1e-9)
    xs = np.linspace(-1.0, 1.0, nx + 1)
    xs[nx // 2] = 0.0
    coords = []
    columns = []
    for j, x in enumerate(xs):
        depth = 0.0 if j in (0, nx) else d * (1.0 - x * x)
        m = 0 if depth == 0.0 else max(1, math.ceil(depth / h - 1e-9))
        col = []
        for k in range(m + 1):
            col.append(len(coords))
            coords.append((x, -depth * k / m if m else 0.0))
        columns.append(col)
    xy = np.array(coords) + 0.0  # no negative zeros in output files
    tris = []
    for j in range(nx):
        tris.extend(_zipper(columns[j], columns[j + 1], xy))
    tris = _orient(np.array(tris, dtype=np.int64), xy)
    top = [(columns[j][0], columns[j + 1][0]) for j in range(nx)]
    bottom = [(columns[j][-1], columns[j + 1][-1]) for j in range(nx)]
    edges = np.array(top + bottom, dtype=np.int64)
    tags = np.array(["S"] * len(top) + ["B"] * len(bottom))
    return Mesh(xy, tris, edges, tags)


def build_unit_square(h: float, s_side=("top",)) -> Mesh:
    """Structured right-triangle mesh of ``[0, 1]^2`` with the chosen sides tagged S."""
    if isinstance(s_side, str):
        s_side = [p for p in s_side.replace("+", ",").split(",") if p]
    sides = set(s_side)
    unknown = sides - set(SQUARE_SIDES)
    if unknown:
        raise MeshError(f"unknown side(s) {sorted(unknown)}; choose from {SQUARE_SIDES}")
    if not sides or sides == set(SQUARE_SIDES):
        raise MeshError("S must be a nonempty strict subset of the four sides")
    if not (0 < h <= 1):
        raise MeshError(f"target edge length must lie in (0, 1], got {h}")
    n = max(1, round(1.0 / h))
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g)
    xy = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, e = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, e])
    edges, tags = [], []
    walks = {
        "bottom": [(idx(i, 0), idx(i + 1, 0)) for i in range(n)],
        "right": [(idx(n, j), idx(n, j + 1)) for j in range(n)],
        "top": [(idx(i + 1, n), idx(i, n)) for i in reversed(range(n))],
        "left": [(idx(0, j + 1), idx(0, j)) for j in reversed(range(n))],
    }
    for side in SQUARE_SIDES:
        for e in walks[side]:
            edges.append(e)
            tags.append("S" if side in sides else "B")
    return Mesh(xy, np.array(tris), np.array(edges), np.array(tags))


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read a mesh file; parse problems raise :class:`MeshFormatError`, invariant
    violations raise :class:`MeshError`."""
    text = Path(path).read_text().splitlines()
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split()
        if head[0] in ("vertices", "triangles", "boundary"):
            current = head[0]
            if current in sections:
                raise MeshFormatError(f"line {lineno}: duplicate section '{current}'")
            sections[current] = []
            continue
        if current is None:
            raise MeshFormatError(f"line {lineno}: record outside any section: {line!r}")
        sections[current].append((lineno, head))
    for name in ("vertices", "triangles", "boundary"):
        if name not in sections:
            raise MeshFormatError(f"missing section '{name}'")

    verts = []
    for expected, (lineno, rec) in enumerate(sections["vertices"]):
        if len(rec) != 3:
            raise MeshFormatError(f"line {lineno}: vertex record needs 'index x y': {' '.join(rec)!r}")
        try:
            i, x, y = int(rec[0]), float(rec[1]), float(rec[2])
        except ValueError as exc:
            raise MeshFormatError(f"line {lineno}: bad vertex record {' '.join(rec)!r}") from exc
        if i != expected:
            raise MeshFormatError(f"line {lineno}: vertex index {i} out of order (expected {expected})")
        verts.append((x, y))
    nv = len(verts)

    def indices(lineno, rec, count, what):
        try:
            vals = [int(v) for v in rec[:count]]
        except ValueError as exc:
            raise MeshFormatError(f"line {lineno}: bad {what} record {' '.join(rec)!r}") from exc
        for v in vals:
            if not 0 <= v < nv:
                raise MeshFormatError(f"line {lineno}: {what} references missing vertex {v}")
        return vals

    tris = []
    for lineno, rec in sections["triangles"]:
        if len(rec) != 3:
            raise MeshFormatError(f"line {lineno}: triangle record needs three indices: {' '.join(rec)!r}")
        tris.append(indices(lineno, rec, 3, "triangle"))
    edges, tags = [], []
    for lineno, rec in sections["boundary"]:
        if len(rec) not in (2, 3):
            raise MeshFormatError(f"line {lineno}: boundary record needs 'a b tag': {' '.join(rec)!r}")
        edges.append(indices(lineno, rec, 2, "boundary edge"))
        if len(rec) == 2:
            raise MeshError(f"line {lineno}: boundary edge {rec[0]}-{rec[1]} has no region tag")
        if rec[2] not in REGIONS:
            raise MeshError(f"line {lineno}: boundary tag must be S or B, got {rec[2]!r}")
        tags.append(rec[2])
    mesh = Mesh(np.array(verts, dtype=float).reshape(-1, 2), np.array(tris, dtype=np.int64).reshape(-1, 3),
                np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(tags))
    validate(mesh)
    return mesh
