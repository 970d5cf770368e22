"""Triangular meshes of the flow domain (container minus obstacle).

Generation uses a force-equilibration scheme in the style of Persson &
Strang's distmesh: boundary nodes are placed exactly on the two boundary
curves and pinned, interior nodes start on a density-adapted hex lattice
and relax under edge-spring forces with repeated Delaunay retriangulation.
The obstacle side is resolved finer than the bulk through a distance-graded
size field.

Meshes are immutable value objects; deformation under the speed method
moves vertices through y = x + eps*T and reuses the connectivity, so
finite-difference functional comparisons are free of remeshing noise.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import Delaunay

from .geometry import DeformationField, ShapeConfig, check_eps

OUTER = 1
OBSTACLE = 2


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    points          (n_v, 2) vertex coordinates
    triangles       (n_t, 3) vertex indices, counterclockwise
    boundary_edges  (n_be, 2) vertex index pairs on the boundary
    boundary_tags   (n_be,) OUTER or OBSTACLE
    h               target element size used at generation
    """

    points: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    h: float

    @property
    def n_vertices(self):
        return self.points.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def areas(self):
        p = self.points
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self):
        p = self.points
        t = self.triangles
        angles = []
        for i in range(3):
            a = p[t[:, i]]
            b = p[t[:, (i + 1) % 3]]
            c = p[t[:, (i + 2) % 3]]
            u, v = b - a, c - a
            cosang = (u * v).sum(1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1, 1)))
        return float(np.degrees(np.min(angles)))

    def edge_array(self):
        """Unique undirected edges of the triangulation, sorted pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edge_array()) + self.n_triangles

    def boundary_vertex_set(self, tag):
        return np.unique(self.boundary_edges[self.boundary_tags == tag])


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _obstacle_polyline(shape: ShapeConfig, spacing: float):
    """Boundary nodes on rho(theta) with near-uniform arclength spacing."""
    th = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    r = shape.rho(th)
    dr = shape.drho(th)
    ds = np.sqrt(r**2 + dr**2) * (2 * np.pi / len(th))
    s = np.concatenate([[0.0], np.cumsum(ds)])
    total = s[-1]
    n = max(12, int(np.ceil(total / spacing)))
    targets = np.linspace(0.0, total, n, endpoint=False)
    th_nodes = np.interp(targets, s[:-1], th)
    return shape.obstacle_points(th_nodes)


def _container_polyline(shape: ShapeConfig, spacing: float):
    if shape.container == "disk":
        c = np.asarray(shape.container_center)
        R = shape.container_radius
        n = max(16, int(np.ceil(2 * np.pi * R / spacing)))
        th = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return c + R * np.stack([np.cos(th), np.sin(th)], axis=1)
    c = np.asarray(shape.container_center)
    hw = np.asarray(shape.container_halfwidth)
    corners = c + np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * hw
    pts = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        for i in range(n):
            pts.append(a + (b - a) * i / n)
    return np.array(pts)


def _signed_distance(shape: ShapeConfig, X):
    return np.maximum(shape.container_distance(X), -shape.obstacle_distance(X))


class MeshGenerationError(RuntimeError):
    pass


def generate(
    shape: ShapeConfig,
    h: float,
    h_obstacle: float | None = None,
    grade: float = 0.35,
    n_iter: int = 80,
    seed: int = 0,
    min_angle_deg: float = 20.0,
) -> Mesh:
    """Mesh the domain with target size h, refined near the obstacle.

    Boundary polylines resolve the obstacle curve to chord error about
    h_obstacle^2/8 * curvature, which stays below h^2 for the default
    h_obstacle = h/2.  Raises MeshGenerationError when the relaxation
    cannot reach the requested minimum angle.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    shape.validate()
    if h_obstacle is None:
        h_obstacle = 0.5 * h

    obst = _obstacle_polyline(shape, h_obstacle)
    outer = _container_polyline(shape, h)
    fixed = np.concatenate([obst, outer])
    n_obst = len(obst)
    n_fixed = len(fixed)

    def size_field(X):
        d = np.abs(shape.obstacle_distance(X))
        return np.minimum(h, h_obstacle + grade * d)

    # density-adapted hex lattice seed points strictly inside the domain
    lo = fixed.min(axis=0) - h
    hi = fixed.max(axis=0) + h
    dx = h_obstacle
    xs = np.arange(lo[0], hi[0], dx)
    ys = np.arange(lo[1], hi[1], dx * np.sqrt(3) / 2)
    XX, YY = np.meshgrid(xs, ys)
    XX[1::2] += dx / 2
    cand = np.stack([XX.ravel(), YY.ravel()], axis=1)
    margin = 0.55 * size_field(cand)
    cand = cand[_signed_distance(shape, cand) < -margin]
    rng = np.random.default_rng(seed)
    keep = rng.uniform(size=len(cand)) < (dx / size_field(cand)) ** 2
    pts = np.concatenate([fixed, cand[keep]])

    def triangulate(p):
        tri = Delaunay(p)
        cent = p[tri.simplices].mean(axis=1)
        inside = _signed_distance(shape, cent) < -1e-12
        return tri.simplices[inside]

    fscale = 1.2
    step = 0.2
    for _ in range(n_iter):
        t = triangulate(pts)
        e = np.unique(np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1), axis=0)
        vec = pts[e[:, 0]] - pts[e[:, 1]]
        L = np.linalg.norm(vec, axis=1)
        mid = 0.5 * (pts[e[:, 0]] + pts[e[:, 1]])
        hmid = size_field(mid)
        L0 = hmid * fscale * np.sqrt((L**2).sum() / (hmid**2).sum())
        F = np.maximum(L0 - L, 0.0) / np.maximum(L, 1e-14)
        fvec = F[:, None] * vec
        force = np.zeros_like(pts)
        np.add.at(force, e[:, 0], fvec)
        np.add.at(force, e[:, 1], -fvec)
        force[:n_fixed] = 0.0
        move = step * force
        pts = pts + move
        # keep interior points strictly inside with a size-scaled margin
        d = _signed_distance(shape, pts)
        viol = np.where(d > -0.35 * size_field(pts))[0]
        viol = viol[viol >= n_fixed]
        if len(viol):
            gh = 1e-7
            gx = (_signed_distance(shape, pts[viol] + [gh, 0]) - d[viol]) / gh
            gy = (_signed_distance(shape, pts[viol] + [0, gh]) - d[viol]) / gh
            g = np.stack([gx, gy], axis=1)
            g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-14)
            target = -0.5 * size_field(pts[viol])
            pts[viol] += (target - d[viol])[:, None] * g
        if len(pts) == n_fixed or np.abs(move[n_fixed:]).max() < 2e-3 * h_obstacle:
            break

    tris = triangulate(pts)
    used = np.unique(tris)
    if len(used) != len(pts):
        remap = -np.ones(len(pts), dtype=int)
        remap[used] = np.arange(len(used))
        if np.any(remap[:n_fixed] < 0):
            raise MeshGenerationError("a boundary node ended up unused")
        pts = pts[used]
        tris = remap[tris]

    # enforce counterclockwise orientation
    d1 = pts[tris[:, 1]] - pts[tris[:, 0]]
    d2 = pts[tris[:, 2]] - pts[tris[:, 0]]
    a2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = a2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    mesh = _finalize(shape, pts, tris, n_obst, n_fixed, h)
    ang = mesh.min_angle()
    if ang < min_angle_deg:
        bad = _worst_triangle(mesh)
        raise MeshGenerationError(
            f"refinement failure: min angle {ang:.2f} deg < {min_angle_deg} "
            f"near {bad} (try different h or seed)"
        )
    return mesh


def _worst_triangle(mesh: Mesh):
    p, t = mesh.points, mesh.triangles
    worst, where = 1e9, None
    for i in range(3):
        a, b, c = p[t[:, i]], p[t[:, (i + 1) % 3]], p[t[:, (i + 2) % 3]]
        u, v = b - a, c - a
        cosang = (u * v).sum(1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        ang = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
        k = int(np.argmin(ang))
        if ang[k] < worst:
            worst, where = float(ang[k]), p[t[k]].mean(axis=0)
    return np.round(where, 4)


def _finalize(shape, pts, tris, n_obst, n_fixed, h) -> Mesh:
    tcount = {}
    for tri in tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            tcount[key] = tcount.get(key, 0) + 1
    bedges = np.array([k for k, c in tcount.items() if c == 1], dtype=int)
    if bedges.size == 0:
        raise MeshGenerationError("no boundary edges found")
    is_obst_vertex = bedges < n_obst
    both_obst = is_obst_vertex.all(axis=1)
    both_outer = (~is_obst_vertex).all(axis=1)
    if not np.all(both_obst | both_outer):
        raise MeshGenerationError("boundary edge mixes obstacle and outer nodes")
    tags = np.where(both_obst, OBSTACLE, OUTER)
    # the obstacle edge set must form one closed loop over the n_obst nodes
    if both_obst.sum() != n_obst:
        raise MeshGenerationError(
            f"obstacle loop has {both_obst.sum()} edges for {n_obst} nodes"
        )
    mesh = Mesh(
        points=np.ascontiguousarray(pts, dtype=float),
        triangles=np.ascontiguousarray(tris, dtype=np.int64),
        boundary_edges=np.ascontiguousarray(bedges, dtype=np.int64),
        boundary_tags=np.ascontiguousarray(tags, dtype=np.int64),
        h=float(h),
    )
    if mesh.areas().min() <= 0:
        raise MeshGenerationError("degenerate triangle produced")
    if mesh.euler_characteristic() != 0:
        raise MeshGenerationError(
            f"euler characteristic {mesh.euler_characteristic()} != 0 (expected one hole)"
        )
    return mesh


# ---------------------------------------------------------------------------
# deformation
# ---------------------------------------------------------------------------


def deform(mesh: Mesh, T: DeformationField, eps: float) -> Mesh:
    """Move vertices through y = x + eps*T; connectivity and tags unchanged."""
    check_eps(T, eps)
    new_pts = mesh.points + eps * T.value(mesh.points)
    out = replace(mesh, points=new_pts)
    if out.areas().min() <= 0.0:
        raise ValueError(f"element inversion at eps={eps:g}; mesh too coarse or eps too large")
    return out


# ---------------------------------------------------------------------------
# legacy-VTK-style ASCII export / import
# ---------------------------------------------------------------------------


def export_fields(mesh: Mesh, fields: dict, path):
    """Write mesh plus named nodal fields as legacy-VTK ASCII.

    Triangles are written as type-5 cells followed by the tagged boundary
    edges as type-3 line cells carrying the tag in an integer cell field.
    Point-data arrays appear in dict insertion order; arrays of shape (n,)
    become SCALARS, shape (n, 2) becomes VECTORS with zero third component.
    Fields may live on vertices only (n_vertices entries).
    """
    buf = io.StringIO()
    n_v = mesh.n_vertices
    n_t = mesh.n_triangles
    n_b = len(mesh.boundary_edges)
    buf.write("# vtk DataFile Version 3.0\nflowshape mesh\nASCII\n")
    buf.write("DATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {n_v} double\n")
    for x, y in mesh.points:
        buf.write(f"{float(x)!r} {float(y)!r} 0.0\n")
    buf.write(f"CELLS {n_t + n_b} {4 * n_t + 3 * n_b}\n")
    for a, b, c in mesh.triangles:
        buf.write(f"3 {a} {b} {c}\n")
    for a, b in mesh.boundary_edges:
        buf.write(f"2 {a} {b}\n")
    buf.write(f"CELL_TYPES {n_t + n_b}\n")
    buf.write("5\n" * n_t)
    buf.write("3\n" * n_b)
    buf.write(f"CELL_DATA {n_t + n_b}\n")
    buf.write("SCALARS boundary_tag int 1\nLOOKUP_TABLE default\n")
    buf.write("0\n" * n_t)
    for tag in mesh.boundary_tags:
        buf.write(f"{tag}\n")
    if fields:
        buf.write(f"POINT_DATA {n_v}\n")
        for name, arr in fields.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n_v:
                raise ValueError(f"field {name!r} has {arr.shape[0]} entries, mesh has {n_v}")
            if arr.ndim == 1:
                buf.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in arr:
                    buf.write(f"{float(v)!r}\n")
            else:
                buf.write(f"VECTORS {name} double\n")
                for vx, vy in arr:
                    buf.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def import_fields(path):
    """Read a file written by export_fields; returns (mesh, fields dict)."""
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if tokens[pos].upper() != word:
            raise ValueError(f"expected {word}, found {tokens[pos]!r}")
        pos += 1

    def skip_to(word):
        nonlocal pos
        while tokens[pos].upper() != word:
            pos += 1

    skip_to("POINTS")
    pos += 1
    n_v = int(tokens[pos]); pos += 2  # count, dtype
    pts = np.array(tokens[pos : pos + 3 * n_v], dtype=float).reshape(n_v, 3)[:, :2]
    pos += 3 * n_v
    expect("CELLS")
    n_cells = int(tokens[pos]); total = int(tokens[pos + 1]); pos += 2
    raw = np.array(tokens[pos : pos + total], dtype=int)
    pos += total
    tris, edges = [], []
    k = 0
    for _ in range(n_cells):
        cnt = raw[k]
        body = raw[k + 1 : k + 1 + cnt]
        (tris if cnt == 3 else edges).append(body)
        k += cnt + 1
    expect("CELL_TYPES")
    pos += 1 + n_cells
    tags = None
    fields = {}
    while pos < len(tokens):
        word = tokens[pos].upper()
        if word == "CELL_DATA":
            pos += 2
            expect("SCALARS")
            pos += 2  # name dtype
            if tokens[pos].isdigit():
                pos += 1
            expect("LOOKUP_TABLE")
            pos += 1
            vals = np.array(tokens[pos : pos + n_cells], dtype=int)
            pos += n_cells
            tags = vals[len(tris) :]
        elif word == "POINT_DATA":
            pos += 2
        elif word == "SCALARS":
            pos += 1
            name = tokens[pos]; pos += 2
            if tokens[pos].isdigit():
                pos += 1
            expect("LOOKUP_TABLE")
            pos += 1
            fields[name] = np.array(tokens[pos : pos + n_v], dtype=float)
            pos += n_v
        elif word == "VECTORS":
            pos += 1
            name = tokens[pos]; pos += 2
            arr = np.array(tokens[pos : pos + 3 * n_v], dtype=float).reshape(n_v, 3)
            fields[name] = arr[:, :2]
            pos += 3 * n_v
        else:
            raise ValueError(f"unexpected token {tokens[pos]!r}")
    mesh = Mesh(
        points=pts,
        triangles=np.array(tris, dtype=np.int64),
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=np.asarray(tags, dtype=np.int64),
        h=0.0,
    )
    return mesh, fields
