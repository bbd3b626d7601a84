"""Triangulated closed surfaces and time partitions."""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (
    DegenerateTriangleError,
    InvalidArgumentError,
    OpenSurfaceError,
    OrientationError,
    ParseError,
)

__all__ = [
    "SurfaceMesh",
    "TimePartition",
    "load_mesh",
    "save_mesh",
    "generate_cube_mesh",
    "generate_icosphere",
    "refine_uniform",
    "p1_surface_gradient_and_curl",
    "make_time_partition",
]


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Closed, consistently outward-oriented triangle mesh.

    Construction validates the mesh; per-triangle normals, areas and
    centroids are cached.  ``source_lines`` optionally maps triangle indices
    to line numbers of the file they came from (used in error messages).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    source_lines: "np.ndarray | None" = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidArgumentError(f"vertices must have shape (nv, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise InvalidArgumentError(f"triangles must have shape (nt, 3), got {t.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("vertex coordinates must be finite")
        if t.min() < 0 or t.max() >= len(v):
            bad = int(np.nonzero((t < 0).any(1) | (t >= len(v)).any(1))[0][0])
            raise InvalidArgumentError(f"triangle {bad}{self._where(bad)} references a missing vertex")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

        p = v[t]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        twice_area = np.linalg.norm(cross, axis=1)
        self._validate(twice_area)
        normals = cross / twice_area[:, None]
        for name, arr in (
            ("normals", normals),
            ("areas", 0.5 * twice_area),
            ("centroids", p.mean(axis=1)),
            ("diameters", np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _where(self, tri):
        if self.source_lines is None:
            return ""
        return f" (line {int(self.source_lines[tri])})"

    def _validate(self, twice_area):
        t = self.triangles
        repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        bbox = np.ptp(self.vertices, axis=0).max()
        small = 0.5 * twice_area <= 1e-14 * bbox * bbox
        bad = np.nonzero(repeated | small)[0]
        if len(bad):
            raise DegenerateTriangleError(f"triangle {int(bad[0])}{self._where(bad[0])} is degenerate")

        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        owner = np.tile(np.arange(len(t)), 3)
        und = np.sort(directed, axis=1)
        _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        if np.any(counts != 2):
            bad_edge = int(np.nonzero(counts != 2)[0][0])
            tri = int(owner[np.nonzero(inv == bad_edge)[0][0]])
            n = int(counts[bad_edge])
            raise OpenSurfaceError(
                f"edge of triangle {tri}{self._where(tri)} is shared by {n} triangle(s); surface must be closed"
            )
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        if np.any(dcounts != 1):
            d_uniq, d_inv = np.unique(directed, axis=0, return_inverse=True)
            d_inv = d_inv.reshape(-1)
            dup = int(np.nonzero(dcounts != 1)[0][0])
            tris = owner[np.nonzero(d_inv == dup)[0]]
            tri = int(tris.max())
            raise OrientationError(
                f"triangle {tri}{self._where(tri)} is inconsistently oriented with its neighbour"
            )
        if self.signed_volume() <= 0:
            raise OrientationError("triangles must be counterclockwise seen from outside (signed volume <= 0)")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def total_area(self):
        return float(self.areas.sum())

    def edges(self):
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def signed_volume(self):
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def p1_gradients(self):
        """In-plane gradients of the three local hat functions, shape (nt, 3, 3)."""
        p = self.vertices[self.triangles]
        n = self.normals
        opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        return np.cross(n[:, None, :], opp) / (2.0 * self.areas)[:, None, None]

    def p1_curls(self):
        """Surface curls ``grad x n`` of the local hat functions, shape (nt, 3, 3)."""
        return np.cross(self.p1_gradients(), self.normals[:, None, :])

    def distance_to_surface(self, x):
        """Euclidean distance from points ``x`` (m, 3) to the triangulated surface."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.vertices[self.triangles]
        return np.array([_point_triangles_distance(xi, p).min() for xi in x])

    def contains(self, x):
        """Inside test by the solid angle sum (winding number)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.vertices[self.triangles]
        out = np.empty(len(x), dtype=bool)
        for i, xi in enumerate(x):
            a, b, c = (p[:, k] - xi for k in range(3))
            la, lb, lc = (np.linalg.norm(q, axis=1) for q in (a, b, c))
            num = np.einsum("ij,ij->i", a, np.cross(b, c))
            den = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + np.einsum("ij,ij->i", b, c) * la \
                + np.einsum("ij,ij->i", c, a) * lb
            omega = 2.0 * np.arctan2(num, den).sum()
            out[i] = omega > 2.0 * math.pi
        return out


def _point_triangles_distance(x, p):
    """Distance from one point to many triangles ``p`` (nt, 3, 3)."""
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    n /= np.linalg.norm(n, axis=1)[:, None]
    d_plane = np.einsum("ij,ij->i", x - a, n)
    q = x - d_plane[:, None] * n
    # barycentric inside test of the projection
    v0, v1, v2 = ab, ac, q - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    lb = (d11 * d20 - d01 * d21) / den
    lc = (d00 * d21 - d01 * d20) / den
    inside = (lb >= 0) & (lc >= 0) & (lb + lc <= 1)
    dist = np.where(inside, np.abs(d_plane), np.inf)
    for s0, s1 in ((a, b), (b, c), (c, a)):
        e = s1 - s0
        tpar = np.clip(np.einsum("ij,ij->i", x - s0, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(x - (s0 + tpar[:, None] * e), axis=1))
    return dist


def load_mesh(path):
    """Read the ASCII mesh format: ``nv nt`` header, ``nv`` vertex lines, ``nt`` index lines.

    Lines starting with ``#`` and blank lines are ignored.  Indices are 0-based
    and triangles are counterclockwise seen from outside.
    """
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            rows.append((lineno, s.split()))
    if not rows:
        raise ParseError(f"{path}: empty mesh file")
    lineno, head = rows[0]
    try:
        nv, nt = (int(x) for x in head)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: expected header 'nv nt', got {' '.join(head)!r}") from None
    if nv < 3 or nt < 1:
        raise ParseError(f"{path}:{lineno}: header declares {nv} vertices and {nt} triangles")
    if len(rows) != 1 + nv + nt:
        raise ParseError(f"{path}: header declares {nv} vertices and {nt} triangles, found {len(rows) - 1} data lines")
    verts = np.empty((nv, 3))
    for i, (lineno, tok) in enumerate(rows[1:1 + nv]):
        try:
            if len(tok) != 3:
                raise ValueError
            verts[i] = [float(x) for x in tok]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected 'x y z', got {' '.join(tok)!r}") from None
    tris = np.empty((nt, 3), dtype=np.int64)
    lines = np.empty(nt, dtype=np.int64)
    for i, (lineno, tok) in enumerate(rows[1 + nv:]):
        try:
            if len(tok) != 3:
                raise ValueError
            tris[i] = [int(x) for x in tok]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected 'i j k', got {' '.join(tok)!r}") from None
        if tris[i].min() < 0 or tris[i].max() >= nv:
            raise ParseError(f"{path}:{lineno}: vertex index out of range 0..{nv - 1}")
        lines[i] = lineno
    return SurfaceMesh(verts, tris, source_lines=lines)


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def generate_cube_mesh(subdivisions_per_edge, side=1.0, origin=(0.0, 0.0, 0.0)):
    """Outward oriented surface mesh of the cube ``origin + [0, side]^3`` with 12 n^2 triangles."""
    n = subdivisions_per_edge
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"subdivisions_per_edge must be a positive integer, got {n!r}")
    if not (math.isfinite(side) and side > 0):
        raise InvalidArgumentError(f"side must be positive, got {side!r}")
    index = {}
    verts = []
    tris = []

    def vid(ijk):
        if ijk not in index:
            index[ijk] = len(verts)
            verts.append(ijk)
        return index[ijk]

    # each face: fixed axis, value, and two in-plane axes (u, v) with u x v = outward normal
    for axis in range(3):
        u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
        for level, flip in ((0, True), (n, False)):
            for i in range(n):
                for j in range(n):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        ijk = [0, 0, 0]
                        ijk[axis] = level
                        ijk[u_ax] = i + di
                        ijk[v_ax] = j + dj
                        corners.append(vid(tuple(ijk)))
                    a, b, c, d = corners
                    # alternate the diagonal so the mesh has no preferred direction
                    if (i + j) % 2 == 0:
                        quad = [(a, b, c), (a, c, d)]
                    else:
                        quad = [(a, b, d), (b, c, d)]
                    for t in quad:
                        tris.append(t[::-1] if flip else t)
    v = np.asarray(verts, dtype=float) * (side / n) + np.asarray(origin, dtype=float)
    return SurfaceMesh(v, np.asarray(tris, dtype=np.int64))


def generate_icosphere(refinements=1, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosahedron refined ``refinements`` times with vertices projected to the sphere."""
    if refinements < 0:
        raise InvalidArgumentError("refinements must be >= 0")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    t = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    v /= np.linalg.norm(v, axis=1)[:, None]
    mesh = SurfaceMesh(v, t)
    for _ in range(refinements):
        mesh = refine_uniform(mesh)
        w = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
        mesh = SurfaceMesh(w, mesh.triangles)
    return SurfaceMesh(mesh.vertices * radius + np.asarray(center, dtype=float), mesh.triangles)


def refine_uniform(mesh):
    """Split every triangle into four through its edge midpoints."""
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1).T + mesh.n_vertices
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    v = np.vstack([mesh.vertices, mids])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = inv[:, 0], inv[:, 1], inv[:, 2]
    new = np.concatenate([
        np.stack([a, ab, ca], 1),
        np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1),
        np.stack([ab, bc, ca], 1),
    ])
    return SurfaceMesh(v, new)


def p1_surface_gradient_and_curl(mesh, triangle, local_vertex):
    """Gradient and surface curl (``grad x n``) of a hat function on one triangle."""
    if not (0 <= triangle < mesh.n_triangles):
        raise InvalidArgumentError(f"triangle index {triangle} out of range")
    if local_vertex not in (0, 1, 2):
        raise InvalidArgumentError(f"local vertex must be 0, 1 or 2, got {local_vertex}")
    p = mesh.vertices[mesh.triangles[triangle]]
    n = mesh.normals[triangle]
    i = local_vertex
    opp = p[(i + 2) % 3] - p[(i + 1) % 3]
    grad = np.cross(n, opp) / (2.0 * mesh.areas[triangle])
    return grad, np.cross(grad, n)


@dataclass(frozen=True, eq=False)
class TimePartition:
    """Breakpoints ``0 = t_0 < t_1 < ... < t_N = T``."""

    breakpoints: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise InvalidArgumentError("a time partition needs at least two breakpoints")
        if not np.all(np.isfinite(b)):
            raise InvalidArgumentError("breakpoints must be finite")
        if b[0] != 0.0:
            raise InvalidArgumentError(f"first breakpoint must be 0, got {b[0]}")
        if np.any(np.diff(b) <= 0):
            raise InvalidArgumentError("breakpoints must be strictly increasing")
        b.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)

    @property
    def n_steps(self):
        return len(self.breakpoints) - 1

    @property
    def T(self):
        return float(self.breakpoints[-1])

    @property
    def steps(self):
        return np.diff(self.breakpoints)

    @property
    def uniform(self):
        h = self.steps
        return bool(np.all(np.abs(h - h[0]) <= 1e-12 * h[0]))

    def interval_of(self, t):
        """1-based index ``k`` with ``t in (t_{k-1}, t_k]``; 0 for ``t <= 0``."""
        return int(np.searchsorted(self.breakpoints, t, side="left"))


def make_time_partition(T, N, grading="uniform", exponent=2.0):
    """Uniform (``t_k = k T / N``) or graded (``t_k = (k / N)^exponent T``) partition."""
    if not (isinstance(T, (int, float, np.floating)) and math.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"T must be positive, got {T!r}")
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise InvalidArgumentError(f"N must be a positive integer, got {N!r}")
    k = np.arange(N + 1) / N
    if grading == "uniform":
        b = k * T
    elif grading == "graded":
        if not exponent > 0:
            raise InvalidArgumentError("grading exponent must be positive")
        b = k ** exponent * T
    else:
        raise InvalidArgumentError(f"unknown grading {grading!r}")
    b[-1] = T
    return TimePartition(b)
