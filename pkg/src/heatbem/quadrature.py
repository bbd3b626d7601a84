"""Quadrature on intervals, triangles and pairs of triangles.

Pairs of triangles are classified by the number of shared vertices.
Disjoint pairs use tensorized triangle rules.  Identical, edge-adjacent and
vertex-adjacent pairs use the relative-coordinate decomposition of the 4D
parameter domain into simplices in which the singular set is a single
coordinate ``xi = 0``; the Jacobian carries ``xi^3`` so that integrands with an
``O(|x - y|^-1)`` singularity become bounded.

All pair rules are stored in barycentric form ``(lam_x, lam_y, w)`` with
``sum(w) == 1``; physical weights are ``w * area_x * area_y``.
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .errors import InvalidArgumentError, NumericError
from .parallel import run_chunks

__all__ = [
    "TriangleRule",
    "PairKind",
    "PairAdjacency",
    "gauss_legendre",
    "triangle_rule",
    "composite_triangle_rule",
    "classify_pair",
    "pair_adjacency",
    "singular_pair_rule",
    "regular_pair_rule",
    "points_per_direction",
    "integrate_pair",
    "PairIntegrator",
]

MAX_GAUSS_POINTS = 64
MAX_TRIANGLE_ORDER = 20


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre rule with ``n`` points on [0, 1]; exact for degree ``2n - 1``."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_GAUSS_POINTS:
        raise InvalidArgumentError(f"Gauss-Legendre needs 1 <= n <= {MAX_GAUSS_POINTS}, got {n!r}")
    x, w = leggauss(int(n))
    return _frozen(0.5 * (x + 1.0), 0.5 * w)


def points_per_direction(level):
    """Points per direction of the tensor rules at accuracy tier ``level``."""
    if level < 0:
        raise InvalidArgumentError(f"quadrature level must be >= 0, got {level}")
    return 2 + 2 * int(level)


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Barycentric points and weights (summing to 1) on a triangle."""

    points: np.ndarray
    weights: np.ndarray
    order: int


# Symmetric rules with positive weights for low orders; (multiplicity, weight, barycentric orbit seed).
_SYMMETRIC = {
    1: [(1, 1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(3, 1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    4: [
        (3, 0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
        (3, 0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771)),
    ],
    5: [
        (1, 9 / 40, (1 / 3, 1 / 3, 1 / 3)),
        (3, (155 + math.sqrt(15)) / 1200, ((9 - 2 * math.sqrt(15)) / 21, (6 + math.sqrt(15)) / 21, (6 + math.sqrt(15)) / 21)),
        (3, (155 - math.sqrt(15)) / 1200, ((9 + 2 * math.sqrt(15)) / 21, (6 - math.sqrt(15)) / 21, (6 - math.sqrt(15)) / 21)),
    ],
}


def _symmetric_rule(order):
    pts, wts = [], []
    for mult, w, (a, b, c) in _SYMMETRIC[order]:
        orbit = [(a, b, c)] if mult == 1 else [(a, b, c), (b, c, a), (c, a, b)]
        for p in orbit:
            pts.append(p)
            wts.append(w)
    pts = np.array(pts)
    pts /= pts.sum(axis=1)[:, None]
    wts = np.array(wts)
    return pts, wts / wts.sum()


def _collapsed_rule(n):
    """Conical product rule: Gauss-Jacobi(1, 0) times Gauss-Legendre, exact to degree 2n - 1."""
    z, wz = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (z + 1.0)
    wu = 0.25 * wz
    v, wv = gauss_legendre(n)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = ((1.0 - U) * Vv).ravel()
    w = np.outer(wu, wv).ravel() * 2.0
    return np.stack([1.0 - x - y, x, y], axis=1), w / w.sum()


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Positive-weight rule exact for polynomials up to degree ``order``."""
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_TRIANGLE_ORDER:
        raise InvalidArgumentError(f"triangle rule order must be in 0..{MAX_TRIANGLE_ORDER}, got {order!r}")
    order = max(int(order), 1)
    if order in _SYMMETRIC:
        pts, w = _symmetric_rule(order)
        exact = order
    elif order == 3:
        pts, w = _symmetric_rule(4)
        exact = 4
    else:
        n = (order + 2) // 2
        pts, w = _collapsed_rule(n)
        exact = 2 * n - 1
    pts, w = _frozen(pts, w)
    return TriangleRule(pts, w, exact)


@lru_cache(maxsize=None)
def composite_triangle_rule(order, levels):
    """``triangle_rule(order)`` applied on the ``4**levels`` uniform subtriangles."""
    base = triangle_rule(order)
    subs = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for t in subs:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(x) for x in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        subs = nxt
    pts = np.concatenate([base.points @ t for t in subs])
    w = np.tile(base.weights, len(subs)) / len(subs)
    pts, w = _frozen(pts, w)
    return TriangleRule(pts, w, base.order)


class PairKind(Enum):
    IDENTICAL = "identical"
    SHARED_EDGE = "shared_edge"
    SHARED_VERTEX = "shared_vertex"
    DISJOINT = "disjoint"


_KIND_BY_COUNT = {3: PairKind.IDENTICAL, 2: PairKind.SHARED_EDGE, 1: PairKind.SHARED_VERTEX, 0: PairKind.DISJOINT}


@dataclass(frozen=True)
class PairAdjacency:
    """Adjacency class plus local vertex orderings putting shared vertices first.

    ``perm_a[i]`` and ``perm_b[i]`` refer to the same mesh vertex for
    ``i < n_shared``.
    """

    kind: PairKind
    perm_a: tuple
    perm_b: tuple

    @property
    def n_shared(self):
        return {PairKind.IDENTICAL: 3, PairKind.SHARED_EDGE: 2, PairKind.SHARED_VERTEX: 1, PairKind.DISJOINT: 0}[self.kind]


def _perms(ta, tb):
    """Vectorized classification of index triples ``ta``, ``tb`` (p, 3)."""
    eq = ta[:, :, None] == tb[:, None, :]
    count = eq.sum(axis=(1, 2))
    if np.any(eq.sum(axis=2) > 1) or np.any(eq.sum(axis=1) > 1):
        raise InvalidArgumentError("triangle with repeated vertex index")
    pa = np.tile(np.arange(3), (len(ta), 1))
    pb = pa.copy()
    in_a = eq.any(axis=2)  # local vertex of A is shared
    # shared vertices of A first (stable), then the rest
    order_a = np.argsort(~in_a, axis=1, kind="stable")
    match_b = np.argmax(eq, axis=2)  # for shared A-vertex: its local index in B
    for c in (1, 2):
        sel = count == c
        if not sel.any():
            continue
        oa = order_a[sel]
        pa[sel] = oa
        mb = np.take_along_axis(match_b[sel], oa[:, :c], axis=1)
        rest = np.array([[k for k in range(3) if k not in row] for row in mb])
        pb[sel] = np.concatenate([mb, rest], axis=1)
    for c in (3,):
        sel = count == c
        if sel.any():
            # identity on A; B reordered to match A vertex by vertex
            pb[sel] = match_b[sel]
    return count, pa, pb


def classify_pair(tri_a, tri_b):
    """Adjacency of two triangles given by vertex index triples (identity by index)."""
    ta = np.asarray(tri_a, dtype=np.int64).reshape(1, 3)
    tb = np.asarray(tri_b, dtype=np.int64).reshape(1, 3)
    count, pa, pb = _perms(ta, tb)
    return PairAdjacency(_KIND_BY_COUNT[int(count[0])], tuple(int(i) for i in pa[0]), tuple(int(i) for i in pb[0]))


def pair_adjacency(mesh, a, b):
    return classify_pair(mesh.triangles[a], mesh.triangles[b])


def _ref_to_bary(x1, x2):
    # reference triangle {0 <= x2 <= x1 <= 1}: P = (1 - x1) P0 + (x1 - x2) P1 + x2 P2
    return np.stack([1.0 - x1, x1 - x2, x2], axis=-1)


def _radial_rule(n, xi_splits):
    if not xi_splits:
        return gauss_legendre(n)
    edges = np.concatenate([[0.0], np.sort(np.asarray(xi_splits, dtype=float)), [1.0]])
    x0, w0 = gauss_legendre(n)
    xs = np.concatenate([a + (b - a) * x0 for a, b in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([(b - a) * w0 for a, b in zip(edges[:-1], edges[1:])])
    return xs, ws


@lru_cache(maxsize=64)
def singular_pair_rule(kind, n, xi_splits=None):
    """Reference rule for a singular pair class with ``n`` Gauss points per direction.

    ``xi_splits`` refines the singular coordinate ``xi`` into a composite rule
    (useful when the integrand has structure on a scale much smaller than the
    triangles, e.g. a narrow Gaussian).  Returns ``(lam_x, lam_y, w)``.
    """
    kind = PairKind(kind)
    xr, wr = _radial_rule(n, xi_splits)
    e, we = gauss_legendre(n)
    xi, e1, e2, e3 = (a.ravel() for a in np.meshgrid(xr, e, e, e, indexing="ij"))
    W = np.einsum("i,j,k,l->ijkl", wr, we, we, we).ravel()
    parts = []
    if kind is PairKind.IDENTICAL:
        J = W * xi ** 3 * e1 ** 2 * e2
        base = [
            ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
            ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
        ]
        for a, b in base:
            parts += [(a, b, J), (b, a, J)]
    elif kind is PairKind.SHARED_EDGE:
        J = W * xi ** 3 * e1 ** 2
        parts.append(((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), J))
        J2 = J * e2
        parts += [
            ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), J2),
            ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), J2),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), J2),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), J2),
        ]
    elif kind is PairKind.SHARED_VERTEX:
        J = W * xi ** 3 * e2
        a, b = (xi, xi * e1), (xi * e2, xi * e2 * e3)
        parts += [(a, b, J), (b, a, J)]
    else:
        raise InvalidArgumentError("disjoint pairs use regular_pair_rule")
    lam_x = np.concatenate([_ref_to_bary(*a) for a, _, _ in parts])
    lam_y = np.concatenate([_ref_to_bary(*b) for _, b, _ in parts])
    # each reference triangle has area 1/2
    w = 4.0 * np.concatenate([j for _, _, j in parts])
    return _frozen(lam_x, lam_y, w)


@lru_cache(maxsize=64)
def regular_pair_rule(order):
    r = triangle_rule(order)
    m = len(r.weights)
    lam_x = np.repeat(r.points, m, axis=0)
    lam_y = np.tile(r.points, (m, 1))
    w = np.outer(r.weights, r.weights).ravel()
    return _frozen(lam_x, lam_y, w)


def regular_order(separation, level):
    """Triangle rule order for a disjoint pair at ``separation`` = centroid distance / diameter."""
    n = points_per_direction(level)
    near = min(2 * n - 1, MAX_TRIANGLE_ORDER)
    if separation >= 4.0:
        return min(4, near)
    if separation >= 2.0:
        return min(8, near)
    return near


def _rule_for(kind, level, xi_splits, order=None):
    if kind is PairKind.DISJOINT:
        return regular_pair_rule(order)
    return singular_pair_rule(kind, points_per_direction(level), xi_splits)


def integrate_pair(f, tri_a, tri_b, adjacency, level=3, xi_splits=None):
    """Integrate ``f(x, y)`` over ``tri_a x tri_b`` (vertex arrays of shape (3, 3)).

    ``f`` receives point arrays of shape (m, 3) and returns (m,) values.
    """
    pa = np.asarray(tri_a, dtype=float)[list(adjacency.perm_a)]
    pb = np.asarray(tri_b, dtype=float)[list(adjacency.perm_b)]
    area_a = 0.5 * np.linalg.norm(np.cross(pa[1] - pa[0], pa[2] - pa[0]))
    area_b = 0.5 * np.linalg.norm(np.cross(pb[1] - pb[0], pb[2] - pb[0]))
    order = None
    if adjacency.kind is PairKind.DISJOINT:
        diam = max(np.ptp(pa, axis=0).max(), np.ptp(pb, axis=0).max())
        sep = np.linalg.norm(pa.mean(0) - pb.mean(0)) / diam
        order = regular_order(sep, level)
    lam_x, lam_y, w = _rule_for(adjacency.kind, level, xi_splits, order)
    x = lam_x @ pa
    y = lam_y @ pb
    vals = np.asarray(f(x, y), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise NumericError(f"non-finite integrand at x={x[i].tolist()}, y={y[i].tolist()}")
    return float(np.dot(w, vals) * area_a * area_b)


class PairIntegrator:
    """Batched integration of radial kernels over many triangle pairs.

    For every pair ``(a, b)`` it computes

        M0[p, c]       = int_Ta int_Tb K_c(|x - y|) dy dx
        M1[p, c, i, j] = int_Ta int_Tb K_c(|x - y|) lam_i(x) lam_j(y) dy dx

    where ``lam`` are the local hat functions (original local numbering).
    Pairs congruent up to an isometry that preserves the vertex labelling
    give identical integrals for radial kernels; they are integrated once.
    """

    def __init__(self, mesh, ia, ib, level=3, xi_splits=None, dedup=True, chunk_nodes=2_000_000):
        self.mesh = mesh
        self.ia = np.asarray(ia, dtype=np.int64).ravel()
        self.ib = np.asarray(ib, dtype=np.int64).ravel()
        if self.ia.shape != self.ib.shape:
            raise InvalidArgumentError("pair index arrays must have equal length")
        self.level = level
        self.xi_splits = tuple(xi_splits) if xi_splits is not None else None
        self.chunk_nodes = chunk_nodes
        ta = mesh.triangles[self.ia]
        tb = mesh.triangles[self.ib]
        count, self.perm_a, self.perm_b = _perms(ta, tb)
        self.count = count
        v = mesh.vertices
        pa = v[np.take_along_axis(ta, self.perm_a, axis=1)]
        pb = v[np.take_along_axis(tb, self.perm_b, axis=1)]
        self.orders = np.zeros(len(self.ia), dtype=np.int64)
        dis = count == 0
        if dis.any():
            diam = np.maximum(mesh.diameters[self.ia[dis]], mesh.diameters[self.ib[dis]])
            sep = np.linalg.norm(mesh.centroids[self.ia[dis]] - mesh.centroids[self.ib[dis]], axis=1) / diam
            self.orders[dis] = [regular_order(s, level) for s in sep]
        # group by (class, rule); within a group deduplicate congruent labelled configurations
        self.groups = []
        keys = np.stack([count, self.orders], axis=1)
        for key in np.unique(keys, axis=0):
            sel = np.nonzero((keys == key).all(axis=1))[0]
            kind = _KIND_BY_COUNT[int(key[0])]
            rep, inverse = self._dedup(pa[sel], pb[sel]) if dedup else (np.arange(len(sel)), np.arange(len(sel)))
            self.groups.append((kind, int(key[1]), sel, rep, inverse, pa[sel][rep], pb[sel][rep]))

    @staticmethod
    def _dedup(pa, pb):
        pts = np.concatenate([pa, pb], axis=1)
        i, j = np.triu_indices(6, 1)
        d = np.linalg.norm(pts[:, i] - pts[:, j], axis=2)
        scale = d.max() if d.size else 1.0
        key = np.round(d / scale, 11)
        _, rep, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
        return rep, inverse.reshape(-1)

    @property
    def n_pairs(self):
        return len(self.ia)

    @property
    def n_unique(self):
        return sum(len(g[3]) for g in self.groups)

    def integrate(self, kernel, basis=None, width=1):
        """Evaluate the moments for ``kernel(rho) -> (len(rho), ncols)``.

        ``basis`` lists the kernel columns for which basis moments are wanted
        (``True`` for all).  Returns ``M0`` of shape (n_pairs, ncols) and
        ``M1`` of shape (n_pairs, len(basis), 3, 3) or ``None``.  ``width`` is
        a hint for the number of kernel columns, used to bound chunk memory.
        """
        if basis is False:
            basis = None
        elif basis is not None and basis is not True:
            basis = np.asarray(basis, dtype=np.int64)
        M0 = None
        M1 = None
        for kind, order, sel, rep, inverse, pa, pb in self.groups:
            lam_x, lam_y, w = _rule_for(kind, self.level, self.xi_splits, order)
            m = len(w)
            per = max(1, self.chunk_nodes // (m * max(1, width)))
            chunks = [slice(s, min(s + per, len(rep))) for s in range(0, len(rep), per)]
            LL = (lam_x[:, :, None] * lam_y[:, None, :]).reshape(m, 9)

            def work(c, pa=pa, pb=pb, lam_x=lam_x, lam_y=lam_y, w=w, kind=kind, sel=sel, rep=rep, LL=LL):
                A, B = pa[c], pb[c]
                x = np.einsum("mi,pik->pmk", lam_x, A)
                y = np.einsum("mi,pik->pmk", lam_y, B)
                rho = np.sqrt(np.sum((x - y) ** 2, axis=2))
                K = np.asarray(kernel(rho.ravel()), dtype=float)
                K = K.reshape(rho.shape + (-1,))
                if not np.all(np.isfinite(K)):
                    p, q, col = np.argwhere(~np.isfinite(K))[0]
                    g = sel[rep[c][p]]
                    raise NumericError(
                        f"non-finite kernel value (column {col}) in {kind.value} pair "
                        f"({self.ia[g]}, {self.ib[g]}) at x={x[p, q].tolist()}, y={y[p, q].tolist()}",
                    )
                area = 0.5 * np.linalg.norm(np.cross(A[:, 1] - A[:, 0], A[:, 2] - A[:, 0]), axis=1) \
                    * 0.5 * np.linalg.norm(np.cross(B[:, 1] - B[:, 0], B[:, 2] - B[:, 0]), axis=1)
                Kw = K * w[None, :, None]
                m0 = Kw.sum(axis=1) * area[:, None]
                m1 = None
                if basis is not None:
                    Kb = Kw if basis is True else Kw[:, :, basis]
                    m1 = np.matmul(Kb.transpose(0, 2, 1), LL).reshape(len(A), -1, 3, 3) * area[:, None, None, None]
                return m0, m1

            results = run_chunks(work, chunks)
            m0 = np.concatenate([r[0] for r in results])
            if M0 is None:
                M0 = np.zeros((self.n_pairs, m0.shape[1]))
                if basis is not None:
                    nb = m0.shape[1] if basis is True else len(basis)
                    M1 = np.zeros((self.n_pairs, nb, 3, 3))
            M0[sel] = m0[inverse]
            if basis is not None:
                m1 = np.concatenate([r[1] for r in results])[inverse]
                # back from canonical labelling to the original local numbering
                pa_idx = self.perm_a[sel]
                pb_idx = self.perm_b[sel]
                out = np.empty_like(m1)
                rows = np.arange(len(sel))[:, None, None]
                for i in range(3):
                    for j in range(3):
                        out[rows[:, 0, 0], :, pa_idx[:, i], pb_idx[:, j]] = m1[:, :, i, j]
                M1[sel] = out
        return M0, M1
