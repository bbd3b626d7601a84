"""Space-time Galerkin matrices and layer potentials.

Every temporal integral is done in closed form through the time
antiderivatives ``H1``, ``H2`` and ``J1``; only the spatial 4D panel
integrals are numerical.

Coefficient layout of a space-time vector is time-major: entry
``k * n_space + i`` belongs to spatial basis function ``i`` on interval ``k``
(both 0-based).
"""
from dataclasses import dataclass
from enum import Enum
import math
import struct

import numpy as np
from scipy.special import erf, erfc

from .errors import DimensionMismatchError, DomainError, InvalidArgumentError, NumericError, ParseError
from .geometry import SurfaceMesh, TimePartition
from .kernels import KernelParams, dtau_kernel_rho, h1, j1
from .parallel import run_chunks
from .quadrature import PairIntegrator, composite_triangle_rule, gauss_legendre

__all__ = [
    "SpatialBasis",
    "SpaceDescriptor",
    "BlockLowerTriangularMatrix",
    "SpaceTimeDensity",
    "time_weight_V",
    "time_weight_b",
    "assemble_V",
    "assemble_D",
    "assemble_b_matrix",
    "evaluate_single_layer",
    "evaluate_double_layer",
]

# lags d = k - l below this use the elevated quadrature tier
NEAR_LAGS = 2
NEAR_LEVEL_BOOST = 2


class SpatialBasis(Enum):
    P0 = "P0_per_triangle"
    P1 = "P1_vertex_hats"


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    """Tensor-product space: spatial basis on ``mesh`` times P0 on ``partition``."""

    spatial: SpatialBasis
    mesh: SurfaceMesh
    partition: TimePartition

    def __post_init__(self):
        object.__setattr__(self, "spatial", SpatialBasis(self.spatial))

    @property
    def n_space(self):
        return self.mesh.n_triangles if self.spatial is SpatialBasis.P0 else self.mesh.n_vertices

    @property
    def n_time(self):
        return self.partition.n_steps

    @property
    def dof_count(self):
        return self.n_space * self.n_time


@dataclass(frozen=True, eq=False)
class SpaceTimeDensity:
    descriptor: SpaceDescriptor
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).ravel()
        if len(c) != self.descriptor.dof_count:
            raise DimensionMismatchError(
                f"density has {len(c)} coefficients, descriptor needs {self.descriptor.dof_count}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def blocks(self):
        """Coefficients reshaped to (n_time, n_space)."""
        return self.coefficients.reshape(self.descriptor.n_time, self.descriptor.n_space)

    def __add__(self, other):
        return SpaceTimeDensity(self.descriptor, self.coefficients + other.coefficients)

    def __mul__(self, a):
        return SpaceTimeDensity(self.descriptor, a * self.coefficients)

    __rmul__ = __mul__

    def to_csv(self, path):
        """Write ``k,dof,value`` rows (``k`` 1-based interval, ``dof`` 0-based)."""
        b = self.blocks()
        with open(path, "w") as f:
            f.write("k,dof,value\n")
            for k in range(b.shape[0]):
                for i in range(b.shape[1]):
                    f.write(f"{k + 1},{i},{b[k, i]:.17g}\n")


_MAGIC = b"HBEMBLT1"


class BlockLowerTriangularMatrix:
    """Causal block matrix ``A[k, l]`` with ``A[k, l] = 0`` for ``l > k``.

    Toeplitz storage keeps one block per lag ``d = k - l``; full storage keeps
    the ``N (N + 1) / 2`` lower blocks in row order.
    """

    def __init__(self, n_time, blocks, toeplitz):
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim != 3:
            raise DimensionMismatchError("blocks must be a (n_blocks, rows, cols) array")
        expected = n_time if toeplitz else n_time * (n_time + 1) // 2
        if len(blocks) != expected:
            raise DimensionMismatchError(f"expected {expected} blocks, got {len(blocks)}")
        self.n_time = int(n_time)
        self.toeplitz = bool(toeplitz)
        self.blocks = blocks

    @property
    def rows(self):
        return self.blocks.shape[1]

    @property
    def cols(self):
        return self.blocks.shape[2]

    @property
    def shape(self):
        return (self.n_time * self.rows, self.n_time * self.cols)

    @staticmethod
    def _index(k, l):
        return k * (k + 1) // 2 + l

    def block(self, k, l):
        """Block (k, l), 0-based; an all-zero array above the diagonal."""
        if not (0 <= k < self.n_time and 0 <= l < self.n_time):
            raise InvalidArgumentError(f"block ({k}, {l}) out of range for N_t = {self.n_time}")
        if l > k:
            return np.zeros((self.rows, self.cols))
        return self.blocks[k - l] if self.toeplitz else self.blocks[self._index(k, l)]

    def to_dense(self):
        out = np.zeros(self.shape)
        r, c = self.rows, self.cols
        for k in range(self.n_time):
            for l in range(k + 1):
                out[k * r:(k + 1) * r, l * c:(l + 1) * c] = self.block(k, l)
        return out

    def to_full(self):
        """Equivalent matrix in full lower-triangular storage."""
        if not self.toeplitz:
            return self
        b = [self.blocks[k - l] for k in range(self.n_time) for l in range(k + 1)]
        return BlockLowerTriangularMatrix(self.n_time, np.array(b), False)

    def truncate(self, n):
        """Leading ``n x n`` block principal submatrix."""
        if not 1 <= n <= self.n_time:
            raise InvalidArgumentError(f"cannot truncate to {n} blocks")
        if self.toeplitz:
            return BlockLowerTriangularMatrix(n, self.blocks[:n], True)
        return BlockLowerTriangularMatrix(n, self.blocks[: n * (n + 1) // 2], False)

    def matvec(self, x):
        x = np.asarray(x, dtype=float).reshape(self.n_time, self.cols)
        y = np.zeros((self.n_time, self.rows))
        for k in range(self.n_time):
            for l in range(k + 1):
                y[k] += self.block(k, l) @ x[l]
        return y.ravel()

    def __matmul__(self, x):
        return self.matvec(x)

    def combine(self, other, a=1.0, b=1.0):
        """``a * self + b * other`` (storage kinds must match)."""
        if self.toeplitz != other.toeplitz or self.blocks.shape != other.blocks.shape:
            raise DimensionMismatchError("matrices have different storage layouts")
        return BlockLowerTriangularMatrix(self.n_time, a * self.blocks + b * other.blocks, self.toeplitz)

    def save_binary(self, path):
        """Magic ``HBEMBLT1``, int64 header ``[N_t, rows, cols, n_blocks, toeplitz]``, then
        little-endian float64 blocks in row-major order."""
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<5q", self.n_time, self.rows, self.cols, len(self.blocks), int(self.toeplitz)))
            f.write(np.ascontiguousarray(self.blocks, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, path):
        with open(path, "rb") as f:
            if f.read(8) != _MAGIC:
                raise ParseError(f"{path}: not a block matrix dump")
            n_time, rows, cols, nb, toep = struct.unpack("<5q", f.read(40))
            data = np.frombuffer(f.read(), dtype="<f8")
        if data.size != nb * rows * cols:
            raise ParseError(f"{path}: truncated block data")
        return cls(n_time, data.reshape(nb, rows, cols).astype(float), bool(toep))

    def to_csv(self, path):
        """Dense matrix as CSV with 17 significant digits (small cases only)."""
        np.savetxt(path, self.to_dense(), delimiter=",", fmt="%.17g")


# -- time weights -------------------------------------------------------------

class _TimePlan:
    """Second-difference time weights for a set of (k, l) block columns.

    Column ``c`` is ``sum_j sign_j F(rho, s_j)`` over four lags, ``F`` being
    ``H2`` (single layer) or ``H1`` (b-form).  Each ``F`` is split into a part
    bounded at ``rho = 0`` plus ``coeff(s) / (4 pi alpha rho)``; the ``coeff``
    combination is summed exactly so that the ``1/rho`` singularity cancels
    where it should.  Far from the origin the unsplit closed form is used,
    which avoids cancellation of the ``1/rho`` parts.
    """

    def __init__(self, partition, keys, toeplitz):
        self.keys = list(keys)
        t = partition.breakpoints
        dt = partition.T / partition.n_steps
        terms = []
        for key in self.keys:
            if toeplitz:
                d = key
                s = [(d + 1) * dt, d * dt, d * dt, (d - 1) * dt]
            else:
                k, l = key
                s = [t[k + 1] - t[l], t[k] - t[l], t[k + 1] - t[l + 1], t[k] - t[l + 1]]
            terms.append(list(zip(s, (1.0, -1.0, -1.0, 1.0))))
        svals = sorted({s for col in terms for s, _ in col if s > 0})
        self.svals = np.array(svals)
        index = {s: i for i, s in enumerate(svals)}
        self.C = np.zeros((len(svals), len(self.keys)))
        self.coeff_h2 = np.zeros(len(self.keys))
        self.coeff_h1 = np.zeros(len(self.keys))
        self.smin = np.full(len(self.keys), np.inf)
        for c, col in enumerate(terms):
            smax = max(abs(s) for s, _ in col)
            for s, sign in col:
                if s > 0:
                    self.C[index[s], c] += sign
                    self.coeff_h2[c] += sign * s
                    self.coeff_h1[c] += sign
                    self.smin[c] = min(self.smin[c], s)
            if abs(self.coeff_h2[c]) <= 8 * np.finfo(float).eps * smax:
                self.coeff_h2[c] = 0.0

    def evaluate(self, family, rho, alpha):
        rho = np.asarray(rho, dtype=float)[:, None]
        s = self.svals[None, :]
        u = rho / (2.0 * np.sqrt(alpha * s))
        ef, efc = erf(u), erfc(u)
        fpa = 4.0 * math.pi * alpha
        if family == "H1":
            reg = -ef / (fpa * rho)
            direct = efc / (fpa * rho)
            coeff = self.coeff_h1
        else:
            g = np.sqrt(s / (alpha * math.pi)) * np.exp(-u * u) / fpa
            tail = rho * efc / (2.0 * fpa * alpha)
            reg = -s * ef / (fpa * rho) + tail - g
            direct = s * efc / (fpa * rho) + tail - g
            coeff = self.coeff_h2
        split = reg @ self.C + coeff[None, :] / (fpa * rho)
        full = direct @ self.C
        far = rho >= 6.0 * np.sqrt(alpha * self.smin)[None, :]
        return np.where(far, full, split)


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise InvalidArgumentError("time weights need rho > 0")
    return rho


def _single_key_plan(k, l, partition):
    if not (1 <= l <= partition.n_steps and 1 <= k <= partition.n_steps):
        raise InvalidArgumentError(f"interval indices ({k}, {l}) out of range 1..{partition.n_steps}")
    return _TimePlan(partition, [(k - 1, l - 1)], False)


def time_weight_V(rho, k, l, partition, alpha=1.0):
    """Exact double time integral of ``G(rho, t - tau)`` over ``tau_k x tau_l`` (1-based)."""
    rho = _check_rho(rho)
    plan = _single_key_plan(k, l, partition)
    if l > k:
        return np.zeros_like(rho)[()]
    return plan.evaluate("H2", rho.ravel(), alpha)[:, 0].reshape(rho.shape)[()]


def time_weight_b(rho, k, l, partition, alpha=1.0):
    """Time factor of the b-form entry for trial interval ``l`` and test interval ``k`` (1-based).

    Second difference of ``H1``; for ``l == k`` this reduces to ``H1(rho, dt_k)``.
    """
    rho = _check_rho(rho)
    plan = _single_key_plan(k, l, partition)
    if l > k:
        return np.zeros_like(rho)[()]
    return plan.evaluate("H1", rho.ravel(), alpha)[:, 0].reshape(rho.shape)[()]


def _history_b_weight(rho, k, l, partition, alpha, n_u):
    """``-int_{tau_k} int_{tau_l} dG/dtau`` by quadrature in the lag variable (l < k, 0-based).

    The lag ``s = t - tau`` has the trapezoidal density ``w(s)`` (overlap
    length), linear between kinks.  Each linear piece is integrated in
    ``u = rho / (2 sqrt(alpha s))``, where

        -dG/dtau(rho, s) |ds| = (2 u^4 - 3 u^2) exp(-u^2) / (pi^{3/2} rho^3) du

    is smooth and decays like ``exp(-u^2)``.
    """
    t = partition.breakpoints
    a0, a1, b0, b1 = t[k], t[k + 1], t[l], t[l + 1]
    kinks = np.unique(np.array([a0 - b1, a0 - b0, a1 - b1, a1 - b0]))
    kinks = kinks[kinks >= 0]

    def w(s):
        return max(min(a1, s + b1) - max(a0, s + b0), 0.0)

    x, wx = gauss_legendre(n_u)
    rho = np.asarray(rho, dtype=float)[:, None]
    total = np.zeros(rho.shape[0])
    for sa, sb in zip(kinks[:-1], kinks[1:]):
        # w is linear on [sa, sb]
        c1 = (w(sb) - w(sa)) / (sb - sa)
        c0 = w(sa) - c1 * sa
        ub = rho / (2.0 * math.sqrt(alpha * sb))
        ua = rho / (2.0 * math.sqrt(alpha * sa)) if sa > 0 else ub + 8.0
        u = ub + (ua - ub) * x[None, :]
        u2 = u * u
        s = rho * rho / (4.0 * alpha * u2)
        f = (2.0 * u2 * u2 - 3.0 * u2) * np.exp(-u2) * (c0 + c1 * s)
        total += (f @ wx) * (ua - ub)[:, 0] / (math.pi ** 1.5 * rho[:, 0] ** 3)
    return total


# -- assembly -------------------------------------------------------------------

def _block_keys(partition, toeplitz):
    n = partition.n_steps
    if toeplitz:
        return list(range(n)), [d < NEAR_LAGS for d in range(n)]
    keys = [(k, l) for k in range(n) for l in range(k + 1)]
    return keys, [k - l < NEAR_LAGS for k, l in keys]


def _resolve_storage(partition, storage):
    if storage == "auto":
        return partition.uniform
    if storage == "toeplitz":
        if not partition.uniform:
            raise InvalidArgumentError("Toeplitz storage needs a uniform partition")
        return True
    if storage == "full":
        return False
    raise InvalidArgumentError(f"unknown storage {storage!r}")


def _all_pairs(mesh):
    nt = mesh.n_triangles
    ia, ib = np.meshgrid(np.arange(nt), np.arange(nt), indexing="ij")
    return ia.ravel(), ib.ravel()


def _integrate_columns(mesh, plan_keys, near, partition, toeplitz, families, alpha, level, basis_families,
                       history=None):
    """Pair moments for every (family, block) column.

    ``families`` is a list of ``"H1"``/``"H2"``; returns ``{family: (M0, M1)}``
    with arrays shaped (nt, nt, n_blocks) and (nt, nt, n_blocks, 3, 3).
    """
    ia, ib = _all_pairs(mesh)
    nt = mesh.n_triangles
    nb = len(plan_keys)
    out = {f: [np.zeros((nt * nt, nb)), np.zeros((nt * nt, nb, 3, 3)) if f in basis_families else None]
           for f in families}
    near = np.asarray(near)
    for is_near, lev in ((True, level + NEAR_LEVEL_BOOST), (False, level)):
        cols = np.nonzero(near == is_near)[0]
        if len(cols) == 0:
            continue
        plan = _TimePlan(partition, [plan_keys[c] for c in cols], toeplitz)
        hist_cols = []
        if history is not None:
            hist_cols = [j for j, c in enumerate(cols) if history(plan_keys[c]) is not None]

        def kernel(rho):
            parts = []
            for f in families:
                v = plan.evaluate(f, rho, alpha)
                if f == "H1" and hist_cols:
                    for j in hist_cols:
                        v[:, j] = history(plan_keys[cols[j]])(rho)
                parts.append(v)
            return np.concatenate(parts, axis=1)

        width = len(families) * (len(plan.svals) + len(cols)) * 3
        basis = []
        for fi, f in enumerate(families):
            if f in basis_families:
                basis += list(fi * len(cols) + np.arange(len(cols)))
        integrator = PairIntegrator(mesh, ia, ib, level=lev)
        try:
            M0, M1 = integrator.integrate(kernel, basis=basis if basis else None, width=width)
        except NumericError as exc:
            raise NumericError(f"{exc} while assembling blocks {[plan_keys[c] for c in cols]}") from exc
        bpos = 0
        for fi, f in enumerate(families):
            out[f][0][:, cols] = M0[:, fi * len(cols):(fi + 1) * len(cols)]
            if f in basis_families:
                out[f][1][:, cols] = M1[:, bpos:bpos + len(cols)]
                bpos += len(cols)
    return {f: (m0.reshape(nt, nt, nb), None if m1 is None else m1.reshape(nt, nt, nb, 3, 3))
            for f, (m0, m1) in out.items()}


def _check_desc(desc, spatial):
    if not isinstance(desc, SpaceDescriptor):
        raise InvalidArgumentError("expected a SpaceDescriptor")
    if desc.spatial is not spatial:
        raise InvalidArgumentError(f"this operator needs a {spatial.value} spatial basis, got {desc.spatial.value}")


def _params(params):
    if isinstance(params, KernelParams):
        return params
    return KernelParams(float(params))


def assemble_V(desc, params, level=3, storage="auto"):
    """Single layer Galerkin matrix for P0 x P0 densities."""
    _check_desc(desc, SpatialBasis.P0)
    alpha = _params(params).alpha
    toeplitz = _resolve_storage(desc.partition, storage)
    keys, near = _block_keys(desc.partition, toeplitz)
    res = _integrate_columns(desc.mesh, keys, near, desc.partition, toeplitz, ["H2"], alpha, level, ())
    M0 = res["H2"][0]
    return BlockLowerTriangularMatrix(desc.n_time, np.moveaxis(M0, 2, 0), toeplitz)


def _scatter_p1(mesh):
    """Dense (nt, nv) maps Q_a with Q_a[T, tri[T, a]] = 1."""
    nt, nv = mesh.n_triangles, mesh.n_vertices
    Q = np.zeros((3, nt, nv))
    for a in range(3):
        Q[a, np.arange(nt), mesh.triangles[:, a]] = 1.0
    return Q


def _b_blocks(mesh, M1):
    """Blocks sum_{T,S} (n_T . n_S) M1[T, S, d, a, b] scattered to vertex hats."""
    Q = _scatter_p1(mesh)
    N = mesh.normals @ mesh.normals.T
    nb = M1.shape[2]
    out = np.zeros((nb, mesh.n_vertices, mesh.n_vertices))
    for d in range(nb):
        for a in range(3):
            for b in range(3):
                out[d] += Q[a].T @ (N * M1[:, :, d, a, b]) @ Q[b]
    return out


def _curl_blocks(mesh, M0):
    """Blocks sum_{T,S} curl_i|_T . curl_j|_S M0[T, S, d]."""
    curls = mesh.p1_curls()
    nt, nv = mesh.n_triangles, mesh.n_vertices
    P = np.zeros((3, nt, nv))
    for a in range(3):
        for c in range(3):
            np.add.at(P[c], (np.arange(nt), mesh.triangles[:, a]), curls[:, a, c])
    nb = M0.shape[2]
    out = np.zeros((nb, nv, nv))
    for d in range(nb):
        for c in range(3):
            out[d] += P[c].T @ M0[:, :, d] @ P[c]
    return out


def _history_factory(partition, alpha, level, toeplitz):
    n_u = 4 + 4 * level

    def history(key):
        if toeplitz:
            d = key
            if d == 0:
                return None
            k, l = d, 0
        else:
            k, l = key
            if k == l:
                return None
        return lambda rho: _history_b_weight(rho, k, l, partition, alpha, n_u)

    return history


def assemble_b_matrix(desc, params, level=3, storage="auto", method="closed_form"):
    """b-form matrix for P1 x P0 functions.

    ``method="closed_form"`` uses the H1 second differences for every block;
    ``method="history_quadrature"`` replaces the off-diagonal (l < k) time
    weights by quadrature of ``-dG/dtau`` over the lag variable.
    """
    _check_desc(desc, SpatialBasis.P1)
    alpha = _params(params).alpha
    toeplitz = _resolve_storage(desc.partition, storage)
    keys, near = _block_keys(desc.partition, toeplitz)
    if method == "closed_form":
        history = None
    elif method == "history_quadrature":
        history = _history_factory(desc.partition, alpha, level, toeplitz)
    else:
        raise InvalidArgumentError(f"unknown b-form method {method!r}")
    res = _integrate_columns(desc.mesh, keys, near, desc.partition, toeplitz, ["H1"], alpha, level, ("H1",),
                             history=history)
    return BlockLowerTriangularMatrix(desc.n_time, _b_blocks(desc.mesh, res["H1"][1]), toeplitz)


def assemble_D(desc, params, level=3, storage="auto", return_parts=False):
    """Hypersingular Galerkin matrix ``alpha^2 * CurlTerm + alpha * b`` for P1 x P0.

    With ``return_parts`` the curl term and the b matrix are returned as well.
    """
    _check_desc(desc, SpatialBasis.P1)
    alpha = _params(params).alpha
    toeplitz = _resolve_storage(desc.partition, storage)
    keys, near = _block_keys(desc.partition, toeplitz)
    res = _integrate_columns(desc.mesh, keys, near, desc.partition, toeplitz, ["H2", "H1"], alpha, level, ("H1",))
    curl = BlockLowerTriangularMatrix(desc.n_time, _curl_blocks(desc.mesh, res["H2"][0]), toeplitz)
    b = BlockLowerTriangularMatrix(desc.n_time, _b_blocks(desc.mesh, res["H1"][1]), toeplitz)
    D = curl.combine(b, alpha * alpha, alpha)
    if return_parts:
        return D, curl, b
    return D


# -- potentials -----------------------------------------------------------------

def _interior_points(mesh, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 3 or not np.all(np.isfinite(x)):
        raise InvalidArgumentError("evaluation points must be finite 3-vectors")
    dist = mesh.distance_to_surface(x)
    inside = mesh.contains(x)
    bad = np.nonzero(~inside | (dist <= 1e-12 * math.sqrt(mesh.total_area)))[0]
    if len(bad):
        i = int(bad[0])
        raise DomainError(f"point {i} at {x[i].tolist()} is not strictly inside the surface")
    return x, dist


def _panel_rule(mesh, x, dist, level):
    """Per (point, triangle) composite level for the regular surface rule."""
    diam = mesh.diameters
    q = dist[:, None] / diam[None, :]
    q = np.maximum(q, np.linalg.norm(x[:, None, :] - mesh.centroids[None], axis=2) / diam[None, :] - 1.0)
    lev = np.ceil(np.log2(np.maximum(2.0 / np.maximum(q, 1e-3), 1.0))).astype(int)
    return np.clip(lev, 0, 4)


def _check_times(t, partition):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(t > partition.T * (1 + 1e-12)):
        raise DomainError(f"evaluation times must lie in (0, T], T = {partition.T}")
    return t


def _potential(density, x, t, level, panel):
    """Sum over triangles of ``panel(i, r, rho, lags, tris, lam, w)`` for every point ``i``."""
    desc = density.descriptor
    mesh, part = desc.mesh, desc.partition
    x, dist = _interior_points(mesh, x)
    t = _check_times(t, part)
    if len(t) == 1 and len(x) > 1:
        t = np.full(len(x), t[0])
    if len(t) != len(x):
        raise DimensionMismatchError("need one time per point (or a single time)")
    order = min(2 * (2 + 2 * level) - 1, 20)
    sub = _panel_rule(mesh, x, dist, level)
    verts = mesh.vertices[mesh.triangles]

    def work(i):
        total = 0.0
        lags = t[i] - part.breakpoints
        for lev in np.unique(sub[i]):
            tris = np.nonzero(sub[i] == lev)[0]
            rule = composite_triangle_rule(order, int(lev))
            y = np.einsum("mi,tik->tmk", rule.points, verts[tris])
            r = x[i][None, None, :] - y
            rho = np.linalg.norm(r, axis=2)
            w = rule.weights[None, :] * mesh.areas[tris][:, None]
            total += panel(r, rho, lags, tris, rule.points, w)
        return total

    return np.array(run_chunks(work, range(len(x))))


def evaluate_single_layer(density, x, t, params, level=3):
    """``(V~ w)(x, t)`` for a P0 x P0 density at interior points ``x`` and times ``t``."""
    desc = density.descriptor
    _check_desc(desc, SpatialBasis.P0)
    alpha = _params(params).alpha
    coeff = density.blocks()

    def panel(r, rho, lags, tris, lam, w):
        F = h1(rho[..., None], lags[None, None, :], alpha)
        # integral over interval l of G(t - tau): H1(t - t_l) - H1(t - t_{l+1})
        tf = F[..., :-1] - F[..., 1:]
        return float(np.einsum("tml,tm,lt->", tf, w, coeff[:, tris]))

    return _potential(density, x, t, level, panel)


def evaluate_double_layer(density, x, t, params, level=3):
    """``(W v)(x, t)`` with kernel ``alpha dG/dn_y`` for a P1 x P0 density."""
    desc = density.descriptor
    _check_desc(desc, SpatialBasis.P1)
    alpha = _params(params).alpha
    mesh = desc.mesh
    coeff = density.blocks()

    def panel(r, rho, lags, tris, lam, w):
        F = j1(rho[..., None], lags[None, None, :], alpha)
        tf = F[..., :-1] - F[..., 1:]
        rn = 0.5 * np.einsum("tmk,tk->tm", r, mesh.normals[tris])
        c = coeff[:, mesh.triangles[tris]]  # (n_time, ntris, 3)
        return float(np.einsum("tml,tm,tm,mj,ltj->", tf, rn, w, lam, c))

    return _potential(density, x, t, level, panel)
