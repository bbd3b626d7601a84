"""Causal block forward solves for the indirect first-kind boundary integral equations.

Dirichlet: ``u = V~ w`` with ``V w = g`` (P0 x P0 density).
Neumann:   ``u = W v`` with ``D v = -alpha h`` (P1 x P0 density), ``D = -alpha gamma_1 W``.
"""
from dataclasses import dataclass, field
from enum import Enum
import math
import time
import warnings

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .assembly import (
    BlockLowerTriangularMatrix,
    SpaceDescriptor,
    SpaceTimeDensity,
    SpatialBasis,
    assemble_D,
    assemble_V,
    evaluate_double_layer,
    evaluate_single_layer,
)
from .errors import DimensionMismatchError, InvalidArgumentError, SingularBlockError
from .kernels import KernelParams, kernel_rho
from .quadrature import gauss_legendre, triangle_rule

__all__ = [
    "DatumKind",
    "BoundaryDatum",
    "SolveReport",
    "block_forward_solve",
    "solve_dirichlet",
    "solve_neumann",
    "evaluate_solution_interior",
    "manufactured_solution",
    "write_interior_csv",
]

RCOND_MIN = 1e3 * np.finfo(float).eps
RESIDUAL_TOL = 1e-10


class DatumKind(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryDatum:
    """Boundary data ``f(points (m, 3), normals (m, 3), t (m,)) -> (m,)``."""

    evaluator: object
    kind: DatumKind

    def __post_init__(self):
        object.__setattr__(self, "kind", DatumKind(self.kind))

    def __call__(self, x, n, t):
        v = np.asarray(self.evaluator(x, n, t), dtype=float)
        if v.shape != (len(x),) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"{self.kind.value} datum returned non-finite or misshaped values")
        return v

    def nonzero_initial_trace(self, mesh):
        """True when Dirichlet data do not vanish at t = 0 (classical solvability needs g(., 0) = 0)."""
        if self.kind is not DatumKind.DIRICHLET:
            return False
        x = mesh.centroids
        v = self(x, mesh.normals, np.zeros(len(x)))
        return bool(np.max(np.abs(v)) > 1e-12)

    @classmethod
    def constant(cls, value, kind):
        return cls(lambda x, n, t: np.full(len(x), float(value)), kind)


@dataclass
class SolveReport:
    density: SpaceTimeDensity
    kind: DatumKind
    params: KernelParams
    residuals: np.ndarray
    rhs_norms: np.ndarray
    rcond: np.ndarray
    factorizations: int
    wall_time: float
    level: int = 3
    matrix: BlockLowerTriangularMatrix = field(default=None, repr=False)
    rhs: np.ndarray = field(default=None, repr=False)
    datum: BoundaryDatum = field(default=None, repr=False)


def _rcond(block, lu_piv):
    anorm = np.linalg.norm(block, 1)
    lu, _ = lu_piv
    gecon = lapack.get_lapack_funcs("gecon", (lu,))
    rc, info = gecon(lu, anorm, norm="1")
    return float(rc)


def block_forward_solve(A, rhs, return_stats=False):
    """Solve the causal system ``A x = rhs`` block by block.

    The diagonal block is factored once when ``A`` is Toeplitz.  History
    contributions are accumulated in increasing ``j`` so that solving a
    truncated system reproduces the leading blocks of the full solution
    bitwise.
    """
    if not isinstance(A, BlockLowerTriangularMatrix):
        raise InvalidArgumentError("expected a BlockLowerTriangularMatrix")
    if A.rows != A.cols:
        raise DimensionMismatchError("diagonal blocks must be square")
    rhs = np.asarray(rhs, dtype=float).ravel()
    if rhs.size != A.shape[0]:
        raise DimensionMismatchError(f"rhs has length {rhs.size}, matrix needs {A.shape[0]}")
    n, m = A.n_time, A.rows
    b = rhs.reshape(n, m)
    x = np.zeros((n, m))
    residuals = np.zeros(n)
    rhs_norms = np.linalg.norm(b, axis=1)
    rconds = np.zeros(n)
    cache = {}
    for k in range(n):
        key = 0 if A.toeplitz else k
        B0 = A.block(k, k)
        if key not in cache:
            if not np.all(np.isfinite(B0)):
                raise SingularBlockError(f"diagonal block {k + 1} has non-finite entries", block=k + 1)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                f = lu_factor(B0, check_finite=False)
            rc = _rcond(B0, f)
            if not rc > RCOND_MIN:
                raise SingularBlockError(
                    f"diagonal block {k + 1} is singular to working precision (rcond estimate {rc:.3e})",
                    block=k + 1,
                    rcond=rc,
                )
            cache[key] = (f, rc)
        f, rc = cache[key]
        rconds[k] = rc
        r = b[k].copy()
        for j in range(k):
            r -= A.block(k, j) @ x[j]
        x[k] = lu_solve(f, r, check_finite=False)
        res = np.linalg.norm(B0 @ x[k] - r)
        # refine once if the direct solve missed the residual target
        if res > RESIDUAL_TOL * max(rhs_norms[k], np.linalg.norm(r)):
            x[k] += lu_solve(f, r - B0 @ x[k], check_finite=False)
            res = np.linalg.norm(B0 @ x[k] - r)
        residuals[k] = res
    if return_stats:
        return x.ravel(), {"residuals": residuals, "rhs_norms": rhs_norms, "rcond": rconds,
                           "factorizations": len(cache)}
    return x.ravel()


# -- right-hand sides --------------------------------------------------------------

def _space_time_samples(mesh, partition, level):
    """Triangle-rule points per triangle and Gauss points per interval."""
    n = 2 + 2 * level
    rule = triangle_rule(min(2 * n - 1, 20))
    tg, tw = gauss_legendre(n)
    bp = partition.breakpoints
    times = bp[:-1, None] + np.diff(bp)[:, None] * tg[None, :]  # (N_t, nq)
    tweights = np.diff(bp)[:, None] * tw[None, :]
    x = np.einsum("mi,tik->tmk", rule.points, mesh.vertices[mesh.triangles])  # (nt, m, 3)
    sw = rule.weights[None, :] * mesh.areas[:, None]
    return rule, x, sw, times, tweights


def _sample(datum, mesh, x, times):
    nt, m, _ = x.shape
    N, q = times.shape
    X = np.broadcast_to(x[None, None], (N, q, nt, m, 3)).reshape(-1, 3)
    Nn = np.broadcast_to(mesh.normals[None, None, :, None, :], (N, q, nt, m, 3)).reshape(-1, 3)
    Tt = np.broadcast_to(times[:, :, None, None], (N, q, nt, m)).reshape(-1)
    return datum(X, Nn, Tt).reshape(N, q, nt, m)


def project_p0(datum, mesh, partition, level=3):
    """``int_{tau_k} int_{T_a} g`` for every interval ``k`` and triangle ``a``."""
    _, x, sw, times, tw = _space_time_samples(mesh, partition, level)
    g = _sample(datum, mesh, x, times)
    return np.einsum("kqam,kq,am->ka", g, tw, sw).ravel()


def project_p1(datum, mesh, partition, level=3):
    """``int_{tau_k} int_Gamma h phi_i`` for every interval ``k`` and vertex ``i``."""
    rule, x, sw, times, tw = _space_time_samples(mesh, partition, level)
    h = _sample(datum, mesh, x, times)
    loc = np.einsum("kqam,kq,am,mj->kaj", h, tw, sw, rule.points)  # (N_t, nt, 3)
    out = np.zeros((partition.n_steps, mesh.n_vertices))
    for j in range(3):
        for k in range(partition.n_steps):
            np.add.at(out[k], mesh.triangles[:, j], loc[k, :, j])
    return out.ravel()


def _params(params):
    return params if isinstance(params, KernelParams) else KernelParams(float(params))


def _solve(A, rhs, desc, kind, params, datum, level, t0):
    x, st = block_forward_solve(A, rhs, return_stats=True)
    return SolveReport(
        density=SpaceTimeDensity(desc, x),
        kind=kind,
        params=params,
        residuals=st["residuals"],
        rhs_norms=st["rhs_norms"],
        rcond=st["rcond"],
        factorizations=st["factorizations"],
        wall_time=time.perf_counter() - t0,
        level=level,
        matrix=A,
        rhs=rhs,
        datum=datum,
    )


def solve_dirichlet(mesh, partition, g, params, level=3, matrix=None):
    """Single layer ansatz: Galerkin ``V w = g`` with the L2-projected datum."""
    if g.kind is not DatumKind.DIRICHLET:
        raise InvalidArgumentError("solve_dirichlet needs a Dirichlet datum")
    params = _params(params)
    t0 = time.perf_counter()
    if g.nonzero_initial_trace(mesh):
        warnings.warn("Dirichlet datum does not vanish at t = 0", RuntimeWarning, stacklevel=2)
    desc = SpaceDescriptor(SpatialBasis.P0, mesh, partition)
    A = matrix if matrix is not None else assemble_V(desc, params, level)
    rhs = project_p0(g, mesh, partition, level)
    return _solve(A, rhs, desc, DatumKind.DIRICHLET, params, g, level, t0)


def solve_neumann(mesh, partition, h, params, level=3, matrix=None):
    """Double layer ansatz: Galerkin ``D v = -alpha h``."""
    if h.kind is not DatumKind.NEUMANN:
        raise InvalidArgumentError("solve_neumann needs a Neumann datum")
    params = _params(params)
    t0 = time.perf_counter()
    desc = SpaceDescriptor(SpatialBasis.P1, mesh, partition)
    A = matrix if matrix is not None else assemble_D(desc, params, level)
    rhs = -params.alpha * project_p1(h, mesh, partition, level)
    return _solve(A, rhs, desc, DatumKind.NEUMANN, params, h, level, t0)


def evaluate_solution_interior(report, points, times=None):
    """Potential of the solved density at interior ``(x, t)`` samples.

    ``points`` is either (m, 4) rows ``(x, y, z, t)`` or (m, 3) with ``times``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if times is None:
        if pts.shape[1] != 4:
            raise DimensionMismatchError("points need four columns (x, y, z, t) when times is omitted")
        x, t = pts[:, :3], pts[:, 3]
    else:
        x, t = pts, np.broadcast_to(np.asarray(times, dtype=float), (len(pts),))
    if report.kind is DatumKind.DIRICHLET:
        return evaluate_single_layer(report.density, x, t, report.params, report.level)
    return evaluate_double_layer(report.density, x, t, report.params, report.level)


def manufactured_solution(source, params):
    """``u*(x, t) = G(x - source, t)`` with its Dirichlet and Neumann traces.

    Returns ``(u, dirichlet_datum, neumann_datum)``; ``u(x (m, 3), t (m,))``.
    """
    src = np.asarray(source, dtype=float)
    alpha = _params(params).alpha

    def u(x, t):
        x = np.atleast_2d(x)
        return kernel_rho(np.linalg.norm(x - src, axis=1), np.asarray(t, dtype=float), alpha)

    def g(x, n, t):
        return u(x, t)

    def h(x, n, t):
        r = x - src
        t = np.asarray(t, dtype=float)
        safe = np.where(t > 0, t, 1.0)
        val = -np.einsum("mk,mk->m", r, n) / (2 * alpha * safe) * u(x, t)
        return np.where(t > 0, val, 0.0)

    return u, BoundaryDatum(g, DatumKind.DIRICHLET), BoundaryDatum(h, DatumKind.NEUMANN)


def write_interior_csv(path, x, t, values):
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
    with open(path, "w") as f:
        f.write("x,y,z,t,u\n")
        for p, tt, v in zip(x, t, values):
            f.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{tt:.17g},{v:.17g}\n")
