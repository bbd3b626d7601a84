"""Numerical studies of the kernel properties and of the discretization."""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.special import erfc

from .assembly import SpaceDescriptor, SpatialBasis, assemble_b_matrix
from .bie_solver import (
    DatumKind,
    evaluate_solution_interior,
    manufactured_solution,
    solve_dirichlet,
    solve_neumann,
)
from .errors import InvalidArgumentError
from .geometry import generate_cube_mesh, make_time_partition
from .kernels import (
    dtau_kernel_rho,
    first_part_bound_constant,
    h1,
    h2,
    j1,
    kernel_rho,
    time_derivative_bound_constant,
)
from .quadrature import PairIntegrator, gauss_legendre, triangle_rule

__all__ = [
    "StudyResult",
    "divergence_study",
    "b_consistency_check",
    "max_principle_check",
    "convergence_study",
    "kernel_property_suite",
    "DEFAULT_EPSILONS",
    "DEFAULT_PROBES",
]

DEFAULT_EPSILONS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


def _probe_grid():
    c = np.array([0.375, 0.5, 0.625])
    pts = np.array(np.meshgrid(c, c, c, indexing="ij")).reshape(3, -1).T
    ts = np.array([0.25, 0.5, 0.75, 1.0])
    return np.c_[np.repeat(pts, len(ts), axis=0), np.tile(ts, len(pts))]


# (x, y, z, t) probes in the central region of the unit cube
DEFAULT_PROBES = _probe_grid()


@dataclass
class StudyResult:
    """Table of study rows plus run metadata."""

    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for r in self.rows:
                f.write(",".join(_fmt(v) for v in r) + "\n")

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump({"study": self.name, **_jsonable(self.metadata)}, f, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def fit_loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- divergence of the naive b-form kernel ------------------------------------------------

def divergence_study(mesh, T, alpha, epsilons=DEFAULT_EPSILONS, level=4):
    """``I_eps``: the double surface integral of the time-integrated ``dG/dtau`` kernel.

    Per point pair the integrand is ``(T - eps) G(rho, eps)`` plus the bounded
    part ``[erfc(rho / (2 sqrt(alpha eps))) - erfc(rho / (2 sqrt(alpha T)))] / (4 pi alpha rho)``.
    The slope is fitted on all but the largest ``eps``.
    """
    eps = np.asarray(epsilons, dtype=float)
    if eps.ndim != 1 or len(eps) < 3:
        raise InvalidArgumentError("need at least three epsilon values")
    if np.any(eps <= 0) or np.any(eps >= T):
        raise InvalidArgumentError(f"every epsilon must lie in (0, T) with T = {T}")
    if np.any(np.diff(eps) >= 0):
        raise InvalidArgumentError("epsilons must be strictly decreasing")
    fpa = 4.0 * math.pi * alpha

    def kernel(rho):
        r = rho[:, None]
        e = eps[None, :]
        gauss = (T - e) * kernel_rho(r, e, alpha)
        bounded = (erfc(r / (2.0 * np.sqrt(alpha * e))) - erfc(r / (2.0 * math.sqrt(alpha * T)))) / (fpa * r)
        return np.concatenate([gauss, bounded], axis=1)

    # the Gaussian has width ~ sqrt(alpha eps); resolve it with a geometric split of the
    # singular coordinate, down to a fraction of that width relative to the panel size
    width = 2.0 * math.sqrt(alpha * eps.min()) / mesh.diameters.max()
    splits = []
    s = 1.0
    while s > width / 8.0:
        s /= 4.0
        splits.append(s)
    nt = mesh.n_triangles
    ia, ib = np.meshgrid(np.arange(nt), np.arange(nt), indexing="ij")
    M0, _ = PairIntegrator(mesh, ia.ravel(), ib.ravel(), level=level, xi_splits=tuple(sorted(splits))).integrate(
        kernel, width=2 * len(eps) + 4)
    totals = M0.sum(axis=0)
    gauss, bounded = totals[: len(eps)], totals[len(eps):]
    values = gauss + bounded
    slope = fit_loglog_slope(eps[1:], values[1:])
    rows = [(float(e), float(v), float(g), float(b)) for e, v, g, b in zip(eps, values, gauss, bounded)]
    return StudyResult(
        "divergence",
        ["epsilon", "I_eps", "gaussian_part", "bounded_part"],
        rows,
        {"slope": slope, "alpha": alpha, "T": T, "n_triangles": nt, "quad_level": level,
         "positive": bool(np.all(values > 0))},
    )


# -- dual-path b-form check ---------------------------------------------------------------

def b_consistency_check(mesh, partition, alpha, level=4):
    """Compare the closed-form b matrix with the history-quadrature path block by block."""
    desc = SpaceDescriptor(SpatialBasis.P1, mesh, partition)
    a = assemble_b_matrix(desc, alpha, level, storage="full", method="closed_form")
    b = assemble_b_matrix(desc, alpha, level, storage="full", method="history_quadrature")
    rows = []
    scale = np.linalg.norm(a.blocks)
    diag, hist = 0.0, 0.0
    idx = 0
    for k in range(partition.n_steps):
        for l in range(k + 1):
            A, B = a.block(k, l), b.block(k, l)
            diff = float(np.linalg.norm(A - B) / max(np.linalg.norm(A), np.finfo(float).tiny))
            rows.append((idx, k + 1, l + 1, diff))
            if k == l:
                diag = max(diag, diff)
            else:
                hist = max(hist, diff)
            idx += 1
    frob = float(np.linalg.norm(a.blocks - b.blocks) / scale)
    return StudyResult(
        "b_consistency",
        ["block", "k", "l", "relative_difference"],
        rows,
        {"frobenius_relative": frob, "max_diagonal_block": diag, "max_history_block": hist,
         "quad_level": level, "alpha": alpha, "n_triangles": mesh.n_triangles, "N_t": partition.n_steps},
    )


# -- maximum principle ---------------------------------------------------------------------

def _sup_on_sigma(datum, mesh, partition, level=3):
    rule = triangle_rule(8)
    tg, _ = gauss_legendre(2 + 2 * level)
    bp = partition.breakpoints
    ts = np.unique(np.concatenate([bp[1:], (bp[:-1, None] + np.diff(bp)[:, None] * tg).ravel()]))
    x = np.concatenate([np.einsum("mi,tik->tmk", rule.points, mesh.vertices[mesh.triangles]).reshape(-1, 3),
                        mesh.vertices])
    n = np.concatenate([np.repeat(mesh.normals, len(rule.weights), axis=0),
                        np.zeros((mesh.n_vertices, 3))])
    best = 0.0
    for t in ts:
        best = max(best, float(np.max(np.abs(datum(x, n, np.full(len(x), t))))))
    return best


def max_principle_check(report, probes=None, tolerance=0.05):
    """Compare ``max |u_h|`` over interior probes with the sampled ``sup |g|`` on the lateral boundary."""
    if report.kind is not DatumKind.DIRICHLET:
        raise InvalidArgumentError("the maximum principle check needs a Dirichlet solve")
    mesh = report.density.descriptor.mesh
    part = report.density.descriptor.partition
    if probes is None:
        probes = DEFAULT_PROBES
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    probes = probes[np.argsort(probes[:, 3], kind="stable")]
    u = evaluate_solution_interior(report, probes)
    g_sup = _sup_on_sigma(report.datum, mesh, part, report.level)
    u_max = float(np.max(np.abs(u))) if len(u) else 0.0
    bound = (1.0 + tolerance) * g_sup + 1e-10
    rows = [(i, *p, float(v)) for i, (p, v) in enumerate(zip(probes, u))]
    return StudyResult(
        "max_principle",
        ["probe", "x", "y", "z", "t", "u"],
        rows,
        {"max_abs_u": u_max, "sup_g": g_sup, "tolerance": tolerance, "violation": bool(u_max > bound),
         "violations": int(np.sum(np.abs(u) > bound))},
    )


# -- convergence ------------------------------------------------------------------------------

def convergence_study(problem, levels=3, alpha=1.0, source=(0.5, 0.5, 2.0), T=1.0, base_n=1, base_nt=4,
                      quad_level=3, probes=None, return_reports=False):
    """Manufactured-solution errors on the unit cube; each level has 4x triangles and 2x time steps.

    With ``return_reports`` the per-level solve reports are returned as well.
    """
    problem = DatumKind(problem)
    if levels < 3:
        raise InvalidArgumentError("a convergence study needs at least three levels")
    probes = DEFAULT_PROBES if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    u, g, h = manufactured_solution(source, alpha)
    exact = u(probes[:, :3], probes[:, 3])
    rows = []
    reports = []
    prev = None
    for lev in range(levels):
        n, nt = base_n * 2 ** lev, base_nt * 2 ** lev
        mesh = generate_cube_mesh(n)
        part = make_time_partition(T, nt)
        if problem is DatumKind.DIRICHLET:
            rep = solve_dirichlet(mesh, part, g, alpha, quad_level)
        else:
            rep = solve_neumann(mesh, part, h, alpha, quad_level)
        reports.append(rep)
        uh = evaluate_solution_interior(rep, probes)
        err = float(np.max(np.abs(uh - exact)) / np.max(np.abs(exact)))
        ratio = prev / err if prev is not None else float("nan")
        rows.append((lev + 1, mesh.n_triangles, nt, rep.density.descriptor.dof_count, err, ratio))
        prev = err
    errors = [r[4] for r in rows]
    result = StudyResult(
        f"convergence_{problem.value}",
        ["level", "n_triangles", "N_t", "dofs", "relative_error", "ratio"],
        rows,
        {"problem": problem.value, "alpha": alpha, "source": list(source), "T": T, "quad_level": quad_level,
         "ratios": [r[5] for r in rows[1:]],
         "strictly_decreasing": bool(all(b < a for a, b in zip(errors, errors[1:])))},
    )
    if return_reports:
        return result, reports
    return result


# -- kernel properties --------------------------------------------------------------------------

_D2_8TH = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
_D1_8TH = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def _stencil(f, x, h, coeffs):
    off = np.arange(-4, 5)
    return sum(c * f(x + o * h) for c, o in zip(coeffs, off) if c != 0.0)


def _sample_points(rng, n):
    """Random (r, s, alpha) with ``|r|^2 / (4 alpha s)`` in [1e-4, 30]."""
    alpha = np.exp(rng.uniform(math.log(0.1), math.log(10.0), n))
    s = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), n))
    q = np.exp(rng.uniform(math.log(1e-4), math.log(30.0), n))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = d * np.sqrt(4 * alpha * s * q)[:, None]
    return r, s, alpha


def kernel_property_suite(n_points=10_000, seed=0):
    """PDE residual, causality, symmetry, derivative checks, antiderivative chain and bounds.

    Relative errors of quantities that change sign (``dG/ds``) are measured
    against the natural size ``G / s`` where the quantity itself passes
    through zero.
    """
    rng = np.random.default_rng(seed)
    r, s, alpha = _sample_points(rng, n_points)
    rho = np.linalg.norm(r, axis=1)
    G = kernel_rho(rho, s, alpha)
    dGds = -dtau_kernel_rho(rho, s, alpha)
    scale_t = np.maximum(np.abs(dGds), G / s)
    rows = []

    def record(name, err, tol):
        err = np.asarray(err, dtype=float)
        fails = int(np.sum(~(err <= tol)))
        rows.append((len(rows), name, float(np.max(err)) if err.size else 0.0, tol, fails))

    # PDE: dG/ds = alpha * Laplacian G, Laplacian by 8th-order differences per axis
    hx = 0.05 * np.sqrt(alpha * s)
    lap = np.zeros(n_points)
    for ax in range(3):
        e = np.zeros(3)
        e[ax] = 1.0
        lap += _stencil(lambda y: kernel_rho(np.linalg.norm(y, axis=1), s, alpha), r, (hx[:, None] * e), _D2_8TH)
    lap /= hx ** 2
    record("pde_residual", np.abs(dGds - alpha * lap) / np.maximum(scale_t, np.finfo(float).eps), 1e-5)

    # causality and symmetry
    sneg = -s
    vals = [kernel_rho(rho, sneg, alpha), dtau_kernel_rho(rho, sneg, alpha), h1(rho, sneg, alpha),
            h2(rho, sneg, alpha), j1(rho, sneg, alpha), h1(rho, 0 * s, alpha), h2(rho, 0 * s, alpha),
            j1(rho, 0 * s, alpha)]
    record("causality", np.max(np.abs(np.array(vals)), axis=0), 0.0)
    Gm = kernel_rho(np.linalg.norm(-r, axis=1), s, alpha)
    record("symmetry", np.abs(Gm - G), 0.0)

    # gradient: -r / (2 alpha s) G against 8th-order differences
    grad = -r / (2 * alpha * s)[:, None] * G[:, None]
    fd = np.zeros_like(grad)
    for ax in range(3):
        e = np.zeros(3)
        e[ax] = 1.0
        fd[:, ax] = _stencil(lambda y: kernel_rho(np.linalg.norm(y, axis=1), s, alpha), r, hx[:, None] * e,
                             _D1_8TH) / hx
    record("gradient_fd", np.linalg.norm(grad - fd, axis=1) / np.maximum(np.linalg.norm(grad, axis=1), G / np.sqrt(
        alpha * s)), 1e-6)

    # time derivative and antiderivative chain, differences in s
    hs = 1e-3 * s
    fd_t = _stencil(lambda ss: kernel_rho(rho, ss, alpha), s, hs, _D1_8TH) / hs
    record("time_derivative_fd", np.abs(fd_t - dGds) / scale_t, 1e-6)
    fd_h1 = _stencil(lambda ss: h1(rho, ss, alpha), s, hs, _D1_8TH) / hs
    record("H1_prime_is_G", np.abs(fd_h1 - G) / G, 1e-6)
    H1v = h1(rho, s, alpha)
    fd_h2 = _stencil(lambda ss: h2(rho, ss, alpha), s, hs, _D1_8TH) / hs
    record("H2_prime_is_H1", np.abs(fd_h2 - H1v) / H1v, 1e-6)
    fd_j1 = _stencil(lambda ss: j1(rho, ss, alpha), s, hs, _D1_8TH) / hs
    record("J1_prime_is_G_over_s", np.abs(fd_j1 - G / s) / (G / s), 1e-6)

    # bounds: first part <= c s^-7/4 |r|^-3/2 and |dG/dtau| <= c~ s^-7/4 |r|^-3/2
    first = 6 * alpha * s / ((4 * alpha) ** 2.5 * math.pi ** 1.5 * s ** 3.5) * np.exp(-rho ** 2 / (4 * alpha * s))
    c = np.array([first_part_bound_constant(a) for a in alpha])
    ct = np.array([time_derivative_bound_constant(a) for a in alpha])
    rhs = s ** -1.75 * rho ** -1.5
    # the excess over the bound, relative to the bound (must not be positive)
    record("first_part_bound", np.maximum(first / (c * rhs) - 1.0, 0.0), 1e-12)
    record("time_derivative_bound", np.maximum(np.abs(dGds) / (ct * rhs) - 1.0, 0.0), 1e-12)

    failures = sum(r[4] for r in rows)
    return StudyResult(
        "kernel_properties",
        ["check_id", "check", "max_error", "tolerance", "failures"],
        rows,
        {"n_points": n_points, "seed": seed, "total_failures": failures},
    )
