"""Acceptance suite: one PASS/FAIL line per criterion, printed with the measured value and tolerance.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even without ``-s``).
"""
import time

import numpy as np
import pytest

from heatbem.assembly import SpaceDescriptor, SpatialBasis, assemble_D, assemble_V, assemble_b_matrix
from heatbem.bie_solver import block_forward_solve, manufactured_solution, solve_dirichlet, solve_neumann
from heatbem.experiments import (
    b_consistency_check,
    convergence_study,
    divergence_study,
    kernel_property_suite,
    max_principle_check,
)
from heatbem.geometry import generate_cube_mesh, make_time_partition
from heatbem.kernels import h1
from heatbem.parallel import get_threads, set_threads
from heatbem.quadrature import PairKind, classify_pair, integrate_pair

from oracles import h1_pair, inv_distance_pair


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")
        return ok

    return emit


@pytest.fixture
def single_thread():
    n = get_threads()
    set_threads(1)
    yield
    set_threads(n)


def test_criterion_1_divergence_rate(report, single_thread):
    t0 = time.perf_counter()
    res = divergence_study(generate_cube_mesh(4), 1.0, 1.0)
    elapsed = time.perf_counter() - t0
    slope = res.metadata["slope"]
    ok = abs(slope + 0.5) <= 0.05 and elapsed < 120.0
    assert report(1, "divergence rate of I_eps", ok,
                  f"slope {slope:.4f} (target -0.5 +- 0.05), {elapsed:.1f} s single-threaded (limit 120 s)")


def test_criterion_2_b_form_consistency(report):
    t0 = time.perf_counter()
    res = b_consistency_check(generate_cube_mesh(1), make_time_partition(1.0, 4), 1.0, level=4)
    elapsed = time.perf_counter() - t0
    frob, diag = res.metadata["frobenius_relative"], res.metadata["max_diagonal_block"]
    ok = frob < 1e-6 and diag <= 1e-12 and elapsed < 60.0
    assert report(2, "b-form dual path", ok,
                  f"Frobenius-relative {frob:.2e} (< 1e-6), diagonal blocks {diag:.1e} (<= 1e-12), "
                  f"{elapsed:.1f} s (limit 60 s)")


def test_criterion_3_kernel_suite(report):
    t0 = time.perf_counter()
    res = kernel_property_suite(n_points=10_000, seed=0)
    elapsed = time.perf_counter() - t0
    fails = res.metadata["total_failures"]
    worst = ", ".join(f"{name} {err:.1e}" for _, name, err, _, _ in res.rows)
    ok = fails == 0 and elapsed < 10.0
    assert report(3, "kernel property suite at 10^4 points", ok,
                  f"{fails} failures, {elapsed:.2f} s (limit 10 s); max errors: {worst}")


def _class_pairs(mesh):
    """One pair per adjacency class; coplanar for edge and identical (the hardest cases)."""
    T = mesh.triangles
    found = {}
    for a in range(len(T)):
        for b in range(len(T)):
            adj = classify_pair(T[a], T[b])
            if adj.kind is PairKind.SHARED_EDGE and abs(mesh.normals[a] @ mesh.normals[b]) < 0.5:
                continue
            found.setdefault(adj.kind, (a, b, adj))
    return found


def test_criterion_4_quadrature_oracle(report):
    mesh = generate_cube_mesh(1)
    V_, T = mesh.vertices, mesh.triangles
    s = 0.1
    t0 = time.perf_counter()
    worst = {}
    for kind, (a, b, adj) in _class_pairs(mesh).items():
        ta, tb = V_[T[a]], V_[T[b]]
        inv_ref = inv_distance_pair(ta, tb, tol=1e-9)
        h1_ref = h1_pair(ta, tb, s, inv_distance=inv_ref)
        inv = integrate_pair(lambda x, y: 1.0 / np.linalg.norm(x - y, axis=1), ta, tb, adj, level=3)
        hv = integrate_pair(lambda x, y: h1(np.linalg.norm(x - y, axis=1), s, 1.0), ta, tb, adj, level=3)
        worst[kind.name] = max(abs(inv - inv_ref) / abs(inv_ref), abs(hv - h1_ref) / abs(h1_ref))
    elapsed = time.perf_counter() - t0
    err = max(worst.values())
    ok = len(worst) == 4 and err < 1e-6 and elapsed < 30.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(4, "pair quadrature vs adaptive oracle (1/r and H1)", ok,
                  f"max relative error {err:.1e} (< 1e-6) [{detail}], {elapsed:.1f} s (limit 30 s)")


def test_criterion_5_ibp_decomposition(report):
    alpha = 1.5
    desc = SpaceDescriptor(SpatialBasis.P1, generate_cube_mesh(1), make_time_partition(1.0, 4))
    D, curl, _ = assemble_D(desc, alpha, return_parts=True)
    b = assemble_b_matrix(desc, alpha)
    ref = curl.combine(b, alpha ** 2, alpha)
    dec = float(np.max(np.abs(D.blocks - ref.blocks)) / np.max(np.abs(D.blocks)))
    const = float(np.max(np.abs(curl @ np.ones(curl.shape[1]))) / np.max(np.abs(curl.blocks)))
    ok = dec <= 1e-12 and const <= 1e-12
    assert report(5, "D = alpha^2 curl term + alpha b; curl term kills constants", ok,
                  f"decomposition {dec:.1e} (<= 1e-12), curl term on constants {const:.1e} (<= 1e-12)")


def test_criterion_6_discrete_ellipticity(report):
    desc = SpaceDescriptor(SpatialBasis.P0, generate_cube_mesh(2), make_time_partition(1.0, 4))
    V = assemble_V(desc, 1.0)
    rng = np.random.default_rng(0)
    forms = np.array([x @ V.matvec(x) for x in rng.normal(size=(100, V.shape[1]))])
    _, stats = block_forward_solve(V, np.ones(V.shape[0]), return_stats=True)
    conds = [np.linalg.cond(V.block(k, k), 1) for k in range(V.n_time)]
    ok = bool(np.all(forms > 0)) and np.all(np.isfinite(stats["rcond"])) and np.all(stats["rcond"] > 0) \
        and np.all(np.isfinite(conds))
    assert report(6, "x^T V x > 0 and finite block conditions", ok,
                  f"min x^T V x {forms.min():.3e} over 100 samples, rcond estimate {stats['rcond'].min():.3e}, "
                  f"max block condition {max(conds):.3e}")


@pytest.mark.parametrize("problem", ["dirichlet", "neumann"])
def test_criterion_7_manufactured_solution(report, problem):
    t0 = time.perf_counter()
    res, reports = convergence_study(problem, levels=3, return_reports=True)
    elapsed = time.perf_counter() - t0
    errors = list(res.column("relative_error"))
    ratios = res.metadata["ratios"]
    ok = res.metadata["strictly_decreasing"] and all(r >= 1.5 for r in ratios) and elapsed < 300.0
    detail = (f"errors {', '.join(f'{e:.3e}' for e in errors)}; ratios {', '.join(f'{r:.2f}' for r in ratios)} "
              f"(>= 1.5), {elapsed:.0f} s (limit 300 s)")
    if problem == "dirichlet":
        mp = max_principle_check(reports[-1], tolerance=0.05)
        ok = ok and not mp.metadata["violation"]
        detail += f"; max |u_h| {mp.metadata['max_abs_u']:.4e} vs sup |g| {mp.metadata['sup_g']:.4e} (5% slack)"
    assert report(7, f"manufactured solution, {problem} chain", ok, detail)


def test_criterion_8_causality(report):
    mesh = generate_cube_mesh(1)
    part = make_time_partition(1.0, 4)
    u, g, h = manufactured_solution((0.5, 0.5, 2.0), 1.0)
    rd = solve_dirichlet(mesh, part, g, 1.0)
    rn = solve_neumann(mesh, part, h, 1.0)
    b = assemble_b_matrix(SpaceDescriptor(SpatialBasis.P1, mesh, part), 1.0, storage="full")
    upper_zero = True
    for A in (rd.matrix, rn.matrix, b, rd.matrix.to_full()):
        m, c = A.rows, A.cols
        dense = A.to_dense()
        for k in range(A.n_time):
            upper_zero &= not np.any(dense[k * m:(k + 1) * m, (k + 1) * c:])
    prefix = True
    for rep in (rd, rn):
        m = rep.matrix.rows
        for n in range(1, part.n_steps + 1):
            xn = block_forward_solve(rep.matrix.truncate(n), rep.rhs[: n * m])
            prefix &= np.array_equal(xn, rep.density.coefficients[: n * m])
    ok = bool(upper_zero and prefix)
    assert report(8, "causality audit", ok,
                  f"upper blocks exactly zero: {bool(upper_zero)}; truncated solves are bitwise prefixes: {bool(prefix)}")
