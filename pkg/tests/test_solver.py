import numpy as np
import pytest

from heatbem.assembly import BlockLowerTriangularMatrix, SpaceDescriptor, SpatialBasis, assemble_D, assemble_V
from heatbem.bie_solver import (
    BoundaryDatum,
    DatumKind,
    block_forward_solve,
    evaluate_solution_interior,
    manufactured_solution,
    project_p0,
    project_p1,
    solve_dirichlet,
    solve_neumann,
    write_interior_csv,
)
from heatbem.errors import DimensionMismatchError, DomainError, InvalidArgumentError, SingularBlockError
from heatbem.geometry import generate_cube_mesh, make_time_partition

CUBE = generate_cube_mesh(1)
PART = make_time_partition(1.0, 4)
SOURCE = (0.5, 0.5, 2.0)


@pytest.fixture(scope="module")
def V():
    return assemble_V(SpaceDescriptor(SpatialBasis.P0, CUBE, PART), 1.0)


@pytest.fixture(scope="module")
def D():
    return assemble_D(SpaceDescriptor(SpatialBasis.P1, CUBE, PART), 1.0)


def _random_causal(n, m, toeplitz, seed=0):
    rng = np.random.default_rng(seed)
    nb = n if toeplitz else n * (n + 1) // 2
    blocks = 0.3 * rng.normal(size=(nb, m, m))
    diag = [0] if toeplitz else [k * (k + 1) // 2 + k for k in range(n)]
    for i in diag:
        blocks[i] += 4.0 * np.eye(m)
    return BlockLowerTriangularMatrix(n, blocks, toeplitz)


# -- forward substitution ---------------------------------------------------------

def test_identity_system():
    A = BlockLowerTriangularMatrix(3, np.stack([np.eye(4), np.zeros((4, 4)), np.zeros((4, 4))]), True)
    b = np.arange(12.0)
    assert np.array_equal(block_forward_solve(A, b), b)


def test_single_step_matches_dense_solve():
    A = _random_causal(1, 6, True, seed=4)
    b = np.random.default_rng(5).normal(size=6)
    assert np.allclose(block_forward_solve(A, b), np.linalg.solve(A.to_dense(), b), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("toeplitz", [True, False])
def test_random_causal_system_residual(toeplitz):
    A = _random_causal(5, 7, toeplitz)
    b = np.random.default_rng(6).normal(size=35)
    x, st = block_forward_solve(A, b, return_stats=True)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)
    assert st["factorizations"] == (1 if toeplitz else 5)
    assert np.all(np.isfinite(st["rcond"])) and np.all(st["rcond"] > 0)


def test_singular_block_reports_index():
    blocks = [k * (k + 1) // 2 + k for k in range(3)]
    A = _random_causal(3, 4, False)
    A.blocks[blocks[1]] = np.ones((4, 4))
    with pytest.raises(SingularBlockError) as exc:
        block_forward_solve(A, np.ones(12))
    assert exc.value.block == 2
    assert "2" in str(exc.value)


def test_nonfinite_block_is_singular():
    A = _random_causal(2, 3, True)
    A.blocks[0, 0, 0] = np.nan
    with pytest.raises(SingularBlockError):
        block_forward_solve(A, np.ones(6))


def test_dimension_mismatch():
    A = _random_causal(3, 4, True)
    with pytest.raises(DimensionMismatchError):
        block_forward_solve(A, np.ones(11))
    with pytest.raises(InvalidArgumentError):
        block_forward_solve(A.to_dense(), np.ones(12))


def test_truncated_solve_is_bitwise_prefix(V):
    rhs = np.random.default_rng(7).normal(size=V.shape[0])
    x = block_forward_solve(V, rhs)
    m = V.rows
    for n in range(1, V.n_time + 1):
        xn = block_forward_solve(V.truncate(n), rhs[: n * m])
        assert np.array_equal(xn, x[: n * m])


# -- data projection ---------------------------------------------------------------

def test_projections_of_constants():
    one_d = BoundaryDatum.constant(1.0, DatumKind.DIRICHLET)
    p0 = project_p0(one_d, CUBE, PART).reshape(4, -1)
    assert np.allclose(p0, CUBE.areas[None, :] * PART.steps[:, None], rtol=1e-14)
    one_n = BoundaryDatum.constant(1.0, DatumKind.NEUMANN)
    p1 = project_p1(one_n, CUBE, PART).reshape(4, -1)
    assert np.allclose(p1.sum(axis=1), CUBE.total_area * PART.steps, rtol=1e-13)


def test_datum_rejects_bad_values():
    bad = BoundaryDatum(lambda x, n, t: np.full(len(x), np.nan), DatumKind.DIRICHLET)
    with pytest.raises(InvalidArgumentError):
        project_p0(bad, CUBE, PART)


def test_manufactured_traces():
    u, g, h = manufactured_solution(SOURCE, 1.0)
    x = np.array([[0.3, 0.2, 1.0], [1.0, 0.4, 0.7]])
    n = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    t = np.array([0.4, 0.9])
    assert np.array_equal(g(x, n, t), u(x, t))
    eps = 1e-5
    fd = (u(x + eps * n, t) - u(x - eps * n, t)) / (2 * eps)
    assert np.allclose(h(x, n, t), fd, rtol=1e-8)
    assert np.all(g(x, n, np.zeros(2)) == 0.0)
    assert np.all(h(x, n, np.zeros(2)) == 0.0)


# -- full solves ----------------------------------------------------------------------

def test_zero_datum_gives_zero_density(V, D):
    zd = BoundaryDatum.constant(0.0, DatumKind.DIRICHLET)
    rep = solve_dirichlet(CUBE, PART, zd, 1.0, matrix=V)
    assert not np.any(rep.density.coefficients)
    zn = BoundaryDatum.constant(0.0, DatumKind.NEUMANN)
    rep = solve_neumann(CUBE, PART, zn, 1.0, matrix=D)
    assert not np.any(rep.density.coefficients)
    u = evaluate_solution_interior(rep, [[0.5, 0.5, 0.5, 0.5], [0.2, 0.2, 0.2, 1.0]])
    assert np.all(u == 0.0)


def _datum(kind, scale, shift):
    def f(x, n, t):
        return scale * t * (x[:, 0] + shift * x[:, 2] ** 2) + 0.1 * t * t * (n[:, 1] + 1.0)

    return BoundaryDatum(f, kind)


def test_dirichlet_linearity(V):
    a, b = _datum(DatumKind.DIRICHLET, 1.0, 0.5), _datum(DatumKind.DIRICHLET, -2.0, 3.0)
    ab = BoundaryDatum(lambda x, n, t: 3.0 * a(x, n, t) + b(x, n, t), DatumKind.DIRICHLET)
    ra, rb, rab = (solve_dirichlet(CUBE, PART, d, 1.0, matrix=V) for d in (a, b, ab))
    lhs = rab.density.coefficients
    rhs = 3.0 * ra.density.coefficients + rb.density.coefficients
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


def test_neumann_linearity(D):
    a, b = _datum(DatumKind.NEUMANN, 1.0, 0.5), _datum(DatumKind.NEUMANN, -2.0, 3.0)
    ab = BoundaryDatum(lambda x, n, t: 3.0 * a(x, n, t) + b(x, n, t), DatumKind.NEUMANN)
    ra, rb, rab = (solve_neumann(CUBE, PART, d, 1.0, matrix=D) for d in (a, b, ab))
    lhs = rab.density.coefficients
    rhs = 3.0 * ra.density.coefficients + rb.density.coefficients
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


def test_solve_report_contents(V):
    _, g, _ = manufactured_solution(SOURCE, 1.0)
    rep = solve_dirichlet(CUBE, PART, g, 1.0, matrix=V)
    assert rep.kind is DatumKind.DIRICHLET
    assert rep.factorizations == 1
    assert np.all(rep.residuals <= 1e-10 * np.maximum(rep.rhs_norms, 1e-300))
    assert np.all(rep.rcond > 0)
    assert rep.wall_time >= 0
    assert np.linalg.norm(V @ rep.density.coefficients - rep.rhs) <= 1e-10 * np.linalg.norm(rep.rhs)


def test_manufactured_dirichlet_is_reasonable(V):
    u, g, _ = manufactured_solution(SOURCE, 1.0)
    rep = solve_dirichlet(CUBE, PART, g, 1.0, matrix=V)
    pts = np.array([[0.5, 0.5, 0.5, 1.0], [0.5, 0.5, 0.6, 0.75]])
    uh = evaluate_solution_interior(rep, pts)
    ex = u(pts[:, :3], pts[:, 3])
    assert np.all(np.abs(uh - ex) < 0.3 * np.abs(ex))


def test_graded_partition_solve():
    part = make_time_partition(1.0, 3, grading="graded")
    _, g, _ = manufactured_solution(SOURCE, 1.0)
    rep = solve_dirichlet(CUBE, part, g, 1.0, level=2)
    assert not rep.matrix.toeplitz
    assert rep.factorizations == 3
    assert np.all(np.isfinite(rep.density.coefficients))


def test_nonzero_initial_trace_warns(V):
    with pytest.warns(RuntimeWarning, match="t = 0"):
        solve_dirichlet(CUBE, PART, BoundaryDatum.constant(1.0, DatumKind.DIRICHLET), 1.0, matrix=V)


def test_wrong_datum_kind(V, D):
    with pytest.raises(InvalidArgumentError):
        solve_dirichlet(CUBE, PART, BoundaryDatum.constant(0.0, DatumKind.NEUMANN), 1.0, matrix=V)
    with pytest.raises(InvalidArgumentError):
        solve_neumann(CUBE, PART, BoundaryDatum.constant(0.0, DatumKind.DIRICHLET), 1.0, matrix=D)


def test_interior_evaluation_rejects_outside_points(V):
    _, g, _ = manufactured_solution(SOURCE, 1.0)
    rep = solve_dirichlet(CUBE, PART, g, 1.0, matrix=V)
    with pytest.raises(DomainError):
        evaluate_solution_interior(rep, [[0.5, 0.5, 1.2, 0.5]])
    with pytest.raises(DimensionMismatchError):
        evaluate_solution_interior(rep, [[0.5, 0.5, 0.5]])
    u = evaluate_solution_interior(rep, [[0.5, 0.5, 0.5], [0.4, 0.4, 0.4]], times=0.5)
    assert u.shape == (2,)


def test_write_interior_csv(tmp_path):
    p = tmp_path / "u.csv"
    write_interior_csv(p, np.array([[0.1, 0.2, 0.3]]), 0.5, np.array([1.0 / 3.0]))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,z,t,u"
    assert float(lines[1].split(",")[-1]) == 1.0 / 3.0
