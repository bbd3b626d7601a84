import numpy as np
import pytest

from heatbem.errors import (
    DegenerateTriangleError,
    InvalidArgumentError,
    OpenSurfaceError,
    OrientationError,
    ParseError,
)
from heatbem.geometry import (
    SurfaceMesh,
    generate_cube_mesh,
    generate_icosphere,
    load_mesh,
    make_time_partition,
    p1_surface_gradient_and_curl,
    refine_uniform,
    save_mesh,
)

CUBE_FILE = """\
# unit cube, 8 vertices, 12 triangles
8 12
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
0 2 1
0 3 2
4 5 6
4 6 7
0 1 5
0 5 4
1 2 6
1 6 5
2 3 7
2 7 6
3 0 4
3 4 7
"""


@pytest.fixture
def cube_file(tmp_path):
    p = tmp_path / "cube.txt"
    p.write_text(CUBE_FILE)
    return p


def test_load_cube(cube_file):
    mesh = load_mesh(cube_file)
    assert mesh.n_triangles == 12
    assert mesh.total_area == pytest.approx(6.0, abs=1e-12)
    assert mesh.signed_volume() == pytest.approx(1.0)
    assert mesh.euler_characteristic() == 2


def test_flipped_triangle_is_orientation_error(tmp_path):
    text = CUBE_FILE.replace("4 5 6\n", "4 6 5\n")
    p = tmp_path / "flip.txt"
    p.write_text(text)
    with pytest.raises(OrientationError, match="line"):
        load_mesh(p)


def test_all_flipped_is_orientation_error():
    m = generate_cube_mesh(1)
    with pytest.raises(OrientationError):
        SurfaceMesh(m.vertices, m.triangles[:, ::-1])


def test_repeated_index_is_degenerate(tmp_path):
    text = CUBE_FILE.replace("4 5 6\n", "4 4 6\n")
    p = tmp_path / "degen.txt"
    p.write_text(text)
    with pytest.raises(DegenerateTriangleError, match="line 13"):
        load_mesh(p)


def test_open_surface_rejected():
    m = generate_cube_mesh(1)
    with pytest.raises(OpenSurfaceError):
        SurfaceMesh(m.vertices, m.triangles[:-1])


@pytest.mark.parametrize("text", ["8\n", "8 12\n0 0\n", "x y\n"])
def test_parse_errors(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_mesh(p)


def test_roundtrip(tmp_path):
    m = generate_cube_mesh(2)
    save_mesh(m, tmp_path / "m.txt")
    m2 = load_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(m.vertices, m2.vertices)
    np.testing.assert_array_equal(m.triangles, m2.triangles)


@pytest.mark.parametrize("n,side,nt,area", [(1, 1.0, 12, 6.0), (2, 1.0, 48, 6.0), (3, 2.0, 108, 24.0)])
def test_cube_generator(n, side, nt, area):
    m = generate_cube_mesh(n, side)
    assert m.n_triangles == nt
    assert m.total_area == pytest.approx(area, rel=1e-14)
    assert m.euler_characteristic() == 2
    assert m.signed_volume() == pytest.approx(side ** 3, rel=1e-13)


def test_cube_generator_rejects_zero():
    with pytest.raises(InvalidArgumentError):
        generate_cube_mesh(0)


def test_refine_uniform():
    m = generate_cube_mesh(1)
    r = refine_uniform(m)
    assert r.n_triangles == 48
    assert r.total_area == pytest.approx(m.total_area, abs=1e-12)
    # construction re-validates orientation and closedness
    assert r.euler_characteristic() == 2


def test_icosphere():
    s = generate_icosphere(2)
    assert s.n_triangles == 320
    assert s.euler_characteristic() == 2
    assert s.total_area == pytest.approx(4 * np.pi, rel=0.03)


def test_reference_triangle_curls():
    # a closed mesh containing the reference triangle (0,0,0),(1,0,0),(0,1,0) with normal +z
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, -1.0]])
    t = np.array([[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]])
    m = SurfaceMesh(v, t)
    np.testing.assert_allclose(m.normals[0], [0, 0, 1])
    g, c = p1_surface_gradient_and_curl(m, 0, 0)
    np.testing.assert_allclose(g, [-1, -1, 0], atol=1e-15)
    np.testing.assert_allclose(c, [-1, 1, 0], atol=1e-15)
    g, c = p1_surface_gradient_and_curl(m, 0, 1)
    np.testing.assert_allclose(g, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(c, [0, -1, 0], atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        p1_surface_gradient_and_curl(m, 7, 0)


def test_curl_properties_on_icosphere():
    m = generate_icosphere(1)
    grads, curls = m.p1_gradients(), m.p1_curls()
    n = m.normals[:, None, :]
    assert np.abs(np.sum(grads * n, axis=2)).max() < 1e-12
    assert np.abs(np.sum(curls * n, axis=2)).max() < 1e-12
    assert np.abs(grads.sum(axis=1)).max() < 1e-12
    assert np.abs(curls.sum(axis=1)).max() < 1e-12
    for tri in (0, 17, 79):
        for a in range(3):
            g, c = p1_surface_gradient_and_curl(m, tri, a)
            np.testing.assert_allclose(g, grads[tri, a], atol=1e-13)
            np.testing.assert_allclose(c, curls[tri, a], atol=1e-13)


def test_gradient_reproduces_linear_function():
    m = generate_icosphere(1)
    f = m.vertices @ np.array([0.3, -1.2, 0.7])
    p = m.vertices[m.triangles]
    grad = np.einsum("ta,tak->tk", f[m.triangles], m.p1_gradients())
    # directional derivative along each edge equals the difference of nodal values
    e = p[:, 1] - p[:, 0]
    np.testing.assert_allclose(np.einsum("tk,tk->t", grad, e), f[m.triangles[:, 1]] - f[m.triangles[:, 0]], atol=1e-12)


def test_time_partitions():
    p = make_time_partition(1.0, 4)
    np.testing.assert_array_equal(p.breakpoints, [0, 0.25, 0.5, 0.75, 1.0])
    assert p.uniform
    g = make_time_partition(1.0, 2, "graded", 2.0)
    np.testing.assert_allclose(g.breakpoints, [0, 0.25, 1.0])
    assert not g.uniform
    with pytest.raises(InvalidArgumentError):
        make_time_partition(1.0, 0)
    with pytest.raises(InvalidArgumentError):
        make_time_partition(-1.0, 3)


def test_point_queries():
    m = generate_cube_mesh(2)
    inside = m.contains([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [0.1, 0.9, 0.2]])
    assert inside.tolist() == [True, False, True]
    np.testing.assert_allclose(m.distance_to_surface([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5]]), [0.5, 0.5])
