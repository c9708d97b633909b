import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdg_ibm.errors import InvalidParameter, PointOutsideDomain
from sdg_ibm.mesh import (CoarseTriangulation, build_mesh, build_unit_square_mesh,
                          staggered_subdivide)


def brute_locate(mesh, x, tol=1e-12):
    """Smallest element whose closure contains x, by scanning all elements."""
    for el in range(mesh.n_elements):
        P = mesh.points[mesh.elements[el]]
        T = np.column_stack([P[1] - P[0], P[2] - P[0]])
        l12 = np.linalg.solve(T, x - P[0])
        lam = np.array([1 - l12.sum(), *l12])
        if np.all(lam >= -tol):
            return el
    return None


def segment_hits_triangle(p, q, P, n=4001):
    """Dense sampling oracle for segment / closed triangle intersection."""
    t = np.linspace(0.0, 1.0, n)
    pts = p[None, :] + t[:, None] * (q - p)[None, :]
    T = np.column_stack([P[1] - P[0], P[2] - P[0]])
    l12 = np.linalg.solve(T, (pts - P[0]).T).T
    lam = np.column_stack([1 - l12.sum(axis=1), l12])
    return bool(np.any(np.all(lam >= -1e-9, axis=1)))


@pytest.mark.parametrize("N,nt,nv,ne,nb", [(1, 2, 4, 5, 4), (4, 32, 25, 56, 16), (32, 2048, 1089, 3136, 128)])
def test_coarse_counts(N, nt, nv, ne, nb):
    c = build_unit_square_mesh(N)
    assert (c.n_triangles, c.n_vertices, c.n_edges) == (nt, nv, ne)
    assert int(c.edge_boundary.sum()) == nb
    assert c.n_edges == 3 * N * N + 2 * N


def test_coarse_edge_incidence():
    c = build_unit_square_mesh(5)
    counts = np.bincount(c.triangle_edges.ravel(), minlength=c.n_edges)
    assert np.all(counts[c.edge_boundary] == 1)
    assert np.all(counts[~c.edge_boundary] == 2)
    assert np.all(c.signed_areas() > 0)


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_invalid_division_count(bad):
    with pytest.raises(InvalidParameter):
        build_unit_square_mesh(bad)


def test_subdivision_counts_n1_and_n4():
    m1 = build_mesh(1)
    assert (m1.n_elements, m1.n_macros, len(m1.F_p)) == (6, 2, 6)
    m4 = build_mesh(4)
    assert (m4.n_elements, len(m4.F_p), len(m4.F_u0)) == (96, 96, 40)


def test_sub_triangle_structure(mesh4):
    m = mesh4
    # one F_u and two F_p edges per element
    fp = m.is_fp[m.element_edges]
    assert np.all(fp.sum(axis=1) == 2)
    assert np.all(m.areas > 0)
    assert abs(m.areas.sum() - 1.0) <= 1e-14
    coarse_area = m.coarse.signed_areas()
    sub = m.areas.reshape(-1, 3)
    assert np.allclose(sub, coarse_area[:, None] / 3.0, atol=1e-15)
    # centroids strictly inside their coarse triangle
    P = m.coarse.vertices[m.coarse.triangles]
    assert np.allclose(m.points[m.centroid_ids], P.mean(axis=1))


def test_normals_conventions(mesh4):
    m = mesh4
    assert np.allclose(np.hypot(*m.normals.T), 1.0)
    mid = m.points[m.edges].mean(axis=1)
    b = m.is_boundary
    centre = np.array([0.5, 0.5])
    assert np.all(np.einsum("ed,ed->e", m.normals[b], mid[b] - centre) > 0)
    # normals point out of the lower-indexed element
    for e in np.flatnonzero(~b):
        lo, hi = m.edge_elements[e]
        assert lo < hi
        c_lo = m.points[m.elements[lo]].mean(axis=0)
        assert np.dot(m.normals[e], mid[e] - c_lo) > 0


def test_continuous_function_has_zero_jump(mesh4):
    m = mesh4
    f = lambda x: np.sin(x[..., 0]) + x[..., 1] ** 2
    for e in np.flatnonzero(~m.is_boundary):
        lo, hi = m.edge_elements[e]
        p = m.points[m.edges[e]]
        s = np.linspace(0, 1, 5)[:, None]
        x = p[0] + s * (p[1] - p[0])
        # traces evaluated by each side's barycentric interpolation of f
        v_lo = m.barycentric(np.full(5, lo), x) @ f(m.points[m.elements[lo]])
        v_hi = m.barycentric(np.full(5, hi), x) @ f(m.points[m.elements[hi]])
        assert np.max(np.abs(v_lo - v_hi)) <= 1e-12


def test_locate_point_examples():
    m1 = build_mesh(1)
    nu = m1.points[m1.centroid_ids[0]]
    assert m1.locate_point(nu) == 0
    m4 = build_mesh(4)
    x = np.array([0.1, 0.2])
    assert m4.locate_point(x) == brute_locate(m4, x)
    with pytest.raises(PointOutsideDomain):
        m4.locate_point([1.5, 0.5])


def test_locate_random_points_match_scan(rng):
    m = build_mesh(4)
    pts = rng.random((1000, 2))
    got = np.array([m.locate_point(x) for x in pts])
    want = np.array([brute_locate(m, x) for x in pts])
    assert np.array_equal(got, want)
    unaccelerated = np.array([m.locate_point(x, accelerate=False) for x in pts[:100]])
    assert np.array_equal(unaccelerated, want[:100])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4))
def test_vertex_tie_break(i, j):
    m = build_mesh(4)
    x = np.array([i / 4.0, j / 4.0])
    assert m.locate_point(x) == brute_locate(m, x)


def test_trace_segment_examples():
    m = build_mesh(4)
    p = np.array([0.1, 0.1])
    assert [el for el, _ in m.trace_segment(p, p)] == [m.locate_point(p)]
    assert m.trace_segment(p, p)[0][1] == []
    r = np.array([0.13, 0.03])
    assert [el for el, _ in m.trace_segment(r, r + 1e-4)] == [m.locate_point(r)]
    # sliding along a shared diagonal touches both neighbours
    assert [el for el, _ in m.trace_segment(p, p + 1e-4)] == [2, 3]
    a, b = np.array([0.1, 0.1]), np.array([0.4, 0.1])
    got = {el for el, _ in m.trace_segment(a, b)}
    want = {el for el in range(m.n_elements) if segment_hits_triangle(a, b, m.points[m.elements[el]])}
    assert got == want
    with pytest.raises(PointOutsideDomain):
        m.trace_segment(a, [1.2, 0.3])


def test_trace_segment_random(rng):
    m = build_mesh(4)
    for _ in range(15):
        a, b = rng.random(2), rng.random(2)
        b = a + 0.3 * (b - a)
        got = [el for el, _ in m.trace_segment(a, b)]
        want = {el for el in range(m.n_elements) if segment_hits_triangle(a, b, m.points[m.elements[el]])}
        assert set(got) == want
        assert len(got) == len(set(got))


def test_patch_and_macro(mesh4):
    m = mesh4
    assert list(m.macro(3)) == [9, 10, 11]
    for e in range(m.coarse.n_edges):
        els = m.patch(e)
        assert len(els) == (1 if m.coarse.edge_boundary[e] else 2)


def test_min_angle_and_dump(tmp_path, mesh4):
    assert 0 < mesh4.min_angle() < np.pi / 3
    path = tmp_path / "mesh.txt"
    mesh4.write(path)
    text = path.read_text()
    assert text.startswith("#")
    assert len(text.splitlines()) > mesh4.n_elements


def test_mesh_is_immutable(mesh4):
    with pytest.raises(ValueError):
        mesh4.points[0, 0] = 3.0


def test_general_coarse_input():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]])
    m = staggered_subdivide(CoarseTriangulation(verts, np.array([[0, 1, 2]])))
    assert m.n_elements == 3
    assert np.all(m.is_boundary[m.F_u])
