import numpy as np
import pytest

from plasmonic_eigs.mesh import (MINUS, PLUS, InclusionGeometry, Marker, MeshError, MeshParams,
                                 build_disk_ellipse_mesh, mesh_quality, read_mesh, uniform_refine,
                                 write_mesh)

from conftest import SMALL


@pytest.mark.parametrize("geom", [InclusionGeometry(0.5, 0.25, 0.5), InclusionGeometry(0.25, 0.25, 0.05),
                                  InclusionGeometry(0.5, 0.25, 0.05)])
def test_invariants_and_quality(geom):
    mesh = build_disk_ellipse_mesh(geom, MeshParams())
    mesh.validate()
    q = mesh_quality(mesh)
    assert q.min_angle_deg >= 15.0
    assert q.n_minus > 0 and q.n_plus > 0
    assert np.all(mesh.signed_areas() > 0)
    # interface nodes sit on the ellipse, boundary nodes on the unit circle
    x, y = mesh.nodes[mesh.interface_nodes].T
    assert np.allclose(geom.level(x, y), 1.0, atol=1e-12)
    assert np.allclose(np.hypot(*mesh.nodes[mesh.boundary_nodes].T), 1.0, atol=1e-12)


def test_inclusion_area_converges():
    geom = InclusionGeometry(0.5, 0.25, 0.5)
    mesh = build_disk_ellipse_mesh(geom, SMALL)
    exact = np.pi * 0.25 * 0.125
    errs = []
    for _ in range(3):
        inc = mesh.signed_areas()[mesh.regions == MINUS].sum()
        errs.append(abs(inc - exact))
        mesh = uniform_refine(mesh, geom)
        mesh.validate()
    # polygonal approximation of a smooth curve: error ~ h^2
    assert errs[1] / errs[2] > 3.0


def test_inclusion_triangle_count_independent_of_delta():
    counts = {int(np.sum(build_disk_ellipse_mesh(InclusionGeometry(0.5, 0.25, d), SMALL).regions == MINUS))
              for d in (0.5, 0.25, 0.05)}
    assert len(counts) == 1


def test_refine_quadruples_and_keeps_markers():
    geom = InclusionGeometry(0.5, 0.25, 0.5)
    m0 = build_disk_ellipse_mesh(geom, SMALL)
    m1 = uniform_refine(m0, geom)
    assert m1.n_triangles == 4 * m0.n_triangles
    assert m1.n_nodes == m0.n_nodes + len(m0.edges()[0])
    assert np.isclose(m1.area(), np.pi, rtol=1e-2)
    assert len(m1.boundary_nodes) == 2 * len(m0.boundary_nodes)


def test_write_read_roundtrip(tmp_path, small_mesh):
    p = tmp_path / "m.txt"
    write_mesh(small_mesh, p)
    back = read_mesh(p, small_mesh.geometry)
    np.testing.assert_array_equal(back.triangles, small_mesh.triangles)
    np.testing.assert_array_equal(back.regions, small_mesh.regions)
    np.testing.assert_array_equal(back.markers, small_mesh.markers)
    np.testing.assert_array_equal(back.nodes, small_mesh.nodes)


def test_deterministic(small_mesh):
    again = build_disk_ellipse_mesh(InclusionGeometry(0.5, 0.25, 0.5), SMALL)
    np.testing.assert_array_equal(again.nodes, small_mesh.nodes)
    np.testing.assert_array_equal(again.triangles, small_mesh.triangles)


@pytest.mark.parametrize("kw", [dict(a=-1, b=0.25, delta=0.5), dict(a=0.5, b=0.25, delta=0.0),
                                dict(a=0.5, b=0.25, delta=1.5), dict(a=2.0, b=0.25, delta=0.6)])
def test_bad_geometry(kw):
    with pytest.raises(MeshError):
        InclusionGeometry(**kw)


@pytest.mark.parametrize("kw", [dict(inclusion_rings=0), dict(annulus_rings=1), dict(angular_segments=7),
                                dict(grading_exponent=0.5), dict(max_spacing=1.5)])
def test_bad_params(kw):
    with pytest.raises(MeshError):
        MeshParams(**kw)


def test_validate_catches_flipped_triangle(small_mesh):
    small_mesh.triangles[0] = small_mesh.triangles[0][::-1]
    with pytest.raises(MeshError):
        small_mesh.validate()


def test_project_onto_ellipse():
    g = InclusionGeometry(0.5, 0.25, 0.5)
    x, y = g.project(np.array([0.3, -0.01, 0.0]), np.array([0.2, 0.05, -0.4]))
    assert np.allclose(g.level(x, y), 1.0, atol=1e-12)
    assert Marker.INTERFACE == 2 and PLUS == 0


def test_minimal_params_single_fan():
    geom = InclusionGeometry(0.5, 0.25, 0.5)
    mesh = build_disk_ellipse_mesh(geom, MeshParams(1, 2, 1.0, 8))
    assert np.sum(mesh.regions == MINUS) == 8
    phi = 2 * np.pi * np.arange(8) / 8
    expect = 0.5 * np.column_stack([0.5 * np.cos(phi), 0.25 * np.sin(phi)])
    np.testing.assert_allclose(mesh.nodes[mesh.interface_nodes], expect, atol=1e-15)


def test_equilateral_quality():
    from plasmonic_eigs.mesh import Mesh
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    m = Mesh(nodes, np.array([[0, 1, 2]]), np.array([PLUS]), np.array([Marker.BOUNDARY] * 3))
    assert abs(mesh_quality(m).min_angle_deg - 60.0) < 1e-9
