"""Property-based checks on randomly drawn geometries and matrices."""

import numpy as np
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from plasmonic_eigs.contrast import critical_contrasts
from plasmonic_eigs.fem import assemble_full, local_matrices
from plasmonic_eigs.ldlt import factorize_matrix
from plasmonic_eigs.mesh import MINUS, InclusionGeometry, MeshParams, build_disk_ellipse_mesh, mesh_quality


@st.composite
def geometries(draw):
    b = draw(st.floats(0.1, 0.5))
    a = b * draw(st.floats(0.5, 2.0))
    radius = draw(st.floats(0.01, 0.5))
    return InclusionGeometry(a, b, min(1.0, radius / max(a, b)))


@st.composite
def mesh_params(draw):
    n = 2 * draw(st.integers(4, 40))
    rings = draw(st.integers(max(1, -(-n // 8)), max(1, n // 4)))
    spacing = draw(st.one_of(st.none(), st.floats(0.03, 0.2)))
    return MeshParams(rings, draw(st.integers(2, 24)), 1.0, n, spacing)


@settings(max_examples=40, deadline=None)
@given(geometries(), mesh_params())
def test_generated_meshes_valid(geom, params):
    mesh = build_disk_ellipse_mesh(geom, params)   # validates all invariants
    assert mesh_quality(mesh).min_angle_deg >= 15.0
    nb = len(mesh.boundary_nodes)   # the domain is the inscribed nb-gon
    assert np.isclose(mesh.area(), 0.5 * nb * np.sin(2 * np.pi / nb), rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.5), st.floats(0.5, 2.0), mesh_params())
def test_inclusion_resolution_independent_of_delta(b, ratio, params):
    a = b * ratio
    counts = set()
    for delta in (0.9, 0.2, 0.03):
        mesh = build_disk_ellipse_mesh(InclusionGeometry(a, b, delta), params)
        counts.add(int(np.sum(mesh.regions == MINUS)))
    assert len(counts) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_local_stiffness_rows_sum_to_zero(seed):
    p = np.random.default_rng(seed).normal(size=(1, 3, 2))
    d1, d2 = p[0, 1] - p[0, 0], p[0, 2] - p[0, 0]
    if d1[0] * d2[1] - d1[1] * d2[0] < 0:
        p = p[:, [0, 2, 1]]   # counter-clockwise, as meshes are stored
    area, K, M = local_matrices(p)
    scale = np.abs(K).max()
    assert np.max(np.abs(K.sum(axis=2))) <= 1e-12 * scale
    assert area[0] > 0 and np.isclose(M.sum(), area[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 60), st.integers(0, 10_000))
def test_ldlt_inertia(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.3, random_state=seed)
    A = (A + A.T + sp.diags(rng.normal(size=n))).tocsr()
    ev = np.linalg.eigvalsh(A.toarray())
    if np.min(np.abs(ev)) < 1e-8:
        return
    fac = factorize_matrix(A)
    assert (fac.inertia.n_neg, fac.inertia.n_pos) == (int(np.sum(ev < 0)), int(np.sum(ev > 0)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_critical_set_in_range(a, b):
    cs = critical_contrasts(a, b, 32)
    assert np.all(cs.eta <= -1.0)
    assert np.all(np.diff(cs.eta) >= 0)   # increasing toward the accumulation point -1


def test_stiffness_zero_row_sums_on_mesh():
    mesh = build_disk_ellipse_mesh(InclusionGeometry(0.5, 0.25, 0.3), MeshParams())
    K, _ = assemble_full(mesh, None)
    assert np.max(np.abs(np.asarray(K.sum(axis=1)))) <= 1e-12
