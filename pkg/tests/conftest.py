import numpy as np
import pytest

from plasmonic_eigs.mesh import InclusionGeometry, MeshParams, build_disk_ellipse_mesh

SMALL = MeshParams(inclusion_rings=2, annulus_rings=3, angular_segments=16)


@pytest.fixture
def small_mesh():
    return build_disk_ellipse_mesh(InclusionGeometry(0.5, 0.25, 0.5), SMALL)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
