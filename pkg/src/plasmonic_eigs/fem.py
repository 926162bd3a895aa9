"""P1 Lagrange assembly of the stiffness/mass pencil with a piecewise-constant,
sign-changing coefficient and homogeneous Dirichlet elimination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import MINUS, DEGENERATE_AREA, Mesh


class ExcludedContrastError(ValueError):
    """The contrast sigma_minus/sigma_plus equals -1."""


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialPair:
    sigma_plus: float = 1.0
    sigma_minus: float = -2.5

    def __post_init__(self):
        if not self.sigma_plus > 0:
            raise ValueError(f"sigma_plus must be positive, got {self.sigma_plus}")
        if not self.sigma_minus < 0:
            raise ValueError(f"sigma_minus must be negative, got {self.sigma_minus}")
        if self.sigma_minus == -self.sigma_plus:
            raise ExcludedContrastError("contrast kappa = -1 is excluded")

    @property
    def kappa(self) -> float:
        return self.sigma_minus / self.sigma_plus

    def scaled(self, alpha: float) -> "MaterialPair":
        return MaterialPair(alpha * self.sigma_plus, alpha * self.sigma_minus)


@dataclass(frozen=True)
class DofMap:
    node_to_dof: np.ndarray   # -1 on Dirichlet nodes
    dof_to_node: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DofMap":
        free = np.ones(mesh.n_nodes, dtype=bool)
        free[mesh.boundary_nodes] = False
        dof_to_node = np.flatnonzero(free)
        node_to_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
        node_to_dof[dof_to_node] = np.arange(len(dof_to_node))
        return cls(node_to_dof, dof_to_node)

    @property
    def n_dof(self) -> int:
        return len(self.dof_to_node)

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Nodal vector from dof values (zero on Dirichlet nodes)."""
        out = np.zeros(len(self.node_to_dof), dtype=np.result_type(values, float))
        out[self.dof_to_node] = values
        return out


class SparseSym:
    """Symmetric sparse matrix stored as its upper triangle in CSR."""

    def __init__(self, upper: sp.csr_matrix):
        upper = sp.csr_matrix(upper)
        upper.eliminate_zeros()
        upper.sort_indices()
        self.upper = upper
        self._full = None

    @classmethod
    def from_full(cls, A) -> "SparseSym":
        return cls(sp.triu(sp.csr_matrix(A), format="csr"))

    @property
    def n(self) -> int:
        return self.upper.shape[0]

    @property
    def shape(self):
        return self.upper.shape

    def full(self) -> sp.csr_matrix:
        if self._full is None:
            U = self.upper
            strict = sp.triu(U, k=1)
            self._full = (U + strict.T).tocsr()
            self._full.sort_indices()
        return self._full

    def __matmul__(self, x):
        return self.full() @ x

    def diagonal(self) -> np.ndarray:
        return self.upper.diagonal()

    def toarray(self) -> np.ndarray:
        return self.full().toarray()


@dataclass
class AssembledPencil:
    K: SparseSym
    M: SparseSym
    dofmap: DofMap

    @property
    def n(self) -> int:
        return self.K.n


def local_matrices(p: np.ndarray):
    """Closed-form P1 stiffness (unit coefficient) and mass matrices.

    ``p`` has shape (T, 3, 2); returns areas (T,), stiffness (T, 3, 3) and
    mass (T, 3, 3).
    """
    # edge vectors opposite each vertex; grad(phi_k) = rot(e_k) / (2*area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):  # degenerate cells are rejected by callers
        stiff = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    mass = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    return area, stiff, mass


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return A.tocsr()  # duplicates summed in a fixed (row, col) order


def assemble_full(mesh: Mesh, mat: MaterialPair | None):
    """Stiffness and mass over all nodes (no Dirichlet elimination).

    ``mat=None`` gives the unit-coefficient stiffness.
    """
    area, stiff, mass = local_matrices(mesh.nodes[mesh.triangles])
    h2 = float(mesh.edge_lengths().max()) ** 2
    bad = np.flatnonzero(area <= DEGENERATE_AREA * h2)
    if bad.size:
        raise AssemblyError(f"degenerate triangle {bad[0]} (area {area[bad[0]]:.3e})")
    if mat is not None:
        sigma = np.where(mesh.regions == MINUS, mat.sigma_minus, mat.sigma_plus)
        stiff = stiff * sigma[:, None, None]
    return _scatter(mesh, stiff), _scatter(mesh, mass)


def assemble(mesh: Mesh, mat: MaterialPair) -> AssembledPencil:
    K, M = assemble_full(mesh, mat)
    dm = DofMap.from_mesh(mesh)
    idx = dm.dof_to_node
    K = K[idx][:, idx]
    M = M[idx][:, idx]
    return AssembledPencil(SparseSym.from_full(K), SparseSym.from_full(M), dm)


def unit_stiffness(mesh: Mesh, dofmap: DofMap | None = None) -> sp.csr_matrix:
    """Unit-coefficient stiffness restricted to the free dofs (H1-seminorm Gram matrix)."""
    K, _ = assemble_full(mesh, None)
    dofmap = dofmap or DofMap.from_mesh(mesh)
    idx = dofmap.dof_to_node
    return K[idx][:, idx].tocsr()


def rayleigh(pencil: AssembledPencil, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (pencil.n,):
        raise ValueError(f"vector has shape {v.shape}, pencil dimension is {pencil.n}")
    den = v @ (pencil.M @ v)
    if den == 0:
        raise ValueError("zero vector")
    return float(v @ (pencil.K @ v) / den)


def load_vector(mesh: Mesh, f, dofmap: DofMap | None = None) -> np.ndarray:
    """Consistent load M @ f_nodal for a source given as callable f(x, y) or constant."""
    _, M = assemble_full(mesh, None)
    x, y = mesh.nodes.T
    fn = f(x, y) if callable(f) else np.full(mesh.n_nodes, float(f))
    b = M @ fn
    dofmap = dofmap or DofMap.from_mesh(mesh)
    return b[dofmap.dof_to_node]


def write_matrix_market(A: SparseSym, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), A.full(), comment=comment, symmetry="symmetric")
