"""Structured, region-pure triangulations of the unit disk with a centred
elliptical inclusion of semi-axes ``delta*a`` and ``delta*b``.

Layout of a generated mesh:

* a centre node and ``inclusion_rings`` scaled copies of the ellipse, ring
  ``i`` carrying roughly ``angular_segments * i / inclusion_rings`` nodes,
  stitched together by a merge ("zipper") triangulation;
* annulus rings carrying ``angular_segments`` nodes each, whose
  circle-equivalent radii are graded geometrically toward the interface and
  whose shape is blended from the ellipse (at the interface) to the unit circle.

The annulus ring radii are anchored at the outer boundary, so two meshes built
for different ``delta`` share every ring that lies far from the inclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

PLUS = 0
MINUS = 1

ON_CURVE_RTOL = 1e-12
DEGENERATE_AREA = 1e-14
# admissible annulus log-step, in units of the angular step 2*pi/N
STEP_MIN, STEP_MAX = 0.4, 1.5


class Marker(IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    INTERFACE = 2


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class InclusionGeometry:
    a: float
    b: float
    delta: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise MeshError(f"semi-axes must be positive, got a={self.a}, b={self.b}")
        if not (0 < self.delta <= 1):
            raise MeshError(f"delta must lie in (0, 1], got {self.delta}")
        if self.delta * max(self.a, self.b) >= 1:
            raise MeshError("inclusion must lie strictly inside the unit disk "
                            f"(delta*max(a,b) = {self.delta * max(self.a, self.b)})")

    @property
    def radius(self) -> float:
        """Largest radius of the scaled inclusion."""
        return self.delta * max(self.a, self.b)

    @property
    def is_circle(self) -> bool:
        return self.a == self.b

    def level(self, x, y):
        """Ellipse level function: < 1 inside the inclusion, 1 on its boundary."""
        return (x / (self.delta * self.a)) ** 2 + (y / (self.delta * self.b)) ** 2

    def project(self, x, y):
        """Nearest point on the scaled ellipse (vectorised Newton on the parametric angle)."""
        A, B = self.delta * self.a, self.delta * self.b
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if A == B:
            r = np.hypot(x, y)
            return A * x / r, A * y / r
        t = np.arctan2(A * y, B * x)
        for _ in range(50):
            c, s = np.cos(t), np.sin(t)
            # d/dt of half squared distance, and its derivative
            g = (A * c - x) * (-A * s) + (B * s - y) * (B * c)
            dg = (A * A * s * s + B * B * c * c) + (A * c - x) * (-A * c) + (B * s - y) * (-B * s)
            step = g / dg
            t = t - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return A * np.cos(t), B * np.sin(t)


@dataclass(frozen=True)
class MeshParams:
    inclusion_rings: int = 4
    annulus_rings: int = 8
    grading_exponent: float = 1.0
    angular_segments: int = 32
    max_spacing: float | None = None   # bulk edge length cap (None: pure log-polar annulus)

    def __post_init__(self):
        if self.inclusion_rings < 1:
            raise MeshError("inclusion_rings must be >= 1")
        if self.annulus_rings < 2:
            raise MeshError("annulus_rings must be >= 2")
        if self.grading_exponent < 1:
            raise MeshError("grading_exponent must be >= 1")
        if self.angular_segments < 8 or self.angular_segments % 2:
            raise MeshError("angular_segments must be even and >= 8")
        if self.max_spacing is not None and not (0 < self.max_spacing < 1):
            raise MeshError("max_spacing must lie in (0, 1)")


@dataclass
class Mesh:
    nodes: np.ndarray            # (N, 2) float
    triangles: np.ndarray        # (T, 3) int, counter-clockwise
    regions: np.ndarray          # (T,) int, PLUS or MINUS
    markers: np.ndarray          # (N,) int, Marker values
    geometry: InclusionGeometry | None = None
    _edges: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.markers == Marker.BOUNDARY)

    @property
    def interface_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.markers == Marker.INTERFACE)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self):
        """Unique edges (E, 2) and, per triangle, the indices of its three edges
        (edge ``k`` of a triangle is opposite to its vertex ``k``)."""
        if self._edges is None:
            t = self.triangles
            local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
            local = np.sort(local, axis=1)
            uniq, inverse = np.unique(local, axis=0, return_inverse=True)
            self._edges = (uniq, inverse.reshape(-1, 3))
        return self._edges

    def edge_valence(self) -> np.ndarray:
        edges, tri_edges = self.edges()
        return np.bincount(tri_edges.ravel(), minlength=len(edges))

    def validate(self) -> None:
        """Raise MeshError if any structural invariant is violated."""
        areas = self.signed_areas()
        lengths = self.edge_lengths()
        h2 = float(lengths.max()) ** 2
        bad = np.flatnonzero(areas <= DEGENERATE_AREA * h2)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} is degenerate or clockwise (area {areas[bad[0]]:.3e})")
        edges, _ = self.edges()
        val = self.edge_valence()
        if np.any(val > 2) or np.any(val < 1):
            raise MeshError("non-conforming edge incidence")
        # boundary edges (valence 1) must join boundary nodes
        bedges = edges[val == 1]
        if np.any(self.markers[bedges] != Marker.BOUNDARY):
            raise MeshError("valence-1 edge with a non-boundary endpoint")
        rb = np.hypot(*self.nodes[self.boundary_nodes].T)
        if np.any(np.abs(rb - 1) > ON_CURVE_RTOL):
            raise MeshError("boundary node off the unit circle")
        if self.geometry is not None:
            g = self.geometry
            xi, yi = self.nodes[self.interface_nodes].T
            if np.any(np.abs(g.level(xi, yi) - 1) > 10 * ON_CURVE_RTOL):
                raise MeshError("interface node off the ellipse")
            # region purity: all vertices of a triangle on the side of its tag
            lv = g.level(*self.nodes.T)
            on = self.markers == Marker.INTERFACE
            inside = (lv < 1) | on
            outside = (lv > 1) | on
            tri_in = np.all(inside[self.triangles], axis=1)
            tri_out = np.all(outside[self.triangles], axis=1)
            if np.any((self.regions == MINUS) & ~tri_in) or np.any((self.regions == PLUS) & ~tri_out):
                raise MeshError("triangle straddles the interface")
            c = self.nodes[self.triangles].mean(axis=1)
            if np.any((g.level(c[:, 0], c[:, 1]) < 1) != (self.regions == MINUS)):
                raise MeshError("centroid indicator disagrees with region tag")

    def edge_lengths(self) -> np.ndarray:
        edges, _ = self.edges()
        d = self.nodes[edges[:, 0]] - self.nodes[edges[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def area(self) -> float:
        return float(self.signed_areas().sum())


@dataclass(frozen=True)
class QualityReport:
    h_max: float
    h_min: float
    min_angle_deg: float
    n_plus: int
    n_minus: int


def mesh_quality(mesh: Mesh) -> QualityReport:
    lengths = mesh.edge_lengths()
    p = mesh.nodes[mesh.triangles]
    angles = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return QualityReport(
        h_max=float(lengths.max()),
        h_min=float(lengths.min()),
        min_angle_deg=float(np.min(angles)),
        n_plus=int(np.sum(mesh.regions == PLUS)),
        n_minus=int(np.sum(mesh.regions == MINUS)),
    )


def _zipper(inner: np.ndarray, inner_ang: np.ndarray, outer: np.ndarray, outer_ang: np.ndarray) -> list:
    """Triangulate the band between two closed rings of node indices whose
    angular positions increase from 0 over [0, 2*pi)."""
    ni, no = len(inner), len(outer)
    ia = np.append(inner_ang, 2 * math.pi)
    oa = np.append(outer_ang, 2 * math.pi)
    i = j = 0
    tris = []
    while i < ni or j < no:
        advance_outer = j < no and (i >= ni or oa[j + 1] <= ia[i + 1])
        if advance_outer:
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def _graded_radii(geom: InclusionGeometry, params: MeshParams) -> np.ndarray:
    """Graded ring radii from the interface (first) to the boundary (last).

    The log-radius interval ``[log(rho), 0]`` is split into ``n`` layers with
    ``n = round(J * (t / log 2) ** p)``, ``J = annulus_rings`` (rings per halving
    of the radius), ``t = log(1 / rho)`` and ``p`` the grading exponent:
    uniform (geometric radii) for ``p == 1``, clustered toward the interface
    for ``p > 1``.  The layer count is then clamped so that every log-step lies
    within ``[STEP_MIN, STEP_MAX] * 2 pi / N``, which keeps the near-conformal
    annulus cells above the angle floor; when no count fits, ``p`` is lowered
    toward 1 until one does.
    """
    J = params.annulus_rings
    t_int = math.log(1 / geom.radius)
    lo, hi = STEP_MIN * 2 * math.pi / params.angular_segments, STEP_MAX * 2 * math.pi / params.angular_segments

    def layers(p):
        def steps(n):
            return np.diff(t_int * (np.arange(n + 1) / n) ** (1 / p))
        n = max(2, int(round(J * (t_int / math.log(2.0)) ** p)))
        while n > 2 and steps(n).min() < lo:
            n -= 1
        while steps(n).max() > hi:
            n += 1
        return n, steps(n).min() >= lo or n == 2

    # strongest clustering up to the requested exponent that fits the step band
    p = params.grading_exponent
    n, fits = layers(p)
    while not fits and p > 1:
        p = max(1.0, p - 0.05)
        n, fits = layers(p)
    t = t_int * (np.arange(n + 1) / n) ** (1 / p)
    r = np.exp(-t[::-1])
    r[0], r[-1] = geom.radius, 1.0
    return r


def _annulus_rings(geom: InclusionGeometry, params: MeshParams):
    """Ring radii and node counts, interface ring first.

    Without ``max_spacing`` every ring has ``N`` nodes on the graded radii.
    With it, the bulk is refined toward edge length ``h``: ring counts grow
    toward ``2 * ceil(pi * r / h)`` (at most doubling per ring) and radial steps
    are cut to ``max(h, arc)``, ``arc`` being the current angular spacing, so
    cells stay roughly isotropic while the count catches up.
    """
    N, h = params.angular_segments, params.max_spacing
    graded = _graded_radii(geom, params)
    if h is None:
        return graded, [N] * len(graded)
    radii, counts = [graded[0]], [N]
    for g in graded[1:]:
        while radii[-1] < g * (1 - 1e-12):
            r, n = radii[-1], counts[-1]
            arc = 2 * math.pi * r / n
            step = max(h, arc)
            left = g - r
            # equal pieces for the rest of this graded gap when they fit
            k = math.ceil(left / step - 1e-9)
            r_new = g if k <= 1 else r + left / k
            radii.append(r_new)
            counts.append(max(N, min(2 * n, 2 * math.ceil(math.pi * r_new / h))))
    return np.array(radii), counts


def _confocal_ring(geom: InclusionGeometry, r: float, phi: np.ndarray) -> np.ndarray:
    """Ellipse confocal with the interface, elliptic radius offset by ``log(r / rho)``.

    Elliptic coordinates are conformal, so equal steps in offset and in ``phi``
    give cells of fixed aspect ratio all around the inclusion.
    """
    A, B = geom.delta * geom.a, geom.delta * geom.b
    if A == B:
        return r * np.column_stack([np.cos(phi), np.sin(phi)])
    big, small = max(A, B), min(A, B)
    c = math.sqrt(big * big - small * small)
    mu = math.atanh(small / big) + math.log(r / geom.radius)
    u, v = c * math.cosh(mu), c * math.sinh(mu)
    if A < B:
        u, v = v, u
    return np.column_stack([u * np.cos(phi), v * np.sin(phi)])


def _inclusion_rings(params: MeshParams) -> int:
    """Requested inclusion ring count clamped to ``[N / 8, N / 4]``: at most 8
    nodes on the first ring (wider fans give thin triangles near the tips) and
    bands no thinner than about a quarter of the angular resolution."""
    N = params.angular_segments
    return min(max(params.inclusion_rings, math.ceil(N / 8)), N // 4)


def build_disk_ellipse_mesh(geom: InclusionGeometry, params: MeshParams) -> Mesh:
    N = params.angular_segments
    I = _inclusion_rings(params)
    A, B = geom.delta * geom.a, geom.delta * geom.b
    rho0 = geom.radius
    nodes = [(0.0, 0.0)]
    markers = [Marker.INTERIOR]
    triangles, regions = [], []

    def add_ring(xy, marker):
        start = len(nodes)
        nodes.extend(map(tuple, xy))
        markers.extend([marker] * len(xy))
        return np.arange(start, start + len(xy))

    # inclusion: central fan plus zipper bands between scaled ellipses
    prev_idx = np.array([0])
    prev_ang = None
    for i in range(1, I + 1):
        n_i = N if i == I else min(N, max(8, int(round(N * i / I))))
        phi = 2 * math.pi * np.arange(n_i) / n_i
        s = i / I
        xy = np.column_stack([s * A * np.cos(phi), s * B * np.sin(phi)])
        if i == I:
            # exact placement on the interface
            xy = np.column_stack([A * np.cos(phi), B * np.sin(phi)])
        idx = add_ring(xy, Marker.INTERFACE if i == I else Marker.INTERIOR)
        if prev_ang is None:
            for k in range(n_i):
                triangles.append((0, idx[k], idx[(k + 1) % n_i]))
        else:
            triangles.extend(_zipper(prev_idx, prev_ang, idx, phi))
        regions.extend([MINUS] * (len(triangles) - len(regions)))
        prev_idx, prev_ang = idx, phi

    # annulus: confocal ellipses near the inclusion blended into circles
    radii, counts = _annulus_rings(geom, params)
    blend_outer = min(1.0, 4 * rho0)
    prev_ang = 2 * math.pi * np.arange(N) / N
    for r, n_r in zip(radii[1:], counts[1:]):
        phi = 2 * math.pi * np.arange(n_r) / n_r
        ell = _confocal_ring(geom, r, phi)
        circ = np.column_stack([np.cos(phi), np.sin(phi)])
        if r >= blend_outer:
            beta = 0.0
        else:
            x = math.log(blend_outer / r) / math.log(blend_outer / rho0)
            beta = x * x * (3 - 2 * x)
        xy = (1 - beta) * r * circ + beta * ell
        last = r == radii[-1]
        if last:
            xy = circ.copy()
        idx = add_ring(xy, Marker.BOUNDARY if last else Marker.INTERIOR)
        if n_r != len(prev_idx):
            triangles.extend(_zipper(prev_idx, prev_ang, idx, phi))
        else:
            for k in range(n_r):
                k1 = (k + 1) % n_r
                a0, a1, b0, b1 = prev_idx[k], prev_idx[k1], idx[k], idx[k1]
                # split the quad along its shorter diagonal (ties: a0-b1)
                d1 = np.subtract(nodes[a0], nodes[b1])
                d2 = np.subtract(nodes[a1], nodes[b0])
                if d1 @ d1 <= d2 @ d2 * (1 + 1e-12):
                    triangles += [(a0, b1, b0), (a0, a1, b1)]
                else:
                    triangles += [(a0, a1, b0), (a1, b1, b0)]
        regions.extend([PLUS] * (len(triangles) - len(regions)))
        prev_idx, prev_ang = idx, phi

    mesh = Mesh(
        nodes=np.array(nodes, dtype=float),
        triangles=np.array(triangles, dtype=np.int64),
        regions=np.array(regions, dtype=np.int8),
        markers=np.array(markers, dtype=np.int8),
        geometry=geom,
    )
    _orient(mesh)
    mesh.validate()
    return mesh


def _orient(mesh: Mesh) -> None:
    neg = mesh.signed_areas() < 0
    if np.any(neg):
        mesh.triangles[neg] = mesh.triangles[neg][:, [0, 2, 1]]
        mesh._edges = None


def uniform_refine(mesh: Mesh, geom: InclusionGeometry | None = None) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    Midpoints of boundary edges are pushed radially onto the unit circle and
    midpoints of interface edges onto the scaled ellipse.
    """
    geom = geom if geom is not None else mesh.geometry
    if geom is None:
        raise MeshError("refinement needs the inclusion geometry")
    edges, tri_edges = mesh.edges()
    n0 = mesh.n_nodes
    mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    m0, m1 = mesh.markers[edges[:, 0]], mesh.markers[edges[:, 1]]
    val = mesh.edge_valence()
    new_markers = np.full(len(edges), Marker.INTERIOR, dtype=np.int8)

    is_bnd = (val == 1)
    r = np.hypot(mid[is_bnd, 0], mid[is_bnd, 1])
    mid[is_bnd] /= r[:, None]
    new_markers[is_bnd] = Marker.BOUNDARY

    # an interface edge joins two interface nodes and separates the two regions
    both_if = (m0 == Marker.INTERFACE) & (m1 == Marker.INTERFACE) & (val == 2)
    if np.any(both_if):
        owner_regions = np.zeros((len(edges), 2), dtype=np.int8) - 1
        flat_e = tri_edges.ravel()
        flat_r = np.repeat(mesh.regions, 3)
        order = np.argsort(flat_e, kind="stable")
        fe, fr = flat_e[order], flat_r[order]
        first = np.r_[True, fe[1:] != fe[:-1]]
        owner_regions[fe[first], 0] = fr[first]
        owner_regions[fe[~first], 1] = fr[~first]
        is_if = both_if & (owner_regions[:, 0] != owner_regions[:, 1])
        px, py = geom.project(mid[is_if, 0], mid[is_if, 1])
        mid[is_if, 0], mid[is_if, 1] = px, py
        new_markers[is_if] = Marker.INTERFACE

    nodes = np.vstack([mesh.nodes, mid])
    markers = np.concatenate([mesh.markers, new_markers])
    t = mesh.triangles
    e = tri_edges + n0  # e[:, k] is the midpoint opposite vertex k
    children = np.concatenate([
        np.column_stack([t[:, 0], e[:, 2], e[:, 1]]),
        np.column_stack([e[:, 2], t[:, 1], e[:, 0]]),
        np.column_stack([e[:, 1], e[:, 0], t[:, 2]]),
        np.column_stack([e[:, 0], e[:, 1], e[:, 2]]),
    ])
    regions = np.tile(mesh.regions, 4)
    # keep children of one parent adjacent
    perm = np.arange(4 * len(t)).reshape(4, -1).T.ravel()
    out = Mesh(nodes=nodes, triangles=children[perm], regions=regions[perm],
               markers=markers, geometry=geom)
    _orient(out)
    out.validate()
    return out


def write_mesh(mesh: Mesh, path) -> None:
    """Plain ASCII export: header, node lines ``x y marker``, triangle lines ``i j k region``."""
    names = {Marker.INTERIOR: "interior", Marker.BOUNDARY: "boundary", Marker.INTERFACE: "interface"}
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    lines += [f"{x!r} {y!r} {names[Marker(m)]}" for (x, y), m in zip(mesh.nodes.tolist(), mesh.markers)]
    lines += [f"{i} {j} {k} {'minus' if r == MINUS else 'plus'}"
              for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, geometry: InclusionGeometry | None = None) -> Mesh:
    codes = {"interior": Marker.INTERIOR, "boundary": Marker.BOUNDARY, "interface": Marker.INTERFACE}
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
            raise MeshError(f"bad mesh header: {' '.join(head)}")
        n, t = int(head[1]), int(head[3])
        nodes = np.empty((n, 2))
        markers = np.empty(n, dtype=np.int8)
        for i in range(n):
            x, y, m = fh.readline().split()
            nodes[i] = float(x), float(y)
            markers[i] = codes[m]
        tris = np.empty((t, 3), dtype=np.int64)
        regions = np.empty(t, dtype=np.int8)
        for i in range(t):
            a, b, c, r = fh.readline().split()
            tris[i] = int(a), int(b), int(c)
            regions[i] = MINUS if r == "minus" else PLUS
    return Mesh(nodes=nodes, triangles=tris, regions=regions, markers=markers, geometry=geometry)
