"""Numerical studies: mesh refinement, delta sweeps, localization and the source problem."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contrast import Verdict, check_admissible
from .fem import DofMap, MaterialPair, assemble, assemble_full, load_vector, unit_stiffness
from .ldlt import SingularPivotError, factorize_matrix
from .mesh import InclusionGeometry, Mesh, MeshParams, build_disk_ellipse_mesh, uniform_refine
from .oracle import expand, farfield_disk_eigenvalues, nearfield_circle_eigenvalues
from .solver import LanczosConfig, count_between, solve_smallest_modulus

log = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.5, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05)


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------- regression

@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r2: float
    n_points: int


def fit_loglog(points) -> RegressionResult:
    """Least-squares line through ``(log x, log y)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("log-log fit needs positive finite coordinates")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_res = float(np.sum((ly - A @ [slope, icpt]) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RegressionResult(float(slope), float(icpt), min(max(r2, 0.0), 1.0), len(pts))


def richardson_order(q0: float, q1: float, q2: float, ratio: float = 2.0) -> float:
    """Observed order from three values on meshes refined by ``ratio``."""
    d0, d1 = q1 - q0, q2 - q1
    if d0 == 0 or d1 == 0 or d0 * d1 < 0:
        return math.nan
    return math.log(abs(d0 / d1)) / math.log(ratio)


def spectral_inverse_gap(spectrum_a, spectrum_b, k: int | None = None) -> float:
    """Hausdorff distance between ``{1/lambda}`` sets of the two truncated spectra.

    Each list is truncated to its ``k`` entries of smallest modulus.
    """
    A = np.asarray(list(spectrum_a), dtype=float)
    B = np.asarray(list(spectrum_b), dtype=float)
    if A.size == 0 or B.size == 0:
        raise ValueError("spectra must be nonempty")
    if np.any(A == 0) or np.any(B == 0):
        raise ValueError("zero eigenvalue has no inverse")
    if k is not None:
        A = A[np.argsort(np.abs(A), kind="stable")[:k]]
        B = B[np.argsort(np.abs(B), kind="stable")[:k]]
    D = np.abs(1.0 / A[:, None] - 1.0 / B[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


# ------------------------------------------------------------ eigvec metrics

def _nodal(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape == (mesh.n_nodes,):
        return v
    dm = DofMap.from_mesh(mesh)
    if v.shape == (dm.n_dof,):
        return dm.extend(v)
    raise ValueError(f"vector length {v.shape} matches neither nodes ({mesh.n_nodes}) nor dofs ({dm.n_dof})")


def _lumped_mass(mesh: Mesh) -> np.ndarray:
    _, M = assemble_full(mesh, None)
    return np.asarray(M.sum(axis=1)).ravel()


def localization_metric(mesh: Mesh, eigvec, c: float = 4.0, radius: float | None = None) -> float:
    """Fraction of the (lumped) M-mass of ``eigvec`` carried by nodes with ``|x| <= R``.

    ``R = c * delta * max(a, b)`` from the mesh geometry unless ``radius`` is given.
    """
    if radius is None:
        if mesh.geometry is None:
            raise ValueError("mesh has no inclusion geometry; pass radius")
        radius = c * mesh.geometry.radius
    if radius >= 1:
        raise ValueError(f"ball radius {radius} reaches the outer boundary")
    u = _nodal(mesh, eigvec)
    w = _lumped_mass(mesh) * u * u
    tot = w.sum()
    if tot == 0:
        raise ValueError("zero vector")
    inside = np.hypot(*mesh.nodes.T) <= radius * (1 + 1e-12)
    return float(w[inside].sum() / tot)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_min: float
    r_max: float
    n_points: int
    r2: float
    applicable: bool = True


def decay_rate_fit(mesh: Mesh, eigvec, lam: float, r_in: float | None = None, r_out: float = 0.5,
                   n_bins: int = 40, floor: float = 1e-7) -> DecayFit:
    """Exponential rate of the angularly averaged ``|u|`` on ``r_in <= |x| <= r_out``.

    ``r_in`` defaults to ``2 * delta * max(a, b)``.  Bins whose average falls
    below ``floor * max|u|`` (solver noise) end the fitted range.
    """
    if lam >= 0:
        return DecayFit(math.nan, math.nan, math.nan, 0, math.nan, applicable=False)
    if r_in is None:
        if mesh.geometry is None:
            raise ValueError("mesh has no inclusion geometry; pass r_in")
        r_in = 2 * mesh.geometry.radius
    u = np.abs(_nodal(mesh, eigvec))
    r = np.hypot(*mesh.nodes.T)
    edges = np.linspace(r_in, r_out, n_bins + 1)
    which = np.digitize(r, edges) - 1
    rs, us = [], []
    top = u.max()
    for i in range(n_bins):
        sel = which == i
        if not np.any(sel):
            continue
        m = u[sel].mean()
        if m < floor * top:
            break
        rs.append(r[sel].mean())
        us.append(m)
    if len(rs) < 3:
        raise ExperimentError(f"only {len(rs)} usable radial bins in [{r_in}, {r_out}]")
    rs, us = np.array(rs), np.array(us)
    A = np.column_stack([rs, np.ones_like(rs)])
    ly = np.log(us)
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1 - float(np.sum((ly - A @ [slope, icpt]) ** 2)) / ss_tot if ss_tot else 1.0
    return DecayFit(float(-slope), float(rs[0]), float(rs[-1]), len(rs), r2)


# ----------------------------------------------------------------- h-study

@dataclass(frozen=True)
class HStudyRow:
    level: int
    h_max: float
    n_dof: int
    lambda_pos_1: float
    lambda_neg_1: float
    order_pos: float
    order_neg: float


@dataclass
class HStudyReport:
    rows: list

    @property
    def finest(self) -> HStudyRow:
        return self.rows[-1]


def build_mesh(geom: InclusionGeometry, params: MeshParams, refinements: int = 0) -> Mesh:
    mesh = build_disk_ellipse_mesh(geom, params)
    for _ in range(refinements):
        mesh = uniform_refine(mesh, geom)
    return mesh


def _require_admissible(mat: MaterialPair, a: float, b: float) -> list:
    chk = check_admissible(mat.kappa, a, b)
    if chk.verdict == Verdict.CRITICAL:
        raise ValueError(f"contrast {mat.kappa} lies on the critical set (nearest {chk.nearest})")
    if chk.verdict == Verdict.NEAR_CRITICAL:
        msg = f"contrast {mat.kappa} is within {chk.distance:.3g} of critical value {chk.nearest}"
        log.warning(msg)
        return [msg]
    return []


HSTUDY_PARAMS = MeshParams(inclusion_rings=2, annulus_rings=3, angular_segments=16)


def run_h_study(geom: InclusionGeometry | None = None, mat: MaterialPair | None = None,
                levels: int = 5, params: MeshParams = HSTUDY_PARAMS,
                cfg: LanczosConfig | None = None) -> HStudyReport:
    """First positive/negative eigenvalue on a nested sequence of uniformly refined meshes."""
    geom = geom or InclusionGeometry(0.5, 0.25, 0.5)
    mat = mat or MaterialPair()
    if levels < 1:
        raise ValueError("levels must be >= 1")
    _require_admissible(mat, geom.a, geom.b)
    cfg = cfg or LanczosConfig(krylov_dim=24)
    mesh = build_disk_ellipse_mesh(geom, params)
    rows, lp, ln = [], [], []
    for lev in range(levels):
        if lev:
            mesh = uniform_refine(mesh, geom)
        pencil = assemble(mesh, mat)
        res = solve_smallest_modulus(pencil, 1, 1, cfg)
        if not res.converged or not len(res.pos_values) or not len(res.neg_values):
            raise ExperimentError(f"level {lev}: solver failed ({'; '.join(res.flags)})")
        lp.append(float(res.pos_values[0]))
        ln.append(float(res.neg_values[0]))
        op = richardson_order(*lp[-3:]) if lev >= 2 else math.nan
        on = richardson_order(*ln[-3:]) if lev >= 2 else math.nan
        rows.append(HStudyRow(lev, float(mesh.edge_lengths().max()), pencil.n, lp[-1], ln[-1], op, on))
        log.info("h-study level %d: n=%d lambda_1=%.8g lambda_-1=%.8g", lev, pencil.n, lp[-1], ln[-1])
    return HStudyReport(rows)


# --------------------------------------------------------------- delta sweep

# Calibrated mesh policies (see README): the ellipse sweep needs a fine inclusion
# and bulk because kappa = -2.5 sits close to the critical value -2, which
# amplifies the inclusion's effect on the positive modes; the circle (near-field)
# sweep is well conditioned and runs on a lighter mesh.
SWEEP_PARAMS = MeshParams(inclusion_rings=16, annulus_rings=32, angular_segments=128, max_spacing=0.015)
NEARFIELD_PARAMS = MeshParams(inclusion_rings=8, annulus_rings=16, angular_segments=64, max_spacing=0.03)


@dataclass(frozen=True)
class SweepConfig:
    deltas: tuple = DEFAULT_DELTAS
    a: float = 0.5
    b: float = 0.25
    materials: MaterialPair = MaterialPair()
    k_pos: int = 6
    k_neg: int = 3
    mesh: MeshParams = SWEEP_PARAMS
    refinements: int = 0
    lanczos: LanczosConfig = LanczosConfig()
    threads: int = 1
    loc_multiplier: float = 4.0

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.size < 1:
            raise ValueError("empty delta list")
        if np.any(d <= 0) or np.any(d > 1):
            raise ValueError("deltas must lie in (0, 1]")
        if np.any(np.diff(d) >= 0):
            raise ValueError("deltas must be strictly decreasing")
        if self.k_pos < 0 or self.k_neg < 0 or self.k_pos + self.k_neg == 0:
            raise ValueError("need k_pos + k_neg >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        self.lanczos.checked(self.k_pos + self.k_neg)

    def warnings(self) -> list:
        return _require_admissible(self.materials, self.a, self.b)


@dataclass(frozen=True)
class SweepRow:
    delta: float
    h_max: float
    n: int
    lam: float
    scaled_lambda: float      # delta^2 * lambda on negative rows, nan otherwise
    residual: float
    loc_fraction: float
    ok: bool = True


@dataclass
class DeltaPoint:
    """Per-delta diagnostics beyond the row table."""
    delta: float
    n_dof: int
    h_max: float
    pos_values: list
    neg_values: list
    gap_empty: bool           # no pencil eigenvalue strictly between lambda_{-1} and 0
    decay: DecayFit | None
    inverse_gap: float = math.nan
    flags: list = field(default_factory=list)


@dataclass
class SweepReport:
    rows: list
    points: list
    fits: dict
    failures: dict
    warnings: list
    farfield: list = field(default_factory=list)
    nearfield: list = field(default_factory=list)

    def series(self, n: int):
        """(delta, lambda_n) pairs over the sweep for signed index ``n``."""
        return [(r.delta, r.lam) for r in self.rows if r.n == n and r.ok]


def _gap_is_empty(pencil, lam_neg_1: float) -> bool:
    """Inertia check that no eigenvalue lies in (lambda_{-1}, 0)."""
    eps = 1e-7 * abs(lam_neg_1)
    try:
        return count_between(pencil, lam_neg_1 + eps, 0.0) == 0
    except SingularPivotError:
        return False


def _sweep_one(cfg: SweepConfig, delta: float, mu_pos: list):
    geom = InclusionGeometry(cfg.a, cfg.b, delta)
    mesh = build_mesh(geom, cfg.mesh, cfg.refinements)
    pencil = assemble(mesh, cfg.materials)
    res = solve_smallest_modulus(pencil, cfg.k_pos, cfg.k_neg, cfg.lanczos)
    h = float(mesh.edge_lengths().max())
    tol = cfg.lanczos.tol
    rows = []
    for n, lam, rr, vec in res.pairs():
        ok = bool(rr <= tol * max(abs(lam), 1.0))
        loc = localization_metric(mesh, vec, cfg.loc_multiplier) if cfg.loc_multiplier * geom.radius < 1 else math.nan
        scaled = delta ** 2 * lam if n < 0 else math.nan
        rows.append(SweepRow(delta, h, n, float(lam), float(scaled), float(rr), loc, ok))
    decay = None
    gap_empty = True
    if len(res.neg_values):
        try:
            decay = decay_rate_fit(mesh, res.neg_vectors[:, 0], res.neg_values[0])
        except ExperimentError as e:
            res.flags.append(str(e))
        gap_empty = _gap_is_empty(pencil, float(res.neg_values[0]))
    pt = DeltaPoint(delta, pencil.n, h, list(map(float, res.pos_values)), list(map(float, res.neg_values)),
                    gap_empty, decay, flags=list(res.flags))
    if mu_pos:
        pt.inverse_gap = spectral_inverse_gap(list(res.pos_values) + list(res.neg_values), mu_pos,
                                              cfg.k_pos + cfg.k_neg)
    return rows, pt


def run_delta_sweep(cfg: SweepConfig, with_oracles: bool = True) -> SweepReport:
    """Solve the pencil for every delta of the sweep and fit the asymptotic laws.

    The mesh policy is fixed (same ``MeshParams`` and refinement count for every
    delta), so the inclusion is resolved by the same number of cells throughout.
    Per-delta failures are recorded and the sweep continues.
    """
    warnings = cfg.warnings()
    mu_pos = []
    mu_neg = []
    if with_oracles:
        if cfg.k_pos:
            mu_pos = expand(farfield_disk_eigenvalues(cfg.materials.sigma_plus, cfg.k_pos))[:cfg.k_pos]
        if cfg.k_neg and cfg.a == cfg.b:
            m = cfg.materials
            mu_neg = expand(nearfield_circle_eigenvalues(m.sigma_plus, m.sigma_minus, cfg.a, cfg.k_neg))[:cfg.k_neg]

    def job(d):
        try:
            return d, _sweep_one(cfg, d, mu_pos), None
        except Exception as e:  # recorded, sweep continues
            log.warning("delta=%g failed: %s", d, e)
            return d, None, f"{type(e).__name__}: {e}"

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(job, cfg.deltas))
    else:
        results = [job(d) for d in cfg.deltas]

    rows, points, failures = [], [], {}
    for d, out, err in sorted(results, key=lambda t: -t[0]):
        if err is not None:
            failures[d] = err
            continue
        r, p = out
        rows.extend(sorted(r, key=lambda x: x.n))
        points.append(p)

    fits = {}
    neg = [(1 / r.delta, abs(r.lam)) for r in rows if r.n == -1 and r.ok]
    if len(neg) >= 3:
        fits["neg_1"] = fit_loglog(neg)
    for n in range(1, min(cfg.k_pos, len(mu_pos)) + 1):
        err = [(1 / r.delta, abs(r.lam - mu_pos[n - 1])) for r in rows if r.n == n and r.ok]
        if len(err) >= 3 and all(e[1] > 0 for e in err):
            fits[f"pos_err_{n}"] = fit_loglog(err)
    return SweepReport(rows, points, fits, failures, warnings, mu_pos, mu_neg)


# ------------------------------------------------------------ source problem

@dataclass(frozen=True)
class SourceRow:
    delta: float
    err_l2: float
    err_h1: float
    norm_l2: float
    norm_h1: float


@dataclass
class SourceReport:
    rows: list
    fit_l2: RegressionResult | None
    fit_h1: RegressionResult | None
    monotone: bool


def _solve_sym(A, b):
    fac = factorize_matrix(A)
    if fac.inertia.n_zero:
        raise SingularPivotError(-1, 0.0)
    return fac.solve(b)


def run_source_problem(cfg: SweepConfig, f=1.0) -> SourceReport:
    """``||u^delta - v||`` over the sweep, where ``u^delta`` solves the sign-changing
    source problem and ``v`` the problem with ``sigma = sigma_plus`` everywhere.

    Norms are discrete: L2 from the mass matrix, H1 seminorm from the unit stiffness.
    Slopes are fitted against ``delta`` on the full grid.
    """
    cfg.warnings()
    mat = cfg.materials
    rows = []
    for d in cfg.deltas:
        geom = InclusionGeometry(cfg.a, cfg.b, d)
        mesh = build_mesh(geom, cfg.mesh, cfg.refinements)
        pencil = assemble(mesh, mat)
        b = load_vector(mesh, f, pencil.dofmap)
        if not np.any(b):
            rows.append(SourceRow(d, 0.0, 0.0, 0.0, 0.0))
            continue
        K1 = unit_stiffness(mesh, pencil.dofmap)
        u = _solve_sym(pencil.K.full(), b)
        v = _solve_sym(mat.sigma_plus * K1, b)
        e = u - v
        M = pencil.M.full()
        rows.append(SourceRow(d, float(np.sqrt(e @ (M @ e))), float(np.sqrt(e @ (K1 @ e))),
                              float(np.sqrt(v @ (M @ v))), float(np.sqrt(v @ (K1 @ v)))))
    l2 = np.array([r.err_l2 for r in rows])
    h1 = np.array([r.err_h1 for r in rows])
    monotone = bool(np.all(np.diff(l2) < 0) and np.all(np.diff(h1) < 0))
    fl2 = fh1 = None
    if len(rows) >= 3 and np.all(l2 > 0) and np.all(h1 > 0):
        fl2 = fit_loglog([(r.delta, r.err_l2) for r in rows])
        fh1 = fit_loglog([(r.delta, r.err_h1) for r in rows])
    return SourceReport(rows, fl2, fh1, monotone)
