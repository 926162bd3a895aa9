"""Acceptance checks.  Each test prints one PASS/FAIL line and asserts the same condition.

Run alone with ``pytest tests/test_acceptance.py -s``; the heavy ones are marked ``slow``.
"""

from pathlib import Path

import numpy as np
import pytest

from plasmonic_eigs.config import RunConfig
from plasmonic_eigs.contrast import Verdict, check_admissible, critical_contrasts
from plasmonic_eigs.experiments import build_mesh, run_delta_sweep, run_h_study, run_source_problem
from plasmonic_eigs.fem import assemble, assemble_full, local_matrices
from plasmonic_eigs.mesh import InclusionGeometry, MeshParams, build_disk_ellipse_mesh
from plasmonic_eigs.oracle import fullproblem_disk_eigenvalues
from plasmonic_eigs.solver import (LanczosConfig, residual_distance_bound, slicing_multiplicities,
                                   solve_smallest_modulus)

SMALL = MeshParams(inclusion_rings=2, annulus_rings=3, angular_segments=16)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _cfg(name):
    return RunConfig.load(CONFIGS / name)


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def circle_sweep():
    return run_delta_sweep(_cfg("sweep_circle.json").sweep_config())


@pytest.mark.slow
def test_criterion_1_reference_table(capsys):
    cfg = _cfg("h_study.json")
    g = cfg.geometry
    rep = run_h_study(InclusionGeometry(g.a, g.b, g.delta), cfg.material_pair(), cfg.mesh.levels,
                      cfg.mesh_params(), cfg.lanczos())
    f = rep.finest
    e_pos = abs(f.lambda_pos_1 / 5.83511 - 1)
    e_neg = abs(f.lambda_neg_1 / -4.88572 - 1)
    orders = [r.order_pos for r in rep.rows[2:]] + [r.order_neg for r in rep.rows[2:]]
    ok = (len(rep.rows) == 5 and e_pos <= 0.005 and e_neg <= 0.01
          and 1.7 <= f.order_pos <= 2.3 and 1.7 <= f.order_neg <= 2.3)
    _report(capsys, 1, ok, f"lambda_1={f.lambda_pos_1:.6f} (err {100 * e_pos:.3f}%), "
                           f"lambda_-1={f.lambda_neg_1:.6f} (err {100 * e_neg:.3f}%), "
                           f"finest orders {f.order_pos:.3f}/{f.order_neg:.3f}, "
                           f"all orders {np.round(orders, 3).tolist()}")


@pytest.mark.slow
def test_criterion_2_positive_convergence(capsys):
    rep = run_delta_sweep(_cfg("sweep_ellipse.json").sweep_config())
    mu = rep.farfield
    ok = not rep.failures and len(rep.points) == 7
    parts = []
    for n in (1, 2, 3):
        lam = [r.lam for r in rep.rows if r.n == n]
        err = np.abs(np.array(lam) - mu[n - 1])
        rel = err[-1] / mu[n - 1]
        dec = bool(np.all(np.diff(err) < 0))
        ok &= dec and rel <= 0.02 and len(lam) == 7
        parts.append(f"n={n}: decreasing={dec}, rel err at 0.05 {100 * rel:.3f}%")
    _report(capsys, 2, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_3_negative_scaling(capsys, circle_sweep):
    rep = circle_sweep
    fit = rep.fits["neg_1"]
    mu = rep.nearfield[0]
    last = [r for r in rep.rows if r.n == -1 and r.delta == min(rep.points, key=lambda p: p.delta).delta][0]
    rel = abs(last.scaled_lambda / mu - 1)
    ok = not rep.failures and 1.9 <= fit.slope <= 2.1 and fit.r2 >= 0.999 and rel <= 0.02
    _report(capsys, 3, ok, f"slope {fit.slope:.4f}, R2 {fit.r2:.6f}, delta^2 lambda_-1 = "
                           f"{last.scaled_lambda:.4f} vs mu_-1 = {mu:.4f} ({100 * rel:.3f}%)")


@pytest.mark.slow
def test_criterion_4_no_mans_land(capsys, circle_sweep):
    pts = circle_sweep.points    # ordered by decreasing delta
    scaled = np.array([abs(p.neg_values[0]) * p.delta ** 1.5 for p in pts])
    inc = bool(np.all(np.diff(scaled) > 0))
    gaps = all(p.gap_empty for p in pts)
    _report(capsys, 4, inc and gaps and len(pts) == 7,
            f"|lambda_-1| delta^1.5 = {np.round(scaled, 3).tolist()} increasing={inc}; "
            f"empty (lambda_-1, 0) at every delta: {gaps}")


@pytest.mark.slow
def test_criterion_5_localization(capsys, circle_sweep):
    rep = circle_sweep
    d = min(p.delta for p in rep.points)
    pt = [p for p in rep.points if p.delta == d][0]
    loc_neg = [r.loc_fraction for r in rep.rows if r.delta == d and r.n == -1][0]
    loc_pos = [r.loc_fraction for r in rep.rows if r.delta == d and r.n == 1][0]
    sp = _cfg("sweep_circle.json").materials.sigma_plus
    need = 0.5 * np.sqrt(abs(pt.neg_values[0]) / sp)
    rate = pt.decay.rate if pt.decay is not None else float("nan")
    ok = loc_neg >= 0.9 and loc_pos <= 0.05 and rate >= need
    _report(capsys, 5, ok, f"delta={d}: mass fraction neg {loc_neg:.4f}, pos {loc_pos:.4f}; "
                           f"decay rate {rate:.2f} vs required {need:.2f}")


@pytest.mark.slow
def test_criterion_6_oracle_crosscheck(capsys):
    cfg = _cfg("crosscheck_circle.json")
    g, m = cfg.geometry, cfg.materials
    mesh = build_mesh(InclusionGeometry(g.a, g.b, g.delta), cfg.mesh_params(), cfg.mesh.refinements)
    pencil = assemble(mesh, cfg.material_pair())
    res = solve_smallest_modulus(pencil, 3, 2, cfg.lanczos())
    ref = fullproblem_disk_eigenvalues(m.sigma_plus, m.sigma_minus, g.a, g.delta, 3, 2)
    rp, rn = ref.values()
    rel = np.concatenate([np.abs(res.pos_values[:3] / np.array(rp[:3]) - 1),
                          np.abs(res.neg_values[:2] / np.array(rn[:2]) - 1)])
    # degenerate pairs split by ~1e-5 on the discrete mesh; cluster well below the 0.5% accuracy
    mult = slicing_multiplicities(pencil, res.values(), rtol=1e-4)
    mult_ok = all(len(c) == k for c, k in mult)
    oracle_mult = sorted(r.multiplicity for r in ref.positive + ref.negative)
    ok = res.converged and rel.max() <= 0.005 and mult_ok and oracle_mult == sorted(len(c) for c, _ in mult)
    _report(capsys, 6, ok, f"max rel diff {100 * rel.max():.4f}%; multiplicities by inertia "
                           f"{[k for _, k in mult]} vs clusters {[len(c) for c, _ in mult]}")


def test_criterion_7_critical_set(capsys):
    eta1 = critical_contrasts(0.5, 0.25).eta[0]
    v = {k: check_admissible(k, 0.5, 0.25).verdict for k in (-2.5, -2.0, -1.0)}
    circ = critical_contrasts(0.25, 0.25).values()
    ok = (eta1 == -2.0 and v[-2.5] == Verdict.ADMISSIBLE and v[-2.0] == Verdict.CRITICAL
          and v[-1.0] == Verdict.CRITICAL and circ.tolist() == [-1.0])
    _report(capsys, 7, ok, f"eta_1={eta1!r}, verdicts {[(k, x.value) for k, x in v.items()]}, "
                           f"circle set {circ.tolist()}")


def test_criterion_8_unit_exactness(capsys, rng):
    # closed forms on random triangles
    p = rng.normal(size=(50, 3, 2))
    d = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    p[d < 0] = p[d < 0][:, [0, 2, 1]]
    area, K, M = local_matrices(p)
    err_k = err_m = 0.0
    for t in range(len(p)):
        B = np.array([p[t, 1] - p[t, 0], p[t, 2] - p[t, 0]]).T
        G = np.linalg.inv(B).T @ np.array([[-1, 1, 0], [-1, 0, 1]])
        a = abs(np.linalg.det(B)) / 2
        err_k = max(err_k, np.abs(K[t] - a * G.T @ G).max() / max(1.0, np.abs(K[t]).max()))
        err_m = max(err_m, np.abs(M[t] - a / 12 * (np.ones((3, 3)) + np.eye(3))).max())
    mesh = build_disk_ellipse_mesh(InclusionGeometry(0.5, 0.25, 0.5), SMALL)
    Kf, _ = assemble_full(mesh, None)
    rowsum = np.abs(np.asarray(Kf.sum(axis=1)).ravel()).max()
    pencil = assemble(mesh, _cfg("h_study.json").material_pair())
    m_min = np.linalg.eigvalsh(pencil.M.toarray()).min()
    cfg = LanczosConfig(krylov_dim=24, rng_seed=7)
    r1 = solve_smallest_modulus(pencil, 3, 2, cfg)
    r2 = solve_smallest_modulus(pencil, 3, 2, cfg)
    determ = (np.array_equal(r1.values(), r2.values()) and np.array_equal(r1.pos_vectors, r2.pos_vectors)
              and np.array_equal(r1.neg_vectors, r2.neg_vectors))
    from scipy.linalg import eigh
    lam = eigh(pencil.K.toarray(), pencil.M.toarray(), eigvals_only=True)
    bound_ok = True
    for _, val, rho, vec in r1.pairs():
        bound_ok &= np.min(np.abs(lam - val)) <= rho + 1e-10 * abs(val)
        for eps in (1e-4, 1e-2, 1e-1):
            mu = val * (1 + eps)
            v = vec + eps * rng.normal(size=vec.size) * np.abs(vec).max()
            bound_ok &= np.min(np.abs(lam - mu)) <= residual_distance_bound(pencil, mu, v) * (1 + 1e-12)
    ok = err_k <= 1e-14 and err_m <= 1e-14 and rowsum <= 1e-13 and m_min > 0 and determ and bound_ok
    _report(capsys, 8, ok, f"local K err {err_k:.2e}, M err {err_m:.2e}, max row sum {rowsum:.2e}, "
                           f"min eig(M) {m_min:.2e}, deterministic={determ}, residual bound={bool(bound_ok)}")


@pytest.mark.slow
def test_criterion_9_source_problem(capsys):
    cfg = _cfg("source_ellipse.json")
    rep = run_source_problem(cfg.sweep_config(), cfg.source.f)
    ok = rep.monotone and rep.fit_l2 is not None and rep.fit_l2.slope > rep.fit_h1.slope
    s2 = rep.fit_l2.slope if rep.fit_l2 else float("nan")
    s1 = rep.fit_h1.slope if rep.fit_h1 else float("nan")
    _report(capsys, 9, ok, f"monotone={rep.monotone}; slope vs delta L2 {s2:.3f}, H1 {s1:.3f}")
