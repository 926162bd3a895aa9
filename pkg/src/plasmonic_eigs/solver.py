"""Smallest-modulus eigenpairs of the pencil (K, M) by shift-invert Lanczos.

Lanczos runs in the M-inner product on ``x -> (K - s M)^{-1} M x``, so a Ritz
value ``theta`` maps back to ``lambda = s + 1/theta``.  Both ends of the
transformed spectrum are wanted at once: the largest positive ``theta`` are the
eigenvalues just above the shift, the most negative ones those just below it.
Results are cross-checked by inertia counts (Sylvester's law); eigenvalues that
a single Krylov sequence cannot see (exact multiplicities) are recovered by
locking the converged vectors and restarting from a fresh vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .ldlt import IndefiniteFactorization, SingularPivotError, factorize, factorize_matrix

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LanczosConfig:
    krylov_dim: int = 60
    tol: float = 1e-9
    max_restarts: int = 200
    rng_seed: int = 0

    def checked(self, k_total: int) -> "LanczosConfig":
        if self.krylov_dim < 2 * k_total + 10:
            raise ValueError(f"krylov_dim={self.krylov_dim} too small for {k_total} wanted pairs "
                             f"(need >= {2 * k_total + 10})")
        return self


@dataclass
class EigenResult:
    # "pos"/"neg" mean above/below the shift, i.e. the sign of lambda for shift 0
    pos_values: np.ndarray
    pos_vectors: np.ndarray
    pos_residuals: np.ndarray
    neg_values: np.ndarray       # lambda_{-1} >= lambda_{-2} >= ...
    neg_vectors: np.ndarray
    neg_residuals: np.ndarray
    shift: float = 0.0
    n_below_shift: int = 0
    converged: bool = True
    flags: list = field(default_factory=list)
    matvecs: int = 0

    def values(self) -> np.ndarray:
        """All eigenvalues in ascending order."""
        return np.sort(np.concatenate([self.neg_values, self.pos_values]))

    def pairs(self):
        """(signed index, value, residual, vector) in the ...,-2,-1,1,2,... numbering."""
        out = []
        for i in range(len(self.neg_values) - 1, -1, -1):
            out.append((-(i + 1), self.neg_values[i], self.neg_residuals[i], self.neg_vectors[:, i]))
        for i in range(len(self.pos_values)):
            out.append((i + 1, self.pos_values[i], self.pos_residuals[i], self.pos_vectors[:, i]))
        return out


def _mass_factor(pencil) -> IndefiniteFactorization:
    fac = getattr(pencil, "_mass_factor", None)
    if fac is None:
        fac = factorize_matrix(pencil.M.full())
        if fac.inertia.n_neg or fac.inertia.n_zero:
            raise ValueError("mass matrix is not positive definite")
        pencil._mass_factor = fac
    return fac


def residual_distance_bound(pencil, lam: float, v: np.ndarray) -> float:
    """``||K v - lam M v||_{M^-1} / ||v||_M``; some pencil eigenvalue lies within this of ``lam``."""
    v = np.asarray(v, dtype=float)
    Mv = pencil.M @ v
    vMv = float(v @ Mv)
    if vMv <= 0:
        raise ValueError("zero vector")
    r = pencil.K @ v - lam * Mv
    rMr = float(r @ _mass_factor(pencil).solve(r))
    return float(np.sqrt(max(rMr, 0.0) / vMv))


def count_below(pencil, sigma: float) -> int:
    """Number of pencil eigenvalues strictly below ``sigma``."""
    fac = factorize(pencil.K, pencil.M, sigma)
    if fac.inertia.n_zero:
        raise SingularPivotError(-1, sigma)
    return fac.inertia.n_neg


def count_between(pencil, lo: float, hi: float) -> int:
    return count_below(pencil, hi) - count_below(pencil, lo)


def _factor_with_ladder(pencil, shift: float):
    scale = max(1.0, abs(shift))
    for eps in (0.0, 1e-3, -1e-3, 2e-3, -2e-3, 5e-3):
        s = shift + eps * scale
        try:
            fac = factorize(pencil.K, pencil.M, s)
        except SingularPivotError:
            continue
        if fac.inertia.n_zero == 0:
            if eps:
                log.info("shift %g is numerically an eigenvalue; using %g", shift, s)
            return fac, s
    raise SingularPivotError(-1, shift)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(v) > 1e-8 * np.abs(v).max())
    return -v if big.size and v[big[0]] < 0 else v


class _Lanczos:
    """Thick-restart Lanczos for an M-self-adjoint operator."""

    def __init__(self, op, M, n, cfg: LanczosConfig, rng, locked=None):
        self.op, self.M, self.n, self.cfg, self.rng = op, M, n, cfg, rng
        self.X = locked  # (n, p) M-orthonormal or None
        self.matvecs = 0

    def _project_out(self, w, V):
        for _ in range(2):
            if self.X is not None:
                w = w - self.X @ (self.X.T @ (self.M @ w))
            Mw = self.M @ w
            h = V.T @ Mw
            w = w - V @ h
        Mw = self.M @ w
        return w, float(np.sqrt(max(w @ Mw, 0.0)))

    def _random_start(self, V):
        v = self.rng.standard_normal(self.n)
        v, nrm = self._project_out(v, V)
        return v / nrm

    def run(self, n_above, n_below, accept, max_cycles, start=None):
        """Ritz values/vectors of the wanted extremes with per-pair convergence flags.

        ``accept(theta, x)`` is the true residual test for one Ritz pair; it is
        only evaluated once the cheap Lanczos estimate ``|beta * y_m|`` is small.
        """
        n, m = self.n, self.cfg.krylov_dim
        m = min(m, n - (0 if self.X is None else self.X.shape[1]))
        V = np.zeros((n, m + 1))
        H = np.zeros((m, m))
        v0 = None
        if start is not None:
            v0, nrm = self._project_out(start, V[:, :0])
            v0 = v0 / nrm if nrm > 1e-8 * np.sqrt(max(start @ (self.M @ start), 1e-300)) else None
        V[:, 0] = v0 if v0 is not None else self._random_start(V[:, :0])
        j0 = 0
        beta = 0.0
        want, ok = [], []
        for cycle in range(max_cycles + 1):
            for j in range(j0, m):
                w = self.op(V[:, j])
                self.matvecs += 1
                Vj = V[:, :j + 1]
                h_tot = np.zeros(j + 1)
                for _ in range(2):
                    if self.X is not None:
                        w = w - self.X @ (self.X.T @ (self.M @ w))
                    h = Vj.T @ (self.M @ w)
                    w = w - Vj @ h
                    h_tot += h
                H[:j + 1, j] = h_tot
                H[j, :j + 1] = h_tot
                beta = float(np.sqrt(max(w @ (self.M @ w), 0.0)))
                if beta <= 1e-13 * max(1.0, np.abs(h_tot).max()):
                    # invariant subspace: continue with a fresh orthogonal direction
                    V[:, j + 1] = self._random_start(V[:, :j + 1])
                    beta = 0.0
                else:
                    V[:, j + 1] = w / beta
                if j + 1 < m:
                    H[j + 1, j] = H[j, j + 1] = beta
            theta, Y = np.linalg.eigh(0.5 * (H + H.T))
            pos = np.flatnonzero(theta > 0)[::-1]
            neg = np.flatnonzero(theta < 0)
            want = list(pos[:n_above]) + list(neg[:n_below])
            ok = []
            for i in want:
                est = abs(beta * Y[m - 1, i])
                if est > 1e-3 * abs(theta[i]):
                    ok.append(False)
                    continue
                ok.append(bool(accept(theta[i], V[:, :m] @ Y[:, i])))
            if all(ok) and len(pos) >= n_above and len(neg) >= n_below:
                break
            if cycle == max_cycles:
                break
            # thick restart: keep the wanted extremes plus a buffer on each wanted side
            extra = max(2, (m // 2 - len(want)) // max(1, (n_above > 0) + (n_below > 0)))
            keep = []
            if n_above:
                keep += list(pos[:n_above + extra])
            if n_below:
                keep += list(neg[:n_below + extra])
            keep = keep[: m - 2]
            p = len(keep)
            Vk = V[:, :m] @ Y[:, keep]
            V[:, p] = V[:, m]
            V[:, :p] = Vk
            H[:] = 0.0
            H[np.arange(p), np.arange(p)] = theta[keep]
            j0 = p
        want_vecs = np.column_stack([V[:, :m] @ Y[:, i] for i in want]) if want else np.zeros((n, 0))
        return theta[want], want_vecs, ok


# restart cycles per slicing pass before the shift is moved
PASS_CYCLES = 12


def solve_smallest_modulus(pencil, k_pos: int, k_neg: int, cfg: LanczosConfig | None = None,
                           shift: float = 0.0) -> EigenResult:
    """The ``k_pos`` eigenvalues just above ``shift`` and the ``k_neg`` just below it.

    With the default shift 0 these are the smallest positive and the largest
    negative eigenvalues of the pencil.  Converged pairs are locked; when a
    pass stalls, the next one is shifted onto the best unconverged Ritz
    estimate (spectrum slicing).  Completeness is checked by inertia counts
    relative to the base shift.
    """
    cfg = (cfg or LanczosConfig()).checked(k_pos + k_neg)
    n = pencil.n
    fac, s = _factor_with_ladder(pencil, shift)
    n_below = fac.inertia.n_neg
    n_above = n - n_below
    flags = []
    if k_neg > n_below:
        flags.append(f"only {n_below} eigenvalues below the shift")
    if k_pos > n_above:
        flags.append(f"only {n_above} eigenvalues above the shift")
    k_neg_eff, k_pos_eff = min(k_neg, n_below), min(k_pos, n_above)
    M = pencil.M.full()
    K = pencil.K.full()
    mfac = _mass_factor(pencil)
    rng = np.random.default_rng(cfg.rng_seed)

    def resid(lam, x):
        Mx = M @ x
        nx = float(np.sqrt(x @ Mx))
        r = K @ x - lam * Mx
        return float(np.sqrt(max(r @ mfac.solve(r), 0.0))) / nx

    found_vals, found_vecs = [], []
    converged = True
    matvecs = 0
    cycles_left = cfg.max_restarts
    max_passes = 4 + 2 * (k_pos_eff + k_neg_eff)
    need_above, need_below = k_pos_eff, k_neg_eff
    cur_fac, cur_s = fac, s
    req_above, req_below = need_above, need_below
    start = None
    for ipass in range(max_passes):
        locked = np.column_stack(found_vecs) if found_vecs else None

        def op(v, f=cur_fac):
            return f.solve(M @ v)

        def accept(theta, x, s_=cur_s):
            lam = s_ + 1.0 / theta
            return resid(lam, x) <= cfg.tol * max(abs(lam), 1.0)

        lz = _Lanczos(op, M, n, cfg, rng, locked)
        budget = cycles_left if ipass == max_passes - 1 else min(cycles_left, PASS_CYCLES)
        th, vecs, ok = lz.run(req_above, req_below, accept, budget, start)
        matvecs += lz.matvecs
        cycles_left = max(cycles_left - budget, PASS_CYCLES)
        for t, x, good in zip(th, vecs.T, ok):
            if not good:
                continue
            x = x / np.sqrt(x @ (M @ x))
            if found_vecs:
                # keep the locked basis M-orthonormal
                X = np.column_stack(found_vecs)
                x = x - X @ (X.T @ (M @ x))
                nx = np.sqrt(x @ (M @ x))
                if nx < 1e-6:
                    continue
                x = x / nx
            found_vals.append(cur_s + 1.0 / t)
            found_vecs.append(x)
        need_above, need_below = _missing(pencil, s, n_below, found_vals, k_pos_eff, k_neg_eff, cfg.tol)
        if need_above == 0 and need_below == 0:
            break
        # next pass: move the shift onto the unconverged estimate nearest the base shift
        est = [(cur_s + 1.0 / t, x) for t, x, good in zip(th, vecs.T, ok) if not good]
        side = -1 if need_below and (not need_above or ipass % 2) else 1
        cand = [(lam, x) for lam, x in est if (lam - s) * side > 0]
        if cand:
            lam_est, x_est = min(cand, key=lambda c: abs(c[0] - s))
            gap = max(abs(lam_est - s), 1e-8)
            target = lam_est - side * 1e-3 * gap  # just inside, toward the base shift
            try:
                cur_fac, cur_s = _factor_with_ladder(pencil, target)
            except SingularPivotError:
                cur_fac, cur_s = fac, s
            start = x_est
            req_above = req_below = max(need_above if side > 0 else need_below, 1)
        else:
            cur_fac, cur_s, start = fac, s, None
            req_above, req_below = need_above, need_below
    else:
        flags.append("inertia count not reproduced after locking passes")
        converged = False

    vals = np.array(found_vals)
    vecs = np.column_stack(found_vecs) if found_vecs else np.zeros((n, 0))
    # Rayleigh-Ritz on the collected basis removes small cross-contamination
    if vecs.shape[1]:
        Kp = vecs.T @ (K @ vecs)
        Mp = vecs.T @ (M @ vecs)
        vals, Z = sla.eigh(0.5 * (Kp + Kp.T), 0.5 * (Mp + Mp.T))
        vecs = vecs @ Z
    above = np.flatnonzero(vals > s)
    below = np.flatnonzero(vals < s)
    above = above[np.argsort(vals[above], kind="stable")][:k_pos_eff]
    below = below[np.argsort(-vals[below], kind="stable")][:k_neg_eff]

    def pack(idx):
        V = np.column_stack([_canonical_sign(vecs[:, i] / np.sqrt(vecs[:, i] @ (M @ vecs[:, i])))
                             for i in idx]) if len(idx) else np.zeros((n, 0))
        res = np.array([resid(vals[i], V[:, c]) for c, i in enumerate(idx)])
        return vals[idx], V, res

    pv, pV, pr = pack(above)
    nv, nV, nr = pack(below)
    # split about the requested shift (the factored one may be nudged off an eigenvalue)
    allv = np.concatenate([nv, pv])
    allV = np.column_stack([nV, pV]) if allv.size else np.zeros((n, 0))
    allr = np.concatenate([nr, pr])
    ip = np.flatnonzero(allv > shift)
    ip = ip[np.argsort(allv[ip], kind="stable")]
    ineg = np.flatnonzero(allv < shift)
    ineg = ineg[np.argsort(-allv[ineg], kind="stable")]
    bad = np.flatnonzero(allr > cfg.tol * np.maximum(np.abs(allv), 1.0))
    if bad.size:
        converged = False
        flags.append(f"{bad.size} pairs above residual tolerance")
    return EigenResult(
        pos_values=allv[ip], pos_vectors=allV[:, ip], pos_residuals=allr[ip],
        neg_values=allv[ineg], neg_vectors=allV[:, ineg], neg_residuals=allr[ineg],
        shift=s, n_below_shift=n_below, converged=bool(converged), flags=flags, matvecs=matvecs,
    )


def _missing(pencil, s, n_below_s, vals, k_above, k_below, tol):
    """How many wanted eigenvalues on each side of ``s`` the found set lacks,
    according to inertia counts (``n_below_s`` is the count below ``s``)."""
    vals = np.asarray(vals)
    need = []
    for side, k in ((1, k_above), (-1, k_below)):
        v = np.sort(vals[(vals - s) * side > 0] * side) * side
        if k == 0:
            need.append(0)
            continue
        if len(v) == 0:
            need.append(k)
            continue
        edge = v[min(k, len(v)) - 1]
        eps = max(1e3 * tol * abs(edge), 1e-10 * max(abs(edge), 1.0))
        outer = edge + side * eps
        try:
            c = abs(count_below(pencil, outer) - n_below_s)
        except SingularPivotError:
            c = abs(count_below(pencil, edge + 2 * side * eps) - n_below_s)
        have = min(k, len(v))
        need.append(max(c, k) - have if (c > have or have < k) else 0)
    return need[0], need[1]


def slicing_multiplicities(pencil, values, rtol: float = 1e-6):
    """Group computed eigenvalues into clusters and count, by inertia at
    interleaving shifts, how many pencil eigenvalues each cluster window holds.

    Returns a list of (cluster values, counted multiplicity).
    """
    v = np.sort(np.asarray(values, dtype=float))
    clusters = [[v[0]]] if v.size else []
    for x in v[1:]:
        if abs(x - clusters[-1][-1]) <= rtol * max(abs(x), 1.0):
            clusters[-1].append(x)
        else:
            clusters.append([x])
    out = []
    for i, c in enumerate(clusters):
        lo_gap = (c[0] - clusters[i - 1][-1]) if i else abs(c[0]) * 0.5 or 1.0
        hi_gap = (clusters[i + 1][0] - c[-1]) if i + 1 < len(clusters) else abs(c[-1]) * 0.5 or 1.0
        lo = c[0] - 0.5 * min(lo_gap, abs(c[0]) if c[0] != 0 else lo_gap)
        hi = c[-1] + 0.5 * min(hi_gap, abs(c[-1]) if c[-1] != 0 else hi_gap)
        # never straddle zero unless the cluster is at zero
        if c[0] > 0:
            lo = max(lo, 0.5 * c[0])
        if c[-1] < 0:
            hi = min(hi, 0.5 * c[-1])
        out.append((c, count_between(pencil, lo, hi)))
    return out
