"""Semi-analytic eigenvalues for concentric-disk configurations.

Separation of variables reduces every problem to the radial equation

    (r u')' - (m^2 / r) u + (lambda / sigma) r u = 0

on each layer, with ``u`` and ``sigma u'`` continuous across the interface.
The equation is integrated in Pruefer phase form (``u = R sin(theta)``,
``r u' = R cos(theta)``), which stays bounded in both the oscillatory and the
exponential regimes, so no Bessel-function library is needed.  Eigenvalues are
the sign changes of a boundary functional, located on a scan grid and refined
by vectorised multisection to a certified bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

RTOL = 1e-11
ATOL = 1e-12
BRACKET_RTOL = 1e-10


class Kind(str, Enum):
    FAR_FIELD = "farfield"
    NEAR_FIELD = "nearfield"
    FULL_PROBLEM = "full"


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class DispersionProblem:
    kind: Kind
    sigma_plus: float = 1.0
    sigma_minus: float = -2.5
    a_c: float = 0.25
    delta: float = 1.0
    m: int = 0
    r_inf_factor: float = 40.0

    def __post_init__(self):
        if self.m < 0:
            raise OracleError("angular mode must be >= 0")
        if self.sigma_plus <= 0:
            raise OracleError("sigma_plus must be positive")
        if self.kind != Kind.FAR_FIELD:
            if self.sigma_minus >= 0:
                raise OracleError("sigma_minus must be negative")
            if self.sigma_minus == -self.sigma_plus:
                raise OracleError("contrast kappa = -1 is excluded")
            if not self.a_c > 0:
                raise OracleError("inclusion radius must be positive")
        if self.kind == Kind.FULL_PROBLEM and not (0 < self.delta * self.a_c < 1):
            raise OracleError("inclusion must lie inside the unit disk")

    def with_mode(self, m: int) -> "DispersionProblem":
        return DispersionProblem(self.kind, self.sigma_plus, self.sigma_minus, self.a_c,
                                 self.delta, m, self.r_inf_factor)


@dataclass(frozen=True)
class Root:
    value: float
    m: int
    index: int
    multiplicity: int
    bracket: tuple

    @property
    def bracket_width(self) -> float:
        return abs(self.bracket[1] - self.bracket[0])


@dataclass(frozen=True)
class ModeSpectrum:
    m: int
    roots: tuple


def _regular_start(m: int, k: np.ndarray, r0: float) -> np.ndarray:
    """Pruefer phase at r0 of the solution regular at the origin (power series)."""
    k = np.asarray(k, dtype=float)
    c = np.ones_like(k)
    su = np.ones_like(k)
    sp = np.full_like(k, float(m))
    x = r0 * r0
    for j in range(1, 400):
        c = c * (-k * x / (4.0 * j * (j + m)))
        su = su + c
        sp = sp + (m + 2 * j) * c
        if np.all(np.abs(c) * (m + 2 * j) < 1e-17 * (np.abs(su) + np.abs(sp))):
            break
    return np.arctan2(su, sp)


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _integrate(theta0, r0, r1, m: int, k, rtol: float = RTOL, atol: float = ATOL) -> np.ndarray:
    """Integrate the phase equation from r0 to r1 (arrays, one problem per entry).

    The radius is parametrised as ``r = r0 + t (r1 - r0)``, ``t in [0, 1]``, so
    every entry shares the same adaptive step in ``t``.
    """
    th = np.array(theta0, dtype=float, copy=True)
    r0 = np.broadcast_to(np.asarray(r0, dtype=float), th.shape)
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), th.shape)
    k = np.broadcast_to(np.asarray(k, dtype=float), th.shape)
    span = r1 - r0
    m2 = float(m * m)
    if not np.any(span):
        return th

    def f(t, y):
        r = r0 + t * span
        s, c = np.sin(y), np.cos(y)
        return span * (c * c / r - (m2 / r - k * r) * s * s)

    t, h = 0.0, 1e-3
    stages = [None] * 7
    stages[0] = f(0.0, th)
    n_steps = 0
    while t < 1.0:
        h = min(h, 1.0 - t)
        for i in range(1, 7):
            y = th + h * sum(a * stages[j] for j, a in enumerate(_A[i]) if a)
            stages[i] = f(t + _C[i] * h, y)
        y5 = th + h * sum(b * stages[j] for j, b in enumerate(_B5) if b)
        y4 = th + h * sum(b * stages[j] for j, b in enumerate(_B4) if b)
        err = float(np.max(np.abs(y5 - y4) / (atol + rtol * np.abs(y5))))
        if err <= 1.0:
            t += h
            th = y5
            stages[0] = stages[6]  # first-same-as-last
        n_steps += 1
        if n_steps > 200000:
            raise OracleError("radial integration did not finish (step budget exhausted)")
        h *= min(5.0, max(0.2, 0.9 * (err + 1e-300) ** -0.2))
    if not np.all(np.isfinite(th)):
        raise OracleError("non-finite phase in radial integration")
    return th


def _regular_phase(m: int, k, r_end: float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    kmax = float(np.max(np.abs(k))) if k.size else 0.0
    r0 = min(0.05 * r_end, 0.5 / math.sqrt(kmax)) if kmax else 0.05 * r_end
    th = _regular_start(m, k, r0)
    return _integrate(th, r0, r_end, m, k)


def _jump(theta, ratio: float):
    """Phase after the flux condition ``p_out = ratio * p_in`` (u continuous)."""
    t = np.arctan2(np.sin(theta), ratio * np.cos(theta))
    return t + 2 * np.pi * np.round((theta - t) / (2 * np.pi))


def radial_shoot_batch(problem: DispersionProblem, lam) -> np.ndarray:
    """Boundary functional for many spectral parameters at once (see ``radial_shoot``)."""
    p, m = problem, problem.m
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if not np.all(np.isfinite(lam)):
        raise OracleError("non-finite spectral parameter")
    if p.kind == Kind.FAR_FIELD:
        if np.any(lam <= 0):
            raise OracleError("far-field parameter must be positive")
        return np.sin(_regular_phase(m, lam / p.sigma_plus, 1.0))
    if p.kind == Kind.FULL_PROBLEM:
        if np.any(lam == 0):
            raise OracleError("full-problem parameter must be nonzero")
        ri = p.delta * p.a_c
        th = _regular_phase(m, lam / p.sigma_minus, ri)
        th = _jump(th, p.sigma_minus / p.sigma_plus)
        th = _integrate(th, ri, 1.0, m, lam / p.sigma_plus)
        return np.sin(th)
    if np.any(lam >= 0):
        raise OracleError("near-field parameter must be negative")
    th_in = _regular_phase(m, lam / p.sigma_minus, p.a_c)
    k_out = np.sqrt(-lam / p.sigma_plus)
    r_inf = p.a_c + (p.r_inf_factor + m) / k_out
    # decaying solution: r u'/u from the large-argument expansion of K_m
    z = 8 * k_out * r_inf
    mu = 4.0 * m * m
    ratio = -k_out * r_inf - 0.5 + (mu - 1) / z
    th_out = np.arctan2(np.ones_like(ratio), ratio)
    th_out = _integrate(th_out, r_inf, p.a_c, m, lam / p.sigma_plus)
    ui, fi = np.sin(th_in), p.sigma_minus * np.cos(th_in)
    uo, fo = np.sin(th_out), p.sigma_plus * np.cos(th_out)
    return (ui * fo - uo * fi) / (np.hypot(ui, fi) * np.hypot(uo, fo))


def radial_shoot(problem: DispersionProblem, lam: float) -> float:
    """Boundary functional whose zeros in ``lam`` are eigenvalues of mode ``problem.m``.

    Dirichlet kinds return ``u(1)/|(u(1), r u'(1))|``; the near-field kind
    returns the normalised Wronskian mismatch at the interface between the
    regular interior solution and the exterior solution decaying like
    ``exp(-r sqrt(|lam|/sigma_plus))``.
    """
    return float(radial_shoot_batch(problem, [lam])[0])


def _refine(f, lo: np.ndarray, hi: np.ndarray, flo: np.ndarray, rtol: float, n_sub: int = 8):
    """Vectorised multisection of sign-change brackets down to relative width ``rtol``."""
    lo, hi, flo = lo.copy(), hi.copy(), flo.copy()
    while True:
        width = np.abs(hi - lo)
        act = np.flatnonzero(width > rtol * np.maximum(np.abs(lo), np.abs(hi)))
        if act.size == 0:
            break
        frac = np.arange(1, n_sub + 1) / (n_sub + 1)
        pts = lo[act, None] + frac[None, :] * (hi[act] - lo[act])[:, None]
        vals = f(pts.ravel()).reshape(pts.shape)
        for r, i in enumerate(act):
            xs = np.r_[lo[i], pts[r], hi[i]]
            fs = np.r_[flo[i], vals[r], np.nan]
            for q in range(n_sub + 1):
                if fs[q] == 0:
                    lo[i] = hi[i] = xs[q]
                    break
                if q == n_sub or np.sign(fs[q + 1]) != np.sign(fs[q]):
                    lo[i], hi[i], flo[i] = xs[q], xs[q + 1], fs[q]
                    break
    return 0.5 * (lo + hi), lo, hi


def mode_roots(problem: DispersionProblem, lo: float, hi: float, sign: float | None = None,
               n_grid: int = 48, max_grid: int = 3073) -> ModeSpectrum:
    """All roots of the boundary functional with ``lo <= |lam| <= hi``.

    ``sign`` selects the branch (defaults to negative for the near field and
    positive otherwise).  The scan grid is geometric and doubled (nested) until
    the number of sign changes is unchanged between two successive grids.
    """
    if sign is None:
        sign = -1.0 if problem.kind == Kind.NEAR_FIELD else 1.0

    def f(x):
        return radial_shoot_batch(problem, sign * np.asarray(x))

    prev = None
    n = n_grid
    while True:
        grid = np.geomspace(lo, hi, n)
        vals = f(grid)
        idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
        if len(idx) == prev or 2 * n - 1 > max_grid:
            break
        prev = len(idx)
        n = 2 * n - 1
    mult = 1 if problem.m == 0 else 2
    if idx.size == 0:
        return ModeSpectrum(problem.m, ())
    x, blo, bhi = _refine(f, grid[idx], grid[idx + 1], vals[idx], BRACKET_RTOL)
    roots = []
    for i in range(len(idx)):
        br = tuple(sorted((sign * blo[i], sign * bhi[i])))
        roots.append(Root(float(sign * x[i]), problem.m, i + 1, mult, br))
    return ModeSpectrum(problem.m, tuple(roots))


def _collect(problem: DispersionProblem, sign: float, count: int, lo: float, ceiling: float):
    """Smallest-modulus roots with the given sign, merged over angular modes.

    Modes are swept upward until two consecutive modes have no root below the
    ceiling; the ceiling is doubled until ``count`` eigenvalues (with
    multiplicity) are available.
    """
    while True:
        roots = []
        empty_run = 0
        m = 0
        while empty_run < 2:
            ms = mode_roots(problem.with_mode(m), lo, ceiling, sign)
            roots.extend(ms.roots)
            empty_run = empty_run + 1 if not ms.roots else 0
            m += 1
        roots.sort(key=lambda r: (abs(r.value), r.m))
        if sum(r.multiplicity for r in roots) >= count:
            return roots
        ceiling *= 2.0


def expand(roots) -> list:
    """Eigenvalue list with multiplicities repeated."""
    out = []
    for r in roots:
        out.extend([r.value] * r.multiplicity)
    return out


def farfield_disk_eigenvalues(sigma_plus: float, count: int) -> list:
    """First ``count`` Dirichlet eigenvalues of ``-sigma_plus * Laplacian`` on the unit disk,
    as Root records (multiplicity 2 for m >= 1)."""
    if sigma_plus <= 0 or count < 1:
        raise OracleError("need sigma_plus > 0 and count >= 1")
    prob = DispersionProblem(Kind.FAR_FIELD, sigma_plus)
    # first eigenvalue is j01^2 ~ 5.78 (Faber-Krahn); Weyl count ~ L/4
    ceiling = sigma_plus * max(30.0, 6.0 * count)
    return _trim(_collect(prob, 1.0, count, 0.5 * sigma_plus, ceiling), count)


def nearfield_circle_eigenvalues(sigma_plus: float, sigma_minus: float, a_c: float, count: int) -> list:
    """The ``count`` negative near-field eigenvalues of smallest modulus (circular inclusion of radius a_c)."""
    prob = DispersionProblem(Kind.NEAR_FIELD, sigma_plus, sigma_minus, a_c)
    scale = max(sigma_plus, -sigma_minus) / a_c ** 2
    return _trim(_collect(prob, -1.0, count, 1e-3 * scale, 40.0 * scale), count)


@dataclass(frozen=True)
class EigenList:
    positive: list
    negative: list

    def values(self):
        return expand(self.positive), expand(self.negative)


def fullproblem_disk_eigenvalues(sigma_plus: float, sigma_minus: float, a_c: float, delta: float,
                                 count_pos: int, count_neg: int) -> EigenList:
    prob = DispersionProblem(Kind.FULL_PROBLEM, sigma_plus, sigma_minus, a_c, delta)
    pos = neg = []
    if count_pos:
        pos = _trim(_collect(prob, 1.0, count_pos, 0.05 * sigma_plus,
                             sigma_plus * max(30.0, 6.0 * count_pos)), count_pos)
    if count_neg:
        rho = delta * a_c
        scale = max(sigma_plus, -sigma_minus) / rho ** 2
        neg = _trim(_collect(prob, -1.0, count_neg, 1e-3 * scale, 40.0 * scale), count_neg)
    return EigenList(pos, neg)


def _trim(roots, count):
    out, tot = [], 0
    for r in roots:
        if tot >= count:
            break
        out.append(r)
        tot += r.multiplicity
    return out
