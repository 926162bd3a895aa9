"""Critical contrasts for an elliptical inclusion.

For an ellipse with semi-axes ``a``, ``b`` the near-field transmission operator
fails to be injective when the contrast ``sigma_minus / sigma_plus`` equals

    eta_k = (|a-b|^k + |a+b|^k) / (|a-b|^k - |a+b|^k),   k >= 1,

or one of the inverses ``1/eta_k``.  Both families accumulate at ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

K_MAX_DEFAULT = 64
# distances below this count as "on the set"
CRITICAL_EPS = 1e-12


@dataclass(frozen=True)
class CriticalSet:
    a: float
    b: float
    k_max: int
    eta: np.ndarray          # eta_1 .. eta_kmax
    inv_eta: np.ndarray
    accumulation: float = -1.0

    def values(self) -> np.ndarray:
        """All distinct critical contrasts, sorted, with the accumulation point."""
        return np.unique(np.concatenate([self.eta, self.inv_eta, [self.accumulation]]))

    def distance(self, kappa: float) -> float:
        return float(np.min(np.abs(self.values() - kappa)))


def critical_contrasts(a: float, b: float, k_max: int = K_MAX_DEFAULT) -> CriticalSet:
    """``eta_k`` for ``k = 1..k_max``.

    The direct quotient is used while both powers are normal floats (it is
    exact for ``eta_1 = -a/b`` with dyadic axes); beyond that the ratio form
    ``t = (|a-b|/|a+b|)^k``, ``eta = (t+1)/(t-1)`` avoids overflow/underflow.
    For a circle (``a == b``) every ``eta_k`` is ``-1``.
    """
    if not (a > 0 and b > 0):
        raise ValueError("semi-axes must be positive")
    if int(k_max) != k_max or k_max < 1:
        raise ValueError("k_max must be a positive integer")
    k = np.arange(1, int(k_max) + 1, dtype=float)
    d, s = abs(a - b), a + b
    q = d / s
    t = q ** k  # underflows cleanly to 0 for large k
    eta = (t + 1.0) / (t - 1.0)
    with np.errstate(over="ignore", under="ignore"):
        dk, sk = d ** k, s ** k
    tiny = np.finfo(float).tiny
    direct = (dk > tiny) & np.isfinite(sk) & (sk > tiny)
    eta[direct] = (dk[direct] + sk[direct]) / (dk[direct] - sk[direct])
    return CriticalSet(float(a), float(b), int(k_max), eta, 1.0 / eta)


class Verdict(str, Enum):
    ADMISSIBLE = "admissible"
    CRITICAL = "critical"
    NEAR_CRITICAL = "near_critical"


@dataclass(frozen=True)
class Admissibility:
    verdict: Verdict
    distance: float
    nearest: float

    @property
    def ok(self) -> bool:
        return self.verdict != Verdict.CRITICAL


def check_admissible(kappa: float, a: float = 0.5, b: float = 0.25, tolerance: float = 0.05,
                     k_max: int = K_MAX_DEFAULT) -> Admissibility:
    """Classify a contrast by its distance to the truncated critical set."""
    if not np.isfinite(kappa):
        raise ValueError("contrast must be finite")
    if kappa >= 0:
        raise ValueError(f"contrast {kappa} is not sign-changing (need kappa < 0)")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    vals = critical_contrasts(a, b, k_max).values()
    i = int(np.argmin(np.abs(vals - kappa)))
    d = float(abs(vals[i] - kappa))
    if d < CRITICAL_EPS * max(1.0, abs(kappa)):
        v = Verdict.CRITICAL
    elif d < tolerance:
        v = Verdict.NEAR_CRITICAL
    else:
        v = Verdict.ADMISSIBLE
    return Admissibility(v, d, float(vals[i]))
