import math

import numpy as np
import pytest

from plasmonic_eigs.contrast import Verdict, check_admissible, critical_contrasts


def test_first_values_for_two_to_one_ellipse():
    cs = critical_contrasts(0.5, 0.25, 4)
    # q = (a - b) / (a + b) = 1/3; eta_k = (q^k + 1) / (q^k - 1)
    assert cs.eta[0] == -2.0
    assert cs.eta[1] == -1.25
    np.testing.assert_allclose(cs.eta, [(3 ** -k + 1) / (3 ** -k - 1) for k in range(1, 5)], rtol=1e-15)
    np.testing.assert_allclose(cs.inv_eta, 1 / cs.eta, rtol=1e-15)
    assert cs.accumulation == -1.0


def test_circle_reduces_to_minus_one():
    cs = critical_contrasts(0.25, 0.25)
    np.testing.assert_array_equal(cs.values(), [-1.0])


def test_large_k_no_overflow():
    cs = critical_contrasts(0.5, 0.25, 500)
    assert np.all(np.isfinite(cs.eta))
    assert cs.eta[-1] == -1.0


def test_axis_order_irrelevant():
    np.testing.assert_allclose(critical_contrasts(0.25, 0.5, 8).eta, critical_contrasts(0.5, 0.25, 8).eta)


@pytest.mark.parametrize("kappa,verdict", [(-2.5, Verdict.ADMISSIBLE), (-2.0, Verdict.CRITICAL),
                                           (-1.0, Verdict.CRITICAL), (-1.26, Verdict.NEAR_CRITICAL),
                                           (-10.0, Verdict.ADMISSIBLE)])
def test_verdicts(kappa, verdict):
    assert check_admissible(kappa).verdict == verdict


def test_distance_reported():
    r = check_admissible(-2.5)
    assert r.ok and r.distance == pytest.approx(0.5) and r.nearest == -2.0


@pytest.mark.parametrize("kappa", [0.0, 1.0, math.nan, math.inf])
def test_rejects_non_negative_or_nonfinite(kappa):
    with pytest.raises(ValueError):
        check_admissible(kappa)


@pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, -1.0), (0.5, 0.25, 0)])
def test_rejects_bad_shape(args):
    with pytest.raises(ValueError):
        critical_contrasts(*args)
