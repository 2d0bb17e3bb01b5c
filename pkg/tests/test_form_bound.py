import math

import numpy as np
import pytest

from sdlab.drift_fields import DriftSpec, sample_drift
from sdlab.errors import ParameterError
from sdlab.form_bound import (TestFunctionFamily, estimate_c, hardy_reference,
                              quasi_contraction_interval, rayleigh_delta, verify_form_bound)
from sdlab.grid import Grid, GridVectorField


def _constant_drift(grid, beta):
    v = np.zeros((3,) + grid.shape)
    v[0] = beta
    return GridVectorField(v, grid)


def test_constant_drift_matches_discrete_eigenvalue():
    # |b|^2 = beta^2 everywhere: delta(lam) = beta^2 / (lam_min(-Delta_h) + lam)
    g = Grid(3, 1.0, 17)
    beta = 0.7
    lam_min = 3 * 4.0 / g.h ** 2 * math.sin(math.pi / (2 * (g.N - 1))) ** 2
    for lam in (0.0, 2.0):
        est = rayleigh_delta(_constant_drift(g, beta), lam)
        assert math.isclose(est.delta_est, beta ** 2 / (lam_min + lam), rel_tol=1e-6)


def test_zero_drift_gives_zero():
    g = Grid(3, 1.0, 17)
    assert rayleigh_delta(_constant_drift(g, 0.0)).delta_est == 0.0


def test_negative_lambda_rejected():
    g = Grid(3, 1.0, 17)
    with pytest.raises(ParameterError):
        rayleigh_delta(_constant_drift(g, 1.0), -1.0)


def test_hardy_estimate_below_sharp_constant():
    g = Grid(3, 2.0, 24)
    est = rayleigh_delta(sample_drift(DriftSpec(3, "hardy", delta=1.0), g))
    assert 0.0 < est.delta_est < 1.0
    d = est.to_dict(family_worst_ratio=0.3)
    assert d["family_worst_ratio"] == 0.3 and d["lambda"] == 0.0


def test_estimate_c_returns_first_admissible_lambda():
    g = Grid(3, 1.0, 17)
    b = _constant_drift(g, 3.0)
    res = estimate_c(b, 0.5, lambdas=[0.0, 1.0, 15.0, 100.0])
    lam_min = 3 * 4.0 / g.h ** 2 * math.sin(math.pi / (2 * (g.N - 1))) ** 2
    # 9 / (lam_min + lam) <= 0.5 first at lam = 15
    assert 9 / lam_min > 0.5 and 9 / (lam_min + 1) > 0.5 and 9 / (lam_min + 15) <= 0.5
    assert res["c"] == 15.0


def test_verify_form_bound_with_generous_declaration():
    g = Grid(3, 1.0, 24)
    b = sample_drift(DriftSpec(3, "hardy", delta=1.0), g)
    fam = TestFunctionFamily("gaussians", widths=[0.2, 0.4])
    assert verify_form_bound(b, 1.0, 0.0, fam)["passed"]
    assert not verify_form_bound(b, 0.01, 0.0, fam)["passed"]


def test_family_validation():
    with pytest.raises(ParameterError):
        TestFunctionFamily("sines")


def test_reference_metadata():
    assert hardy_reference(3, 2.0) == (2.0, 0.0, 36.0)
    assert hardy_reference(4, 1.0)[2] == 16.0
    assert quasi_contraction_interval(1.0) == 2.0
    assert quasi_contraction_interval(4.0) == math.inf
