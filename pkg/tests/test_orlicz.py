import math

import numpy as np
import pytest

from sdlab.grid import Grid, GridScalarField
from sdlab.orlicz import OrliczOverflowError, embedding_check, gauge_norm, modular


def unit_indicator():
    # h = 1/8, an 8x8x8 block of nodes has measure exactly one
    g = Grid(3, 1.0, 17)
    v = np.zeros(g.shape)
    v[4:12, 4:12, 4:12] = 1.0
    return GridScalarField(v, g)


def test_indicator_gauge_norm_closed_form():
    res = gauge_norm(unit_indicator(), tol=1e-12)
    assert abs(res.value - 1.0 / math.acosh(2.0)) < 1e-9
    assert modular(unit_indicator(), res.value) <= 1.0 + 1e-12


def test_zero_field():
    g = Grid(3, 1.0, 17)
    assert gauge_norm(GridScalarField(np.zeros(g.shape), g)).value == 0.0


def test_modular_small_argument_accuracy():
    f = unit_indicator()
    # cosh(x) - 1 = x^2/2 + x^4/24 + ...
    c = 1e6
    assert math.isclose(modular(f, c), 0.5 / c ** 2, rel_tol=1e-10)


def test_overflow_guard():
    f = unit_indicator()
    with pytest.raises(OrliczOverflowError):
        modular(f, 1e-3)
    # the bracketing path stays finite for huge amplitudes
    big = GridScalarField(f.values * 1e4, f.grid)
    assert math.isclose(gauge_norm(big).value, 1e4 / math.acosh(2.0), rel_tol=1e-7)


def test_embedding_rows():
    rep = embedding_check(unit_indicator(), m_max=4)
    assert rep["passed"]
    # ||1||_{2m} = 1 for a unit-measure set
    for row in rep["rows"]:
        assert math.isclose(row["norm_2m"], 1.0, rel_tol=1e-12)
        assert math.isclose(row["factor"], math.factorial(2 * row["m"]) ** (1 / (2 * row["m"])))
