import math

import numpy as np
import pytest

from sdlab.drift_fields import DriftSpec, mollify
from sdlab.errors import ConfigurationError, ParameterError
from sdlab.grid import Grid, GridScalarField, GridVectorField, apply_dirichlet
from sdlab.parabolic import (EvolutionConfig, ResolventProblem, TestFunction, evolve, fit_slope,
                             gaussian, heat_gaussian, in_contraction_interval,
                             indicator_ball_measure, lp_rate, norm_certificates,
                             orlicz_constants, orlicz_energy_certificate, point_mass, resolvent,
                             resolvent_operator, semigroup_cauchy, trotter_limit_check,
                             weak_solution_residual)


@pytest.fixture(scope="module")
def hardy33():
    g = Grid(3, 2.0, 33)
    return g, mollify(DriftSpec(3, "hardy", delta=1.0), 0.25, g)


def test_heat_flow_matches_gaussian_and_converges():
    errs = []
    for N, tau in ((33, 4e-3), (65, 1e-3)):
        g = Grid(3, 3.0, N)
        run = evolve(gaussian(g, width=0.3), None, EvolutionConfig(tau=tau, T=0.1))
        ref = heat_gaussian(g, 0.1, width=0.3)
        errs.append(float(np.abs(run.final.values - ref.values).max()))
    # halving h and quartering tau: second-order decay of the max error
    assert errs[1] < 5e-3
    assert errs[0] / errs[1] > 3.0


def test_uniform_step_and_records():
    cfg = EvolutionConfig(tau=0.03, T=0.1, snapshot_every=2)
    assert cfg.steps == 4 and math.isclose(cfg.step, 0.025)
    g = Grid(3, 1.0, 17)
    run = evolve(gaussian(g), None, cfg)
    assert len(run.times) == 5
    assert [k for k, _ in run.snapshots] == [0, 2, 4]
    assert run.max_principle()["passed"]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EvolutionConfig(tau=0.0, T=1.0)
    with pytest.raises(ConfigurationError):
        EvolutionConfig(tau=0.1, T=1.0, cfl_safety=2.0)


def test_cfl_violation_raises(hardy33):
    g, b = hardy33
    tau = 2.0 * g.h / b.l1_speed()
    with pytest.raises(ConfigurationError):
        evolve(gaussian(g), b, EvolutionConfig(tau=tau, T=10 * tau))


def test_drift_run_keeps_bounds_and_metadata(hardy33):
    g, b = hardy33
    tau = 0.9 * g.h / b.l1_speed()
    run = evolve(gaussian(g, width=0.4), b, EvolutionConfig(tau=tau, T=0.05), meta={"x": 1})
    mp = run.max_principle()
    assert mp["passed"] and mp["min_u"] >= 0.0
    assert run.meta["x"] == 1 and len(run.meta["drift_fingerprint"]) == 16


def test_lp_rate_cases():
    assert lp_rate(3.0, 1.0, 0.0) == 0.0
    assert lp_rate(3.0, 1.0, 2.0) == 2.0 / 3.0
    assert lp_rate(3.0, 0.0, 2.0) == 2.0 / 8.0
    assert in_contraction_interval(2.0, 1.0)
    assert not in_contraction_interval(1.5, 1.0)
    assert not in_contraction_interval(10.0, 4.0)


def test_fit_slope_power_law():
    t = np.linspace(0.1, 1.0, 10)
    assert math.isclose(fit_slope(t, 3 * t ** -1.5), -1.5, rel_tol=1e-12)


def test_norm_certificates_skip_outside_interval(hardy33):
    g, b = hardy33
    tau = 0.9 * g.h / b.l1_speed()
    cfg = EvolutionConfig(tau=tau, T=0.05, record_p=(1.5, 2.0, 3.0))
    run = evolve(gaussian(g, width=0.35), b, cfg, meta={"delta": 1.0, "c": 0.0})
    rep = norm_certificates(run, [1.5, 2, 3], [])
    assert rep["contraction"][0]["applicable"] is False
    assert all(r["passed"] for r in rep["contraction"][1:])
    with pytest.raises(ParameterError):
        norm_certificates(run, [5], [])


def test_point_mass_has_unit_mass():
    g = Grid(3, 1.0, 17)
    assert math.isclose(point_mass(g).integral(), 1.0)
    with pytest.raises(ParameterError):
        point_mass(g, [1.0, 0, 0])


def test_resolvent_without_drift_is_exact():
    g = Grid(3, 1.0, 17)
    f = gaussian(g, width=0.3)
    u = resolvent(ResolventProblem(2.0, f), g)
    res = resolvent_operator(u.values, 2.0, None, g) - f.values
    assert np.abs(res).max() < 1e-12


def test_resolvent_with_drift(hardy33):
    g, b = hardy33
    f = gaussian(g, width=0.4)
    u = resolvent(ResolventProblem(1.0, f, b), g, tol=1e-10)
    res = resolvent_operator(u.values, 1.0, b, g) - f.values
    assert np.linalg.norm(res) / np.linalg.norm(f.values) < 1e-9
    assert u.values.min() >= -1e-12
    assert u.norm(math.inf) <= f.norm(math.inf)


def test_resolvent_rejects_nonpositive_mu():
    g = Grid(3, 1.0, 17)
    with pytest.raises(ParameterError):
        ResolventProblem(0.0, gaussian(g))


def test_orlicz_constants_formula():
    c = orlicz_constants(3, 0.5, 1.0, theta=0.25)
    assert c["c5"] == 0.5 + 8.0 and c["a"] == 5.0
    assert math.isclose(c["ball_measure"], 4 / 3 * math.pi * 125)
    assert c["lambda"] == c["c5"] / 2 and math.isclose(c["G"], c["c5"] * c["ball_measure"])
    g = Grid(3, 2.0, 17)
    # grid measure of a ball larger than the box is the box itself
    assert math.isclose(indicator_ball_measure(g, 100.0), g.cell_volume * 17 ** 3)


def test_orlicz_energy_certificate_needs_radius():
    g = Grid(3, 1.0, 17)
    run = evolve(gaussian(g), None, EvolutionConfig(tau=0.01, T=0.02, snapshot_every=1))
    with pytest.raises(ConfigurationError):
        orlicz_energy_certificate(run)


def test_orlicz_energy_certificate_compact_hardy():
    g = Grid(3, 2.0, 25)
    spec = DriftSpec(3, "compact_hardy", delta=4.0, R1=1.0)
    b = mollify(spec, 2 * g.h, g)
    tau = 0.9 * g.h / b.l1_speed()
    run = evolve(gaussian(g, width=0.4), b, EvolutionConfig(tau=tau, T=0.05, snapshot_every=2),
                 meta={"R": 1.0, "c": 0.0})
    rep = orlicz_energy_certificate(run)
    assert rep["passed"]
    assert rep["slack"]["star"] == 0.0


def test_semigroup_cauchy_structure():
    g = Grid(3, 2.0, 33)
    spec = DriftSpec(3, "compact_hardy", delta=4.0, R1=1.0)
    drifts = [mollify(spec, e, g) for e in (1.0, 0.5, 0.25)]
    tau = 0.9 * g.h / max(d.l1_speed() for d in drifts)
    rep = semigroup_cauchy(drifts, gaussian(g, [0.2, 0, 0], width=0.4),
                           EvolutionConfig(tau=tau, T=0.03), sample_every=3)
    assert len(rep["table"]) == 3
    assert rep["orlicz_decreasing"] and rep["grad_decreasing"]
    with pytest.raises(ConfigurationError):
        semigroup_cauchy(drifts[:2], gaussian(g), EvolutionConfig(tau=tau, T=0.03))


def test_trotter_conditions(hardy33):
    g, _ = hardy33
    spec = DriftSpec(3, "hardy", delta=1.0)
    drifts = [mollify(spec, e, g) for e in (1.0, 0.5, 0.25)]
    r = g.radius() / 0.6
    bump = np.where(r < 1, np.exp(1 - 1 / (1 - np.minimum(r, 0.999) ** 2)), 0.0)
    rep = trotter_limit_check(drifts, [10, 100, 1000], GridScalarField(apply_dirichlet(bump), g))
    assert rep["condition1_passed"] and rep["condition3_passed"]


def test_weak_residual_small_and_shrinking():
    g = Grid(3, 1.0, 17)
    b = mollify(DriftSpec(3, "hardy", delta=1.0), 2 * g.h, g)
    psi = [TestFunction(0.02, 0.08, (0.0, 0.0, 0.0), 0.5)]
    rels = []
    for tau in (0.005, 0.0025, 0.00125):
        run = evolve(gaussian(g, width=0.3), b, EvolutionConfig(tau=tau, T=0.1, snapshot_every=1))
        rep = weak_solution_residual(run, b, psi)
        rels.append(rep["rows"][0]["normalized"])
    assert rels[-1] < 5e-2
    assert rels[2] < rels[1]


def test_weak_residual_requires_every_step():
    g = Grid(3, 1.0, 17)
    run = evolve(gaussian(g), None, EvolutionConfig(tau=0.01, T=0.05))
    with pytest.raises(ConfigurationError):
        weak_solution_residual(run, None, [])
