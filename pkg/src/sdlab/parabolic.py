"""Finite-difference solver for (d/dt - Delta + b . grad) u = 0 and its resolvent.

Space: the box ``[-L, L]^d`` with zero Dirichlet data, centred second-order
diffusion and first-order upwind advection. Time: IMEX Euler,

    (I - tau Delta_h) u^{k+1} = u^k - tau * b . grad_h u^k,

with the implicit part solved exactly by sine transforms. Under the CFL
condition ``tau * max_x sum_i |b_i(x)| <= h`` the explicit part is a convex
combination of neighbouring values and the implicit part is an inverse
M-matrix, so every step obeys the discrete maximum principle.

The certificate functions turn a :class:`SemigroupRun` into pass/fail reports
for the L^p quasi-contraction, the p -> q smoothing exponent, the Orlicz
energy inequalities, the Cauchy property of mollified approximations and the
Trotter conditions.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import _kernels
from .errors import ConfigurationError, ParameterError, SolverError
from .grid import (DirichletLaplacian, Grid, GridScalarField, GridVectorField,
                   apply_dirichlet, dirichlet_energy, field_fingerprint, forward_gradient,
                   laplacian,
                   lp_norm, save_field)
from .orlicz import gauge_norm, modular

log = logging.getLogger(__name__)

INF = math.inf


# ---------------------------------------------------------------------------
# initial data helpers
# ---------------------------------------------------------------------------

def gaussian(grid: Grid, center=None, width: float = 0.3, amplitude: float = 1.0) -> GridScalarField:
    """``amplitude * exp(-|x-c|^2 / (2 width^2))`` with zero boundary layer."""
    r = grid.radius(center)
    return GridScalarField(apply_dirichlet(amplitude * np.exp(-r * r / (2 * width * width))), grid)


def heat_gaussian(grid: Grid, t: float, center=None, width: float = 0.3,
                  amplitude: float = 1.0) -> GridScalarField:
    """Free-space heat flow of :func:`gaussian` at time ``t`` (no boundary correction)."""
    s2 = width * width + 2.0 * t
    r = grid.radius(center)
    vals = amplitude * (width * width / s2) ** (grid.d / 2.0) * np.exp(-r * r / (2 * s2))
    return GridScalarField(apply_dirichlet(vals), grid)


def point_mass(grid: Grid, x=None, mass: float = 1.0) -> GridScalarField:
    """Discrete delta: ``mass / h^d`` at the node nearest to ``x``."""
    x = np.zeros(grid.d) if x is None else np.asarray(x, dtype=float)
    idx = grid.nearest_index(x)
    if any(i in (0, grid.N - 1) for i in idx):
        raise ParameterError("point mass must sit on an interior node")
    vals = np.zeros(grid.shape)
    vals[idx] = mass / grid.cell_volume
    return GridScalarField(vals, grid)


def indicator_ball_measure(grid: Grid, radius: float, center=None) -> float:
    """Grid measure of ``B(center, radius)`` intersected with the box."""
    return float(np.count_nonzero(grid.radius(center) < radius) * grid.cell_volume)


# ---------------------------------------------------------------------------
# configuration and run record
# ---------------------------------------------------------------------------

@dataclass
class EvolutionConfig:
    """IMEX run parameters.

    ``record_p``: exponents whose norms are stored at every step (``inf`` allowed).
    ``snapshot_every``: keep ``u`` every that many steps (0 keeps only the ends).
    ``gauge_every``: Orlicz gauge norm every that many steps (0 disables).
    """

    tau: float
    T: float
    record_p: tuple = (1.0, 2.0, 3.0, 4.0, INF)
    snapshot_every: int = 0
    gauge_every: int = 0
    cfl_safety: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and self.T > 0):
            raise ConfigurationError("tau and T must be positive")
        if self.snapshot_every < 0 or self.gauge_every < 0:
            raise ConfigurationError("recording intervals must be non-negative")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigurationError("cfl_safety must lie in (0, 1]")

    @property
    def steps(self) -> int:
        return max(1, int(math.ceil(self.T / self.tau - 1e-9)))

    @property
    def step(self) -> float:
        """Uniform step actually used: ``T / steps <= tau``."""
        return self.T / self.steps

    def to_dict(self) -> dict:
        return {"tau": self.tau, "T": self.T, "steps": self.steps,
                "record_p": [_pkey(p) for p in self.record_p],
                "snapshot_every": self.snapshot_every, "gauge_every": self.gauge_every,
                "scheme": "imex-upwind"}


def _pkey(p):
    return "inf" if p == INF else float(p)


@dataclass
class SemigroupRun:
    """Time series of one IMEX run.

    ``norms[p][k]``, ``energy[k]`` (discrete ``||grad u(t_k)||^2``), ``mass[k]``
    and ``edge_max[k]`` (largest ``|u|`` next to the boundary, a truncation
    monitor) are stored for every step ``k = 0..steps``; ``snapshots`` holds
    ``(k, u)`` pairs.
    """

    grid: Grid
    config: EvolutionConfig
    times: np.ndarray
    norms: dict
    energy: np.ndarray
    mass: np.ndarray
    edge_max: np.ndarray
    snapshots: list
    gauge: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    bounds: tuple = (0.0, 0.0)
    extremes: tuple = (0.0, 0.0)

    @property
    def final(self) -> GridScalarField:
        return GridScalarField(self.snapshots[-1][1], self.grid)

    @property
    def initial(self) -> GridScalarField:
        return GridScalarField(self.snapshots[0][1], self.grid)

    def snapshot_times(self) -> np.ndarray:
        return np.array([self.times[k] for k, _ in self.snapshots])

    def max_principle(self, atol: float = 1e-12) -> dict:
        lo, hi = self.bounds
        mn, mx = self.extremes
        return {"min_f0": lo, "max_f0": hi, "min_u": mn, "max_u": mx,
                "lower_violation": max(0.0, lo - mn), "upper_violation": max(0.0, mx - hi),
                "passed": bool(mn >= lo - atol and mx <= hi + atol)}

    def manifest(self) -> dict:
        return {"grid": self.grid.to_dict(), "scheme": self.config.to_dict(),
                "drift": self.meta, "backend": _kernels.BACKEND,
                "snapshots": [int(k) for k, _ in self.snapshots]}

    def save(self, prefix) -> list:
        """Write ``prefix.json`` plus one raw float64 file per snapshot; returns the paths."""
        paths = []
        for k, u in self.snapshots:
            p = f"{prefix}_u{k:06d}.f64"
            save_field(p, GridScalarField(u, self.grid), {"t": float(self.times[k]), "step": int(k)})
            paths.append(p)
        with open(f"{prefix}.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
        paths.append(f"{prefix}.json")
        return paths


class _Stepper:
    """One IMEX step for a fixed drift, with the CFL check done up front."""

    def __init__(self, grid: Grid, drift: GridVectorField | None, tau: float, safety: float = 1.0):
        self.grid = grid
        self.tau = tau
        self.lap = DirichletLaplacian(grid)
        if drift is None or not np.any(drift.values):
            self.b = None
            speed = 0.0
        else:
            if drift.grid != grid:
                raise ConfigurationError("drift grid does not match the solution grid")
            if not np.all(np.isfinite(drift.values)):
                raise ConfigurationError("drift must be finite on the grid")
            self.b = np.ascontiguousarray(drift.values)
            speed = drift.l1_speed()
        self.speed = speed
        if tau * speed > safety * grid.h * (1 + 1e-12):
            raise ConfigurationError(
                f"CFL violated: tau*max sum|b_i| = {tau * speed:.4g} > h = {grid.h:.4g}; "
                f"need tau <= {safety * grid.h / speed:.4g}")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        rhs = u
        if self.b is not None:
            rhs = u - self.tau * _kernels.upwind_advection(u, self.b, self.grid.h)
        rhs = apply_dirichlet(np.array(rhs, copy=True))
        return self.lap.solve(rhs, 1.0, self.tau)


def evolve(f0: GridScalarField, drift: GridVectorField | None, cfg: EvolutionConfig,
           meta: dict | None = None, monitor=None) -> SemigroupRun:
    """Run the IMEX scheme from ``f0`` up to ``cfg.T``.

    ``monitor(k, t, u)`` is called after every step when given. Raises
    :class:`ConfigurationError` before stepping if the CFL condition fails.
    """
    grid = f0.grid
    tau = cfg.step
    stepper = _Stepper(grid, drift, tau, cfg.cfl_safety)
    u = apply_dirichlet(f0.values.copy())
    n = cfg.steps
    times = tau * np.arange(n + 1)
    ps = tuple(cfg.record_p)
    norms = {p: np.empty(n + 1) for p in ps}
    energy = np.empty(n + 1)
    mass = np.empty(n + 1)
    edge = np.empty(n + 1)
    edge_mask = _edge_mask(grid)
    snaps = []
    gauges = []
    bounds = (float(u.min()), float(u.max()))
    mn, mx = bounds

    def record(k, u):
        for p in ps:
            norms[p][k] = lp_norm(u, grid, p)
        energy[k] = dirichlet_energy(u, grid)
        mass[k] = float(np.sum(u) * grid.cell_volume)
        edge[k] = float(np.abs(u[edge_mask]).max())
        if cfg.gauge_every and k % cfg.gauge_every == 0:
            gauges.append((k, gauge_norm(GridScalarField(u, grid)).value))
        if (cfg.snapshot_every and k % cfg.snapshot_every == 0) or k in (0, n):
            snaps.append((k, u.copy()))

    record(0, u)
    for k in range(1, n + 1):
        u = stepper(u)
        mn = min(mn, float(u.min()))
        mx = max(mx, float(u.max()))
        record(k, u)
        if monitor is not None:
            monitor(k, times[k], u)
    if not all(np.all(np.isfinite(v)) for v in norms.values()):
        raise SolverError("non-finite norm recorded; the run blew up")
    md = dict(meta or {})
    md.setdefault("drift_sup", float(drift.sup()) if drift is not None else 0.0)
    md["drift_fingerprint"] = field_fingerprint(drift)
    return SemigroupRun(grid, cfg, times, norms, energy, mass, edge, snaps, gauges, md,
                        bounds, (mn, mx))


def _edge_mask(grid: Grid) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    inner = (slice(1, -1),) * grid.d
    m[inner] = True
    deep = np.zeros(grid.shape, dtype=bool)
    deep[(slice(2, -2),) * grid.d] = True
    return m & ~deep


# ---------------------------------------------------------------------------
# resolvent
# ---------------------------------------------------------------------------

@dataclass
class ResolventProblem:
    mu: float
    rhs: GridScalarField
    drift: GridVectorField | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError("mu must be positive")


def resolvent_operator(values: np.ndarray, mu: float, drift: GridVectorField | None,
                       grid: Grid) -> np.ndarray:
    """``(mu - Delta_h + b . grad_h) u`` on interior nodes, zero on the boundary layer."""
    u = apply_dirichlet(values.copy())
    out = mu * u - laplacian(u, grid)
    if drift is not None:
        out += _kernels.upwind_advection(u, np.ascontiguousarray(drift.values), grid.h)
    return apply_dirichlet(out)


def resolvent(prob: ResolventProblem, grid: Grid | None = None, tol: float = 1e-10,
              maxiter: int = 400, restart: int = 40) -> GridScalarField:
    """Solve ``(mu - Delta_h + b . grad_h) u = f`` by GMRES.

    The preconditioner is the exact inverse of ``mu - Delta_h``, so for
    ``b = 0`` one iteration suffices. Raises :class:`SolverError` with the
    residual history when the relative residual stays above ``tol``.
    """
    grid = grid or prob.rhs.grid
    mu = float(prob.mu)
    drift = prob.drift
    if drift is not None and not np.any(drift.values):
        drift = None
    core = grid.interior
    inner = (grid.N - 2,) * grid.d
    size = int(np.prod(inner))
    lap = DirichletLaplacian(grid)

    def embed(x):
        full = np.zeros(grid.shape)
        full[core] = x.reshape(inner)
        return full

    def matvec(x):
        return resolvent_operator(embed(x), mu, drift, grid)[core].ravel()

    def precond(x):
        return lap.solve(embed(x), mu)[core].ravel()

    f = apply_dirichlet(prob.rhs.values.copy())
    rhs = f[core].ravel()
    fn = float(np.linalg.norm(rhs))
    if fn == 0.0:
        return GridScalarField(np.zeros(grid.shape), grid)
    if drift is None:
        return GridScalarField(lap.solve(f, mu), grid)
    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=precond, dtype=float)
    history = []
    x0 = precond(rhs)
    x, info = gmres(A, rhs, x0=x0, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter, M=M,
                    callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    res = float(np.linalg.norm(matvec(x) - rhs)) / fn
    if info != 0 or res > tol * 10:
        raise SolverError(f"GMRES stalled: relative residual {res:.3e} (info={info})",
                          last_iterate=embed(x), history=history)
    return GridScalarField(embed(x), grid)


# ---------------------------------------------------------------------------
# L^p certificates
# ---------------------------------------------------------------------------

def lp_rate(p: float, delta: float, c: float) -> float:
    """Growth rate of the L^p quasi-contraction.

    ``c / (p sqrt(delta))`` for ``delta > 0``; for ``delta = 0`` the bounded-drift
    estimate ``c / (4 (p - 1))``; zero whenever ``c = 0``.
    """
    if c == 0:
        return 0.0
    if p == INF:
        return INF
    if delta > 0:
        return c / (p * math.sqrt(delta))
    return c / (4.0 * (p - 1.0)) if p > 1 else INF


def in_contraction_interval(p: float, delta: float) -> bool:
    if delta >= 4.0:
        return False
    if delta == 0:
        return p >= 1.0
    return p >= 2.0 / (2.0 - math.sqrt(delta)) - 1e-12


def fit_slope(t, y) -> float:
    """Least-squares slope of ``log y`` against ``log t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    return float(coef[0])


def norm_certificates(run: SemigroupRun, p_list=(), q_list=(), *, delta: float | None = None,
                      c: float | None = None, fit_window=None, slope_tol: float = 0.1,
                      rel_tol: float = 1e-2, p_source: float = 1.0) -> dict:
    """L^p quasi-contraction and p -> q smoothing-exponent checks.

    For every ``p`` in ``p_list``: ``max_t ||u(t)||_p e^{-omega t} / ||f||_p`` with
    ``omega = lp_rate(p, delta, c)``; passes iff at most ``1 + rel_tol``.
    Exponents outside the contraction interval are reported as not applicable.

    For every ``q`` in ``q_list`` the slope of ``log ||u(t)||_q`` against
    ``log t`` over ``fit_window`` is compared with ``-d/2 (1/p_source - 1/q)``;
    this is meaningful when ``f`` approximates a point mass.
    """
    delta = run.meta.get("delta", 0.0) if delta is None else delta
    c = run.meta.get("c", 0.0) if c is None else c
    c = 0.0 if c is None else c
    t = run.times
    rows = []
    ok = True
    for p in p_list:
        p = INF if p in ("inf", INF) else float(p)
        if p not in run.norms:
            raise ParameterError(f"run did not record the L^{p} norm")
        if not in_contraction_interval(p, delta):
            rows.append({"p": _pkey(p), "applicable": False, "passed": None})
            continue
        omega = lp_rate(p, delta, c)
        series = run.norms[p]
        f = series[0]
        ratio = series * np.exp(-omega * t) / f if f > 0 else np.zeros_like(series)
        worst = float(ratio.max())
        passed = worst <= 1.0 + rel_tol
        ok &= passed
        rows.append({"p": _pkey(p), "applicable": True, "omega": omega, "max_ratio": worst,
                     "argmax_t": float(t[int(np.argmax(ratio))]), "passed": bool(passed),
                     "series": [(float(tk), float(nk), float(f * math.exp(omega * tk)),
                                 float(rk)) for tk, nk, rk in zip(t, series, ratio)]})
    slopes = []
    for q in q_list:
        q = INF if q in ("inf", INF) else float(q)
        if q not in run.norms:
            raise ParameterError(f"run did not record the L^{q} norm")
        lo, hi = fit_window if fit_window is not None else (t[1], t[-1])
        sel = (t >= lo - 1e-15) & (t <= hi + 1e-15) & (t > 0)
        if np.count_nonzero(sel) < 3:
            raise ParameterError("fit window holds fewer than three time points")
        slope = fit_slope(t[sel], run.norms[q][sel])
        inv_q = 0.0 if q == INF else 1.0 / q
        expected = -run.grid.d / 2.0 * (1.0 / p_source - inv_q)
        err = abs(slope - expected) / abs(expected) if expected else abs(slope)
        passed = err <= slope_tol
        ok &= passed
        slopes.append({"p": p_source, "q": _pkey(q), "slope": slope, "expected": expected,
                       "rel_error": err, "window": [float(lo), float(hi)],
                       "passed": bool(passed)})
    return {"delta": delta, "c": c, "contraction": rows, "smoothing": slopes, "passed": bool(ok)}


# ---------------------------------------------------------------------------
# Orlicz energy certificate
# ---------------------------------------------------------------------------

def orlicz_constants(d: int, c4: float, R: float, theta: float = 0.25, grid: Grid | None = None,
                     bounded_part: GridVectorField | None = None, R1: float | None = None) -> dict:
    """``c5 = c(4) + 4 (d-1) R^{-2}``, ``a = 1 + 1/theta``, ``lambda`` and ``G``.

    ``|B_{aR}|`` is the grid measure of the ball inside the box when ``grid``
    is given, the Euclidean volume otherwise. With ``bounded_part`` (a bounded
    drift added to one supported in ``B_{R1}``) the modified constants
    ``lambda = c5/2 + ||b2||_inf^2 / 2`` and ``G = c5 |B_{a R1}| + ||b2||_2^2`` apply.
    """
    if R is None or not R > 0:
        raise ConfigurationError("the Orlicz certificate needs the drift's support radius R")
    a = 1.0 + 1.0 / theta
    c5 = c4 + 4.0 * (d - 1) / R ** 2
    rad = a * (R1 if (bounded_part is not None and R1) else R)
    if grid is not None:
        vol = indicator_ball_measure(grid, rad)
    else:
        vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * rad ** d
    lam = c5 / 2.0
    G = c5 * vol
    if bounded_part is not None:
        lam += bounded_part.sup() ** 2 / 2.0
        G += bounded_part.norm2() ** 2
    return {"c5": c5, "a": a, "ball_measure": vol, "lambda": lam, "G": G}


def orlicz_energy_certificate(run: SemigroupRun, c: float | None = None, lam: float | None = None,
                              *, theta: float = 0.25, tol: float = 5e-2,
                              bounded_part: GridVectorField | None = None) -> dict:
    """Check the three Orlicz energy inequalities along a run.

    With ``v = e^{-lambda t} u``:

    * star:  ``<cosh(v/c) - 1> + int_0^t ||grad(v/c)||^2 <= <cosh(f/c) - 1> + t c5 |B_{aR}|``
    * star1: ``int_0^t ||grad v||^2 <= (1 + t G) ||f||_Phi^2``
    * qc:    ``||u(t)||_Phi <= e^{(c5/2 + G) t} ||f||_Phi``

    Each row reports ``ratio = lhs / rhs``; the slack of an inequality is
    ``max(0, ratio - 1)`` and the certificate passes iff every slack is at most
    ``tol``. Time integrals use the right-endpoint rule matching the implicit
    step; the modular and gauge norm are evaluated at the snapshot times.
    Requires ``run.meta`` to hold ``R`` (support radius) and ``c`` (the
    constant ``c(4)``).
    """
    meta = run.meta
    R = meta.get("R")
    if R is None:
        raise ConfigurationError("run metadata lacks the support radius 'R'")
    c4 = meta.get("c") or 0.0
    consts = orlicz_constants(run.grid.d, c4, R, theta, run.grid, bounded_part, meta.get("R1"))
    lam = consts["lambda"] if lam is None else lam
    c5, G, vol = consts["c5"], consts["G"], consts["ball_measure"]
    grid = run.grid
    f = run.initial
    fphi = gauge_norm(f).value
    if c is None:
        c = fphi
    t = run.times
    tau = run.config.step
    weights = np.exp(-2.0 * lam * t)
    cum = np.concatenate([[0.0], np.cumsum(tau * weights[1:] * run.energy[1:])])
    rows = []
    worst = {"star": 0.0, "star1": 0.0, "qc": 0.0}
    if fphi == 0.0:
        for k, _ in run.snapshots:
            rows.append({"t": float(t[k]), "star_lhs": 0.0, "star_rhs": 0.0,
                         "star1_lhs": 0.0, "star1_rhs": 0.0, "qc_lhs": 0.0, "qc_rhs": 0.0})
        return {"constants": consts, "lambda": lam, "c": c, "rows": rows,
                "slack": worst, "tol": tol, "passed": True}
    m0 = modular(f, c)
    ratios = {"star": [], "star1": [], "qc": []}
    for k, u in run.snapshots:
        tk = float(t[k])
        v = GridScalarField(u * math.exp(-lam * tk), grid)
        s_lhs = modular(v, c) + cum[k] / c ** 2
        s_rhs = m0 + tk * c5 * vol
        s1_lhs = cum[k]
        s1_rhs = (1.0 + tk * G) * fphi ** 2
        q_lhs = gauge_norm(GridScalarField(u, grid)).value
        q_rhs = math.exp((c5 / 2.0 + G) * tk) * fphi
        row = {"t": tk, "star_lhs": s_lhs, "star_rhs": s_rhs, "star1_lhs": s1_lhs,
               "star1_rhs": s1_rhs, "qc_lhs": q_lhs, "qc_rhs": q_rhs}
        for key, lhs, rhs in (("star", s_lhs, s_rhs), ("star1", s1_lhs, s1_rhs),
                              ("qc", q_lhs, q_rhs)):
            r = lhs / rhs if rhs > 0 else (0.0 if lhs <= 0 else INF)
            row[key + "_ratio"] = r
            ratios[key].append(r)
            worst[key] = max(worst[key], r - 1.0, 0.0)
        rows.append(row)
    passed = all(s <= tol for s in worst.values())
    return {"constants": consts, "lambda": lam, "c": c, "gauge_f": fphi, "rows": rows,
            "max_ratio": {k: float(max(v)) for k, v in ratios.items()},
            "slack": worst, "tol": tol, "passed": bool(passed)}


# ---------------------------------------------------------------------------
# Cauchy property of mollified approximations
# ---------------------------------------------------------------------------

def semigroup_cauchy(drifts, f0: GridScalarField, cfg: EvolutionConfig, *, lam: float = 0.0,
                     labels=None, sample_every: int = 1, grad_factor: float = 2.0) -> dict:
    """Pairwise distances between runs driven by successive approximations ``b_n``.

    All runs advance in lock step with a common time step, so no snapshots
    are stored. For each pair ``(n, k)``: ``sup_s ||v_n(s) - v_k(s)||_Phi``
    (sampled every ``sample_every`` steps) and ``int_0^t ||grad(v_n - v_k)||^2``
    with ``v = e^{-lam t} u``. Passes iff both quantities decrease along
    consecutive pairs and the gradient term drops by at least ``grad_factor``
    from one consecutive pair to the next.
    """
    drifts = list(drifts)
    if len(drifts) < 3:
        raise ConfigurationError("semigroup_cauchy needs at least three drifts")
    grid = f0.grid
    tau = cfg.step
    steppers = [_Stepper(grid, b, tau, cfg.cfl_safety) for b in drifts]
    us = [apply_dirichlet(f0.values.copy()) for _ in drifts]
    n = len(drifts)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    sup_phi = {pr: 0.0 for pr in pairs}
    grad_int = {pr: 0.0 for pr in pairs}
    for k in range(1, cfg.steps + 1):
        us = [st(u) for st, u in zip(steppers, us)]
        w = math.exp(-lam * k * tau)
        grads = [forward_gradient(u, grid) for u in us]
        for (i, j) in pairs:
            dg = grads[i] - grads[j]
            grad_int[(i, j)] += tau * w * w * float(np.sum(dg * dg) * grid.cell_volume)
            if k % sample_every == 0 or k == cfg.steps:
                diff = GridScalarField(w * (us[i] - us[j]), grid)
                sup_phi[(i, j)] = max(sup_phi[(i, j)], gauge_norm(diff).value)
    labels = list(labels) if labels is not None else [str(i) for i in range(n)]
    table = [{"n": labels[i], "k": labels[j], "sup_orlicz": sup_phi[(i, j)],
              "grad_integral": grad_int[(i, j)]} for (i, j) in pairs]
    cons = [(i, i + 1) for i in range(n - 1)]
    phi_seq = [sup_phi[pr] for pr in cons]
    grad_seq = [grad_int[pr] for pr in cons]
    phi_dec = all(b < a for a, b in zip(phi_seq, phi_seq[1:]))
    grad_dec = all(b < a for a, b in zip(grad_seq, grad_seq[1:]))
    grad_ratios = [a / b if b > 0 else INF for a, b in zip(grad_seq, grad_seq[1:])]
    grad_fast = all(r >= grad_factor for r in grad_ratios)
    return {"labels": labels, "table": table, "consecutive_sup_orlicz": phi_seq,
            "consecutive_grad_integral": grad_seq, "grad_ratios": grad_ratios,
            "orlicz_decreasing": bool(phi_dec), "grad_decreasing": bool(grad_dec),
            "grad_factor_met": bool(grad_fast),
            "passed": bool(phi_dec and grad_dec and grad_fast)}


# ---------------------------------------------------------------------------
# Trotter conditions
# ---------------------------------------------------------------------------

def trotter_limit_check(drifts, mu_list, g: GridScalarField, *, compact_radius: float = 1.0,
                        far_radii=None, tol: float = 1e-10, contraction_tol: float = 1e-6) -> dict:
    """Resolvent-side conditions for convergence of the approximating semigroups.

    * condition 1: ``||mu (mu + Lambda_n)^{-1} g||_inf <= ||g||_inf (1 + contraction_tol)``
    * condition 2: ``sup_{|x| <= compact_radius}`` differences of consecutive resolvents shrink with ``n``
    * condition 3: ``sup_n ||mu (mu + Lambda_n)^{-1} g - g||_inf`` strictly decreasing in ``mu``

    Far-field values ``max_{|x| >= r} |mu u_n|`` are tabulated for ``r`` in
    ``far_radii`` and checked to decay with ``r``.
    """
    drifts = list(drifts)
    mu_list = sorted(float(m) for m in mu_list)
    grid = g.grid
    gsup = g.norm(INF)
    rad = grid.radius()
    inside = rad <= compact_radius
    if far_radii is None:
        far_radii = list(np.linspace(0.5, 0.9, 5) * grid.L)
    sols = {}
    cond1 = []
    ok1 = True
    for i, b in enumerate(drifts):
        for mu in mu_list:
            u = resolvent(ResolventProblem(mu, g, b), grid, tol=tol)
            mu_u = mu * u.values
            sols[(i, mu)] = mu_u
            s = float(np.abs(mu_u).max())
            passed = s <= gsup * (1.0 + contraction_tol)
            ok1 &= passed
            cond1.append({"n": i, "mu": mu, "sup": s, "g_sup": gsup, "passed": bool(passed)})
    cond2 = []
    ok2 = True
    for mu in mu_list:
        diffs = [float(np.abs(sols[(i, mu)] - sols[(i + 1, mu)])[inside].max())
                 for i in range(len(drifts) - 1)]
        dec = all(b <= a for a, b in zip(diffs, diffs[1:]))
        ok2 &= dec
        cond2.append({"mu": mu, "consecutive_sup_diff": diffs, "decreasing": bool(dec)})
    cond3 = []
    for mu in mu_list:
        vals = [float(np.abs(sols[(i, mu)] - g.values).max()) for i in range(len(drifts))]
        cond3.append({"mu": mu, "per_n": vals, "sup_n": max(vals)})
    sups = [r["sup_n"] for r in cond3]
    ok3 = all(b < a for a, b in zip(sups, sups[1:]))
    far = []
    ok_far = True
    for i in range(len(drifts)):
        for mu in mu_list:
            a = np.abs(sols[(i, mu)])
            vals = [float(a[rad >= r].max()) if np.any(rad >= r) else 0.0 for r in far_radii]
            dec = all(y <= x for x, y in zip(vals, vals[1:]))
            ok_far &= dec
            pos = [(r, v) for r, v in zip(far_radii, vals) if v > 0]
            rate = None
            if len(pos) >= 2:
                rr, vv = np.array(pos).T
                rate = -float(np.polyfit(rr, np.log(vv), 1)[0])
            far.append({"n": i, "mu": mu, "radii": [float(r) for r in far_radii],
                        "values": vals, "decay_rate": rate, "decaying": bool(dec)})
    return {"condition1": cond1, "condition2": cond2, "condition3": cond3, "far_field": far,
            "condition1_passed": bool(ok1), "condition2_passed": bool(ok2),
            "condition3_passed": bool(ok3), "far_field_passed": bool(ok_far),
            "passed": bool(ok1 and ok2 and ok3 and ok_far)}


# ---------------------------------------------------------------------------
# weak-solution residual
# ---------------------------------------------------------------------------

@dataclass
class TestFunction:
    """``psi(t, x) = chi((t - t0)/(t1 - t0)) * phi(|x - center| / radius)``.

    Both factors are the smooth bump ``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``
    (in time, ``s = 2 (t - t0)/(t1 - t0) - 1``).
    """

    __test__ = False

    t0: float
    t1: float
    center: tuple
    radius: float

    def check(self, run: SemigroupRun) -> None:
        grid = run.grid
        if not (0.0 < self.t0 < self.t1 < run.times[-1]):
            raise ParameterError("test function must be supported strictly inside (0, T)")
        c = np.asarray(self.center, dtype=float)
        if np.any(np.abs(c) + self.radius >= grid.L):
            raise ParameterError("test function must be supported strictly inside the box")

    def time_factor(self, t):
        s = 2.0 * (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0) - 1.0
        val = np.zeros_like(s)
        dval = np.zeros_like(s)
        m = np.abs(s) < 1.0
        q = 1.0 - s[m] ** 2
        val[m] = np.exp(1.0 - 1.0 / q)
        dval[m] = val[m] * (-2.0 * s[m] / q ** 2) * 2.0 / (self.t1 - self.t0)
        return val, dval

    def space_factor(self, grid: Grid):
        s = grid.radius(self.center) / self.radius
        out = np.zeros(grid.shape)
        m = s < 1.0
        out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
        return out


def weak_solution_residual(run: SemigroupRun, drift: GridVectorField | None, psi_family,
                           tol: float = 5e-2) -> dict:
    """Space-time residual of the weak formulation for each test function.

    ``R(psi) = -<u, d_t psi> + <grad u, grad psi> + <b . grad u, psi>`` with the
    trapezoid rule in time over the stored snapshots (all steps are needed,
    so the run must use ``snapshot_every=1``) and ``h^d`` sums in space. The
    report gives ``|R|`` and ``|R|`` divided by the sum of the three term
    magnitudes; a test function passes iff the normalized residual is at most ``tol``.
    """
    if run.config.snapshot_every != 1:
        raise ConfigurationError("weak_solution_residual needs snapshot_every=1")
    grid = run.grid
    dv = grid.cell_volume
    ks = np.array([k for k, _ in run.snapshots])
    t = run.times[ks]
    wts = np.full(len(t), run.config.step)
    wts[0] = wts[-1] = run.config.step / 2.0
    rows = []
    ok = True
    for psi in psi_family:
        psi.check(run)
        phi = psi.space_factor(grid)
        gphi = forward_gradient(phi, grid)
        chi, dchi = psi.time_factor(t)
        terms = np.zeros(3)
        for (k, u), wq, c0, c1 in zip(run.snapshots, wts, chi, dchi):
            if c0 == 0.0 and c1 == 0.0:
                continue
            gu = forward_gradient(u, grid)
            t1 = -c1 * float(np.sum(u * phi)) * dv
            t2 = c0 * float(np.sum(gu * gphi)) * dv
            t3 = 0.0
            if drift is not None:
                adv = _kernels.upwind_advection(u, np.ascontiguousarray(drift.values), grid.h)
                t3 = c0 * float(np.sum(adv * phi)) * dv
            terms += wq * np.array([t1, t2, t3])
        res = abs(float(terms.sum()))
        scale = float(np.abs(terms).sum())
        rel = res / scale if scale > 0 else 0.0
        passed = rel <= tol
        ok &= passed
        rows.append({"psi": {"t0": psi.t0, "t1": psi.t1, "center": list(psi.center),
                             "radius": psi.radius},
                     "terms": terms.tolist(), "residual": res, "normalized": rel,
                     "passed": bool(passed)})
    return {"rows": rows, "passed": bool(ok)}


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_certificate_csv(path, rows) -> None:
    """Rows of ``(t, norm, bound, ratio)`` with full-precision ``repr`` floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "norm", "bound", "ratio"])
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
