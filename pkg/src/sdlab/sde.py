"""Monte Carlo for dX = -b(X) dt + sqrt(2) dB with the Hardy drift.

The analytic drift is ``b(x) = sign * kappa * x / max(|x|, eps_reg)^2`` with
``kappa = sqrt(delta) (d-2)/2``, so ``sign = +1`` pulls paths toward the
origin. A grid-sampled field may replace it (``drift_field``), which is how
Monte Carlo is cross-checked against the PDE solver.

Paths stop when they enter the ball ``B(0, eps_hit)`` (hit), leave the cube
``max_i |x_i| > box`` (exit), or reach ``T``. With ``adaptive=True`` the step
shrinks near the hitting ball, ``h = min(dt, max(gamma s^2, h_min))`` with
``s = |x| - eps_hit``, and with ``bridge=True`` a Brownian-bridge correction
flags crossings that happen between grid times.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import _kernels
from .errors import ConfigurationError, ParameterError
from .grid import GridScalarField, GridVectorField, interpolate_points, multilinear_interpolate
from .grid import field_fingerprint as drift_fingerprint


@dataclass
class SdeConfig:
    d: int = 3
    delta: float = 0.0
    sign: int = 1
    x0: tuple = (1.0, 0.0, 0.0)
    dt: float = 1e-3
    T: float = 1.0
    paths: int = 10000
    eps_reg: float | None = None
    eps_hit: float = 0.1
    seed: int = 0
    box: float = 20.0
    adaptive: bool = True
    bridge: bool = True
    gamma: float = 0.02
    h_min: float = 1e-7
    drift_field: GridVectorField | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 3 and self.drift_field is None:
            raise ConfigurationError("the Hardy drift needs d >= 3")
        if self.delta < 0:
            raise ConfigurationError("delta must be non-negative")
        if self.sign not in (1, -1):
            raise ConfigurationError("sign must be +1 or -1")
        self.x0 = tuple(float(v) for v in self.x0)
        if len(self.x0) != self.d:
            raise ConfigurationError(f"x0 has {len(self.x0)} coordinates, expected d={self.d}")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigurationError("dt and T must be positive")
        if self.paths < 1:
            raise ConfigurationError("paths must be at least 1")
        if self.eps_hit < 0 or self.box <= 0 or self.gamma <= 0 or self.h_min <= 0:
            raise ConfigurationError("eps_hit >= 0, box > 0, gamma > 0 and h_min > 0 are required")
        if self.drift_field is not None and self.drift_field.grid.d != self.d:
            raise ConfigurationError("drift_field dimension does not match d")
        k = self.kappa
        if self.eps_reg is None:
            reg = 10.0 * math.sqrt(self.dt) * k
            if self.eps_hit > 0:
                reg = min(reg, self.eps_hit)
            self.eps_reg = reg if reg > 0 else max(self.eps_hit, 1e-12)
        if not self.eps_reg > 0:
            raise ConfigurationError("eps_reg must be positive")
        if self.eps_hit > 0 and self.eps_hit < self.eps_reg:
            raise ConfigurationError(
                f"eps_hit={self.eps_hit} must be >= eps_reg={self.eps_reg}")
        if self.drift_field is None and self.delta > 0:
            limit = self.eps_reg ** 2 / (math.sqrt(self.delta) * (self.d - 2))
            if self.dt > limit * (1 + 1e-12):
                raise ConfigurationError(
                    f"dt={self.dt:g} exceeds eps_reg^2/(sqrt(delta)(d-2)) = {limit:g}")

    @property
    def kappa(self) -> float:
        return math.sqrt(self.delta) * (self.d - 2) / 2.0

    def replace(self, **kw) -> "SdeConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "dt" in kw or "delta" in kw or "eps_hit" in kw:
            data["eps_reg"] = None
        data.update(kw)
        return SdeConfig(**data)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "drift_field"}
        out["x0"] = list(self.x0)
        out["drift_field"] = drift_fingerprint(self.drift_field)
        return out


@dataclass
class TrajectoryEnsemble:
    config: SdeConfig
    endpoints: np.ndarray
    status: np.ndarray
    stop_time: np.ndarray
    sup_radius: np.ndarray
    steps: np.ndarray
    stream_ids: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.status == _kernels.HIT

    @property
    def exited(self) -> np.ndarray:
        return self.status == _kernels.EXITED

    @property
    def hit_count(self) -> int:
        return int(np.count_nonzero(self.hit))

    @property
    def size(self) -> int:
        return int(self.status.size)

    def hit_probability(self, level: float = 0.95) -> dict:
        return wilson(self.hit_count, self.size, level)

    def summary(self) -> dict:
        hp = self.hit_probability()
        return {"config": self.config.to_dict(), "paths": self.size, "hits": self.hit_count,
                "exits": int(np.count_nonzero(self.exited)),
                "finished": int(np.count_nonzero(self.status == _kernels.FINISHED)),
                "p_hat": hp["p_hat"], "ci": [hp["lo"], hp["hi"]],
                "mean_steps": float(self.steps.mean()), "max_sup_radius": float(self.sup_radius.max())}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def wilson(k: int, n: int, level: float = 0.95) -> dict:
    """Point estimate and Wilson score interval for ``k`` successes in ``n`` trials."""
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return {"p_hat": k / n, "lo": float(ci.low), "hi": float(ci.high), "n": int(n), "k": int(k)}


def simulate(cfg: SdeConfig, first_path: int = 0) -> TrajectoryEnsemble:
    """Euler-Maruyama ensemble; path ``i`` draws from the stream keyed by ``(seed, i)``."""
    ids = np.arange(first_path, first_path + cfg.paths, dtype=np.uint64)
    keys = _kernels.stream_keys(cfg.seed, ids)
    params = np.array([cfg.sign * cfg.kappa, cfg.eps_reg, cfg.eps_hit, cfg.dt, cfg.T, cfg.box,
                       1.0 if cfg.adaptive else 0.0, cfg.gamma, cfg.h_min,
                       1.0 if cfg.bridge else 0.0])
    gvals = ggeom = None
    if cfg.drift_field is not None:
        g = cfg.drift_field.grid
        gvals = cfg.drift_field.values.reshape(g.d, -1)
        ggeom = np.array([g.L, g.h, float(g.N)])
    end, status, t, sup, steps = _kernels.simulate_paths(np.asarray(cfg.x0), cfg.paths, keys,
                                                        params, gvals, ggeom)
    return TrajectoryEnsemble(cfg, end, status, t, sup, steps, ids)


def brownian_hit_probability(r: float, eps: float, d: int = 3, T: float = math.inf) -> float:
    """Probability that ``sqrt(2) B`` from radius ``r`` enters ``B(0, eps)`` before ``T`` (d = 3)."""
    if r <= eps:
        return 1.0
    if d != 3:
        return (eps / r) ** (d - 2) if T == math.inf else math.nan
    if T == math.inf:
        return eps / r
    return eps / r * math.erfc((r - eps) / (2.0 * math.sqrt(T)))


def hardy_hit_probability(r: float, eps: float, d: int, delta: float, sign: int = 1) -> float:
    """Probability of ever entering ``B(0, eps)`` for the unregularized radial process.

    ``|X|`` is a Bessel-type process with index ``nu = d - sign * kappa``; it
    reaches ``eps`` surely when ``nu <= 2`` and with probability
    ``(eps/r)^{nu-2}`` otherwise.
    """
    nu = d - sign * math.sqrt(delta) * (d - 2) / 2.0
    if r <= eps or nu <= 2:
        return 1.0
    return (eps / r) ** (nu - 2.0)


def hitting_scan(delta_list, cfg_base: SdeConfig, eps_hit_values=None, level: float = 0.95) -> dict:
    """Hit probabilities with Wilson intervals across ``delta_list``.

    ``dt`` is lowered per entry when needed to respect the step bound
    ``dt <= eps_reg^2 / (sqrt(delta)(d-2))``. The trend is monotone when no
    entry's interval lies entirely below an earlier one. ``threshold_jump``
    reports ``min p`` above ``4 (d/(d-2))^2`` minus ``max p`` below it as data.
    """
    deltas = [float(x) for x in delta_list]
    if deltas != sorted(deltas):
        raise ParameterError("delta_list must be sorted")
    if cfg_base.sign != 1:
        raise ParameterError("hitting_scan expects the attracting sign (+1)")
    d = cfg_base.d
    thr = 4.0 * (d / (d - 2.0)) ** 2
    eps_values = [cfg_base.eps_hit] if eps_hit_values is None else list(eps_hit_values)
    curves = {}
    ok = True
    for eh in eps_values:
        rows = []
        for dl in deltas:
            cfg = _scan_config(cfg_base, dl, eh)
            ens = simulate(cfg)
            w = wilson(ens.hit_count, ens.size, level)
            rows.append({"delta": dl, "p_hat": w["p_hat"], "ci_lo": w["lo"], "ci_hi": w["hi"],
                         "M": ens.size, "eps_reg": cfg.eps_reg, "eps_hit": cfg.eps_hit,
                         "dt": cfg.dt})
        mono = all(rows[j]["ci_hi"] >= max(r["ci_lo"] for r in rows[:j])
                   for j in range(1, len(rows)))
        below = [r["p_hat"] for r in rows if r["delta"] < thr]
        above = [r["p_hat"] for r in rows if r["delta"] >= thr]
        jump = (min(above) - max(below)) if below and above else None
        ok &= mono
        curves[repr(float(eh))] = {"rows": rows, "monotone": bool(mono), "threshold_jump": jump}
    return {"d": d, "threshold": thr, "curves": curves, "passed": bool(ok)}


def _scan_config(base: SdeConfig, delta: float, eps_hit: float) -> SdeConfig:
    dt = base.dt
    if delta <= 0:
        return base.replace(delta=delta, eps_hit=eps_hit)
    kappa = math.sqrt(delta) * (base.d - 2) / 2.0
    reg = 10.0 * math.sqrt(dt) * kappa
    if eps_hit > 0:
        reg = min(reg, eps_hit)
    dt = min(dt, reg ** 2 / (2.0 * kappa))
    return base.replace(delta=delta, eps_hit=eps_hit, dt=dt, eps_reg=reg)


def write_curve_csv(path, scan: dict, eps_key=None) -> None:
    key = eps_key or next(iter(scan["curves"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "p_hat", "ci_lo", "ci_hi", "M", "eps_reg", "eps_hit"])
        for r in scan["curves"][key]["rows"]:
            w.writerow([repr(float(r["delta"])), repr(float(r["p_hat"])), repr(float(r["ci_lo"])),
                        repr(float(r["ci_hi"])), int(r["M"]), repr(float(r["eps_reg"])),
                        repr(float(r["eps_hit"]))])


def feller_crosscheck(f: GridScalarField, t: float, x_list, cfg: SdeConfig, pde_reference,
                      *, pde_fine=None, extra_allowance: float = 0.0, far_points=()) -> dict:
    """Compare ``E f(X_t^x)`` (paths killed on leaving the box) with the PDE solution ``u(t, x)``.

    ``cfg.drift_field`` must be the drift that produced ``pde_reference``
    (checked through the fingerprint in the run metadata). The allowance at
    each point is ``2 |u_ref - u_fine|`` when a refined run ``pde_fine`` is
    given (the first-order Richardson estimate of the reference error), plus
    ``extra_allowance``. A point passes iff
    ``|mc - u| <= 3 SE + allowance``. ``far_points`` are checked to have
    near-zero estimates.
    """
    grid = f.grid
    ref_fp = pde_reference.meta.get("drift_fingerprint")
    if ref_fp is None or ref_fp != drift_fingerprint(cfg.drift_field):
        raise ConfigurationError("SDE drift does not match the drift of the PDE reference run")
    if pde_reference.grid != grid:
        raise ConfigurationError("f and the PDE reference live on different grids")
    k = int(np.argmin(np.abs(pde_reference.times - t)))
    if abs(pde_reference.times[k] - t) > 1e-9 * max(1.0, t):
        raise ConfigurationError(f"PDE reference has no step at t={t}")
    uref = dict(pde_reference.snapshots).get(k)
    if uref is None:
        raise ConfigurationError(f"PDE reference kept no snapshot at t={t}")
    ufine = None
    if pde_fine is not None:
        kf = int(np.argmin(np.abs(pde_fine.times - t)))
        ufine = dict(pde_fine.snapshots).get(kf)
        if ufine is None:
            raise ConfigurationError(f"refined run kept no snapshot at t={t}")
    rows = []
    ok = True
    for i, x in enumerate(list(x_list) + list(far_points)):
        far = i >= len(x_list)
        run_cfg = cfg.replace(x0=tuple(x), T=t, eps_hit=0.0, box=grid.L, bridge=False,
                              adaptive=False, eps_reg=cfg.eps_reg)
        ens = simulate(run_cfg)
        vals = np.zeros(ens.size)
        alive = ens.status == _kernels.FINISHED
        if np.any(alive):
            vals[alive] = interpolate_points(f.values, grid, ens.endpoints[alive])
        mc = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(ens.size)) if ens.size > 1 else 0.0
        u = float(multilinear_interpolate(uref, grid, np.asarray(x, dtype=float)))
        allow = extra_allowance
        if ufine is not None:
            uf = float(multilinear_interpolate(ufine, pde_fine.grid, np.asarray(x, dtype=float)))
            allow += 2.0 * abs(u - uf)
        err = abs(mc - u)
        passed = err <= 3.0 * se + allow
        ok &= passed
        rows.append({"x": [float(v) for v in x], "mc": mc, "se": se, "pde": u, "abs_err": err,
                     "allowance": allow, "far": far, "passed": bool(passed)})
    return {"t": t, "rows": rows, "passed": bool(ok)}
