"""Experiment pipelines behind ``lab run``.

Each experiment block is validated into a closure before anything is
computed; running the closure writes artifacts into the output directory and
returns their index entries. Output files contain no timestamps or timings,
so a rerun with the same seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import degiorgi, form_bound, orlicz, parabolic, sde
from .drift_fields import DriftSpec, mollify, sample_drift
from .errors import LabError
from .grid import Grid, GridScalarField, apply_dirichlet, save_field

KINDS = ("formbound", "evolve", "resolvent", "orlicz", "cauchy", "trotter", "degiorgi",
         "sde-scan", "crosscheck")


class ValidationError(LabError, ValueError):
    """A manifest field is missing or invalid; the message names the field."""


@dataclass
class Context:
    out_dir: Path
    seed: int


# ---------------------------------------------------------------------------
# field access with named errors
# ---------------------------------------------------------------------------

class Block:
    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected an object")
        self.data = data
        self.path = path

    def get(self, key, kind=None, default=..., check=None, msg=""):
        where = f"{self.path}.{key}"
        if key not in self.data:
            if default is ...:
                raise ValidationError(f"{where}: required field missing")
            return default
        val = self.data[key]
        if val is None and default is None:
            return None
        try:
            if kind is float:
                val = float(val)
                if not math.isfinite(val):
                    raise ValueError
            elif kind is int:
                if isinstance(val, bool) or float(val) != int(val):
                    raise ValueError
                val = int(val)
            elif kind is not None:
                val = kind(val)
        except (TypeError, ValueError):
            raise ValidationError(f"{where}: cannot read {val!r} as {getattr(kind, '__name__', kind)}")
        if check is not None and not check(val):
            raise ValidationError(f"{where}: invalid value {val!r} {msg}".rstrip())
        return val

    def sub(self, key, default=...):
        if key not in self.data and default is not ...:
            return default
        return Block(self.get(key), f"{self.path}.{key}")

    def wrap(self, fn, key):
        """Call ``fn`` and re-raise module validation errors against ``key``."""
        try:
            return fn()
        except (ValueError, TypeError, KeyError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{self.path}.{key}: {exc}") from exc


def _grid(b: Block) -> Grid:
    g = b.sub("grid")
    return b.wrap(lambda: Grid(g.get("d", int, 3), g.get("L", float), g.get("N", int)), "grid")


def _drift_spec(b: Block, key="drift"):
    if b.data.get(key) is None:
        return None
    return b.wrap(lambda: DriftSpec.from_dict(b.get(key, dict)), key)


def _drift_field(spec, grid, eps):
    if spec is None:
        return None
    if eps is None:
        return sample_drift(spec, grid)
    return mollify(spec, eps, grid)


def _field_spec(b: Block, key: str) -> dict:
    fb = b.sub(key)
    kind = fb.get("type", str, "gaussian",
                  check=lambda v: v in ("gaussian", "point_mass", "indicator", "bump", "random"),
                  msg="(gaussian, point_mass, indicator, bump, random)")
    spec = {"type": kind}
    if kind in ("gaussian", "indicator", "bump"):
        spec["center"] = fb.get("center", list, None)
    if kind == "gaussian":
        spec["width"] = fb.get("width", float, 0.3, check=lambda v: v > 0)
        spec["amplitude"] = fb.get("amplitude", float, 1.0)
    elif kind == "point_mass":
        spec["x"] = fb.get("x", list, None)
    elif kind in ("indicator", "bump"):
        spec["radius"] = fb.get("radius", float, check=lambda v: v > 0)
    else:
        spec["modes"] = fb.get("modes", int, 4, check=lambda v: v > 0)
    return spec


def make_field(spec: dict, grid: Grid, seed: int = 0) -> GridScalarField:
    kind = spec["type"]
    if kind == "gaussian":
        return parabolic.gaussian(grid, spec.get("center"), spec["width"], spec["amplitude"])
    if kind == "point_mass":
        return parabolic.point_mass(grid, spec.get("x"))
    if kind in ("indicator", "bump"):
        s = grid.radius(spec.get("center")) / spec["radius"]
        if kind == "indicator":
            vals = (s < 1.0).astype(float)
        else:
            vals = np.zeros(grid.shape)
            m = s < 1.0
            vals[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
        return GridScalarField(apply_dirichlet(vals), grid)
    rng = np.random.default_rng(seed)
    vals = np.zeros(grid.shape)
    for _ in range(spec["modes"]):
        c = rng.uniform(-0.5, 0.5, grid.d) * grid.L
        w = rng.uniform(0.1, 0.4) * grid.L
        vals += rng.normal() * np.exp(-grid.radius(c) ** 2 / (2 * w * w))
    return GridScalarField(apply_dirichlet(vals), grid)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def artifact(ctx: Context, path: Path, passed, series=None, meta=None) -> dict:
    entry = {"path": str(path.relative_to(ctx.out_dir)), "type": path.suffix.lstrip("."),
             "passed": None if passed is None else bool(passed)}
    if series:
        entry["series"] = series
    if meta:
        entry["meta"] = _clean(meta)
    return entry


# ---------------------------------------------------------------------------
# pipelines: each prepare_* validates and returns a zero-argument runner
# ---------------------------------------------------------------------------

def prepare_formbound(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    if spec is None:
        raise ValidationError(f"{b.path}.drift: required field missing")
    eps = b.get("mollify", float, None)
    lams = b.get("lambdas", list, [0.0])
    lams = [float(x) for x in lams]
    verify = b.sub("verify", None)
    if verify is not None:
        vd = verify.get("delta", float, check=lambda v: v >= 0)
        vc = verify.get("c", float, 0.0)
        fam = verify.sub("family", None)
        fam_kw = {} if fam is None else dict(fam.data)
        fam_kw.setdefault("kind", "hardy_optimizers")
        family = verify.wrap(lambda: form_bound.TestFunctionFamily(**fam_kw), "family")
        vgrid = _grid(verify) if "grid" in verify.data else grid

    def run():
        vf = _drift_field(spec, grid, eps)
        ests = [form_bound.rayleigh_delta(vf, lam) for lam in lams]
        report = {"drift": spec.to_dict(), "mollify": eps,
                  "curve": [e.to_dict() for e in ests]}
        report.update(ests[0].to_dict())
        passed = True
        if verify is not None:
            vfv = vf if vgrid == grid else _drift_field(spec, vgrid, eps)
            ver = form_bound.verify_form_bound(vfv, vd, vc, family)
            report["family_worst_ratio"] = ver["family_worst_ratio"]
            report["verify"] = {k: v for k, v in ver.items() if k != "members"}
            passed = ver["passed"]
        report["passed"] = passed
        path = ctx.out_dir / f"{name}_formbound.json"
        write_json(path, report)
        return [artifact(ctx, path, passed)]
    return run


def _scheme(b: Block, default_T=None):
    s = b.sub("scheme")
    cfg = s.wrap(lambda: parabolic.EvolutionConfig(
        tau=s.get("tau", float), T=s.get("T", float) if default_T is None else default_T,
        snapshot_every=s.get("snapshot_every", int, 0),
        gauge_every=s.get("gauge_every", int, 0),
        cfl_safety=s.get("cfl_safety", float, 1.0)), "scheme")
    return cfg, s.get("auto_tau", bool, False)


def _fit_tau(cfg, drift, grid):
    """Lower ``tau`` to the CFL limit (90% of it) when requested."""
    if drift is None:
        return cfg
    limit = 0.9 * grid.h / max(drift.l1_speed(), 1e-300)
    if cfg.tau <= limit:
        return cfg
    return parabolic.EvolutionConfig(tau=limit, T=cfg.T, record_p=cfg.record_p,
                                     snapshot_every=cfg.snapshot_every,
                                     gauge_every=cfg.gauge_every, cfl_safety=cfg.cfl_safety)


def prepare_evolve(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    eps = b.get("mollify", float, None)
    f0 = _field_spec(b, "f0")
    cfg, auto = _scheme(b)
    cert = b.sub("certificates", None)
    p_list = q_list = []
    window = None
    delta, c = 0.0, 0.0
    if spec is not None:
        delta = spec.declared_delta if spec.declared_delta is not None else spec.delta
        c = spec.declared_c or 0.0
    slope_tol = 0.1
    energy = None
    if cert is not None:
        p_list = [_pval(cert, "p", v) for v in cert.get("p", list, [])]
        q_list = [_pval(cert, "q", v) for v in cert.get("q", list, [])]
        window = cert.get("fit_window", list, None)
        delta = cert.get("delta", float, delta)
        c = cert.get("c", float, c)
        slope_tol = cert.get("slope_tol", float, 0.1)
        oe = cert.sub("orlicz_energy", None)
        if oe is not None:
            energy = {"theta": oe.get("theta", float, 0.25, check=lambda v: v > 0),
                      "tol": oe.get("tol", float, 5e-2, check=lambda v: v >= 0)}
            if spec is None or not spec.support_radius:
                raise ValidationError(f"{cert.path}.orlicz_energy: the drift needs a support radius")
            if cfg.snapshot_every < 1:
                raise ValidationError(f"{b.path}.scheme.snapshot_every: must be >= 1 "
                                      "for the Orlicz energy certificate")
    save = b.get("save_snapshots", bool, False)
    qs = q_list
    cfg.record_p = tuple(sorted({1.0, 2.0, math.inf} | set(p_list) | set(qs)))

    def run():
        drift = _drift_field(spec, grid, eps)
        run_cfg = _fit_tau(cfg, drift, grid) if auto else cfg
        meta = {"delta": delta, "c": c}
        if spec is not None and spec.R1 is not None:
            meta["R1"] = spec.R1
        if spec is not None and spec.support_radius:
            meta["R"] = spec.support_radius
        r = parabolic.evolve(make_field(f0, grid, ctx.seed), drift, run_cfg, meta=meta)
        rep = parabolic.norm_certificates(r, p_list, qs, delta=delta, c=c,
                                          fit_window=window, slope_tol=slope_tol)
        mp = r.max_principle()
        out = []
        if energy is not None:
            oer = parabolic.orlicz_energy_certificate(r, theta=energy["theta"], tol=energy["tol"])
            rep["orlicz_energy"] = oer
            rep["passed"] = rep["passed"] and oer["passed"]
        for row in rep["contraction"]:
            if not row.get("applicable"):
                continue
            path = ctx.out_dir / f"{name}_lp{_ptag(row['p'])}.csv"
            parabolic.write_certificate_csv(path, row.pop("series"))
            out.append(artifact(ctx, path, row["passed"], "lp_certificate",
                                {"p": row["p"], "omega": row["omega"], "delta": delta, "c": c}))
        passed = rep["passed"] and mp["passed"]
        summary = {"manifest": r.manifest(), "certificates": rep, "max_principle": mp,
                   "edge_max": float(r.edge_max.max()), "passed": passed}
        path = ctx.out_dir / f"{name}_evolve.json"
        write_json(path, summary)
        out.append(artifact(ctx, path, passed))
        if qs:
            path = ctx.out_dir / f"{name}_norms.csv"
            write_csv(path, ["t"] + [f"L{_ptag(q)}" for q in qs],
                      [[float(t)] + [float(r.norms[q][k]) for q in qs]
                       for k, t in enumerate(r.times) if t > 0])
            out.append(artifact(ctx, path, None, "norm_series", {"q": [_ptag(q) for q in qs]}))
        if save:
            for p in r.save(ctx.out_dir / f"{name}_run"):
                out.append(artifact(ctx, Path(p), None))
        return out
    return run


def _pval(b: Block, key, v):
    if v in ("inf", math.inf):
        return math.inf
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"{b.path}.{key}: exponent {v!r} is not a number")
    if v < 1:
        raise ValidationError(f"{b.path}.{key}: exponent {v!r} is below 1")
    return v


def _ptag(p):
    return "inf" if p in (math.inf, "inf") else f"{float(p):g}"


def prepare_resolvent(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    eps = b.get("mollify", float, None)
    mu = b.get("mu", float, check=lambda v: v > 0, msg="(mu must be positive)")
    f = _field_spec(b, "rhs")
    tol = b.get("tol", float, 1e-10, check=lambda v: v > 0)

    def run():
        drift = _drift_field(spec, grid, eps)
        rhs = make_field(f, grid, ctx.seed)
        u = parabolic.resolvent(parabolic.ResolventProblem(mu, rhs, drift), grid, tol=tol)
        res = parabolic.resolvent_operator(u.values, mu, drift, grid) - rhs.values
        rel = float(np.linalg.norm(res) / max(np.linalg.norm(rhs.values), 1e-300))
        nonneg = bool(rhs.values.min() < 0 or u.values.min() >= -tol * np.abs(rhs.values).max())
        contraction = float(mu * u.norm(math.inf)) <= rhs.norm(math.inf) * (1 + 1e-6)
        passed = rel <= 10 * tol and nonneg and contraction
        path = ctx.out_dir / f"{name}_u.f64"
        save_field(path, u, {"mu": mu})
        rpath = ctx.out_dir / f"{name}_resolvent.json"
        write_json(rpath, {"mu": mu, "relative_residual": rel, "min_u": float(u.values.min()),
                           "sup_mu_u": float(mu * u.norm(math.inf)), "sup_f": rhs.norm(math.inf),
                           "positivity": nonneg, "contraction": contraction, "passed": passed,
                           "grid": grid.to_dict()})
        return [artifact(ctx, rpath, passed), artifact(ctx, path, None),
                artifact(ctx, Path(str(path) + ".json"), None)]
    return run


def prepare_orlicz(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    f = _field_spec(b, "field")
    m_max = b.get("m_max", int, 4, check=lambda v: v >= 1)
    tol = b.get("tol", float, 1e-8, check=lambda v: v > 0)

    def run():
        fld = make_field(f, grid, ctx.seed)
        g = orlicz.gauge_norm(fld, tol)
        emb = orlicz.embedding_check(fld, m_max, g.value)
        mod = orlicz.modular(fld, g.value) if g.value > 0 else 0.0
        passed = emb["passed"] and mod <= 1.0 + 1e-6
        path = ctx.out_dir / f"{name}_orlicz.json"
        write_json(path, {"gauge_norm": g.value, "bracket": list(g.bracket),
                          "residual": g.residual, "iterations": g.iterations,
                          "modular_at_norm": mod, "embedding": emb, "passed": passed})
        return [artifact(ctx, path, passed)]
    return run


def _eps_list(b: Block):
    eps = b.get("eps_list", list)
    try:
        eps = [float(e) for e in eps]
    except (TypeError, ValueError):
        raise ValidationError(f"{b.path}.eps_list: numbers expected")
    return eps


def prepare_cauchy(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    eps = _eps_list(b)
    if len(eps) < 3:
        raise ValidationError(f"{b.path}.eps_list: at least three levels are required")
    f0 = _field_spec(b, "f0")
    cfg, auto = _scheme(b)
    lam = b.get("lambda", float, 0.0)
    sample = b.get("sample_every", int, 1, check=lambda v: v >= 1)

    def run():
        drifts = [_drift_field(spec, grid, e) for e in eps]
        run_cfg = cfg
        if auto:
            fastest = max(drifts, key=lambda d: d.l1_speed())
            run_cfg = _fit_tau(cfg, fastest, grid)
        rep = parabolic.semigroup_cauchy(drifts, make_field(f0, grid, ctx.seed), run_cfg,
                                         lam=lam, labels=[repr(e) for e in eps],
                                         sample_every=sample)
        path = ctx.out_dir / f"{name}_cauchy.csv"
        write_csv(path, ["eps_n", "eps_k", "sup_orlicz", "grad_integral"],
                  [[r["n"], r["k"], r["sup_orlicz"], r["grad_integral"]] for r in rep["table"]])
        jpath = ctx.out_dir / f"{name}_cauchy.json"
        write_json(jpath, rep)
        return [artifact(ctx, jpath, rep["passed"]), artifact(ctx, path, rep["passed"])]
    return run


def prepare_trotter(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    eps = _eps_list(b)
    mus = [float(m) for m in b.get("mu_list", list, [10.0, 100.0, 1000.0])]
    if any(m <= 0 for m in mus):
        raise ValidationError(f"{b.path}.mu_list: values must be positive")
    g = _field_spec(b, "g")
    rc = b.get("compact_radius", float, 1.0)
    far = b.get("far_radii", list, None)

    def run():
        drifts = [_drift_field(spec, grid, e) for e in eps]
        rep = parabolic.trotter_limit_check(drifts, mus, make_field(g, grid, ctx.seed),
                                            compact_radius=rc, far_radii=far)
        path = ctx.out_dir / f"{name}_trotter.json"
        write_json(path, rep)
        return [artifact(ctx, path, rep["passed"])]
    return run


def prepare_degiorgi(b: Block, ctx: Context, name: str):
    it = b.sub("iteration", None)
    draws = b.get("random_draws", int, 0, check=lambda v: v >= 0)
    params = None
    if it is not None:
        params = it.wrap(lambda: degiorgi.IterationParams(
            it.get("N", float), it.get("C0", float), it.get("alpha", float),
            it.get("z0", float), it.get("m_max", int, 200)), "iteration")
    prof = b.sub("profile", None)
    if prof is not None:
        pgrid = _grid(prof)
        pspec = _drift_spec(prof)
        peps = prof.get("mollify", float, None)
        pmu = prof.get("mu", float, 1.0, check=lambda v: v > 0)
        pf = _field_spec(prof, "rhs")
        radii = prof.get("radii", list, None)
        center = prof.get("center", list, None)

    def run():
        out = []
        ok = True
        summary = {}
        if params is not None:
            res = degiorgi.iterate_z(params)
            summary["iteration"] = {"threshold": res.threshold, "converged": res.converged,
                                    "diverged": res.diverged, "orbit": res.orbit[:20],
                                    "lemma_consistent": res.lemma_consistent}
            ok &= res.lemma_consistent
        if draws:
            rng = np.random.default_rng(ctx.seed)
            fails = 0
            for _ in range(draws):
                p = degiorgi.IterationParams(rng.uniform(0.1, 10.0), rng.uniform(2.0, 16.0),
                                             rng.uniform(0.25, 2.0), 0.0)
                p.z0 = rng.uniform() * p.threshold
                fails += not degiorgi.iterate_z(p).converged
            summary["random_draws"] = {"count": draws, "failures": fails}
            ok &= fails == 0
        if prof is not None:
            drift = _drift_field(pspec, pgrid, peps)
            u = parabolic.resolvent(parabolic.ResolventProblem(pmu, make_field(pf, pgrid, ctx.seed),
                                                               drift), pgrid)
            rec = degiorgi.holder_profile(u, center, radii)
            path = ctx.out_dir / f"{name}_oscillation.csv"
            rec.to_csv(path)
            summary["profile"] = {"beta": rec.beta, "lemma_C": rec.lemma_C,
                                  "decay_n": rec.decay_n, "decay_C2": rec.decay_C2,
                                  "monotone": rec.monotone}
            ok &= rec.monotone
            out.append(artifact(ctx, path, rec.monotone, "oscillation", {"beta": rec.beta}))
        summary["passed"] = ok
        path = ctx.out_dir / f"{name}_degiorgi.json"
        write_json(path, summary)
        out.insert(0, artifact(ctx, path, ok))
        return out
    return run


def _sde_config(b: Block, ctx: Context, **extra) -> sde.SdeConfig:
    s = b.sub("sde")
    kw = {}
    for key, kind in (("d", int), ("delta", float), ("sign", int), ("dt", float), ("T", float),
                      ("paths", int), ("eps_reg", float), ("eps_hit", float), ("box", float),
                      ("adaptive", bool), ("bridge", bool), ("gamma", float), ("h_min", float)):
        if key in s.data:
            kw[key] = s.get(key, kind)
    if "x0" in s.data:
        kw["x0"] = tuple(s.get("x0", list))
    kw["seed"] = ctx.seed
    kw.update(extra)
    return s.wrap(lambda: sde.SdeConfig(**kw), "sde")


def prepare_sde_scan(b: Block, ctx: Context, name: str):
    cfg = _sde_config(b, ctx)
    deltas = [float(x) for x in b.get("delta_list", list)]
    if deltas != sorted(deltas):
        raise ValidationError(f"{b.path}.delta_list: must be sorted")
    eh = b.get("eps_hit_values", list, None)

    def run():
        scan = sde.hitting_scan(deltas, cfg, eh)
        out = []
        for i, key in enumerate(scan["curves"]):
            path = ctx.out_dir / f"{name}_hitting_{i}.csv"
            sde.write_curve_csv(path, scan, key)
            out.append(artifact(ctx, path, scan["curves"][key]["monotone"], "hitting_curve",
                                {"d": scan["d"], "threshold": scan["threshold"],
                                 "eps_hit": float(key)}))
        path = ctx.out_dir / f"{name}_scan.json"
        write_json(path, scan)
        out.insert(0, artifact(ctx, path, scan["passed"]))
        return out
    return run


def prepare_crosscheck(b: Block, ctx: Context, name: str):
    grid = _grid(b)
    spec = _drift_spec(b)
    eps = b.get("mollify", float, None)
    f0 = _field_spec(b, "f")
    t = b.get("t", float, check=lambda v: v > 0)
    tau = b.get("tau", float, check=lambda v: v > 0)
    pts = b.get("points", list)
    far = b.get("far_points", list, [])
    refine = b.get("refine", bool, True)
    extra = b.get("extra_allowance", float, 0.0)
    _sde_config(b, ctx, eps_hit=0.0)

    def run():
        drift = _drift_field(spec, grid, eps)
        f = make_field(f0, grid, ctx.seed)
        cfg = parabolic.EvolutionConfig(tau=tau, T=t, record_p=(2.0,))
        ref = parabolic.evolve(f, drift, cfg)
        fine = None
        if refine:
            g2 = grid.refined(2)
            d2 = _drift_field(spec, g2, eps)
            fine = parabolic.evolve(make_field(f0, g2, ctx.seed), d2, cfg)
        scfg = _sde_config(b, ctx, eps_hit=0.0, drift_field=drift)
        rep = sde.feller_crosscheck(f, t, pts, scfg, ref, pde_fine=fine,
                                    extra_allowance=extra, far_points=far)
        path = ctx.out_dir / f"{name}_crosscheck.json"
        write_json(path, rep)
        return [artifact(ctx, path, rep["passed"])]
    return run


PREPARE = {"formbound": prepare_formbound, "evolve": prepare_evolve,
           "resolvent": prepare_resolvent, "orlicz": prepare_orlicz, "cauchy": prepare_cauchy,
           "trotter": prepare_trotter, "degiorgi": prepare_degiorgi,
           "sde-scan": prepare_sde_scan, "crosscheck": prepare_crosscheck}


def prepare_manifest(manifest: dict, ctx: Context) -> list:
    """Validate every experiment block; returns ``(name, kind, runner)`` triples."""
    if not isinstance(manifest, dict):
        raise ValidationError("manifest: expected a JSON object")
    if "experiments" in manifest:
        blocks = manifest["experiments"]
        if not isinstance(blocks, list):
            raise ValidationError("manifest.experiments: expected a list")
    elif "kind" in manifest:
        blocks = [manifest]
    else:
        raise ValidationError("manifest: needs 'experiments' or 'kind'")
    out = []
    names = set()
    for i, raw in enumerate(blocks):
        b = Block(raw, f"experiments[{i}]")
        kind = b.get("kind", str, check=lambda v: v in KINDS, msg=f"(expected one of {KINDS})")
        name = b.get("name", str, f"{i:02d}_{kind}")
        if name in names or not name or "/" in name:
            raise ValidationError(f"experiments[{i}].name: duplicate or invalid name {name!r}")
        names.add(name)
        out.append((name, kind, PREPARE[kind](b, ctx, name)))
    return out
