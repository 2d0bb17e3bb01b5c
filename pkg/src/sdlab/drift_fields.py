"""Drift families, the Friedrichs mollifier, and the cut-off weights.

Families
--------
``hardy``          b(x) = sign * sqrt(delta) (d-2)/2 * x / |x|^2
``compact_hardy``  the same restricted to the open ball B(0, R1)
``tail_decay``     sqrt(delta) (d-2)/2 * 1_{B_R} x/|x|^2 + C 1_{B_R^c} |x|^{-alpha-1} x
``multi_bump``     sum of Hardy bumps sqrt(delta_m) (d-2)/2 * 1_{B(x_m,R_m)} (x-x_m)/|x-x_m|^2
``grid_sampled``   a :class:`GridVectorField`, evaluated by multilinear interpolation
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import _kernels
from .errors import ParameterError, ResolutionError, SingularityError
from .grid import (Grid, GridScalarField, GridVectorField, load_field,
                   multilinear_interpolate, save_field)

FAMILIES = ("hardy", "compact_hardy", "tail_decay", "multi_bump", "grid_sampled")


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: float
    delta: float
    c: float = 0.0


@dataclass
class DriftSpec:
    """Analytic drift description plus its declared form-bound metadata.

    ``declared_c`` is ``None`` when unknown; the form_bound module estimates it.
    """

    d: int
    family: str
    delta: float = 0.0
    sign: int = 1
    R1: float | None = None
    C: float = 0.0
    alpha: float | None = None
    R: float | None = None
    bumps: list = field(default_factory=list)
    grid_field: GridVectorField | None = None
    declared_delta: float | None = None
    declared_c: float | None = None
    support_radius: float | None = None

    def __post_init__(self):
        if self.d < 3:
            raise ParameterError(f"drifts are defined for d >= 3, got d={self.d}")
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown drift family {self.family!r}")
        if self.delta < 0:
            raise ParameterError("delta must be non-negative")
        if self.sign not in (1, -1):
            raise ParameterError("sign must be +1 or -1")
        fam = self.family
        if fam == "compact_hardy":
            if not self.R1 or self.R1 <= 0:
                raise ParameterError("compact_hardy needs R1 > 0")
            if self.support_radius is None:
                self.support_radius = float(self.R1)
        elif fam == "tail_decay":
            if self.alpha is None or self.alpha <= self.d / 2:
                raise ParameterError(f"tail_decay needs alpha > d/2 = {self.d / 2}")
            if not self.R or self.R <= 0:
                raise ParameterError("tail_decay needs R > 0")
        elif fam == "multi_bump":
            self.bumps = [b if isinstance(b, Bump) else Bump(**b) for b in self.bumps]
            self._check_bumps()
            if self.declared_delta is None:
                self.declared_delta = float(sum(b.delta for b in self.bumps))
            if self.support_radius is None and self.bumps:
                self.support_radius = max(float(np.linalg.norm(b.center)) + b.radius
                                          for b in self.bumps)
        elif fam == "grid_sampled":
            if self.grid_field is None:
                raise ParameterError("grid_sampled needs grid_field")
            if self.grid_field.grid.d != self.d:
                raise ParameterError("grid_field dimension mismatch")
        if self.declared_delta is None and fam in ("hardy", "compact_hardy", "tail_decay"):
            self.declared_delta = float(self.delta)
        if self.declared_delta is not None and not 0.0 <= self.declared_delta <= 4.0:
            raise ParameterError(
                f"declared form-bound must lie in [0, 4], got {self.declared_delta}")

    def _check_bumps(self):
        for b in self.bumps:
            if len(b.center) != self.d or b.radius <= 0 or b.delta < 0:
                raise ParameterError(f"invalid bump {b}")
        total = sum(b.delta for b in self.bumps)
        if total > 4.0 + 1e-12:
            raise ParameterError(f"sum of bump form-bounds {total} exceeds 4")
        for i, a in enumerate(self.bumps):
            for b in self.bumps[i + 1:]:
                gap = np.linalg.norm(np.subtract(a.center, b.center))
                if gap < a.radius + b.radius:
                    raise ParameterError("multi_bump balls must be pairwise disjoint")

    @property
    def kappa(self) -> float:
        """Hardy amplitude sqrt(delta) (d-2)/2."""
        return math.sqrt(self.delta) * (self.d - 2) / 2.0

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        out = {"family": self.family, "d": self.d, "delta": self.delta,
               "c": self.declared_c, "support": self.support_radius, "sign": self.sign}
        if self.family == "compact_hardy":
            out["R1"] = self.R1
        if self.family == "tail_decay":
            out.update(C=self.C, alpha=self.alpha, R=self.R)
        if self.family == "multi_bump":
            out["bumps"] = [{"center": list(b.center), "radius": b.radius,
                             "delta": b.delta, "c": b.c} for b in self.bumps]
        if self.declared_delta is not None:
            out["declared_delta"] = self.declared_delta
        return out

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "DriftSpec":
        data = dict(data)
        fam = data.get("family")
        kw = dict(d=int(data["d"]), family=fam, delta=float(data.get("delta", 0.0)),
                  sign=int(data.get("sign", 1)), declared_c=data.get("c"),
                  support_radius=data.get("support"),
                  declared_delta=data.get("declared_delta"))
        if fam == "compact_hardy":
            kw["R1"] = float(data.get("R1", data.get("support") or 0.0))
        elif fam == "tail_decay":
            kw.update(C=float(data["C"]), alpha=float(data["alpha"]), R=float(data["R"]))
        elif fam == "multi_bump":
            kw["bumps"] = [Bump(tuple(b["center"]), float(b["radius"]), float(b["delta"]),
                                float(b.get("c", 0.0))) for b in data.get("bumps", [])]
        elif fam == "grid_sampled":
            path = Path(data["field_path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            kw["grid_field"] = load_vector_field(path)
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DriftSpec":
        return cls.from_dict(json.loads(text))


def save_vector_field(path, vf: GridVectorField) -> None:
    for i in range(vf.grid.d):
        save_field(f"{path}.{i}", GridScalarField(vf.values[i], vf.grid))


def load_vector_field(path) -> GridVectorField:
    comps = []
    i = 0
    while Path(f"{path}.{i}").exists():
        comps.append(load_field(f"{path}.{i}"))
        i += 1
    if not comps:
        raise FileNotFoundError(path)
    return GridVectorField(np.stack([c.values for c in comps]), comps[0].grid)


def _hardy_part(x, amp, reg, center=None):
    y = x if center is None else x - np.asarray(center, dtype=float)
    r = np.sqrt(np.sum(y * y, axis=-1))
    if reg is None:
        if np.any(r == 0.0):
            raise SingularityError("Hardy drift evaluated at its singularity")
        rr = r
    else:
        rr = np.maximum(r, reg)
    return amp * y / (rr * rr)[..., None], r


def eval_drift(spec: DriftSpec, x, regularize: float | None = None) -> np.ndarray:
    """Evaluate ``b(x)`` for one point ``(d,)`` or a batch ``(m, d)``.

    ``regularize`` caps the Hardy singularity by replacing ``|x|`` with
    ``max(|x|, regularize)``; without it, evaluating at the pole raises
    :class:`SingularityError`.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != spec.d:
        raise ParameterError(f"point dimension {pts.shape[-1]} != d={spec.d}")
    fam = spec.family
    amp = spec.sign * spec.kappa
    if fam == "hardy":
        out, _ = _hardy_part(pts, amp, regularize)
    elif fam == "compact_hardy":
        r = np.sqrt(np.sum(pts * pts, axis=-1))
        out = np.zeros_like(pts)
        inside = r < spec.R1
        if np.any(inside):
            out[inside], _ = _hardy_part(pts[inside], amp, regularize)
    elif fam == "tail_decay":
        r = np.sqrt(np.sum(pts * pts, axis=-1))
        out = np.zeros_like(pts)
        inside = r < spec.R
        if np.any(inside):
            out[inside], _ = _hardy_part(pts[inside], amp, regularize)
        outside = ~inside
        ro = r[outside]
        out[outside] = spec.sign * spec.C * pts[outside] * (ro ** (-spec.alpha - 1.0))[:, None]
    elif fam == "multi_bump":
        out = np.zeros_like(pts)
        for b in spec.bumps:
            y = pts - np.asarray(b.center, dtype=float)
            r = np.sqrt(np.sum(y * y, axis=-1))
            inside = r < b.radius
            if np.any(inside):
                a = spec.sign * math.sqrt(b.delta) * (spec.d - 2) / 2.0
                out[inside], _ = _hardy_part(pts[inside], a, regularize, b.center)
    else:
        vf = spec.grid_field
        out = np.stack([multilinear_interpolate(vf.values, vf.grid, p) for p in pts])
    return out[0] if single else out


def sample_drift(spec: DriftSpec, grid: Grid, regularize: float | None = None) -> GridVectorField:
    """Nodal samples on ``grid``; Hardy poles are capped at ``h/2`` by default."""
    if spec.family == "grid_sampled" and spec.grid_field.grid == grid:
        return GridVectorField(spec.grid_field.values.copy(), grid)
    reg = grid.h / 2.0 if regularize is None else regularize
    pts = grid.points().reshape(grid.d, -1).T
    vals = eval_drift(spec, pts, regularize=reg)
    return GridVectorField(vals.T.reshape((grid.d,) + grid.shape), grid)


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------

def _bump_profile(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 / (s[inside] ** 2 - 1.0))
    return out


@lru_cache(maxsize=None)
def kernel_normalization(d: int) -> float:
    """Constant making ``c * exp(1/(|x|^2 - 1))`` a probability density on B_1.

    The integral is reduced to the radial variable and evaluated by adaptive
    quadrature: ``int_{B_1} = |S^{d-1}| int_0^1 exp(1/(r^2-1)) r^{d-1} dr``.
    """
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    sphere = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)
    radial, _ = integrate.quad(lambda r: math.exp(1.0 / (r * r - 1.0)) * r ** (d - 1),
                               0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class MollifierKernel:
    epsilon: float
    d: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    @property
    def normalization(self) -> float:
        return kernel_normalization(self.d)

    def __call__(self, x) -> np.ndarray:
        """gamma_eps at points ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1)) / self.epsilon
        return self.normalization * _bump_profile(r) / self.epsilon ** self.d

    def stencil(self, h: float):
        """Integer offsets with ``|j| h < eps`` and discrete weights summing to one."""
        m = int(math.ceil(self.epsilon / h))
        rng = np.arange(-m, m + 1)
        offs = np.stack(np.meshgrid(*([rng] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        w = self(offs * h)
        w = w / w.sum()
        # weights far in the tail can underflow; drop them and renormalize
        keep = w > 0.0
        offs, w = offs[keep], w[keep]
        return offs, w / w.sum()


def mollify(b, epsilon: float, grid: Grid | None = None) -> GridVectorField:
    """Componentwise ``gamma_eps * b`` by direct truncated convolution.

    ``b`` may be a :class:`DriftSpec` (sampled on ``grid`` first, poles capped
    at ``h/2``) or a :class:`GridVectorField`. Outside the box the field is
    extended by zero.
    """
    if isinstance(b, DriftSpec):
        if grid is None:
            raise ParameterError("a grid is required to mollify an analytic drift")
        vf = sample_drift(b, grid)
    else:
        vf = b
        grid = grid or vf.grid
        if vf.grid != grid:
            raise ParameterError("field grid does not match the requested grid")
    if epsilon < 2.0 * grid.h * (1 - 1e-12):
        raise ResolutionError(
            f"epsilon={epsilon:g} is below twice the grid spacing h={grid.h:g}")
    offs, w = MollifierKernel(epsilon, grid.d).stencil(grid.h)
    out = np.stack([_kernels.convolve_stencil(vf.values[i], offs, w) for i in range(grid.d)])
    return GridVectorField(out, grid)


def mollify_scalar(f: GridScalarField, epsilon: float) -> GridScalarField:
    grid = f.grid
    if epsilon < 2.0 * grid.h * (1 - 1e-12):
        raise ResolutionError(f"epsilon={epsilon:g} below 2h={2 * grid.h:g}")
    offs, w = MollifierKernel(epsilon, grid.d).stencil(grid.h)
    return GridScalarField(_kernels.convolve_stencil(f.values, offs, w), grid)


# ---------------------------------------------------------------------------
# weights eta, zeta_r, rho
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightFamily:
    theta: float = 0.25
    r: float = 1.0
    kappa: float = 1.0
    center: tuple | None = None
    d: int = 3

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise ParameterError(f"theta must lie in (0, 1/2), got {self.theta}")
        if not self.r > 0 or not self.kappa > 0:
            raise ParameterError("r and kappa must be positive")

    @property
    def a(self) -> float:
        return 1.0 + 1.0 / self.theta


def _eta(t, theta):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t <= 1.0] = 1.0
    mid = (t > 1.0) & (t < 1.0 + 1.0 / theta)
    out[mid] = (1.0 - theta * (t[mid] - 1.0)) ** (1.0 / theta)
    return out


def weight_eval(w: WeightFamily, kind: str, x):
    """Evaluate ``eta`` (scalar argument), ``zeta`` or ``rho`` (points ``(..., d)``)."""
    if kind == "eta":
        out = _eta(x, w.theta)
        return float(out) if out.ndim == 0 else out
    x = np.asarray(x, dtype=float)
    if w.center is not None:
        x = x - np.asarray(w.center, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if kind == "zeta":
        out = _eta(r / w.r, w.theta)
    elif kind == "rho":
        d = x.shape[-1]
        out = (1.0 + w.kappa * r * r) ** (-d / 2.0 - 1.0)
    else:
        raise ParameterError(f"unknown weight kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


def weight_bound_check(w: WeightFamily, grid: Grid) -> dict:
    """Finite-difference check of the zeta_r gradient and Laplacian bounds.

    Samples are taken at nodes whose radius is at least ``3h`` away from both
    kinks ``r`` and ``a r``. Inside B_r and outside B_{ar} the field is
    constant, so gradient and Laplacian must vanish there; in the annulus
    ``|grad zeta| <= 1/r`` and ``-Delta zeta <= (d-1)/r^2`` must hold up to the
    O(h^2) truncation error, which is reported as ``fd_allowance``.
    """
    h = grid.h
    d = grid.d
    pts = np.moveaxis(grid.points(), 0, -1)
    z = weight_eval(w, "zeta", pts)
    rad = grid.radius(w.center)
    core = grid.interior
    grad2 = np.zeros(grid.shape)
    lap = np.zeros(grid.shape)
    for ax in range(d):
        lo = list(core)
        hi = list(core)
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        grad2[core] += ((z[tuple(hi)] - z[tuple(lo)]) / (2 * h)) ** 2
        lap[core] += (z[tuple(hi)] - 2 * z[core] + z[tuple(lo)]) / h ** 2
    grad = np.sqrt(grad2)
    valid = np.zeros(grid.shape, dtype=bool)
    valid[core] = True
    away = (np.abs(rad - w.r) >= 3 * h) & (np.abs(rad - w.a * w.r) >= 3 * h) & valid
    inner = away & (rad < w.r)
    outer = away & (rad > w.a * w.r)
    ann = away & (rad > w.r) & (rad < w.a * w.r)
    # truncation-error scale: h^2 * |eta'''| / r^3 with |eta'''| <= (1-theta)(1-2theta)/s-type bounds <= 1
    allowance = 2.0 * (h / w.r) ** 2 / w.r * (1 + d / w.r)
    grad_bound = 1.0 / w.r
    lap_bound = (d - 1) / w.r ** 2
    grad_viol = float(np.max(grad[ann] - grad_bound, initial=-np.inf))
    lap_viol = float(np.max(-lap[ann] - lap_bound, initial=-np.inf))
    flat_viol = float(max(np.max(grad[inner | outer], initial=0.0),
                          np.max(np.abs(lap[inner | outer]), initial=0.0)))
    max_violation = max(grad_viol, lap_viol, flat_viol, 0.0)
    return {
        "theta": w.theta, "r": w.r, "a": w.a, "h": h,
        "samples_inner": int(inner.sum()), "samples_annulus": int(ann.sum()),
        "samples_outer": int(outer.sum()),
        "grad_violation": max(grad_viol, 0.0), "laplacian_violation": max(lap_viol, 0.0),
        "flat_region_max": flat_viol, "max_violation": max_violation,
        "fd_allowance": allowance, "passed": bool(max_violation <= allowance),
    }
