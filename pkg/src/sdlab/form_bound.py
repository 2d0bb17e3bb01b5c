"""Estimation and verification of the form-boundedness inequality

    ||b phi||_2^2 <= delta ||grad phi||_2^2 + c ||phi||_2^2   for all phi.

For a fixed ``c = lambda`` the best ``delta`` is the top eigenvalue of
``|b|^2 phi = sigma (-Delta_h + lambda) phi`` with Dirichlet data on the box;
the curve ``lambda -> delta(lambda)`` is the full answer.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IterationError, ParameterError
from .grid import DirichletLaplacian, Grid, GridVectorField, apply_dirichlet, dirichlet_energy

log = logging.getLogger(__name__)


@dataclass
class FormBoundEstimate:
    delta_est: float
    lambda_used: float
    grid_resolution: float
    iterations: int
    residual: float
    grid: dict = field(default_factory=dict)
    eigenvector: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self, family_worst_ratio=None) -> dict:
        out = {"delta_est": self.delta_est, "lambda": self.lambda_used, "grid": self.grid,
               "iterations": self.iterations, "residual": self.residual,
               "family_worst_ratio": family_worst_ratio}
        return out

    def to_json(self, family_worst_ratio=None) -> str:
        return json.dumps(self.to_dict(family_worst_ratio), sort_keys=True)


def rayleigh_delta(b: GridVectorField, lam: float = 0.0, grid: Grid | None = None, *,
                   rtol: float = 1e-6, max_iter: int = 5000,
                   keep_vector: bool = False) -> FormBoundEstimate:
    """Largest ``<|b|^2 phi^2> / (||grad phi||^2 + lam ||phi||^2)`` over grid functions.

    Power iteration on the symmetric operator ``W^{1/2} (-Delta_h + lam)^{-1} W^{1/2}``
    with ``W = |b|^2``; the inverse is applied exactly by sine transforms.
    Raises :class:`IterationError` (carrying the last iterate) if the Rayleigh
    quotient has not settled to ``rtol`` after ``max_iter`` steps.
    """
    grid = grid or b.grid
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    w = apply_dirichlet(np.sum(b.values ** 2, axis=0))
    if not np.all(np.isfinite(w)):
        raise ParameterError("drift must be finite on the grid (mollify or regularize)")
    meta = {"d": grid.d, "L": grid.L, "N": grid.N, "h": grid.h}
    if not np.any(w > 0):
        return FormBoundEstimate(0.0, lam, grid.h, 0, 0.0, meta)
    sq = np.sqrt(w)
    lap = DirichletLaplacian(grid)
    psi = sq / np.linalg.norm(sq)
    sigma_old = None
    history = []
    for it in range(1, max_iter + 1):
        y = sq * lap.solve(sq * psi, lam)
        sigma = float(np.vdot(psi, y))
        ny = np.linalg.norm(y)
        residual = float(np.linalg.norm(y - sigma * psi) / max(sigma, 1e-300))
        psi = y / ny
        history.append(sigma)
        if sigma_old is not None and abs(sigma - sigma_old) <= rtol * abs(sigma):
            vec = None
            if keep_vector:
                vec = lap.solve(sq * psi, lam)
            return FormBoundEstimate(sigma, lam, grid.h, it, residual, meta, vec)
        sigma_old = sigma
    raise IterationError(f"power iteration did not converge in {max_iter} steps",
                         last_iterate=psi, history=history)


def delta_curve(b: GridVectorField, lambdas, **kw) -> list:
    return [rayleigh_delta(b, lam, **kw) for lam in lambdas]


def estimate_c(b: GridVectorField, delta: float, lambdas=None, **kw) -> dict:
    """Smallest scanned ``lambda`` with ``delta(lambda) <= delta``.

    Used to attach an empirical ``c(delta)`` to drifts whose constant is not
    known in closed form.
    """
    if lambdas is None:
        lambdas = [0.0] + list(np.geomspace(0.1, 1e4, 21))
    curve = []
    for lam in lambdas:
        est = rayleigh_delta(b, lam, **kw)
        curve.append((float(lam), est.delta_est))
        if est.delta_est <= delta:
            return {"c": float(lam), "delta": delta, "curve": curve}
    raise IterationError(f"no scanned lambda brings delta(lambda) below {delta}",
                         history=curve)


# ---------------------------------------------------------------------------
# test-function families
# ---------------------------------------------------------------------------

@dataclass
class TestFunctionFamily:
    """Probe functions for the form-bound inequality.

    kind ``gaussians``:        exp(-|x-c|^2 / (2 w^2)) for centers x widths
    kind ``radial_bumps``:     exp(1 - 1/(1-(|x-c|/w)^2)) on B(c, w)
    kind ``hardy_optimizers``: |x|^{-(d-2)/2 + eps} * (1 - |x|/rc)_+^2, |x| capped at h/2
    """

    __test__ = False  # not a pytest class

    kind: str
    centers: list = field(default_factory=lambda: [None])
    widths: list = field(default_factory=lambda: [0.5, 1.0])
    exponents: list = field(default_factory=lambda: [0.3, 0.1, 0.03, 0.01])
    cutoff: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussians", "radial_bumps", "hardy_optimizers"):
            raise ParameterError(f"unknown test family {self.kind!r}")

    def members(self, grid: Grid):
        """Yield ``(label, values)`` for every member; boundary nodes are zeroed."""
        d = grid.d
        if self.kind == "hardy_optimizers":
            r = np.maximum(grid.radius(), grid.h / 2.0)
            cut = np.clip(1.0 - grid.radius() / self.cutoff, 0.0, None) ** 2
            for eps in self.exponents:
                yield (f"hardy eps={eps:g}",
                       apply_dirichlet(r ** (-(d - 2) / 2.0 + eps) * cut))
            return
        for c in self.centers:
            c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
            rad = grid.radius(c)
            for w in self.widths:
                if self.kind == "gaussians":
                    vals = np.exp(-rad ** 2 / (2 * w * w))
                else:
                    t = np.minimum(rad / w, 1.0)
                    with np.errstate(divide="ignore", over="ignore"):
                        vals = np.where(t < 1.0, np.exp(1.0 - 1.0 / (1.0 - t * t)), 0.0)
                yield f"{self.kind} c={c.tolist()} w={w:g}", apply_dirichlet(vals)


def verify_form_bound(b: GridVectorField, delta: float, c: float,
                      family: TestFunctionFamily, rel_tol: float = 1e-3) -> dict:
    """Worst ``(||b phi||^2 - c ||phi||^2) / ||grad phi||^2`` over a probe family.

    Passes iff the worst ratio is at most ``delta * (1 + rel_tol)``. Members with
    vanishing norm and gradient are skipped with a warning.
    """
    grid = b.grid
    w = np.sum(b.values ** 2, axis=0)
    dv = grid.cell_volume
    rows = []
    worst = -math.inf
    worst_label = None
    for label, phi in family.members(grid):
        n2 = float(np.sum(phi * phi) * dv)
        g2 = dirichlet_energy(phi, grid)
        if n2 == 0.0 and g2 == 0.0:
            log.warning("skipping zero probe %s", label)
            continue
        bphi = float(np.sum(w * phi * phi) * dv)
        ratio = (bphi - c * n2) / g2 if g2 > 0 else (math.inf if bphi > c * n2 else -math.inf)
        rows.append({"member": label, "b_phi2": bphi, "grad2": g2, "phi2": n2, "ratio": ratio})
        if ratio > worst:
            worst, worst_label = ratio, label
    if not rows:
        raise ParameterError("test family produced no usable members")
    return {"delta": delta, "c": c, "family": family.kind, "family_worst_ratio": worst,
            "worst_member": worst_label, "members": rows,
            "passed": bool(worst <= delta * (1.0 + rel_tol))}


def hardy_reference(d: int, delta: float) -> tuple:
    """Exact metadata of the Hardy drift: ``(delta, c=0, 4 (d/(d-2))^2)``."""
    if d < 3:
        raise ParameterError("the Hardy drift needs d >= 3")
    if delta < 0:
        raise ParameterError("delta must be non-negative")
    return float(delta), 0.0, 4.0 * (d / (d - 2.0)) ** 2


def quasi_contraction_interval(delta: float) -> float:
    """Left end ``2 / (2 - sqrt(delta))`` of the quasi-contractive interval (inf if delta >= 4)."""
    if delta >= 4.0:
        return math.inf
    return 2.0 / (2.0 - math.sqrt(delta))
