"""De Giorgi-type iteration and empirical regularity diagnostics.

``iterate_z`` runs the recursion ``z_{m+1} = N C0^m z_m^{1+alpha}``, whose orbit
tends to zero whenever ``z0 <= N^{-1/alpha} C0^{-1/alpha^2}``. The remaining
functions measure oscillation decay, fit Hoelder exponents and extract the
constant of a Caccioppoli-type inequality from grid solutions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import GridScalarField, forward_gradient

_OVERFLOW = 1e300


@dataclass
class IterationParams:
    N: float
    C0: float
    alpha: float
    z0: float
    m_max: int = 200

    def __post_init__(self):
        if not self.N > 0:
            raise ParameterError("N must be positive")
        if not self.C0 > 1:
            raise ParameterError("C0 must exceed 1")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if not self.z0 >= 0:
            raise ParameterError("z0 must be non-negative")
        if self.m_max < 1:
            raise ParameterError("m_max must be at least 1")

    @property
    def threshold(self) -> float:
        """``z* = N^{-1/alpha} C0^{-1/alpha^2}``."""
        return self.N ** (-1.0 / self.alpha) * self.C0 ** (-1.0 / self.alpha ** 2)


@dataclass
class IterationResult:
    orbit: np.ndarray
    threshold: float
    converged: bool
    diverged: bool
    below_threshold: bool

    @property
    def lemma_consistent(self) -> bool:
        """False only if ``z0 <= z*`` and yet the orbit failed to go to zero."""
        return not self.below_threshold or self.converged


def iterate_z(params: IterationParams, floor: float = 1e-12) -> IterationResult:
    """Equality orbit of the recursion, stopped at ``m_max`` or on overflow.

    ``converged`` means the orbit fell below ``floor`` and kept decreasing
    until the end; ``diverged`` means it exceeded ``1e300`` (the orbit is then
    truncated at the last finite value).
    """
    z = float(params.z0)
    orbit = [z]
    diverged = False
    for m in range(params.m_max):
        if z == 0.0:
            orbit.append(0.0)
            continue
        nxt = params.N * params.C0 ** m * z ** (1.0 + params.alpha) if z < _OVERFLOW else math.inf
        if not math.isfinite(nxt) or nxt > _OVERFLOW:
            diverged = True
            break
        z = nxt
        orbit.append(z)
    orbit = np.asarray(orbit)
    if diverged:
        converged = False
    else:
        hit = np.nonzero(orbit < floor)[0]
        converged = bool(hit.size) and bool(np.all(np.diff(orbit[hit[0]:]) <= 0.0))
    return IterationResult(orbit, params.threshold, converged, diverged,
                           params.z0 <= params.threshold)


# ---------------------------------------------------------------------------
# oscillation profiles
# ---------------------------------------------------------------------------

@dataclass
class OscillationRecord:
    center: tuple
    radii: np.ndarray
    osc: np.ndarray
    level_measure: np.ndarray
    level: float
    beta: float
    lemma_C: float
    decay_n: int
    decay_C2: float
    decay_table: list = field(default_factory=list)
    monotone: bool = True

    def rows(self):
        return [(float(r), float(o), float(m), self.beta)
                for r, o, m in zip(self.radii, self.osc, self.level_measure)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["radius", "osc", "level_measure", "fitted_beta"])
            for row in self.rows():
                w.writerow([repr(x) for x in row])


def oscillation(u: GridScalarField, center, radius: float) -> float:
    """``max - min`` of ``u`` over nodes strictly inside ``B(center, radius)``."""
    mask = u.grid.radius(center) < radius
    if not np.any(mask):
        return 0.0
    vals = u.values[mask]
    return float(vals.max() - vals.min())


def dyadic_radii(u: GridScalarField, center=None, r_max: float | None = None) -> np.ndarray:
    """``r_max 2^{-k}`` down to two grid spacings; ``r_max`` defaults to half the box."""
    grid = u.grid
    r = grid.L / 2.0 if r_max is None else float(r_max)
    out = []
    while r >= 2.0 * grid.h:
        out.append(r)
        r /= 2.0
    return np.asarray(out[::-1])


def holder_profile(u: GridScalarField, center=None, radii=None, *, p: float = 4.0,
                   n_max: int = 20, B: float = 0.0) -> OscillationRecord:
    """Oscillations over balls ``B(center, R_k)`` and the fitted regularity constants.

    * ``beta``: least-squares slope of ``log osc`` against ``log R``, clipped to ``(0, 1]``.
    * ``lemma_C``: smallest ``C`` with ``osc(rho) <= C ((rho/R)^beta osc(R) + B rho^beta)``
      for all recorded ``rho <= R = max radius``.
    * ``(decay_n, decay_C2)``: the smallest ``n <= n_max`` for which
      ``osc(R/2) <= (1 - 2^{-n-2}) osc(2R) + C2 R^{2/p}`` holds with ``C2 = 0``;
      otherwise ``n_max`` and the least admissible ``C2``. ``decay_table`` lists
      ``C2`` for every ``n``.

    The level-set measure column is ``|B_R ∩ {u > k}|`` with ``k`` the midpoint
    of ``u`` over the largest ball.
    """
    grid = u.grid
    center = tuple(np.zeros(grid.d)) if center is None else tuple(float(c) for c in center)
    radii = dyadic_radii(u, center) if radii is None else np.sort(np.asarray(radii, dtype=float))
    if radii.size == 0:
        raise ParameterError("no radii to sample")
    if np.any(np.abs(center) + radii.max() > grid.L + 1e-12):
        raise ParameterError("balls must lie inside the grid box")
    dist = grid.radius(center)
    osc = np.array([oscillation(u, center, r) for r in radii])
    big = dist < radii.max()
    vals = u.values[big]
    level = 0.5 * (float(vals.max()) + float(vals.min())) if vals.size else 0.0
    meas = np.array([np.count_nonzero((dist < r) & (u.values > level)) * grid.cell_volume
                     for r in radii])
    monotone = bool(np.all(np.diff(osc) >= -1e-15))
    pos = osc > 0
    if np.count_nonzero(pos) < 2:
        return OscillationRecord(center, radii, osc, meas, level, 1.0, 1.0, 0, 0.0, [], monotone)
    slope = float(np.polyfit(np.log(radii[pos]), np.log(osc[pos]), 1)[0])
    beta = min(max(slope, 1e-12), 1.0)
    R = radii.max()
    oR = osc[-1]
    bound = (radii / R) ** beta * oR + B * radii ** beta
    lemma_C = float(np.max(np.where(bound > 0, osc / np.where(bound > 0, bound, 1.0), 0.0)))
    table = []
    pairs = [(radii[i], radii[i + 2]) for i in range(len(radii) - 2)
             if math.isclose(radii[i + 2], 4.0 * radii[i], rel_tol=1e-9)]
    chosen = None
    for n in range(n_max + 1):
        fac = 1.0 - 2.0 ** (-n - 2)
        c2 = 0.0
        for small, large in pairs:
            Rm = 2.0 * small
            excess = oscillation(u, center, small) - fac * oscillation(u, center, large)
            c2 = max(c2, excess / Rm ** (2.0 / p))
        table.append({"n": n, "C2": c2})
        if chosen is None and c2 == 0.0:
            chosen = (n, 0.0)
    if chosen is None:
        chosen = (n_max, table[-1]["C2"])
    return OscillationRecord(center, radii, osc, meas, level, beta, lemma_C, chosen[0],
                             chosen[1], table, monotone)


# ---------------------------------------------------------------------------
# Caccioppoli-type inequality
# ---------------------------------------------------------------------------

def caccioppoli_check(u: GridScalarField, f: GridScalarField, mu: float, p: float, k_list,
                      radius_pairs, center=None, delta: float = 0.0) -> dict:
    """Empirical constant in the energy inequality for truncations.

    With ``v = (u - k)_+`` and ``w = v^{p/2}``, each case ``(k, r, R)`` gives

        K_case = ||grad w 1_{B_r}||^2 / ( ||w 1_{B_R}||^2 / (R-r)^2
                                          + || |f - mu u|^{p/2} 1_{u>k} 1_{B_R} ||^2 )

    and ``K`` is the maximum over cases. Cases with an empty level set are
    skipped; when the left side vanishes ``K_case = 0``.
    """
    if p < 2:
        raise ParameterError("p must be at least 2")
    if delta > 0 and delta < 4 and p <= 2.0 / (2.0 - math.sqrt(delta)):
        raise ParameterError("p must exceed 2/(2 - sqrt(delta))")
    grid = u.grid
    dist = grid.radius(center)
    dv = grid.cell_volume
    src = np.abs(f.values - mu * u.values) ** (p / 2.0)
    cases = []
    K = 0.0
    for k in k_list:
        v = np.clip(u.values - k, 0.0, None)
        level = u.values > k
        if not np.any(level):
            cases.append({"k": float(k), "skipped": True})
            continue
        w = v ** (p / 2.0)
        g = forward_gradient(w, grid)
        g2 = np.sum(g * g, axis=0)
        for r, R in radius_pairs:
            if not 0 < r < R:
                raise ParameterError("radius pairs need 0 < r < R")
            inner = dist < r
            outer = dist < R
            lhs = float(np.sum(g2[inner]) * dv)
            rhs = float(np.sum(w[outer] ** 2) * dv) / (R - r) ** 2 + \
                float(np.sum((src[outer & level]) ** 2) * dv)
            kc = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
            K = max(K, kc)
            cases.append({"k": float(k), "r": float(r), "R": float(R), "lhs": lhs,
                          "rhs_unit": rhs, "K": kc, "skipped": False})
    return {"p": p, "mu": mu, "K": K, "cases": cases, "finite": bool(math.isfinite(K))}


def refinement_stable(coarse: float, fine: float, factor: float = 2.0) -> bool:
    """True iff the two constants agree within the multiplicative ``factor``."""
    if coarse == 0 and fine == 0:
        return True
    if coarse <= 0 or fine <= 0:
        return False
    return max(coarse / fine, fine / coarse) <= factor
