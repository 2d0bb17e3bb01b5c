"""Gauge (Luxemburg) norm for the Young function cosh - 1 on grid fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import GridScalarField

# cosh overflows for arguments beyond ~710; stay well below
_EXP_LIMIT = 700.0


class OrliczOverflowError(OverflowError):
    """The modular is not representable in double precision."""


@dataclass
class GaugeNormResult:
    value: float
    bracket: tuple
    residual: float
    iterations: int

    def __float__(self):
        return self.value


def _phi(x: np.ndarray) -> np.ndarray:
    # cosh(x) - 1 = 2 sinh(x/2)^2 keeps full relative accuracy for small |x|
    s = np.sinh(0.5 * x)
    return 2.0 * s * s


def modular(f: GridScalarField, c: float) -> float:
    """``<cosh(f/c) - 1>`` with the grid measure ``h^d``.

    Raises :class:`OrliczOverflowError` when ``max|f|/c`` leaves the exponent range.
    """
    if not c > 0:
        raise ParameterError("modular needs c > 0")
    a = np.abs(f.values) / c
    if a.size and a.max() > _EXP_LIMIT:
        raise OrliczOverflowError(f"max|f|/c = {a.max():.3g} overflows cosh")
    # pairwise summation in np.sum keeps the reduction deterministic
    return float(np.sum(_phi(a)) * f.grid.cell_volume)


def _log_modular(f: GridScalarField, c: float) -> float:
    """log of the modular, safe for any ``c`` (used for bracketing only)."""
    a = np.abs(f.values.ravel()) / c
    a = a[a > 0]
    if a.size == 0:
        return -math.inf
    m = a.max()
    if m <= _EXP_LIMIT:
        val = np.sum(_phi(a)) * f.grid.cell_volume
        return math.log(val) if val > 0 else -math.inf
    # cosh(a) - 1 ~ exp(a)/2 for the dominant terms
    return float(m + math.log(np.sum(np.exp(a - m)) * 0.5 * f.grid.cell_volume))


def gauge_norm(f: GridScalarField, tol: float = 1e-8, max_iter: int = 200) -> GaugeNormResult:
    """Smallest ``c`` with ``modular(f, c) <= 1`` by bracketing and bisection.

    Bisection runs in ``log c`` on the strictly decreasing map
    ``c -> modular(f, c)`` until the bracket's relative width is below ``tol``;
    the upper end is returned so that ``modular(f, value) <= 1`` always holds.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    vals = f.values
    if not np.all(np.isfinite(vals)):
        raise ParameterError("field must be finite")
    if not np.any(vals):
        return GaugeNormResult(0.0, (0.0, 0.0), 1.0, 0)
    # Phi(t) >= t^2/2 gives modular(c) >= ||f||_2^2 / (2 c^2), so c_lo is below the norm
    l2 = math.sqrt(float(np.sum(vals * vals)) * f.grid.cell_volume)
    c_lo = l2 / math.sqrt(2.0)
    c_hi = 10.0 * float(np.abs(vals).max())
    it = 0
    while _log_modular(f, c_hi) > 0.0:
        c_hi *= 10.0
        it += 1
    while _log_modular(f, c_lo) <= 0.0:
        # only hit when rounding puts c_lo exactly at the norm
        c_lo *= 0.5
        it += 1
    lo, hi = math.log(c_lo), math.log(c_hi)
    while hi - lo > math.log1p(tol) and it < max_iter:
        mid = 0.5 * (lo + hi)
        if _log_modular(f, math.exp(mid)) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    value = math.exp(hi)
    return GaugeNormResult(value, (math.exp(lo), value), abs(modular(f, value) - 1.0), it)


def lp_norms(f: GridScalarField, ps) -> dict:
    return {p: f.norm(p) for p in ps}


def embedding_check(f: GridScalarField, m_max: int = 4, gauge: float | None = None,
                    rel_tol: float = 1e-6) -> dict:
    """Check ``||f||_{2m} <= ((2m)!)^{1/(2m)} ||f||_Phi`` for ``m = 1..m_max``.

    The tightness ratio ``||f||_{2m} / (((2m)!)^{1/(2m)} ||f||_Phi)`` is reported
    per ``m``; a ratio above ``1 + rel_tol`` is a failure.
    """
    if gauge is None:
        gauge = gauge_norm(f).value
    rows = []
    ok = True
    for m in range(1, m_max + 1):
        lhs = f.norm(2 * m)
        factor = math.factorial(2 * m) ** (1.0 / (2 * m))
        rhs = factor * gauge
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        passed = lhs <= rhs * (1.0 + rel_tol)
        ok &= passed
        rows.append({"m": m, "norm_2m": lhs, "factor": factor, "bound": rhs,
                     "ratio": ratio, "passed": bool(passed)})
    return {"gauge_norm": gauge, "rows": rows, "passed": bool(ok)}
