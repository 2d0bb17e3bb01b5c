"""Uniform grids on a centred box and the fields sampled on them.

All numeric modules exchange data as :class:`GridScalarField` or
:class:`GridVectorField`. Values live on every node of the box
``[-L, L]^d`` including the boundary layer; the boundary layer carries the
homogeneous Dirichlet condition and is kept at zero by the solvers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import ParameterError


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with ``N`` points per axis on ``[-L, L]^d``."""

    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.d}")
        if self.N < 16:
            raise ParameterError(f"need N >= 16 points per axis, got {self.N}")
        if not self.L > 0:
            raise ParameterError(f"half-width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.N - 1)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.N)

    def mesh(self) -> list:
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def points(self) -> np.ndarray:
        """Node coordinates with shape ``(d, N, ..., N)``."""
        return np.stack(self.mesh())

    def radius(self, center=None) -> np.ndarray:
        x = self.points()
        if center is not None:
            x = x - np.asarray(center, dtype=float).reshape((self.d,) + (1,) * self.d)
        return np.sqrt(np.sum(x * x, axis=0))

    @property
    def interior(self) -> tuple:
        return (slice(1, -1),) * self.d

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.interior] = True
        return m

    def nearest_index(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        idx = np.rint((x + self.L) / self.h).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, self.N - 1))

    def refined(self, factor: int = 2) -> "Grid":
        """Grid on the same box with spacing divided by ``factor``."""
        return Grid(self.d, self.L, factor * (self.N - 1) + 1)

    def to_dict(self) -> dict:
        return {"d": self.d, "L": self.L, "N": self.N, "h": self.h}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        return cls(int(data["d"]), float(data["L"]), int(data["N"]))


@dataclass
class GridScalarField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ParameterError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def norm(self, p=2) -> float:
        return lp_norm(self.values, self.grid, p)

    def copy(self) -> "GridScalarField":
        return GridScalarField(self.values.copy(), self.grid)

    def with_dirichlet(self) -> "GridScalarField":
        return GridScalarField(apply_dirichlet(self.values.copy()), self.grid)

    def __add__(self, other):
        return GridScalarField(self.values + _vals(other), self.grid)

    def __sub__(self, other):
        return GridScalarField(self.values - _vals(other), self.grid)

    def __mul__(self, t):
        return GridScalarField(self.values * t, self.grid)

    __rmul__ = __mul__


@dataclass
class GridVectorField:
    """Vector field with components stacked on the first axis."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.d,) + self.grid.shape
        if self.values.shape != expected:
            raise ParameterError(f"vector field shape {self.values.shape} != {expected}")

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def sup(self) -> float:
        return float(self.magnitude().max())

    def l1_speed(self) -> float:
        """max over nodes of sum_i |b_i|, the quantity entering the upwind CFL."""
        return float(np.abs(self.values).sum(axis=0).max())

    def norm2(self) -> float:
        return lp_norm(self.magnitude(), self.grid, 2)

    def __sub__(self, other):
        return GridVectorField(self.values - other.values, self.grid)

    def __mul__(self, t):
        return GridVectorField(self.values * t, self.grid)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: Grid) -> "GridVectorField":
        return cls(np.zeros((grid.d,) + grid.shape), grid)


def _vals(x):
    return x.values if isinstance(x, (GridScalarField, GridVectorField)) else x


def apply_dirichlet(a: np.ndarray) -> np.ndarray:
    """Zero the boundary layer of ``a`` in place and return it."""
    for ax in range(a.ndim):
        idx = [slice(None)] * a.ndim
        idx[ax] = 0
        a[tuple(idx)] = 0.0
        idx[ax] = -1
        a[tuple(idx)] = 0.0
    return a


def lp_norm(values: np.ndarray, grid: Grid, p=2) -> float:
    a = np.abs(values)
    if p == np.inf or p == "inf":
        return float(a.max()) if a.size else 0.0
    p = float(p)
    s = np.sum(a ** p) * grid.cell_volume
    return float(s ** (1.0 / p))


def forward_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward differences with zero extension outside the box.

    Returns an array of shape ``(d,) + shape``; component ``i`` at node ``j``
    is ``(u[j + e_i] - u[j]) / h`` with ``u = 0`` beyond the last node.
    """
    h = grid.h
    out = np.empty((grid.d,) + values.shape)
    for ax in range(grid.d):
        nxt = np.zeros_like(values)
        src = [slice(None)] * grid.d
        dst = [slice(None)] * grid.d
        src[ax] = slice(1, None)
        dst[ax] = slice(None, -1)
        nxt[tuple(dst)] = values[tuple(src)]
        out[ax] = (nxt - values) / h
    return out


def dirichlet_energy(values: np.ndarray, grid: Grid) -> float:
    """Discrete ``||grad u||_2^2`` from forward differences (zero boundary)."""
    g = forward_gradient(apply_dirichlet(values.copy()), grid)
    return float(np.sum(g * g) * grid.cell_volume)


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Five/seven-point Laplacian on interior nodes; boundary rows are zero."""
    h2 = grid.h ** 2
    u = apply_dirichlet(values.copy())
    out = np.zeros_like(u)
    core = grid.interior
    for ax in range(grid.d):
        lo = list(core)
        hi = list(core)
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        out[core] += u[tuple(lo)] + u[tuple(hi)] - 2.0 * u[core]
    out[core] /= h2
    return out


class DirichletLaplacian:
    """Exact solves with ``mu - Delta_h`` on the box by sine transforms.

    The discrete Dirichlet Laplacian is diagonal in the DST-I basis, so every
    shifted inverse costs two transforms and is exact to rounding.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.N - 1
        k = np.arange(1, grid.N - 1)
        lam1 = (4.0 / grid.h ** 2) * np.sin(np.pi * k / (2.0 * n)) ** 2
        eig = np.zeros((grid.N - 2,) * grid.d)
        for ax in range(grid.d):
            shape = [1] * grid.d
            shape[ax] = grid.N - 2
            eig = eig + lam1.reshape(shape)
        self.eigenvalues = eig

    def solve(self, rhs: np.ndarray, mu: float, scale: float = 1.0) -> np.ndarray:
        """Return ``u`` with ``(mu + scale * (-Delta_h)) u = rhs`` and ``u = 0`` on the boundary."""
        core = self.grid.interior
        r = fft.dstn(rhs[core], type=1)
        r /= mu + scale * self.eigenvalues
        out = np.zeros(self.grid.shape)
        out[core] = fft.idstn(r, type=1)
        return out

    def apply(self, values: np.ndarray, mu: float = 0.0) -> np.ndarray:
        """``(mu - Delta_h) u`` through the spectral representation."""
        core = self.grid.interior
        r = fft.dstn(values[core], type=1)
        r *= mu + self.eigenvalues
        out = np.zeros(self.grid.shape)
        out[core] = fft.idstn(r, type=1)
        return out


def multilinear_interpolate(values: np.ndarray, grid: Grid, x) -> np.ndarray:
    """Multilinear interpolation of scalar or stacked vector data at point ``x``."""
    x = np.asarray(x, dtype=float)
    s = (x + grid.L) / grid.h
    i0 = np.clip(np.floor(s).astype(int), 0, grid.N - 2)
    w = s - i0
    vector = values.ndim == grid.d + 1
    out = 0.0
    for corner in range(2 ** grid.d):
        weight = 1.0
        idx = []
        for ax in range(grid.d):
            bit = (corner >> ax) & 1
            weight *= w[ax] if bit else 1.0 - w[ax]
            idx.append(i0[ax] + bit)
        if weight == 0.0:
            continue
        sample = values[(slice(None),) + tuple(idx)] if vector else values[tuple(idx)]
        out = out + weight * sample
    return np.asarray(out, dtype=float)


def interpolate_points(values: np.ndarray, grid: Grid, pts) -> np.ndarray:
    """Multilinear interpolation of scalar data at points ``(m, d)``; zero outside the box."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = pts.shape[0]
    s = (pts + grid.L) / grid.h
    inside = np.all((s >= 0.0) & (s <= grid.N - 1), axis=1)
    i0 = np.clip(np.floor(s).astype(np.int64), 0, grid.N - 2)
    w = s - i0
    out = np.zeros(m)
    for corner in range(2 ** grid.d):
        weight = np.ones(m)
        idx = []
        for ax in range(grid.d):
            bit = (corner >> ax) & 1
            weight *= w[:, ax] if bit else 1.0 - w[:, ax]
            idx.append(i0[:, ax] + bit)
        out += weight * values[tuple(idx)]
    out[~inside] = 0.0
    return out


def field_fingerprint(vf) -> str:
    """Short hash of a field's grid and values; ``"none"`` for ``None``."""
    if vf is None:
        return "none"
    h = hashlib.sha1(json.dumps(vf.grid.to_dict(), sort_keys=True).encode())
    h.update(np.ascontiguousarray(vf.values, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_field(path, field: GridScalarField, meta: dict | None = None) -> None:
    """Write ``path`` (raw little-endian float64) and ``path + '.json'`` header."""
    arr = np.ascontiguousarray(field.values, dtype="<f8")
    arr.tofile(path)
    header = {"dtype": "float64", "byteorder": "little", "order": "C",
              "shape": list(arr.shape), "grid": field.grid.to_dict()}
    if meta:
        header.update(meta)
    with open(str(path) + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)


def load_field(path) -> GridScalarField:
    with open(str(path) + ".json") as fh:
        header = json.load(fh)
    grid = Grid.from_dict(header["grid"])
    arr = np.fromfile(path, dtype="<f8").reshape(header["shape"])
    return GridScalarField(arr, grid)
