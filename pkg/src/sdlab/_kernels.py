"""Hot loops: upwind advection, truncated convolution, Euler-Maruyama paths.

Every kernel has a numba ``@njit`` implementation and a pure-numpy fallback
with the same signature. The fallback is selected by setting the environment
variable ``SDLAB_DISABLE_NUMBA=1`` before import, or automatically when numba
is missing. ``benchmarks/bench_kernels.py`` times both paths.

Random numbers for the path kernel come from a counter-based stream: draw
``k`` of path ``i`` is ``mix(key(seed, i) + k * GOLDEN)`` where ``mix`` is the
SplitMix64 finalizer. Any path can be regenerated without touching the others,
so results do not depend on thread count or path ordering.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLED = os.environ.get("SDLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SDLAB_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the default probe warns when TBB is older than numba expects
        numba.config.THREADING_LAYER = "workqueue"

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 1.0 / 9007199254740992.0

# path status codes
RUNNING, HIT, EXITED, FINISHED = 0, 1, 2, 3


def set_threads(n: int) -> None:
    if HAVE_NUMBA and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def _strides(n: int, d: int) -> np.ndarray:
    return np.array([n ** (d - 1 - ax) for ax in range(d)], dtype=np.int64)


# ---------------------------------------------------------------------------
# upwind advection  b . grad_h u
# ---------------------------------------------------------------------------

def _upwind_np(u, b, h):
    d = u.ndim
    out = np.zeros_like(u)
    core = (slice(1, -1),) * d
    uc = u[core]
    for ax in range(d):
        lo = list(core)
        hi = list(core)
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        bi = b[ax][core]
        back = uc - u[tuple(lo)]
        fwd = u[tuple(hi)] - uc
        out[core] += np.where(bi > 0.0, bi * back, bi * fwd)
    out[core] /= h
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _upwind_flat(u, b, h, strides, n):
        d = b.shape[0]
        size = u.size
        out = np.zeros(size)
        for idx in range(size):
            inside = True
            for ax in range(d):
                i = (idx // strides[ax]) % n
                if i == 0 or i == n - 1:
                    inside = False
                    break
            if not inside:
                continue
            acc = 0.0
            uc = u[idx]
            for ax in range(d):
                s = strides[ax]
                bi = b[ax, idx]
                if bi > 0.0:
                    acc += bi * (uc - u[idx - s])
                else:
                    acc += bi * (u[idx + s] - uc)
            out[idx] = acc / h
        return out

    def upwind_advection(u, b, h):
        n = u.shape[0]
        d = u.ndim
        flat = _upwind_flat(np.ascontiguousarray(u).reshape(-1),
                            np.ascontiguousarray(b).reshape(d, -1), float(h),
                            _strides(n, d), n)
        return flat.reshape(u.shape)

else:
    upwind_advection = _upwind_np

upwind_advection.__doc__ = """Upwind ``b . grad_h u`` on interior nodes (zero on the boundary layer).

Backward difference along axis ``i`` where ``b_i > 0``, forward otherwise,
so ``-b . grad_h`` has non-negative off-diagonal weights.
"""


# ---------------------------------------------------------------------------
# truncated convolution with a compact stencil (zero extension)
# ---------------------------------------------------------------------------

def _convolve_np(src, offsets, weights):
    n = src.shape[0]
    d = src.ndim
    out = np.zeros_like(src)
    for off, w in zip(offsets, weights):
        dst_sl = []
        src_sl = []
        for ax in range(d):
            o = int(off[ax])
            if o >= 0:
                dst_sl.append(slice(0, n - o))
                src_sl.append(slice(o, n))
            else:
                dst_sl.append(slice(-o, n))
                src_sl.append(slice(0, n + o))
        out[tuple(dst_sl)] += w * src[tuple(src_sl)]
    return out


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _convolve_flat(src, n, strides, offsets, weights):
        # offset-outer loop: each offset streams contiguous rows of the last axis
        d = offsets.shape[1]
        out = np.zeros(src.size)
        lo = np.empty(d, dtype=np.int64)
        hi = np.empty(d, dtype=np.int64)
        for k in range(weights.size):
            empty = False
            shift = 0
            nrows = 1
            for ax in range(d):
                o = offsets[k, ax]
                lo[ax] = max(0, -o)
                hi[ax] = min(n, n - o)
                if hi[ax] <= lo[ax]:
                    empty = True
                shift += o * strides[ax]
                if ax < d - 1:
                    nrows *= hi[ax] - lo[ax]
            if empty:
                continue
            w = weights[k]
            a = lo[d - 1]
            b = hi[d - 1]
            for r in prange(nrows):
                rem = r + 0  # a copy; numba forbids rebinding the prange index
                base = 0
                for ax in range(d - 2, -1, -1):
                    span = hi[ax] - lo[ax]
                    base += (lo[ax] + rem % span) * strides[ax]
                    rem //= span
                for i in range(base + a, base + b):
                    out[i] += w * src[i + shift]
        return out

    def convolve_stencil(src, offsets, weights):
        n = src.shape[0]
        d = src.ndim
        flat = _convolve_flat(np.ascontiguousarray(src).reshape(-1), n, _strides(n, d),
                              np.ascontiguousarray(offsets, dtype=np.int64),
                              np.ascontiguousarray(weights, dtype=np.float64))
        return flat.reshape(src.shape)

else:
    convolve_stencil = _convolve_np

convolve_stencil.__doc__ = """``out[j] = sum_k weights[k] * src[j + offsets[k]]`` with zero outside the array."""


# ---------------------------------------------------------------------------
# counter-based random stream
# ---------------------------------------------------------------------------

def _mix_np(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, paths) -> np.ndarray:
    """Per-path stream keys derived from ``(seed, path index)``."""
    idx = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = _mix_np(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
        return _mix_np(s ^ _mix_np(idx + GOLDEN))


def uniforms_np(keys, counters):
    with np.errstate(over="ignore"):
        z = _mix_np(np.asarray(keys, dtype=np.uint64)
                    + np.asarray(counters, dtype=np.uint64) * GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _TWO53


if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @njit(cache=True, inline="always")
    def _uniform_nb(key, counter):
        z = _mix_nb(key + np.uint64(counter) * np.uint64(0x9E3779B97F4A7C15))
        return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Euler-Maruyama paths for  dX = -coef * x / max(|x|, eps_reg)^2 dt + sqrt(2) dB
# or for a grid-sampled drift dX = -b(X) dt + sqrt(2) dB
# ---------------------------------------------------------------------------
#
# params layout (float64 array):
#   0 coef, 1 eps_reg, 2 eps_hit, 3 dt, 4 T, 5 box (exit when max|x_i| > box),
#   6 adaptive (0/1), 7 gamma, 8 h_min, 9 bridge (0/1)
# grid layout: gL, gh, gn (gn == 0 means analytic Hardy drift)


if HAVE_NUMBA:

    @njit(cache=True)
    def _grid_drift_nb(x, gvals, gL, gh, gn, out):
        d = x.shape[0]
        for ax in range(d):
            out[ax] = 0.0
        i0 = np.empty(d, dtype=np.int64)
        w = np.empty(d)
        for ax in range(d):
            s = (x[ax] + gL) / gh
            if s < 0.0 or s > gn - 1:
                return
            k = int(math.floor(s))
            if k > gn - 2:
                k = gn - 2
            i0[ax] = k
            w[ax] = s - k
        for corner in range(2 ** d):
            weight = 1.0
            flat = 0
            for ax in range(d):
                bit = (corner >> ax) & 1
                if bit == 1:
                    weight *= w[ax]
                else:
                    weight *= 1.0 - w[ax]
                flat = flat * gn + i0[ax] + bit
            if weight != 0.0:
                for ax in range(d):
                    out[ax] += weight * gvals[ax, flat]

    @njit(cache=True, parallel=True)
    def _paths_nb(x0, M, keys, params, gvals, ggeom):
        d = x0.shape[0]
        coef, eps_reg, eps_hit, dt, T = params[0], params[1], params[2], params[3], params[4]
        box, adaptive, gamma, h_min, bridge = params[5], params[6] > 0.5, params[7], params[8], params[9] > 0.5
        gL, gh, gn = ggeom[0], ggeom[1], int(ggeom[2])
        end = np.empty((M, d))
        status = np.zeros(M, dtype=np.int64)
        t_stop = np.zeros(M)
        sup = np.zeros(M)
        steps = np.zeros(M, dtype=np.int64)
        for p in prange(M):
            key = keys[p]
            ctr = 0
            x = x0.copy()
            drift = np.empty(d)
            z = np.empty(d + 1)
            t = 0.0
            r = 0.0
            for ax in range(d):
                r += x[ax] * x[ax]
            r = math.sqrt(r)
            smax = r
            st = RUNNING
            if eps_hit > 0.0 and r <= eps_hit:
                st = HIT
            n = 0
            while st == RUNNING:
                if T - t <= 1e-14 * max(T, 1.0):
                    st = FINISHED
                    break
                h = min(dt, T - t)
                if gn > 0:
                    _grid_drift_nb(x, gvals, gL, gh, gn, drift)
                    for ax in range(d):
                        drift[ax] = -drift[ax]
                else:
                    rr = max(r, eps_reg)
                    for ax in range(d):
                        drift[ax] = -coef * x[ax] / (rr * rr)
                if adaptive and eps_hit > 0.0:
                    s = r - eps_hit
                    hs = gamma * s * s
                    if coef > 0.0:
                        hs = min(hs, 0.25 * s * max(r, eps_reg) / coef)
                    h = min(h, max(hs, h_min))
                # normals by Box-Muller from pairs of uniforms
                k = 0
                while k < d:
                    u1 = _uniform_nb(key, ctr)
                    u2 = _uniform_nb(key, ctr + 1)
                    ctr += 2
                    rad = math.sqrt(-2.0 * math.log(1.0 - u1))
                    z[k] = rad * math.cos(2.0 * math.pi * u2)
                    if k + 1 < d + 1:
                        z[k + 1] = rad * math.sin(2.0 * math.pi * u2)
                    k += 2
                sq = math.sqrt(2.0 * h)
                rn = 0.0
                out_box = False
                for ax in range(d):
                    x[ax] = x[ax] + drift[ax] * h + sq * z[ax]
                    rn += x[ax] * x[ax]
                    if abs(x[ax]) > box:
                        out_box = True
                rn = math.sqrt(rn)
                t += h
                n += 1
                if rn > smax:
                    smax = rn
                if eps_hit > 0.0:
                    ub = 1.0
                    pb = 0.0
                    if bridge:
                        a = r - eps_hit
                        c = rn - eps_hit
                        pb = math.exp(-a * c / h) if a > 0.0 else 1.0
                        ub = _uniform_nb(key, ctr)
                        ctr += 1
                    if rn <= eps_hit or ub < pb:
                        st = HIT
                if st == RUNNING and out_box:
                    st = EXITED
                r = rn
            for ax in range(d):
                end[p, ax] = x[ax]
            status[p] = st
            t_stop[p] = t
            sup[p] = smax
            steps[p] = n
        return end, status, t_stop, sup, steps


def _grid_drift_np(x, gvals, gL, gh, gn):
    """Multilinear interpolation of a flattened grid field at points ``x`` (m, d)."""
    m, d = x.shape
    out = np.zeros((m, d))
    s = (x + gL) / gh
    inside = np.all((s >= 0.0) & (s <= gn - 1), axis=1)
    i0 = np.clip(np.floor(s).astype(np.int64), 0, gn - 2)
    w = s - i0
    for corner in range(2 ** d):
        weight = np.ones(m)
        flat = np.zeros(m, dtype=np.int64)
        for ax in range(d):
            bit = (corner >> ax) & 1
            weight *= w[:, ax] if bit else 1.0 - w[:, ax]
            flat = flat * gn + i0[:, ax] + bit
        out += weight[:, None] * gvals[:, flat].T
    out[~inside] = 0.0
    return out


def _paths_np(x0, M, keys, params, gvals, ggeom):
    d = x0.shape[0]
    coef, eps_reg, eps_hit, dt, T = params[:5]
    box, adaptive, gamma, h_min, bridge = params[5], params[6] > 0.5, params[7], params[8], params[9] > 0.5
    gL, gh, gn = ggeom[0], ggeom[1], int(ggeom[2])
    x = np.tile(x0, (M, 1)).astype(float)
    r = np.sqrt(np.sum(x * x, axis=1))
    sup = r.copy()
    t = np.zeros(M)
    ctr = np.zeros(M, dtype=np.uint64)
    steps = np.zeros(M, dtype=np.int64)
    status = np.zeros(M, dtype=np.int64)
    if eps_hit > 0.0:
        status[r <= eps_hit] = HIT
    npairs = (d + 1) // 2
    while True:
        done = (T - t) <= 1e-14 * max(T, 1.0)
        status[(status == RUNNING) & done] = FINISHED
        act = np.nonzero(status == RUNNING)[0]
        if act.size == 0:
            break
        xa = x[act]
        ra = r[act]
        h = np.minimum(dt, T - t[act])
        if gn > 0:
            drift = -_grid_drift_np(xa, gvals, gL, gh, gn)
        else:
            rr = np.maximum(ra, eps_reg)
            drift = -coef * xa / (rr * rr)[:, None]
        if adaptive and eps_hit > 0.0:
            s = ra - eps_hit
            hs = gamma * s * s
            if coef > 0.0:
                hs = np.minimum(hs, 0.25 * s * np.maximum(ra, eps_reg) / coef)
            h = np.minimum(h, np.maximum(hs, h_min))
        z = np.empty((act.size, 2 * npairs))
        c = ctr[act]
        ka = keys[act]
        for k in range(npairs):
            u1 = uniforms_np(ka, c)
            u2 = uniforms_np(ka, c + np.uint64(1))
            c = c + np.uint64(2)
            rad = np.sqrt(-2.0 * np.log(1.0 - u1))
            z[:, 2 * k] = rad * np.cos(2.0 * np.pi * u2)
            z[:, 2 * k + 1] = rad * np.sin(2.0 * np.pi * u2)
        xa = xa + drift * h[:, None] + np.sqrt(2.0 * h)[:, None] * z[:, :d]
        rn = np.sqrt(np.sum(xa * xa, axis=1))
        out_box = np.any(np.abs(xa) > box, axis=1)
        st = np.full(act.size, RUNNING)
        if eps_hit > 0.0:
            hit = rn <= eps_hit
            if bridge:
                a = ra - eps_hit
                cc = rn - eps_hit
                with np.errstate(over="ignore"):
                    pb = np.where(a > 0.0, np.exp(-a * cc / h), 1.0)
                ub = uniforms_np(ka, c)
                c = c + np.uint64(1)
                hit |= (~hit) & (ub < pb)
            st[hit] = HIT
        st[(st == RUNNING) & out_box] = EXITED
        x[act] = xa
        r[act] = rn
        sup[act] = np.maximum(sup[act], rn)
        t[act] += h
        steps[act] += 1
        ctr[act] = c
        status[act] = st
    return x, status, t, sup, steps


def simulate_paths(x0, M, keys, params, gvals=None, ggeom=None):
    """Run ``M`` Euler-Maruyama paths; see the module docstring for layouts.

    Returns ``(endpoints, status, stop_time, sup_radius, steps)``.
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    params = np.ascontiguousarray(params, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if gvals is None:
        gvals = np.zeros((x0.shape[0], 1))
        ggeom = np.array([0.0, 1.0, 0.0])
    gvals = np.ascontiguousarray(gvals, dtype=np.float64)
    ggeom = np.ascontiguousarray(ggeom, dtype=np.float64)
    if HAVE_NUMBA:
        return _paths_nb(x0, int(M), keys, params, gvals, ggeom)
    return _paths_np(x0, int(M), keys, params, gvals, ggeom)
