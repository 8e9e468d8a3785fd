"""Hot loops with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time.  Setting the environment
variable ``FLMICRO_DISABLE_NUMBA=1`` (or running without numba installed)
selects the numpy implementations.  ``FLMICRO_THREADS`` caps the number of
numba worker threads.

Every kernel exists in both flavours with identical signatures so that
the benchmark in ``benchmarks/bench_kernels.py`` and the backend tests can
call them side by side.  All parallel loops write disjoint output slots,
so results do not depend on the thread count.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

# old system TBB; numba falls back to another threading layer
warnings.filterwarnings("ignore", message="The TBB threading layer")

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


USE_NUMBA = _HAVE_NUMBA and os.environ.get("FLMICRO_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:  # pragma: no branch
    _threads = os.environ.get("FLMICRO_THREADS")
    if _threads:
        try:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass


def backend_name() -> str:
    """Return ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Mask stamping: mark grid points with sum_j d_j^(2 m_j) < T around generators
# ---------------------------------------------------------------------------
#
# Each ball meets a row along axis 0 in a contiguous run of indices, so a
# generator only writes the two ends of each run into an integer difference
# array; a cumulative sum along axis 0 then yields the union.


@njit(cache=True)
def _pow_half(d, m):
    d2 = d * d
    p = 1.0
    for _ in range(m):
        p *= d2
    return p


@njit(cache=True)
def _stamp_nb(ax0, ax1, ax2, h, gens, thresholds, halfexp, diff):
    n0 = ax0.shape[0]
    n1 = ax1.shape[0]
    n2 = ax2.shape[0]
    for g in range(gens.shape[0]):
        T = thresholds[g]
        if not T > 0.0:
            continue
        b1 = T ** (1.0 / (2.0 * halfexp[1]))
        b2 = T ** (1.0 / (2.0 * halfexp[2]))
        l1 = max(int(math.ceil((gens[g, 1] - b1 - ax1[0]) / h[1])) - 1, 0)
        u1 = min(int(math.floor((gens[g, 1] + b1 - ax1[0]) / h[1])) + 1, n1 - 1)
        l2 = max(int(math.ceil((gens[g, 2] - b2 - ax2[0]) / h[2])) - 1, 0)
        u2 = min(int(math.floor((gens[g, 2] + b2 - ax2[0]) / h[2])) + 1, n2 - 1)
        for i1 in range(l1, u1 + 1):
            s1 = _pow_half(ax1[i1] - gens[g, 1], halfexp[1])
            for i2 in range(l2, u2 + 1):
                rest = s1 + _pow_half(ax2[i2] - gens[g, 2], halfexp[2])
                if not rest < T:
                    continue
                b0 = (T - rest) ** (1.0 / (2.0 * halfexp[0]))
                lo = max(int(math.ceil((gens[g, 0] - b0 - ax0[0]) / h[0])) - 1, 0)
                hi = min(int(math.floor((gens[g, 0] + b0 - ax0[0]) / h[0])) + 1, n0 - 1)
                while lo <= hi and not (_pow_half(ax0[lo] - gens[g, 0], halfexp[0]) + rest < T):
                    lo += 1
                while hi >= lo and not (_pow_half(ax0[hi] - gens[g, 0], halfexp[0]) + rest < T):
                    hi -= 1
                if lo <= hi:
                    diff[lo, i1, i2] += 1
                    diff[hi + 1, i1, i2] -= 1


def _ipow(a: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(a)
    for _ in range(k):
        out = out * a
    return out


def _stamp_np(ax0, ax1, ax2, h, gens, thresholds, halfexp, diff, budget=1 << 22):
    n0, n1, n2 = ax0.size, ax1.size, ax2.size
    m0, m1, m2 = (int(v) for v in halfexp)
    keep = np.nonzero(thresholds > 0.0)[0]
    G, T = gens[keep], thresholds[keep]
    b1 = T ** (1.0 / (2.0 * m1))
    b2 = T ** (1.0 / (2.0 * m2))
    l1 = np.maximum(np.ceil((G[:, 1] - b1 - ax1[0]) / h[1]).astype(np.int64) - 1, 0)
    u1 = np.minimum(np.floor((G[:, 1] + b1 - ax1[0]) / h[1]).astype(np.int64) + 1, n1 - 1)
    l2 = np.maximum(np.ceil((G[:, 2] - b2 - ax2[0]) / h[2]).astype(np.int64) - 1, 0)
    u2 = np.minimum(np.floor((G[:, 2] + b2 - ax2[0]) / h[2]).astype(np.int64) + 1, n2 - 1)
    live = (u1 >= l1) & (u2 >= l2)
    G, T, l1, u1, l2, u2 = G[live], T[live], l1[live], u1[live], l2[live], u2[live]
    if not len(G):
        return
    W1, W2 = int((u1 - l1).max()) + 1, int((u2 - l2).max()) + 1
    chunk = max(1, budget // (W1 * W2))
    r1, r2 = np.arange(W1), np.arange(W2)
    counts = np.zeros(diff.size, dtype=np.int64)
    for start in range(0, len(G), chunk):
        sl = slice(start, start + chunk)
        g, t = G[sl], T[sl]
        I1 = l1[sl, None] + r1[None, :]
        I2 = l2[sl, None] + r2[None, :]
        s1 = _ipow((ax1[np.minimum(I1, n1 - 1)] - g[:, 1:2]) ** 2, m1)
        s2 = _ipow((ax2[np.minimum(I2, n2 - 1)] - g[:, 2:3]) ** 2, m2)
        s1[I1 > u1[sl, None]] = np.inf
        s2[I2 > u2[sl, None]] = np.inf
        rest = s1[:, :, None] + s2[:, None, :]
        gi, a1, a2 = np.nonzero(rest < t[:, None, None])
        if not gi.size:
            continue
        rest = rest[gi, a1, a2]
        i1, i2 = I1[gi, a1], I2[gi, a2]
        tg, c0 = t[gi], g[gi, 0]
        b0 = (tg - rest) ** (1.0 / (2.0 * m0))
        lo = np.maximum(np.ceil((c0 - b0 - ax0[0]) / h[0]).astype(np.int64) - 1, 0)
        hi = np.minimum(np.floor((c0 + b0 - ax0[0]) / h[0]).astype(np.int64) + 1, n0 - 1)

        def inside(idx):
            return _ipow((ax0[np.clip(idx, 0, n0 - 1)] - c0) ** 2, m0) + rest < tg

        while True:
            bad = (lo <= hi) & ~inside(lo)
            if not bad.any():
                break
            lo = np.where(bad, lo + 1, lo)
        while True:
            bad = (hi >= lo) & ~inside(hi)
            if not bad.any():
                break
            hi = np.where(bad, hi - 1, hi)
        ok = lo <= hi
        lo, hi, i1, i2 = lo[ok], hi[ok], i1[ok], i2[ok]
        counts += np.bincount((lo * n1 + i1) * n2 + i2, minlength=diff.size)
        counts -= np.bincount(((hi + 1) * n1 + i1) * n2 + i2, minlength=diff.size)
    diff += counts.reshape(diff.shape)


def stamp_mask(axes, gens, thresholds, halfexp) -> np.ndarray:
    """Union of anisotropic balls ``sum_j (xi_j - g_j)^(2 m_j) < T_g``.

    Parameters
    ----------
    axes : sequence of 1-D arrays
        Uniform coordinate axes, one per dimension (``n <= 3``).
    gens : ndarray, shape (G, n)
        Ball centres (anywhere, not necessarily on the grid).
    thresholds : ndarray, shape (G,)
        Right-hand side ``T_g``; non-positive entries are skipped.
    halfexp : sequence of int
        The half exponents ``m_j``.

    Returns
    -------
    ndarray of bool with shape ``tuple(len(a) for a in axes)``.
    """
    n = len(axes)
    ax = [np.ascontiguousarray(a, dtype=np.float64) for a in axes] + [np.zeros(1)] * (3 - n)
    h = np.array([(a[1] - a[0]) if a.size > 1 else 1.0 for a in ax])
    g = np.zeros((len(gens), 3))
    if len(gens):
        g[:, :n] = np.asarray(gens, dtype=np.float64).reshape(len(gens), n)
    he = np.ones(3, dtype=np.int64)
    he[:n] = np.asarray(halfexp, dtype=np.int64)
    diff = np.zeros((ax[0].size + 1, ax[1].size, ax[2].size), dtype=np.int64)
    th = np.ascontiguousarray(thresholds, dtype=np.float64)
    if USE_NUMBA:
        _stamp_nb(ax[0], ax[1], ax[2], h, g, th, he, diff)
    else:
        _stamp_np(ax[0], ax[1], ax[2], h, g, th, he, diff)
    out = np.cumsum(diff, axis=0)[:-1] > 0
    return out.reshape(tuple(a.size for a in ax[:n]))


# ---------------------------------------------------------------------------
# Variable-radius mollification with the standard C^infinity bump
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _mollify_nb(values, radius, h, kmax, out):
    n0, n1 = values.shape
    for i0 in prange(n0):
        for i1 in range(n1):
            r = radius[i0, i1]
            num = 0.0
            den = 0.0
            for o0 in range(-kmax, kmax + 1):
                j0 = i0 + o0
                if j0 < 0 or j0 >= n0:
                    continue
                for o1 in range(-kmax, kmax + 1):
                    j1 = i1 + o1
                    if j1 < 0 or j1 >= n1:
                        continue
                    rho2 = ((o0 * h[0]) ** 2 + (o1 * h[1]) ** 2) / (r * r) if r > 0 else (0.0 if (o0 == 0 and o1 == 0) else 2.0)
                    if rho2 < 1.0:
                        wgt = math.exp(-1.0 / (1.0 - rho2))
                        num += wgt * values[j0, j1]
                        den += wgt
            out[i0, i1] = num / den


def _mollify_np(values, radius, h, kmax, out):
    n0, n1 = values.shape
    num = np.zeros_like(values)
    den = np.zeros_like(values)
    r2 = radius * radius
    pad = np.zeros((n0 + 2 * kmax, n1 + 2 * kmax))
    pad[kmax : kmax + n0, kmax : kmax + n1] = values
    inside = np.zeros_like(pad, dtype=bool)
    inside[kmax : kmax + n0, kmax : kmax + n1] = True
    for o0 in range(-kmax, kmax + 1):
        for o1 in range(-kmax, kmax + 1):
            dist2 = (o0 * h[0]) ** 2 + (o1 * h[1]) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                rho2 = np.where(radius > 0, dist2 / np.where(r2 > 0, r2, 1.0), 0.0 if (o0 == 0 and o1 == 0) else 2.0)
            shifted = pad[kmax + o0 : kmax + o0 + n0, kmax + o1 : kmax + o1 + n1]
            valid = inside[kmax + o0 : kmax + o0 + n0, kmax + o1 : kmax + o1 + n1] & (rho2 < 1.0)
            wgt = np.zeros_like(values)
            wgt[valid] = np.exp(-1.0 / (1.0 - rho2[valid]))
            num += wgt * shifted
            den += wgt
    out[...] = num / den


def mollify(values: np.ndarray, radius: np.ndarray, spacing) -> np.ndarray:
    """Average a 2-D array with a bump of point-dependent radius.

    ``out[i] = sum_k phi(|x_k - x_i| / r_i) v_k / sum_k phi(...)`` with
    ``phi(t) = exp(-1 / (1 - t^2))`` on ``t < 1``.  Points whose radius is
    below one cell keep their own value.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    radius = np.ascontiguousarray(radius, dtype=np.float64)
    h = np.asarray(spacing, dtype=np.float64)
    kmax = int(np.ceil(radius.max() / h.min())) if radius.size else 0
    out = np.empty_like(values)
    if USE_NUMBA:
        _mollify_nb(values, radius, h, kmax, out)
    else:
        _mollify_np(values, radius, h, kmax, out)
    return out


# ---------------------------------------------------------------------------
# Direct quantization sum
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _quantize_nb(xs, xis, avals, fhat, out):
    nx = xs.shape[0]
    nk = xis.shape[0]
    n = xs.shape[1]
    for j in prange(nx):
        acc = 0.0 + 0.0j
        for k in range(nk):
            ph = 0.0
            for d in range(n):
                ph += xs[j, d] * xis[k, d]
            acc += complex(math.cos(ph), math.sin(ph)) * avals[j, k] * fhat[k]
        out[j] = acc


def _quantize_np(xs, xis, avals, fhat, out):
    phase = np.exp(1j * (xs @ xis.T))
    out[:] = (phase * avals) @ fhat


def direct_quantize(xs, xis, avals, fhat) -> np.ndarray:
    """Return ``sum_k exp(i x_j . xi_k) a[j, k] fhat[k]`` for every row ``j``."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    xis = np.ascontiguousarray(xis, dtype=np.float64)
    avals = np.ascontiguousarray(avals, dtype=np.complex128)
    fhat = np.ascontiguousarray(fhat, dtype=np.complex128)
    out = np.empty(xs.shape[0], dtype=np.complex128)
    if USE_NUMBA:
        _quantize_nb(xs, xis, avals, fhat, out)
    else:
        _quantize_np(xs, xis, avals, fhat, out)
    return out


# ---------------------------------------------------------------------------
# Discrete kernel operator  Tg(xi_i) = sum_j F[i, j] f[zeta(i, j), j] g[j]
# ---------------------------------------------------------------------------


@njit(cache=True)
def _kernel_nb(F, f, zidx, g, out):
    ni, nj = F.shape
    for i in range(ni):
        acc = 0.0 + 0.0j
        for j in range(nj):
            z = zidx[i, j]
            if z >= 0:
                acc += F[i, j] * f[z, j] * g[j]
        out[i] = acc


def _kernel_np(F, f, zidx, g, out):
    cols = np.broadcast_to(np.arange(F.shape[1]), zidx.shape)
    valid = zidx >= 0
    vals = np.zeros(F.shape, dtype=np.complex128)
    vals[valid] = f[zidx[valid], cols[valid]]
    out[:] = (F * vals) @ g


def kernel_sum(F, f, zidx, g) -> np.ndarray:
    """Apply the sampled kernel operator; ``zidx < 0`` marks dropped terms."""
    F = np.ascontiguousarray(F, dtype=np.complex128)
    f = np.ascontiguousarray(f, dtype=np.complex128)
    zidx = np.ascontiguousarray(zidx, dtype=np.int64)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    out = np.empty(F.shape[0], dtype=np.complex128)
    if USE_NUMBA:
        _kernel_nb(F, f, zidx, g, out)
    else:
        _kernel_np(F, f, zidx, g, out)
    return out


# ---------------------------------------------------------------------------
# Distance to a union of M-cones:  min_{t, eta} |t^(-1/M) xi - eta|_M
# ---------------------------------------------------------------------------

_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@njit(cache=True)
def _mdist_min(xi, s, etas, cand, invm, halfexp):
    n = xi.shape[0]
    best = np.inf
    arg = -1
    for c in range(cand.shape[0]):
        e = cand[c]
        acc = 0.0
        for d in range(n):
            acc += _pow_half(xi[d] * math.exp(-s * invm[d]) - etas[e, d], halfexp[d])
            if acc >= best:
                break
        if acc < best:
            best = acc
            arg = e
    return math.sqrt(best), arg


@njit(cache=True, parallel=True)
def _cone_nb(points, etas, cands, invm, halfexp, offsets, iters, dist, tbest, ebest):
    npts = points.shape[0]
    ns = offsets.shape[0]
    shared = cands.shape[0] == 1
    for p in prange(npts):
        xi = points[p]
        cand = cands[0] if shared else cands[p]
        r2 = 0.0
        for d in range(xi.shape[0]):
            r2 += _pow_half(xi[d], halfexp[d])
        if r2 == 0.0:
            dist[p] = np.inf
            tbest[p] = np.nan
            ebest[p] = -1
            continue
        s0 = 0.5 * math.log(r2)
        bval = np.inf
        bk = 0
        barg = -1
        for k in range(ns):
            v, a = _mdist_min(xi, s0 + offsets[k], etas, cand, invm, halfexp)
            if v < bval:
                bval = v
                bk = k
                barg = a
        lo = s0 + offsets[max(bk - 1, 0)]
        hi = s0 + offsets[min(bk + 1, ns - 1)]
        bs = s0 + offsets[bk]
        c = hi - _GOLD * (hi - lo)
        dd = lo + _GOLD * (hi - lo)
        fc, ac = _mdist_min(xi, c, etas, cand, invm, halfexp)
        fd, ad = _mdist_min(xi, dd, etas, cand, invm, halfexp)
        for _ in range(iters):
            if fc < fd:
                hi = dd
                dd = c
                fd = fc
                ad = ac
                c = hi - _GOLD * (hi - lo)
                fc, ac = _mdist_min(xi, c, etas, cand, invm, halfexp)
            else:
                lo = c
                c = dd
                fc = fd
                ac = ad
                dd = lo + _GOLD * (hi - lo)
                fd, ad = _mdist_min(xi, dd, etas, cand, invm, halfexp)
        if fc < bval:
            bval = fc
            bs = c
            barg = ac
        if fd < bval:
            bval = fd
            bs = dd
            barg = ad
        dist[p] = bval
        tbest[p] = math.exp(bs)
        ebest[p] = barg


def _mdist_min_np(xi, s, etas, cands, invm, halfexp):
    # xi: (P, n), s: (P,), cands: (P or 1, k)
    z = xi * np.exp(-s[:, None] * invm[None, :])
    e = etas[cands]  # (P or 1, k, n)
    diff = z[:, None, :] - e
    acc = np.zeros(diff.shape[:2])
    for d in range(xi.shape[1]):
        acc = acc + _ipow(diff[:, :, d] ** 2, int(halfexp[d]))
    arg = np.argmin(acc, axis=1)
    rows = np.arange(len(arg))
    idx = np.broadcast_to(cands, acc.shape)[rows, arg]
    return np.sqrt(acc[rows, arg]), idx


def _cone_np(points, etas, cands, invm, halfexp, offsets, iters, dist, tbest, ebest, chunk=1024):
    r2all = np.zeros(points.shape[0])
    for d in range(points.shape[1]):
        r2all += _ipow(points[:, d] ** 2, int(halfexp[d]))
    ns = offsets.shape[0]
    for start in range(0, points.shape[0], chunk):
        sl = slice(start, start + chunk)
        xi = points[sl]
        cand = cands if cands.shape[0] == 1 else cands[sl]
        r2 = r2all[sl]
        zero = r2 == 0.0
        s0 = 0.5 * np.log(np.where(zero, 1.0, r2))
        vals = np.empty((xi.shape[0], ns))
        args = np.empty((xi.shape[0], ns), dtype=np.int64)
        for k in range(ns):
            vals[:, k], args[:, k] = _mdist_min_np(xi, s0 + offsets[k], etas, cand, invm, halfexp)
        bk = np.argmin(vals, axis=1)
        rows = np.arange(xi.shape[0])
        bval = vals[rows, bk]
        barg = args[rows, bk]
        bs = s0 + offsets[bk]
        lo = s0 + offsets[np.maximum(bk - 1, 0)]
        hi = s0 + offsets[np.minimum(bk + 1, ns - 1)]
        c = hi - _GOLD * (hi - lo)
        dd = lo + _GOLD * (hi - lo)
        fc, ac = _mdist_min_np(xi, c, etas, cand, invm, halfexp)
        fd, ad = _mdist_min_np(xi, dd, etas, cand, invm, halfexp)
        for _ in range(iters):
            left = fc < fd
            hi = np.where(left, dd, hi)
            lo = np.where(left, lo, c)
            nc = np.where(left, hi - _GOLD * (hi - lo), dd)
            nd = np.where(left, c, lo + _GOLD * (hi - lo))
            fnew, anew = _mdist_min_np(xi, np.where(left, nc, nd), etas, cand, invm, halfexp)
            fc, fd, ac, ad = (
                np.where(left, fnew, fd),
                np.where(left, fc, fnew),
                np.where(left, anew, ad),
                np.where(left, ac, anew),
            )
            c, dd = nc, nd
        for cnd, fcand, acand in ((c, fc, ac), (dd, fd, ad)):
            better = fcand < bval
            bval = np.where(better, fcand, bval)
            bs = np.where(better, cnd, bs)
            barg = np.where(better, acand, barg)
        dist[sl] = np.where(zero, np.inf, bval)
        tbest[sl] = np.where(zero, np.nan, np.exp(bs))
        ebest[sl] = np.where(zero, -1, barg)


def nearest_candidates(points, etas, M, k: int, chunk: int = 4096) -> np.ndarray:
    """Indices of the ``k`` rows of ``etas`` closest in ``|.|_M`` to the
    M-normalisation ``|xi|_M^(-1/M) xi`` of each point."""
    M = np.asarray(M, dtype=np.int64)
    invm = 1.0 / M
    out = np.empty((points.shape[0], k), dtype=np.int64)
    for start in range(0, points.shape[0], chunk):
        xi = points[start:start + chunk]
        r = np.sqrt(sum(_ipow(xi[:, d] ** 2, int(M[d])) for d in range(xi.shape[1])))
        z = xi * np.where(r > 0, r, 1.0)[:, None] ** (-invm[None, :])
        acc = np.zeros((xi.shape[0], etas.shape[0]))
        for d in range(xi.shape[1]):
            acc += _ipow((z[:, None, d] - etas[None, :, d]) ** 2, int(M[d]))
        part = np.argpartition(acc, k - 1, axis=1)[:, :k]
        out[start:start + chunk] = part
    return out


def cone_distance(points, etas, M, span: float = 4.0, seeds: int = 64, iters: int = 48,
                  candidates: int | None = None):
    """Minimise ``|t^(-1/M) xi - eta|_M`` over ``t > 0`` and the rows of ``etas``.

    The search seeds ``log t`` at ``seeds`` evenly spaced offsets within
    ``+-span`` of ``log |xi|_M`` and polishes the best seed by golden
    section.  With ``candidates = k`` only the ``k`` rows of ``etas``
    nearest to the M-normalised point take part in the search for that
    point.

    Returns
    -------
    dist : ndarray, shape (P,)
        Minimal M-distance (``inf`` at the origin or for empty ``etas``).
    t : ndarray, shape (P,)
        Minimising dilation parameter.
    idx : ndarray of int, shape (P,)
        Row of ``etas`` attaining the minimum.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    etas = np.ascontiguousarray(etas, dtype=np.float64).reshape(-1, points.shape[1])
    npts = points.shape[0]
    dist = np.full(npts, np.inf)
    tbest = np.full(npts, np.nan)
    ebest = np.full(npts, -1, dtype=np.int64)
    if etas.shape[0] == 0 or npts == 0:
        return dist, tbest, ebest
    M = np.asarray(M, dtype=np.int64)
    invm = 1.0 / M.astype(np.float64)
    offsets = np.linspace(-span, span, seeds)
    if candidates is not None and candidates < etas.shape[0]:
        cands = nearest_candidates(points, etas, M, int(candidates))
    else:
        cands = np.arange(etas.shape[0], dtype=np.int64)[None, :]
    if USE_NUMBA:
        _cone_nb(points, etas, cands, invm, M, offsets, iters, dist, tbest, ebest)
    else:
        _cone_np(points, etas, cands, invm, M, offsets, iters, dist, tbest, ebest)
    return dist, tbest, ebest
