"""Frequency-side neighborhoods, M-cones, microlocal norms and ellipticity.

Sets of frequencies enter in three forms: explicit point arrays (anywhere
in frequency space), analytic predicates (:class:`Region`, evaluated at
grid points) and boolean :class:`FrequencyMask` objects.  Neighborhoods
are computed on the grid from the generators that are available there, so
every inclusion reported here is an exact statement about grid masks.

Examples
--------
>>> from flmicro.grid import GridSpec
>>> from flmicro.weights import homogeneous
>>> g = GridSpec(1, np.pi, 64)
>>> m = bracket_neighborhood(np.array([[20.0]]), homogeneous(1), 0.5, g)
>>> bool(m.bits[g.index_of_xi([20.0])])
True
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import (
    BadParam,
    ConstructionFailed,
    EmptyMask,
    GridMismatch,
    NotFound,
    NotMConic,
    PreconditionChainBroken,
)
from .grid import Field, GridSpec, conjugate, dft, fl_norm
from .pdo import Symbol, grid_Cq, quantize, symbol_fl_seminorm
from .weights import Weight, bracket_M, combine, m_dilate, make_weight, quasi_homogeneous

SCHEDULE_STEPS = 10
FINITE_GROWTH = 0.10
DIVERGENT_GROWTH = 0.50


def schedule(eps: float, steps: int = SCHEDULE_STEPS) -> list[float]:
    """Descending geometric schedule ``eps/2, eps/4, ..., eps/2^steps``."""
    return [eps / 2 ** k for k in range(1, steps + 1)]


# --------------------------------------------------------------------------
# Regions and masks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Analytic frequency set ``{xi : pred(xi)}`` with a JSON descriptor."""

    pred: Callable[[np.ndarray], np.ndarray]
    descriptor: Mapping[str, Any]

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.pred(xi), dtype=bool) & np.ones(xi.shape[:-1], dtype=bool)

    def __invert__(self) -> "Region":
        f = self.pred
        return Region(lambda xi: ~np.asarray(f(xi), dtype=bool), {"kind": "complement", "of": dict(self.descriptor)})

    def __and__(self, other: "Region") -> "Region":
        f, g = self.pred, other.pred
        return Region(lambda xi: np.asarray(f(xi), bool) & np.asarray(g(xi), bool),
                      {"kind": "intersection", "args": [dict(self.descriptor), dict(other.descriptor)]})

    def __or__(self, other: "Region") -> "Region":
        f, g = self.pred, other.pred
        return Region(lambda xi: np.asarray(f(xi), bool) | np.asarray(g(xi), bool),
                      {"kind": "union", "args": [dict(self.descriptor), dict(other.descriptor)]})


def _nonzero(xi: np.ndarray) -> np.ndarray:
    return np.any(xi != 0, axis=-1)


def whole_space() -> Region:
    return Region(lambda xi: np.ones(xi.shape[:-1], dtype=bool), {"kind": "whole"})


def empty_set() -> Region:
    return Region(lambda xi: np.zeros(xi.shape[:-1], dtype=bool), {"kind": "empty"})


def worked_example_set(k: float) -> Region:
    """``X_k = {xi1 <= (1-k) xi2^2 or xi1 >= xi2^2 / (1-k)}`` without the origin."""
    if not 0 < k < 1:
        raise BadParam("k must lie in (0, 1)")

    def pred(xi):
        a, b = xi[..., 0], xi[..., 1] ** 2
        return ((a <= (1 - k) * b) | (a >= b / (1 - k))) & _nonzero(xi)

    return Region(pred, {"kind": "worked_example", "k": k})


def parabola_cone(k: float) -> Region:
    """Thin M-conic region ``(1-k) xi2^2 < xi1 < xi2^2 / (1-k)`` around ``xi1 = xi2^2``."""
    if not 0 < k < 1:
        raise BadParam("k must lie in (0, 1)")

    def pred(xi):
        a, b = xi[..., 0], xi[..., 1] ** 2
        return (a > (1 - k) * b) & (a < b / (1 - k))

    return Region(pred, {"kind": "parabola_cone", "k": k})


def half_space(axis: int, sign: int = 1) -> Region:
    """``{sign * xi_axis > 0}`` (``axis`` counts from 1)."""
    j = int(axis) - 1
    return Region(lambda xi: sign * xi[..., j] > 0, {"kind": "half_space", "axis": axis, "sign": sign})


def ball_region(center: Sequence[float], radius: float) -> Region:
    c = np.asarray(center, dtype=float)
    return Region(lambda xi: np.linalg.norm(xi - c, axis=-1) < radius,
                  {"kind": "ball", "center": list(map(float, c)), "radius": radius})


def threshold_region(w: Weight, level: float) -> Region:
    """``{w(xi) > level}``."""
    return Region(lambda xi: w(xi) > level, {"kind": "above", "weight": w.describe(), "level": level})


def parabola_points(smax: float, step: float = 1.0) -> np.ndarray:
    """Samples ``(s^2, s)`` of the parabola ``xi1 = xi2^2`` for ``|s| <= smax``."""
    s = np.arange(-smax, smax + 0.5 * step, step)
    return np.stack([s * s, s], axis=-1)


@dataclass(frozen=True)
class FrequencyMask:
    """Boolean set of frequency samples with exact set algebra."""

    grid: GridSpec
    bits: np.ndarray
    generator: Mapping[str, Any] = field(default_factory=lambda: {"kind": "explicit"})

    def __post_init__(self):
        if self.bits.shape != self.grid.shape or self.bits.dtype != bool:
            raise GridMismatch("mask bits must be boolean with the grid shape")

    def _check(self, other: "FrequencyMask"):
        if other.grid != self.grid:
            raise GridMismatch("masks on different grids")

    def __or__(self, other):
        self._check(other)
        return FrequencyMask(self.grid, self.bits | other.bits,
                             {"kind": "union", "args": [dict(self.generator), dict(other.generator)]})

    def __and__(self, other):
        self._check(other)
        return FrequencyMask(self.grid, self.bits & other.bits,
                             {"kind": "intersection", "args": [dict(self.generator), dict(other.generator)]})

    def __invert__(self):
        return FrequencyMask(self.grid, ~self.bits, {"kind": "complement", "of": dict(self.generator)})

    def __sub__(self, other):
        self._check(other)
        return FrequencyMask(self.grid, self.bits & ~other.bits,
                             {"kind": "difference", "args": [dict(self.generator), dict(other.generator)]})

    def issubset(self, other: "FrequencyMask") -> bool:
        self._check(other)
        return not np.any(self.bits & ~other.bits)

    def violations(self, other: "FrequencyMask", limit: int = 5) -> list:
        """Up to ``limit`` frequencies in ``self`` but not in ``other``."""
        bad = self.bits & ~other.bits
        return self.grid.xi_mesh()[bad][:limit].tolist()

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def points(self) -> np.ndarray:
        return self.grid.xi_mesh()[self.bits]

    @classmethod
    def from_region(cls, region: Region, grid: GridSpec) -> "FrequencyMask":
        return cls(grid, region(grid.xi_mesh()), dict(region.descriptor))

    @classmethod
    def full(cls, grid: GridSpec) -> "FrequencyMask":
        return cls(grid, np.ones(grid.shape, dtype=bool), {"kind": "whole"})

    @classmethod
    def empty(cls, grid: GridSpec) -> "FrequencyMask":
        return cls(grid, np.zeros(grid.shape, dtype=bool), {"kind": "empty"})


def generator_points(X, grid: GridSpec) -> np.ndarray:
    """Generator coordinates of ``X`` for neighborhoods built on ``grid``.

    Regions are sampled at the grid points; masks contribute their points
    (on any grid); arrays are used as given.
    """
    n = grid.n
    if X is None:
        return np.zeros((0, n))
    if isinstance(X, FrequencyMask):
        return X.points()
    if isinstance(X, Region) or callable(X):
        xi = grid.xi_mesh()
        return xi[np.asarray(X(xi), dtype=bool)]
    pts = np.asarray(X, dtype=float)
    if pts.size == 0:
        return np.zeros((0, n))
    return pts.reshape(-1, n)


def _describe(X) -> dict:
    if isinstance(X, FrequencyMask):
        return dict(X.generator)
    if isinstance(X, Region):
        return dict(X.descriptor)
    if callable(X):
        return {"kind": "predicate"}
    return {"kind": "points", "count": int(np.asarray(X).size // max(1, np.asarray(X).shape[-1] if np.ndim(X) else 1))}


def _axes(grid: GridSpec) -> list[np.ndarray]:
    return [grid.xi_axis()] * grid.n


def bracket_neighborhood(X, w: Weight, eps: float, grid: GridSpec) -> FrequencyMask:
    """``X_[eps w] = union over xi0 in X of {xi : w(xi - xi0) < eps w(xi0)}``.

    Weights of the form ``<.>_M^s`` with ``s > 0`` are stamped as
    anisotropic balls; generators with ``(eps w(xi0))^(2/s) <= 1`` have
    empty balls and are skipped.  Other weights are evaluated directly.
    """
    if not eps > 0:
        raise BadParam("eps must be positive")
    gens = generator_points(X, grid)
    desc = {"kind": "bracket_neighborhood", "X": _describe(X), "weight": w.describe(), "eps": eps}
    if len(gens) == 0:
        return FrequencyMask(grid, np.zeros(grid.shape, dtype=bool), desc)
    qh = w.qh_params(grid.n)
    if qh is not None and qh[1] > 0:
        M, s = qh
        T = (eps * w(gens)) ** (2.0 / s) - 1.0
        bits = _kernels.stamp_mask(_axes(grid), gens, T, M)
        return FrequencyMask(grid, bits, desc)
    xi = grid.xi_mesh().reshape(-1, grid.n)
    bits = np.zeros(len(xi), dtype=bool)
    wg = eps * w(gens)
    chunk = max(1, 2_000_000 // len(xi))
    for start in range(0, len(gens), chunk):
        g = gens[start:start + chunk]
        vals = w(xi[None, :, :] - g[:, None, :])
        bits |= np.any(vals < wg[start:start + chunk, None], axis=0)
    return FrequencyMask(grid, bits.reshape(grid.shape), desc)


def euclid_neighborhood(X, lam: Weight, eps: float, mu: float | None, grid: GridSpec) -> FrequencyMask:
    """``X_{eps lam} = union over xi0 in X of {|xi - xi0| < eps lam(xi0)^(1/mu)}``.

    ``mu`` defaults to the upper growth exponent of ``lam``.
    """
    if not eps > 0:
        raise BadParam("eps must be positive")
    mu = _mu(lam, mu)
    gens = generator_points(X, grid)
    desc = {"kind": "euclid_neighborhood", "X": _describe(X), "weight": lam.describe(), "eps": eps, "mu": mu}
    if len(gens) == 0:
        return FrequencyMask(grid, np.zeros(grid.shape, dtype=bool), desc)
    T = (eps * lam(gens) ** (1.0 / mu)) ** 2
    bits = _kernels.stamp_mask(_axes(grid), gens, T, [1] * grid.n)
    return FrequencyMask(grid, bits, desc)


def _mu(lam: Weight, mu: float | None) -> float:
    if mu is None:
        mu = lam.growth_upper
    if mu is None or not mu > 0:
        raise BadParam("growth exponent mu required")
    return float(mu)


def above(w: Weight, level: float, grid: GridSpec) -> FrequencyMask:
    """Mask of ``{w > level}``."""
    return FrequencyMask(grid, w(grid.xi_mesh()) > level, {"kind": "above", "level": level})


# --------------------------------------------------------------------------
# Inclusion searches
# --------------------------------------------------------------------------


@dataclass
class InclusionReport:
    """Outcome of an epsilon-prime search over the fixed schedule."""

    mode: str
    eps: float
    eps_prime: float | None
    verified: bool
    c_hat: float | None
    trials: list

    def to_dict(self) -> dict:
        return {"mode": self.mode, "eps": self.eps, "eps_prime": self.eps_prime, "verified": self.verified,
                "c_hat": self.c_hat, "trials": self.trials}


def empirical_c_hat(X, w: Weight, eps: float, grid: GridSpec) -> float | None:
    """Largest ``c`` with ``w(xi) > c / eps`` on ``X_[eps w]`` (``None`` if empty).

    The minimum of ``eps w`` over the mask is shrunk by one part in 1e12 so
    that the strict inequality holds at the minimiser.
    """
    m = bracket_neighborhood(X, w, eps, grid)
    if m.is_empty():
        return None
    return float(eps * w(m.points()).min() * (1 - 1e-12))


def find_inclusion_eps(X, w: Weight, eps: float, mode: str, grid: GridSpec, c: float = 1.0,
                       mu: float | None = None, strict: bool = False) -> InclusionReport:
    """Largest scheduled ``eps'`` for which a neighborhood inclusion holds on the grid.

    Modes
    -----
    ``inc_1``      ``(X_[e'w])_[e'w] <= X_[eps w]``
    ``inc_2``      ``(complement X_[eps w])_[e'w] <= complement X_[e'w]``
    ``euclid``     both Euclidean-type inclusions
                   ``(X_{e'w})_{e'w} <= X_{eps w}`` and
                   ``(complement X_{eps w})_{e'w} <= complement X_{e'w}``
    ``mixed``      ``(X & {w > c/e'})_{e'w} <= X_[eps w] & {w > c/eps}``
    ``corollary``  ``(X_[e'w])_{e'w} <= X_[eps w]``
    ``mcl_impl``   report ``c_hat`` with ``w > c_hat/eps`` on ``X_[eps w]``

    Raises
    ------
    NotFound
        Only with ``strict=True`` when no scheduled value works.
    """
    trials = []
    if mode == "mcl_impl":
        ch = empirical_c_hat(X, w, eps, grid)
        m = bracket_neighborhood(X, w, eps, grid)
        ok = ch is None or bool(np.all(w(m.points()) > ch / eps))
        return InclusionReport(mode, eps, eps, ok, ch, [{"eps_prime": eps, "ok": ok}])
    if mode not in ("inc_1", "inc_2", "euclid", "mixed", "corollary"):
        raise BadParam(f"unknown inclusion mode {mode!r}")
    base = bracket_neighborhood(X, w, eps, grid)
    found = None
    for ep in schedule(eps):
        if mode == "inc_1":
            lhs = bracket_neighborhood(bracket_neighborhood(X, w, ep, grid), w, ep, grid)
            ok, bad, size = lhs.issubset(base), lhs.violations(base), lhs.count
        elif mode == "inc_2":
            lhs = bracket_neighborhood(~base, w, ep, grid)
            rhs = ~bracket_neighborhood(X, w, ep, grid)
            ok, bad, size = lhs.issubset(rhs), lhs.violations(rhs), lhs.count
        elif mode == "euclid":
            e_eps = euclid_neighborhood(X, w, eps, mu, grid)
            l1 = euclid_neighborhood(euclid_neighborhood(X, w, ep, mu, grid), w, ep, mu, grid)
            l2 = euclid_neighborhood(~e_eps, w, ep, mu, grid)
            r2 = ~euclid_neighborhood(X, w, ep, mu, grid)
            ok = l1.issubset(e_eps) and l2.issubset(r2)
            bad, size = l1.violations(e_eps) + l2.violations(r2), l1.count + l2.count
        elif mode == "mixed":
            gens = generator_points(X, grid)
            gens = gens[w(gens) > c / ep] if len(gens) else gens
            lhs = euclid_neighborhood(gens, w, ep, mu, grid)
            rhs = base & above(w, c / eps, grid)
            ok, bad, size = lhs.issubset(rhs), lhs.violations(rhs), lhs.count
        else:
            lhs = euclid_neighborhood(bracket_neighborhood(X, w, ep, grid), w, ep, mu, grid)
            ok, bad, size = lhs.issubset(base), lhs.violations(base), lhs.count
        trials.append({"eps_prime": ep, "ok": bool(ok), "violations": bad, "lhs_count": size})
        if ok:
            found = ep
            break
    ch = empirical_c_hat(X, w, eps, grid)
    if found is None and strict:
        raise NotFound(f"no eps' in the schedule satisfies {mode}")
    return InclusionReport(mode, eps, found, found is not None, ch, trials)


# --------------------------------------------------------------------------
# M-cones
# --------------------------------------------------------------------------


def m_sphere_samples(M: Sequence[int], count: int = 512) -> np.ndarray:
    """Points of the unit M-sphere ``|xi|_M = 1``.

    A Euclidean unit vector ``u`` is mapped to ``sign(u_j) |u_j|^(1/m_j)``.
    """
    M = np.asarray(M, dtype=float)
    n = len(M)
    if n == 1:
        u = np.array([[1.0], [-1.0]])
    elif n == 2:
        th = 2 * np.pi * np.arange(count) / count
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        k = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * k / count)
        th = np.pi * (1 + 5 ** 0.5) * k
        u = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=-1)
    return np.sign(u) * np.abs(u) ** (1.0 / M)


@dataclass(frozen=True)
class MCone:
    """``Gamma_M(eta; R)``, the M-cone generated by ``B_M(eta; R)``.

    Membership minimises ``|t^(-1/M) xi - eta|_M`` over ``t > 0``; a
    union over several ``eta`` is obtained by passing a 2-D array.
    """

    eta: np.ndarray
    R: float
    M: tuple[int, ...]
    candidates: int | None = 32

    def distance(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        pts = xi.reshape(-1, xi.shape[-1])
        etas = np.asarray(self.eta, dtype=float).reshape(-1, pts.shape[1])
        d, _, _ = _kernels.cone_distance(pts, etas, self.M, candidates=self.candidates)
        return d.reshape(xi.shape[:-1])

    def __call__(self, xi) -> np.ndarray:
        return self.distance(xi) < self.R

    def region(self) -> Region:
        return Region(self.__call__, {"kind": "m_cone", "eta": np.asarray(self.eta).tolist(), "R": self.R,
                                      "M": list(self.M)})


def m_cone(eta: Sequence[float], R: float, M: Sequence[int]) -> MCone:
    """Predicate for ``Gamma_M(eta; R)``; ``R`` must be positive."""
    if not R > 0:
        raise BadParam("R must be positive")
    return MCone(np.asarray(eta, dtype=float), float(R), tuple(int(m) for m in M))


def check_m_conic(X: Callable, M: Sequence[int], grid: GridSpec, samples: int = 200, seed: int = 0,
                  factors: Sequence[float] = (0.25, 0.5, 2.0, 4.0)) -> list:
    """Sampled closure test ``xi in X => t^(1/M) xi in X``; returns violations."""
    rng = np.random.default_rng(seed)
    xi = grid.xi_mesh().reshape(-1, grid.n)
    inside = xi[np.asarray(X(xi), dtype=bool)]
    if len(inside) == 0:
        return []
    pick = inside[rng.choice(len(inside), size=min(samples, len(inside)), replace=False)]
    bad = []
    for t in factors:
        scaled = m_dilate(pick, np.full(len(pick), t), M)
        ok = np.asarray(X(scaled), dtype=bool)
        for p in pick[~ok][:3]:
            bad.append({"xi": p.tolist(), "t": t})
    return bad


@dataclass
class ConeEquivalenceReport:
    eps: float
    eps_prime: float | None
    verified: bool
    c_hat: float | None
    trials: list
    sphere_samples: int

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eps_prime": self.eps_prime, "verified": self.verified, "c_hat": self.c_hat,
                "trials": self.trials, "sphere_samples": self.sphere_samples}


def check_cone_equivalence(X: Callable, eps: float, M: Sequence[int], grid: GridSpec, c_hat: float | None = None,
                           samples: int = 512, core: float = 0.5) -> ConeEquivalenceReport:
    """Grid test of the two inclusions between ``[<.>_M]``-neighborhoods and M-cones.

    With ``U_R`` the union of ``Gamma_M(eta; R)`` over sampled
    ``eta in X & S_M`` and ``B = {<xi>_M > c_hat / .}``, the search looks
    for a scheduled ``eps'`` such that

    * ``X_[eps' <.>_M] <= U_eps & {<xi>_M > c_hat/eps}`` and
    * ``U_eps' & {<xi>_M > c_hat/eps'} <= X_[eps <.>_M]``.

    The second inclusion is tested on the core box
    ``|xi|_inf <= core * xi_max``, because its generators may lie beyond
    the grid near the edge.  ``c_hat`` defaults to the smallest empirical
    constant over ``eps`` and the schedule.

    Raises
    ------
    NotMConic
        The sampled closure test fails.
    """
    M = tuple(int(m) for m in M)
    bad = check_m_conic(X, M, grid)
    if bad:
        raise NotMConic(f"set is not closed under M-dilations, e.g. {bad[0]}")
    lam = quasi_homogeneous(M, 1.0)
    sph = m_sphere_samples(M, samples)
    etas = sph[np.asarray(X(sph), dtype=bool)]
    xi = grid.xi_mesh()
    pts = xi.reshape(-1, grid.n)
    if len(etas):
        dist, _, _ = _kernels.cone_distance(pts, etas, M, candidates=32)
        dist = dist.reshape(grid.shape)
    else:
        dist = np.full(grid.shape, np.inf)
    gens = generator_points(X, grid)
    if c_hat is None:
        vals = [empirical_c_hat(gens, lam, e, grid) for e in [eps] + schedule(eps)]
        vals = [v for v in vals if v is not None]
        c_hat = min(vals) if vals else 1.0
    lv = lam(xi)
    core_bits = np.all(np.abs(xi) <= core * grid.xi_max, axis=-1)
    big = bracket_neighborhood(gens, lam, eps, grid)
    trials = []
    found = None
    for ep in schedule(eps):
        a1 = bracket_neighborhood(gens, lam, ep, grid)
        r1 = FrequencyMask(grid, (dist < eps) & (lv > c_hat / eps))
        l2 = FrequencyMask(grid, (dist < ep) & (lv > c_hat / ep) & core_bits)
        ok1, ok2 = a1.issubset(r1), l2.issubset(big)
        trials.append({"eps_prime": ep, "equiv_1": bool(ok1), "equiv_2": bool(ok2),
                       "violations_1": a1.violations(r1), "violations_2": l2.violations(big)})
        if ok1 and ok2:
            found = ep
            break
    return ConeEquivalenceReport(eps, found, found is not None, c_hat, trials, len(etas))


# --------------------------------------------------------------------------
# Cutoff symbols
# --------------------------------------------------------------------------


@dataclass
class CutoffReport:
    eps: float
    eps_prime: float | None
    inner_eps: float
    radius_factor: float
    support_ok: bool
    plateau_ok: bool
    seminorms: dict
    seminorms_stable: bool | None

    @property
    def passed(self) -> bool:
        return self.support_ok and self.plateau_ok and self.seminorms_stable is not False

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eps_prime": self.eps_prime, "inner_eps": self.inner_eps,
                "radius_factor": self.radius_factor, "support_ok": self.support_ok, "plateau_ok": self.plateau_ok,
                "seminorms": self.seminorms, "seminorms_stable": self.seminorms_stable, "passed": self.passed}


def _mollified(X, lam: Weight, eps: float, mu: float, grid: GridSpec, inner: float, radius_factor: float):
    if grid.n > 2:
        raise BadParam("cutoff symbols are built for n <= 2")
    base = euclid_neighborhood(X, lam, inner * eps, mu, grid)
    xi = grid.xi_mesh()
    radius = radius_factor * eps * lam(xi) ** (1.0 / mu)
    vals = base.bits.astype(float)
    if grid.n == 1:
        sig = _kernels.mollify(vals[:, None], radius[:, None], (grid.dxi, grid.dxi))[:, 0]
    else:
        sig = _kernels.mollify(vals, radius, (grid.dxi, grid.dxi))
    return sig


def _fd_seminorms(sig: np.ndarray, lam: Weight, mu: float, grid: GridSpec) -> dict:
    """``max |D^alpha sigma| lam^(|alpha|/mu)`` by central differences, ``|alpha| <= 2``."""
    h = grid.dxi
    lv = lam(grid.xi_mesh())
    out = {}
    inner = tuple(slice(1, -1) for _ in range(grid.n))
    for j in range(grid.n):
        d1 = (np.roll(sig, -1, j) - np.roll(sig, 1, j)) / (2 * h)
        d2 = (np.roll(sig, -1, j) - 2 * sig + np.roll(sig, 1, j)) / h ** 2
        out[f"d{j + 1}"] = float(np.max(np.abs(d1[inner]) * lv[inner] ** (1 / mu)))
        out[f"d{j + 1}{j + 1}"] = float(np.max(np.abs(d2[inner]) * lv[inner] ** (2 / mu)))
    if grid.n == 2:
        d12 = (np.roll(np.roll(sig, -1, 0), -1, 1) - np.roll(np.roll(sig, -1, 0), 1, 1)
               - np.roll(np.roll(sig, 1, 0), -1, 1) + np.roll(np.roll(sig, 1, 0), 1, 1)) / (4 * h * h)
        out["d12"] = float(np.max(np.abs(d12[inner]) * lv[inner] ** (2 / mu)))
    out["sup"] = float(np.max(np.abs(sig)))
    return out


def cutoff_symbol(X, eps: float, lam: Weight, grid: GridSpec, mu: float | None = None, inner: float = 0.5,
                  radius_factor: float = 0.25, check_refinement: bool = True) -> tuple[Symbol, CutoffReport]:
    """Smooth ``sigma(xi)`` in ``[0, 1]`` supported in ``X_{eps lam}`` and equal to 1 near ``X``.

    The indicator of ``X_{inner eps lam}`` is averaged with a bump of radius
    ``radius_factor * eps * lam(xi)^(1/mu)``.  All properties are checked
    after the fact on the grid: the support lies in ``X_{eps lam}``,
    ``sigma = 1`` on ``X_{eps' lam}`` for the largest scheduled ``eps'``,
    and finite-difference ``S^0_lam`` seminorms are stable when the
    frequency range is doubled (``X`` must then be a region or point set).

    Raises
    ------
    ConstructionFailed
        An a posteriori check fails.
    """
    mu = _mu(lam, mu)
    sig = _mollified(X, lam, eps, mu, grid, inner, radius_factor)
    outer = euclid_neighborhood(X, lam, eps, mu, grid)
    support_ok = not np.any((sig > 0) & ~outer.bits)
    eps_prime = None
    for ep in schedule(eps):
        plate = euclid_neighborhood(X, lam, ep, mu, grid)
        if np.all(sig[plate.bits] == 1.0):
            eps_prime = ep
            break
    sem = _fd_seminorms(sig, lam, mu, grid)
    stable = None
    if check_refinement and not isinstance(X, FrequencyMask):
        g2 = grid.refine()
        sem2 = _fd_seminorms(_mollified(X, lam, eps, mu, g2, inner, radius_factor), lam, mu, g2)
        stable = all(sem2[k] <= 1.1 * sem[k] + 1e-12 for k in sem)
        sem = {"coarse": sem, "fine": sem2}
    rep = CutoffReport(eps, eps_prime, inner * eps, radius_factor, bool(support_ok), eps_prime is not None, sem, stable)
    if not rep.passed:
        raise ConstructionFailed(
            f"cutoff checks failed (support={rep.support_ok}, plateau={rep.plateau_ok}, seminorms={stable}); "
            f"mollifier radius {radius_factor} * eps * lam^(1/mu) with inner size {inner * eps}")
    table = sig

    def lookup(x):
        idx = np.rint(np.asarray(x) / grid.dxi).astype(int) + grid.points // 2
        ok = np.all((idx >= 0) & (idx < grid.points), axis=-1)
        idx = np.clip(idx, 0, grid.points - 1)
        return np.where(ok, table[tuple(np.moveaxis(idx, -1, 0))], 0.0)

    return Symbol.multiplier(lookup, order=0.0, rho=1.0 / mu, reference_weight=lam, label="cutoff"), rep


# --------------------------------------------------------------------------
# Microlocal norms, ellipticity and filters
# --------------------------------------------------------------------------


def masked_norm(spec_values: np.ndarray, w: Weight | None, p: float, mask: np.ndarray, grid: GridSpec) -> float:
    """Weighted ``L^p`` norm of spectrum values restricted to a mask."""
    a = np.abs(spec_values) * (1.0 if w is None else w(grid.xi_mesh()))
    a = np.where(mask, a, 0.0)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * grid.cell_xi) ** (1.0 / p))


def mcl_fl_norm(u: Field, phi: Field | None, X, eps: float, w: Weight, p: float,
                nbhd_weight: Weight | None = None, mask: FrequencyMask | None = None) -> float:
    """``|| chi_[eps w] w F(phi u) ||_{L^p}`` on the grid.

    The neighborhood is built with ``nbhd_weight`` (default ``w``) unless an
    explicit ``mask`` is supplied.
    """
    g = u.grid
    if phi is not None and phi.grid != g:
        raise GridMismatch("field and cutoff on different grids")
    if mask is None:
        mask = bracket_neighborhood(X, nbhd_weight or w, eps, g)
    elif mask.grid != g:
        raise GridMismatch("mask on a different grid")
    v = u if phi is None else phi * u
    return masked_norm(dft(v).values, w, p, mask.bits, g)


@dataclass
class MclEllipticReport:
    passed: bool
    c0: float | None
    eps_used: float | None
    c0_coarse: float | None
    ratio: float | None
    trials: list
    two_sided: dict | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "c0": self.c0, "eps_used": self.eps_used, "c0_coarse": self.c0_coarse,
                "ratio": self.ratio, "trials": self.trials, "two_sided": self.two_sided}


def mcl_elliptic(a: Symbol, x0: Sequence[float], X, r: float, lam: Weight, grid: GridSpec, eps0: float = 0.5,
                 threshold: float = 1e-3, two_sided: bool = False, ball: float | None = None,
                 min_coverage: float = 0.5) -> MclEllipticReport:
    """Largest scheduled ``eps`` with ``|a(x0, xi)| >= c0 lam(xi)^r`` on ``X_[eps lam]``.

    ``eps`` runs over ``eps0, eps0/2, ..., eps0/2^10``.  At each value the
    minimum ratio is computed on ``grid`` and on its refinement; the check
    passes when the refined minimum exceeds ``threshold`` and the two agree
    within 10%.  A value of ``eps`` is only tried when its neighborhood
    still contains at least ``min_coverage`` of the grid points of ``X``:
    small neighborhoods keep only high-frequency generators, which a finite
    grid samples too sparsely to witness anything.  With ``two_sided`` the bound is also evaluated for ``x``
    in a ball around ``x0`` and ``xi`` in ``(X_[e lam])_{e lam}``.

    Raises
    ------
    EmptyMask
        Every scheduled neighborhood is empty on the grid.
    """
    x0 = np.asarray(x0, dtype=float)
    trials = []
    nonempty = False
    xmask = _grid_members(X, grid)
    for e in [eps0] + schedule(eps0):
        coverage = _coverage(xmask, bracket_neighborhood(X, lam, e, grid))
        if coverage < min_coverage:
            trials.append({"eps": e, "coverage": coverage, "sparse": True})
            nonempty = nonempty or coverage > 0
            continue
        cs = []
        for g in (grid, grid.refine()):
            m = bracket_neighborhood(X, lam, e, g)
            if m.is_empty():
                cs.append(None)
                continue
            xi = m.points()
            vals = np.abs(a(x0[None, :], xi)) / lam(xi) ** r
            cs.append(float(vals.min()))
        if cs[1] is None:
            trials.append({"eps": e, "empty": True})
            continue
        nonempty = True
        c_coarse = cs[0] if cs[0] is not None else cs[1]
        ratio = c_coarse / cs[1] if cs[1] > 0 else math.inf
        ok = cs[1] > threshold and ratio <= 1.1
        trials.append({"eps": e, "c0": cs[1], "c0_coarse": c_coarse, "ratio": ratio, "coverage": coverage,
                       "ok": bool(ok)})
        if ok:
            ts = _two_sided(a, x0, X, r, lam, grid, e, ball) if two_sided else None
            return MclEllipticReport(True, cs[1], e, c_coarse, ratio, trials, ts)
    if not nonempty:
        raise EmptyMask("all scheduled neighborhoods are empty on the grid")
    dense = [t for t in trials if "c0" in t]
    if not dense:
        return MclEllipticReport(False, None, None, None, None, trials, None)
    last = dense[-1]
    return MclEllipticReport(False, last["c0"], None, last["c0_coarse"], last["ratio"], trials, None)


def _grid_members(X, grid: GridSpec) -> np.ndarray:
    """Boolean mask of the grid points that belong to ``X``."""
    if isinstance(X, FrequencyMask):
        return X.bits
    if isinstance(X, Region) or callable(X):
        return np.asarray(X(grid.xi_mesh()), dtype=bool)
    bits = np.zeros(grid.shape, dtype=bool)
    for p in generator_points(X, grid):
        idx = grid.index_of_xi(p)
        if all(0 <= i < grid.points for i in idx):
            bits[idx] = True
    return bits


def _coverage(xmask: np.ndarray, m: FrequencyMask) -> float:
    total = int(xmask.sum())
    return float((xmask & m.bits).sum() / total) if total else 0.0


def _two_sided(a: Symbol, x0: np.ndarray, X, r: float, lam: Weight, grid: GridSpec, e: float,
               ball: float | None) -> dict:
    rad = e if ball is None else ball
    n = len(x0)
    offs = np.stack(np.meshgrid(*([np.linspace(-rad, rad, 5)] * n), indexing="ij"), -1).reshape(-1, n)
    offs = offs[np.linalg.norm(offs, axis=-1) < rad] if rad > 0 else offs[:1]
    if len(offs) == 0:
        offs = np.zeros((1, n))
    m = euclid_neighborhood(bracket_neighborhood(X, lam, e, grid), lam, e, None, grid)
    if m.is_empty():
        return {"eps": e, "c_star": None}
    xi = m.points()
    lv = lam(xi) ** r
    c = min(float((np.abs(a(x0 + o, xi)) / lv).min()) for o in offs)
    return {"eps": e, "c_star": c, "x_samples": len(offs)}


@dataclass
class FilterReport:
    """Refinement verdict for a microlocal norm: ``finite``, ``divergent`` or ``indeterminate``."""

    member: bool
    status: str
    coarse: float
    fine: float
    growth: float
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.member

    def to_dict(self) -> dict:
        return {"member": self.member, "status": self.status, "coarse": self.coarse, "fine": self.fine,
                "growth": self.growth, "details": self.details}


def growth_verdict(coarse: float, fine: float) -> tuple[str, float]:
    """Classify a two-level norm pair by relative growth (10% / 50% thresholds)."""
    if not math.isfinite(fine):
        return "divergent", math.inf
    if coarse == 0:
        return ("finite", 0.0) if fine == 0 else ("divergent", math.inf)
    g = fine / coarse - 1.0
    if g < FINITE_GROWTH:
        return "finite", g
    if g > DIVERGENT_GROWTH:
        return "divergent", g
    return "indeterminate", g


def _complement_generators(X, grid: GridSpec):
    if isinstance(X, FrequencyMask):
        return ~X
    if isinstance(X, Region):
        return ~X
    if callable(X):
        return Region(lambda xi: ~np.asarray(X(xi), dtype=bool), {"kind": "complement"})
    raise BadParam("filter queries need a region or mask")


def filter_membership(u, phi, X, w: Weight, p: float, grid: GridSpec | None = None, eps: float = 0.25,
                      nbhd_weight: Weight | None = None) -> FilterReport:
    """Finite query for ``X`` in the filter of singularities of ``u`` at a point.

    The norm of ``phi u`` with weight ``w`` over the neighborhood of the
    complement of ``X`` is computed at two levels.  If ``u`` and ``phi``
    are callables ``grid -> Field`` the levels are ``grid`` and its
    refinement; for sampled Fields they are the central half band and the
    full band of the one grid.  Growth below 10% means finite (member).
    """
    comp = _complement_generators(X, grid)
    nw = nbhd_weight or w
    if callable(u) and not isinstance(u, Field):
        if grid is None:
            raise BadParam("grid required for callable fields")
        vals = []
        for g in (grid, grid.refine()):
            uu = u(g)
            ph = phi(g) if callable(phi) and not isinstance(phi, Field) else phi
            vals.append(mcl_fl_norm(uu, ph, comp, eps, w, p, nbhd_weight=nw))
        coarse, fine = vals
        mode = "refinement"
    else:
        g = u.grid
        m = bracket_neighborhood(comp if not isinstance(comp, FrequencyMask) else comp, nw, eps, g)
        v = u if phi is None else phi * u
        s = dft(v).values
        half = np.all(np.abs(g.xi_mesh()) <= 0.5 * g.xi_max, axis=-1)
        coarse = masked_norm(s, w, p, m.bits & half, g)
        fine = masked_norm(s, w, p, m.bits, g)
        mode = "band"
    status, growth = growth_verdict(coarse, fine)
    return FilterReport(status == "finite", status, coarse, fine, growth, {"mode": mode, "eps": eps})


def symbol_filter_membership(a: Symbol, x0, X, r: float, lam: Weight, grid: GridSpec, **kw) -> MclEllipticReport:
    """``X`` belongs to the characteristic filter iff ``a`` is microlocally elliptic on the complement."""
    return mcl_elliptic(a, x0, _complement_generators(X, grid), r, lam, grid, **kw)


# --------------------------------------------------------------------------
# Microlocal continuity
# --------------------------------------------------------------------------


@dataclass
class MclContinuityReport:
    lhs: float
    bound: float
    ratio: float
    finite: bool
    passed: bool
    eps_prime: float | None
    parts: dict
    refinement: dict | None = None

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "bound": self.bound, "ratio": self.ratio, "finite": self.finite,
                "passed": self.passed, "eps_prime": self.eps_prime, "parts": self.parts,
                "refinement": self.refinement}


def check_weight_chain(sigma: Weight, lam: Weight, Lam: Weight, grid: GridSpec) -> dict:
    """Constants of ``sigma <= C lam``, ``lam <= C Lam`` and ``Lam <= C lam^2/sigma``.

    Each constant is the maximum ratio on the grid and on its refinement;
    the chain is broken when a ratio is non-finite or grows by more than
    10% under refinement.
    """
    out = {}
    for g in (grid, grid.refine()):
        xi = g.xi_mesh()
        s, l, L = sigma(xi), lam(xi), Lam(xi)
        out.setdefault("sigma_lam", []).append(float(np.max(s / l)))
        out.setdefault("lam_Lam", []).append(float(np.max(l / L)))
        out.setdefault("Lam_lam2_sigma", []).append(float(np.max(L * s / l ** 2)))
    for k, (c0, c1) in out.items():
        if not (math.isfinite(c0) and math.isfinite(c1)) or c1 > 1.1 * c0:
            raise PreconditionChainBroken(f"chain condition {k} fails: constants {c0:.4g} -> {c1:.4g}")
    return {k: v[1] for k, v in out.items()}


def _inv_lq(sigma: Weight, q: float, grid: GridSpec) -> float:
    v = 1.0 / sigma(grid.xi_mesh())
    if math.isinf(q):
        return float(v.max())
    return float((np.sum(v ** q) * grid.cell_xi) ** (1.0 / q))


def verify_mcl_continuity(a: Symbol, u, phi, X, eps: float, lam: Weight, Lam: Weight, gamma: Weight | None,
                          sigma: Weight, p: float, grid: GridSpec | None = None) -> MclContinuityReport:
    """Structured microlocal continuity bound on one or two grids.

    ``lhs = || chi_[eps' Lam] Lam F(phi a(x,D) u) ||_p`` where ``eps'``
    satisfies the complement inclusion for ``Lam``.  The bound is the
    product ``||1/sigma||_q (|a|_X + ||a||) (|u|_X + ||u||)`` of the two
    symbol seminorms and two input norms; its constant ``C/eps'`` is not
    known, so the check passes when ``lhs`` is finite and ``lhs/bound``
    changes by at most 10% under grid refinement (callable inputs
    ``grid -> Field``), or is merely finite for sampled inputs.

    When ``lam`` and ``Lam`` coincide the microlocal part is void and the
    report carries the discrete operator bound with ``omega1 = lam gamma``
    and ``omega = omega2 = lam``.

    Raises
    ------
    PreconditionChainBroken
        The weight chain fails on the grid.
    """
    callable_in = callable(u) and not isinstance(u, Field)
    g0 = grid if callable_in else u.grid
    if g0 is None:
        raise BadParam("grid required for callable fields")
    q = conjugate(p)
    degenerate = Lam is lam
    if not degenerate:
        chain = check_weight_chain(sigma, lam, Lam, g0)
    else:
        chain = {}

    def level(g: GridSpec):
        uu = u(g) if callable_in else u
        ph = phi(g) if callable(phi) and not isinstance(phi, Field) else phi
        lg = lam if gamma is None else combine(lam, gamma, "product")
        if degenerate:
            lhs = fl_norm(ph * quantize(a, uu), lam, p)
            C = grid_Cq(lam, lam, lg, q, g, num_eta=gamma)
            semi = symbol_fl_seminorm(a, ph, lam, gamma, p)
            nu = fl_norm(uu, lg, p)
            bound = (2 * np.pi) ** (-g.n) * C * semi * nu
            return lhs, bound, {"C_q": C, "seminorm": semi, "u_norm": nu}, None
        rep = find_inclusion_eps(X, Lam, eps, "inc_2", g)
        ep = rep.eps_prime if rep.eps_prime is not None else schedule(eps)[-1]
        chi = bracket_neighborhood(X, Lam, ep, g)
        lhs = mcl_fl_norm(quantize(a, uu), ph, X, ep, Lam, p, mask=chi)
        big = bracket_neighborhood(X, Lam, eps, g)
        semi_l = symbol_fl_seminorm(a, ph, lam, gamma, p)
        semi_X = symbol_fl_seminorm(a, ph, Lam, gamma, p, mask=big.bits)
        Lg = Lam if gamma is None else combine(Lam, gamma, "product")
        ugrid = bracket_neighborhood(X, Lg, eps, g)
        s = dft(uu).values
        u_X = masked_norm(s, Lg, p, ugrid.bits, g)
        u_l = fl_norm(uu, lg, p)
        inv = _inv_lq(sigma, q, g)
        bound = inv * (semi_X + semi_l) * (u_X + u_l)
        return lhs, bound, {"inv_sigma_q": inv, "seminorm_X": semi_X, "seminorm": semi_l, "u_X": u_X,
                            "u_norm": u_l}, ep

    lhs, bound, parts, ep = level(g0)
    parts["chain"] = chain
    ratio = lhs / bound if bound > 0 else (0.0 if lhs == 0 else math.inf)
    finite = math.isfinite(lhs) and math.isfinite(bound)
    refinement = None
    passed = finite
    if degenerate:
        passed = finite and ratio <= 1.01
    elif callable_in:
        lhs2, bound2, _, _ = level(g0.refine())
        ratio2 = lhs2 / bound2 if bound2 > 0 else (0.0 if lhs2 == 0 else math.inf)
        stab = (ratio2 / ratio if ratio > 0 else (1.0 if ratio2 == 0 else math.inf))
        refinement = {"lhs_fine": lhs2, "ratio_fine": ratio2, "ratio_change": stab}
        passed = finite and math.isfinite(lhs2) and (1 / 1.1 <= stab <= 1.1)
    return MclContinuityReport(float(lhs), float(bound), float(ratio), finite, bool(passed), ep, parts, refinement)


# --------------------------------------------------------------------------
# Descriptors and IO
# --------------------------------------------------------------------------


def region_from_descriptor(desc: Mapping[str, Any]) -> Region:
    """Build a region from a JSON generator tree."""
    kind = desc.get("kind")
    if kind == "whole":
        return whole_space()
    if kind == "empty":
        return empty_set()
    if kind == "worked_example":
        return worked_example_set(float(desc["k"]))
    if kind == "parabola_cone":
        return parabola_cone(float(desc["k"]))
    if kind == "half_space":
        return half_space(int(desc["axis"]), int(desc.get("sign", 1)))
    if kind == "ball":
        return ball_region(desc["center"], float(desc["radius"]))
    if kind == "m_cone":
        return m_cone(desc["eta"], float(desc["R"]), desc["M"]).region()
    if kind == "complement":
        return ~region_from_descriptor(desc["of"])
    if kind in ("union", "intersection"):
        parts = [region_from_descriptor(d) for d in desc["args"]]
        out = parts[0]
        for p in parts[1:]:
            out = (out | p) if kind == "union" else (out & p)
        return out
    raise BadParam(f"unknown region kind {kind!r}")


def mask_from_descriptor(desc: Mapping[str, Any], grid: GridSpec) -> FrequencyMask:
    """Evaluate a generator tree on a grid.

    Besides region kinds, accepts ``points`` (explicit list),
    ``bracket_neighborhood`` / ``euclid_neighborhood`` (with ``X``,
    ``weight``, ``eps`` and optional ``mu``) and set operations whose
    arguments are themselves mask descriptors.
    """
    kind = desc.get("kind")
    if kind == "points":
        pts = np.asarray(desc["points"], dtype=float).reshape(-1, grid.n)
        bits = np.zeros(grid.shape, dtype=bool)
        for p in pts:
            idx = grid.index_of_xi(p)
            if all(0 <= i < grid.points for i in idx):
                bits[idx] = True
        return FrequencyMask(grid, bits, {"kind": "points", "points": pts.tolist()})
    if kind in ("bracket_neighborhood", "euclid_neighborhood"):
        X = _generator_from_descriptor(desc["X"], grid)
        w = make_weight(desc["weight"])
        if kind == "bracket_neighborhood":
            return bracket_neighborhood(X, w, float(desc["eps"]), grid)
        return euclid_neighborhood(X, w, float(desc["eps"]), desc.get("mu"), grid)
    if kind == "complement" and _is_mask_desc(desc["of"]):
        return ~mask_from_descriptor(desc["of"], grid)
    if kind in ("union", "intersection") and any(_is_mask_desc(d) for d in desc["args"]):
        parts = [mask_from_descriptor(d, grid) for d in desc["args"]]
        out = parts[0]
        for p in parts[1:]:
            out = (out | p) if kind == "union" else (out & p)
        return out
    return FrequencyMask.from_region(region_from_descriptor(desc), grid)


def _is_mask_desc(desc: Mapping[str, Any]) -> bool:
    kind = desc.get("kind")
    if kind in ("points", "bracket_neighborhood", "euclid_neighborhood"):
        return True
    if kind == "complement":
        return _is_mask_desc(desc["of"])
    if kind in ("union", "intersection"):
        return any(_is_mask_desc(d) for d in desc["args"])
    return False


def _generator_from_descriptor(desc: Mapping[str, Any], grid: GridSpec):
    if desc.get("kind") == "points":
        return np.asarray(desc["points"], dtype=float).reshape(-1, grid.n)
    if desc.get("kind") == "parabola":
        return parabola_points(float(desc["smax"]), float(desc.get("step", 1.0)))
    if _is_mask_desc(desc):
        return mask_from_descriptor(desc, grid)
    return region_from_descriptor(desc)


_MASK_MAGIC = b"FLMK"


def save_mask(path, m: FrequencyMask) -> None:
    """Write ``FLMK``, ``<IId`` (n, points, extent) and one byte per sample."""
    g = m.grid
    with open(path, "wb") as fh:
        fh.write(_MASK_MAGIC + struct.pack("<IId", g.n, g.points, g.extent))
        fh.write(m.bits.astype(np.uint8).tobytes())


def load_mask(path) -> FrequencyMask:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MASK_MAGIC:
        raise BadParam("not a mask file")
    n, points, extent = struct.unpack_from("<IId", data, 4)
    g = GridSpec(n, extent, points)
    bits = np.frombuffer(data, dtype=np.uint8, offset=20)
    if bits.size != points ** n:
        raise GridMismatch("mask size does not match header")
    return FrequencyMask(g, bits.reshape(g.shape).astype(bool), {"kind": "file"})
