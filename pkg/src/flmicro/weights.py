"""Weight functions on frequency space and sampled checks of their conditions.

A :class:`Weight` wraps a vectorised positive function ``omega(xi)`` acting on
arrays of shape ``(..., n)`` together with the metadata that the analysis
relies on: polynomial growth exponents, the conditions the family is known
to satisfy and the associated exponents.

Conditions are verified by falsification: the defining inequality is
evaluated on a deterministic probe set at two refinement levels and the
empirical best constant must be finite and stable (ratio <= 1.1) across the
levels.

Examples
--------
>>> w = make_weight({"family": "quasi_homogeneous", "M": [1, 2], "s": 1.0})
>>> float(w([3.0, 2.0])) ** 2
26.000000000000004
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import BadParam, PlanTooSmall, StepTooCoarse
from .polyhedron import CompletePolyhedron, build_polyhedron

ArrayFunc = Callable[[np.ndarray], np.ndarray]

CONDITIONS = ("T", "SV", "SA", "SM", "G", "B", "PG", "SH")
STABILITY = 1.1


# --------------------------------------------------------------------------
# Weight objects
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Weight:
    """Positive function on frequency space with analytic metadata.

    Attributes
    ----------
    func : callable
        Maps an array of shape ``(..., n)`` to positive values of shape ``(...)``.
    family : str
        Family tag (``homogeneous``, ``quasi_homogeneous``,
        ``multi_quasi_elliptic``, ``log_type``, ``constant``, ``product``,
        ``inverse``, ``power``, ``custom``).
    params : dict
        Family parameters.
    growth_lower, growth_upper : float or None
        Exponents ``nu``, ``mu`` with
        ``(1+|xi|)^nu / C <= omega(xi) <= C (1+|xi|)^mu``.
    claimed_conditions : frozenset of str
        Conditions the family satisfies.
    constants : dict
        Per-condition exponents, e.g. ``{"T": {"N": 2.0}, "G": {"delta": 0.5}}``.
    qh : tuple or None
        ``(M, s)`` when the weight equals ``<xi>_M^s``; ``M`` may be ``None``
        for the isotropic case in any dimension.
    """

    func: ArrayFunc
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    growth_lower: float | None = None
    growth_upper: float | None = None
    claimed_conditions: frozenset = frozenset()
    constants: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    qh: tuple | None = None

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.func(xi)

    def qh_params(self, n: int) -> tuple[tuple[int, ...], float] | None:
        """``(M, s)`` with ``M`` of length ``n`` when the weight is ``<.>_M^s``."""
        if self.qh is None:
            return None
        M, s = self.qh
        if M is None:
            M = (1,) * n
        if len(M) != n:
            return None
        return tuple(int(m) for m in M), float(s)

    def sv_exponent(self) -> float | None:
        return self.constants.get("SV", {}).get("N")

    def t_exponent(self) -> float | None:
        return self.constants.get("T", {}).get("N")

    def describe(self) -> dict:
        return {
            "family": self.family,
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "growth": [self.growth_lower, self.growth_upper],
            "claimed_conditions": sorted(self.claimed_conditions),
            "constants": {k: dict(v) for k, v in self.constants.items()},
        }


def _jsonable(v):
    if isinstance(v, CompletePolyhedron):
        return v.to_dict()
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return v


def bracket(xi: np.ndarray) -> np.ndarray:
    """``<xi> = (1 + |xi|^2)^(1/2)`` over the last axis."""
    return np.sqrt(1.0 + np.sum(xi * xi, axis=-1))


def bracket_M(xi: np.ndarray, M: Sequence[int]) -> np.ndarray:
    """Quasi-homogeneous bracket ``(1 + sum xi_j^(2 m_j))^(1/2)``."""
    M = np.asarray(M)
    return np.sqrt(1.0 + np.sum(xi ** (2 * M), axis=-1))


def m_norm(xi: np.ndarray, M: Sequence[int]) -> np.ndarray:
    """Anisotropic size ``|xi|_M = (sum xi_j^(2 m_j))^(1/2)``."""
    M = np.asarray(M)
    return np.sqrt(np.sum(xi ** (2 * M), axis=-1))


def m_dilate(xi: np.ndarray, t, M: Sequence[int]) -> np.ndarray:
    """``t^(1/M) xi``, so that ``|t^(1/M) xi|_M = t |xi|_M``."""
    t = np.asarray(t, dtype=float)[..., None]
    return xi * t ** (1.0 / np.asarray(M, dtype=float))


def lambda_P(xi: np.ndarray, P: CompletePolyhedron) -> np.ndarray:
    """``(sum_{alpha in V(P)} xi^(2 alpha))^(1/2)``."""
    V = np.asarray(P.vertices, dtype=float)
    terms = np.prod(xi[..., None, :] ** (2.0 * V), axis=-1)
    return np.sqrt(np.sum(terms, axis=-1))


def _is_qh_polyhedron(P: CompletePolyhedron) -> tuple[int, ...] | None:
    n = P.n
    nonzero = [v for v in P.vertices if any(v)]
    if len(nonzero) != n:
        return None
    M = [0] * n
    for v in nonzero:
        nz = [j for j, c in enumerate(v) if c]
        if len(nz) != 1:
            return None
        M[nz[0]] = v[nz[0]]
    return tuple(M) if all(M) else None


def _pg(lo: float, hi: float) -> dict:
    return {"nu": float(min(lo, hi)), "mu": float(max(lo, hi))}


def homogeneous(m: float, n: int | None = None) -> Weight:
    """``<xi>^m``; claims follow the classical Peetre-based facts."""
    m = float(m)
    claims = {"T", "PG"}
    consts: dict[str, dict] = {"T": {"N": abs(m)}, "PG": _pg(m, m)}
    if m >= 0:
        claims |= {"SM", "SA", "SH"}
        consts["SM"] = {"C": 2.0 ** abs(m)}
    if m > 0:
        claims.add("SV")
        consts["SV"] = {"N": m}
    if n is not None and m > n:
        claims.add("B")
        consts["B"] = {"q": 1.0}
    return Weight(
        func=lambda xi, m=m: bracket(xi) ** m,
        family="homogeneous",
        params={"m": m, "n": n},
        growth_lower=m,
        growth_upper=m,
        claimed_conditions=frozenset(claims),
        constants=consts,
        qh=(None, m),
    )


def quasi_homogeneous(M: Sequence[int], s: float = 1.0) -> Weight:
    """``<xi>_M^s`` with ``M`` a vector of positive integers."""
    M = tuple(int(m) for m in M)
    if not M or any(m < 1 for m in M):
        raise BadParam(f"M must be a nonempty vector of positive integers, got {M}")
    s = float(s)
    n = len(M)
    m_lo, m_hi = min(M), max(M)
    claims = {"T", "PG"}
    consts: dict[str, dict] = {"T": {"N": abs(s) * m_hi}, "PG": _pg(s * m_lo, s * m_hi)}
    if s > 0:
        claims |= {"SV", "SA", "SM", "SH"}
        consts["SV"] = {"N": s * m_hi}
    if s > n / m_lo:
        claims.add("B")
        consts["B"] = {"q": 1.0}
    return Weight(
        func=lambda xi, M=M, s=s: bracket_M(xi, M) ** s,
        family="quasi_homogeneous",
        params={"M": M, "s": s},
        growth_lower=consts["PG"]["nu"],
        growth_upper=consts["PG"]["mu"],
        claimed_conditions=frozenset(claims),
        constants=consts,
        qh=(M, s),
    )


def multi_quasi_elliptic(P: CompletePolyhedron, s: float = 1.0) -> Weight:
    """``lambda_P^s`` for a complete polyhedron ``P``."""
    s = float(s)
    n = P.n
    mu, d = float(P.mu), float(P.delta)
    claims = {"T", "PG"}
    consts: dict[str, dict] = {"T": {"N": abs(s) * mu}, "PG": _pg(s * P.mu0, s * P.mu1)}
    M = _is_qh_polyhedron(P)
    if s > 0:
        claims |= {"SV", "SM", "SH", "G"}
        consts["SV"] = {"N": s * mu}
        consts["G"] = {"delta": d}
        if M is not None:
            claims.add("SA")
    if s > n / ((1.0 - d) * P.mu0):
        claims.add("B")
        consts["B"] = {"q": 1.0}
    return Weight(
        func=lambda xi, P=P, s=s: lambda_P(xi, P) ** s,
        family="multi_quasi_elliptic",
        params={"P": P, "s": s},
        growth_lower=consts["PG"]["nu"],
        growth_upper=consts["PG"]["mu"],
        claimed_conditions=frozenset(claims),
        constants=consts,
        qh=(M, s) if M is not None else None,
    )


def log_type(r: float, s: float, n: int | None = None) -> Weight:
    """``<xi>^s [log(2 + <xi>)]^r`` with ``r, s > 0``."""
    r, s = float(r), float(s)
    if r <= 0 or s <= 0:
        raise BadParam(f"log-type exponents must be positive, got r={r}, s={s}")
    claims = {"T", "PG", "SV", "SA", "SM", "SH"}
    consts: dict[str, dict] = {"T": {"N": s + r}, "PG": _pg(s, s + r), "SV": {"N": s + r}}
    if n is not None and s > n:
        claims.add("B")
        consts["B"] = {"q": 1.0}
    return Weight(
        func=lambda xi, r=r, s=s: bracket(xi) ** s * np.log(2.0 + bracket(xi)) ** r,
        family="log_type",
        params={"r": r, "s": s, "n": n},
        growth_lower=s,
        growth_upper=s + r,
        claimed_conditions=frozenset(claims),
        constants=consts,
    )


def constant_weight(c: float = 1.0) -> Weight:
    """The constant weight ``c > 0``."""
    c = float(c)
    if c <= 0:
        raise BadParam("constant weight must be positive")
    return Weight(
        func=lambda xi, c=c: np.full(np.shape(xi)[:-1], c),
        family="constant",
        params={"c": c},
        growth_lower=0.0,
        growth_upper=0.0,
        claimed_conditions=frozenset({"T", "PG", "SA", "SM", "SH", "SV"}),
        constants={"T": {"N": 0.0}, "PG": _pg(0.0, 0.0), "SV": {"N": 1.0}},
        qh=(None, 0.0) if c == 1.0 else None,
    )


def custom_weight(func: ArrayFunc, growth: tuple[float, float] | None = None, name: str = "custom") -> Weight:
    """Wrap an arbitrary vectorised positive function without claims."""
    lo, hi = growth if growth is not None else (None, None)
    return Weight(func=func, family=name, growth_lower=lo, growth_upper=hi)


def make_weight(spec: Mapping[str, Any]) -> Weight:
    """Construct a weight from a JSON-style descriptor.

    Parameters
    ----------
    spec : mapping
        ``{"family": ..., ...}``.  Recognised families and keys:

        - ``homogeneous``: ``m``, optional ``n``
        - ``quasi_homogeneous``: ``M``, ``s`` (default 1)
        - ``multi_quasi_elliptic``: ``vertices`` (or ``M``), ``s``
        - ``log_type``: ``r``, ``s``, optional ``n``
        - ``constant``: optional ``c``
        - ``product``: ``factors`` (list of descriptors)
        - ``inverse``: ``of``; ``power``: ``of``, ``s``

    Raises
    ------
    BadParam
        Unknown family or parameters out of range.
    """
    fam = spec.get("family")
    try:
        if fam == "homogeneous":
            return homogeneous(spec["m"], spec.get("n"))
        if fam == "quasi_homogeneous":
            return quasi_homogeneous(spec["M"], spec.get("s", 1.0))
        if fam == "multi_quasi_elliptic":
            if "vertices" in spec:
                P = build_polyhedron(spec["vertices"])
            elif "M" in spec:
                M = list(spec["M"])
                if not M:
                    raise BadParam("empty M")
                n = len(M)
                P = build_polyhedron([(0,) * n] + [tuple(m if i == j else 0 for i in range(n)) for j, m in enumerate(M)])
            else:
                raise BadParam("multi_quasi_elliptic needs 'vertices' or 'M'")
            return multi_quasi_elliptic(P, spec.get("s", 1.0))
        if fam == "log_type":
            return log_type(spec["r"], spec["s"], spec.get("n"))
        if fam == "constant":
            return constant_weight(spec.get("c", 1.0))
        if fam == "product":
            ws = [make_weight(f) for f in spec["factors"]]
            out = ws[0]
            for w in ws[1:]:
                out = combine(out, w, "product")
            return out
        if fam == "inverse":
            return combine(make_weight(spec["of"]), None, "inverse")
        if fam == "power":
            return combine(make_weight(spec["of"]), float(spec["s"]), "power")
    except KeyError as exc:
        raise BadParam(f"missing parameter {exc} for family {fam!r}") from None
    raise BadParam(f"unknown weight family {fam!r}")


def combine(w1: Weight, w2: Weight | float | None, op: str) -> Weight:
    """Pointwise product, inverse or real power of weights.

    The temperance exponent composes as ``N1 + N2`` (product), ``N``
    (inverse) and ``|s| N`` (power ``s``).
    """
    N1 = w1.t_exponent()
    lo1, hi1 = w1.growth_lower, w1.growth_upper
    if op == "product":
        if not isinstance(w2, Weight):
            raise BadParam("product needs two weights")
        N2 = w2.t_exponent()
        claims = {"T"}
        consts: dict[str, dict] = {}
        if N1 is not None and N2 is not None:
            consts["T"] = {"N": N1 + N2}
        lo = hi = None
        if None not in (lo1, hi1, w2.growth_lower, w2.growth_upper):
            lo, hi = lo1 + w2.growth_lower, hi1 + w2.growth_upper
            claims.add("PG")
            consts["PG"] = {"nu": lo, "mu": hi}
        for c in ("SM", "SH"):
            if c in w1.claimed_conditions and c in w2.claimed_conditions:
                claims.add(c)
        qh = None
        if w1.qh is not None and w2.qh is not None and w1.qh[0] == w2.qh[0]:
            qh = (w1.qh[0], w1.qh[1] + w2.qh[1])
        f1, f2 = w1.func, w2.func
        return Weight(lambda xi: f1(xi) * f2(xi), "product", {"factors": (w1.family, w2.family)},
                      lo, hi, frozenset(claims), consts, qh)
    if op == "inverse":
        consts = {"T": {"N": N1}} if N1 is not None else {}
        lo = -hi1 if hi1 is not None else None
        hi = -lo1 if lo1 is not None else None
        claims = {"T"}
        if lo is not None and hi is not None:
            claims.add("PG")
            consts["PG"] = {"nu": lo, "mu": hi}
        qh = (w1.qh[0], -w1.qh[1]) if w1.qh is not None else None
        f1 = w1.func
        return Weight(lambda xi: 1.0 / f1(xi), "inverse", {"of": w1.family}, lo, hi, frozenset(claims), consts, qh)
    if op == "power":
        s = float(w2)
        if s == 0.0:
            return constant_weight(1.0)
        consts = {"T": {"N": abs(s) * N1}} if N1 is not None else {}
        claims = {"T"}
        lo = hi = None
        if lo1 is not None and hi1 is not None:
            lo, hi = min(s * lo1, s * hi1), max(s * lo1, s * hi1)
            claims.add("PG")
            consts["PG"] = {"nu": lo, "mu": hi}
        if s > 0:
            for c in ("SA", "SM", "SH", "G"):
                if c in w1.claimed_conditions:
                    claims.add(c)
                    if c in w1.constants:
                        consts[c] = dict(w1.constants[c])
            if "SV" in w1.claimed_conditions and w1.sv_exponent() is not None:
                claims.add("SV")
                consts["SV"] = {"N": s * w1.sv_exponent()}
        qh = (w1.qh[0], s * w1.qh[1]) if w1.qh is not None else None
        f1 = w1.func
        return Weight(lambda xi: f1(xi) ** s, "power", {"of": w1.family, "s": s}, lo, hi,
                      frozenset(claims), consts, qh)
    raise BadParam(f"unknown combine op {op!r}")


# --------------------------------------------------------------------------
# Probe plans
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeLevel:
    """One refinement level: shells ``2^0 .. 2^kmax`` plus random pairs."""

    kmax: int
    directions: int
    pairs: int


@dataclass(frozen=True)
class ProbePlan:
    """Deterministic sampling plan for condition checks.

    Attributes
    ----------
    n : int
        Dimension.
    levels : tuple of ProbeLevel
        Refinement levels, coarse first.  At least two are required.
    seed : int
        Seed for the random pair sample.
    trunc_exp : int
        Quadrature truncation radius ``R = 2^trunc_exp`` used for (B)/C_q.
    radial_nodes : int
        Gauss-Legendre nodes per dyadic radial interval.
    angles : int
        Angular nodes (``n = 2``); ``n = 3`` uses ``angles // 2`` polar nodes.
    cq_directions : int
        Probe directions for the sup over ``xi`` in C_q.
    """

    n: int
    levels: tuple[ProbeLevel, ...] = (ProbeLevel(10, 32, 5000), ProbeLevel(14, 64, 10000))
    seed: int = 20240601
    trunc_exp: int = 16
    radial_nodes: int = 8
    angles: int = 64
    cq_directions: int = 8
    cq_kmax: tuple[int, int] = (6, 10)

    @classmethod
    def default(cls, n: int) -> "ProbePlan":
        return cls(n=n)

    @classmethod
    def quick(cls, n: int) -> "ProbePlan":
        """Smaller plan for fast checks."""
        return cls(n=n, levels=(ProbeLevel(8, 16, 1500), ProbeLevel(12, 32, 3000)),
                   trunc_exp=14, angles=32, cq_directions=4, cq_kmax=(5, 8))


def directions(n: int, count: int) -> np.ndarray:
    """Deterministic unit directions (equally spaced angles for ``n = 2``)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    # Fibonacci sphere plus the coordinate axes
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    th = np.pi * (1 + 5 ** 0.5) * i
    pts = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=-1)
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    return np.concatenate([axes, pts])


def shell_points(n: int, kmax: int, ndir: int) -> np.ndarray:
    """Origin plus points at radii ``2^0 .. 2^kmax`` along fixed directions."""
    d = directions(n, ndir)
    radii = 2.0 ** np.arange(0, kmax + 1)
    pts = (radii[:, None, None] * d[None, :, :]).reshape(-1, n)
    return np.concatenate([np.zeros((1, n)), pts])


def random_points(rng: np.random.Generator, n: int, count: int, kmax: int) -> np.ndarray:
    """Points with log-uniform radius in ``[2^-2, 2^kmax]`` and uniform direction."""
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = 2.0 ** rng.uniform(-2, kmax, size=count)
    return v * r[:, None]


def probe_pairs(plan: ProbePlan, level: ProbeLevel) -> tuple[np.ndarray, np.ndarray]:
    """All ``(xi, eta)`` pairs used for two-point conditions at one level."""
    n = plan.n
    rng = np.random.default_rng(plan.seed + level.kmax)
    S = shell_points(n, level.kmax, level.directions)
    xs, es = [], []
    # structured pairs: eta a multiple of xi, including the diagonal
    for t in (0.0, 0.25, 0.5, 1.0, 2.0, -1.0):
        xs.append(S)
        es.append(t * S)
    # coordinate splittings: eta keeps a subset of the components of xi
    R = random_points(rng, n, level.pairs // 4, level.kmax)
    for mask in itertools.product((0.0, 1.0), repeat=n):
        if 0 < sum(mask) < n:
            for base in (S, R):
                xs.append(base)
                es.append(base * np.asarray(mask))
    # shell x shell
    Xi = np.repeat(S, len(S), axis=0)
    Eta = np.tile(S, (len(S), 1))
    xs.append(Xi)
    es.append(Eta)
    # random log-uniform pairs
    xs.append(random_points(rng, n, level.pairs, level.kmax))
    es.append(random_points(rng, n, level.pairs, level.kmax))
    return np.concatenate(xs), np.concatenate(es)


# --------------------------------------------------------------------------
# Condition checks
# --------------------------------------------------------------------------


@dataclass
class ConditionReport:
    """Outcome of a sampled condition check."""

    condition: str
    passed: bool
    empirical_constant: float
    witness: list
    refinement_ratio: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "passed": bool(self.passed),
            "empirical_constant": _num(self.empirical_constant),
            "witness": self.witness,
            "refinement_ratio": _num(self.refinement_ratio),
            "details": {k: _num(v) if isinstance(v, float) else v for k, v in self.details.items()},
        }


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "nan")


def _ratio(fine: float, coarse: float) -> float:
    if not (math.isfinite(fine) and math.isfinite(coarse)):
        return math.inf
    if coarse == 0.0:
        return 1.0 if fine == 0.0 else math.inf
    return fine / coarse


def _stable(fine: float, coarse: float) -> tuple[bool, float]:
    r = _ratio(fine, coarse)
    return bool(math.isfinite(fine) and r <= STABILITY), r


def _sup_with_witness(vals: np.ndarray, *pts: np.ndarray) -> tuple[float, list]:
    if vals.size == 0:
        return 0.0, []
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        return math.inf, [p[i].tolist() for p in pts]
    i = int(np.argmax(vals))
    return float(vals[i]), [p[i].tolist() for p in pts]


def _level_constant(w: Weight, cond: str, plan: ProbePlan, level: ProbeLevel, N: float | None,
                    delta: float | None) -> tuple[float, list]:
    n = plan.n
    if cond in ("T", "SA", "SM", "G"):
        xi, eta = probe_pairs(plan, level)
        wx, we, wd = w(xi), w(eta), w(xi - eta)
        if cond == "T":
            vals = wx / ((1.0 + np.linalg.norm(xi - eta, axis=-1)) ** N * we)
        elif cond == "SA":
            vals = wx / (wd + we)
        elif cond == "SM":
            vals = wx / (wd * we)
        else:
            vals = wx / (we * wd ** delta + we ** delta * wd)
        return _sup_with_witness(vals, xi, eta)
    if cond == "SV":
        S = np.concatenate([shell_points(n, level.kmax, level.directions),
                            random_points(np.random.default_rng(plan.seed), n, level.pairs // 10, level.kmax)])
        D = directions(n, level.directions)
        wx = w(S)
        rad = wx ** (1.0 / N)
        vals, xs, es = [], [], []
        # radii up to w^(1/N) / 2; the condition then holds with C = max(C_emp, 2)
        for frac in (0.125, 0.25, 0.5):
            eta = S[:, None, :] + frac * rad[:, None, None] * D[None, :, :]
            we = w(eta)
            ratio = np.maximum(we / wx[:, None], wx[:, None] / we)
            vals.append(ratio.ravel())
            xs.append(np.repeat(S, len(D), axis=0))
            es.append(eta.reshape(-1, n))
        return _sup_with_witness(np.concatenate(vals), np.concatenate(xs), np.concatenate(es))
    if cond == "SH":
        S = shell_points(n, level.kmax, level.directions)
        ts = np.linspace(-1.0, 1.0, 21)
        wx = w(S)
        vals = np.stack([w(t * S) / wx for t in ts], axis=1)
        xs = np.repeat(S, len(ts), axis=0)
        ts_arr = np.tile(ts, len(S))[:, None]
        return _sup_with_witness(vals.ravel(), xs, ts_arr)
    if cond == "PG":
        S = np.concatenate([shell_points(n, level.kmax, level.directions),
                            random_points(np.random.default_rng(plan.seed), n, level.pairs, level.kmax)])
        nu, mu = w.growth_lower, w.growth_upper
        if nu is None or mu is None:
            raise BadParam("PG check needs growth exponents")
        r1 = 1.0 + np.linalg.norm(S, axis=-1)
        wx = w(S)
        vals = np.maximum(wx / r1 ** mu, r1 ** nu / wx)
        return _sup_with_witness(vals, S)
    raise BadParam(f"unknown condition {cond!r}")


def check_condition(w: Weight, cond: str, plan: ProbePlan, *, N: float | None = None,
                    delta: float | None = None, q: float = 1.0) -> ConditionReport:
    """Sampled verification of a weight condition.

    Parameters
    ----------
    w : Weight
    cond : {"T", "SV", "SA", "SM", "G", "B", "PG", "SH"}
        ``"B"`` may carry its exponent as ``"B(q=2)"``.
    plan : ProbePlan
    N : float, optional
        Exponent for (T)/(SV); defaults to the weight metadata.
    delta : float, optional
        For (G): test this exponent only instead of scanning.
    q : float
        Lebesgue exponent for (B).

    Returns
    -------
    ConditionReport
        ``passed`` iff the constant is finite and stable within 10% across
        the two refinement levels.  For (G) the report carries the smallest
        sampled ``delta`` that passes.

    Raises
    ------
    PlanTooSmall
        Fewer than two refinement levels.
    """
    if len(plan.levels) < 2:
        raise PlanTooSmall("need at least two refinement levels")
    if cond.startswith("B(") and "q=" in cond:
        q = float(cond.split("q=")[1].rstrip(")"))
        cond = "B"
    coarse, fine = plan.levels[0], plan.levels[-1]
    if cond == "B":
        res = estimate_Cq(w, w, w, q, plan, return_details=True)
        C, det = res
        ok = math.isfinite(C)
        return ConditionReport("B", ok, C, det.get("witness", []), det.get("refinement_ratio", math.inf),
                               {"q": q, **{k: v for k, v in det.items() if k != "witness"}})
    if cond in ("T", "SV"):
        if N is None:
            N = w.constants.get(cond, {}).get("N")
            if N is None:
                N = w.t_exponent() if cond == "T" else None
        if N is None or (cond == "SV" and N <= 0):
            raise BadParam(f"condition {cond} needs an exponent N")
    if cond == "G" and delta is None:
        return _scan_delta(w, plan)
    c0, _ = _level_constant(w, cond, plan, coarse, N, delta)
    c1, wit = _level_constant(w, cond, plan, fine, N, delta)
    ok, r = _stable(c1, c0)
    det: dict = {"coarse": c0, "fine": c1}
    if N is not None:
        det["N"] = float(N)
    if delta is not None:
        det["delta"] = float(delta)
    return ConditionReport(cond, ok, c1, wit, r, det)


DELTA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def _scan_delta(w: Weight, plan: ProbePlan) -> ConditionReport:
    coarse, fine = plan.levels[0], plan.levels[-1]
    xs0, es0 = probe_pairs(plan, coarse)
    xs1, es1 = probe_pairs(plan, fine)
    cache = [(w(x), w(e), w(x - e), x, e) for x, e in ((xs0, es0), (xs1, es1))]
    best = None
    for d in DELTA_GRID:
        cs = []
        for wx, we, wd, x, e in cache:
            cs.append(_sup_with_witness(wx / (we * wd ** d + we ** d * wd), x, e))
        ok, r = _stable(cs[1][0], cs[0][0])
        if ok:
            best = (d, cs[1][0], cs[1][1], r)
            break
    if best is None:
        return ConditionReport("G", False, math.inf, [], math.inf, {"delta": None})
    d, C, wit, r = best
    return ConditionReport("G", True, C, wit, r, {"delta": d})


def t_constant_from_sv(C_sv: float, N: float, c: float) -> float:
    """Temperance constant implied by (SV) and ``inf omega = c > 0``."""
    C = max(C_sv, 1.0)
    return max(C, C ** N / c)


def sm_constant_from_g(C_g: float, delta: float, c: float) -> float:
    """Submultiplicativity constant implied by (G) and ``inf omega = c > 0``."""
    return 2.0 * C_g * c ** (delta - 1.0)


def growth_exponents(w: Weight, n: int, k0: int = 10, k1: int = 14, ndir: int = 64) -> tuple[float, float]:
    """Log-log slopes of ``omega`` along probe directions: ``(min, max)``."""
    D = directions(n, ndir)
    r = 2.0 ** np.arange(k0, k1 + 1)
    lr = np.log1p(r)
    slopes = []
    for d in D:
        lw = np.log(w(r[:, None] * d[None, :]))
        slopes.append(np.polyfit(lr, lw, 1)[0])
    return float(min(slopes)), float(max(slopes))


# --------------------------------------------------------------------------
# The constant C_q
# --------------------------------------------------------------------------


def _angular_rule(n: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(count, 2 * np.pi / count)
    x, wx = np.polynomial.legendre.leggauss(max(count // 2, 4))
    nphi = count
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1 - x * x)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(x, np.ones(nphi))], -1)
    wts = np.outer(wx, np.full(nphi, 2 * np.pi / nphi))
    return dirs.reshape(-1, 3), wts.ravel()


def _radial_rule(J: int, nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on ``[0,1], [1,2], ..., [2^(J-1), 2^J]``."""
    g, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.concatenate([[0.0], 2.0 ** np.arange(0, J + 1)])
    rs, ws, shell = [], [], []
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        rs.append(0.5 * (b - a) * g + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * gw)
        shell.append(np.full(nodes, k))
    return np.concatenate(rs), np.concatenate(ws), np.concatenate(shell)


def _lq_integral(xi: np.ndarray, g: Callable[[np.ndarray, np.ndarray], np.ndarray], q: float,
                 plan: ProbePlan) -> tuple[np.ndarray, np.ndarray]:
    """Per-shell contributions of ``int |g(xi, eta)|^q d eta`` for each probe.

    A smooth partition of unity splits the domain between the two natural
    centres ``0`` and ``xi``; each part is integrated in polar coordinates
    around its centre.  Returns shell sums of shape ``(probes, shells)``.
    """
    n = plan.n
    J = plan.trunc_exp + 1
    r, rw, shell = _radial_rule(J, plan.radial_nodes)
    D, dw = _angular_rule(n, plan.angles)
    nshell = int(shell.max()) + 1
    out = np.zeros((len(xi), nshell))
    jac = r ** (n - 1) * rw
    offs = r[:, None, None] * D[None, :, :]
    wts = jac[:, None] * dw[None, :]
    k = 4.0
    for i, x in enumerate(xi):
        for c, centre in enumerate((np.zeros(n), x)):
            eta = centre + offs
            a = np.linalg.norm(eta, axis=-1)
            b = np.linalg.norm(eta - x, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                chi = b ** k / (a ** k + b ** k)
            chi = np.where(np.isfinite(chi), chi, 0.5)
            part = chi if c == 0 else 1.0 - chi
            vals = np.abs(g(x, eta)) ** q * part * wts
            out[i] += np.bincount(np.repeat(shell, len(dw)), weights=vals.ravel(), minlength=nshell)
    return out


def estimate_Cq(omega: Weight, omega1: Weight, omega2: Weight, q: float, plan: ProbePlan,
                return_details: bool = False):
    """``sup_xi || omega(xi) / (omega1(xi - .) omega2(.)) ||_{L^q}``.

    Parameters
    ----------
    omega, omega1, omega2 : Weight
    q : float
        Exponent in ``[1, inf]``; ``inf`` takes a pointwise supremum.
    plan : ProbePlan
    return_details : bool
        Also return a dict with per-level values, refinement ratio and witness.

    Returns
    -------
    float
        The estimate, or ``inf`` when the integral grows by more than 10%
        under truncation-radius doubling, the power-law tail does not
        converge, or the supremum over probes grows across refinement.
    """
    if len(plan.levels) < 2:
        raise PlanTooSmall("need at least two refinement levels")
    q = float(q)
    n = plan.n
    det: dict = {}
    if math.isinf(q):
        consts = []
        for lvl in (plan.levels[0], plan.levels[-1]):
            xi, eta = probe_pairs(plan, lvl)
            vals = omega(xi) / (omega1(xi - eta) * omega2(eta))
            consts.append(_sup_with_witness(vals, xi, eta))
        ok, r = _stable(consts[1][0], consts[0][0])
        C = consts[1][0] if ok else math.inf
        det = {"coarse": consts[0][0], "fine": consts[1][0], "refinement_ratio": r, "witness": consts[1][1]}
        return (C, det) if return_details else C

    def g(x, eta):
        return omega(x) / (omega1(x - eta) * omega2(eta))

    D = directions(n, plan.cq_directions)
    k0, k1 = plan.cq_kmax
    sups = []
    growth_flag = False
    tail_flag = False
    wit = []
    for kmax in (k0, k1):
        radii = 2.0 ** np.arange(0, kmax + 1)
        xi = np.concatenate([np.zeros((1, n)), (radii[:, None, None] * D[None]).reshape(-1, n)])
        shells = _lq_integral(xi, g, q, plan)
        I_R = shells[:, :-1].sum(axis=1)
        I_2R = shells.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            growth = np.where(I_R > 0, I_2R / I_R, np.where(I_2R > 0, np.inf, 1.0))
            rho = np.where(shells[:, -2] > 0, shells[:, -1] / shells[:, -2], 0.0)
        if omega1.growth_lower is not None and omega2.growth_lower is not None:
            # power-law decay implied by the lower growth exponents
            rho_pg = 2.0 ** (n - q * (omega1.growth_lower + omega2.growth_lower))
            if rho_pg < 1.0:
                rho = np.maximum(rho, rho_pg)
        if np.any(growth > STABILITY) or np.any(rho >= 1.0):
            growth_flag = growth_flag or bool(np.any(growth > STABILITY))
            tail_flag = tail_flag or bool(np.any(rho >= 1.0))
            vals = np.full(len(xi), math.inf)
        else:
            tail = shells[:, -1] * rho / (1.0 - rho)
            vals = (I_2R + tail) ** (1.0 / q)
        i = int(np.argmax(vals))
        sups.append(float(vals[i]))
        wit = [xi[i].tolist()]
    ok, r = _stable(sups[1], sups[0])
    C = sups[1] if ok else math.inf
    det = {"coarse": sups[0], "fine": sups[1], "refinement_ratio": r, "witness": wit,
           "truncation_growth": growth_flag, "tail_divergent": tail_flag}
    return (C, det) if return_details else C


# --------------------------------------------------------------------------
# Derivative decay
# --------------------------------------------------------------------------


def _fd(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, alpha: Sequence[int], h: np.ndarray) -> np.ndarray:
    """Central difference of order ``|alpha| <= 2`` with per-point steps ``h``."""
    alpha = tuple(int(a) for a in alpha)
    n = x.shape[-1]
    e = np.eye(n)
    order = sum(alpha)
    if order == 0:
        return f(x)
    if order == 1:
        j = alpha.index(1)
        d = h[:, j:j + 1] * e[j]
        return (f(x + d) - f(x - d)) / (2 * h[:, j])
    if order == 2:
        if 2 in alpha:
            j = alpha.index(2)
            d = h[:, j:j + 1] * e[j]
            return (f(x + d) - 2 * f(x) + f(x - d)) / h[:, j] ** 2
        i, j = [k for k, a in enumerate(alpha) if a == 1]
        di = h[:, i:i + 1] * e[i]
        dj = h[:, j:j + 1] * e[j]
        return (f(x + di + dj) - f(x + di - dj) - f(x - di + dj) + f(x - di - dj)) / (4 * h[:, i] * h[:, j])
    raise BadParam("derivative order above 2 not supported")


def check_derivative_decay(w: Weight, s: float, alpha: Sequence[int], grid: ProbePlan | np.ndarray | None = None,
                           *, step: float | None = None, rel_step: float = 1e-3, sv_constant: float = 2.0,
                           n: int | None = None) -> ConditionReport:
    """Check ``|d^alpha w^s| <= C_alpha w^(s - e(alpha))`` by central differences.

    The exponent loss is ``sum alpha_j / m_j`` for quasi-homogeneous weights
    and ``|alpha| / mu`` for multi-quasi-elliptic ones.

    Parameters
    ----------
    w : Weight
    s : float
    alpha : multi-index with ``|alpha| <= 2``
    grid : ProbePlan or array of probe points, optional
        With a plan, the constant is compared between its coarse and fine
        levels (the fine level also halves the step).
    step : float, optional
        Absolute finite-difference step.  By default the step is
        ``rel_step * w(xi)^(1/m_j)``, adapted to the local scale.
    sv_constant : float
        Constant ``C`` of the slowly-varying radius ``w^(1/mu) / C``.

    Raises
    ------
    StepTooCoarse
        If an absolute step exceeds the slowly-varying radius at a probe.
    """
    alpha = tuple(int(a) for a in alpha)
    if sum(alpha) > 2:
        raise BadParam("|alpha| must be at most 2")
    n = n or len(alpha)
    fam = w.family
    if fam == "constant":
        scales = np.ones(n)
        loss = 0.0
        mu = 1.0
    elif w.qh is not None and w.qh_params(n) is not None:
        M, _ = w.qh_params(n)
        scales = 1.0 / np.asarray(M, dtype=float)
        loss = float(sum(a / m for a, m in zip(alpha, M)))
        mu = float(max(M))
    elif fam == "multi_quasi_elliptic":
        mu = float(w.params["P"].mu)
        scales = np.full(n, 1.0 / mu)
        loss = sum(alpha) / mu
    else:
        raise BadParam(f"derivative decay not defined for family {fam!r}")
    base = w
    if w.qh is not None:
        # decay is stated for the base weight (s = 1) raised to the power s
        M, s0 = w.qh_params(n)
        base = quasi_homogeneous(M, 1.0) if s0 != 0 else constant_weight()
    elif fam == "multi_quasi_elliptic":
        base = multi_quasi_elliptic(w.params["P"], 1.0)
    f = (lambda x: base(x) ** s)

    def level_const(pts: np.ndarray, shrink: float) -> tuple[float, list, float]:
        bw = base(pts)
        if step is not None:
            radius = bw ** (1.0 / mu) / sv_constant
            if np.any(step > radius):
                i = int(np.argmax(step > radius))
                raise StepTooCoarse(f"step {step} exceeds slowly-varying radius {radius[i]:.3g} at {pts[i].tolist()}")
            h = np.full((len(pts), n), step * shrink)
        else:
            h = rel_step * shrink * bw[:, None] ** scales[None, :]
        d = _fd(f, pts, alpha, h)
        bound = bw ** (s - loss)
        vals = np.abs(d) / bound
        C, wit = _sup_with_witness(vals, pts)
        scale = float(np.max(np.abs(f(pts)) / bound))
        return C, wit, scale

    if isinstance(grid, np.ndarray):
        pts = np.atleast_2d(grid)
        c0, _, sc = level_const(pts, 1.0)
        c1, wit, _ = level_const(pts, 0.5)
    else:
        plan = grid if grid is not None else ProbePlan.default(n)
        lv0, lv1 = plan.levels[0], plan.levels[-1]
        c0, _, sc = level_const(shell_points(n, lv0.kmax, lv0.directions), 1.0)
        c1, wit, _ = level_const(shell_points(n, lv1.kmax, lv1.directions), 0.5)
    # differences at rounding level count as zero
    tiny = 1e-8 * max(sc, 1.0)
    if c0 <= tiny and c1 <= tiny:
        return ConditionReport(f"decay{alpha}", True, c1, wit, 1.0, {"exponent": s - loss, "trivial": True})
    ok, r = _stable(c1, c0)
    return ConditionReport(f"decay{alpha}", ok, c1, wit, r, {"exponent": s - loss, "coarse": c0})
