"""Regularity bookkeeping and the propagation demonstration for the model operator.

The model operator is ``P(x, D)`` with symbol ``P(x, xi) = i x1 xi1 - xi1 + xi2^2``.
It is quasi-homogeneous of degree one for ``M = (1, 2)``, elliptic at
points with ``x1 != 0`` and characteristic at ``x1 = 0`` along the
parabola ``xi1 = xi2^2``.

Examples
--------
>>> bootstrap_schedule(1.0, 3.0, 1.0, 0.5)
[1.0, 1.5, 2.0, 2.5, 3.0]
>>> semilinear_gain(RegularityLedger(r=1.0, eps_gain=0.5, tau=1.6, t_tilde=3.0, s=10.0))
4.0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import _kernels
from .errors import BadK, BadParam, BadStep, CaseMismatch, ConstraintViolated, HypothesisViolated
from .grid import Field, GridSpec, Spectrum, conjugate, idft, smooth_step
from .microlocal import FrequencyMask, bracket_neighborhood, growth_verdict, mcl_fl_norm, parabola_cone
from .microlocal import worked_example_set
from .pdo import example_symbol, quantize
from .weights import bracket_M, quasi_homogeneous

__all__ = [
    "RegularityLedger",
    "bootstrap_schedule",
    "semilinear_gain",
    "example_symbol",
    "example_Xk",
    "example_thresholds",
    "run_propagation_demo",
]

M_EXAMPLE = (1, 2)
_TOL = 1e-12


def _floor(v: float) -> int:
    """Integer part, robust to rounding just below an integer."""
    return math.floor(v + 1e-12)


def _is_integer(v: float) -> bool:
    return abs(v - round(v)) < 1e-9


@dataclass
class RegularityLedger:
    """Exponents of the semilinear regularity argument.

    Attributes
    ----------
    r : float
        Order of the linear part.
    eps_gain : float
        Order deficit ``eps`` of the nonlinear term, ``0 < eps < r``.
    tau : float
        Exponent with ``1/sigma = lambda^(-tau)`` in ``L^q``.
    t_tilde : float
        Starting regularity.
    s : float
        Target regularity.
    q : float
        Conjugate Lebesgue exponent.
    schedule : list of float
        Orders reached, filled by :func:`semilinear_gain`.
    """

    r: float
    eps_gain: float
    tau: float
    t_tilde: float
    s: float
    q: float = 2.0
    schedule: list = field(default_factory=list)

    def check(self) -> None:
        """Raise :class:`ConstraintViolated` unless ``0 < eps < r`` and ``tau + r - eps <= t_tilde <= s``."""
        if not 0 < self.eps_gain < self.r:
            raise ConstraintViolated(f"need 0 < eps < r, got eps={self.eps_gain}, r={self.r}")
        lo = self.tau + self.r - self.eps_gain
        if self.t_tilde < lo - _TOL:
            raise ConstraintViolated(f"need tau + r - eps = {lo} <= t_tilde = {self.t_tilde}")
        if self.t_tilde > self.s + _TOL:
            raise ConstraintViolated(f"need t_tilde = {self.t_tilde} <= s = {self.s}")


def bootstrap_schedule(t: float, s: float, r: float, eps: float) -> list[float]:
    """Orders ``t, t + eps, ..., t + N eps`` with ``N`` minimal and ``t + N eps >= s``.

    ``r`` is the order of the elliptic part; it does not affect the steps.

    Raises
    ------
    BadStep
        ``eps <= 0``.
    """
    if not eps > 0:
        raise BadStep("eps must be positive")
    if t >= s:
        return [float(t)]
    N = math.ceil((s - t) / eps - 1e-12)
    return [float(t + k * eps) for k in range(N + 1)]


def semilinear_gain(ledger: RegularityLedger) -> float:
    """``min{s, t_tilde + (E((t_tilde - r - tau)/eps) + 2) eps}`` with ``E = floor``.

    The schedule of intermediate orders is stored on ``ledger.schedule``.

    Raises
    ------
    ConstraintViolated
        The exponent constraints fail.
    """
    ledger.check()
    if ledger.t_tilde >= ledger.s:
        ledger.schedule = [float(ledger.s)]
        return float(ledger.s)
    e = ledger.eps_gain
    E = _floor((ledger.t_tilde - ledger.r - ledger.tau) / e)
    cand = ledger.t_tilde + (E + 2) * e
    t_max = float(min(ledger.s, cand))
    ledger.schedule = [float(ledger.t_tilde + k * e) for k in range(E + 2) if ledger.t_tilde + k * e < t_max]
    ledger.schedule.append(t_max)
    return t_max


def example_Xk(k: float):
    """Region ``X_k = {xi1 <= (1-k) xi2^2 or xi1 >= xi2^2/(1-k)}`` (origin excluded).

    Raises
    ------
    BadK
        ``k`` outside ``(0, 1)``.
    """
    if not 0 < k < 1:
        raise BadK(f"k must lie in (0, 1), got {k}")
    return worked_example_set(k)


def example_thresholds(t_tilde: float, s: float, q: float, case: str) -> float:
    """Regularity bound for the semilinear model problem.

    Case ``a`` (``2 t - 2 - 4/q`` not an integer):
    ``min{s, t + 1 + E(2t - 2 - 4/q)/2}``; case ``b`` (integer):
    ``min{s, t + 1/2 + E(2t - 2 - 4/q)/2}``.

    Raises
    ------
    HypothesisViolated
        ``s > t_tilde > 2/q + 1/2`` fails.
    CaseMismatch
        The integrality of ``2 t - 2 - 4/q`` disagrees with ``case``.
    """
    if case not in ("a", "b"):
        raise BadParam("case must be 'a' or 'b'")
    if not (t_tilde > 2.0 / q + 0.5 and s > t_tilde):
        raise HypothesisViolated(f"need s > t_tilde > 2/q + 1/2, got t_tilde={t_tilde}, s={s}, q={q}")
    v = 2 * t_tilde - 2 - 4.0 / q
    integral = _is_integer(v)
    if integral != (case == "b"):
        raise CaseMismatch(f"2t - 2 - 4/q = {v} is {'an integer' if integral else 'not an integer'}; case {case}")
    E = round(v) if integral else _floor(v)
    gain = 1.0 if case == "a" else 0.5
    return float(min(s, t_tilde + gain + 0.5 * E))


def threshold_case(t_tilde: float, q: float) -> str:
    """``'b'`` when ``2 t_tilde - 2 - 4/q`` is an integer, else ``'a'``."""
    return "b" if _is_integer(2 * t_tilde - 2 - 4.0 / q) else "a"


# --------------------------------------------------------------------------
# Manufactured-field demonstration
# --------------------------------------------------------------------------

DEFAULT_SCENARIO: dict[str, Any] = {
    "grid": {"n": 2, "extent": math.pi, "points": 256},
    "k": 0.5,
    "p": 2,
    "t_tilde": 2.6,
    "s": 10.0,
    "weight_order": 1.75,
    "eps": None,
    "ridge_width": 0.1,
    "probe_points": [[0.0, 0.0], [1.0, 0.0]],
    "probe_width": [0.15, 2.0],
    "source_width": 0.15,
    "separation": 10.0,
    "field": "ridge",
}


def manufactured_spectra(grid: GridSpec, ridge_width: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Smooth part ``<xi>_M^-3`` and ridge part on the grid.

    The ridge is the indicator of ``|xi1 - xi2^2| < ridge_width <xi>_M``
    averaged once along ``xi1`` with a bump of radius two cells, times ``<xi>_M^-1``.
    Both parts are tapered to zero between 70% and 85% of the band edge so
    that later windowing in space does not wrap energy around the band.
    """
    xi = grid.xi_mesh()
    lm = bracket_M(xi, M_EXAMPLE)
    ind = (np.abs(xi[..., 0] - xi[..., 1] ** 2) < ridge_width * lm).astype(float)
    # a spacing of three cells along xi2 keeps the average one-dimensional
    smooth_ind = _kernels.mollify(ind, np.full(grid.shape, 2.0 * grid.dxi), (grid.dxi, 3.0 * grid.dxi))
    band = 1.0 - smooth_step((np.abs(xi).max(axis=-1) / grid.xi_max - 0.7) / 0.15)
    return lm ** -3.0 * band, smooth_ind / lm * band


def periodic_window(grid: GridSpec, center, width) -> Field:
    """Periodic Gaussian-like window ``prod_j exp(c^2 (cos((x_j - x0_j)/c) - 1) / w_j^2)``.

    Here ``c = L / pi`` so that each factor is smooth and periodic on the
    grid and behaves like ``exp(-(x_j - x0_j)^2 / (2 w_j^2))`` near its
    centre.  ``width`` is a scalar or one value per axis.  Its spectrum
    decays fast enough to survive the growing weights, unlike that of a
    compactly supported bump.
    """
    x = grid.x_mesh()
    w = np.broadcast_to(np.asarray(width, dtype=float), (grid.n,))
    c0 = np.asarray(center, dtype=float)
    c = grid.extent / np.pi
    return Field(grid, np.exp(np.sum(c * c * (np.cos((x - c0) / c) - 1.0) / w ** 2, axis=-1)))


def manufactured_field(grid: GridSpec, ridge_width: float = 0.1, source_width: float = 0.15) -> Field:
    """``u = idft(<xi>_M^-3) + chi(x1) idft(ridge)`` with ``chi`` a window in ``x1``.

    The ridge singularity is confined near the line ``x1 = 0``, so it is
    seen at the characteristic point ``x = 0`` and absent near ``x = (1, 0)``.
    Localising in ``x1`` only spreads the ridge along ``xi1``, where the
    parabola cone is widest.
    """
    smooth, ridge = manufactured_spectra(grid, ridge_width)
    us = idft(Spectrum(grid, smooth.astype(complex)))
    ur = idft(Spectrum(grid, ridge.astype(complex)))
    chi = periodic_window(grid, [0.0] * grid.n, [source_width] + [np.inf] * (grid.n - 1))
    return us + chi * ur


def _scenario(config: Mapping[str, Any] | None) -> dict:
    cfg = dict(DEFAULT_SCENARIO)
    if config:
        cfg.update(dict(config))
    g = cfg["grid"]
    if isinstance(g, GridSpec):
        g = {"n": g.n, "extent": g.extent, "points": g.points}
    cfg["grid"] = {"n": int(g.get("n", 2)), "extent": float(g.get("extent", math.pi)), "points": int(g["points"])}
    if cfg["grid"]["n"] != 2:
        raise BadParam("the demonstration runs in two dimensions")
    if cfg["grid"]["points"] < 16:
        raise BadParam("grid too small for a refinement study")
    example_Xk(cfg["k"])
    if cfg["field"] not in ("ridge", "smooth"):
        raise BadParam("field must be 'ridge' or 'smooth'")
    return cfg


def _level(grid: GridSpec, cfg: dict) -> dict:
    lam = quasi_homogeneous(M_EXAMPLE, 1.0)
    t = float(cfg["weight_order"])
    p = float(cfg["p"])
    eps = cfg["eps"]
    w_u = quasi_homogeneous(M_EXAMPLE, t)
    w_f = quasi_homogeneous(M_EXAMPLE, t - 1.0)
    if cfg["field"] == "smooth":
        u = idft(Spectrum(grid, manufactured_spectra(grid, cfg["ridge_width"])[0].astype(complex)))
    else:
        u = manufactured_field(grid, cfg["ridge_width"], cfg["source_width"])
    f = quantize(example_symbol(), u)
    regions = {"X_k": worked_example_set(cfg["k"]), "cone": parabola_cone(cfg["k"])}
    if eps is None:
        masks = {name: FrequencyMask.from_region(r, grid) for name, r in regions.items()}
    else:
        masks = {name: bracket_neighborhood(r, lam, float(eps), grid) for name, r in regions.items()}
    out = {}
    for x0 in cfg["probe_points"]:
        phi = periodic_window(grid, x0, cfg["probe_width"])
        row = {}
        for name, m in masks.items():
            row[f"u_{name}"] = mcl_fl_norm(u, phi, None, 1.0, w_u, p, mask=m)
            row[f"f_{name}"] = mcl_fl_norm(f, phi, None, 1.0, w_f, p, mask=m)
        out[_key(x0)] = row
    return out


def _key(x0) -> str:
    return ",".join(f"{float(v):g}" for v in x0)


def run_propagation_demo(config: Mapping[str, Any] | None = None) -> dict:
    """Measure the inclusion pattern on a manufactured pair ``(u, P u)``.

    For each probe point the norms of ``phi u`` (weight ``<xi>_M^t``) and
    ``phi f`` (weight ``<xi>_M^(t-1)``) are computed over ``X_k`` and over the
    complementary parabola cone, on the configured grid and on its
    coarsening.  With ``eps`` set, the ``[eps <.>_M]``-neighborhoods of the
    two sets are used instead; their ``xi2``-reach ``(eps <xi>_M)^(1/2)`` is
    comparable to the cone width unless ``eps`` is small.  The pattern holds when

    * at the first (characteristic) probe, the cone norm of ``u`` exceeds
      its ``X_k`` norm by the configured separation, the cone norm grows
      under refinement and the ``X_k`` norms of ``u`` and ``f`` are finite;
    * at every other (elliptic) probe, the separation stays below the
      threshold, the norms of ``u`` are finite, and in each direction
      where ``f`` is finite so is ``u``.

    With ``field = "smooth"`` the ridge is omitted and every probe must
    show finite norms and no separation.

    Returns
    -------
    dict
        JSON-ready report with the resolved scenario, all norms, growth
        verdicts, threshold formulas and the overall ``passed`` flag.
    """
    cfg = _scenario(config)
    g = cfg["grid"]
    fine = GridSpec(2, g["extent"], g["points"])
    coarse = GridSpec(2, g["extent"], g["points"] // 2)
    lv = {"coarse": _level(coarse, cfg), "fine": _level(fine, cfg)}
    probes = {}
    passed = True
    sep = float(cfg["separation"])
    for i, x0 in enumerate(cfg["probe_points"]):
        key = _key(x0)
        c, f = lv["coarse"][key], lv["fine"][key]
        verdicts = {name: growth_verdict(c[name], f[name]) for name in f}
        separation = f["u_cone"] / f["u_X_k"] if f["u_X_k"] > 0 else math.inf
        control = {d: (f[f"u_{d}"] / f[f"f_{d}"] if f[f"f_{d}"] > 0 else math.inf) for d in ("X_k", "cone")}
        control_c = {d: (c[f"u_{d}"] / c[f"f_{d}"] if c[f"f_{d}"] > 0 else math.inf) for d in ("X_k", "cone")}
        if cfg["field"] == "smooth":
            checks = {
                "no_separation": separation < sep,
                "all_finite": all(v[0] == "finite" for v in verdicts.values()),
            }
            role = "smooth"
        elif i == 0:
            checks = {
                "separation": separation >= sep,
                "u_X_k_finite": verdicts["u_X_k"][0] == "finite",
                "f_X_k_finite": verdicts["f_X_k"][0] == "finite",
                "u_cone_divergent": verdicts["u_cone"][0] == "divergent",
            }
            role = "characteristic"
        else:
            checks = {
                "no_separation": separation < sep,
                "controlled": all(verdicts[f"u_{d}"][0] == "finite" or verdicts[f"f_{d}"][0] != "finite"
                                  for d in ("X_k", "cone")),
                "u_finite": all(verdicts[k][0] == "finite" for k in ("u_X_k", "u_cone")),
            }
            role = "elliptic"
        ok = all(checks.values())
        passed = passed and ok
        probes[key] = {
            "x0": [float(v) for v in x0],
            "role": role,
            "norms": {"coarse": c, "fine": f},
            "growth": {k: {"status": v[0], "growth": v[1]} for k, v in verdicts.items()},
            "separation": separation,
            "u_over_f": control,
            "u_over_f_coarse": control_c,
            "checks": checks,
            "passed": ok,
        }
    q = conjugate(float(cfg["p"]))
    thresholds = None
    try:
        case = threshold_case(cfg["t_tilde"], q)
        thresholds = {"case": case, "t_max": example_thresholds(cfg["t_tilde"], cfg["s"], q, case)}
    except (HypothesisViolated, CaseMismatch) as exc:
        thresholds = {"error": str(exc)}
    return {
        "scenario": cfg,
        "grids": {"coarse": coarse.points, "fine": fine.points},
        "probes": probes,
        "thresholds": thresholds,
        "passed": bool(passed),
    }
