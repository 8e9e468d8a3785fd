"""Symbols, their quantization and numerical checks of operator estimates.

The quantization of a symbol ``a(x, xi)`` is the Riemann sum

    a(x_j, D) f = (2 pi)^-n  sum_k  exp(i x_j . xi_k) a(x_j, xi_k) fhat(xi_k) dxi^n

over the frequency grid.  Fourier multipliers and finite separable sums
``sum_k v_k(x) m_k(xi)`` take an FFT fast path; everything else is summed
directly in row chunks.

Estimate checks compare both sides of an inequality on the same grid.  The
constants ``C_q`` are evaluated as discrete sums with frequency differences
taken modulo the grid, which is exactly how products and operators act on
periodic samples; the discrete inequalities therefore hold up to rounding.

Examples
--------
>>> from flmicro.grid import GridSpec, Field
>>> g = GridSpec(1, 16.0, 256)
>>> u = Field.from_function(g, lambda x: np.exp(-x[..., 0] ** 2 / 2))
>>> du = quantize(Symbol.multiplier(lambda xi: 1j * xi[..., 0]), u)
>>> bool(np.allclose(du.values, -g.x_axis() * u.values, atol=1e-9))
True
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import (
    AliasRisk,
    BadParam,
    DivergentConstant,
    EmptyProbeSet,
    GridMismatch,
    MissingZeroConstantTerm,
    NotElliptic,
    SeriesDiverges,
    UnboundedSymbol,
)
from .grid import (
    Field,
    GridSpec,
    Spectrum,
    conjugate,
    dft,
    fl_norm,
    idft,
    partial_dft_x,
    plateau_field,
    smooth_step,
)
from .weights import ProbePlan, Weight, combine, estimate_Cq, make_weight

SLACK = 1.01
_CHUNK = 256


# --------------------------------------------------------------------------
# Symbols
# --------------------------------------------------------------------------


def _eval_x(v, xs: np.ndarray, grid: GridSpec | None, rows) -> np.ndarray:
    if v is None:
        return np.ones(len(xs))
    if isinstance(v, Field):
        if grid is None or v.grid != grid:
            raise GridMismatch("sampled coefficient used off its grid")
        return v.values.reshape(-1)[rows]
    return np.asarray(v(xs), dtype=complex) * np.ones(len(xs))


def _eval_xi(m, xis: np.ndarray) -> np.ndarray:
    if m is None:
        return np.ones(len(xis))
    return np.asarray(m(xis), dtype=complex) * np.ones(len(xis))


@dataclass
class Symbol:
    """A symbol ``a(x, xi)`` with class metadata.

    Use the constructors :meth:`multiplier`, :meth:`function_of_x`,
    :meth:`separable`, :meth:`closed_form` and :meth:`sampled`.

    Attributes
    ----------
    kind : str
        ``separable``, ``closed_form`` or ``sampled``.  Multipliers and
        ``x``-only symbols are single-term separable symbols.
    terms : list of (v, m)
        For separable symbols: ``v`` is a callable on ``x``, a Field or
        ``None`` (meaning 1); ``m`` is a callable on ``xi`` or ``None``.
    func : callable
        For closed-form symbols, ``func(x, xi)`` with broadcasting.
    table, grid
        For sampled symbols: values on the product grid, shape
        ``(points^n, points^n)`` (space index first).
    order, rho, reference_weight
        Class data ``r``, ``rho`` and ``lambda``.
    """

    kind: str
    terms: list = field(default_factory=list)
    func: Callable | None = None
    table: np.ndarray | None = None
    grid: GridSpec | None = None
    order: float = 0.0
    rho: float = 1.0
    reference_weight: Weight | None = None
    label: str = ""

    # constructors -----------------------------------------------------
    @classmethod
    def multiplier(cls, m: Callable[[np.ndarray], np.ndarray], **meta) -> "Symbol":
        return cls("separable", terms=[(None, m)], label=meta.pop("label", "multiplier"), **meta)

    @classmethod
    def function_of_x(cls, v, **meta) -> "Symbol":
        return cls("separable", terms=[(v, None)], label=meta.pop("label", "function_of_x"), **meta)

    @classmethod
    def separable(cls, terms: Sequence[tuple], **meta) -> "Symbol":
        return cls("separable", terms=list(terms), label=meta.pop("label", "separable"), **meta)

    @classmethod
    def closed_form(cls, func: Callable[[np.ndarray, np.ndarray], np.ndarray], **meta) -> "Symbol":
        return cls("closed_form", func=func, label=meta.pop("label", "closed_form"), **meta)

    @classmethod
    def sampled(cls, grid: GridSpec, table: np.ndarray, **meta) -> "Symbol":
        P = grid.points ** grid.n
        table = np.asarray(table, dtype=complex)
        if table.shape != (P, P):
            raise GridMismatch(f"sampled symbol must have shape {(P, P)}")
        return cls("sampled", table=table, grid=grid, label=meta.pop("label", "sampled"), **meta)

    # evaluation -------------------------------------------------------
    @property
    def is_multiplier(self) -> bool:
        return self.kind == "separable" and all(v is None for v, _ in self.terms)

    def __call__(self, x, xi) -> np.ndarray:
        """Pointwise evaluation with broadcasting over leading axes."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.kind == "closed_form":
            return np.asarray(self.func(x, xi), dtype=complex)
        if self.kind == "separable":
            out = 0.0
            for v, m in self.terms:
                if isinstance(v, Field):
                    raise GridMismatch("sampled coefficient: use grid_table")
                vx = 1.0 if v is None else np.asarray(v(x))
                mx = 1.0 if m is None else np.asarray(m(xi))
                out = out + vx * mx
            shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
            return np.asarray(out, dtype=complex) * np.ones(shape)
        raise GridMismatch("sampled symbols can only be evaluated on their grid")

    def grid_table(self, grid: GridSpec, rows=slice(None), cols=slice(None)) -> np.ndarray:
        """Values on (space rows) x (frequency columns) of ``grid``."""
        if self.kind == "sampled":
            if grid != self.grid:
                raise GridMismatch("sampled symbol used on a different grid")
            return self.table[rows, cols]
        xs = grid.x_mesh().reshape(-1, grid.n)[rows]
        xis = grid.xi_mesh().reshape(-1, grid.n)[cols]
        if self.kind == "separable":
            out = np.zeros((len(xs), len(xis)), dtype=complex)
            for v, m in self.terms:
                out += np.outer(_eval_x(v, xs, grid, rows), _eval_xi(m, xis))
            return out
        return np.asarray(self.func(xs[:, None, :], xis[None, :, :]), dtype=complex) * np.ones((len(xs), len(xis)))

    # descriptors -----------------------------------------------------
    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "Symbol":
        """Build a closed-form symbol from a JSON expression tree.

        Nodes are ``{"const": c}`` (``c`` real or ``[re, im]``),
        ``{"var": "x1" | "xi2" | ...}``, ``{"op": "+" | "*", "args": [...]}``,
        ``{"op": "pow", "base": node, "exp": number}``,
        ``{"op": "expi", "coeffs": {"x1": a, ...}}`` for
        ``exp(i sum a_v v)``, and ``{"weight": descriptor}`` for a weight
        evaluated at ``xi``.  Optional top-level keys: ``order``, ``rho``.
        """
        expr = desc.get("expr", desc)
        fn = _compile(expr)
        return cls.closed_form(fn, order=float(desc.get("order", 0.0)), rho=float(desc.get("rho", 1.0)),
                               label=desc.get("label", "descriptor"))


def _compile(node: Mapping[str, Any]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if "const" in node:
        c = node["const"]
        c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
        return lambda x, xi: c
    if "var" in node:
        name = node["var"]
        if name.startswith("xi"):
            j = int(name[2:]) - 1
            return lambda x, xi: xi[..., j]
        if name.startswith("x"):
            j = int(name[1:]) - 1
            return lambda x, xi: x[..., j]
        raise BadParam(f"unknown variable {name!r}")
    if "weight" in node:
        w = make_weight(node["weight"])
        return lambda x, xi: w(xi)
    op = node.get("op")
    if op in ("+", "*"):
        parts = [_compile(a) for a in node["args"]]
        if op == "+":
            return lambda x, xi: sum(p(x, xi) for p in parts)

        def prod(x, xi):
            out = 1.0
            for p in parts:
                out = out * p(x, xi)
            return out

        return prod
    if op == "pow":
        b = _compile(node["base"])
        e = node["exp"]
        return lambda x, xi: b(x, xi) ** e
    if op == "expi":
        coeffs = [(_compile({"var": k}), float(v)) for k, v in node["coeffs"].items()]
        return lambda x, xi: np.exp(1j * sum(v * f(x, xi) for f, v in coeffs))
    raise BadParam(f"unknown expression node {node!r}")


# --------------------------------------------------------------------------
# Quantization
# --------------------------------------------------------------------------


def quantize(a: Symbol, f: Field) -> Field:
    """Apply ``a(x, D)`` to a sampled field.

    Raises
    ------
    GridMismatch
        Field and sampled symbol on different grids.
    UnboundedSymbol
        Non-finite symbol value on the grid.
    """
    if not isinstance(f, Field) or f.side != "space":
        raise GridMismatch("quantize expects a space-side Field")
    g = f.grid
    s = dft(f)
    if a.kind == "separable":
        xis = g.xi_mesh().reshape(-1, g.n)
        xs = g.x_mesh().reshape(-1, g.n)
        out = np.zeros(g.shape, dtype=complex)
        for v, m in a.terms:
            mv = _eval_xi(m, xis)
            vv = _eval_x(v, xs, g, slice(None))
            if not (np.all(np.isfinite(mv)) and np.all(np.isfinite(vv))):
                raise UnboundedSymbol("symbol takes non-finite values on the grid")
            out += vv.reshape(g.shape) * idft(Spectrum(g, mv.reshape(g.shape) * s.values)).values
        return Field(g, out)
    if a.kind == "sampled" and a.grid != g:
        raise GridMismatch("sampled symbol and field on different grids")
    P = g.points ** g.n
    xs = g.x_mesh().reshape(-1, g.n)
    xis = np.ascontiguousarray(g.xi_mesh().reshape(-1, g.n))
    fhat = s.values.reshape(-1)
    out = np.empty(P, dtype=complex)
    scale = (2 * np.pi) ** (-g.n) * g.cell_xi
    for start in range(0, P, _CHUNK):
        rows = slice(start, min(start + _CHUNK, P))
        tab = a.grid_table(g, rows)
        if not np.all(np.isfinite(tab)):
            raise UnboundedSymbol("symbol takes non-finite values on the grid")
        out[rows] = _kernels.direct_quantize(np.ascontiguousarray(xs[rows]), xis, np.ascontiguousarray(tab), fhat)
    return Field(g, scale * out.reshape(g.shape))


# --------------------------------------------------------------------------
# Symbol seminorms and ellipticity
# --------------------------------------------------------------------------


def _lp_axes(vals: np.ndarray, p: float, cell: float, naxes: int) -> np.ndarray:
    a = np.abs(vals)
    axes = tuple(range(naxes))
    if math.isinf(p):
        return a.max(axis=axes)
    return (np.sum(a ** p, axis=axes) * cell) ** (1.0 / p)


def symbol_fl_seminorm(a: Symbol, phi: Field, w: Weight | None, gamma: Weight | None, p: float,
                       return_profile: bool = False, mask: np.ndarray | None = None):
    """``sup_xi || phi a(., xi) ||_{FL^p_w} / gamma(xi)`` over grid frequencies.

    Returns the supremum, or ``(sup, profile)`` with the per-frequency
    values shaped like the grid when ``return_profile`` is set.  A boolean
    ``mask`` on the frequency grid restricts the ``FL^p_w`` norm (not the
    supremum) to the masked frequencies.
    """
    g = phi.grid
    if a.kind == "sampled" and a.grid != g:
        raise GridMismatch("symbol and cutoff on different grids")
    xis = g.xi_mesh().reshape(-1, g.n)
    P = len(xis)
    wv = np.ones(g.shape) if w is None else w(g.xi_mesh())
    if mask is not None:
        wv = wv * np.asarray(mask, dtype=float).reshape(g.shape)
    gv = np.ones(P) if gamma is None else gamma(xis)
    prof = np.empty(P)
    if a.kind == "separable":
        xs = g.x_mesh().reshape(-1, g.n)
        # transforms of phi v_k once; combine per frequency
        V = np.stack([dft(Field(g, phi.values * _eval_x(v, xs, g, slice(None)).reshape(g.shape))).values
                      for v, _ in a.terms], axis=-1)
        Mk = np.stack([_eval_xi(m, xis) for _, m in a.terms], axis=-1)
        WV = wv[..., None] * V
        if p == 2:
            flat = WV.reshape(-1, WV.shape[-1])
            G = (flat.conj().T @ flat) * g.cell_xi
            q = np.einsum("pk,kl,pl->p", Mk.conj(), G, Mk).real
            prof = np.sqrt(np.maximum(q, 0.0))
        else:
            flat = WV.reshape(-1, WV.shape[-1])
            for start in range(0, P, _CHUNK):
                sl = slice(start, min(start + _CHUNK, P))
                comb = flat @ Mk[sl].T
                prof[sl] = _lp_axes(comb, p, g.cell_xi, 1)
    else:
        ph = phi.values.reshape(-1)
        for start in range(0, P, _CHUNK):
            sl = slice(start, min(start + _CHUNK, P))
            tab = a.grid_table(g, slice(None), sl) * ph[:, None]
            T = partial_dft_x(tab.reshape(g.shape + (-1,)), g)
            prof[sl] = _lp_axes(wv[..., None] * T, p, g.cell_xi, g.n)
    prof = prof / gv
    sup = float(prof.max())
    return (sup, prof.reshape(g.shape)) if return_profile else sup


@dataclass
class EllipticReport:
    """Empirical ellipticity constant on a compact box beyond a radius."""

    c_K: float
    c_K_coarse: float
    passed: bool
    witness: list
    ratio: float
    threshold: float

    def to_dict(self) -> dict:
        return {"c_K": self.c_K, "c_K_coarse": self.c_K_coarse, "passed": self.passed,
                "witness": self.witness, "ratio": self.ratio, "threshold": self.threshold}


def _box_points(K: Sequence[Sequence[float]], per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in K]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(K))


def check_elliptic(a: Symbol, lam: Weight, r: float, K: Sequence[Sequence[float]], R: float,
                   xi_grid: GridSpec | None = None, threshold: float = 1e-6) -> EllipticReport:
    """``c_K = min |a(x, xi)| / lam(xi)^r`` over ``x in K`` and ``|xi| >= R``.

    The minimum is taken on ``9^n`` box points against the frequencies of
    ``xi_grid`` (default: unit frequency spacing, 64 points per axis), then
    again on ``17^n`` box points against the refined grid.  The check passes
    when the refined constant exceeds ``threshold`` and is within 10% of
    the coarse one.

    Raises
    ------
    EmptyProbeSet
        No grid frequency satisfies ``|xi| >= R``.
    """
    n = len(K)
    g = xi_grid or GridSpec(n, np.pi, 64)
    consts = []
    for per_axis, gg in ((9, g), (17, g.refine())):
        xs = _box_points(K, per_axis)
        xis = gg.xi_mesh().reshape(-1, n)
        xis = xis[np.linalg.norm(xis, axis=-1) >= R]
        if len(xis) == 0:
            raise EmptyProbeSet(f"no grid frequency with |xi| >= {R}")
        lv = lam(xis) ** r
        best, wit = math.inf, []
        for start in range(0, len(xs), 64):
            xc = xs[start:start + 64]
            vals = np.abs(a(xc[:, None, :], xis[None, :, :])) / lv[None, :]
            i = np.unravel_index(int(np.argmin(vals)), vals.shape)
            if vals[i] < best:
                best = float(vals[i])
                wit = [xc[i[0]].tolist(), xis[i[1]].tolist()]
        consts.append((best, wit))
    (c0, _), (c1, wit) = consts
    ratio = c0 / c1 if c1 > 0 else math.inf
    passed = bool(c1 > threshold and ratio <= 1.1)
    return EllipticReport(c1, c0, passed, wit, ratio, threshold)


def check_symbol_class(a: Symbol, r: float, rho: float, lam: Weight, xs: np.ndarray,
                       plan: ProbePlan | None = None, h_x: float = 1e-3, rel_h: float = 1e-3) -> dict:
    """Finite-difference test of ``|d_xi^alpha d_x^beta a| <= C lam^(r - rho |alpha|)``.

    Orders ``|alpha|, |beta| <= 1`` plus pure second ``xi`` derivatives are
    probed at the points ``xs`` against the shell frequencies of ``plan``.
    Returns ``{(alpha, beta): (C_coarse, C_fine, stable)}``.
    """
    n = xs.shape[-1]
    plan = plan or ProbePlan.quick(n)
    from .weights import shell_points

    out = {}
    E = np.eye(n)
    levels = [shell_points(n, lv.kmax, lv.directions) for lv in (plan.levels[0], plan.levels[-1])]
    for j in range(n):
        for order in (0, 1, 2):
            for bx in (0, 1):
                if order == 0 and bx == 0:
                    continue
                cs = []
                for xis in levels:
                    lv = lam(xis)
                    h = rel_h * lv ** rho
                    X = xs[:, None, :]
                    Xi = xis[None, :, :]

                    def f(dx, dxi):
                        return a(X + dx * E[j], Xi + dxi[None, :, None] * E[j])

                    def dxi_op(dx):
                        if order == 0:
                            return f(dx, 0 * h)
                        if order == 1:
                            return (f(dx, h) - f(dx, -h)) / (2 * h)
                        return (f(dx, h) - 2 * f(dx, 0 * h) + f(dx, -h)) / h ** 2

                    D = dxi_op(0.0) if bx == 0 else (dxi_op(h_x) - dxi_op(-h_x)) / (2 * h_x)
                    bound = lv ** (r - rho * order)
                    cs.append(float(np.max(np.abs(D) / bound[None, :])))
                ok = bool(np.isfinite(cs[1]) and (cs[1] <= 1.1 * cs[0] or cs[1] < 1e-9))
                alpha = tuple(order if k == j else 0 for k in range(n))
                beta = tuple(bx if k == j else 0 for k in range(n))
                out[(alpha, beta)] = (cs[0], cs[1], ok)
    return out


# --------------------------------------------------------------------------
# Estimate checks
# --------------------------------------------------------------------------


@dataclass
class EstimateReport:
    """Both sides of a norm inequality evaluated on one grid."""

    lhs: float
    rhs_bound: float
    constant_used: float
    ratio: float
    passed: bool
    slack: float = SLACK
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x):
            return x if isinstance(x, (int, str, bool, list, dict)) or x is None or math.isfinite(x) else str(x)

        return {"lhs": num(self.lhs), "rhs_bound": num(self.rhs_bound), "constant_used": num(self.constant_used),
                "ratio": num(self.ratio), "passed": self.passed, "slack": self.slack,
                "details": {k: num(v) if isinstance(v, float) else v for k, v in self.details.items()}}


def _report(lhs: float, rhs: float, C: float, details: dict | None = None) -> EstimateReport:
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return EstimateReport(float(lhs), float(rhs), float(C), float(ratio), bool(ratio <= SLACK), SLACK, details or {})


def _wrapped_xi(grid: GridSpec, rows: slice) -> np.ndarray:
    """Frequencies ``xi_i - eta_j`` reduced modulo the grid, shape ``(rows, P, n)``."""
    N, n = grid.points, grid.n
    k = np.indices(grid.shape).reshape(n, -1).T
    d = (k[rows][:, None, :] - k[None, :, :] + N // 2) % N
    return (d - N // 2) * grid.dxi


def grid_Cq(num: Weight | None, den_diff: Weight | None, den_eta: Weight | None, q: float, grid: GridSpec,
            num_eta: Weight | None = None) -> float:
    """Discrete ``sup_xi || num(xi) num_eta(.) / (den_diff(xi - .) den_eta(.)) ||_{l^q}``.

    Sums run over the frequency grid with ``xi - eta`` reduced modulo the
    grid and cell volume ``dxi^n``.
    """
    xis = grid.xi_mesh().reshape(-1, grid.n)
    P = len(xis)
    one = np.ones(P)
    nv = one if num is None else num(xis)
    ne = one if num_eta is None else num_eta(xis)
    de = one if den_eta is None else den_eta(xis)
    best = 0.0
    for start in range(0, P, _CHUNK):
        sl = slice(start, min(start + _CHUNK, P))
        dd = np.ones((sl.stop - sl.start, P)) if den_diff is None else den_diff(_wrapped_xi(grid, sl))
        vals = nv[sl, None] * ne[None, :] / (dd * de[None, :])
        if math.isinf(q):
            row = vals.max(axis=1)
        else:
            row = (np.sum(vals ** q, axis=1) * grid.cell_xi) ** (1.0 / q)
        best = max(best, float(row.max()))
    return best


def _central_mass_ok(f: Field, tol: float = 1e-10) -> bool:
    s = np.abs(dft(f).values) ** 2
    xi = np.abs(f.grid.xi_mesh())
    outer = np.any(xi > 0.5 * f.grid.xi_max, axis=-1)
    tot = s.sum()
    return bool(tot == 0 or s[outer].sum() <= tol * tot)


def verify_continuity(a: Symbol, omega: Weight, omega1: Weight, omega2: Weight, gamma: Weight | None, p: float,
                      u: Field, phi: Field, plan: ProbePlan | None = None, check_constant: bool = True
                      ) -> EstimateReport:
    """Check ``||phi a(x,D) u||_{FL^p_w2} <= (2pi)^-n C_q ||phi a||_{FL^p_w S_gamma} ||u||_{FL^p_w1}``.

    ``C_q`` is the constant ``sup_xi || w2(xi) gamma / (w1 w(xi - .)) ||_q``
    evaluated on the grid.  With ``check_constant`` the continuum version is
    also estimated and must be finite.

    Raises
    ------
    DivergentConstant
        The continuum constant is infinite.
    """
    g = u.grid
    q = conjugate(p)
    C_cont = None
    if check_constant:
        den2 = omega1 if gamma is None else combine(omega1, combine(gamma, None, "inverse"), "product")
        C_cont = estimate_Cq(omega2, omega, den2, q, plan or ProbePlan.quick(g.n))
        if not math.isfinite(C_cont):
            raise DivergentConstant("continuity constant C_q diverges")
    C = grid_Cq(omega2, omega, omega1, q, g, num_eta=gamma)
    lhs = fl_norm(phi * quantize(a, u), omega2, p)
    semi = symbol_fl_seminorm(a, phi, omega, gamma, p)
    nu = fl_norm(u, omega1, p)
    rhs = (2 * np.pi) ** (-g.n) * C * semi * nu
    return _report(lhs, rhs, C, {"seminorm": semi, "u_norm": nu, "C_q_continuum": C_cont})


def product_estimate(f1: Field, f2: Field, omega: Weight, omega1: Weight, omega2: Weight, p: float,
                     plan: ProbePlan | None = None, check_constant: bool = True) -> EstimateReport:
    """Check ``||f1 f2||_{FL^p_w} <= C_q ||f1||_{FL^p_w1} ||f2||_{FL^p_w2}``.

    Raises
    ------
    AliasRisk
        A factor has spectral mass outside the central half of the band.
    DivergentConstant
        The continuum constant is infinite.
    """
    if f1.grid != f2.grid:
        raise GridMismatch("factors on different grids")
    g = f1.grid
    if not (_central_mass_ok(f1) and _central_mass_ok(f2)):
        raise AliasRisk("factor spectra reach the outer half of the band")
    q = conjugate(p)
    C_cont = None
    if check_constant:
        C_cont = estimate_Cq(omega, omega1, omega2, q, plan or ProbePlan.quick(g.n))
        if not math.isfinite(C_cont):
            raise DivergentConstant("product constant C_q diverges")
    C = grid_Cq(omega, omega1, omega2, q, g)
    lhs = fl_norm(f1 * f2, omega, p)
    n1, n2 = fl_norm(f1, omega1, p), fl_norm(f2, omega2, p)
    return _report(lhs, C * n1 * n2, C, {"f1_norm": n1, "f2_norm": n2, "C_q_continuum": C_cont,
                                          "sharp_ratio": lhs / ((2 * np.pi) ** (-g.n) * C * n1 * n2)
                                          if n1 * n2 > 0 else 0.0})


def necessity_probe(omega: Weight, omega1: Weight, omega2: Weight, grid: GridSpec, p: float = 1.0,
                    pairs: int = 20, seed: int = 0, width: float = 3.0) -> dict:
    """Product ratios for modulated bumps ``exp(i eta x) phi`` and ``exp(i theta x) phi``.

    For each random pair the measured ratio
    ``||fg||_w / (||f||_w1 ||g||_w2)`` is divided by
    ``w(eta + theta) / (w1(eta) w2(theta))``; a bounded spread of these
    quotients reproduces the pointwise scaling.
    """
    rng = np.random.default_rng(seed)
    x = grid.x_mesh()
    phi = np.exp(-np.sum(x * x, axis=-1) / (2 * width ** 2))
    lim = grid.xi_max / 4
    rows = []
    for _ in range(pairs):
        eta = np.round(rng.uniform(-lim, lim, grid.n) / grid.dxi) * grid.dxi
        theta = np.round(rng.uniform(-lim, lim, grid.n) / grid.dxi) * grid.dxi
        f = Field(grid, np.exp(1j * (x @ eta)) * phi)
        gg = Field(grid, np.exp(1j * (x @ theta)) * phi)
        meas = fl_norm(f * gg, omega, p) / (fl_norm(f, omega1, p) * fl_norm(gg, omega2, p))
        pred = float(omega(eta + theta) / (omega1(eta) * omega2(theta)))
        rows.append({"eta": eta.tolist(), "theta": theta.tolist(), "measured": meas, "predicted": pred,
                     "quotient": meas / pred})
    qs = np.array([r["quotient"] for r in rows])
    return {"pairs": rows, "K": float(np.median(qs)), "spread": float(qs.max() / qs.min()),
            "C_fit": float(1.0 / qs.min())}


# --------------------------------------------------------------------------
# Entire functions of a field
# --------------------------------------------------------------------------


@dataclass
class EntireSeries:
    """``F(x, z) = sum_{k >= 1} c_k(x) z^k`` with majorants ``lambda_k``.

    ``coeff(k)`` returns a scalar or a Field; ``majorant(k)`` must bound
    ``|c_k|`` (scalars) or ``||c_k||_{FL^p_w}`` (fields).  ``c0`` is the
    constant term, which must vanish.
    """

    coeff: Callable[[int], Any]
    majorant: Callable[[int], float] | None = None
    degree: int | None = None
    c0: Any = 0.0
    name: str = "series"

    @classmethod
    def polynomial(cls, coefficients: Sequence[Any], majorants: Sequence[float] | None = None) -> "EntireSeries":
        """Coefficients ``[c0, c1, ..., cK]``; ``c0`` must be zero."""
        cs = list(coefficients)
        maj = None
        if majorants is not None:
            ms = list(majorants)
            maj = lambda k: ms[k] if k < len(ms) else 0.0  # noqa: E731
        return cls(lambda k: cs[k] if k < len(cs) else 0.0, maj, len(cs) - 1, cs[0] if cs else 0.0, "polynomial")

    @classmethod
    def exp_minus_one(cls, scale: float = 1.0) -> "EntireSeries":
        """``exp(scale z) - 1``."""
        def maj(k: int) -> float:
            if scale == 0:
                return 0.0
            return math.exp(k * math.log(abs(scale)) - math.lgamma(k + 1))

        return cls(lambda k: math.copysign(1.0, scale) ** k * maj(k), maj, None, 0.0, "exp_minus_one")

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "EntireSeries":
        kind = desc.get("kind", "polynomial")
        if kind == "polynomial":
            return cls.polynomial(desc["coefficients"], desc.get("majorants"))
        if kind == "exp_minus_one":
            return cls.exp_minus_one(desc.get("scale", 1.0))
        raise BadParam(f"unknown series kind {kind!r}")


def compose_entire(u: Field, F: EntireSeries, w: Weight | None, p: float, tol: float = 1e-12,
                   kmax: int = 400, extra_terms: int = 0) -> tuple[Field, EstimateReport]:
    """Evaluate ``F(x, u)`` by repeated grid products with a certified tail.

    The algebra constant is ``C = (2pi)^-n C_q`` with ``C_q`` evaluated on
    the grid, so ``||c_k u^k|| <= t_k = lambda_k C^(k-1) A^k`` (one extra
    factor ``C`` for field coefficients) with ``A = ||u||_{FL^p_w}``.
    Terms are added until the tail bound ``sum_{j>k} t_j`` falls below
    ``tol`` times the norm of the partial sum.

    Raises
    ------
    MissingZeroConstantTerm
        ``c0`` is not zero.
    SeriesDiverges
        The majorant series does not converge numerically within ``kmax`` terms.
    """
    c0 = F.c0
    if (isinstance(c0, Field) and np.any(c0.values != 0)) or (not isinstance(c0, Field) and c0 != 0):
        raise MissingZeroConstantTerm("F(x, 0) must vanish")
    g = u.grid
    q = conjugate(p)
    C = (2 * np.pi) ** (-g.n) * grid_Cq(w, w, w, q, g)
    A = fl_norm(u, w, p)

    def lam(k: int) -> float:
        c = F.coeff(k)
        if F.majorant is not None:
            return float(F.majorant(k))
        if isinstance(c, Field):
            raise BadParam("field coefficients require explicit majorants")
        return abs(complex(c))

    def t(k: int) -> float:
        c = F.coeff(k)
        extra = C if isinstance(c, Field) else 1.0
        with np.errstate(over="ignore"):
            return lam(k) * extra * C ** (k - 1) * A ** k

    def tail(k: int) -> float:
        if F.degree is not None:
            return float(sum(t(j) for j in range(k + 1, F.degree + 1)))
        vals = [t(j) for j in range(k + 1, k + 201)]
        if not all(math.isfinite(v) for v in vals) or (vals[-1] > 0 and vals[-1] >= vals[-2]):
            raise SeriesDiverges("majorant series does not converge")
        return float(sum(vals))

    total = Field.zeros(g)
    power = Field(g, np.ones(g.shape))
    bound = 0.0
    k = 0
    stop_at = None
    while True:
        k += 1
        if k > kmax:
            raise SeriesDiverges(f"no convergence within {kmax} terms")
        power = power * u
        c = F.coeff(k)
        total = total + (c * power if not isinstance(c, Field) else c * power)
        bound += t(k)
        if not np.all(np.isfinite(total.values)):
            raise SeriesDiverges("partial sums overflow")
        if stop_at is not None:
            if k >= stop_at:
                break
            continue
        if F.degree is not None and k >= F.degree:
            stop_at = k + extra_terms
        else:
            tl = tail(k)
            if tl <= tol * max(fl_norm(total, w, p), 1e-300):
                stop_at = k + extra_terms
        if stop_at is not None and k >= stop_at:
            break
    tl = tail(k) if F.degree is None else 0.0
    lhs = fl_norm(total, w, p)
    rhs = bound + tl
    rep = _report(lhs, rhs, C, {"terms": k, "u_norm": A, "tail_bound": tl,
                                "realized_constant": lhs / A if A > 0 else 0.0,
                                "bound_constant": rhs / A if A > 0 else 0.0})
    return total, rep


# --------------------------------------------------------------------------
# Approximate parametrix
# --------------------------------------------------------------------------


def frequency_cutoff(R: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth ``chi``: 0 for ``|xi| <= R``, 1 for ``|xi| >= 2R``."""
    return lambda xi: smooth_step((np.linalg.norm(xi, axis=-1) - R) / R)


def approx_parametrix(a: Symbol, lam: Weight, r: float, K: Sequence[Sequence[float]], R: float,
                      margin: float = 0.0, xi_grid: GridSpec | None = None, threshold: float = 1e-6) -> Symbol:
    """Reciprocal-symbol parametrix ``b = psi(x) chi(xi) / a(x, xi)``.

    ``chi`` vanishes for ``|xi| <= R`` and equals 1 for ``|xi| >= 2R``.
    For symbols depending on ``x``, ``psi`` is a smooth cutoff equal to 1 on
    the box ``K`` and vanishing ``margin`` beyond it; ellipticity is checked
    on the enlarged box.  Multipliers need no ``x`` cutoff.

    Raises
    ------
    NotElliptic
        :func:`check_elliptic` fails on the (enlarged) box.
    """
    K = [(float(lo), float(hi)) for lo, hi in K]
    Kx = [(lo - margin, hi + margin) for lo, hi in K]
    rep = check_elliptic(a, lam, r, Kx, R, xi_grid, threshold)
    if not rep.passed:
        raise NotElliptic(f"symbol not elliptic on {Kx} beyond {R}: c_K={rep.c_K:.3g}")
    chi = frequency_cutoff(R)
    if a.is_multiplier:
        m = a.terms

        def inv(xi):
            av = sum(_eval_xi(mm, xi.reshape(-1, xi.shape[-1])) for _, mm in m).reshape(xi.shape[:-1])
            c = chi(xi)
            return np.where(c > 0, c / np.where(c > 0, av, 1.0), 0.0)

        return Symbol.multiplier(inv, order=-r, rho=a.rho, reference_weight=lam, label="parametrix")
    lo = np.array([k[0] for k in K])
    hi = np.array([k[1] for k in K])

    def psi(x):
        d = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        if margin <= 0:
            return np.all(d == 0, axis=-1).astype(float)
        return np.prod(1.0 - smooth_step(d / margin), axis=-1)

    def b(x, xi):
        c = chi(xi) * psi(x)
        av = a(x, xi)
        return np.where(c > 0, c / np.where(c > 0, av, 1.0), 0.0)

    return Symbol.closed_form(b, order=-r, rho=a.rho, reference_weight=lam, label="parametrix")


def composition_error(a: Symbol, b: Symbol, u: Field) -> float:
    """Relative ``L^2`` error ``||b(x,D) a(x,D) u - u|| / ||u||``."""
    v = quantize(b, quantize(a, u))
    return (v - u).norm2() / u.norm2()


def example_symbol() -> Symbol:
    """``P(x, xi) = i x1 xi1 - xi1 + xi2^2`` with ``lambda = <xi>_M``, ``M = (1, 2)``."""
    from .weights import quasi_homogeneous

    lam = quasi_homogeneous((1, 2), 1.0)
    terms = [(lambda x: 1j * x[..., 0], lambda xi: xi[..., 0]),
             (None, lambda xi: xi[..., 1] ** 2 - xi[..., 0])]
    return Symbol.separable(terms, order=1.0, rho=0.5, reference_weight=lam, label="example_P")


def plateau(grid: GridSpec, center: Sequence[float], inner: float, outer: float) -> Field:
    """Re-export of the smooth plateau cutoff for convenience."""
    return plateau_field(grid, center, inner, outer)


# --------------------------------------------------------------------------
# Sampled symbol IO
# --------------------------------------------------------------------------

_SYM_MAGIC = b"FLSY"


def save_symbol(path, a: Symbol) -> None:
    """Write a sampled symbol: ``FLSY``, ``<IId`` (n, points, extent), ``<dd``
    (order, rho), then the product-grid table as ``<c16``."""
    import struct

    if a.kind != "sampled":
        raise BadParam("only sampled symbols have a binary form")
    g = a.grid
    with open(path, "wb") as fh:
        fh.write(_SYM_MAGIC + struct.pack("<IId", g.n, g.points, g.extent) + struct.pack("<dd", a.order, a.rho))
        fh.write(np.ascontiguousarray(a.table, dtype="<c16").tobytes())


def load_symbol(path) -> Symbol:
    """Read a symbol written by :func:`save_symbol`."""
    import struct

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _SYM_MAGIC:
        raise BadParam("not a sampled symbol file")
    n, points, extent = struct.unpack_from("<IId", data, 4)
    order, rho = struct.unpack_from("<dd", data, 20)
    g = GridSpec(n, extent, points)
    P = points ** n
    table = np.frombuffer(data, dtype="<c16", offset=36)
    if table.size != P * P:
        raise GridMismatch("table size does not match header")
    return Symbol.sampled(g, table.reshape(P, P).copy(), order=order, rho=rho)
