"""Command-line entry point: ``flmicro <command> [options]``.

Commands read JSON descriptors, call the library and write a JSON report
(or a CSV table where the data is tabular).  Exit status is 0 when every
check passed, 1 when a check failed (the report is still written) and 2 on
configuration errors.

Examples
--------
::

    flmicro polyhedron --in tri.json
    flmicro weight-check --family homogeneous --m 2 --cond SM
    flmicro estimate --in continuity.json --out report.json
    flmicro demo --kind propagation --grid-points 256
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__, _kernels
from .errors import BadParam, FLMicroError, GridMismatch, RejectDimension, RejectNotComplete
from .grid import Field, GridSpec, Spectrum, bump_field, dft, export_csv, fl_norm, kernel_apply, load_field
from .weights import ProbePlan, lambda_P

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (BadParam, RejectNotComplete, RejectDimension, GridMismatch, KeyError, TypeError, ValueError,
                 FileNotFoundError, json.JSONDecodeError)


class ConfigError(Exception):
    """Malformed or missing configuration."""


# --------------------------------------------------------------------------
# JSON helpers
# --------------------------------------------------------------------------


def jsonable(obj: Any) -> Any:
    """Convert reports to JSON-safe values (non-finite floats become strings)."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


def dumps(report: Mapping[str, Any]) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


# --------------------------------------------------------------------------
# Descriptors
# --------------------------------------------------------------------------


def grid_from(cfg: Mapping[str, Any], args: argparse.Namespace, n: int | None = None) -> GridSpec:
    """Grid from ``cfg["grid"]`` overridden by ``--grid-points``/``--grid-extent``."""
    g = dict(cfg.get("grid", {}))
    if args.grid_points is not None:
        g["points"] = args.grid_points
    if args.grid_extent is not None:
        g["extent"] = args.grid_extent
    dim = int(g.get("n", n if n is not None else 1))
    grid = GridSpec(dim, float(g.get("extent", math.pi)), int(g.get("points", 64)))
    for _ in range(args.refine or 0):
        grid = grid.refine()
    return grid


def make_field(desc: Mapping[str, Any], grid: GridSpec) -> Field:
    """Field from ``{"kind": "gaussian" | "bump" | "modes" | "file", ...}``.

    ``gaussian``: ``center``, ``width``, optional ``modulation`` (frequency
    vector) and ``amplitude``.  ``bump``: ``center``, ``radius``.
    ``modes``: list of ``{"xi": [...], "c": re or [re, im]}`` (a
    trigonometric polynomial).  ``file``: ``path`` of a binary grid file.
    """
    kind = desc.get("kind", "gaussian")
    n = grid.n
    if kind == "file":
        f = load_field(desc["path"])
        if f.grid != grid:
            raise GridMismatch("field file grid differs from the configured grid")
        return f
    if kind == "gaussian":
        c = np.asarray(desc.get("center", [0.0] * n), dtype=float)
        w = float(desc.get("width", 0.5))
        k = np.asarray(desc.get("modulation", [0.0] * n), dtype=float)
        amp = float(desc.get("amplitude", 1.0))
        x = grid.x_mesh()
        vals = amp * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * w * w) + 1j * (x @ k))
        return Field(grid, vals)
    if kind == "bump":
        return bump_field(grid, desc.get("center", [0.0] * n), float(desc.get("radius", 1.0)))
    if kind == "modes":
        s = np.zeros(grid.shape, dtype=complex)
        for mode in desc["modes"]:
            idx = grid.index_of_xi(mode["xi"])
            cv = mode.get("c", 1.0)
            s[idx] += complex(cv[0], cv[1]) if isinstance(cv, list) else complex(cv)
        from .grid import idft

        return idft(Spectrum(grid, s / grid.cell_xi * (2 * np.pi) ** n))
    raise BadParam(f"unknown field kind {kind!r}")


def make_symbol(desc: Mapping[str, Any], grid: GridSpec | None = None):
    """Symbol from ``{"kind": "example" | "multiplier" | "identity" | "derivative" | "file" | "expr"}``."""
    from .pdo import Symbol, example_symbol, load_symbol
    from .weights import make_weight

    kind = desc.get("kind", "expr")
    if kind == "example":
        return example_symbol()
    if kind == "identity":
        return Symbol.multiplier(lambda xi: np.ones(xi.shape[:-1]), label="identity")
    if kind == "derivative":
        j = int(desc.get("axis", 1)) - 1
        return Symbol.multiplier(lambda xi: 1j * xi[..., j], order=1.0, label=f"d/dx{j + 1}")
    if kind == "multiplier":
        w = make_weight(desc["weight"])
        return Symbol.multiplier(w, order=float(desc.get("order", 0.0)), reference_weight=w, label="weight")
    if kind == "file":
        return load_symbol(desc["path"])
    if kind == "expr":
        return Symbol.from_descriptor(desc)
    raise BadParam(f"unknown symbol kind {kind!r}")


def _weight(desc, default=None):
    from .weights import make_weight

    if desc is None:
        return default
    return make_weight(desc)


def _plan(cfg: Mapping[str, Any], n: int, seed: int | None):
    base = ProbePlan.quick(n) if cfg.get("plan", "quick") == "quick" else ProbePlan.default(n)
    if seed is not None:
        from dataclasses import replace

        base = replace(base, seed=int(seed))
    return base


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_polyhedron(cfg: dict, args) -> tuple[dict, bool]:
    """Build a polyhedron, report its invariants and compare ``lambda_P`` to ``<.>_M``."""
    from .polyhedron import from_descriptor, lattice_points
    from .weights import bracket_M

    if args.vertices:
        cfg = dict(cfg, vertices=[[int(v) for v in pt.split(",")] for pt in args.vertices.split(";")])
    P = from_descriptor(cfg)
    rep = P.to_dict()
    rep["lattice_points"] = len(lattice_points(P))
    rep["interior_points"] = [list(b) for b in lattice_points(P, interior_only=True)]
    nonzero = [v for v in P.vertices if any(v)]
    M = None
    if len(nonzero) == P.n and all(sum(1 for c in v if c) == 1 for v in nonzero):
        M = [0] * P.n
        for v in nonzero:
            j = next(i for i, c in enumerate(v) if c)
            M[j] = v[j]
    if M is not None and P.n <= 3 and all(M):
        ax = np.linspace(-5.0, 5.0, 101 if P.n <= 2 else 21)
        xi = np.stack(np.meshgrid(*([ax] * P.n), indexing="ij"), -1).reshape(-1, P.n)
        err = float(np.max(np.abs(lambda_P(xi, P) - bracket_M(xi, M))))
        rep["quasi_homogeneous"] = {"M": M, "max_abs_diff": err}
    return rep, True


def cmd_weight_check(cfg: dict, args) -> tuple[dict, bool]:
    """Sampled weight conditions, growth exponents and derivative decay."""
    from .weights import check_condition, check_derivative_decay, growth_exponents, make_weight

    wdesc = dict(cfg.get("weight", {}))
    if args.family:
        wdesc["family"] = args.family
    for key in ("m", "s", "r"):
        v = getattr(args, key)
        if v is not None:
            wdesc[key] = v
    if args.M:
        wdesc["M"] = [int(v) for v in args.M.split(",")]
    if args.n is not None:
        wdesc["n"] = args.n
    if "family" not in wdesc:
        raise ConfigError("weight family required (--family or 'weight' in --in)")
    w = make_weight(wdesc)
    n = int(cfg.get("n", args.n or (len(wdesc["M"]) if "M" in wdesc else 1)))
    plan = _plan(cfg, n, args.seed)
    conds = args.cond.split(",") if args.cond else cfg.get("conditions", ["T"])
    rep: dict[str, Any] = {"weight": w.describe(), "n": n, "checks": {}}
    ok = True
    for c in conds:
        if c == "growth":
            lo, hi = growth_exponents(w, n)
            rep["checks"]["growth"] = {"lower": lo, "upper": hi}
            continue
        if c.startswith("decay"):
            alpha = [int(a) for a in cfg.get("alpha", [1] + [0] * (n - 1))]
            r = check_derivative_decay(w, float(cfg.get("decay_s", 1.0)), alpha, plan, n=n)
        else:
            r = check_condition(w, c, plan, N=cfg.get("N"), delta=cfg.get("delta"), q=float(cfg.get("q", 1.0)))
        rep["checks"][c] = r.to_dict()
        ok = ok and r.passed
    return rep, ok


def cmd_estimate(cfg: dict, args) -> tuple[dict, bool]:
    """Norm estimates: ``cq``, ``kernel``, ``continuity``, ``product``, ``necessity``,
    ``compose``, ``elliptic``, ``parametrix``, ``symbol-class``."""
    from . import pdo
    from .weights import estimate_Cq

    kind = args.kind or cfg.get("kind")
    if kind is None:
        raise ConfigError("estimate needs --kind or 'kind'")
    n = int(cfg.get("n", cfg.get("grid", {}).get("n", 1)))
    p = float(cfg.get("p", 2.0))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    W = lambda k, d=None: _weight(cfg.get(k), d)  # noqa: E731
    if kind == "cq":
        plan = _plan(cfg, n, seed)
        val, det = estimate_Cq(W("omega"), W("omega1"), W("omega2"), float(cfg.get("q", 2.0)), plan,
                               return_details=True)
        return {"C_q": val, "details": det}, math.isfinite(val)
    grid = grid_from(cfg, args, n)
    if kind == "kernel":
        rng = np.random.default_rng(seed)
        P = grid.points ** grid.n
        out = []
        for _ in range(int(cfg.get("instances", 1))):
            F = rng.normal(size=(P, P)) + 1j * rng.normal(size=(P, P))
            f = rng.normal(size=(P, P)) + 1j * rng.normal(size=(P, P))
            g = Spectrum(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
            r = kernel_apply(F, f, g, p)
            out.append({"lhs": r.lhs, "bound": r.bound, "ratio": r.ratio})
        worst = max(o["ratio"] for o in out)
        return {"instances": out, "max_ratio": worst}, worst <= 1.01
    if kind == "continuity":
        a = make_symbol(cfg["symbol"], grid)
        u = make_field(cfg.get("u", {}), grid)
        phi = make_field(cfg.get("phi", {"kind": "bump", "radius": 1.0}), grid)
        r = pdo.verify_continuity(a, W("omega"), W("omega1"), W("omega2"), W("gamma"), p, u, phi,
                                  _plan(cfg, grid.n, seed), bool(cfg.get("check_constant", True)))
        return r.to_dict(), r.passed
    if kind == "product":
        f1 = make_field(cfg.get("f1", {}), grid)
        f2 = make_field(cfg.get("f2", {}), grid)
        r = pdo.product_estimate(f1, f2, W("omega"), W("omega1"), W("omega2"), p, _plan(cfg, grid.n, seed),
                                 bool(cfg.get("check_constant", True)))
        return r.to_dict(), r.passed
    if kind == "necessity":
        r = pdo.necessity_probe(W("omega"), W("omega1"), W("omega2"), grid, float(cfg.get("p", 1.0)),
                                int(cfg.get("pairs", 20)), seed, float(cfg.get("width", 3.0)))
        return r, bool(r.get("spread", math.inf) <= float(cfg.get("max_spread", 2.0)))
    if kind == "compose":
        u = make_field(cfg.get("u", {}), grid)
        F = pdo.EntireSeries.from_descriptor(cfg.get("series", {"kind": "exp_minus_one"}))
        v, r = pdo.compose_entire(u, F, W("weight"), p, float(cfg.get("tol", 1e-12)))
        return {"report": r.to_dict(), "norm": fl_norm(v, W("weight"), p)}, r.passed
    if kind in ("elliptic", "parametrix"):
        a = make_symbol(cfg["symbol"], grid)
        lam = W("lambda")
        r_ord = float(cfg.get("r", a.order))
        K = cfg.get("K", [[-1.0, 1.0]] * grid.n)
        R = float(cfg.get("R", 1.0))
        if kind == "elliptic":
            rep = pdo.check_elliptic(a, lam, r_ord, K, R)
            return rep.to_dict(), rep.passed
        b = pdo.approx_parametrix(a, lam, r_ord, K, R, float(cfg.get("margin", 0.0)))
        u = make_field(cfg.get("u", {}), grid)
        err = pdo.composition_error(a, b, u)
        return {"composition_error": err}, err < float(cfg.get("max_error", 0.1))
    if kind == "symbol-class":
        a = make_symbol(cfg["symbol"], grid)
        xs = np.asarray(cfg.get("x_points", [[0.0] * grid.n]), dtype=float)
        res = pdo.check_symbol_class(a, float(cfg.get("r", a.order)), float(cfg.get("rho", a.rho)), W("lambda"),
                                     xs, _plan(cfg, grid.n, seed))
        table = {f"{k[0]}|{k[1]}": {"coarse": v[0], "fine": v[1], "stable": v[2]} for k, v in res.items()}
        return {"constants": table}, all(v[2] for v in res.values())
    raise ConfigError(f"unknown estimate kind {kind!r}")


def cmd_quantize(cfg: dict, args) -> tuple[dict, bool]:
    """Apply a symbol to a field; CSV output writes the result on the grid."""
    from .pdo import quantize

    n = int(cfg.get("n", cfg.get("grid", {}).get("n", 1)))
    grid = grid_from(cfg, args, n)
    a = make_symbol(cfg.get("symbol", {"kind": "identity"}), grid)
    u = make_field(cfg.get("u", {}), grid)
    v = quantize(a, u)
    rep = {"grid": {"n": grid.n, "extent": grid.extent, "points": grid.points}, "symbol": a.label,
           "input_l2": u.norm2(), "output_l2": v.norm2(), "backend": _kernels.backend_name()}
    if "reference" in cfg:
        ref = make_field(cfg["reference"], grid)
        err = float(np.max(np.abs(v.values - ref.values)))
        rep["max_abs_error"] = err
        ok = err <= float(cfg.get("tol", 1e-6))
    else:
        ok = bool(np.all(np.isfinite(v.values)))
    rep["_field"] = v
    return rep, ok


def cmd_microlocal(cfg: dict, args) -> tuple[dict, bool]:
    """Tasks: ``neighborhood``, ``inclusion``, ``cone``, ``cutoff``, ``elliptic``, ``filter``,
    ``continuity``."""
    from . import microlocal as ml

    task = args.kind or cfg.get("task")
    if task is None:
        raise ConfigError("microlocal needs --kind or 'task'")
    grid = grid_from(cfg, args, int(cfg.get("grid", {}).get("n", 2)))
    w = _weight(cfg.get("weight"), None)
    if w is None and task not in ("filter",):
        raise ConfigError("'weight' descriptor required")
    X = ml._generator_from_descriptor(cfg.get("X", {"kind": "empty"}), grid) if "X" in cfg else None
    eps = float(cfg.get("eps", 0.3))
    if task == "neighborhood":
        mode = cfg.get("mode", "bracket")
        if mode == "bracket":
            m = ml.bracket_neighborhood(X, w, eps, grid)
        else:
            m = ml.euclid_neighborhood(X, w, eps, cfg.get("mu"), grid)
        if args.out and args.format == "bin":
            ml.save_mask(args.out + ".mask", m)
        return {"count": m.count, "generator": m.generator}, True
    if task == "inclusion":
        modes = cfg.get("modes", [cfg.get("mode", "inc_1")])
        out = {}
        ok = True
        for mode in modes:
            r = ml.find_inclusion_eps(X, w, eps, mode, grid, float(cfg.get("c", 1.0)), cfg.get("mu"))
            out[mode] = r.to_dict()
            ok = ok and r.verified
        return {"results": out}, ok
    if task == "cone":
        M = cfg["M"]
        r = ml.check_cone_equivalence(ml.region_from_descriptor(cfg["X"]), eps, M, grid)
        return r.to_dict(), r.verified
    if task == "cutoff":
        _, r = ml.cutoff_symbol(X, eps, w, grid, cfg.get("mu"))
        return r.to_dict(), r.passed
    if task == "elliptic":
        a = make_symbol(cfg.get("symbol", {"kind": "example"}), grid)
        r = ml.mcl_elliptic(a, cfg.get("x0", [0.0] * grid.n), X, float(cfg.get("r", a.order)), w, grid,
                            float(cfg.get("eps0", 0.5)), two_sided=bool(cfg.get("two_sided", False)))
        expect = bool(cfg.get("expect", True))
        return r.to_dict(), r.passed == expect
    if task == "filter":
        if "symbol" in cfg:
            a = make_symbol(cfg["symbol"], grid)
            r = ml.symbol_filter_membership(a, cfg.get("x0", [0.0] * grid.n), X, float(cfg.get("r", a.order)), w,
                                            grid, eps0=float(cfg.get("eps0", 0.5)))
            return r.to_dict(), r.passed == bool(cfg.get("expect", True))
        u = make_field(cfg.get("u", {}), grid)
        phi = make_field(cfg["phi"], grid) if "phi" in cfg else None
        wn = _weight(cfg.get("norm_weight"), None)
        r = ml.filter_membership(u, phi, X, wn or w, float(cfg.get("p", 2.0)), grid, eps, nbhd_weight=w)
        return r.to_dict(), True
    if task == "continuity":
        a = make_symbol(cfg.get("symbol", {"kind": "example"}), grid)
        u = make_field(cfg.get("u", {}), grid)
        phi = make_field(cfg.get("phi", {"kind": "gaussian", "width": 0.5}), grid)
        r = ml.verify_mcl_continuity(a, u, phi, X, eps, _weight(cfg["lambda"]), _weight(cfg["Lambda"]),
                                     _weight(cfg.get("gamma")), _weight(cfg["sigma"]), float(cfg.get("p", 2.0)))
        return r.to_dict(), r.passed
    raise ConfigError(f"unknown microlocal task {task!r}")


def cmd_demo(cfg: dict, args) -> tuple[dict, bool]:
    """``propagation`` (manufactured field), ``formulas`` (exponent arithmetic) or ``example``."""
    from . import propagation as pr

    kind = args.kind or cfg.get("kind", "propagation")
    if kind == "propagation":
        scen = dict(cfg.get("scenario", cfg))
        scen.pop("kind", None)
        if args.grid_points is not None or args.grid_extent is not None:
            g = dict(scen.get("grid", pr.DEFAULT_SCENARIO["grid"]))
            if args.grid_points is not None:
                g["points"] = args.grid_points
            if args.grid_extent is not None:
                g["extent"] = args.grid_extent
            scen["grid"] = g
        rep = pr.run_propagation_demo(scen)
        return rep, rep["passed"]
    if kind == "formulas":
        led = cfg.get("ledger", {"r": 1.0, "eps_gain": 0.5, "tau": 1.6, "t_tilde": 3.0, "s": 10.0})
        L = pr.RegularityLedger(**led)
        t_max = pr.semilinear_gain(L)
        th = cfg.get("thresholds", {"t_tilde": 2.6, "s": 10.0, "q": 2.0})
        case = th.get("case") or pr.threshold_case(th["t_tilde"], th["q"])
        bound = pr.example_thresholds(th["t_tilde"], th["s"], th["q"], case)
        bs = cfg.get("bootstrap", {"t": 1.0, "s": 3.0, "r": 1.0, "eps": 0.5})
        sched = pr.bootstrap_schedule(bs["t"], bs["s"], bs["r"], bs["eps"])
        return {"semilinear_gain": t_max, "schedule": L.schedule, "thresholds": {"case": case, "t_max": bound},
                "bootstrap": sched}, True
    if kind == "example":
        from .weights import m_dilate

        P = pr.example_symbol()
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        x = rng.normal(size=(int(cfg.get("samples", 10000)), 2))
        xi = rng.normal(size=x.shape) * 5
        errs = {}
        for t in cfg.get("t", [2.0, 10.0]):
            lhs = P(x, m_dilate(xi, t, (1, 2)))
            scale = t * (np.abs(x[:, 0] * xi[:, 0]) + np.abs(xi[:, 0]) + xi[:, 1] ** 2 + 1.0)
            errs[str(t)] = float(np.max(np.abs(lhs - t * P(x, xi)) / scale))
        return {"qh_relative_error": errs}, max(errs.values()) <= 1e-12
    raise ConfigError(f"unknown demo kind {kind!r}")


COMMANDS: dict[str, Callable[[dict, argparse.Namespace], tuple[dict, bool]]] = {
    "polyhedron": cmd_polyhedron,
    "weight-check": cmd_weight_check,
    "estimate": cmd_estimate,
    "quantize": cmd_quantize,
    "microlocal": cmd_microlocal,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flmicro", description="Fourier-Lebesgue microlocal toolkit.")
    parser.add_argument("--version", action="version", version=f"flmicro {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").split("\n")[0])
        sp.add_argument("--in", dest="inp", help="JSON descriptor file.")
        sp.add_argument("--out", help="Report path (stdout when omitted).")
        sp.add_argument("--format", choices=("json", "csv", "bin"), default="json")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--grid-points", type=int, default=None)
        sp.add_argument("--grid-extent", type=float, default=None)
        sp.add_argument("--refine", type=int, default=0, help="Refinement levels applied to the grid.")
        sp.add_argument("--kind", default=None, help="Sub-task for estimate, microlocal and demo.")
        if name == "polyhedron":
            sp.add_argument("--vertices", help="Vertices as '0,0;1,0;0,2'.")
        if name == "weight-check":
            sp.add_argument("--family")
            sp.add_argument("--m", type=float)
            sp.add_argument("--s", type=float)
            sp.add_argument("--r", type=float)
            sp.add_argument("--M", help="Comma-separated integer vector.")
            sp.add_argument("--n", type=int)
            sp.add_argument("--cond", help="Comma-separated conditions (T, SV, SA, SM, G, B, PG, SH, growth, decay).")
    return parser


def _apply_threads() -> None:
    val = os.environ.get("FLMICRO_THREADS")
    if not val:
        return
    if _kernels.USE_NUMBA:
        import numba

        numba.set_num_threads(max(1, min(int(val), numba.config.NUMBA_NUM_THREADS)))


def main(argv: list[str] | None = None) -> int:
    """Run one command; returns (and exits with) the status code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        _apply_threads()
        cfg = _load_json(args.inp)
        report, ok = COMMANDS[args.command](cfg, args)
        status = EXIT_OK if ok else EXIT_FAIL
    except (ConfigError,) + CONFIG_ERRORS as exc:
        print(f"flmicro: configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FLMicroError as exc:
        report, status = {"error": type(exc).__name__, "message": str(exc)}, EXIT_FAIL
        cfg = cfg if "cfg" in locals() else {}
    field = report.pop("_field", None) if isinstance(report, dict) else None
    full = {
        "command": args.command,
        "version": __version__,
        "config": {"input": cfg, "kind": args.kind, "seed": args.seed, "grid_points": args.grid_points,
                   "grid_extent": args.grid_extent, "refine": args.refine},
        "report": report,
        "passed": status == EXIT_OK,
    }
    if args.format == "csv" and field is not None:
        if not args.out:
            print("flmicro: --out is required for CSV output", file=sys.stderr)
            return EXIT_CONFIG
        export_csv(args.out, field)
        Path(args.out + ".json").write_text(dumps(full))
    elif args.out:
        Path(args.out).write_text(dumps(full))
    else:
        sys.stdout.write(dumps(full))
    return status


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
