import json
import sys

import pytest

from flmicro import cli, grid, microlocal, pdo, polyhedron, propagation, weights

G1 = {"n": 1, "extent": 8.0, "points": 128}
G2 = {"n": 2, "extent": 3.141592653589793, "points": 64}
QH = {"family": "quasi_homogeneous", "M": [1, 2]}
H2 = {"family": "homogeneous", "m": 2, "n": 1}

# (name, argv, config or None, expected exit code)
SCENARIOS = [
    ("polyhedron", ["polyhedron"], {"vertices": [[0, 0], [1, 0], [0, 2]]}, 0),
    ("polyhedron-flag", ["polyhedron", "--vertices", "0,0;3,0;2,2;0,4"], None, 0),
    ("polyhedron-bad", ["polyhedron", "--vertices", "1,0;0,1"], None, 2),
    ("weights", ["weight-check", "--family", "homogeneous", "--m", "2", "--n", "2",
                 "--cond", "SM,SA,SV,T,growth,decay"], None, 0),
    ("weights-B", ["weight-check", "--family", "homogeneous", "--m", "2", "--n", "1", "--cond", "B"], None, 0),
    ("weights-fail", ["weight-check", "--family", "constant", "--n", "1", "--cond", "B"], None, 1),
    ("cq", ["estimate", "--kind", "cq"], {"omega": H2, "omega1": H2, "omega2": H2, "q": 1.0}, 0),
    ("kernel", ["estimate", "--kind", "kernel"], {"grid": {"n": 1, "points": 16}, "instances": 3}, 0),
    ("continuity", ["estimate", "--kind", "continuity"],
     {"grid": G1, "symbol": {"expr": {"op": "pow", "base": {"weight": H2}, "exp": 0.0}},
      "omega": H2, "omega1": H2, "omega2": H2, "u": {"width": 1.0}, "phi": {"width": 2.0}}, 0),
    ("product", ["estimate", "--kind", "product"],
     {"grid": {"n": 1, "extent": 16.0, "points": 256}, "omega": H2, "omega1": H2, "omega2": H2,
      "f1": {"width": 1.0}, "f2": {"width": 1.0}}, 0),
    ("necessity", ["estimate", "--kind", "necessity"],
     {"grid": {"n": 1, "extent": 16.0, "points": 512}, "omega": H2, "omega1": H2, "omega2": H2, "p": 2}, 0),
    ("compose", ["estimate", "--kind", "compose"],
     {"grid": G1, "weight": H2, "u": {"width": 1.0, "amplitude": 0.1}}, 0),
    ("elliptic", ["estimate", "--kind", "elliptic"],
     {"grid": G2, "symbol": {"kind": "example"}, "lambda": QH, "K": [[0.9, 1.1], [-0.1, 0.1]], "R": 4.0}, 0),
    ("elliptic-fail", ["estimate", "--kind", "elliptic"],
     {"grid": G2, "symbol": {"kind": "example"}, "lambda": QH, "K": [[-0.1, 0.1], [-0.1, 0.1]], "R": 4.0}, 1),
    ("parametrix", ["estimate", "--kind", "parametrix"],
     {"grid": G2, "symbol": {"kind": "multiplier", "weight": QH, "order": 1}, "lambda": QH, "R": 2.0,
      "u": {"width": 0.3, "modulation": [0, 12]}}, 0),
    ("symbol-class", ["estimate", "--kind", "symbol-class"],
     {"grid": G2, "symbol": {"kind": "example"}, "lambda": QH, "r": 1, "rho": 0.5}, 0),
    ("quantize", ["quantize"], {"grid": G1, "symbol": {"kind": "identity"}, "u": {"width": 1.0},
                                "reference": {"width": 1.0}, "tol": 1e-10}, 0),
    ("neighborhood", ["microlocal", "--kind", "neighborhood"],
     {"grid": G2, "weight": QH, "X": {"kind": "parabola", "smax": 5}, "eps": 0.3}, 0),
    ("inclusion", ["microlocal", "--kind", "inclusion"],
     {"grid": G2, "weight": QH, "X": {"kind": "parabola", "smax": 5}, "eps": 0.3,
      "modes": ["inc_1", "inc_2", "euclid", "mixed", "corollary", "mcl_impl"]}, 0),
    ("cone", ["microlocal", "--kind", "cone"],
     {"grid": G2, "weight": QH, "X": {"kind": "half_space", "axis": 2}, "M": [1, 2], "eps": 0.3}, 0),
    ("cutoff", ["microlocal", "--kind", "cutoff"],
     {"grid": G2, "weight": QH, "X": {"kind": "parabola", "smax": 5}, "eps": 0.4}, 0),
    ("mcl-elliptic", ["microlocal", "--kind", "elliptic"],
     {"grid": {"n": 2, "points": 128}, "weight": QH, "X": {"kind": "worked_example", "k": 0.5}}, 0),
    ("mcl-elliptic-cone", ["microlocal", "--kind", "elliptic"],
     {"grid": {"n": 2, "points": 128}, "weight": QH, "X": {"kind": "parabola_cone", "k": 0.25},
      "expect": False}, 0),
    ("filter", ["microlocal", "--kind", "filter"],
     {"grid": G2, "weight": QH, "X": {"kind": "worked_example", "k": 0.5}, "u": {"width": 0.5}}, 0),
    ("filter-symbol", ["microlocal", "--kind", "filter"],
     {"grid": {"n": 2, "points": 128}, "weight": QH, "symbol": {"kind": "example"},
      "X": {"kind": "complement", "of": {"kind": "worked_example", "k": 0.5}}}, 0),
    ("mcl-continuity", ["microlocal", "--kind", "continuity"],
     {"grid": {"n": 2, "points": 32}, "weight": QH, "X": {"kind": "worked_example", "k": 0.5},
      "lambda": {"family": "quasi_homogeneous", "M": [1, 2], "s": 2}, "gamma": QH,
      "Lambda": {"family": "quasi_homogeneous", "M": [1, 2], "s": 3}, "sigma": QH,
      "u": {"width": 0.4}, "phi": {"width": 0.5}}, 0),
    ("demo", ["demo", "--kind", "propagation"], None, 0),
    ("formulas", ["demo", "--kind", "formulas"], None, 0),
    ("example", ["demo", "--kind", "example", "--seed", "3"], {"samples": 2000}, 0),
    ("unknown-kind", ["estimate", "--kind", "bogus"], {}, 2),
    ("bad-weight", ["weight-check", "--family", "nope"], None, 2),
]

# every library check must be reachable from some command
CHECKS = [
    polyhedron.build_polyhedron, polyhedron.delta,
    weights.check_condition, weights.check_derivative_decay, weights.estimate_Cq, weights.growth_exponents,
    grid.kernel_apply, grid.fl_norm,
    pdo.quantize, pdo.symbol_fl_seminorm, pdo.check_elliptic, pdo.check_symbol_class, pdo.verify_continuity,
    pdo.product_estimate, pdo.necessity_probe, pdo.compose_entire, pdo.approx_parametrix, pdo.composition_error,
    microlocal.bracket_neighborhood, microlocal.euclid_neighborhood, microlocal.find_inclusion_eps,
    microlocal.empirical_c_hat, microlocal.check_cone_equivalence, microlocal.check_m_conic,
    microlocal.cutoff_symbol, microlocal.mcl_fl_norm, microlocal.mcl_elliptic, microlocal.filter_membership,
    microlocal.symbol_filter_membership, microlocal.verify_mcl_continuity, microlocal.check_weight_chain,
    propagation.bootstrap_schedule, propagation.semilinear_gain, propagation.example_thresholds,
    propagation.run_propagation_demo,
]


def run(argv, cfg, tmp_path, name="cfg"):
    args = list(argv)
    if cfg is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        args += ["--in", str(path)]
    out = tmp_path / f"{name}.out.json"
    code = cli.main(args + ["--out", str(out)])
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report


@pytest.mark.parametrize("name,argv,cfg,code", SCENARIOS, ids=[s[0] for s in SCENARIOS])
def test_scenario_exit_codes(name, argv, cfg, code, tmp_path):
    got, report = run(argv, cfg, tmp_path, name)
    assert got == code, report
    if code != 2:
        assert report["command"] == argv[0] and report["passed"] == (code == 0)
        assert report["version"] == cli.__version__


def test_polyhedron_report(tmp_path):
    _, rep = run(["polyhedron"], {"vertices": [[0, 0], [1, 0], [0, 2]]}, tmp_path)
    r = rep["report"]
    assert (r["mu0"], r["mu1"], r["mu"], r["delta"]) == (1, 2, "2/1", "0/1")
    assert r["quasi_homogeneous"]["max_abs_diff"] < 1e-12


def test_weight_check_sm_constant(tmp_path):
    _, rep = run(["weight-check", "--family", "homogeneous", "--m", "2", "--cond", "SM"], None, tmp_path)
    assert rep["passed"] and rep["report"]["checks"]["SM"]["empirical_constant"] <= 4


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert cli.main(["polyhedron", "--in", str(tmp_path / "absent.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["polyhedron", "--in", str(bad)]) == 2
    assert cli.main(["no-such-command"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_csv_and_bin_outputs(tmp_path):
    cfg = tmp_path / "q.json"
    cfg.write_text(json.dumps({"grid": G1, "symbol": {"kind": "derivative"}, "u": {"width": 1.0}}))
    out = tmp_path / "q.csv"
    assert cli.main(["quantize", "--in", str(cfg), "--format", "csv", "--out", str(out)]) == 0
    assert out.read_text().count("\n") >= 128 and (tmp_path / "q.csv.json").exists()
    assert cli.main(["quantize", "--in", str(cfg), "--format", "csv"]) == 2
    mcfg = tmp_path / "m.json"
    mcfg.write_text(json.dumps({"grid": G2, "weight": QH, "X": {"kind": "parabola", "smax": 5}}))
    mout = tmp_path / "m"
    assert cli.main(["microlocal", "--kind", "neighborhood", "--in", str(mcfg), "--format", "bin",
                     "--out", str(mout)]) == 0
    m = microlocal.load_mask(str(mout) + ".mask")
    assert m.count == json.loads(mout.read_text())["report"]["count"]


def test_stdout_report(capsys):
    assert cli.main(["demo", "--kind", "formulas"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["report"]["semilinear_gain"] == 4.0
    assert rep["report"]["thresholds"]["t_max"] == pytest.approx(4.1)
    assert rep["report"]["bootstrap"] == [1.0, 1.5, 2.0, 2.5, 3.0]


@pytest.mark.parametrize("argv", [
    ["weight-check", "--family", "quasi_homogeneous", "--M", "1,2", "--cond", "SM,SA", "--seed", "5"],
    ["estimate", "--kind", "kernel", "--grid-points", "16", "--seed", "9"],
    ["demo", "--kind", "propagation", "--grid-points", "64"],
    ["demo", "--kind", "example", "--seed", "1"],
])
def test_deterministic_bytes(argv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(argv + ["--out", str(a)])
    cli.main(argv + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_every_check_reachable(tmp_path):
    targets = {f.__code__ for f in CHECKS}
    seen = set()

    def prof(frame, event, arg):
        if event == "call" and frame.f_code in targets:
            seen.add(frame.f_code)

    sys.setprofile(prof)
    try:
        for name, argv, cfg, _ in SCENARIOS:
            run(argv, cfg, tmp_path, name)
    finally:
        sys.setprofile(None)
    missing = sorted(c.co_name for c in targets - seen)
    assert not missing, missing
    assert set(cli.COMMANDS) == {"polyhedron", "weight-check", "estimate", "quantize", "microlocal", "demo"}
