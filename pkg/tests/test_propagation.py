import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flmicro.errors import BadK, BadParam, BadStep, CaseMismatch, ConstraintViolated, HypothesisViolated
from flmicro.grid import GridSpec, Spectrum, idft
from flmicro.microlocal import FrequencyMask, mcl_fl_norm, parabola_cone
from flmicro.propagation import (
    RegularityLedger,
    bootstrap_schedule,
    example_thresholds,
    example_Xk,
    manufactured_spectra,
    periodic_window,
    run_propagation_demo,
    semilinear_gain,
    threshold_case,
)
from flmicro.weights import quasi_homogeneous


def test_bootstrap_examples():
    assert bootstrap_schedule(2.0, 2.0, 1.0, 0.5) == [2.0]
    assert bootstrap_schedule(1.0, 3.0, 1.0, 0.5) == [1.0, 1.5, 2.0, 2.5, 3.0]
    out = bootstrap_schedule(1.0, 3.1, 1.0, 0.5)
    assert len(out) == 6 and out[-1] == 3.5
    with pytest.raises(BadStep):
        bootstrap_schedule(1.0, 2.0, 1.0, 0.0)


def test_bootstrap_closed_form_random():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        t = rng.uniform(-5, 5)
        s = t + rng.uniform(1e-3, 10)
        eps = rng.uniform(1e-2, 2)
        out = bootstrap_schedule(t, s, 1.0, eps)
        assert len(out) == math.ceil((s - t) / eps) + 1
        assert out[-1] >= s - 1e-12 and out[-2] < s


def test_semilinear_examples():
    assert semilinear_gain(RegularityLedger(1.0, 0.5, 1.6, 3.0, 10.0)) == 4.0
    assert semilinear_gain(RegularityLedger(1.0, 0.5, 1.1, 3.0, 3.2)) == 3.2
    assert semilinear_gain(RegularityLedger(1.0, 0.5, 1.1, 3.0, 3.0)) == 3.0


def test_semilinear_constraints():
    with pytest.raises(ConstraintViolated):
        semilinear_gain(RegularityLedger(1.0, 1.5, 1.0, 3.0, 10.0))
    with pytest.raises(ConstraintViolated):
        semilinear_gain(RegularityLedger(1.0, 0.5, 3.0, 3.0, 10.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 3), st.floats(0.05, 0.95), st.floats(0, 3), st.floats(0, 5), st.floats(0.01, 5), st.floats(0, 1))
def test_semilinear_invariants(r, frac, tau, extra, span, bump):
    e = frac * r
    t = tau + r - e + extra
    s = t + span
    led = RegularityLedger(r, e, tau, t, s)
    val = semilinear_gain(led)
    assert val <= s
    assert val >= min(s, t + e) - 1e-12
    if t + e >= s:
        assert val == s
    t2 = min(t + bump, s)
    assert semilinear_gain(RegularityLedger(r, e, tau, t2, s)) >= val - 1e-12
    assert led.schedule[-1] == val


def test_thresholds_examples():
    assert example_thresholds(2.6, 10.0, 2.0, "a") == pytest.approx(4.1, abs=1e-12)
    assert example_thresholds(2.5, 10.0, 2.0, "b") == pytest.approx(3.5, abs=1e-12)
    assert example_thresholds(2.6, 2.7, 2.0, "a") == 2.7
    assert threshold_case(2.6, 2.0) == "a" and threshold_case(2.5, 2.0) == "b"
    with pytest.raises(CaseMismatch):
        example_thresholds(2.5, 10.0, 2.0, "a")
    with pytest.raises(HypothesisViolated):
        example_thresholds(1.2, 10.0, 2.0, "a")
    with pytest.raises(BadParam):
        example_thresholds(2.6, 10.0, 2.0, "c")


def test_example_Xk():
    for k in (0.1, 0.5, 0.9):
        assert example_Xk(k)(np.array([0.0, 1.0]))
    assert not example_Xk(0.5)(np.array([1.0, 1.0]))
    with pytest.raises(BadK):
        example_Xk(1.0)


def test_example_Xk_scaling_closure():
    rng = np.random.default_rng(9)
    xi = rng.normal(scale=30, size=(10_000, 2))
    for k in (0.25, 0.5, 0.75):
        X = example_Xk(k)
        inside = X(xi)
        for t in (0.25, 4.0):
            scaled = np.stack([t * xi[:, 0], np.sqrt(t) * xi[:, 1]], axis=-1)
            assert np.array_equal(X(scaled), inside)
    assert np.all(example_Xk(0.5)(np.stack([4 * xi[:, 0], 2 * xi[:, 1]], -1))[example_Xk(0.5)(xi)])


def test_periodic_window_peak():
    g = GridSpec(2, np.pi, 64)
    w = periodic_window(g, [0.0, 0.0], 0.3)
    assert w.values.real.max() == pytest.approx(1.0)
    assert np.all(w.values.real > 0)


def test_demo_ridge():
    rep = run_propagation_demo()
    assert rep["passed"]
    char = rep["probes"]["0,0"]
    assert char["role"] == "characteristic" and char["separation"] >= 10
    ell = rep["probes"]["1,0"]
    assert ell["role"] == "elliptic" and ell["separation"] < 10
    assert rep["thresholds"] == {"case": "a", "t_max": pytest.approx(4.1)}


def test_demo_smooth():
    rep = run_propagation_demo({"field": "smooth", "grid": {"points": 128}})
    assert rep["passed"]
    for probe in rep["probes"].values():
        assert all(v["status"] == "finite" for v in probe["growth"].values())


def test_demo_pieces_oracle():
    # norms of the two additive pieces bound the measured norm by the triangle inequality
    g = GridSpec(2, np.pi, 128)
    smooth, ridge = manufactured_spectra(g)
    w = quasi_homogeneous((1, 2), 1.75)
    cone = FrequencyMask.from_region(parabola_cone(0.5), g)
    a = mcl_fl_norm(idft(Spectrum(g, smooth.astype(complex))), None, None, 1, w, 2, mask=cone)
    b = mcl_fl_norm(idft(Spectrum(g, ridge.astype(complex))), None, None, 1, w, 2, mask=cone)
    both = mcl_fl_norm(idft(Spectrum(g, (smooth + ridge).astype(complex))), None, None, 1, w, 2, mask=cone)
    assert both <= a + b + 1e-9 and both >= b - a - 1e-9
    # the ridge dominates in the cone
    assert b > 10 * a


def test_demo_config_errors():
    with pytest.raises(BadParam):
        run_propagation_demo({"grid": {"n": 1, "points": 64}})
    with pytest.raises(BadK):
        run_propagation_demo({"k": 1.5})
    with pytest.raises(BadParam):
        run_propagation_demo({"field": "other"})
