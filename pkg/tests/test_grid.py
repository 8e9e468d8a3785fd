import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flmicro.errors import GridMismatch
from flmicro.grid import (
    Field,
    GridSpec,
    Spectrum,
    dft,
    export_csv,
    fl_norm,
    idft,
    kernel_apply,
    load_field,
    local_fl_norm,
    mixed_norm,
    save_field,
    weighted_lp_norm,
)
from flmicro.weights import homogeneous

G1 = GridSpec(1, 16.0, 512)


def gaussian(grid, a=0.0):
    return Field.from_function(grid, lambda x: np.exp(-np.sum((x - a) ** 2, axis=-1) / 2))


def test_grid_geometry():
    g = GridSpec(2, np.pi, 64)
    assert g.dxi == pytest.approx(1.0)
    assert g.xi_max == pytest.approx(32.0)
    r = g.refine()
    assert r.points == 128 and r.dxi == g.dxi
    with pytest.raises(GridMismatch):
        GridSpec(1, 1.0, 100)


def test_gaussian_pair():
    s = dft(gaussian(G1))
    xi = G1.xi_axis()
    ref = np.sqrt(2 * np.pi) * np.exp(-xi ** 2 / 2)
    sel = np.abs(xi) <= 8
    assert np.max(np.abs(s.values[sel] - ref[sel])) / ref.max() < 1e-8


def test_shift_theorem():
    a = 1.5
    s0, s1 = dft(gaussian(G1)), dft(gaussian(G1, a))
    xi = G1.xi_axis()
    assert np.max(np.abs(s1.values - np.exp(-1j * xi * a) * s0.values)) < 1e-9


def test_zero_and_roundtrip():
    g = GridSpec(2, 4.0, 32)
    assert np.all(dft(Field.zeros(g)).values == 0)
    rng = np.random.default_rng(0)
    f = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    assert np.max(np.abs(idft(dft(f)).values - f.values)) < 1e-12


def test_plancherel():
    for g in (G1, GridSpec(2, 8.0, 128)):
        f = gaussian(g)
        assert fl_norm(f, None, 2) == pytest.approx((2 * np.pi) ** (g.n / 2) * f.norm2(), rel=1e-8)


def test_weighted_norm_quadrature_oracles():
    s = dft(gaussian(G1))
    w1 = homogeneous(1, 1)
    # int (1 + xi^2) 2 pi e^{-xi^2} dxi = 2 pi (sqrt(pi) + sqrt(pi)/2)
    ref2 = np.sqrt(2 * np.pi * 1.5 * np.sqrt(np.pi))
    assert weighted_lp_norm(s, w1, 2) == pytest.approx(ref2, rel=1e-6)
    # int (1 + xi^2) sqrt(2 pi) e^{-xi^2/2} dxi = 2 pi (1 + 1)
    assert fl_norm(gaussian(G1), homogeneous(2, 1), 1) == pytest.approx(4 * np.pi, rel=1e-6)


def test_unit_mass_bump():
    f = gaussian(G1)
    f = f * (1 / (np.sum(f.values.real) * G1.dx))
    # |fhat| <= 1 = fhat(0): the p = inf norm equals the mass
    assert weighted_lp_norm(dft(f), None, np.inf) == pytest.approx(1.0, rel=1e-12)


def test_local_norm():
    f = gaussian(G1)
    one = Field(G1, np.ones(G1.shape))
    assert local_fl_norm(f, one, None, 2) == pytest.approx(fl_norm(f, None, 2), rel=1e-9)
    assert local_fl_norm(f, Field.zeros(G1), None, 2) == 0


def test_local_norm_jump():
    g = GridSpec(1, 8.0, 1024)
    x = g.x_axis()
    u = Field(g, (x >= 0).astype(float))
    on = Field(g, np.exp(-x ** 2 / (2 * 0.3 ** 2)))
    off = Field(g, np.exp(-(x - 4) ** 2 / (2 * 0.3 ** 2)))
    w = homogeneous(1, 1)
    assert local_fl_norm(u, on, w, 1) >= 10 * local_fl_norm(u, off, w, 1)


def test_mixed_norm_oracles():
    rng = np.random.default_rng(3)
    F = rng.random((32, 32))
    p, q = 2.0, 3.0
    inner = [sum(F[i, j] ** p for i in range(32)) ** (1 / p) for j in range(32)]
    ref = sum(v ** q for v in inner) ** (1 / q)
    assert mixed_norm(F, "L1pq", p, q) == pytest.approx(ref, rel=1e-14)
    inner2 = [sum(F[i, j] ** q for j in range(32)) ** (1 / q) for i in range(32)]
    ref2 = sum(v ** p for v in inner2) ** (1 / p)
    assert mixed_norm(F, "L2pq", p, q) == pytest.approx(ref2, rel=1e-14)
    a, b = rng.random(32), rng.random(32)
    sep = mixed_norm(np.outer(a, b), "L1pq", p, q)
    assert sep == pytest.approx(np.linalg.norm(a, p) * np.linalg.norm(b, q), rel=1e-9)
    assert mixed_norm(np.zeros((4, 4)), "L1pq", 2, 2) == 0


def test_kernel_convolution_oracle():
    g = GridSpec(1, 4.0, 32)
    rng = np.random.default_rng(5)
    f0 = rng.normal(size=32)
    gv = rng.normal(size=32)
    P = 32
    res = kernel_apply(np.ones((P, P)), np.repeat(f0[:, None], P, axis=1), Spectrum(g, gv))
    ref = np.zeros(P)
    for i in range(P):
        for j in range(P):
            z = i - j + P // 2
            if 0 <= z < P:
                ref[i] += f0[z] * gv[j]
    assert np.max(np.abs(res.spectrum.values - ref * g.dxi)) < 1e-9
    zero = kernel_apply(np.ones((P, P)), np.ones((P, P)), Spectrum.zeros(g))
    assert zero.lhs == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([1.0, 1.5, 2.0, 3.0, np.inf]))
def test_kernel_bound_random(seed, p):
    g = GridSpec(1, 4.0, 64)
    rng = np.random.default_rng(seed)
    xi = g.xi_axis()
    Z, E = np.meshgrid(xi, xi, indexing="ij")
    F = np.exp(-(Z ** 2 + E ** 2) / rng.uniform(20, 200)) * rng.uniform(0.5, 1, (64, 64))
    f = np.exp(-(Z ** 2 + E ** 2) / rng.uniform(20, 200)) * rng.normal(size=(64, 64))
    s = Spectrum(g, rng.normal(size=64) * np.exp(-xi ** 2 / 100))
    res = kernel_apply(F, f, s, p)
    assert res.ratio <= 1.01


def test_io_roundtrip(tmp_path):
    g = GridSpec(1, 4.0, 16)
    f = gaussian(g)
    save_field(tmp_path / "f.npz", f)
    h = load_field(tmp_path / "f.npz")
    assert h.grid == g and np.array_equal(h.values, f.values)
    export_csv(tmp_path / "f.csv", f)
    assert (tmp_path / "f.csv").read_text().count("\n") >= 16


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        gaussian(G1) + gaussian(GridSpec(1, 8.0, 512))
    with pytest.raises(GridMismatch):
        idft(gaussian(G1))


@settings(max_examples=25, deadline=None)
@given(arrays(complex, 16, elements=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)))
def test_linearity_and_roundtrip(v):
    g = GridSpec(1, 2.0, 16)
    f = Field(g, v)
    assert np.allclose(idft(dft(f)).values, v, atol=1e-10)
    assert np.allclose(dft(f * 2.0).values, 2 * dft(f).values)
