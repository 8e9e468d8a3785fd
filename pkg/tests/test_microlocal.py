import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flmicro.errors import BadParam, EmptyMask, NotMConic, PreconditionChainBroken
from flmicro.grid import Field, GridSpec, Spectrum, dft, fl_norm, idft, local_fl_norm
from flmicro.microlocal import (
    FrequencyMask,
    bracket_neighborhood,
    check_cone_equivalence,
    check_weight_chain,
    cutoff_symbol,
    empty_set,
    euclid_neighborhood,
    filter_membership,
    find_inclusion_eps,
    growth_verdict,
    half_space,
    load_mask,
    m_cone,
    m_sphere_samples,
    mask_from_descriptor,
    mcl_elliptic,
    mcl_fl_norm,
    parabola_cone,
    parabola_points,
    region_from_descriptor,
    save_mask,
    schedule,
    symbol_filter_membership,
    verify_mcl_continuity,
    whole_space,
    worked_example_set,
)
from flmicro.pdo import Symbol, example_symbol, quantize, verify_continuity
from flmicro.weights import bracket_M, constant_weight, homogeneous, log_type, quasi_homogeneous

LAM = quasi_homogeneous((1, 2))
G64 = GridSpec(2, np.pi, 64)
G32 = GridSpec(2, np.pi, 32)
G128 = GridSpec(2, np.pi, 128)


def brute_bracket(gens, w, eps, grid):
    xi = grid.xi_mesh()
    bits = np.zeros(grid.shape, dtype=bool)
    for g in gens:
        bits |= w(xi - g) < eps * w(g)
    return bits


def brute_euclid(gens, lam, eps, mu, grid):
    xi = grid.xi_mesh()
    bits = np.zeros(grid.shape, dtype=bool)
    for g in gens:
        bits |= np.linalg.norm(xi - g, axis=-1) < eps * lam(g) ** (1 / mu)
    return bits


def test_schedule():
    assert schedule(0.3) == [0.3 / 2 ** k for k in range(1, 11)]


def test_bracket_bounded_set_is_empty():
    w = homogeneous(1, 2)
    xi0 = np.array([[np.sqrt(99.0), 0.0]])
    assert w(xi0)[0] == pytest.approx(10.0)
    assert bracket_neighborhood(xi0, w, 0.01, G64).is_empty()


def test_bracket_whole_grid_keeps_large_points():
    w = homogeneous(1, 2)
    m = bracket_neighborhood(whole_space(), w, 0.5, G32)
    keep = w(G32.xi_mesh()) > 2
    assert np.all(m.bits[keep])


@pytest.mark.parametrize("w", [LAM, quasi_homogeneous((1, 2), 2.0), homogeneous(1, 2), log_type(1.0, 1.0, 2)])
def test_bracket_matches_brute_force(w):
    rng = np.random.default_rng(11)
    gens = rng.integers(-14, 15, size=(25, 2)).astype(float)
    for eps in (0.3, 0.7):
        m = bracket_neighborhood(gens, w, eps, G32)
        assert np.array_equal(m.bits, brute_bracket(gens, w, eps, G32))


def test_bracket_parabola_concentrates():
    m = bracket_neighborhood(parabola_points(11), LAM, 0.3, G64)
    assert not m.is_empty()
    pts = m.points()
    # every masked point sits within one M-ball of the parabola at high frequency
    assert np.all(LAM(pts) > 1 / 0.3)


def test_euclid_examples():
    xi0 = np.array([[3.0, -2.0]])
    assert euclid_neighborhood(xi0, LAM, 1e-3, 2, G32).bits[G32.index_of_xi(xi0[0])]
    rng = np.random.default_rng(2)
    gens = rng.integers(-10, 11, size=(15, 2)).astype(float)
    m = euclid_neighborhood(gens, constant_weight(), 2.5, 1.0, G32)
    assert np.array_equal(m.bits, brute_euclid(gens, constant_weight(), 2.5, 1.0, G32))
    m = euclid_neighborhood(gens, LAM, 0.7, 2.0, G32)
    assert np.array_equal(m.bits, brute_euclid(gens, LAM, 0.7, 2.0, G32))


def test_euclid_widths_follow_lambda():
    g = GridSpec(2, np.pi, 512)
    widths, lams = [], []
    for s in (4.0, 14.0):
        xi0 = np.array([[s * s, s]])
        m = euclid_neighborhood(xi0, LAM, 4.0, 2.0, g)
        row = g.index_of_xi(xi0[0])[1]
        widths.append(m.bits[:, row].sum())
        lams.append(LAM(xi0)[0])
    assert widths[1] / widths[0] == pytest.approx(np.sqrt(lams[1] / lams[0]), rel=0.1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(0, 1000))
def test_monotone_in_eps(e1, e2, seed):
    e1, e2 = min(e1, e2), max(e1, e2)
    gens = np.random.default_rng(seed).integers(-12, 13, size=(10, 2)).astype(float)
    assert bracket_neighborhood(gens, LAM, e1, G32).issubset(bracket_neighborhood(gens, LAM, e2, G32))
    assert euclid_neighborhood(gens, LAM, e1, 2, G32).issubset(euclid_neighborhood(gens, LAM, e2, 2, G32))
    sub = gens[: len(gens) // 2]
    assert bracket_neighborhood(sub, LAM, e1, G32).issubset(bracket_neighborhood(gens, LAM, e1, G32))


def test_mask_algebra():
    a = FrequencyMask.from_region(half_space(1), G32)
    b = FrequencyMask.from_region(half_space(2), G32)
    assert (a & b).issubset(a) and a.issubset(a | b)
    assert ((a - b) | (a & b)).bits.tolist() == a.bits.tolist()
    assert (~a & a).is_empty()
    assert not (a | b).issubset(a)
    assert len((a | b).violations(a, limit=3)) == 3


def test_inclusion_empty_set():
    for mode in ("inc_1", "inc_2", "euclid", "mixed", "corollary", "mcl_impl"):
        rep = find_inclusion_eps(empty_set(), LAM, 0.3, mode, G32)
        assert rep.verified


def test_inclusion_parabola_small():
    X = parabola_points(7)
    for mode in ("inc_1", "inc_2", "corollary"):
        rep = find_inclusion_eps(X, LAM, 0.3, mode, G64)
        assert rep.verified, mode
        assert rep.eps_prime in schedule(0.3)
    rep = find_inclusion_eps(X, LAM, 0.3, "mcl_impl", G64)
    pts = bracket_neighborhood(X, LAM, 0.3, G64).points()
    assert rep.c_hat > 0 and np.all(LAM(pts) > rep.c_hat / 0.3)
    with pytest.raises(BadParam):
        find_inclusion_eps(X, LAM, 0.3, "bogus", G64)


def test_m_cone_examples():
    c = m_cone((1.0, 1.0), 1e-3, (1, 2))
    assert c(np.array([4.0, 2.0]))
    rng = np.random.default_rng(0)
    eta = np.array([0.3, -0.8])
    ts = rng.uniform(0.1, 50, 20)
    pts = np.stack([ts * eta[0], np.sqrt(ts) * eta[1]], axis=-1)
    assert np.all(m_cone(eta, 1e-3, (1, 2))(pts))
    assert not m_cone((1.0, 0.0), 0.1, (1, 2))(np.array([0.0, 1.0]))
    with pytest.raises(BadParam):
        m_cone((1.0, 0.0), 0.0, (1, 2))


def test_m_sphere_samples_on_sphere():
    s = m_sphere_samples((1, 2), 64)
    assert np.allclose(s[:, 0] ** 2 + s[:, 1] ** 4, 1.0)


def test_cone_equivalence_trivial_and_rejects():
    rep = check_cone_equivalence(empty_set(), 0.3, (1, 2), G64)
    assert rep.verified
    with pytest.raises(NotMConic):
        check_cone_equivalence(lambda xi: np.linalg.norm(xi, axis=-1) < 5, 0.3, (1, 2), G64)


def test_cone_equivalence_half_plane():
    rep = check_cone_equivalence(half_space(2), 0.3, (1, 2), GridSpec(2, np.pi, 128))
    assert rep.verified


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.25, 0.5, 0.75]), st.sampled_from([0.25, 4.0]))
def test_worked_set_scaling(seed, k, t):
    xi = np.random.default_rng(seed).normal(scale=20, size=(500, 2))
    X = worked_example_set(k)
    scaled = np.stack([t * xi[:, 0], np.sqrt(t) * xi[:, 1]], axis=-1)
    assert np.array_equal(X(xi), X(scaled))
    assert not np.any(X(xi) & parabola_cone(k)(xi))


def test_cutoff_trivial_sets():
    sym, rep = cutoff_symbol(whole_space(), 0.4, LAM, G32, check_refinement=False)
    vals = sym(np.zeros(2), G32.xi_mesh())
    assert np.allclose(vals, 1.0)
    sym, rep = cutoff_symbol(empty_set(), 0.4, LAM, G32, check_refinement=False)
    assert np.all(sym(np.zeros(2), G32.xi_mesh()) == 0)


def test_cutoff_parabola():
    sym, rep = cutoff_symbol(parabola_points(5), 0.4, LAM, G64)
    assert rep.passed and rep.support_ok and rep.plateau_ok
    vals = sym(np.zeros(2), G64.xi_mesh()).real
    assert vals.min() >= 0 and vals.max() <= 1


def test_mcl_norm_trivial_masks():
    x = G64.x_mesh()
    u = Field(G64, np.exp(-np.sum(x * x, axis=-1)))
    phi = Field(G64, np.exp(-np.sum(x * x, axis=-1) / 2))
    assert mcl_fl_norm(u, phi, None, 0.3, LAM, 2, mask=FrequencyMask.empty(G64)) == 0
    full = mcl_fl_norm(u, phi, None, 0.3, LAM, 2, mask=FrequencyMask.full(G64))
    assert full == pytest.approx(local_fl_norm(u, phi, LAM, 2), rel=1e-12)


def test_mcl_norm_constructed_spectrum():
    xi = G64.xi_mesh()
    lm = bracket_M(xi, (1, 2))
    cone = parabola_cone(0.5)(xi)
    smooth = lm ** -2.0
    spec = smooth * (1 + 10 * cone)
    u = idft(Spectrum(G64, spec.astype(complex)))
    X = worked_example_set(0.25)
    mask = bracket_neighborhood(X, LAM, 0.05, G64) - FrequencyMask.from_region(parabola_cone(0.5), G64)
    got = mcl_fl_norm(u, None, X, 0.05, LAM, 2, mask=mask)
    ref = mcl_fl_norm(idft(Spectrum(G64, smooth.astype(complex))), None, X, 0.05, LAM, 2, mask=mask)
    assert got == pytest.approx(ref, rel=1e-10)


def test_mcl_elliptic_multiplier():
    rep = mcl_elliptic(Symbol.multiplier(LAM), (0, 0), worked_example_set(0.5), 1, LAM, G64)
    assert rep.passed and rep.c0 == pytest.approx(1.0)


def test_mcl_elliptic_worked_example():
    P = example_symbol()
    rep = mcl_elliptic(P, (0, 0), worked_example_set(0.5), 1, LAM, G128)
    assert rep.passed and rep.c0 > 0.1
    bad = mcl_elliptic(P, (0, 0), parabola_cone(0.25), 1, LAM, G64)
    assert not bad.passed
    with pytest.raises(EmptyMask):
        mcl_elliptic(P, (0, 0), empty_set(), 1, LAM, G64)


def test_mcl_elliptic_two_sided():
    P = example_symbol()
    rep = mcl_elliptic(P, (0, 0), worked_example_set(0.5), 1, LAM, G128, two_sided=True, ball=0.05)
    assert rep.passed and rep.two_sided["c_star"] > 0


def test_growth_verdict():
    assert growth_verdict(1.0, 1.05)[0] == "finite"
    assert growth_verdict(1.0, 1.3)[0] == "indeterminate"
    assert growth_verdict(1.0, 2.0)[0] == "divergent"
    assert growth_verdict(0.0, 0.0)[0] == "finite"
    assert growth_verdict(1.0, np.inf)[0] == "divergent"


def gaussian_at(center, width):
    def make(g):
        x = g.x_mesh()
        return Field(g, np.exp(-np.sum((x - np.asarray(center)) ** 2, axis=-1) / (2 * width ** 2)))
    return make


def jump_1d(g):
    x = g.x_axis()
    return Field(g, np.where(x >= 0, 1.0, 0.0) * np.exp(-x ** 2))


def test_filter_smooth_field():
    g = GridSpec(2, 4.0, 64)
    for X in (worked_example_set(0.5), half_space(1), parabola_cone(0.5)):
        rep = filter_membership(gaussian_at((0.3, -0.2), 0.5), None, X, LAM, 2, grid=g)
        assert rep.member and rep.status == "finite"


def test_filter_jump_1d():
    g = GridSpec(1, 8.0, 256)
    phi = gaussian_at((0.0,), 0.5)
    rep = filter_membership(jump_1d, phi, half_space(1, -1), homogeneous(1, 1), 1, grid=g)
    assert not rep.member and rep.status == "divergent"
    # away from the jump every direction is regular
    far = filter_membership(jump_1d, gaussian_at((3.0,), 0.3), half_space(1, -1), homogeneous(1, 1), 1, grid=g)
    assert far.member


def test_filter_upward_closed():
    g = GridSpec(2, np.pi, 64)
    sets = [parabola_cone(0.25), parabola_cone(0.5), parabola_cone(0.75), whole_space()]
    ridge = ridge_field(0.25)
    members = [filter_membership(ridge, None, ~X, LAM, 2, grid=g).member for X in sets]
    for a, b in zip(members, members[1:]):
        assert (not a) or b


def test_symbol_filter():
    P = example_symbol()
    rep = symbol_filter_membership(P, (0, 0), ~worked_example_set(0.5), 1, LAM, G128)
    assert rep.passed


def test_verify_mcl_continuity_paths():
    g = GridSpec(1, 8.0, 128)
    x = g.x_axis()
    u = Field(g, np.exp(-x ** 2))
    phi = Field(g, np.exp(-x ** 2 / 4))
    a = Symbol.function_of_x(lambda x: np.exp(-x[..., 0] ** 2))
    w = homogeneous(2, 1)
    deg = verify_mcl_continuity(a, u, phi, half_space(1), 0.3, w, w, None, w, 2)
    ref = verify_continuity(a, w, w, w, None, 2, u, phi, check_constant=False)
    assert deg.lhs == pytest.approx(ref.lhs, rel=1e-9)
    assert deg.bound == pytest.approx(ref.rhs_bound, rel=1e-9)
    assert deg.passed and ref.passed
    zero = verify_mcl_continuity(a, Field.zeros(g), phi, half_space(1), 0.3, w, homogeneous(3, 1),
                                 None, homogeneous(1, 1), 2)
    assert zero.lhs == 0


def test_verify_mcl_continuity_refinement():
    P = example_symbol()
    X = worked_example_set(0.5)
    lam = quasi_homogeneous((1, 2), 2.0)
    Lam = quasi_homogeneous((1, 2), 3.0)
    sig = LAM
    rep = verify_mcl_continuity(P, gaussian_at((0, 0), 0.4), gaussian_at((0, 0), 0.5), X, 0.3, lam, Lam,
                                LAM, sig, 2, grid=GridSpec(2, np.pi, 32))
    assert rep.finite and rep.passed, rep.to_dict()


def test_weight_chain_broken():
    with pytest.raises(PreconditionChainBroken):
        check_weight_chain(quasi_homogeneous((1, 2), 3.0), LAM, LAM, G32)


def ridge_field(k):
    def make(g):
        xi = g.xi_mesh()
        lm = bracket_M(xi, (1, 2))
        spec = lm ** -3.0 + parabola_cone(k)(xi) * lm ** -1.0
        return idft(Spectrum(g, spec.astype(complex)))
    return make


def cutoff_membership(u, X, eps, grid):
    """Finite query via sigma(D)(u) with sigma = 1 near the complement of X."""
    vals = []
    for g in (grid, grid.refine()):
        sym, _ = cutoff_symbol(~X, eps, LAM, g, check_refinement=False)
        vals.append(fl_norm(quantize(sym, u(g)), LAM, 2))
    return growth_verdict(*vals)[0] == "finite"


def test_mask_and_cutoff_membership_agree():
    g = GridSpec(2, np.pi, 32)
    rng = np.random.default_rng(4)
    fields = [gaussian_at(rng.uniform(-1, 1, 2), rng.uniform(0.3, 0.8)) for _ in range(5)]
    fields += [ridge_field(k) for k in (0.2, 0.3, 0.4, 0.5, 0.6)]
    X = worked_example_set(0.5)
    for u in fields:
        a = filter_membership(u, None, X, LAM, 2, grid=g, eps=0.25).member
        b = cutoff_membership(u, X, 0.25, g)
        assert a == b


def test_descriptors_and_io(tmp_path):
    d = {"kind": "union", "args": [{"kind": "worked_example", "k": 0.5}, {"kind": "half_space", "axis": 2}]}
    r = region_from_descriptor(d)
    m = mask_from_descriptor(d, G32)
    assert np.array_equal(m.bits, r(G32.xi_mesh()))
    nb = mask_from_descriptor({"kind": "bracket_neighborhood", "X": {"kind": "parabola", "smax": 5},
                               "weight": {"family": "quasi_homogeneous", "M": [1, 2]}, "eps": 0.3}, G32)
    assert np.array_equal(nb.bits, bracket_neighborhood(parabola_points(5), LAM, 0.3, G32).bits)
    save_mask(tmp_path / "m.bin", nb)
    back = load_mask(tmp_path / "m.bin")
    assert back.grid == G32 and np.array_equal(back.bits, nb.bits)
    with pytest.raises(BadParam):
        region_from_descriptor({"kind": "nope"})
