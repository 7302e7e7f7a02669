import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import minimum_filter
from scipy.spatial.distance import directed_hausdorff
from scipy.special import i0e

from dynloc.classical import (
    DEGENERATE,
    ELLIPTIC,
    HYPERBOLIC,
    FResult,
    avg_hamiltonian,
    avg_hamiltonian_grad,
    avg_interaction,
    build_phase_map,
    compute_F,
    confinement_fraction,
    f_contour,
    find_fixed_points,
    inside_periodic,
    phase_map_summary,
    polygon_area,
    secular_frequency,
    winding_number,
    write_F_csv,
    write_H_csv,
    write_phase_map_json,
)
from dynloc.core import ModelParams

PORTRAIT_U = (-0.20, -0.02, 0.10, 0.5)
BETA = 2e-4


def v_int_closed_form(J, phi, params):
    """Orbit average of the Gaussian in closed form: (u/sqrt(pi)) e^{-R^2/2} I0(R^2/2)."""
    R2 = 2 * J + 2 * params.J_c - 4 * np.sqrt(J * params.J_c) * np.cos(phi)
    return params.u / math.sqrt(math.pi) * i0e(R2 / 2)


@pytest.fixture(scope="module")
def maps():
    out = {}
    for u in PORTRAIT_U + (0.3, 0.0):
        out[u] = build_phase_map(ModelParams(u, BETA))
        out[-u, "flip"] = build_phase_map(ModelParams(u, BETA).flipped())
    return out


# ---------------------------------------------------------------- secular frequency


def test_secular_frequency_values():
    assert secular_frequency(ModelParams(0.3, 0.0)) == 0.0
    assert secular_frequency(ModelParams(0.3, 2e-4)) == pytest.approx(4.8e-3, rel=1e-14)


def test_secular_frequency_consistency_symbolic():
    sympy = pytest.importorskip("sympy")
    J, Jc, beta = sympy.symbols("J J_c beta", positive=True)
    d_omega = sympy.Rational(3, 4) * beta * Jc
    untransformed = J * (1 - (1 + d_omega)) + sympy.Rational(3, 8) * beta * J**2
    printed = sympy.Rational(3, 4) * beta * J * (J / 2 - Jc)
    diff = sympy.expand(untransformed - printed)
    assert sympy.diff(diff, J) == 0
    # and the shift is the unique one making d/dJ vanish at J_c
    dO = sympy.symbols("dO")
    sol = sympy.solve(sympy.diff(J * (-dO) + sympy.Rational(3, 8) * beta * J**2, J).subs(J, Jc), dO)
    assert sol == [d_omega]


# ---------------------------------------------------------------- quadrature


@pytest.mark.parametrize("u", [-0.5, 0.5])
def test_interaction_anchors(u):
    p = ModelParams(u, BETA)
    assert abs(avg_interaction(p.J_c, 0.0, p) - u / math.sqrt(math.pi)) < 1e-10
    anchor = u / math.sqrt(math.pi) * i0e(p.J_c)
    for phi in (0.0, 1.0, -2.5, math.pi):
        assert abs(avg_interaction(0.0, phi, p) - anchor) < 1e-10
    # 0.03981 is the leading large-J_c asymptotic 1/sqrt(2 pi J_c pi); exact is 0.03995
    assert anchor == pytest.approx(u * 0.03981, rel=5e-3)


def test_bessel_identity_by_dense_quadrature():
    # (1/2pi) int exp(-2 J_c sin^2 t) dt = e^{-J_c} I0(J_c), evaluated with 10^6 nodes
    t = 2 * np.pi * np.arange(1_000_000) / 1_000_000
    dense = np.exp(-64.0 * np.sin(t) ** 2).mean()
    assert dense == pytest.approx(i0e(32.0), rel=1e-13)


@settings(max_examples=100)
@given(st.floats(0, 100), st.floats(-math.pi, math.pi), st.sampled_from([-0.5, 0.1, 0.5]))
def test_interaction_matches_closed_form(J, phi, u):
    p = ModelParams(u, BETA)
    assert abs(avg_interaction(J, phi, p) - v_int_closed_form(J, phi, p)) < 1e-10


def test_quadrature_convergence_256_vs_4096():
    rng = np.random.default_rng(3)
    J = rng.uniform(0, 100, 100)
    phi = rng.uniform(-math.pi, math.pi, 100)
    p = ModelParams(0.5, BETA)
    assert np.max(np.abs(avg_interaction(J, phi, p, 256) - avg_interaction(J, phi, p, 4096))) < 1e-10


def test_interaction_rejects_negative_action():
    with pytest.raises(ValueError):
        avg_interaction(-1.0, 0.0, ModelParams(0.5, BETA))


# ---------------------------------------------------------------- symmetries


def test_tabulated_field_even_and_2pi_periodic(maps):
    pm = maps[0.5]
    H = pm.H_values
    n = len(pm.phi_grid)
    # phi_grid[i] = -pi + 2 pi (i+1)/n, so -phi_grid[i] sits at index n-2-i (mod n)
    mirror = H[(n - 2 - np.arange(n)) % n]
    assert np.max(np.abs(H - mirror)) < 1e-10
    direct = avg_hamiltonian(pm.J_grid[None, :], pm.phi_grid[:, None] + 2 * np.pi, pm.params)
    assert np.max(np.abs(H - direct)) < 1e-10


def test_field_is_not_pi_periodic():
    # documented counterexample: shifting phi by pi moves the packet to the far side of the orbit
    p = ModelParams(0.5, BETA)
    a = avg_hamiltonian(p.J_c, 0.0, p)
    b = avg_hamiltonian(p.J_c, math.pi, p)
    assert a - b == pytest.approx(0.5 / math.sqrt(math.pi) * (1 - i0e(4 * p.J_c)), rel=1e-10)
    assert abs(a - b) > 0.2


@settings(max_examples=50)
@given(st.floats(0, 96), st.floats(-math.pi, math.pi), st.floats(-0.5, 0.5), st.floats(-3e-4, 3e-4))
def test_sign_flip_negates_field(J, phi, u, beta):
    p = ModelParams(u, beta)
    assert avg_hamiltonian(J, phi, p.flipped()) == -avg_hamiltonian(J, phi, p)
    assert avg_hamiltonian(J, -phi, p) == pytest.approx(avg_hamiltonian(J, phi, p), abs=1e-14)


def test_u_zero_field_is_quadratic_in_J():
    p = ModelParams(0.0, BETA)
    J = np.linspace(0, 96, 961)
    for phi in (0.0, 1.3, math.pi):
        H = avg_hamiltonian(J, phi, p)
        assert J[np.argmin(H)] == 32.0
        assert H.min() == pytest.approx(-0.375 * BETA * 32**2, rel=1e-14)


@settings(max_examples=40)
@given(st.floats(0.5, 95), st.floats(-math.pi, math.pi), st.sampled_from(PORTRAIT_U))
def test_gradient_matches_finite_differences(J, phi, u):
    p = ModelParams(u, BETA)
    gJ, gphi = avg_hamiltonian_grad(J, phi, p)
    h = 1e-5
    fJ = (avg_hamiltonian(J + h, phi, p) - avg_hamiltonian(J - h, phi, p)) / (2 * h)
    fphi = (avg_hamiltonian(J, phi + h, p) - avg_hamiltonian(J, phi - h, p)) / (2 * h)
    assert float(gJ) == pytest.approx(fJ, abs=1e-8)
    assert float(gphi) == pytest.approx(fphi, abs=1e-8)


# ---------------------------------------------------------------- fixed points


def test_center_is_stationary():
    for u in PORTRAIT_U:
        p = ModelParams(u, BETA)
        gJ, gphi = avg_hamiltonian_grad(p.J_c, 0.0, p)
        assert abs(float(gJ)) < 1e-12 and abs(float(gphi)) < 1e-12


def test_u_zero_is_degenerate(maps):
    pm = maps[0.0]
    assert pm.fixed_points and all(fp.kind == DEGENERATE for fp in pm.fixed_points)
    assert pm.separatrix is None and pm.area == 0.0


def test_same_sign_topology(maps):
    pm = maps[0.5]
    c = [fp for fp in pm.fixed_points if fp.phi == 0.0 and abs(fp.J - 32) < 1e-6]
    assert len(c) == 1 and c[0].kind == ELLIPTIC
    hyp = [fp for fp in pm.fixed_points if fp.kind == HYPERBOLIC]
    assert hyp and all(fp.phi == 0.0 and abs(fp.J - 32) > 1 for fp in hyp)


@pytest.mark.parametrize("u", [-0.20, 0.5])
def test_fixed_points_against_brute_force_gradient_norm(u):
    """400 x 400 (J, phi) scan of the gradient norm; its local minima near the
    resonance band coincide with the located fixed points."""
    p = ModelParams(u, BETA)
    n = 400
    phi = -np.pi + 2 * np.pi * np.arange(n) / n
    J = np.linspace(0, 96, n + 1)[1:]
    H = avg_hamiltonian(J[None, :], phi[:, None], p)
    dphi = (np.roll(H, -1, axis=0) - np.roll(H, 1, axis=0)) / (4 * np.pi / n)
    dJ = np.gradient(H, J, axis=1)
    # norm in the canonical Cartesian chart
    g = np.sqrt(2 * J * dJ**2 + dphi**2 / (2 * J))
    is_min = (g == minimum_filter(g, size=5, mode=("wrap", "nearest"))) & (g < 0.02 * np.median(g))
    cand = [(phi[i], J[j]) for i, j in np.argwhere(is_min) if 4 < J[j] < 92]
    assert cand
    pts, _ = find_fixed_points(p)
    cell_phi, cell_J = 2 * np.pi / n, J[1] - J[0]
    for cphi, cJ in cand:
        d = [(abs(math.remainder(cphi - fp.phi, 2 * math.pi)) / cell_phi, abs(cJ - fp.J) / cell_J) for fp in pts]
        assert min(max(a, b) for a, b in d) <= 2.5, (cphi, cJ)
    if u < 0:
        # opposite signs: the saddle sits opposite the packet, at phi = pi, not at +-pi/2
        (hyp,) = [fp for fp in pts if fp.kind == HYPERBOLIC]
        assert hyp.phi == pytest.approx(math.pi) and abs(hyp.J - 32) < 1


def test_find_fixed_points_rejects_small_bound():
    with pytest.raises(ValueError):
        find_fixed_points(ModelParams(0.5, BETA), J_max=10.0)


# ---------------------------------------------------------------- separatrix


def test_separatrix_area_grows_with_ratio(maps):
    assert maps[0.5].area > maps[0.3].area > maps[0.10].area > 0
    assert maps[-0.20].area > maps[-0.02].area > 0


def test_separatrix_encloses_center_only_once(maps):
    for u in PORTRAIT_U:
        sep = maps[u].separatrix
        assert winding_number([[0.0, 32.0]], sep)[0] != 0
        assert np.all(sep[:, 1] >= 0)


@pytest.mark.parametrize("u", PORTRAIT_U)
def test_sign_flip_separatrix_identical(maps, u):
    a, b = maps[u], maps[-u, "flip"]
    assert [(fp.J, fp.phi, fp.kind) for fp in a.fixed_points] == [(fp.J, fp.phi, fp.kind) for fp in b.fixed_points]
    # marching squares may start and orient the loop differently; compare as point sets
    assert a.separatrix.shape == b.separatrix.shape
    d = max(directed_hausdorff(a.separatrix, b.separatrix)[0], directed_hausdorff(b.separatrix, a.separatrix)[0])
    assert d < 1e-9
    assert a.area == pytest.approx(b.area, rel=1e-12)


def test_polygon_helpers():
    sq = np.array([[0, 0], [2, 0], [2, 1], [0, 1], [0, 0]], float)
    assert polygon_area(sq) == 2.0
    assert list(winding_number([[1, 0.5], [3, 0.5], [1, 2]], sq)) == [1, 0, 0]
    strip = np.array([[-3.0, 10], [-3.0, 20], [3.0, 20], [3.0, 10]])
    assert list(inside_periodic([math.pi - 0.01, -math.pi + 0.01, 0.0], [15, 15, 25], strip)) == [False, False, False]
    wrap = np.array([[2.5, 10], [2.5, 20], [4.0, 20], [4.0, 10]])
    assert list(inside_periodic([-2.5, 2.8, 0.0], [15, 15, 15], wrap)) == [True, True, False]


# ---------------------------------------------------------------- confinement fraction


def test_F_without_separatrix_is_zero():
    assert confinement_fraction(ModelParams(0.0, BETA), None) == (0.0, 0.0)


def test_F_huge_box_is_one():
    box = np.array([[-math.pi, 0.0], [math.pi, 0.0], [math.pi, 200.0], [-math.pi, 200.0], [-math.pi, 0.0]])
    F, se = confinement_fraction(ModelParams(0.5, BETA), box, seed=1)
    assert F == 1.0 and se == 0.0


def test_F_orders_containment_cases(maps):
    F5, se5 = confinement_fraction(maps[0.5].params, maps[0.5].separatrix)
    F1, se1 = confinement_fraction(maps[0.1].params, maps[0.1].separatrix)
    F3, _ = confinement_fraction(maps[0.3].params, maps[0.3].separatrix)
    assert F5 - 3 * se5 > 0.9 > F1 + 3 * se1
    assert F1 <= F3 <= F5


def test_F_seed_reproducibility_and_spread(maps):
    pm = maps[0.1]
    a = confinement_fraction(pm.params, pm.separatrix, seed=5, n_samples=20_000)
    b = confinement_fraction(pm.params, pm.separatrix, seed=5, n_samples=20_000)
    assert a == b
    draws = np.array([confinement_fraction(pm.params, pm.separatrix, seed=s, n_samples=20_000)[0]
                      for s in range(20)])
    ref, _ = confinement_fraction(pm.params, pm.separatrix, seed=999, n_samples=400_000)
    se = math.sqrt(ref * (1 - ref) / 20_000)
    assert np.all(np.abs(draws - ref) < 3 * se + 3 * math.sqrt(ref * (1 - ref) / 400_000))
    assert 0.5 * se < draws.std(ddof=1) < 2 * se


# ---------------------------------------------------------------- F contour


FAST = dict(n_samples=20_000, n_phi=300, n_J=300)


def test_f_contour_sign_flip_point_symmetry():
    lines, us, bs, table, _ = f_contour((-0.5, 0.5), (-3e-4, 3e-4), 0.9, (5, 4), **FAST)
    assert np.allclose(us, -us[::-1]) and np.allclose(bs, -bs[::-1])
    assert np.max(np.abs(table - table[::-1, ::-1])) < 0.02
    assert lines


def test_f_contour_level_zero_is_empty():
    with pytest.warns(RuntimeWarning, match="never crosses"):
        lines, *_ = f_contour((0.1, 0.5), (1e-4, 3e-4), 0.0, (3, 3), **FAST)
    assert lines == []


def test_f_contour_rejects_bad_level():
    with pytest.raises(ValueError):
        f_contour((0.1, 0.5), (1e-4, 3e-4), 1.5, (3, 3), **FAST)


def test_f_contour_levels_against_transects():
    """The 0.5 contour lies on the poorly confined side of the 0.9 contour;
    oracle: F evaluated directly along five fixed-beta transects."""
    box_u, box_b = (0.02, 0.5), (1e-4, 3e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        l9, us, bs, table, _ = f_contour(box_u, box_b, 0.9, (7, 5), **FAST)
        l5, *_ = f_contour(box_u, box_b, 0.5, (7, 5), **FAST)
    du = us[1] - us[0]
    u_line = np.linspace(*box_u, 9)
    for beta in np.linspace(1.2e-4, 2.8e-4, 5):
        F = np.array([compute_F(ModelParams(u, beta), **FAST).F for u in u_line])
        assert np.all(np.diff(F) > -0.02)  # nondecreasing within Monte Carlo noise

        def crossing(level):
            i = np.nonzero(F >= level)[0][0]
            return np.interp(level, F[i - 1:i + 1], u_line[i - 1:i + 1]) if i else u_line[0]

        def contour_u(lines):
            hits = []
            for ln in lines:
                order = np.argsort(ln[:, 1])
                hits.append(np.interp(beta, ln[order, 1], ln[order, 0]))
            return min(hits)

        u9, u5 = contour_u(l9), contour_u(l5)
        assert u5 < u9
        assert abs(u9 - crossing(0.9)) < 1.5 * du
        if F[0] < 0.5:
            assert abs(u5 - crossing(0.5)) < 1.5 * du


# ---------------------------------------------------------------- exports


def test_exports(tmp_path, maps):
    pm = maps[0.5]
    write_H_csv(pm, tmp_path / "H.csv")
    with open(tmp_path / "H.csv") as fh:
        assert fh.readline().strip() == "phi,J,H"
    data = np.loadtxt(tmp_path / "H.csv", delimiter=",", skiprows=1)
    assert data.shape == (600 * 600, 3)
    write_phase_map_json(pm, tmp_path / "m.json", 0.96, 0.001)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["separatrix"]["saddle"]["type"] == HYPERBOLIC
    assert doc["separatrix"]["area"] == pytest.approx(pm.area)
    assert phase_map_summary(maps[0.0])["separatrix"] is None
    write_F_csv([FResult(0.5, 2e-4, 0.96, 0.001, 10.7)], tmp_path / "F.csv")
    assert (tmp_path / "F.csv").read_text() == "u,beta,F,stderr\n0.5,0.0002,0.96,0.001\n"
