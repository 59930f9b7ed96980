import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from eigenmass.closed_form import (
    beam_log_norm, disk_mode, discrete_mode, rectangle_mode, rectangle_modes_in_band, sphere_highest_weight,
)
from eigenmass.discrete_solver import assemble, solve_near
from eigenmass.geometry import UNIT_DISK, UNIT_SQUARE, build_grid
from eigenmass.mass_analysis import (
    MASS_PROFILE_COLUMNS, SWEEP_COLUMNS, THM2_COLUMNS, ball_mass, boundary_layer_diagnostic, default_grid,
    fit_power_law, geometric_mus, h_sobolev_norm, lattice_centers, mass_profile, nonconcentration_sweep,
    read_csv_rows, sup_norm, thm2_ratio, write_mass_profile_csv, write_sweep_summary_csv, write_thm2_csv,
)
from oracles import beam_cap_mass_oracle, cartesian_ball_integral

CONST = rectangle_mode(0, 0, "n")
EQUATOR = (1.0, 0.0, 0.0)


def brute_force_mass(f, x0, mu, n=1000):
    """Midpoint rule on an n×n (10⁶-point) grid over the bounding box of B(x0, mu) ∩ [0,1]²."""
    lo = np.maximum(np.asarray(x0) - mu, 0.0)
    hi = np.minimum(np.asarray(x0) + mu, 1.0)
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 <= mu * mu
    cell = (hi[0] - lo[0]) * (hi[1] - lo[1]) / n ** 2
    return float(np.sum(f(X, Y) * inside) * cell)


def whispering_mass_oracle(mode, mu):
    """Mass of disk_mode(m, k, cos) in B((1,0), mu) ∩ disk.

    In polar coordinates about the origin the ball cuts each circle r in the arc
    |θ| <= Θ(r) with cos Θ = (r² + 1 − μ²)/(2r), and ∫ cos²(mθ) over it is
    Θ + sin(2mΘ)/(2m); the remaining radial integral is done by adaptive quadrature.
    """
    m = mode.params["m"]

    def radial(r):
        return float(mode.density(np.array([[r, 0.0]]))[0])

    def integrand(r):
        c = (r * r + 1 - mu * mu) / (2 * r)
        big = math.acos(max(-1.0, min(1.0, c)))
        return radial(r) * r * (big + math.sin(2 * m * big) / (2 * m))

    val, _ = integrate.quad(integrand, 1 - mu, 1.0, limit=400, epsabs=1e-14, epsrel=1e-11)
    return val


# ---------------------------------------------------------------------------
# ball_mass examples
# ---------------------------------------------------------------------------

def test_constant_mode_interior_mass():
    assert ball_mass(CONST, (0.4, 0.6), 0.1).mass == pytest.approx(math.pi * 0.01, rel=1e-2)
    g = default_grid(UNIT_SQUARE.kind)
    assert ball_mass(CONST, (0.4, 0.6), 0.1, grid=g).mass == pytest.approx(math.pi * 0.01, rel=1e-2)


def test_ground_state_mass_matches_brute_force():
    mode = rectangle_mode(1, 1, "d")
    ref = brute_force_mass(lambda x, y: 4 * np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2, (0.5, 0.5), 0.25)
    assert ball_mass(mode, (0.5, 0.5), 0.25).mass == pytest.approx(ref, rel=1e-2)
    g = default_grid(UNIT_SQUARE.kind)
    assert ball_mass(mode, (0.5, 0.5), 0.25, grid=g).mass == pytest.approx(ref, rel=1e-2)


def test_beam_cap_mass_matches_band_oracle():
    mode = sphere_highest_weight(100)
    ref = beam_cap_mass_oracle(100, math.pi / 2, 0.2)
    assert ball_mass(mode, EQUATOR, 0.2).mass == pytest.approx(ref, rel=1e-2)
    # the grid route agrees too
    g = default_grid(mode.domain.kind)
    assert ball_mass(mode, EQUATOR, 0.2, grid=g).mass == pytest.approx(ref, rel=1e-2)


def test_under_resolved_radius_flagged():
    g = build_grid(UNIT_SQUARE, 64)
    mode = rectangle_mode(2, 3, "d")
    assert ball_mass(mode, (0.5, 0.5), 3 * g.spacing, grid=g).under_resolved
    assert not ball_mass(mode, (0.5, 0.5), 5 * g.spacing, grid=g).under_resolved


def test_ball_mass_rejects_bad_input():
    with pytest.raises(ValueError):
        ball_mass(CONST, (0.5, 0.5), 0.0)
    with pytest.raises(ValueError):
        ball_mass(CONST, (1.5, 0.5), 0.1)


@pytest.mark.parametrize("mode, x0", [(rectangle_mode(3, 5, "d"), (0.31, 0.72)), (rectangle_mode(4, 1, "n"), (0.0, 0.2)),
                                      (disk_mode(6, 2, "n"), (0.3, -0.2)), (disk_mode(2, 3, "d"), (0.0, 1.0))])
def test_quadrature_consistency_under_refinement(mode, x0):
    coarse = build_grid(mode.domain, 128)
    fine = build_grid(mode.domain, 256)
    for mu in (8 * coarse.spacing, 0.2, 0.45):
        a = ball_mass(mode, x0, mu, grid=coarse).mass
        b = ball_mass(mode, x0, mu, grid=fine).mass
        assert a == pytest.approx(b, rel=1e-2)


def test_polar_route_agrees_with_cartesian_quadrature():
    mode = rectangle_mode(3, 2, "n")
    ref = cartesian_ball_integral(lambda x, y: float(mode.density(np.array([x, y]))), (0.9, 0.05), 0.3)
    assert ball_mass(mode, (0.9, 0.05), 0.3).mass == pytest.approx(ref, rel=1e-8)


# ---------------------------------------------------------------------------
# mass_profile
# ---------------------------------------------------------------------------

def test_constant_mode_area_scaling():
    prof = mass_profile(CONST, (0.5, 0.5), geometric_mus(0.01, 0.4, 10))
    assert prof.exponent == pytest.approx(2.0, abs=0.05)
    assert np.allclose(prof.masses, math.pi * prof.mus ** 2, rtol=1e-10)


def _beam_profile(n):
    mode = sphere_highest_weight(n)
    mus = geometric_mus(math.sqrt(mode.h), 0.5, 10)
    return mode, mus, mass_profile(mode, EQUATOR, mus)


def test_beam_profile_matches_band_oracle():
    mode, mus, prof = _beam_profile(400)
    ref = np.array([beam_cap_mass_oracle(400, math.pi / 2, m) for m in mus])
    assert np.allclose(prof.masses, ref, rtol=1e-6)
    assert prof.exponent == pytest.approx(fit_power_law(mus, ref)[0], abs=1e-4)


def test_beam_exponent_near_one():
    _, _, prof = _beam_profile(400)
    assert abs(prof.exponent - 1.0) <= 0.1


def test_whispering_gallery_profile_matches_oracle():
    mode = disk_mode(50, 1, "d")
    mus = geometric_mus(5 * mode.h, 0.5, 10)
    prof = mass_profile(mode, (1.0, 0.0), mus)
    ref = np.array([whispering_mass_oracle(mode, m) for m in mus])
    assert np.allclose(prof.masses, ref, rtol=1e-6)


def test_whispering_gallery_exponent_window():
    mode = disk_mode(50, 1, "d")
    prof = mass_profile(mode, (1.0, 0.0), geometric_mus(5 * mode.h, 0.5, 10))
    assert 0.9 <= prof.exponent <= 1.3


def test_profile_rejects_bad_radii():
    mode = rectangle_mode(2, 2, "d")
    with pytest.raises(ValueError, match="at least 8"):
        mass_profile(mode, (0.5, 0.5), geometric_mus(0.2, 0.5, 5))
    with pytest.raises(ValueError, match="geometric"):
        mass_profile(mode, (0.5, 0.5), np.linspace(0.2, 0.5, 9))
    with pytest.raises(ValueError, match=r"\[h, diam\]"):
        mass_profile(mode, (0.5, 0.5), geometric_mus(0.5 * mode.h, 0.5, 9))
    with pytest.raises(ValueError, match=r"\[h, diam\]"):
        mass_profile(mode, (0.5, 0.5), geometric_mus(0.2, 2.0, 9))


def test_discrete_profile_flags_small_radii():
    grid = build_grid(UNIT_SQUARE, 64)
    b = solve_near(assemble(grid, "d"), 300.0, 1)
    mode = b.mode(0)
    prof = mass_profile(mode, (0.5, 0.5), geometric_mus(mode.h, 1.0, 10))
    assert prof.method == "grid"
    assert np.array_equal(prof.flags, prof.mus < 4 * grid.spacing)
    assert prof.window[0] == pytest.approx(max(prof.mus[0], 3 * mode.h))


@given(x=st.floats(0, 1), y=st.floats(0, 1), j=st.integers(1, 6), k=st.integers(1, 6))
def test_profile_monotone_and_total_mass(x, y, j, k):
    mode = rectangle_mode(j, k, "d")
    mus = geometric_mus(mode.h, math.sqrt(2), 8)
    prof = mass_profile(mode, (x, y), mus)
    assert prof.monotone
    assert prof.masses[-1] == pytest.approx(1.0, abs=1e-3)


@given(x=st.floats(-0.7, 0.7), y=st.floats(-0.7, 0.7))
def test_grid_profile_monotone_and_total_mass(x, y):
    mode = disk_mode(4, 2, "n", "sin")
    g = build_grid(UNIT_DISK, 128)
    prof = mass_profile(mode, (x, y), geometric_mus(mode.h, 2.0, 8), grid=g)
    assert prof.monotone
    assert prof.masses[-1] == pytest.approx(1.0, abs=1e-3)


def test_sharpness_lower_regime():
    """Over μ ∈ [h, h^{2/3}] the beam profile should stay above one fixed c·h^{1/2}; c is taken
    as half the smallest value of M(μ)/h^{1/2} at n = 100."""
    floors = {}
    for n in (100, 200, 400):
        mode = sphere_highest_weight(n)
        h = mode.h
        mus = geometric_mus(h, h ** (2 / 3), 8)
        floors[n] = min(ball_mass(mode, EQUATOR, m).mass for m in mus) / math.sqrt(h)
    c = 0.5 * floors[100]
    assert all(floors[n] >= c for n in (200, 400)), floors


# ---------------------------------------------------------------------------
# nonconcentration_sweep
# ---------------------------------------------------------------------------

def test_constant_mode_sweep():
    mus = geometric_mus(0.02, 0.4, 8)
    rows = nonconcentration_sweep([CONST], [(0.5, 0.5), (0.45, 0.52)], mus)
    assert rows[0].K == pytest.approx(math.pi * 0.4, rel=1e-10)
    assert rows[0].K <= math.pi


def test_beam_sweep_constants_stable():
    ks = []
    for n in (100, 200, 400):
        mode = sphere_highest_weight(n)
        mus = geometric_mus(mode.h, 0.5, 12)
        row = nonconcentration_sweep([mode], [EQUATOR], mus)[0]
        ref = max(beam_cap_mass_oracle(n, math.pi / 2, m) / m for m in mus)
        assert row.K == pytest.approx(ref, rel=1e-6)
        ks.append(row.K)
    assert max(ks) / min(ks) < 1.25


def test_square_dirichlet_sweep_bounded():
    modes = rectangle_modes_in_band(1, 2000, "d")
    grid = build_grid(UNIT_SQUARE, 256)
    centers = [(0.5, 0.5), (0.25, 0.75), (0.0, 0.5), (0.02, 0.5), (0.0, 0.0), (0.5, 1.0), (0.97, 0.13)]
    mus = geometric_mus(1 / math.sqrt(2000), 0.5, 10)
    rows = nonconcentration_sweep(modes, centers, mus, grid=grid, mu_floor="h")
    assert max(r.K for r in rows) <= 4
    # the worst entry, recomputed by brute force
    worst = max(rows, key=lambda r: r.K)
    mode = next(m for m in modes if m.mode_id == worst.mode_id)
    ref = brute_force_mass(lambda x, y: mode.density(np.stack([x, y], axis=-1)), worst.center, worst.mu)
    assert worst.K == pytest.approx(ref / worst.mu, rel=1e-2)


def test_sweep_respects_h_floor():
    mode = rectangle_mode(1, 1, "d")
    mus = geometric_mus(0.01, 0.5, 10)
    row = nonconcentration_sweep([mode], [(0.5, 0.5)], mus)[0]
    assert row.mu >= mode.h * (1 - 1e-9)
    with pytest.raises(ValueError):
        nonconcentration_sweep([mode], [(0.5, 0.5)], geometric_mus(0.01, 0.1, 8))


# ---------------------------------------------------------------------------
# sup_norm
# ---------------------------------------------------------------------------

def test_ground_state_sup():
    val, pt = sup_norm(rectangle_mode(1, 1, "d"))
    assert val == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(pt, (0.5, 0.5), atol=1e-4)


def test_constant_sup():
    assert sup_norm(CONST)[0] == pytest.approx(1.0, abs=1e-12)


def test_beam_sup_is_norm_constant():
    n = 100
    val, pt = sup_norm(sphere_highest_weight(n))
    assert val == pytest.approx(math.exp(beam_log_norm(n)), rel=1e-6)
    assert abs(pt[2]) <= 1e-3


def test_sup_refinement_beats_node_maximum():
    mode = disk_mode(7, 3, "d")
    g = build_grid(UNIT_DISK, 64)
    coarse = sup_norm(mode, g, refine=False)[0]
    fine = sup_norm(mode, g)[0]
    assert fine >= coarse
    assert fine == pytest.approx(sup_norm(mode, build_grid(UNIT_DISK, 512))[0], rel=1e-6)


# ---------------------------------------------------------------------------
# thm2_ratio
# ---------------------------------------------------------------------------

def test_thm2_constant_mode_rejected():
    with pytest.raises(ValueError):
        thm2_ratio(CONST)


def test_thm2_ground_state_matches_brute_force():
    mode = rectangle_mode(1, 1, "d")
    h = mode.h
    centers = np.concatenate([lattice_centers(UNIT_SQUARE.kind, h / 2), [[0.5, 0.5]]])
    rep = thm2_ratio(mode, centers=centers)
    assert rep.supnorm == pytest.approx(2.0, rel=1e-4)
    s_h = math.sqrt(cartesian_ball_integral(
        lambda x, y: 4 * math.sin(math.pi * x) ** 2 * math.sin(math.pi * y) ** 2, (0.5, 0.5), h))
    assert rep.argmax_center == pytest.approx((0.5, 0.5))
    assert rep.ratio == pytest.approx(2.0 / (s_h / h), rel=1e-2)
    assert rep.ratio > 0


def test_thm2_sparse_centers_rejected():
    mode = rectangle_mode(3, 3, "d")
    with pytest.raises(ValueError, match="sparse"):
        thm2_ratio(mode, centers=lattice_centers(UNIT_SQUARE.kind, mode.h))


def test_thm2_square_sweep_band():
    grid = build_grid(UNIT_SQUARE, 128)
    modes = rectangle_modes_in_band(100, 2000, "d")[::12]
    ratios = [thm2_ratio(m, grid).ratio for m in modes]
    assert len(ratios) >= 10
    assert min(ratios) > 0
    assert max(ratios) / min(ratios) <= 3


def test_thm2_uses_one_grid():
    grid = build_grid(UNIT_SQUARE, 96)
    rep = thm2_ratio(rectangle_mode(2, 5, "n"), grid)
    vals = rectangle_mode(2, 5, "n").values_on(grid)
    assert rep.supnorm == pytest.approx(np.max(np.abs(vals)), rel=1e-14)
    assert rep.pitch == pytest.approx(rep.h / 2)


# ---------------------------------------------------------------------------
# h-Sobolev norms
# ---------------------------------------------------------------------------

def test_sobolev_constant_mode():
    assert h_sobolev_norm(CONST, 1) == pytest.approx(1.0, abs=1e-12)


def test_sobolev_ground_state_order_one():
    assert h_sobolev_norm(rectangle_mode(1, 1, "d"), 1) == pytest.approx(2.0, rel=2e-2)


def _exact_h2(j, k):
    """Exact ‖φ‖²_{H²_h}: terms 1, h²λ² = 1 and h⁴(a⁴ + a²b² + b⁴) with a = jπ, b = kπ,
    each multi-index counted once."""
    a, b = j * math.pi, k * math.pi
    lam2 = a * a + b * b
    return 1 + 1 + (a ** 4 + a * a * b * b + b ** 4) / lam2 ** 2


def test_sobolev_order_two_band():
    vals = []
    for mode in rectangle_modes_in_band(1, 2000, "d")[::7]:
        v = h_sobolev_norm(mode, 2)
        j, k = mode.params["j"], mode.params["k"]
        assert v == pytest.approx(_exact_h2(j, k), rel=3e-2)
        vals.append(v)
    assert 1 <= min(vals) and max(vals) <= 6


def test_sobolev_rejections():
    with pytest.raises(ValueError):
        h_sobolev_norm(rectangle_mode(1, 1, "d"), 3)
    with pytest.raises(ValueError):
        h_sobolev_norm(rectangle_mode(40, 40, "d"), 1)
    with pytest.raises(ValueError):
        h_sobolev_norm(disk_mode(1, 1, "d"), 1)


# ---------------------------------------------------------------------------
# boundary layer
# ---------------------------------------------------------------------------

def test_layer_rectangle():
    rep = boundary_layer_diagnostic(rectangle_mode(1, 12, "d"), "bottom")
    assert rep.ratio <= 1.1
    assert rep.width == pytest.approx(math.pi * rectangle_mode(1, 12, "d").h / 8)


def test_layer_whispering_gallery():
    assert boundary_layer_diagnostic(disk_mode(50, 1, "d")).ratio <= 1.1


def test_layer_discrete_mode():
    # the layer πh/8 ≈ 0.0104 needs Δ <= width/4
    grid = build_grid(UNIT_SQUARE, 512)
    b = solve_near(assemble(grid, "d"), rectangle_mode(1, 12, "d").eigenvalue, 1)
    rep = boundary_layer_diagnostic(b.mode(0), "bottom")
    assert rep.layers >= 4
    assert rep.ratio <= 1.1


def test_layer_rejections():
    with pytest.raises(ValueError):
        boundary_layer_diagnostic(CONST)
    with pytest.raises(ValueError):
        boundary_layer_diagnostic(sphere_highest_weight(10))
    with pytest.raises(ValueError):
        boundary_layer_diagnostic(rectangle_mode(1, 2, "d"), layers=3)
    # a coarse discrete grid cannot resolve the πh/8 layer
    grid = build_grid(UNIT_SQUARE, 32)
    b = solve_near(assemble(grid, "d"), 2000.0, 1)
    with pytest.raises(ValueError, match="rows"):
        boundary_layer_diagnostic(b.mode(0), "bottom")


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def test_csv_columns_and_round_trip(tmp_path):
    mode = rectangle_mode(2, 3, "d")
    prof = mass_profile(mode, (0.5, 0.5), geometric_mus(mode.h, 0.5, 8))
    p = write_mass_profile_csv([prof], tmp_path / "mass_profile.csv")
    with open(p, newline="") as fh:
        assert tuple(next(csv.reader(fh))) == MASS_PROFILE_COLUMNS
    rows = read_csv_rows(p)
    assert len(rows) == 8
    assert [float(r["mass"]) for r in rows] == pytest.approx(prof.masses.tolist(), rel=1e-11)

    rep = thm2_ratio(mode, build_grid(UNIT_SQUARE, 64))
    p = write_thm2_csv([rep], tmp_path / "thm2.csv")
    with open(p, newline="") as fh:
        assert tuple(next(csv.reader(fh))) == THM2_COLUMNS

    rows = nonconcentration_sweep([mode], [(0.5, 0.5)], geometric_mus(mode.h, 0.5, 8))
    p = write_sweep_summary_csv(rows, tmp_path / "sweep_summary.csv")
    with open(p, newline="") as fh:
        assert tuple(next(csv.reader(fh))) == SWEEP_COLUMNS


def test_discrete_mode_grid_mass_equals_closed_form():
    grid = build_grid(UNIT_SQUARE, 128)
    mode = rectangle_mode(2, 2, "d")  # non-degenerate, so the discrete vector is unambiguous
    b = solve_near(assemble(grid, "d"), mode.eigenvalue, 1)
    disc = discrete_mode(grid, b.vectors[:, 0], b.eigenvalues[0], "d")
    a = ball_mass(disc, (0.3, 0.4), 0.2).mass
    c = ball_mass(mode, (0.3, 0.4), 0.2).mass
    assert a == pytest.approx(c, rel=2e-2)
