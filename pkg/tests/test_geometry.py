import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigenmass.geometry import (
    GRID_MAGIC, SPHERE_S2, UNIT_BALL3, UNIT_DISK, UNIT_SQUARE, Domain, DomainKind, ball_region,
    build_grid, cached_grid, fermi_coordinates, fermi_to_points, geodesic_distance, load_grid,
    region_matrix, save_grid,
)

from conftest import slope


def lens_area_monte_carlo(center, mu, samples=10_000_000, seed=3):
    """Area of B(center, mu) ∩ unit disk by uniform sampling of the bounding square."""
    rng = np.random.default_rng(seed)
    cx, cy = center
    hits = 0
    chunk = 1_000_000
    for _ in range(samples // chunk):
        p = rng.uniform(-mu, mu, size=(chunk, 2))
        inside_ball = p[:, 0] ** 2 + p[:, 1] ** 2 <= mu * mu
        inside_disk = (p[:, 0] + cx) ** 2 + (p[:, 1] + cy) ** 2 <= 1.0
        hits += int(np.count_nonzero(inside_ball & inside_disk))
    return 4 * mu * mu * hits / samples


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("domain, dim, boundary", [
    (UNIT_SQUARE, 2, True), (UNIT_DISK, 2, True), (SPHERE_S2, 2, False), (UNIT_BALL3, 3, True),
])
def test_domain_dimension_and_boundary(domain, dim, boundary):
    assert domain.dimension == dim
    assert domain.boundary_present is boundary


def test_domain_from_string():
    assert Domain("disk").kind is DomainKind.UNIT_DISK
    with pytest.raises(ValueError):
        Domain("torus")


# ---------------------------------------------------------------------------
# build_grid
# ---------------------------------------------------------------------------

def test_square_grid_100():
    g = build_grid(UNIT_SQUARE, 100)
    assert g.size == 101 * 101
    assert g.shape == (101, 101)
    assert g.spacing == pytest.approx(0.01, abs=1e-15)
    assert abs(g.weights.sum() - 1.0) <= 1e-12


def test_sphere_grid_area():
    g = build_grid(SPHERE_S2, 64)
    assert abs(g.weights.sum() - 4 * math.pi) <= 4 * math.pi * 1e-3


def test_disk_grid_area():
    # oracle: the analytic area π of the unit disk
    g = build_grid(UNIT_DISK, 128)
    assert abs(g.weights.sum() - math.pi) <= math.pi * 1e-3


def test_ball_grid_volume():
    g = build_grid(UNIT_BALL3, 32)
    assert g.weights.sum() == pytest.approx(4 * math.pi / 3, rel=1e-3)


@pytest.mark.parametrize("kind", list(DomainKind))
def test_grid_post_conditions(kind):
    res = 32
    g = build_grid(kind, res)
    d = Domain(kind)
    assert g.spacing == pytest.approx(d.diameter / res, rel=0.5)
    count = res ** d.dimension
    assert count / 2 <= g.size <= 2 * count
    g2 = build_grid(kind, res)
    assert np.array_equal(g.nodes, g2.nodes) and np.array_equal(g.weights, g2.weights)


@pytest.mark.parametrize("res", [0, 7, -3])
def test_resolution_below_eight_rejected(res):
    with pytest.raises(ValueError, match="resolution"):
        build_grid(UNIT_SQUARE, res)


@pytest.mark.parametrize("kind", [DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK, DomainKind.UNIT_BALL3])
def test_boundary_nodes_on_boundary(kind):
    g = build_grid(kind, 64)
    b = g.nodes[g.is_boundary]
    assert len(b) > 0
    if kind is DomainKind.UNIT_SQUARE:
        gap = np.min(np.stack([b[:, 0], 1 - b[:, 0], b[:, 1], 1 - b[:, 1]]), axis=0)
        assert np.max(np.abs(gap)) <= 1e-12
    else:
        assert np.max(np.abs(np.linalg.norm(b, axis=1) - 1.0)) <= 1e-12
    # interior nodes are strictly inside
    inner = g.nodes[~g.is_boundary]
    assert np.all(Domain(kind).contains(inner))


def test_sphere_has_no_boundary_nodes():
    assert not build_grid(SPHERE_S2, 32).is_boundary.any()


# ---------------------------------------------------------------------------
# ball_region
# ---------------------------------------------------------------------------

def test_interior_ball_weight():
    g = build_grid(UNIT_SQUARE, 256)
    reg = ball_region(g, (0.5, 0.5), 0.1)
    assert reg.weight_sum == pytest.approx(math.pi * 0.01, rel=0.01)
    assert not reg.under_resolved


def test_half_ball_at_flat_boundary():
    g = build_grid(UNIT_SQUARE, 256)
    reg = ball_region(g, (0.5, 0.0), 0.1)
    assert reg.weight_sum == pytest.approx(math.pi * 0.01 / 2, rel=0.01)


def test_disk_lens_matches_monte_carlo():
    g = build_grid(UNIT_DISK, 256)
    reg = ball_region(g, (1.0, 0.0), 0.2)
    oracle = lens_area_monte_carlo((1.0, 0.0), 0.2)
    assert reg.weight_sum == pytest.approx(oracle, rel=0.01)


def test_included_nodes_within_radius_of_cells():
    g = build_grid(UNIT_DISK, 64)
    x0, mu = np.array([0.3, -0.2]), 0.25
    reg = ball_region(g, x0, mu)
    d = np.linalg.norm(g.nodes[reg.node_indices] - x0, axis=1)
    # a node may sit just outside B when its cell straddles the sphere
    assert np.all(d <= mu + g.cell_radius[reg.node_indices] + 1e-12)
    full = reg.clipped_weights >= g.weights[reg.node_indices] * (1 - 1e-12)
    assert np.all(d[full] <= mu + 1e-12)


def test_sphere_region_is_geodesic():
    g = build_grid(SPHERE_S2, 128)
    mu = 0.4
    reg = ball_region(g, (0, 0, 1), mu)
    assert reg.weight_sum == pytest.approx(2 * math.pi * (1 - math.cos(mu)), rel=0.01)


def test_center_outside_rejected():
    g = build_grid(UNIT_SQUARE, 32)
    with pytest.raises(ValueError, match="outside"):
        ball_region(g, (1.2, 0.5), 0.1)
    with pytest.raises(ValueError):
        ball_region(g, (0.5, 0.5), 0.0)
    with pytest.raises(ValueError):
        ball_region(g, (0.5, 0.5), 2.0)


def test_small_radius_flagged_not_failed():
    g = build_grid(UNIT_SQUARE, 32)
    reg = ball_region(g, (0.5, 0.5), 1.5 * g.spacing)
    assert reg.under_resolved
    assert reg.weight_sum > 0


def test_clipped_weight_converges_at_first_order(rng):
    # worst case over many centers: a single center can sit on a lucky cancellation
    centers = rng.uniform(0.25, 0.75, size=(40, 2))
    mu = 0.17
    exact = math.pi * mu * mu
    res = [32, 64, 128, 256]
    errs = []
    for r in res:
        w = np.asarray(region_matrix(build_grid(UNIT_SQUARE, r), centers, [mu]).sum(axis=1)).ravel()
        errs.append(np.max(np.abs(w - exact)))
    assert slope([1 / r for r in res], errs) >= 1.0


def test_lens_weight_converges_at_first_order():
    # oracle: closed-form lens area of B((1,0), mu) ∩ unit disk
    mu = 0.2
    d = 1.0
    a = mu * mu * math.acos((d * d + mu * mu - 1) / (2 * d * mu)) + math.acos((d * d + 1 - mu * mu) / (2 * d)) \
        - 0.5 * math.sqrt((-d + mu + 1) * (d + mu - 1) * (d - mu + 1) * (d + mu + 1))
    res = [32, 64, 128, 256]
    errs = [abs(ball_region(build_grid(UNIT_DISK, r), (1.0, 0.0), mu).weight_sum - a) for r in res]
    assert errs[-1] <= 0.01 * a
    assert slope([1 / r for r in res], errs) >= 1.0


def test_interior_quadrature_second_order():
    # smooth integrand over the whole disk: ∫ exp(x) dA = 2π I₁(1) (closed form)
    from scipy.special import i1

    exact = 2 * math.pi * i1(1.0)
    res = [16, 32, 64]
    errs = []
    for r in res:
        g = build_grid(UNIT_DISK, r)
        errs.append(abs(np.dot(g.weights, np.exp(g.nodes[:, 0])) - exact))
    assert slope([1 / r for r in res], errs) >= 2.0
    # square: trapezoid rule
    exact = (math.e - 1) ** 2
    errs = []
    for r in res:
        g = build_grid(UNIT_SQUARE, r)
        errs.append(abs(np.dot(g.weights, np.exp(g.nodes[:, 0] + g.nodes[:, 1])) - exact))
    assert slope([1 / r for r in res], errs) >= 2.0


def test_region_matrix_rows_match_ball_region():
    g = build_grid(UNIT_DISK, 48)
    centers = [(0.0, 0.0), (0.6, 0.0), (0.0, -1.0)]
    mus = [0.1, 0.3]
    mat = region_matrix(g, centers, mus).toarray()
    for i, c in enumerate(centers):
        for j, mu in enumerate(mus):
            reg = ball_region(g, c, mu)
            row = np.zeros(g.size)
            row[reg.node_indices] = reg.clipped_weights
            assert np.allclose(mat[i * len(mus) + j], row, atol=0, rtol=1e-14)


_square_grid = build_grid(UNIT_SQUARE, 48)
_disk_grid = build_grid(UNIT_DISK, 48)


@given(x=st.floats(0, 1), y=st.floats(0, 1), a=st.floats(0.01, 1.4), b=st.floats(0.01, 1.4))
def test_ball_monotone_in_radius(x, y, a, b):
    lo, hi = sorted((a, b))
    w1 = ball_region(_square_grid, (x, y), lo).weight_sum
    w2 = ball_region(_square_grid, (x, y), hi).weight_sum
    assert w1 <= w2 + 1e-15


@given(r=st.floats(0, 1), t=st.floats(0, 2 * math.pi), mu=st.floats(0.05, 0.8))
def test_disk_rotation_symmetry(r, t, mu):
    # the polar grid rotated by t sees the rotated center exactly as the unrotated grid sees the original
    steps = _disk_grid.axes["theta"]
    rot = build_grid(UNIT_DISK, 48, rotation=t)
    c0 = np.array([r, 0.0])
    ct = r * np.array([math.cos(t), math.sin(t)])
    w0 = ball_region(_disk_grid, c0, mu).weight_sum
    wt = ball_region(rot, ct, mu).weight_sum
    assert len(steps) > 0
    assert abs(w0 - wt) <= 1e-10


def test_sphere_rotation_symmetry():
    g0 = build_grid(SPHERE_S2, 48)
    t = 0.7
    g1 = build_grid(SPHERE_S2, 48, rotation=t)
    p = np.array([math.sin(1.0), 0.0, math.cos(1.0)])
    q = np.array([math.sin(1.0) * math.cos(t), math.sin(1.0) * math.sin(t), math.cos(1.0)])
    assert abs(ball_region(g0, p, 0.3).weight_sum - ball_region(g1, q, 0.3).weight_sum) <= 1e-10


# ---------------------------------------------------------------------------
# geodesic distance
# ---------------------------------------------------------------------------

def test_geodesic_examples():
    assert geodesic_distance(SPHERE_S2, (0, 0, 1), (0, 0, 1)) == 0.0
    assert geodesic_distance(SPHERE_S2, (1, 0, 0), (0, 1, 0)) == pytest.approx(math.pi / 2, abs=1e-15)
    assert geodesic_distance(UNIT_SQUARE, (0, 0), (1, 1)) == pytest.approx(math.sqrt(2), abs=1e-15)


@given(st.floats(-math.pi, math.pi), st.floats(0, math.pi), st.floats(-math.pi, math.pi), st.floats(0, math.pi))
def test_geodesic_is_arccos_of_dot(p1, t1, p2, t2):
    a = np.array([math.sin(t1) * math.cos(p1), math.sin(t1) * math.sin(p1), math.cos(t1)])
    b = np.array([math.sin(t2) * math.cos(p2), math.sin(t2) * math.sin(p2), math.cos(t2)])
    expected = math.acos(max(-1.0, min(1.0, float(a @ b))))
    # arccos loses accuracy near 0 and pi, so compare with a matching tolerance
    assert geodesic_distance(SPHERE_S2, a, b) == pytest.approx(expected, abs=1e-7)


# ---------------------------------------------------------------------------
# Fermi coordinates
# ---------------------------------------------------------------------------

def test_fermi_disk():
    f = fermi_coordinates(UNIT_DISK, (0.9, 0.0))
    assert f.tangential == pytest.approx(0.0) and f.normal == pytest.approx(0.1)


def test_fermi_square():
    f = fermi_coordinates(UNIT_SQUARE, (0.5, 0.02))
    assert f.face == "bottom" and f.tangential == 0.5 and f.normal == pytest.approx(0.02)
    assert not f.tie


def test_fermi_ball():
    f = fermi_coordinates(UNIT_BALL3, (0, 0, 0.75))
    assert f.tangential == (0.0, 0.0, 1.0) and f.normal == pytest.approx(0.25)


def test_fermi_square_tie_flagged():
    f = fermi_coordinates(UNIT_SQUARE, (0.1, 0.1))
    assert f.tie and f.face == "bottom"


def test_fermi_sphere_rejected():
    with pytest.raises(ValueError):
        fermi_coordinates(SPHERE_S2, (0, 0, 1))


@given(t=st.floats(-math.pi, math.pi), xn=st.floats(0, 0.99))
def test_fermi_round_trip_disk(t, xn):
    p = fermi_to_points(UNIT_DISK, t, xn)
    f = fermi_coordinates(UNIT_DISK, p)
    assert f.normal == pytest.approx(xn, abs=1e-12)
    back = fermi_to_points(UNIT_DISK, f.tangential, f.normal)
    assert np.allclose(back, p, atol=1e-12)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def test_grid_cache_round_trip(tmp_path):
    g = build_grid(UNIT_DISK, 32)
    path = save_grid(g, tmp_path / "g.emgrid")
    assert path.read_bytes().startswith(GRID_MAGIC)
    g2 = load_grid(path)
    for name in ("nodes", "weights", "boundary_flags", "native", "cell_lo", "cell_hi"):
        assert np.array_equal(getattr(g, name), getattr(g2, name))
    assert g2.spacing == g.spacing and g2.shape == g.shape


def test_grid_cache_header_mismatch(tmp_path):
    path = save_grid(build_grid(UNIT_SQUARE, 16), tmp_path / "g.emgrid")
    with pytest.raises(ValueError, match="resolution"):
        load_grid(path, resolution=32)
    with pytest.raises(ValueError):
        load_grid(path, domain=UNIT_DISK)
    bad = tmp_path / "bad.emgrid"
    bad.write_bytes(b"NOTAGRID" + path.read_bytes()[8:])
    with pytest.raises(ValueError, match="magic"):
        load_grid(bad)


def test_cached_grid_reuses_file(tmp_path):
    g1 = cached_grid(UNIT_SQUARE, 24, tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    g2 = cached_grid(UNIT_SQUARE, 24, tmp_path)
    assert np.array_equal(g1.nodes, g2.nodes)
