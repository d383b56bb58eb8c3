import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from curvature_engine import (
    bubble_scale,
    curvature_sweep,
    gauge_covariance_scan,
    nut_grid,
    reframe,
    ricci_flatness_scan,
    riemann_at,
    symmetry_residual,
)
from errors import StepTooLarge
from experiments.potential import sample_regular
from lattice_potential import CHARGE_COEFFICIENT
from metric_models import constant_potential_metric, gh_metric, perturbed_gh_metric, rescale, taub_nut
from models import ChartPoint3, ChartPoint4, GaugeId, GridPolicy, PotentialParams


def at(u, y1, y2):
    return ChartPoint4(ChartPoint3(u, y1, y2), 0.0)


def taub_nut_norm(c, r):
    # V = 1 + c/r: |Rm|^2 = V^-1 lap lap V^-1 = 24 c^2 / (r + c)^6
    return math.sqrt(24.0) * c / (r + c) ** 3


def test_taub_nut_norm_matches_closed_form():
    c = CHARGE_COEFFICIENT
    res = riemann_at(taub_nut(c), at(0.6, 0.8, 0.0))
    assert res.norm_rm == pytest.approx(taub_nut_norm(c, 1.0), rel=1e-5)
    assert res.norm_ric < 1e-5


def test_taub_nut_norm_other_radius():
    c = 0.5
    p = at(0.3, 0.0, 0.4)
    assert riemann_at(taub_nut(c), p).norm_rm == pytest.approx(taub_nut_norm(c, 0.5), rel=1e-5)


def test_flat_field_has_no_curvature():
    res = riemann_at(constant_potential_metric(), at(0.1, 0.2, 0.3), fd_step=1e-2)
    assert res.norm_rm == pytest.approx(0.0, abs=1e-12)


@pytest.fixture(scope="module")
def regular_result():
    return riemann_at(gh_metric(PotentialParams(eps=0.3)), at(0.05, 0.1, 0.04))


def test_riemann_symmetries(regular_result):
    assert symmetry_residual(regular_result) < 1e-6 * regular_result.norm_rm


def test_invariants_do_not_depend_on_frame(regular_result):
    O = ortho_group.rvs(4, random_state=3)
    turned = reframe(regular_result, O)
    assert turned.norm_rm == pytest.approx(regular_result.norm_rm, rel=1e-10)
    assert turned.norm_ric == pytest.approx(regular_result.norm_ric, rel=1e-8, abs=1e-12)


def test_invariants_do_not_depend_on_gauge(regular_result):
    other = riemann_at(gh_metric(PotentialParams(eps=0.3), GaugeId.STRING_PLUS), at(0.05, 0.1, 0.04))
    assert other.norm_rm == pytest.approx(regular_result.norm_rm, rel=1e-6)


@pytest.mark.parametrize("lam", [0.1, 2.0])
def test_norm_scales_inversely(lam, regular_result):
    g = gh_metric(PotentialParams(eps=0.3))
    scaled = riemann_at(rescale(g, lam), at(0.05, 0.1, 0.04))
    assert scaled.norm_rm == pytest.approx(regular_result.norm_rm / lam, rel=1e-8)


def test_step_budget_enforced():
    with pytest.raises(StepTooLarge):
        riemann_at(taub_nut(), at(0.6, 0.8, 0.0), error_budget=1e-30)


@pytest.mark.slow
def test_taub_nut_is_ricci_flat_near_nut():
    grid = nut_grid(1.0, GridPolicy(n_radial=4))
    scan = ricci_flatness_scan(taub_nut(), grid, jobs=2)
    assert scan.n_points == len(grid) == 3 * 2 * 4
    assert scan.n_failed == 0
    assert scan.max_norm_ric < 1e-5


def test_non_harmonic_control_is_not_ricci_flat():
    params = PotentialParams(eps=0.4)
    res = riemann_at(perturbed_gh_metric(params, 1.0), at(0.1, 0.15, 0.05))
    assert res.norm_ric > 1e-3


def test_bubble_scale():
    assert bubble_scale(1.0) == 1.0
    eps = math.exp(-2.0 * math.pi)
    assert bubble_scale(eps) == pytest.approx(eps)


def test_nut_grid_stays_off_the_string():
    eps = 0.01
    grid = nut_grid(eps, GridPolicy())
    radii = [p.base.norm for p in grid]
    assert max(radii) <= 0.45 * eps * (1 + 1e-12)
    assert all(np.hypot(p.base.y1, p.base.y2) > 0 for p in grid)


def test_sweep_at_unit_eps_not_applicable():
    rows = curvature_sweep([1.0], GridPolicy(n_radial=3), field_factory=lambda eps: taub_nut())
    assert len(rows) == 1
    row = rows[0]
    assert not row.applicable
    assert row.ratio_upper is None and row.ratio_lower is None
    assert row.max_norm_rm > 0


# a point below the nut, where the StringMinus string runs close by
STRING_SIDE = at(-0.004679, 0.002689, 0.000832)


def test_string_side_of_nut_is_ricci_flat():
    res = riemann_at(gh_metric(PotentialParams(eps=0.1)), STRING_SIDE)
    assert res.norm_ric < 1e-5


def test_regauged_evaluation_matches_across_gauges():
    params = PotentialParams(eps=0.1)
    minus = riemann_at(gh_metric(params, GaugeId.STRING_MINUS), STRING_SIDE)
    plus = riemann_at(gh_metric(params, GaugeId.STRING_PLUS), STRING_SIDE)
    assert plus.norm_rm == pytest.approx(minus.norm_rm, rel=1e-10)


def test_taub_nut_string_side_is_ricci_flat():
    p = at(-0.05 * math.cos(0.54), 0.05 * math.sin(0.54), 0.0)
    assert riemann_at(taub_nut(), p).norm_ric < 1e-5


@pytest.mark.slow
def test_ricci_flat_at_steep_polar_angles():
    eps = 0.1
    policy = GridPolicy(polar_angles=[0.5, 2.6], n_radial=12, n_azimuth=3)
    params = PotentialParams(eps=eps)
    scan = ricci_flatness_scan(gh_metric(params), nut_grid(eps, policy, params.exclusion), jobs=2)
    assert scan.n_failed == 0
    assert scan.max_norm_ric < 1e-5


def test_gauge_covariance_scan():
    eps = 0.5
    params = PotentialParams(eps=eps)
    grid = nut_grid(eps, GridPolicy(n_radial=2, n_azimuth=1), params.exclusion)
    scan = gauge_covariance_scan(params, grid)
    assert scan.n_points == len(grid) == 6
    assert scan.n_failed == 0
    assert scan.max_rel_rm < 1e-6
    assert scan.max_ric_diff < 1e-5


def test_norm_scales_inversely_at_random_points():
    rng = np.random.default_rng(21)
    params = PotentialParams(eps=0.3)
    g = gh_metric(params)
    for x in sample_regular(rng, 20, 0.2, min_axis=0.2):
        lam = float(rng.uniform(0.1, 3.0))
        p = ChartPoint4(ChartPoint3.from_array(params.eps * x), 0.0)
        base = riemann_at(g, p).norm_rm
        assert riemann_at(rescale(g, lam), p).norm_rm == pytest.approx(base / lam, rel=1e-8)


SWEEP_M = [2.0, 3.0, 4.0]


@pytest.fixture(scope="module")
def sweep_rows():
    policy = GridPolicy(radial_min=0.002, n_radial=5, polar_angles=[math.pi / 2], n_azimuth=1)
    params = PotentialParams(eps=0.5, exclusion_radius=1e-6)
    return curvature_sweep([math.exp(-2.0 * math.pi * m) for m in SWEEP_M], policy, params)


@pytest.mark.slow
def test_sweep_ratios_stay_in_band(sweep_rows):
    assert all(r.applicable and not r.degraded for r in sweep_rows)
    uppers = [r.ratio_upper for r in sweep_rows]
    lowers = [r.ratio_lower for r in sweep_rows]
    assert max(uppers) / min(uppers) < 10.0
    assert min(lowers) > 1e-3 * math.sqrt(max(uppers) * min(uppers))


@pytest.mark.slow
def test_sweep_bubble_radius_tracks_scale(sweep_rows):
    c = CHARGE_COEFFICIENT
    # |Rm| of V = A + c/r halves at (2^(1/3) - 1) c / A, with A close to beta / eps
    for row in sweep_rows:
        assert row.half_max_radius / bubble_scale(row.eps) == pytest.approx((2 ** (1 / 3) - 1) * c, rel=0.15)
    by_root_beta = [r.argmax_point.norm * math.sqrt(m) / r.eps for r, m in zip(sweep_rows, SWEEP_M)]
    assert max(by_root_beta) / min(by_root_beta) < 3.0
