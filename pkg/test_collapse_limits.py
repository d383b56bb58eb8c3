import math

import numpy as np
import pytest

from collapse_limits import (
    beta_of,
    classify_region,
    diameter_chain,
    diameter_integral,
    frame_deviation,
    limit_stability_compare,
    nut_distance,
    off_axis_directions,
    ray_integral,
    region1_check,
    region2_check,
    region3_check,
    region_case,
    singular_fiber_diameter,
)
from errors import AmbiguousRegion, InvalidSchedule
from metric_models import gh_metric, perturbed_metric
from models import ChartPoint3, PotentialParams, Region, RegionThresholds


def eps_at(beta):
    return math.exp(-2.0 * math.pi * beta)


@pytest.fixture
def thresholds():
    return RegionThresholds()


def test_beta():
    assert beta_of(eps_at(4.0)) == pytest.approx(4.0)


def test_neck_case(thresholds):
    case = region_case(eps_at(4.0), 1.0, thresholds)
    assert case.region is Region.NECK
    assert case.gammasq == pytest.approx(2.0)
    assert case.r_excision == pytest.approx(math.sqrt(2.0) / 4.0)


def test_outer_case(thresholds):
    case = region_case(eps_at(4.0), 2.0, thresholds)
    assert case.region is Region.OUTER
    assert case.gamma0sq == pytest.approx(1.0)
    assert case.r_excision == pytest.approx(4.0 ** -0.75)


def test_bubble_case(thresholds):
    assert region_case(eps_at(4.0), 0.0, thresholds).region is Region.BUBBLE


def test_gap_between_regions_is_ambiguous(thresholds):
    with pytest.raises(AmbiguousRegion) as info:
        region_case(eps_at(4.0), 0.6, thresholds)
    assert info.value.labels == []


def test_region_needs_eps_below_one(thresholds):
    with pytest.raises(ValueError, match="eps must lie"):
        region_case(1.0, 0.5, thresholds)


def test_thresholds_validated():
    with pytest.raises(ValueError):
        RegionThresholds(R0=2.0, neck_lower=1.5)


def test_nut_classifies_as_bubble(thresholds):
    case = classify_region(0.01, ChartPoint3(0.0, 0.0, 0.0), thresholds)
    assert case.region is Region.BUBBLE
    assert case.d == 0.0


def test_nut_distance_not_longer_than_ray():
    params = PotentialParams(eps=0.01)
    p0 = ChartPoint3(0.003, 0.004, 0.002)
    d, fiber = nut_distance(params, p0)
    ray = ray_integral(params, p0.as_array(), float(np.linalg.norm(p0.as_array())) / params.eps)
    assert 0.8 * ray < d <= ray
    assert fiber > 0


def test_diameter_integral_without_beta():
    assert diameter_integral(0.3, 0.0) == pytest.approx(2.0 * math.sqrt(0.3))


@pytest.mark.parametrize("r, beta", [(0.1, 2.0), (0.5, 9.0), (1.0, 16.0)])
def test_diameter_integral_below_chain(r, beta):
    assert diameter_integral(r, beta) <= diameter_chain(r, beta)


@pytest.mark.slow
def test_singular_fiber_diameter_scales_with_root_beta():
    beta = 16.0
    ratio = singular_fiber_diameter(PotentialParams(eps=eps_at(beta))) / math.sqrt(beta)
    assert 0.45 < ratio < 0.7


def test_frame_deviation_of_identical_metrics():
    g = gh_metric(PotentialParams(eps=0.4))
    coords = np.array([[0.1, 0.15, 0.05, 0.0], [-0.1, 0.1, 0.2, 0.5]])
    assert frame_deviation(g, g, coords) == 0.0


def test_off_axis_directions():
    e = off_axis_directions(10, max_cos=0.5)
    assert np.linalg.norm(e, axis=1) == pytest.approx(np.ones(10))
    assert np.all(np.abs(e[:, 0]) <= 0.5)


@pytest.mark.slow
def test_region1_converges():
    reports = region1_check([eps_at(2.0), eps_at(4.0)])
    pot = [r.aux["potential_dev"] for r in reports]
    assert pot[1] < pot[0]
    assert reports[1].sup_dev < reports[0].sup_dev
    assert reports[0].aux["pointed_radius"] == pytest.approx(1.0 / math.sqrt(2.0))


@pytest.mark.slow
def test_region1_deviation_falls_below_acceptance():
    reports = region1_check([eps_at(2.0), eps_at(4.0), eps_at(8.0)], radii=[0.1, 0.2, 0.4, 0.7, 1.0])
    for key in ("potential_dev", "metric_dev"):
        values = [r.aux[key] for r in reports]
        assert all(b < a for a, b in zip(values, values[1:])), key
        assert values[-1] < 0.05, key
    assert reports[-1].sup_dev < 0.05


@pytest.mark.slow
def test_region2_converges():
    reports = region2_check([eps_at(4.0), eps_at(9.0)])
    assert reports[1].aux["potential_dev"] < reports[0].aux["potential_dev"]
    assert reports[1].aux["fiber_sup"] < reports[0].aux["fiber_sup"]
    assert reports[1].aux["excision_bound"] < reports[0].aux["excision_bound"]
    assert all(r.aux["chain_margin"] > 0 for r in reports)
    charge = [r.aux["gamma_inv_c"] for r in reports]
    assert charge[1] < charge[0]
    # the deviation on the annulus is the charge term at its inner radius
    for r, c in zip(reports, charge):
        assert r.aux["potential_dev"] == pytest.approx(c, rel=0.2)


def test_region2_rejects_bad_schedule():
    with pytest.raises(InvalidSchedule):
        region2_check([eps_at(4.0), eps_at(9.0)], d_schedule=[1.0, 10.0])


def test_region2_schedule_length_checked():
    with pytest.raises(InvalidSchedule):
        region2_check([eps_at(4.0), eps_at(9.0)], d_schedule=[1.0])


@pytest.mark.slow
def test_region3_converges():
    reports = region3_check([eps_at(4.0), eps_at(9.0)], n_s=5, n_v=4, n_phi=3)
    assert reports[1].sup_dev < reports[0].sup_dev
    assert all(r.aux["gamma0sq"] == pytest.approx(1.0) for r in reports)
    assert all(r.aux["fiber_constant"] < 2.0 for r in reports)


def test_region3_needs_positive_kappa():
    with pytest.raises(InvalidSchedule):
        region3_check([eps_at(4.0)], kappa=0.0)


STABILITY_EPS = [0.1, 0.05, 0.025]
UNIT_POINTS = np.array([[0.10, 0.30, 0.20, 0.0], [-0.20, 0.35, -0.10, 0.0]])


def stability(amplitude):
    g_seq = [gh_metric(PotentialParams(eps=e)) for e in STABILITY_EPS]
    h_seq = [perturbed_metric(g, amplitude(e)) for g, e in zip(g_seq, STABILITY_EPS)]
    lambdas = [beta_of(e) / e for e in STABILITY_EPS]
    grids = [e * UNIT_POINTS * [1, 1, 1, 0] for e in STABILITY_EPS]
    return limit_stability_compare(g_seq, h_seq, lambdas, 2, grids)


@pytest.mark.slow
def test_fast_decaying_perturbation_is_stable():
    verdict = stability(lambda e: math.exp(-1.0 / e))
    assert verdict.passed
    assert verdict.D[-1] < 1e-3
    assert all(b < a for a, b in zip(verdict.D, verdict.D[1:]))


@pytest.mark.slow
def test_slow_perturbation_is_detected():
    verdict = stability(math.sqrt)
    assert not verdict.passed
    assert verdict.reason


def test_zero_perturbation_is_stable():
    verdict = stability(lambda e: 0.0)
    assert verdict.passed
    assert verdict.D == [0.0, 0.0, 0.0]


def test_stability_arguments_validated():
    g = gh_metric(PotentialParams(eps=0.1))
    with pytest.raises(ValueError):
        limit_stability_compare([g], [g], [1.0], 3, UNIT_POINTS)
    with pytest.raises(ValueError):
        limit_stability_compare([g], [g, g], [1.0], 1, UNIT_POINTS)
