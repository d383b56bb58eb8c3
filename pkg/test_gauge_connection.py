import math

import numpy as np
import pytest

from errors import OnDiracString
from experiments.potential import sample_regular
from gauge_connection import (
    axis_winding,
    connection_arrays,
    curl_residual,
    eval_connection,
    monopole_arrays,
    monopole_connection,
)
from lattice_potential import CHARGE_COEFFICIENT, eval_V
from models import ChartPoint3, GaugeId, PotentialParams


@pytest.fixture
def params():
    return PotentialParams(eps=0.5)


def test_single_monopole_closed_form():
    form = monopole_connection(ChartPoint3(0.3, 0.4, 0.0), CHARGE_COEFFICIENT, GaugeId.STRING_MINUS)
    assert form.a_phi == pytest.approx(CHARGE_COEFFICIENT * (0.6 - 1.0))
    # A = A_phi dphi with dphi = (y1 dy2 - y2 dy1) / rho^2
    assert form.A == pytest.approx([0.0, 0.0, form.a_phi / 0.4])


def test_monopole_regular_away_from_its_string():
    # the string of STRING_MINUS lies on u < 0, so A_phi vanishes on the positive half axis
    _, a_minus = monopole_arrays([[0.5, 1e-6, 0.0]], 1.0, GaugeId.STRING_MINUS)
    _, a_plus = monopole_arrays([[-0.5, 1e-6, 0.0]], 1.0, GaugeId.STRING_PLUS)
    assert abs(a_minus[0]) < 1e-9
    assert abs(a_plus[0]) < 1e-9


def test_gauge_difference_is_one_winding(params):
    p = ChartPoint3(0.1, 0.2, -0.15)
    plus = eval_connection(params, p, GaugeId.STRING_PLUS)
    minus = eval_connection(params, p, GaugeId.STRING_MINUS)
    assert plus.a_phi - minus.a_phi == pytest.approx(1.0 / (2.0 * math.pi), abs=1e-12)


def test_shift_by_period_is_fiber_gauge_transformation(params):
    p = ChartPoint3(0.1, 0.2, -0.15)
    q = ChartPoint3(0.1 + params.eps, 0.2, -0.15)
    a = eval_connection(params, p, GaugeId.STRING_MINUS).a_phi
    b = eval_connection(params, q, GaugeId.STRING_MINUS).a_phi
    assert b - a == pytest.approx(1.0 / (2.0 * math.pi), abs=1e-9)


def test_continuous_across_period_seam(params):
    below = eval_connection(params, ChartPoint3(0.25 - 1e-9, 0.2, 0.1), GaugeId.STRING_MINUS)
    above = eval_connection(params, ChartPoint3(0.25 + 1e-9, 0.2, 0.1), GaugeId.STRING_MINUS)
    assert above.A == pytest.approx(below.A, abs=1e-7)


@pytest.mark.parametrize("gauge", list(GaugeId))
@pytest.mark.parametrize("xyz", [(0.1, 0.2, 0.15), (-0.2, 0.15, -0.1), (0.24, -0.3, 0.05)])
def test_curl_matches_gradient(params, gauge, xyz):
    assert curl_residual(params, ChartPoint3(*xyz), gauge, fd_step=1e-4) < 1e-6


@pytest.mark.parametrize("gauge", list(GaugeId))
def test_curl_matches_gradient_on_random_grid_at_fine_step(params, gauge):
    q = sample_regular(np.random.default_rng(5), 20, 0.2, min_axis=0.2)
    worst = max(curl_residual(params, ChartPoint3.from_array(params.eps * x), gauge, fd_step=1e-5) for x in q)
    assert worst < 1e-6


def test_curl_with_harmonic_part():
    params = PotentialParams(eps=0.5, h_coeffs=[(0.0, 0.0), (0.3, 0.1), (0.0, 0.0), (0.2, 0.0)])
    assert curl_residual(params, ChartPoint3(0.1, 0.2, 0.15), GaugeId.STRING_MINUS, fd_step=1e-4) < 1e-6


def test_harmonic_part_enters_u_component():
    plain = PotentialParams(eps=0.5)
    linear = PotentialParams(eps=0.5, h_coeffs=[(0.0, 0.0), (0.0, 1.0)])
    p = ChartPoint3(0.1, 0.2, -0.15)
    diff = eval_connection(linear, p, GaugeId.STRING_MINUS).A - eval_connection(plain, p, GaugeId.STRING_MINUS).A
    # h = i y, Im h = y1
    assert diff == pytest.approx([0.2 / 0.5, 0.0, 0.0], abs=1e-12)


def test_on_string_rejected(params):
    with pytest.raises(OnDiracString):
        eval_connection(params, ChartPoint3(0.2, 0.0, 0.0), GaugeId.STRING_MINUS)


def test_err_bound_reported(params):
    form = eval_connection(params, ChartPoint3(0.1, 0.2, -0.15), GaugeId.STRING_PLUS)
    assert 0.0 <= form.err_bound <= params.tail_tol
    assert np.all(np.isfinite(form.A))


def test_potential_positive_where_connection_checked(params):
    assert eval_V(params, ChartPoint3(0.1, 0.2, 0.15)).value > 0.0


@pytest.mark.parametrize("gauge", list(GaugeId))
@pytest.mark.parametrize("u", [0.3, 0.8, 1.3, -0.3, -0.8])
def test_axis_winding_cancels_near_axis(params, gauge, u):
    _, a_phi, _ = connection_arrays(params, [[u, 1e-3, 0.0]], gauge, winding=axis_winding(params, u, gauge))
    assert abs(a_phi[0]) < 1e-5


def test_axis_winding_jumps_by_two_across_a_charge(params):
    below = axis_winding(params, 0.45, GaugeId.STRING_MINUS)
    above = axis_winding(params, 0.55, GaugeId.STRING_MINUS)
    assert above - below == 2.0
    assert axis_winding(params, 0.1, GaugeId.STRING_PLUS) - axis_winding(params, 0.1, GaugeId.STRING_MINUS) == 2.0
