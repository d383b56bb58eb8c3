import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from errors import NotAdmissible
from linalg_estimates import (
    calibrate_constant,
    diagonal_family,
    gap_arrays,
    haar_unitaries,
    matrix_lemma_gap,
    metric_gap,
    sample_admissible,
    verify_constant,
)
from metric_models import gh_metric, perturbed_metric
from models import PotentialParams


def test_identity_has_no_gap():
    gap = matrix_lemma_gap(np.eye(3), 0.1)
    assert gap.n == 3
    assert gap.trace_slack == pytest.approx(0.0)
    assert gap.det_slack == pytest.approx(0.0)
    assert gap.dist_sq == pytest.approx(0.0)


def test_diagonal_pair():
    delta = 0.05
    gap = matrix_lemma_gap(np.diag([1 + delta, 1 - delta]), 0.01)
    assert gap.trace_slack == pytest.approx(0.0, abs=1e-15)
    assert gap.det_slack == pytest.approx(delta ** 2)
    assert gap.dist_sq == pytest.approx(2 * delta ** 2)


@pytest.mark.parametrize("A, eps, reason", [
    (np.diag([1.2, 1.0]), 0.1, "trace"),
    (np.diag([0.8, 1.0]), 0.1, "determinant"),
    (np.array([[1.0, 0.1], [0.0, 1.0]]), 0.1, "hermitian"),
    (np.diag([-1.0, 3.0]), 0.5, "positive_definite"),
])
def test_inadmissible_matrices(A, eps, reason):
    with pytest.raises(NotAdmissible) as info:
        matrix_lemma_gap(A, eps)
    assert info.value.reason == reason


def test_eps_range():
    with pytest.raises(ValueError, match="eps must lie"):
        matrix_lemma_gap(np.eye(2), 0.0)


def test_gap_is_unitarily_invariant():
    A = np.diag([1.1, 0.95, 0.97]).astype(complex)
    U = unitary_group.rvs(3, random_state=7)
    B = U @ A @ U.conj().T
    a, b = matrix_lemma_gap(A, 0.2), matrix_lemma_gap(B, 0.2)
    assert b.trace_slack == pytest.approx(a.trace_slack, abs=1e-12)
    assert b.det_slack == pytest.approx(a.det_slack, abs=1e-12)
    assert b.dist_sq == pytest.approx(a.dist_sq, abs=1e-12)


def test_haar_unitaries_are_unitary():
    U = haar_unitaries(3, 50, np.random.default_rng(1))
    eye = np.einsum("kji,kjl->kil", U.conj(), U)
    assert np.allclose(eye, np.eye(3), atol=1e-12)


def test_samples_are_admissible():
    eps = 0.05
    A, (trace_slack, det_slack, dist_sq) = sample_admissible(2, eps, 500, np.random.default_rng(2))
    assert A.shape == (500, 2, 2)
    assert np.allclose(A, A.conj().swapaxes(-1, -2))
    assert np.all(trace_slack <= eps + 1e-12)
    assert np.all(det_slack <= eps + 1e-12)
    assert np.all(np.linalg.eigvalsh(A) > 0)
    assert np.all(dist_sq >= 0)


def test_diagonal_family_ratio_is_two():
    eps = 0.01
    _, det_slack, dist_sq = gap_arrays(diagonal_family(2, eps, 101))
    assert np.max(dist_sq[det_slack <= eps + 1e-12]) / eps == pytest.approx(2.0)
    assert calibrate_constant(2, [eps], 10_000, seed=0, family="diagonal") == pytest.approx(2.0)


def test_one_dimensional_constant():
    c_hat = calibrate_constant(1, [0.01], 10_000, seed=3)
    assert c_hat <= 0.01 + 1e-12


def test_calibration_is_deterministic():
    a = calibrate_constant(2, [0.1, 0.01], 10_000, seed=5)
    b = calibrate_constant(2, [0.1, 0.01], 10_000, seed=5)
    assert a == b


@pytest.mark.slow
def test_calibration_stable_across_seeds():
    a = calibrate_constant(2, [0.01], 20_000, seed=11)
    b = calibrate_constant(2, [0.01], 20_000, seed=12)
    assert abs(a - b) <= 0.1 * max(a, b)
    assert 2.0 < a < 4.5


def test_calibration_arguments_validated():
    with pytest.raises(ValueError, match="at least"):
        calibrate_constant(2, [0.01], 100, seed=0)
    with pytest.raises(ValueError):
        calibrate_constant(2, [0.6], 10_000, seed=0)
    with pytest.raises(ValueError):
        calibrate_constant(5, [0.01], 10_000, seed=0)
    with pytest.raises(ValueError):
        calibrate_constant(2, [0.01], 10_000, seed=0, family="real")


@pytest.mark.slow
def test_verification_counts_violations():
    assert verify_constant(2, 4.5, [0.01], 10_000, seed=9) == 0
    assert verify_constant(2, 1.0, [0.01], 10_000, seed=9) > 0


def test_metric_gap_of_metric_with_itself():
    g = gh_metric(PotentialParams(eps=0.4))
    coords = np.array([[0.1, 0.15, 0.05, 0.0], [-0.1, 0.1, 0.2, 0.0]])
    for gap in metric_gap(g, g, coords):
        assert gap.n == 4
        assert gap.trace_slack == pytest.approx(0.0, abs=1e-12)
        assert gap.dist_sq == pytest.approx(0.0, abs=1e-24)


def test_metric_gap_sees_perturbation():
    g = gh_metric(PotentialParams(eps=0.4))
    coords = np.array([[0.1, 0.15, 0.05, 0.0]])
    (gap,) = metric_gap(perturbed_metric(g, 1e-3), g, coords)
    assert gap.dist_sq > 0
    assert math.isfinite(gap.trace_slack)
