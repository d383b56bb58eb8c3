"""Blow-up limits of the three regions and stability of limits under perturbation."""

import logging
import math

import numpy as np

from collapse_limits import (
    beta_of,
    diameter_chain,
    diameter_integral,
    limit_stability_compare,
    region1_check,
    region2_check,
    region3_check,
    singular_fiber_diameter,
)
from errors import GridTooCoarse
from lattice_potential import charge_coefficient_estimate
from linalg_estimates import metric_gap
from metric_models import gh_metric, perturbed_metric
from models import ExperimentConfig, ExperimentName, Verdict
from router import ExperimentOutcome, ExperimentRouter, make_row, strictly_decreasing, threshold_verdict

logger = logging.getLogger(__name__)

router = ExperimentRouter("regions")

FIBER_CONSTANT_LIMIT = 2.0
STABILITY_TOL = 1e-3
CHARGE_TOL = 1e-6

# Points of the common chart in units of eps, a fixed distance from the nut and the string.
STABILITY_POINTS = np.array([
    [0.10, 0.30, 0.20],
    [-0.20, 0.35, -0.10],
    [0.05, -0.30, 0.25],
    [0.30, 0.20, 0.30],
])


def _decreasing_verdict(name: str, values, limit=None) -> Verdict:
    ok = strictly_decreasing(values)
    last = values[-1] if values else None
    if limit is not None:
        ok = ok and last is not None and last < limit
    return Verdict(name=name, passed=ok, threshold=limit, observed=last,
                   detail="" if ok else f"sequence {values}")


def _report_rows(columns, reports, **extra):
    rows = []
    for r in reports:
        values = {"eps": r.eps, "beta": r.beta, "sup_dev": r.sup_dev, "excised": r.excised}
        values.update(r.aux)
        values.update({k: v(r) for k, v in extra.items()})
        rows.append(make_row(columns, **values))
    return rows


@router.experiment(ExperimentName.REGION1)
def region1(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """Bubble region against Taub-NUT with the measured charge coefficient."""
    columns = ["eps", "beta", "sup_dev", "potential_dev", "metric_dev", "g_tt_unit", "g_tt_unit_dev",
               "decomposition_residual", "pointed_radius", "excised"]
    c_star, c_err = charge_coefficient_estimate()
    reports = region1_check(config.eps_schedule.resolve(), config.thresholds.R0, config.params,
                            radii=config.grid.radii, n_directions=config.grid.n_directions,
                            c_star=c_star, jobs=jobs)
    rows = _report_rows(columns, reports)
    limit = config.options.acceptance
    verdicts = [
        _decreasing_verdict("potential_deviation", [r.aux["potential_dev"] for r in reports], limit),
        _decreasing_verdict("metric_deviation", [r.aux["metric_dev"] for r in reports], limit),
        Verdict(name="charge_coefficient", passed=abs(c_star - 1.0 / (4.0 * math.pi)) < CHARGE_TOL,
                threshold=CHARGE_TOL, observed=abs(c_star - 1.0 / (4.0 * math.pi)),
                detail=f"c* = {c_star:.15f} (table error {c_err:.1e})"),
    ]
    series = {"beta": [r.beta for r in reports], "sup_dev": [r.sup_dev for r in reports]}
    return ExperimentOutcome(columns, rows, verdicts, series)


@router.experiment(ExperimentName.REGION2)
def region2(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """Neck region against flat R^3 x S^1 on the annulus outside the excised ball."""
    columns = ["eps", "beta", "d", "r_excision", "sup_dev", "gamma_inv_c", "fiber_sup", "excision_bound",
               "excision_chain", "chain_margin", "c_fiber", "horizontal_length", "horizontal_lower",
               "excised"]
    eps_list = config.eps_schedule.resolve()
    reports = region2_check(eps_list, config.options.d_exponent, config.params,
                            n_directions=config.grid.n_directions, jobs=jobs)
    rows = _report_rows(columns, reports)

    betas = [beta_of(e) for e in eps_list]
    radii = [r.aux["r_excision"] for r in reports] + list(config.grid.radii)
    margins = [diameter_chain(r, b) - diameter_integral(r, b) for r in radii for b in betas]
    verdicts = [
        _decreasing_verdict("potential_deviation", [r.sup_dev for r in reports]),
        _decreasing_verdict("charge_term", [r.aux["gamma_inv_c"] for r in reports]),
        _decreasing_verdict("fiber_sup", [r.aux["fiber_sup"] for r in reports]),
        _decreasing_verdict("excision_bound", [r.aux["excision_bound"] for r in reports]),
        threshold_verdict("quadrature_margin", min(margins), 0.0, below=False,
                          detail=f"{len(margins)} (r, beta) pairs"),
    ]
    series = {"beta": [r.beta for r in reports], "sup_dev": [r.sup_dev for r in reports],
              "fiber_sup": [r.aux["fiber_sup"] for r in reports],
              "excision_bound": [r.aux["excision_bound"] for r in reports]}
    return ExperimentOutcome(columns, rows, verdicts, series)


@router.experiment(ExperimentName.REGION3)
def region3(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """Outer region against the flat S^1 x R^2 model with gamma0^2 = kappa^-2."""
    columns = ["eps", "beta", "sup_dev", "fiber_constant", "horizontal_length", "horizontal_ratio",
               "gamma0sq", "r_excision", "singular_fiber_ratio", "excised"]
    eps_list = config.eps_schedule.resolve()
    reports = region3_check(eps_list, config.options.kappa, config.params, jobs=jobs)

    def fiber_ratio(r):
        return singular_fiber_diameter(config.params.with_eps(r.eps)) / math.sqrt(r.beta)

    rows = _report_rows(columns, reports, singular_fiber_ratio=fiber_ratio)
    verdicts = [
        _decreasing_verdict("potential_deviation", [r.sup_dev for r in reports], config.options.acceptance),
        threshold_verdict("fiber_constant", max(r.aux["fiber_constant"] for r in reports),
                          FIBER_CONSTANT_LIMIT),
    ]
    series = {"beta": [r.beta for r in reports], "sup_dev": [r.sup_dev for r in reports]}
    return ExperimentOutcome(columns, rows, verdicts, series)


def _amplitude(kind: str, eps: float) -> float:
    if kind == "exponential":
        return math.exp(-1.0 / eps)
    if kind == "sqrt":
        return math.sqrt(eps)
    return 0.0


@router.experiment(ExperimentName.LIMIT_STABILITY)
def limit_stability(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """C^k comparison of g_eps and a perturbation h_eps after rescaling by lambda = beta / eps."""
    columns = ["eps", "lambda", "amplitude", "D", "rescaled_sup", "fd_error", "c0_dist_sq"]
    kind = config.options.perturbation
    eps_list = config.eps_schedule.resolve()
    g_seq, h_seq, lambdas, grids = [], [], [], []
    for eps in eps_list:
        g = gh_metric(config.params.with_eps(eps))
        g_seq.append(g)
        h_seq.append(perturbed_metric(g, _amplitude(kind, eps)))
        lambdas.append(beta_of(eps) / eps)
        pts = eps * STABILITY_POINTS
        grids.append(np.concatenate([pts, np.zeros((pts.shape[0], 1))], axis=1))

    try:
        result = limit_stability_compare(g_seq, h_seq, lambdas, config.options.k_max, grids,
                                         tol=STABILITY_TOL)
    except GridTooCoarse as exc:
        return ExperimentOutcome(columns, [], [Verdict(name="limit_stability", passed=False,
                                                       threshold=exc.observed, observed=exc.fd_error,
                                                       detail=str(exc))])

    rows = []
    for i, eps in enumerate(eps_list):
        gaps = metric_gap(h_seq[i], g_seq[i], grids[i])
        rows.append(make_row(columns, eps=eps, **{"lambda": lambdas[i]}, amplitude=_amplitude(kind, eps),
                             D=result.D[i], rescaled_sup=result.rescaled_sup[i],
                             fd_error=result.fd_error[i],
                             c0_dist_sq=max(gap.dist_sq for gap in gaps)))

    expected = kind != "sqrt"
    verdict = Verdict(
        name="limit_stability", passed=result.passed == expected,
        threshold=STABILITY_TOL, observed=result.D[-1],
        detail=(f"comparator {'PASS' if result.passed else 'FAIL'} "
                f"(expected {'PASS' if expected else 'FAIL'} for {kind} perturbation) {result.reason}").strip(),
    )
    series = {"lambda": lambdas, "D": result.D, "rescaled_sup": result.rescaled_sup}
    return ExperimentOutcome(columns, rows, [verdict], series)
