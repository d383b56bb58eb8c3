"""Curvature experiments: Ricci-flatness scans and the max |Rm| scaling sweep."""

import logging
import math

import numpy as np

from curvature_engine import bubble_scale, curvature_sweep, gauge_covariance_scan, nut_grid, ricci_flatness_scan
from experiments.potential import sample_regular
from lattice_potential import charge_coefficient_estimate
from metric_models import gh_metric, perturbed_gh_metric, taub_nut
from models import ChartPoint3, ChartPoint4, ExperimentConfig, ExperimentName
from router import ExperimentOutcome, ExperimentRouter, make_row, threshold_verdict

logger = logging.getLogger(__name__)

router = ExperimentRouter("curvature")

CONTROL_FLOOR = 1e-3
LOWER_FRACTION = 1e-3
GAUGE_LIMIT = 1e-6
BUBBLE_SPREAD_LIMIT = 3.0

SWEEP_COLUMNS = ["eps", "max_norm_rm", "ratio_upper", "ratio_lower", "argmax_u", "argmax_y1", "argmax_y2"]


@router.experiment(ExperimentName.RICCI_FLAT)
def ricci_flat(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """max |Ric| over near-nut grids for gh_metric, Taub-NUT and a non-harmonic control."""
    columns = ["field", "eps", "max_norm_ric", "argmax_u", "argmax_y1", "argmax_y2", "n_points", "n_failed"]
    policy = config.grid.policy
    opts = config.options
    rows, flat_values = [], []

    def record(label, eps, scan):
        base = scan.argmax.base if scan.argmax else None
        rows.append(make_row(
            columns, field=label, eps=eps, max_norm_ric=scan.max_norm_ric,
            argmax_u=base.u if base else None, argmax_y1=base.y1 if base else None,
            argmax_y2=base.y2 if base else None, n_points=scan.n_points, n_failed=scan.n_failed,
        ))

    rng = np.random.default_rng(config.seed)
    eps_list = config.eps_schedule.resolve()
    for eps in eps_list:
        params = config.params.with_eps(eps)
        scan = ricci_flatness_scan(gh_metric(params), nut_grid(eps, policy, params.exclusion),
                                   opts.fd_step, jobs, skip_failures=True)
        record("gibbons_hawking", eps, scan)
        flat_values.append(scan.max_norm_ric)

        d = config.grid.min_distance
        q = sample_regular(rng, config.grid.n_points, d, min_axis=d)
        grid = [ChartPoint4(ChartPoint3.from_array(eps * x), 0.0) for x in q]
        scan = ricci_flatness_scan(gh_metric(params), grid, opts.fd_step, jobs, skip_failures=True)
        record("gibbons_hawking_random", eps, scan)
        flat_values.append(scan.max_norm_ric)

    if opts.include_taub_nut:
        c_star, _ = charge_coefficient_estimate()
        scan = ricci_flatness_scan(taub_nut(c_star), nut_grid(1.0, policy), opts.fd_step, jobs,
                                   skip_failures=True)
        record("taub_nut", None, scan)
        flat_values.append(scan.max_norm_ric)

    verdicts = [threshold_verdict("ricci_flat", max(flat_values), opts.ricci_limit,
                                  detail=f"{len(flat_values)} harmonic scans")]

    params = config.params.with_eps(eps_list[0])
    gauges = gauge_covariance_scan(params, nut_grid(eps_list[0], policy, params.exclusion), opts.fd_step, jobs,
                                   skip_failures=True)
    verdicts.append(threshold_verdict("gauge_covariance", gauges.max_rel_rm, GAUGE_LIMIT,
                                      detail=f"max |Ric| gap {gauges.max_ric_diff:.3g} over {gauges.n_points} points"))
    if opts.include_control:
        scan = ricci_flatness_scan(perturbed_gh_metric(params, opts.control_coeff),
                                   nut_grid(eps_list[0], policy, params.exclusion), opts.fd_step, jobs,
                                   skip_failures=True)
        record("non_harmonic_control", eps_list[0], scan)
        verdicts.append(threshold_verdict("control_detected", scan.max_norm_ric, CONTROL_FLOOR, below=False,
                                          detail=f"V + {opts.control_coeff:g} u^2"))
    return ExperimentOutcome(columns, rows, verdicts)


@router.experiment(ExperimentName.CURVATURE_SWEEP)
def sweep(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """max |Rm(g_eps)| near the nut against eps^-1 log(1/eps)."""
    eps_list = config.eps_schedule.resolve()
    sweep_rows = curvature_sweep(eps_list, config.grid.policy, config.params, jobs=jobs)
    rows = []
    for r in sweep_rows:
        p = r.argmax_point
        rows.append(make_row(
            SWEEP_COLUMNS, eps=r.eps, max_norm_rm=r.max_norm_rm, ratio_upper=r.ratio_upper,
            ratio_lower=r.ratio_lower, argmax_u=p.u if p else None,
            argmax_y1=p.y1 if p else None, argmax_y2=p.y2 if p else None,
        ))

    uppers = [r.ratio_upper for r in sweep_rows if r.applicable]
    lowers = [r.ratio_lower for r in sweep_rows if r.applicable]
    degraded = [r.eps for r in sweep_rows if r.degraded]
    detail = f"degraded rows at eps={degraded}" if degraded else ""
    if uppers and min(uppers) > 0.0:
        spread = max(uppers) / min(uppers)
        center = math.sqrt(max(uppers) * min(uppers))
        verdicts = [
            threshold_verdict("ratio_upper_spread", spread, config.options.spread_limit, detail=detail),
            threshold_verdict("ratio_lower_positive", min(lowers), LOWER_FRACTION * center, below=False,
                              detail=f"band center {center:.6g}"),
        ]
    else:
        verdicts = [threshold_verdict("ratio_upper_spread", None, config.options.spread_limit,
                                      detail="no applicable rows")]

    # half-maximum radius in units of eps/beta
    applicable = [r for r in sweep_rows if r.applicable]
    radii = [r.half_max_radius / bubble_scale(r.eps) for r in applicable if r.half_max_radius]
    if radii and len(radii) == len(applicable):
        verdicts.append(threshold_verdict("bubble_radius_spread", max(radii) / min(radii), BUBBLE_SPREAD_LIMIT,
                                          detail=f"half-maximum radius {min(radii):.4g}..{max(radii):.4g} eps/beta"))
    else:
        verdicts.append(threshold_verdict("bubble_radius_spread", None, BUBBLE_SPREAD_LIMIT,
                                          detail="half-maximum radius missing"))

    ref_scale = None
    if sweep_rows and sweep_rows[0].applicable and sweep_rows[0].max_norm_rm > 0.0:
        e0 = sweep_rows[0].eps
        ref_scale = sweep_rows[0].max_norm_rm * e0 / math.log(1.0 / e0)
    series = {
        "eps": [r.eps for r in sweep_rows],
        "max_norm_rm": [r.max_norm_rm for r in sweep_rows],
        "reference": [ref_scale * math.log(1.0 / r.eps) / r.eps if ref_scale else None for r in sweep_rows],
    }
    return ExperimentOutcome(SWEEP_COLUMNS, rows, verdicts, series)
