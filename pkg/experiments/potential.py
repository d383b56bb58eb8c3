"""Potential and connection experiments: rescaling identity, harmonicity, dA = *dV."""

import logging
import math
from typing import List

import numpy as np

from gauge_connection import curl_residual
from lattice_potential import laplacian_residual, nearest_charge_distance, potential_arrays, unit_lattice
from models import ChartPoint3, ExperimentConfig, ExperimentName, GaugeId, PotentialParams
from router import ExperimentOutcome, ExperimentRouter, capture, make_row, threshold_verdict
from workers import gather

logger = logging.getLogger(__name__)

router = ExperimentRouter("potential")

HARMONIC_ANALYTIC_LIMIT = 1e-9
HARMONIC_FD_LIMIT = 1e-6
CONNECTION_LIMIT = 1e-6


def sample_regular(rng: np.random.Generator, count: int, min_distance: float,
                   box=(0.5, 1.0, 1.0), min_axis: float = 0.0) -> np.ndarray:
    """Uniform points in unit-lattice coordinates at least min_distance from every charge."""
    unit = PotentialParams(eps=1.0)
    half = np.asarray(box, dtype=float)
    out: List[np.ndarray] = []
    have = 0
    while have < count:
        pts = rng.uniform(-half, half, size=(2 * count, 3))
        ok = nearest_charge_distance(unit, pts) >= min_distance
        if min_axis > 0.0:
            ok &= np.hypot(pts[:, 1], pts[:, 2]) >= min_axis
        out.append(pts[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:count]


@router.experiment(ExperimentName.POTENTIAL_IDENTITY)
def potential_identity(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """eps V0(eps)(eps q) - V0(1)(q) - log(1/eps)/(2 pi) at random regular q."""
    columns = ["eps", "beta", "n_points", "max_residual", "max_err_bound", "error"]
    rng = np.random.default_rng(config.seed)
    eps_list = config.eps_schedule.resolve()
    per_eps = max(1, math.ceil(config.grid.n_points / len(eps_list)))
    samples = [sample_regular(rng, per_eps, config.grid.min_distance, box=(2.0, 1.5, 1.5))
               for _ in eps_list]

    def one(item):
        eps, q = item
        params = config.params.with_eps(eps)
        unit = unit_lattice(params)

        def residual():
            v_eps, _, _, err_eps = potential_arrays(params, eps * q, order=0, include_harmonic=False)
            v_one, _, _, err_one = potential_arrays(unit, q, order=0, include_harmonic=False)
            res = np.abs(eps * v_eps - v_one - params.beta)
            return float(res.max()), float(np.max(eps * err_eps + err_one))

        value, error = capture(residual)
        worst, bound = value if value else (None, None)
        return make_row(columns, eps=eps, beta=params.beta, n_points=len(q),
                        max_residual=worst, max_err_bound=bound, error=error)

    rows = gather(one, list(zip(eps_list, samples)), jobs)
    limit = 2.0 * config.params.tail_tol
    observed = [r["max_residual"] for r in rows]
    worst = None if any(v is None for v in observed) else max(observed)
    return ExperimentOutcome(columns, rows, [
        threshold_verdict("rescaling_identity", worst, limit,
                          detail=f"{sum(r['n_points'] for r in rows)} random points"),
    ])


def _physical_grid(config: ExperimentConfig, eps: float, rng: np.random.Generator,
                   off_string: bool) -> List[ChartPoint3]:
    d = config.grid.min_distance
    q = sample_regular(rng, config.grid.n_points, d, min_axis=d if off_string else 0.0)
    return [ChartPoint3.from_array(eps * x) for x in q]


@router.experiment(ExperimentName.HARMONICITY)
def harmonicity(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """Flat Laplacian of V: analytic Hessian trace and a 5-point stencil cross-check."""
    columns = ["eps", "n_points", "max_analytic", "max_finite_difference", "n_failed"]
    rng = np.random.default_rng(config.seed)
    rows = []
    for eps in config.eps_schedule.resolve():
        params = config.params.with_eps(eps)
        grid = _physical_grid(config, eps, rng, off_string=False)
        results = gather(lambda p: capture(laplacian_residual, params, p, config.options.fd_step), grid, jobs)
        good = [r for r, err in results if err is None]
        failed = len(results) - len(good)
        rows.append(make_row(
            columns, eps=eps, n_points=len(grid),
            max_analytic=max((abs(r.analytic) for r in good), default=None),
            max_finite_difference=max((abs(r.finite_difference) for r in good), default=None),
            n_failed=failed,
        ))
        logger.info("harmonicity eps=%.3e analytic=%s fd=%s failed=%d", eps,
                    rows[-1]["max_analytic"], rows[-1]["max_finite_difference"], failed)

    def worst(key):
        vals = [r[key] for r in rows]
        return None if any(v is None for v in vals) else max(vals)

    failed = sum(r["n_failed"] for r in rows)
    detail = f"{failed} points failed" if failed else ""
    return ExperimentOutcome(columns, rows, [
        threshold_verdict("laplacian_analytic", worst("max_analytic"), HARMONIC_ANALYTIC_LIMIT, detail=detail),
        threshold_verdict("laplacian_finite_difference", worst("max_finite_difference"), HARMONIC_FD_LIMIT,
                          detail=detail),
    ])


@router.experiment(ExperimentName.CONNECTION)
def connection(config: ExperimentConfig, jobs: int) -> ExperimentOutcome:
    """Componentwise curl A - grad V on an off-string grid, both string gauges."""
    columns = ["eps", "gauge", "n_points", "max_residual", "n_failed"]
    rng = np.random.default_rng(config.seed)
    rows = []
    for eps in config.eps_schedule.resolve():
        params = config.params.with_eps(eps)
        grid = _physical_grid(config, eps, rng, off_string=True)
        for gauge in (GaugeId.STRING_MINUS, GaugeId.STRING_PLUS):
            def one(p, gauge=gauge):
                step = config.options.fd_step or 1e-3 * min(
                    float(nearest_charge_distance(params, p.as_array())[0]), p.rho)
                return capture(curl_residual, params, p, gauge, step)

            results = gather(one, grid, jobs)
            values = [v for v, err in results if err is None]
            rows.append(make_row(columns, eps=eps, gauge=gauge.value, n_points=len(grid),
                                 max_residual=max(values, default=None),
                                 n_failed=len(results) - len(values)))
    observed = [r["max_residual"] for r in rows]
    worst = None if any(v is None for v in observed) else max(observed)
    return ExperimentOutcome(columns, rows, [
        threshold_verdict("curl_equals_grad", worst, CONNECTION_LIMIT),
    ])
