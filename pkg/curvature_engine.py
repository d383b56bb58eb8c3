"""
Riemann and Ricci curvature of any MetricField by finite differences.

Pipeline: metric components on a two-level stencil -> first and second
derivatives (central differences, one Richardson halving) -> Christoffel
symbols -> Riemann (all indices down) -> orthonormal frame via Cholesky.

Norms: |Rm|^2 = sum R_abcd^2 and |Ric|^2 = sum R_ab^2 in the orthonormal frame.
"""

import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from errors import OVCError, StepTooLarge
from metric_models import MetricField, cholesky_frame, gh_metric
from models import (
    ChartPoint3,
    ChartPoint4,
    CurvatureResult,
    GaugeId,
    GaugeScanResult,
    GridPolicy,
    PotentialParams,
    ScanResult,
    SweepRow,
)
from workers import gather

logger = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)
STEP_FACTOR = MACHINE_EPS ** (1.0 / 6.0)
_PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]


def _stencil(x0: np.ndarray, h: float) -> np.ndarray:
    pts = [x0]
    for step in (h, 0.5 * h):
        for a in range(4):
            for sign in (1.0, -1.0):
                x = x0.copy()
                x[a] += sign * step
                pts.append(x)
        for a, b in _PAIRS:
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                x = x0.copy()
                x[a] += sa * step
                x[b] += sb * step
                pts.append(x)
    return np.array(pts)


def _derivatives(G: np.ndarray, h: float, level: int):
    """dg[c, a, b] = d_c g_ab and ddg[c, d, a, b] at one stencil level."""
    step = h if level == 0 else 0.5 * h
    base = 1 + 32 * level
    g0 = G[0]
    dg = np.empty((4, 4, 4))
    ddg = np.empty((4, 4, 4, 4))
    for a in range(4):
        gp, gm = G[base + 2 * a], G[base + 2 * a + 1]
        dg[a] = (gp - gm) / (2.0 * step)
        ddg[a, a] = (gp - 2.0 * g0 + gm) / (step * step)
    for k, (a, b) in enumerate(_PAIRS):
        pp, pm, mp, mm = G[base + 8 + 4 * k: base + 12 + 4 * k]
        mixed = (pp - pm - mp + mm) / (4.0 * step * step)
        ddg[a, b] = mixed
        ddg[b, a] = mixed
    return dg, ddg


def _riemann_parts(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray):
    ginv = np.linalg.inv(g)
    # Gamma_{e b c} = (d_c g_eb + d_b g_ec - d_e g_bc) / 2, stored as first[e, b, c]
    first = 0.5 * (np.einsum("ceb->ebc", dg) + np.einsum("bec->ebc", dg) - dg)
    gamma = np.einsum("ef,fbc->ebc", ginv, first)
    second = 0.5 * (
        np.einsum("bcad->abcd", ddg)
        + np.einsum("adbc->abcd", ddg)
        - np.einsum("acbd->abcd", ddg)
        - np.einsum("bdac->abcd", ddg)
    )
    quad = (np.einsum("ebc,ef,fad->abcd", gamma, g, gamma)
            - np.einsum("ebd,ef,fac->abcd", gamma, g, gamma))
    return second, quad


def _to_frame(R: np.ndarray, E: np.ndarray) -> np.ndarray:
    return np.einsum("abcd,ai,bj,ck,dl->ijkl", R, E, E, E, E, optimize=True)


def _contract(Rhat: np.ndarray):
    ricci = np.einsum("ijil->jl", Rhat)
    return ricci, float(np.sqrt(np.sum(Rhat ** 2))), float(np.sqrt(np.sum(ricci ** 2)))


def riemann_at(g: MetricField, p: ChartPoint4, fd_step: Optional[float] = None,
               error_budget: Optional[float] = None, regauge: bool = True) -> CurvatureResult:
    x0 = p.as_array()
    h = fd_step if fd_step is not None else STEP_FACTOR * g.length_scale(x0)
    local = g.localized(x0, 1.5 * h, regauge)
    G = local.components(_stencil(x0, h))
    g0 = G[0]
    E = cholesky_frame(g0)

    dg_c, ddg_c = _derivatives(G, h, 0)
    dg_f, ddg_f = _derivatives(G, h, 1)
    dg = (4.0 * dg_f - dg_c) / 3.0
    ddg = (4.0 * ddg_f - ddg_c) / 3.0

    second, quad = _riemann_parts(g0, dg, ddg)
    Rhat = _to_frame(second + quad, E)
    s_fine, q_fine = _riemann_parts(g0, dg_f, ddg_f)
    Rhat_fine = _to_frame(s_fine + q_fine, E)

    roundoff = 1e3 * MACHINE_EPS * (np.max(np.abs(_to_frame(second, E)))
                                    + np.max(np.abs(_to_frame(quad, E))))
    est_error = float(max(np.max(np.abs(Rhat - Rhat_fine)), roundoff))
    if error_budget is not None and est_error > error_budget:
        raise StepTooLarge(est_error, error_budget, h)

    ricci, norm_rm, norm_ric = _contract(Rhat)
    return CurvatureResult(
        riemann=Rhat,
        ricci=ricci,
        norm_rm=norm_rm,
        norm_ric=norm_ric,
        fd_step=h,
        est_error=est_error,
        point=p,
    )


def symmetry_residual(result: CurvatureResult) -> float:
    R = result.riemann
    checks = [
        R + np.einsum("abcd->bacd", R),
        R + np.einsum("abcd->abdc", R),
        R - np.einsum("abcd->cdab", R),
        R + np.einsum("abcd->acdb", R) + np.einsum("abcd->adbc", R),
    ]
    return float(max(np.max(np.abs(c)) for c in checks))


def reframe(result: CurvatureResult, O: np.ndarray) -> CurvatureResult:
    """Express the curvature in the rotated orthonormal frame e'_i = e_a O_ai."""
    Rhat = _to_frame(result.riemann, O)
    ricci, norm_rm, norm_ric = _contract(Rhat)
    return CurvatureResult(Rhat, ricci, norm_rm, norm_ric, result.fd_step,
                           result.est_error, result.point)


def ricci_flatness_scan(g: MetricField, grid: Sequence[ChartPoint4],
                        fd_step: Optional[float] = None, jobs: int = 1,
                        skip_failures: bool = False) -> ScanResult:
    outcomes = gather(lambda p: riemann_at(g, p, fd_step), grid, jobs,
                      return_exceptions=skip_failures)
    best, argmax, failed = 0.0, None, 0
    for p, res in zip(grid, outcomes):
        if isinstance(res, Exception):
            if not isinstance(res, OVCError):
                raise res
            failed += 1
            logger.debug("ricci scan point %s failed: %s", p, res)
            continue
        if argmax is None or res.norm_ric > best:
            best, argmax = res.norm_ric, p
    logger.info("ricci scan: max |Ric| = %.3e over %d points (%d failed)", best, len(grid), failed)
    return ScanResult(max_norm_ric=best, argmax=argmax, n_points=len(grid), n_failed=failed)


def gauge_covariance_scan(params: PotentialParams, grid: Sequence[ChartPoint4],
                          fd_step: Optional[float] = None, jobs: int = 1,
                          skip_failures: bool = False) -> GaugeScanResult:
    """Compare |Rm| and |Ric| of gh_metric in the StringMinus and StringPlus gauges.

    Both fields are evaluated as declared (no regauging), so their components
    differ while the invariants must not.
    """
    minus = gh_metric(params, GaugeId.STRING_MINUS)
    plus = gh_metric(params, GaugeId.STRING_PLUS)

    def pair(p):
        return (riemann_at(minus, p, fd_step, regauge=False),
                riemann_at(plus, p, fd_step, regauge=False))

    outcomes = gather(pair, grid, jobs, return_exceptions=skip_failures)
    worst, ric_diff, argmax, failed = 0.0, 0.0, None, 0
    for p, res in zip(grid, outcomes):
        if isinstance(res, Exception):
            if not isinstance(res, OVCError):
                raise res
            failed += 1
            continue
        a, b = res
        rel = abs(a.norm_rm - b.norm_rm) / max(a.norm_rm, b.norm_rm, MACHINE_EPS)
        ric_diff = max(ric_diff, abs(a.norm_ric - b.norm_ric))
        if argmax is None or rel > worst:
            worst, argmax = rel, p
    logger.info("gauge scan: max relative |Rm| gap = %.3e, max |Ric| gap = %.3e over %d points",
                worst, ric_diff, len(grid))
    return GaugeScanResult(max_rel_rm=worst, max_ric_diff=ric_diff, argmax=argmax,
                           n_points=len(grid), n_failed=failed)


def bubble_scale(eps: float) -> float:
    beta = math.log(1.0 / eps) / (2.0 * math.pi)
    return eps / beta if beta > 0.0 else 1.0


def radial_range(eps: float, policy: GridPolicy, exclusion: Optional[float] = None):
    exclusion = 1e-3 * eps if exclusion is None else exclusion
    scale = bubble_scale(eps)
    hi = min(policy.radial_max * scale, policy.period_fraction * eps)
    lo = max(policy.radial_min * scale, 2.0 * exclusion)
    if lo >= hi:
        lo = 0.1 * hi
    return lo, hi


def nut_grid(eps: float, policy: GridPolicy, exclusion: Optional[float] = None) -> List[ChartPoint4]:
    """Logarithmic radial grid around the nut at the origin."""
    lo, hi = radial_range(eps, policy, exclusion)
    radii = np.geomspace(lo, hi, policy.n_radial)
    grid = []
    for theta in policy.polar_angles:
        for k in range(policy.n_azimuth):
            phi = 2.0 * math.pi * k / policy.n_azimuth + 0.3
            direction = np.array([math.cos(theta), math.sin(theta) * math.cos(phi),
                                  math.sin(theta) * math.sin(phi)])
            for r in radii:
                grid.append(ChartPoint4(ChartPoint3.from_array(r * direction), 0.0))
    return grid


def half_max_radius(g: MetricField, peak_point: ChartPoint3, peak: float,
                    outer: float) -> Optional[float]:
    """Radius along the ray through peak_point where the monotone |Rm| drops to peak / 2."""
    direction = peak_point.as_array() / peak_point.norm

    def excess(r):
        p = ChartPoint4(ChartPoint3.from_array(r * direction), 0.0)
        return riemann_at(g, p).norm_rm - 0.5 * peak

    inner = peak_point.norm
    if outer <= inner or excess(outer) >= 0.0:
        return None
    return float(brentq(excess, inner, outer, rtol=1e-6))


def curvature_sweep(eps_list: Sequence[float], grid_policy: GridPolicy,
                    params: Optional[PotentialParams] = None,
                    gauge: GaugeId = GaugeId.STRING_MINUS,
                    field_factory: Optional[Callable[[float], MetricField]] = None,
                    jobs: int = 1, measure_radius: bool = True) -> List[SweepRow]:
    """max |Rm(g_eps)| near the nut for each eps, with the two scaling ratios.

    |Rm| peaks at the nut itself, so the grid maximum sits on the innermost
    radius; the bubble size is reported as the radius where |Rm| halves.
    """
    template = params or PotentialParams(eps=0.5)
    rows = []
    for eps in eps_list:
        if field_factory is not None:
            g = field_factory(eps)
            exclusion = 1e-3 * eps
        else:
            local = template.with_eps(eps)
            g = gh_metric(local, gauge)
            exclusion = local.exclusion
        grid = nut_grid(eps, grid_policy, exclusion)
        outcomes = gather(lambda p: riemann_at(g, p), grid, jobs, return_exceptions=True)
        best, argmax, failed = 0.0, None, 0
        for p, res in zip(grid, outcomes):
            if isinstance(res, Exception):
                if not isinstance(res, OVCError):
                    raise res
                failed += 1
                continue
            if argmax is None or res.norm_rm > best:
                best, argmax = res.norm_rm, p.base

        radius = None
        if measure_radius and argmax is not None:
            try:
                radius = half_max_radius(g, argmax, best, radial_range(eps, grid_policy, exclusion)[1])
            except OVCError as exc:
                logger.warning("half-maximum radius at eps=%.3e not found: %s", eps, exc)

        log_inv = math.log(1.0 / eps)
        applicable = log_inv > 0.0
        row = SweepRow(
            eps=eps,
            max_norm_rm=best,
            argmax_point=argmax,
            ratio_upper=best * eps / log_inv if applicable else None,
            ratio_lower=best * eps * log_inv ** 2 if applicable else None,
            applicable=applicable,
            degraded=failed > 0.01 * len(grid),
            n_failed=failed,
            half_max_radius=radius,
        )
        logger.info(
            "sweep eps=%.3e max|Rm|=%.6e argmax_r=%s half_max_r=%s failed=%d",
            eps, best, f"{argmax.norm:.3e}" if argmax else "-",
            f"{radius:.3e}" if radius else "-", failed,
        )
        rows.append(row)
    return rows
