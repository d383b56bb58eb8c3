"""
Three-scale analysis of the collapsing model near a nut.

With beta = log(1/eps) / (2 pi) and d the distance from p0 to the nut in
eps^-1 g_eps, a point sits in the Bubble (d <= R0 beta^-1/2), the Neck
(d beta^1/2 large and d beta^-1/2 small) or the Outer region
(r0 beta^1/2 <= d <= C0 beta^1/2).  Each region has a limit model which the
checks here compare against on fixed grids in rescaled coordinates.

Coordinates: s = u / eps, v = y / eps are the unit-lattice coordinates in which
eps^-1 g_eps = V1 (ds^2 + dv^2) + V1^-1 theta0^2.
"""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from errors import AmbiguousRegion, GridTooCoarse, InvalidSchedule
from lattice_potential import (
    CHARGE_COEFFICIENT,
    nearest_charge_distance,
    potential_arrays,
    rescaled_arrays,
    unit_lattice,
)
from metric_models import (
    MetricField,
    cholesky_frame,
    gh_metric,
    metric_difference,
    rescale,
    taub_nut,
)
from models import (
    ChartPoint3,
    ConvergenceReport,
    GaugeId,
    PotentialParams,
    Region,
    RegionCase,
    RegionThresholds,
    StabilityVerdict,
)
from workers import gather

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def beta_of(eps: float) -> float:
    return math.log(1.0 / eps) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def region_case(eps: float, d: float, thresholds: RegionThresholds) -> RegionCase:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1) for region classification, got {eps}")
    beta = beta_of(eps)
    root = math.sqrt(beta)
    labels = []
    if d <= thresholds.R0 / root:
        labels.append(Region.BUBBLE)
    if d * root >= thresholds.neck_lower and d / root <= thresholds.neck_upper:
        labels.append(Region.NECK)
    if thresholds.r0 * root <= d <= thresholds.C0 * root:
        labels.append(Region.OUTER)
    if len(labels) != 1:
        raise AmbiguousRegion(eps, d, [label.value for label in labels])

    region = labels[0]
    case = RegionCase(region=region, eps=eps, beta=beta, d=d, r_excision=None)
    if region is Region.NECK:
        case.gammasq = d * root
        case.r_excision = math.sqrt(case.gammasq) / beta
    elif region is Region.OUTER:
        case.r_excision = beta ** -0.75
        case.gamma0sq = beta / (d * d)
    return case


def classify_region(eps: float, p0: ChartPoint3, thresholds: RegionThresholds,
                    params: Optional[PotentialParams] = None) -> RegionCase:
    """Region of the physical point p0 with d measured numerically."""
    params = (params or PotentialParams(eps=eps)).with_eps(eps)
    d, fiber = nut_distance(params, p0)
    logger.info("classify eps=%.3e d=%.6g (fiber correction %.3e)", eps, d, fiber)
    return region_case(eps, d, thresholds)


# ---------------------------------------------------------------------------
# Distances and diameters in eps^-1 g_eps
# ---------------------------------------------------------------------------

def _v1(params: PotentialParams, sv) -> np.ndarray:
    return rescaled_arrays(params, sv, order=0)[0]


def _inner_segment(c: float, K: float, length: float) -> float:
    """int_0^length sqrt(c / rho + K) d rho with rho = tau^2."""
    value, _ = quad(lambda tau: 2.0 * math.sqrt(max(c + K * tau * tau, 0.0)), 0.0, math.sqrt(length))
    return value


def ray_integral(params: PotentialParams, direction, r: float) -> float:
    """int_0^r sqrt(V1(rho e)) d rho from the nut along the unit vector e."""
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    r_in = min(r, 4.0 * unit_lattice(params).exclusion)
    v_in = float(_v1(params, r_in * e)[0])
    inner = _inner_segment(CHARGE_COEFFICIENT, v_in - CHARGE_COEFFICIENT / r_in, r_in)
    if r <= r_in:
        return inner

    def integrand(tau):
        return 2.0 * tau * math.sqrt(float(_v1(params, tau * tau * e)[0]))

    outer, _ = quad(integrand, math.sqrt(r_in), math.sqrt(r), epsabs=1e-11, epsrel=1e-10, limit=200)
    return inner + outer


def _graph_distance(params: PotentialParams, q: np.ndarray, n_cells: int) -> float:
    hs = float(np.linalg.norm(q)) / n_cells
    margin = 0.25 * float(np.linalg.norm(q)) + hs
    lo = np.floor((np.minimum(q, 0.0) - margin) / hs).astype(int)
    hi = np.ceil((np.maximum(q, 0.0) + margin) / hs).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    shape = tuple(len(ax) for ax in axes)
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    coords = idx * hs
    origin = int(np.flatnonzero(np.all(idx == 0, axis=1))[0])

    unit = unit_lattice(params)
    valid = nearest_charge_distance(unit, coords) >= 0.5 * hs
    valid[origin] = True
    root_v = np.full(coords.shape[0], np.nan)
    mask = valid.copy()
    mask[origin] = False
    root_v[mask] = np.sqrt(np.maximum(_v1(params, coords[mask]), 0.0))

    flat = np.arange(coords.shape[0]).reshape(shape)
    src_all, dst_all, w_all = [], [], []
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=3) if o > (0, 0, 0)]
    for off in offsets:
        sl_src = tuple(slice(max(0, -o), n - max(0, o)) for o, n in zip(off, shape))
        sl_dst = tuple(slice(max(0, o), n - max(0, -o)) for o, n in zip(off, shape))
        src = flat[sl_src].ravel()
        dst = flat[sl_dst].ravel()
        keep = valid[src] & valid[dst]
        src, dst = src[keep], dst[keep]
        length = hs * math.sqrt(sum(o * o for o in off))
        w = 0.5 * (root_v[src] + root_v[dst]) * length
        touching = (src == origin) | (dst == origin)
        for i in np.flatnonzero(touching):
            other = dst[i] if src[i] == origin else src[i]
            K = root_v[other] ** 2 - CHARGE_COEFFICIENT / length
            w[i] = _inner_segment(CHARGE_COEFFICIENT, K, length)
        src_all.append(src)
        dst_all.append(dst)
        w_all.append(w)

    n = coords.shape[0]
    graph = coo_matrix((np.concatenate(w_all), (np.concatenate(src_all), np.concatenate(dst_all))),
                       shape=(n, n)).tocsr()
    dist = dijkstra(graph, directed=False, indices=origin)
    target_idx = np.rint(q / hs).astype(int)
    target = int(flat[tuple(target_idx - lo)])
    if not valid[target]:
        return math.inf
    tail = np.linalg.norm(q - target_idx * hs)
    if target == origin:
        return ray_integral(params, q, float(np.linalg.norm(q)))
    tail_w = 0.5 * (root_v[target] + math.sqrt(float(_v1(params, q)[0]))) * tail
    return float(dist[target] + tail_w)


def nut_distance(params: PotentialParams, p0: ChartPoint3, n_cells: int = 16) -> Tuple[float, float]:
    """Distance from p0 (physical coordinates) to the nut in eps^-1 g_eps.

    Returns (d, fiber_correction): the base distance, taken as the shorter of
    the straight ray and a 26-connected grid path, and half the fiber length
    at p0, which bounds the vertical contribution.
    """
    q = p0.as_array() / params.eps
    r = float(np.linalg.norm(q))
    if r <= unit_lattice(params).exclusion:
        return 0.0, 0.0
    d_ray = ray_integral(params, q, r)
    d_graph = _graph_distance(params, q, n_cells) if r >= 0.05 else math.inf
    fiber = 0.5 / math.sqrt(float(_v1(params, q)[0]))
    logger.debug("nut distance: ray=%.6g graph=%.6g", d_ray, d_graph)
    return min(d_ray, d_graph), fiber


def diameter_integral(r: float, beta: float) -> float:
    """int_0^r (1/rho + 2 beta)^(1/2) d rho."""
    value, _ = quad(lambda tau: 2.0 * math.sqrt(1.0 + 2.0 * beta * tau * tau), 0.0, math.sqrt(r),
                    epsabs=1e-13, epsrel=1e-12)
    return value


def diameter_chain(r: float, beta: float) -> float:
    return 2.0 * math.sqrt(r) + 2.0 * math.sqrt(beta) * r


def singular_fiber_diameter(params: PotentialParams) -> float:
    """Distance from the nut to the antipodal point of the singular fiber circle."""
    return ray_integral(params, (1.0, 0.0, 0.0), 0.5)


def frame_deviation(g_test: MetricField, g_ref: MetricField, coords: np.ndarray) -> float:
    coords = np.atleast_2d(coords)
    ref = g_ref.components(coords)
    E = cholesky_frame(ref)
    diff = g_test.components(coords) - ref
    dev = np.einsum("mai,mab,mbj->mij", E, diff, E)
    return float(np.max(np.abs(dev)))


# ---------------------------------------------------------------------------
# Comparison grids
# ---------------------------------------------------------------------------

def off_axis_directions(count: int, max_cos: float = 0.7) -> np.ndarray:
    """Deterministic spiral of unit vectors with |cos(angle to the u-axis)| <= max_cos."""
    i = np.arange(count) + 0.5
    cos_t = max_cos * (1.0 - 2.0 * i / count)
    sin_t = np.sqrt(1.0 - cos_t ** 2)
    phi = GOLDEN_ANGLE * np.arange(count)
    return np.stack([cos_t, sin_t * np.cos(phi), sin_t * np.sin(phi)], axis=1)


def _shell_grid(radii: Sequence[float], directions: np.ndarray) -> np.ndarray:
    return np.concatenate([r * directions for r in radii], axis=0)


def _check_trend(values: Sequence[float], increasing: bool, label: str) -> None:
    for a, b in zip(values, values[1:]):
        if (b <= a) if increasing else (b >= a):
            raise InvalidSchedule(f"{label} is not {'increasing' if increasing else 'decreasing'}: {values}")


# ---------------------------------------------------------------------------
# Region checks
# ---------------------------------------------------------------------------

def region1_check(eps_list: Sequence[float], R0: float = 1.0,
                  params: Optional[PotentialParams] = None,
                  radii: Optional[Sequence[float]] = None, n_directions: int = 6,
                  c_star: float = CHARGE_COEFFICIENT,
                  gauge: GaugeId = GaugeId.STRING_MINUS, jobs: int = 1) -> List[ConvergenceReport]:
    """Bubble limit: rescaled potential and metric against Taub-NUT(c_star)."""
    template = params or PotentialParams(eps=0.5)
    radii = [r for r in (radii or np.linspace(0.1, 1.0, 5) * R0) if 0.1 <= r <= R0]
    w = _shell_grid(radii, off_axis_directions(n_directions))
    coords = np.concatenate([w, np.zeros((w.shape[0], 1))], axis=1)
    limit = taub_nut(c_star, gauge)

    def one(eps: float) -> ConvergenceReport:
        p = template.with_eps(eps)
        beta = beta_of(eps)
        rho_w = np.linalg.norm(w, axis=1)
        v1 = _v1(p, w / beta)
        pot_dev = float(np.max(np.abs(v1 / beta - (c_star / rho_w + 1.0))))

        scale = eps / beta
        g_sharp = rescale(gh_metric(p, gauge), beta / eps, coord_scale=[scale, scale, scale, 1.0])
        metric_dev = frame_deviation(g_sharp, limit, coords)

        unit_pt = np.array([[1.0 / beta, 0.0, 0.0]])
        g_tt = beta / float(_v1(p, unit_pt)[0])
        e0 = w[np.argmax(rho_w)] / np.max(rho_w) * R0
        v1_r0 = float(_v1(p, e0 / beta)[0])
        v0_tilde = float(potential_arrays(unit_lattice(p), e0 / beta, order=0, include_harmonic=False)[0][0])
        decomposition = (v1_r0 / beta - 1.0 - c_star / R0) - (v0_tilde - c_star * beta / R0) / beta
        aux = {
            "potential_dev": pot_dev,
            "metric_dev": metric_dev,
            "g_tt_unit": g_tt,
            "g_tt_unit_dev": abs(g_tt - 1.0 / (1.0 + c_star)),
            "decomposition_residual": math.nan if p.h_coeffs else abs(decomposition),
            "pointed_radius": R0 / math.sqrt(beta),
        }
        logger.info("region1 eps=%.3e beta=%.3f pot_dev=%.4e metric_dev=%.4e",
                    eps, beta, pot_dev, metric_dev)
        return ConvergenceReport(eps=eps, beta=beta, sup_dev=max(pot_dev, metric_dev),
                                 excised=f"punctured ball {min(radii):g} <= |w| <= {R0:g}", aux=aux)

    return gather(one, eps_list, jobs)


def region2_check(eps_list: Sequence[float], d_schedule: Union[float, Sequence[float]] = 0.25,
                  params: Optional[PotentialParams] = None, w_radius: float = 1.0,
                  n_radial: int = 6, n_directions: int = 6, jobs: int = 1) -> List[ConvergenceReport]:
    """Neck limit: g# against flat R^3 on the annulus outside W_k.

    ``d_schedule`` is either an exponent p (d = beta^p) or explicit d values.
    """
    template = params or PotentialParams(eps=0.5)
    betas = [beta_of(e) for e in eps_list]
    if isinstance(d_schedule, (int, float)):
        ds = [b ** float(d_schedule) for b in betas]
    else:
        ds = list(d_schedule)
    if len(ds) != len(eps_list):
        raise InvalidSchedule("d_schedule length does not match eps_list")
    _check_trend([d * math.sqrt(b) for d, b in zip(ds, betas)], True, "d beta^(1/2)")
    _check_trend([d / math.sqrt(b) for d, b in zip(ds, betas)], False, "d beta^(-1/2)")
    directions = off_axis_directions(n_directions, max_cos=0.5)

    def one(item) -> ConvergenceReport:
        eps, beta, d = item
        p = template.with_eps(eps)
        gammasq = d * math.sqrt(beta)
        r_k = math.sqrt(gammasq) / beta
        rho_out = w_radius * d / math.sqrt(beta)
        if rho_out <= r_k:
            raise InvalidSchedule(f"annulus is empty at eps={eps:.3e}: r_k={r_k:.3g} >= {rho_out:.3g}")
        sv = _shell_grid(np.geomspace(r_k, rho_out, n_radial), directions)
        v1 = _v1(p, sv)
        pot_dev = float(np.max(np.abs(v1 / beta - 1.0)))
        fiber_sup = float(np.max(1.0 / (d * d * v1)))

        ray_dir = np.array([0.0, 1.0, 0.0])
        along = np.linspace(r_k / 50.0, r_k, 25)[:, None] * ray_dir
        c_fiber = float(np.max(np.sqrt(beta / _v1(p, along))))
        ray = ray_integral(p, ray_dir, r_k)
        excision = (ray + c_fiber / math.sqrt(beta)) / d
        chain = diameter_chain(r_k, beta) / d + c_fiber / (math.sqrt(beta) * d)

        v0 = np.array([0.0, d / math.sqrt(beta), 0.0])
        horizontal, _ = quad(lambda s: math.sqrt(float(_v1(p, v0 + [s, 0.0, 0.0])[0])), -0.5, 0.5)
        aux = {
            "potential_dev": pot_dev,
            "gamma_inv_c": CHARGE_COEFFICIENT / math.sqrt(gammasq),
            "fiber_sup": fiber_sup,
            "excision_bound": excision,
            "excision_chain": chain,
            "chain_margin": chain - excision,
            "c_fiber": c_fiber,
            "horizontal_length": horizontal / d,
            "horizontal_lower": math.sqrt(beta) / (c_fiber * d),
            "d": d,
            "r_excision": r_k,
        }
        logger.info("region2 eps=%.3e beta=%.3f d=%.4f pot_dev=%.4e fiber=%.4e excision=%.4e",
                    eps, beta, d, pot_dev, fiber_sup, excision)
        return ConvergenceReport(eps=eps, beta=beta, sup_dev=pot_dev,
                                 excised=f"ball rho_s < {r_k:.6g} around the nut", aux=aux)

    return gather(one, list(zip(eps_list, betas, ds)), jobs)


def region3_check(eps_list: Sequence[float], kappa: float = 1.0,
                  params: Optional[PotentialParams] = None, v_max: float = 1.0,
                  n_s: int = 9, n_v: int = 6, n_phi: int = 4, jobs: int = 1) -> List[ConvergenceReport]:
    """Outer limit: d^-2 V1 against gamma0^2 = kappa^-2 on S^1 x R^2 with W_k removed."""
    template = params or PotentialParams(eps=0.5)
    if not kappa > 0.0:
        raise InvalidSchedule("kappa must be positive")

    s_axis = np.linspace(-0.5, 0.5, n_s)
    radial = np.geomspace(0.02, v_max, n_v)
    phis = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False) + 0.2
    base = np.array([[s, r * math.cos(f), r * math.sin(f)]
                     for s in s_axis for r in radial for f in phis])

    def one(eps: float) -> ConvergenceReport:
        p = template.with_eps(eps)
        beta = beta_of(eps)
        d = kappa * math.sqrt(beta)
        gamma0sq = beta / (d * d)
        r_k = beta ** -0.75
        keep = nearest_charge_distance(unit_lattice(p), base) >= r_k
        v1 = _v1(p, base[keep])
        dev = float(np.max(np.abs(v1 / (d * d) - gamma0sq)))
        fiber_c = float(np.max(beta * beta / (d * d * v1)))

        v0 = np.array([0.0, 0.5 * v_max, 0.0])
        length, _ = quad(lambda s: math.sqrt(float(_v1(p, v0 + [s, 0.0, 0.0])[0])), -0.5, 0.5)
        length /= d
        aux = {
            "potential_dev": dev,
            "fiber_constant": fiber_c,
            "horizontal_length": length,
            "horizontal_ratio": length * d / math.sqrt(beta),
            "scale_ratio": math.sqrt(beta) / d,
            "gamma0sq": gamma0sq,
            "r_excision": r_k,
            "n_points": float(np.count_nonzero(keep)),
        }
        logger.info("region3 eps=%.3e beta=%.3f dev=%.4e fiber_C=%.4f", eps, beta, dev, fiber_c)
        return ConvergenceReport(eps=eps, beta=beta, sup_dev=dev,
                                 excised=f"ball of radius {r_k:.6g} around each charge", aux=aux)

    return gather(one, list(eps_list), jobs)


# ---------------------------------------------------------------------------
# Stability of limits under C^k-small perturbations
# ---------------------------------------------------------------------------

def _diff_derivatives(h: MetricField, g: MetricField, x: np.ndarray, step: float):
    """delta, d delta, dd delta at x by central differences (step and step/2)."""
    def at(st):
        pts = [x]
        for a in range(4):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[a] += sgn * st
                pts.append(y)
        for a in range(4):
            for b in range(a + 1, 4):
                for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    y = x.copy()
                    y[a] += sa * st
                    y[b] += sb * st
                    pts.append(y)
        D = metric_difference(h, g, np.array(pts))
        d1 = np.empty((4, 4, 4))
        d2 = np.empty((4, 4, 4, 4))
        for a in range(4):
            d1[a] = (D[1 + 2 * a] - D[2 + 2 * a]) / (2.0 * st)
            d2[a, a] = (D[1 + 2 * a] - 2.0 * D[0] + D[2 + 2 * a]) / (st * st)
        k = 9
        for a in range(4):
            for b in range(a + 1, 4):
                pp, pm, mp, mm = D[k: k + 4]
                d2[a, b] = d2[b, a] = (pp - pm - mp + mm) / (4.0 * st * st)
                k += 4
        return D[0], d1, d2

    d0, d1c, d2c = at(step)
    _, d1f, d2f = at(0.5 * step)
    d1 = (4.0 * d1f - d1c) / 3.0
    d2 = (4.0 * d2f - d2c) / 3.0
    return d0, d1, d2, np.max(np.abs(d1 - d1f)), np.max(np.abs(d2 - d2f))


def _strictly_decreasing_to_zero(values: Sequence[float], tol: float) -> bool:
    if all(v == 0.0 for v in values):
        return True
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    return decreasing and values[-1] <= tol


def limit_stability_compare(g_seq: Sequence[MetricField], h_seq: Sequence[MetricField],
                            lambda_seq: Sequence[float], k_max: int,
                            grid: Union[np.ndarray, Sequence[np.ndarray]],
                            tol: float = 1e-3, fd_fraction: float = 1e-2) -> StabilityVerdict:
    """D_i = max_k lambda_i^(-k/2) |d^k (h_i - g_i)|_{g_i} on the grid.

    PASS iff D_i and the componentwise sup |lambda_i (h_i - g_i)| both decrease
    to below ``tol`` (identically zero sequences pass).
    """
    if not 0 <= k_max <= 2:
        raise ValueError("k_max must be 0, 1 or 2")
    if not len(g_seq) == len(h_seq) == len(lambda_seq):
        raise ValueError("sequences must have equal length")
    grids = [np.atleast_2d(grid)] * len(g_seq) if isinstance(grid, np.ndarray) else [np.atleast_2d(x) for x in grid]

    D_seq, rescaled_seq, fd_seq = [], [], []
    for i, (g, h, lam) in enumerate(zip(g_seq, h_seq, lambda_seq)):
        pts = grids[i]
        E_all = cholesky_frame(g.components(pts))
        best = [0.0, 0.0, 0.0]
        fd_err = 0.0
        raw = 0.0
        for x, E in zip(pts, E_all):
            step = fd_fraction * g.length_scale(x)
            d0, d1, d2, e1, e2 = _diff_derivatives(h, g, x, step)
            raw = max(raw, float(np.max(np.abs(lam * d0))))
            best[0] = max(best[0], float(np.max(np.abs(E.T @ d0 @ E))))
            if k_max >= 1:
                f1 = np.einsum("cab,ci,aj,bk->ijk", d1, E, E, E)
                best[1] = max(best[1], float(np.max(np.abs(f1))))
                scale1 = float(np.max(np.abs(E))) ** 3
                fd_err = max(fd_err, lam ** -0.5 * e1 * scale1)
            if k_max >= 2:
                f2 = np.einsum("cdab,ci,dj,ak,bl->ijkl", d2, E, E, E, E)
                best[2] = max(best[2], float(np.max(np.abs(f2))))
                scale2 = float(np.max(np.abs(E))) ** 4
                fd_err = max(fd_err, lam ** -1.0 * e2 * scale2)
        D = max(lam ** (-k / 2.0) * best[k] for k in range(k_max + 1))
        if fd_err > D > 0.0:
            raise GridTooCoarse(fd_err, D, i)
        D_seq.append(D)
        rescaled_seq.append(raw)
        fd_seq.append(fd_err)
        logger.info("stability i=%d lambda=%.3e D=%.4e rescaled=%.4e fd=%.2e", i, lam, D, raw, fd_err)

    passed = (_strictly_decreasing_to_zero(D_seq, tol)
              and _strictly_decreasing_to_zero(rescaled_seq, tol))
    reason = "" if passed else f"D={D_seq}, rescaled={rescaled_seq}"
    return StabilityVerdict(passed=passed, D=D_seq, rescaled_sup=rescaled_seq, fd_error=fd_seq, reason=reason)
