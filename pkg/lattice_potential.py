"""
Regularized periodic-monopole potential V0, the full potential V and the
rescaled V1, with value, gradient and Hessian.

The charges sit at (n*eps, 0, 0).  Terms n and -n are paired before the
constants a_n are subtracted, so every pair is O(n^-3).  Beyond the cut the
pairs are expanded in even zonal harmonics; the orders 2..tail_order are
summed exactly with the Hurwitz zeta function and the rest is carried as a
certified bound.
"""

import logging
import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P
from scipy.special import zeta

from errors import NegativePotential, PointTooCloseToCharge, TolUnreachable
from models import (
    ChartPoint3,
    LaplacianResidual,
    PotentialParams,
    PotentialValue,
    TruncationPlan,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
CHARGE_COEFFICIENT = 1.0 / FOUR_PI
MIN_TERMS = 16
_BLOCK_BUDGET = 2 ** 18


# ---------------------------------------------------------------------------
# Zonal harmonics r^k P_k(u/r) as polynomials in (u, s = r^2)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def zonal_coefficients(k: int) -> np.ndarray:
    a = legendre.leg2poly([0.0] * k + [1.0])
    C = np.zeros((k + 1, k // 2 + 1))
    for m, am in enumerate(a):
        if am != 0.0 and (k - m) % 2 == 0:
            C[m, (k - m) // 2] = am
    return C


@lru_cache(maxsize=None)
def stream_coefficients(k: int) -> np.ndarray:
    """Q_k with rho^2 Q_k(u, s) = r^(k+1) sin^2(theta) P_k'(u/r) / (k+1)."""
    b = P.polyder(legendre.leg2poly([0.0] * k + [1.0])) / (k + 1)
    C = np.zeros((k, k // 2 + 1))
    for m, bm in enumerate(b):
        if bm != 0.0 and (k - 1 - m) % 2 == 0:
            C[m, (k - 1 - m) // 2] = bm
    return C


def radial_polynomial(C: np.ndarray, xyz: np.ndarray, order: int = 2):
    """Value, gradient and Hessian of F(u, y) = C(u, u^2 + |y|^2)."""
    u = xyz[:, 0]
    s = np.einsum("ij,ij->i", xyz, xyz)
    val = P.polyval2d(u, s, C)
    if order == 0:
        return val, None, None

    Cu = P.polyder(C, axis=0)
    Cs = P.polyder(C, axis=1)
    pu = P.polyval2d(u, s, Cu)
    ps = P.polyval2d(u, s, Cs)
    grad = np.empty_like(xyz)
    grad[:, 0] = pu + 2.0 * u * ps
    grad[:, 1:] = 2.0 * xyz[:, 1:] * ps[:, None]
    if order == 1:
        return val, grad, None

    puu = P.polyval2d(u, s, P.polyder(Cu, axis=0))
    pus = P.polyval2d(u, s, P.polyder(Cu, axis=1))
    pss = P.polyval2d(u, s, P.polyder(Cs, axis=1))
    y = xyz[:, 1:]
    hess = np.zeros(xyz.shape + (3,))
    hess[:, 0, 0] = puu + 4.0 * u * pus + 2.0 * ps + 4.0 * u * u * pss
    mixed = 2.0 * y * (pus + 2.0 * u * pss)[:, None]
    hess[:, 0, 1:] = mixed
    hess[:, 1:, 0] = mixed
    hess[:, 1:, 1:] = (
        4.0 * pss[:, None, None] * y[:, :, None] * y[:, None, :]
        + 2.0 * ps[:, None, None] * np.eye(2)
    )
    return val, grad, hess


# ---------------------------------------------------------------------------
# Truncation bounds and plans
# ---------------------------------------------------------------------------

def value_tail_bound(xi: float, n_terms: int, order: int) -> float:
    """Bound on the dropped zonal orders of sum_{n > N} of the paired terms.

    ``xi`` is the distance to the central charge in lattice units.  The result
    is in lattice units and still has to be divided by 4*pi*eps.
    """
    t = xi / (n_terms + 1)
    if t >= 1.0:
        return math.inf
    return 2.0 * xi ** (order + 2) * float(zeta(order + 3, n_terms + 1)) / (1.0 - t * t)


def stream_tail_bound(xi: float, n_terms: int, order: int) -> float:
    """Same for the stream function of the connection (|P_k'| <= k(k+1)/2)."""
    t = xi / (n_terms + 1)
    if t >= 1.0:
        return math.inf
    w = 1.0 - t * t
    bracket = (order + 2) / w + 2.0 * t * t / (w * w)
    return xi ** (order + 3) * float(zeta(order + 3, n_terms + 1)) * bracket


def period_shift(params: PotentialParams, u) -> np.ndarray:
    return np.rint(np.asarray(u, dtype=float) / params.eps).astype(np.int64)


def nearest_charge_distance(params: PotentialParams, xyz: np.ndarray) -> np.ndarray:
    xyz = np.atleast_2d(xyz)
    du = xyz[:, 0] - period_shift(params, xyz[:, 0]) * params.eps
    return np.sqrt(du * du + xyz[:, 1] ** 2 + xyz[:, 2] ** 2)


def truncation_bound(params: PotentialParams, p: ChartPoint3, n_terms: int) -> float:
    """Certified bound on the truncation error of V0 at p with n_terms pairs."""
    xi = float(nearest_charge_distance(params, p.as_array())[0]) / params.eps
    return value_tail_bound(xi, n_terms, params.tail_order) / (FOUR_PI * params.eps)


def required_terms(params: PotentialParams, xi: float) -> int:
    n = MIN_TERMS
    while n < 2.0 * xi:
        n *= 2
    while True:
        v_bound = value_tail_bound(xi, n, params.tail_order) / (FOUR_PI * params.eps)
        a_bound = stream_tail_bound(xi, n, params.tail_order) / FOUR_PI
        if max(v_bound, a_bound) <= params.tail_tol:
            return n
        if n >= params.max_terms:
            raise TolUnreachable(max(v_bound, a_bound), params.tail_tol, params.max_terms)
        n = min(2 * n, params.max_terms)


def plan_truncation(params: PotentialParams, center, radius: float = 0.0) -> TruncationPlan:
    """Freeze shift and term count so the whole ball meets tail_tol."""
    center = np.asarray(center, dtype=float)[:3]
    shift = int(period_shift(params, center[0]))
    q = center.copy()
    q[0] -= shift * params.eps
    xi = (float(np.linalg.norm(q)) + radius) / params.eps
    n_terms = required_terms(params, xi)
    logger.debug("plan eps=%.3e xi=%.3e n_terms=%d shift=%d", params.eps, xi, n_terms, shift)
    return TruncationPlan(n_terms=n_terms, shift=shift)


def _batch_plan(params: PotentialParams, xyz: np.ndarray) -> Tuple[int, np.ndarray]:
    shifts = period_shift(params, xyz[:, 0])
    dist = nearest_charge_distance(params, xyz)
    return required_terms(params, float(dist.max()) / params.eps), shifts


def check_regular(params: PotentialParams, xyz: np.ndarray) -> np.ndarray:
    dist = nearest_charge_distance(params, xyz)
    bad = np.flatnonzero(dist < params.exclusion)
    if bad.size:
        raise PointTooCloseToCharge(float(dist[bad[0]]), params.exclusion)
    return dist


# ---------------------------------------------------------------------------
# Batched lattice sum
# ---------------------------------------------------------------------------

def _inverse_distance_terms(d: np.ndarray, order: int):
    """1/r and its derivatives for displacement array d (..., 3)."""
    r2 = np.einsum("...i,...i->...", d, d)
    inv = 1.0 / np.sqrt(r2)
    if order == 0:
        return inv, None, None
    inv3 = inv ** 3
    grad = -d * inv3[..., None]
    if order == 1:
        return inv, grad, None
    inv5 = inv3 * inv * inv
    hess = 3.0 * d[..., :, None] * d[..., None, :] * inv5[..., None, None]
    hess -= np.eye(3) * inv3[..., None, None]
    return inv, grad, hess


def lattice_sum(params: PotentialParams, xyz: np.ndarray, n_terms: int, shifts,
                order: int = 2):
    """4*pi*V0 at the points without the 1/(4 pi) factor and without bounds.

    ``shifts`` is an integer (frozen) or one integer per point.
    """
    eps = params.eps
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    m = xyz.shape[0]
    q = xyz.copy()
    q[:, 0] -= np.broadcast_to(np.asarray(shifts), (m,)) * eps

    a0 = 2.0 * (-np.euler_gamma + math.log(2.0 * eps)) / eps
    val, grad, hess = _inverse_distance_terms(q, order)
    val = val - a0
    if order >= 1:
        grad = grad.copy()
    if order >= 2:
        hess = hess.copy()

    block = max(16, _BLOCK_BUDGET // max(m, 1))
    for start in range(1, n_terms + 1, block):
        n = np.arange(start, min(start + block, n_terms + 1), dtype=float)
        offset = np.zeros((n.size, 3))
        offset[:, 0] = n * eps
        dp = q[:, None, :] + offset[None, :, :]
        dm = q[:, None, :] - offset[None, :, :]
        vp, gp, hp = _inverse_distance_terms(dp, order)
        vm, gm, hm = _inverse_distance_terms(dm, order)
        val += np.sum(vp + vm - 2.0 / (n * eps), axis=1)
        if order >= 1:
            grad += np.sum(gp + gm, axis=1)
        if order >= 2:
            hess += np.sum(hp + hm, axis=1)

    # closed-form zonal tail, evaluated in lattice units to stay in range
    x = q / eps
    for k in range(2, params.tail_order + 1, 2):
        w = 2.0 * float(zeta(k + 1, n_terms + 1))
        zv, zg, zh = radial_polynomial(zonal_coefficients(k), x, order)
        val += w * zv / eps
        if order >= 1:
            grad += w * zg / eps ** 2
        if order >= 2:
            hess += w * zh / eps ** 3
    return val, grad, hess


def harmonic_part(h_poly: np.ndarray, y1, y2, order: int = 2):
    """f = Re h(y1 + i y2) with its gradient and Hessian in (y1, y2)."""
    y = np.asarray(y1, dtype=float) + 1j * np.asarray(y2, dtype=float)
    f = P.polyval(y, h_poly).real
    if order == 0:
        return f, None, None
    h1 = P.polyval(y, P.polyder(h_poly))
    grad = np.stack([h1.real, -h1.imag], axis=-1)
    if order == 1:
        return f, grad, None
    h2 = P.polyval(y, P.polyder(h_poly, 2))
    hess = np.empty(np.shape(y) + (2, 2))
    hess[..., 0, 0] = h2.real
    hess[..., 0, 1] = -h2.imag
    hess[..., 1, 0] = -h2.imag
    hess[..., 1, 1] = -h2.real
    return f, grad, hess


def potential_arrays(params: PotentialParams, xyz, plan: Optional[TruncationPlan] = None,
                     order: int = 2, include_harmonic: bool = True):
    """Batched V (or V0 with include_harmonic=False) at physical points.

    Returns (value, grad, hess, err_bound) with shapes (m,), (m,3), (m,3,3), (m,).
    """
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    check_regular(params, xyz)
    if plan is None:
        n_terms, shifts = _batch_plan(params, xyz)
    else:
        n_terms, shifts = plan.n_terms, plan.shift

    val, grad, hess = lattice_sum(params, xyz, n_terms, shifts, order)
    val = val / FOUR_PI
    grad = grad / FOUR_PI if grad is not None else None
    hess = hess / FOUR_PI if hess is not None else None

    q = xyz.copy()
    q[:, 0] -= np.broadcast_to(np.asarray(shifts), (xyz.shape[0],)) * params.eps
    xi = np.linalg.norm(q, axis=1) / params.eps
    err = np.array([value_tail_bound(x, n_terms, params.tail_order) for x in xi])
    err /= FOUR_PI * params.eps
    if include_harmonic and np.any(params.h_poly != 0):
        f, gf, hf = harmonic_part(params.h_poly, xyz[:, 1], xyz[:, 2], order)
        val = val + f / params.eps
        if grad is not None:
            grad[:, 1:] += gf / params.eps
        if hess is not None:
            hess[:, 1:, 1:] += hf / params.eps
    return val, grad, hess, err


def rescaled_arrays(params: PotentialParams, sv, order: int = 2):
    """Batched V1 at rescaled points (s, v1, v2) of the unit lattice."""
    sv = np.atleast_2d(np.asarray(sv, dtype=float))
    unit = unit_lattice(params)
    val, grad, hess, err = potential_arrays(unit, sv, order=order, include_harmonic=False)
    val = val + params.beta
    if np.any(params.h_poly != 0):
        e = params.eps
        f, gf, hf = harmonic_part(params.h_poly, e * sv[:, 1], e * sv[:, 2], order)
        val = val + f
        if grad is not None:
            grad[:, 1:] += e * gf
        if hess is not None:
            hess[:, 1:, 1:] += e * e * hf
    return val, grad, hess, err


def unit_lattice(params: PotentialParams) -> PotentialParams:
    return PotentialParams(
        eps=1.0,
        tail_tol=params.tail_tol,
        exclusion_radius=params.exclusion / params.eps,
        max_terms=params.max_terms,
        tail_order=params.tail_order,
    )


# ---------------------------------------------------------------------------
# Point API
# ---------------------------------------------------------------------------

def _explicit_plan(params: PotentialParams, p: ChartPoint3, n_terms: int) -> TruncationPlan:
    bound = truncation_bound(params, p, n_terms)
    if bound > params.tail_tol:
        raise TolUnreachable(bound, params.tail_tol, n_terms)
    return TruncationPlan(n_terms=n_terms, shift=int(period_shift(params, p.u)))


def _single(params, p, n_terms, include_harmonic) -> PotentialValue:
    plan = _explicit_plan(params, p, n_terms) if n_terms is not None else None
    val, grad, hess, err = potential_arrays(
        params, p.as_array(), plan=plan, include_harmonic=include_harmonic
    )
    return PotentialValue(value=float(val[0]), grad=grad[0], hess=hess[0], err_bound=float(err[0]))


def eval_V0(params: PotentialParams, p: ChartPoint3, n_terms: Optional[int] = None) -> PotentialValue:
    return _single(params, p, n_terms, include_harmonic=False)


def eval_V(params: PotentialParams, p: ChartPoint3, n_terms: Optional[int] = None) -> PotentialValue:
    pv = _single(params, p, n_terms, include_harmonic=True)
    if pv.value <= 0.0:
        raise NegativePotential(pv.value)
    return pv


def eval_V1(params: PotentialParams, q: ChartPoint3) -> PotentialValue:
    """V1 = V0(eps=1)(q) + beta + Re h(eps q_y) at a rescaled point."""
    val, grad, hess, err = rescaled_arrays(params, q.as_array())
    return PotentialValue(value=float(val[0]), grad=grad[0], hess=hess[0], err_bound=float(err[0]))


def default_fd_step(params: PotentialParams, p: ChartPoint3) -> float:
    dist = float(nearest_charge_distance(params, p.as_array())[0])
    return 2e-3 * dist


def laplacian_residual(params: PotentialParams, p: ChartPoint3,
                       fd_step: Optional[float] = None) -> LaplacianResidual:
    """Flat Laplacian of V from the analytic Hessian and from a 5-point stencil."""
    h = fd_step if fd_step is not None else default_fd_step(params, p)
    dist = float(nearest_charge_distance(params, p.as_array())[0])
    if dist < params.exclusion + 2.0 * h:
        raise PointTooCloseToCharge(dist, params.exclusion + 2.0 * h)

    analytic = float(np.trace(eval_V(params, p).hess))

    x0 = p.as_array()
    plan = plan_truncation(params, x0, radius=2.0 * h)
    offsets = [0.0, h, -h, 2.0 * h, -2.0 * h]
    stencil = [x0]
    for axis in range(3):
        for off in offsets[1:]:
            x = x0.copy()
            x[axis] += off
            stencil.append(x)
    vals, _, _, _ = potential_arrays(params, np.array(stencil), plan=plan, order=0)
    f0 = vals[0]
    lap = 0.0
    for axis in range(3):
        fp, fm, fpp, fmm = vals[1 + 4 * axis: 5 + 4 * axis]
        lap += (-fpp + 16.0 * fp - 30.0 * f0 + 16.0 * fm - fmm) / (12.0 * h * h)
    logger.debug("laplacian at %s: analytic=%.3e fd=%.3e h=%.2e", p, analytic, lap, h)
    return LaplacianResidual(analytic=analytic, finite_difference=float(lap), fd_step=h)


def charge_coefficient_estimate(rho0: float = 0.05, levels: int = 6,
                                tail_tol: float = 1e-13) -> Tuple[float, float]:
    """Richardson limit of rho * V0(eps=1)(rho, 0, 0) as rho -> 0.

    Returns the extrapolated coefficient and the last table difference.
    """
    unit = PotentialParams(eps=1.0, tail_tol=tail_tol, exclusion_radius=1e-9)
    rho = rho0 / 2.0 ** np.arange(levels)
    pts = np.zeros((levels, 3))
    pts[:, 0] = rho
    vals, _, _, _ = potential_arrays(unit, pts, order=0, include_harmonic=False)
    table = [list(rho * vals)]
    for k in range(1, levels):
        prev = table[-1]
        factor = 2.0 ** k
        table.append([(factor * prev[j + 1] - prev[j]) / (factor - 1.0)
                      for j in range(len(prev) - 1)])
    estimate = table[-1][0]
    error = abs(estimate - table[-2][-1])
    logger.info("charge coefficient %.15f (table error %.2e)", estimate, error)
    return float(estimate), float(error)
