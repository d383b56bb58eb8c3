"""
Connection one-form A (theta0 = dt + A) with dA = *dV on the regular region.

A is a superposition of monopole potentials A_phi = (1/4pi)((u - c)/r - sigma) dphi,
one per charge c = n*eps.  The charge at the origin takes sigma from the gauge;
charges above it carry their strings toward +infinity (sigma = -1) and charges
below toward -infinity (sigma = +1), so paired terms decay like n^-3.  The
harmonic part eps^-1 f contributes A_u = eps^-1 Im h(y).
"""

import logging
import math
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import zeta

from errors import OnDiracString, TolUnreachable
from lattice_potential import (
    FOUR_PI,
    check_regular,
    eval_V,
    period_shift,
    plan_truncation,
    radial_polynomial,
    stream_coefficients,
    stream_tail_bound,
    required_terms,
)
from models import ChartPoint3, GaugeForm, GaugeId, PotentialParams, TruncationPlan

logger = logging.getLogger(__name__)


def _check_off_string(xyz: np.ndarray, radius: float) -> np.ndarray:
    rho = np.hypot(xyz[:, 1], xyz[:, 2])
    bad = np.flatnonzero(rho < radius)
    if bad.size:
        raise OnDiracString(float(rho[bad[0]]), radius)
    return rho


def _azimuthal_to_cartesian(a_phi: np.ndarray, xyz: np.ndarray) -> np.ndarray:
    rho2 = xyz[:, 1] ** 2 + xyz[:, 2] ** 2
    A = np.zeros_like(xyz)
    A[:, 1] = -a_phi * xyz[:, 2] / rho2
    A[:, 2] = a_phi * xyz[:, 1] / rho2
    return A


def monopole_arrays(xyz, charge: float, gauge: GaugeId, exclusion: float = 0.0):
    """Single monopole of the given charge at the origin: (A, A_phi)."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    _check_off_string(xyz, exclusion)
    r = np.linalg.norm(xyz, axis=1)
    a_phi = charge * (xyz[:, 0] / r - gauge.sigma)
    return _azimuthal_to_cartesian(a_phi, xyz), a_phi


def monopole_connection(p: ChartPoint3, charge: float, gauge: GaugeId) -> GaugeForm:
    A, a_phi = monopole_arrays(p.as_array(), charge, gauge)
    return GaugeForm(A=A[0], gauge_id=gauge, a_phi=float(a_phi[0]))


def stream_sum(params: PotentialParams, xyz: np.ndarray, n_terms: int, shifts,
               gauge: GaugeId) -> np.ndarray:
    """4*pi*A_phi of the charge lattice (no harmonic part)."""
    eps = params.eps
    m = xyz.shape[0]
    shifts = np.broadcast_to(np.asarray(shifts), (m,))
    q = xyz.copy()
    q[:, 0] -= shifts * eps
    u = q[:, 0]

    psi = u / np.linalg.norm(q, axis=1) - gauge.sigma
    rho2 = q[:, 1] ** 2 + q[:, 2] ** 2
    block = max(16, 2 ** 18 // max(m, 1))
    for start in range(1, n_terms + 1, block):
        c = np.arange(start, min(start + block, n_terms + 1), dtype=float) * eps
        above = u[:, None] - c[None, :]
        below = u[:, None] + c[None, :]
        psi += np.sum(above / np.sqrt(above ** 2 + rho2[:, None])
                      + below / np.sqrt(below ** 2 + rho2[:, None]), axis=1)

    x = q / eps
    rho2_x = x[:, 1] ** 2 + x[:, 2] ** 2
    for k in range(2, params.tail_order + 1, 2):
        w = 2.0 * float(zeta(k + 1, n_terms + 1))
        qk, _, _ = radial_polynomial(stream_coefficients(k), x, order=0)
        psi += w * rho2_x * qk

    # strings are assigned by absolute charge index, not relative to the shift
    return psi + 2.0 * shifts


def connection_arrays(params: PotentialParams, xyz, gauge: GaugeId,
                      plan: Optional[TruncationPlan] = None, winding: float = 0.0):
    """Batched A at physical points: returns (A (m,3), A_phi (m,), err (m,)).

    winding is subtracted from 4*pi*A_phi, which is the gauge change t -> t + winding*phi/4pi.
    """
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    check_regular(params, xyz)
    _check_off_string(xyz, params.exclusion)
    if plan is None:
        shifts = period_shift(params, xyz[:, 0])
        q = xyz.copy()
        q[:, 0] -= shifts * params.eps
        n_terms = required_terms(params, float(np.linalg.norm(q, axis=1).max()) / params.eps)
    else:
        n_terms, shifts = plan.n_terms, plan.shift
        q = xyz.copy()
        q[:, 0] -= plan.shift * params.eps

    a_phi = (stream_sum(params, xyz, n_terms, shifts, gauge) - winding) / FOUR_PI
    xi = np.linalg.norm(q, axis=1) / params.eps
    err = np.array([stream_tail_bound(x, n_terms, params.tail_order) for x in xi]) / FOUR_PI

    A = _azimuthal_to_cartesian(a_phi, xyz)
    h = params.h_poly
    if np.any(h != 0):
        g = P.polyval(xyz[:, 1] + 1j * xyz[:, 2], h).imag
        A[:, 0] += g / params.eps
    return A, a_phi, err


def axis_winding(params: PotentialParams, u: float, gauge: GaugeId) -> float:
    """4*pi*A_phi on the u-axis at height u.

    Piecewise constant in u with a jump of 2 across each charge. Subtracting it
    leaves a connection that vanishes on the axis segment through u.
    """
    sigma = gauge.sigma
    k = max(math.ceil(abs(u) / params.eps) - 1, 0)
    if u >= 0.0:
        return 2.0 * k + 1.0 - sigma
    return -2.0 * k - 1.0 - sigma


def eval_connection(params: PotentialParams, p: ChartPoint3, gauge: GaugeId,
                    n_terms: Optional[int] = None) -> GaugeForm:
    plan = None
    if n_terms is not None:
        xi = float(np.linalg.norm(p.as_array() - [period_shift(params, p.u) * params.eps, 0, 0]))
        bound = stream_tail_bound(xi / params.eps, n_terms, params.tail_order) / FOUR_PI
        if bound > params.tail_tol:
            raise TolUnreachable(bound, params.tail_tol, n_terms)
        plan = TruncationPlan(n_terms=n_terms, shift=int(period_shift(params, p.u)))
    A, a_phi, err = connection_arrays(params, p.as_array(), gauge, plan=plan)
    return GaugeForm(A=A[0], gauge_id=gauge, a_phi=float(a_phi[0]), err_bound=float(err[0]))


def curl_residual(params: PotentialParams, p: ChartPoint3, gauge: GaugeId,
                  fd_step: float = 1e-5) -> float:
    """max_i |(curl A)_i - (grad V)_i| with fourth-order central differences.

    In the orientation (u, y1, y2) this is the componentwise form of dA = *dV.
    """
    h = fd_step
    x0 = p.as_array()
    _check_off_string(x0[None, :], params.exclusion + 2.0 * h)
    plan = plan_truncation(params, x0, radius=2.0 * h)

    stencil = []
    for axis in range(3):
        for off in (h, -h, 2.0 * h, -2.0 * h):
            x = x0.copy()
            x[axis] += off
            stencil.append(x)
    A, _, _ = connection_arrays(params, np.array(stencil), gauge, plan=plan)
    jac = np.empty((3, 3))  # jac[i, j] = d A_i / d x_j
    for axis in range(3):
        ap, am, app, amm = A[4 * axis: 4 * axis + 4]
        jac[:, axis] = (-app + 8.0 * ap - 8.0 * am + amm) / (12.0 * h)
    curl = np.array([
        jac[2, 1] - jac[1, 2],
        jac[0, 2] - jac[2, 0],
        jac[1, 0] - jac[0, 1],
    ])
    grad_v = eval_V(params, p).grad
    residual = float(np.max(np.abs(curl - grad_v)))
    logger.debug("curl residual at %s: %.3e", p, residual)
    return residual
