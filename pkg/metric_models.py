"""
Metric fields on the chart (u, y1, y2, t).

A Gibbons-Hawking field is assembled from a potential source that supplies V
and the connection A at batched points:

    g = V (du^2 + dy1^2 + dy2^2) + V^-1 (dt + A)^2

so g_ij = V delta_ij + A_i A_j / V, g_it = A_i / V, g_tt = 1 / V and det g = V^2.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad

from errors import NegativePotential, OriginSingular, SingularMetric
from gauge_connection import axis_winding, connection_arrays, monopole_arrays
from lattice_potential import (
    CHARGE_COEFFICIENT,
    nearest_charge_distance,
    plan_truncation,
    potential_arrays,
)
from models import ChartPoint3, ChartPoint4, GaugeId, MetricKind, PotentialParams, TruncationPlan

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Potential sources
# ---------------------------------------------------------------------------

class PotentialSource(ABC):
    """Supplies (V, A) at batched base points of shape (m, 3)."""

    @abstractmethod
    def __call__(self, xyz: np.ndarray):
        ...

    def length_scale(self, xyz: np.ndarray) -> float:
        return 1.0

    def localized(self, center: np.ndarray, radius: float, regauge: bool = True) -> "PotentialSource":
        return self


class LatticeSource(PotentialSource):
    def __init__(self, params: PotentialParams, gauge: GaugeId,
                 plan: Optional[TruncationPlan] = None, winding: float = 0.0):
        self.params = params
        self.gauge = gauge
        self.plan = plan
        self.winding = winding

    def __call__(self, xyz):
        V, _, _, _ = potential_arrays(self.params, xyz, plan=self.plan, order=0)
        A, _, _ = connection_arrays(self.params, xyz, self.gauge, plan=self.plan,
                                    winding=self.winding)
        return V, A

    def length_scale(self, xyz):
        xyz = np.atleast_2d(xyz)
        charge = float(nearest_charge_distance(self.params, xyz)[0])
        return min(charge, float(np.hypot(xyz[0, 1], xyz[0, 2])))

    def localized(self, center, radius, regauge=True):
        # moves the nearby Dirac string off the axis segment through center
        plan = plan_truncation(self.params, center, radius)
        winding = axis_winding(self.params, float(center[0]), self.gauge) if regauge else self.winding
        return LatticeSource(self.params, self.gauge, plan, winding)


class MonopoleSource(PotentialSource):
    """V = background + charge / r with the one-monopole connection."""

    def __init__(self, charge: float, gauge: GaugeId, background: float = 1.0):
        self.charge = charge
        self.gauge = gauge
        self.background = background

    def __call__(self, xyz):
        xyz = np.atleast_2d(xyz)
        r = np.linalg.norm(xyz, axis=1)
        A, _ = monopole_arrays(xyz, self.charge, self.gauge)
        return self.background + self.charge / r, A

    def length_scale(self, xyz):
        xyz = np.atleast_2d(xyz)
        return min(float(np.linalg.norm(xyz[0])), float(np.hypot(xyz[0, 1], xyz[0, 2])))

    def localized(self, center, radius, regauge=True):
        if not regauge:
            return self
        gauge = GaugeId.STRING_MINUS if center[0] >= 0.0 else GaugeId.STRING_PLUS
        return MonopoleSource(self.charge, gauge, self.background)


class ConstantSource(PotentialSource):
    def __init__(self, value: float = 1.0):
        self.value = value

    def __call__(self, xyz):
        xyz = np.atleast_2d(xyz)
        return np.full(xyz.shape[0], float(self.value)), np.zeros_like(xyz)


class PerturbedSource(PotentialSource):
    """Adds coeff * u^2 to V and leaves A alone (non-harmonic control)."""

    def __init__(self, inner: PotentialSource, coeff: float):
        self.inner = inner
        self.coeff = coeff

    def __call__(self, xyz):
        V, A = self.inner(xyz)
        xyz = np.atleast_2d(xyz)
        return V + self.coeff * xyz[:, 0] ** 2, A

    def length_scale(self, xyz):
        return self.inner.length_scale(xyz)

    def localized(self, center, radius, regauge=True):
        return PerturbedSource(self.inner.localized(center, radius, regauge), self.coeff)


# ---------------------------------------------------------------------------
# Metric fields
# ---------------------------------------------------------------------------

class MetricField(ABC):
    kind: MetricKind

    @abstractmethod
    def components(self, coords: np.ndarray) -> np.ndarray:
        """Symmetric (m, 4, 4) components at coordinates of shape (m, 4)."""

    def eval(self, p: ChartPoint4) -> np.ndarray:
        return self.components(p.as_array()[None, :])[0]

    def __call__(self, p: ChartPoint4) -> np.ndarray:
        return self.eval(p)

    def length_scale(self, coords: np.ndarray) -> float:
        return 1.0

    def localized(self, center: np.ndarray, radius: float, regauge: bool = True) -> "MetricField":
        """Cheaper field for evaluations within radius of center.

        With regauge the connection is changed by a closed multiple of dphi so
        that no Dirac string passes near center; curvature invariants are unchanged.
        """
        return self


class GibbonsHawkingField(MetricField):
    def __init__(self, source: PotentialSource, kind: MetricKind = MetricKind.GIBBONS_HAWKING):
        self.source = source
        self.kind = kind

    def components(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        V, A = self.source(coords[:, :3])
        bad = np.flatnonzero(V <= 0.0)
        if bad.size:
            raise NegativePotential(float(V[bad[0]]))
        m = coords.shape[0]
        g = np.zeros((m, 4, 4))
        g[:, :3, :3] = V[:, None, None] * np.eye(3) + A[:, :, None] * A[:, None, :] / V[:, None, None]
        g[:, :3, 3] = A / V[:, None]
        g[:, 3, :3] = A / V[:, None]
        g[:, 3, 3] = 1.0 / V
        return g

    def potential(self, coords) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return self.source(coords[:, :3])[0]

    def length_scale(self, coords):
        return self.source.length_scale(np.asarray(coords)[:3])

    def localized(self, center, radius, regauge=True):
        return GibbonsHawkingField(self.source.localized(np.asarray(center)[:3], radius, regauge),
                                   self.kind)


class FlatField(MetricField):
    def __init__(self, diagonal: Sequence[float], kind: MetricKind):
        self.diagonal = np.asarray(diagonal, dtype=float)
        self.kind = kind

    def components(self, coords):
        coords = np.atleast_2d(coords)
        return np.broadcast_to(np.diag(self.diagonal), (coords.shape[0], 4, 4)).copy()


class RescaledField(MetricField):
    """lam * Phi^* inner with the affine coordinate map x = offset + scale * coords."""

    kind = MetricKind.RESCALED

    def __init__(self, inner: MetricField, lam: float, scale=None, offset=None):
        if not lam > 0.0:
            raise ValueError("rescaling factor must be positive")
        self.inner = inner
        self.lam = float(lam)
        self.scale = np.ones(4) if scale is None else np.broadcast_to(
            np.asarray(scale, dtype=float), (4,)).copy()
        self.offset = np.zeros(4) if offset is None else np.asarray(offset, dtype=float)

    def to_inner(self, coords: np.ndarray) -> np.ndarray:
        return self.offset + self.scale * np.atleast_2d(coords)

    def components(self, coords):
        g = self.inner.components(self.to_inner(coords))
        return self.lam * g * self.scale[None, :, None] * self.scale[None, None, :]

    def length_scale(self, coords):
        x = self.to_inner(coords)[0]
        return self.inner.length_scale(x) / float(np.max(self.scale[:3]))

    def localized(self, center, radius, regauge=True):
        x = self.to_inner(center)[0]
        inner = self.inner.localized(x, radius * float(np.max(self.scale)), regauge)
        return RescaledField(inner, self.lam, self.scale, self.offset)


def smooth_pattern(coords: np.ndarray) -> np.ndarray:
    """Fixed smooth symmetric tensor field used for C^k perturbations."""
    coords = np.atleast_2d(coords)
    base = np.diag([1.0, 0.5, 0.5, 1.0])
    base[0, 1] = base[1, 0] = 0.25
    slope = np.zeros((4, 4))
    slope[0, 0] = slope[3, 3] = 1.0
    slope[1, 2] = slope[2, 1] = 0.5
    w = coords[:, 0] + coords[:, 1] - 0.5 * coords[:, 2]
    return base[None] * (1.0 + w * w)[:, None, None] + slope[None] * w[:, None, None]


class PerturbedField(MetricField):
    """h = base + amplitude * pattern; the difference h - base is exposed exactly."""

    kind = MetricKind.PERTURBED

    def __init__(self, base: MetricField, amplitude: float,
                 pattern: Callable[[np.ndarray], np.ndarray] = smooth_pattern):
        self.base = base
        self.amplitude = float(amplitude)
        self.pattern = pattern

    def perturbation(self, coords) -> np.ndarray:
        return self.amplitude * self.pattern(np.atleast_2d(coords))

    def components(self, coords):
        return self.base.components(coords) + self.perturbation(coords)

    def length_scale(self, coords):
        return self.base.length_scale(coords)

    def localized(self, center, radius, regauge=True):
        return PerturbedField(self.base.localized(center, radius, regauge), self.amplitude, self.pattern)


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------

def gh_metric(params: PotentialParams, gauge: GaugeId = GaugeId.STRING_MINUS) -> GibbonsHawkingField:
    return GibbonsHawkingField(LatticeSource(params, gauge))


def taub_nut(c: float = CHARGE_COEFFICIENT, gauge: GaugeId = GaugeId.STRING_MINUS) -> GibbonsHawkingField:
    if not c > 0.0:
        raise ValueError("Taub-NUT charge must be positive")
    return GibbonsHawkingField(MonopoleSource(c, gauge), kind=MetricKind.TAUB_NUT)


def constant_potential_metric(value: float = 1.0) -> GibbonsHawkingField:
    return GibbonsHawkingField(ConstantSource(value))


def perturbed_gh_metric(params: PotentialParams, coeff: float = 0.01,
                        gauge: GaugeId = GaugeId.STRING_MINUS) -> GibbonsHawkingField:
    return GibbonsHawkingField(PerturbedSource(LatticeSource(params, gauge), coeff))


def flat_r3_product(fiber: float = 1.0) -> FlatField:
    return FlatField([1.0, 1.0, 1.0, fiber * fiber], MetricKind.FLAT_R3_PRODUCT)


def flat_s1r2(gamma0sq: float, fiber: float = 1.0) -> FlatField:
    if not gamma0sq > 0.0:
        raise ValueError("gamma0sq must be positive")
    return FlatField([gamma0sq, gamma0sq, gamma0sq, fiber * fiber], MetricKind.FLAT_S1R2)


def rescale(g: MetricField, lam: float, coord_scale=None, offset=None) -> RescaledField:
    return RescaledField(g, lam, coord_scale, offset)


def perturbed_metric(base: MetricField, amplitude: float,
                     pattern: Callable[[np.ndarray], np.ndarray] = smooth_pattern) -> PerturbedField:
    return PerturbedField(base, amplitude, pattern)


def metric_difference(h: MetricField, g: MetricField, coords) -> np.ndarray:
    if isinstance(h, PerturbedField) and h.base is g:
        return h.perturbation(coords)
    return h.components(coords) - g.components(coords)


def cholesky_frame(gmat: np.ndarray) -> np.ndarray:
    """E with E^T g E = I (columns are an orthonormal frame), batched."""
    try:
        L = np.linalg.cholesky(gmat)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(str(exc)) from exc
    eye = np.broadcast_to(np.eye(gmat.shape[-1]), gmat.shape)
    return np.swapaxes(np.linalg.solve(L, eye), -1, -2)


# ---------------------------------------------------------------------------
# Lengths
# ---------------------------------------------------------------------------

def curve_length(g: MetricField, path: Callable[[float], np.ndarray],
                 velocity: Callable[[float], np.ndarray], t0: float = 0.0, t1: float = 1.0) -> float:
    def speed(t):
        v = np.asarray(velocity(t), dtype=float)
        gm = g.components(np.asarray(path(t), dtype=float)[None, :])[0]
        return math.sqrt(max(float(v @ gm @ v), 0.0))

    value, _ = quad(speed, t0, t1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return value


def segment_length(g: MetricField, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return curve_length(g, lambda t: a + t * (b - a), lambda t: b - a)


def fiber_length(g: MetricField, base: ChartPoint3) -> float:
    x = base.as_array()
    return curve_length(g, lambda t: np.append(x, t), lambda t: np.array([0.0, 0.0, 0.0, 1.0]))


# ---------------------------------------------------------------------------
# Period map
# ---------------------------------------------------------------------------

def _as_complex(h_coeffs) -> np.ndarray:
    if h_coeffs is None or len(h_coeffs) == 0:
        return np.zeros(1, dtype=complex)
    first = h_coeffs[0]
    if isinstance(first, (tuple, list)):
        return np.array([complex(re, im) for re, im in h_coeffs])
    return np.asarray(h_coeffs, dtype=complex)


def eval_tau(y: complex, h_coeffs=None) -> complex:
    """tau(y) = log(y) / (2 pi i) + i h(y) on the principal branch."""
    if y == 0:
        raise OriginSingular()
    h = _as_complex(h_coeffs)
    return np.log(complex(y)) / (2j * math.pi) + 1j * P.polyval(complex(y), h)


def tau_monodromy(y: complex, h_coeffs=None, loops: int = 1, steps: int = 512) -> complex:
    """tau after analytic continuation ``loops`` times counterclockwise around 0."""
    if y == 0:
        raise OriginSingular()
    y = complex(y)
    angles = np.angle(y * np.exp(1j * np.linspace(0.0, 2.0 * math.pi * loops, steps * abs(loops) + 1)))
    arg = np.unwrap(angles)[-1]
    log_y = math.log(abs(y)) + 1j * arg
    h = _as_complex(h_coeffs)
    return log_y / (2j * math.pi) + 1j * P.polyval(y, h)
