"""
Near-identity estimate for positive Hermitian matrices.

If A > 0 is Hermitian with tr A <= n + eps and det A >= 1 - eps then
|A - Id|^2 <= C(n) eps.  C(n) is only known to exist, so it is calibrated here
by Monte-Carlo over the admissible set and then re-verified on an independent
random stream.
"""

import logging
import math
from typing import List, Sequence

import numpy as np

from errors import NotAdmissible
from metric_models import MetricField, cholesky_frame
from models import HermitianGap

logger = logging.getLogger(__name__)

ADMISSIBLE_TOL = 1e-12
MAX_DIMENSION = 4
CHUNK = 100_000
MIN_SAMPLES = 10_000

CALIBRATION_STREAM = 0
VERIFICATION_STREAM = 1


def _check_dimension(n: int) -> None:
    if not 1 <= n <= MAX_DIMENSION:
        raise ValueError(f"dimension must be between 1 and {MAX_DIMENSION}, got {n}")


def gap_arrays(A: np.ndarray):
    """trace_slack, det_slack, dist_sq for a stack of matrices (k, n, n)."""
    n = A.shape[-1]
    trace_slack = np.real(np.trace(A, axis1=-2, axis2=-1)) - n
    det_slack = 1.0 - np.real(np.linalg.det(A))
    diff = A - np.eye(n)
    dist_sq = np.real(np.einsum("kij,kij->k", diff, diff.conj()))
    return trace_slack, det_slack, dist_sq


def matrix_lemma_gap(A, eps: float) -> HermitianGap:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    n = A.shape[0]

    skew = float(np.max(np.abs(A - A.conj().T)))
    if skew > ADMISSIBLE_TOL * max(1.0, float(np.max(np.abs(A)))):
        raise NotAdmissible("hermitian", skew, ADMISSIBLE_TOL)
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotAdmissible("positive_definite", float(np.min(np.linalg.eigvalsh(A))), 0.0) from None

    trace_slack, det_slack, dist_sq = (float(x[0]) for x in gap_arrays(A[None]))
    if trace_slack > eps + ADMISSIBLE_TOL:
        raise NotAdmissible("trace", trace_slack, eps)
    if det_slack > eps + ADMISSIBLE_TOL:
        raise NotAdmissible("determinant", det_slack, eps)
    return HermitianGap(n=n, trace_slack=trace_slack, det_slack=det_slack, dist_sq=max(dist_sq, 0.0))


def haar_unitaries(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def admissible_eigenvalues(n: int, eps: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Eigenvalue tuples drawn around (1, ..., 1) and kept if admissible.

    Directions come from a flat Dirichlet on the simplex shifted to sum zero,
    radii reach 2 sqrt(eps) + eps, so draws cover the boundary where the
    determinant constraint is tight.
    """
    width = 2.0 * math.sqrt(eps) + eps
    out: List[np.ndarray] = []
    have = 0
    while have < count:
        batch = max(2 * (count - have), 1024)
        if n == 1:
            lam = 1.0 + rng.uniform(-eps, eps, size=(batch, 1))
        else:
            direction = n * rng.dirichlet(np.ones(n), size=batch) - 1.0
            radius = rng.uniform(0.0, width, size=(batch, 1))
            shift = rng.uniform(-eps, eps / n, size=(batch, 1))
            lam = 1.0 + radius * direction / (n - 1) + shift
        ok = (np.all(lam > 0.0, axis=1)
              & (lam.sum(axis=1) <= n + eps)
              & (np.prod(lam, axis=1) >= 1.0 - eps))
        out.append(lam[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:count]


def sample_admissible(n: int, eps: float, count: int, rng: np.random.Generator):
    """Admissible Hermitian matrices U diag(lambda) U* with Haar-random U.

    Returns (matrices, (trace_slack, det_slack, dist_sq)).
    """
    _check_dimension(n)
    lam = admissible_eigenvalues(n, eps, count, rng)
    U = haar_unitaries(n, count, rng)
    A = np.einsum("kij,kj,klj->kil", U, lam, U.conj())
    return A, gap_arrays(A)


def diagonal_family(n: int, eps: float, samples: int) -> np.ndarray:
    root = math.sqrt(eps)
    deltas = np.unique(np.concatenate([np.linspace(-root, root, max(samples, 3)), [-root, 0.0, root]]))
    A = np.broadcast_to(np.eye(n), (deltas.size, n, n)).copy()
    if n >= 2:
        A[:, 0, 0] += deltas
        A[:, 1, 1] -= deltas
    return A.astype(complex)


def _streams(seed: int, purpose: int, count: int) -> List[np.random.Generator]:
    root = np.random.SeedSequence(entropy=seed, spawn_key=(purpose,))
    return [np.random.default_rng(s) for s in root.spawn(count)]


def _max_ratio(n: int, eps: float, samples: int, rng: np.random.Generator, family: str) -> float:
    if family == "diagonal":
        _, det_slack, dist_sq = gap_arrays(diagonal_family(n, eps, samples))
        admissible = det_slack <= eps + ADMISSIBLE_TOL
        return float(np.max(dist_sq[admissible])) / eps
    best = 0.0
    for start in range(0, samples, CHUNK):
        _, (_, _, dist_sq) = sample_admissible(n, eps, min(CHUNK, samples - start), rng)
        best = max(best, float(np.max(dist_sq)) / eps)
    return best


def calibrate_constant(n: int, eps_list: Sequence[float], samples: int, seed: int,
                       family: str = "hermitian") -> float:
    """Largest dist_sq / eps seen over admissible draws; deterministic given seed."""
    _check_dimension(n)
    if family not in ("hermitian", "diagonal"):
        raise ValueError(f"unknown sampling family {family!r}")
    if samples < MIN_SAMPLES:
        raise ValueError(f"at least {MIN_SAMPLES} samples are required, got {samples}")
    for eps in eps_list:
        if not 0.0 < eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {eps}")

    rngs = _streams(seed, CALIBRATION_STREAM, len(eps_list))
    c_hat = 0.0
    for eps, rng in zip(eps_list, rngs):
        ratio = _max_ratio(n, eps, samples, rng, family)
        logger.info("calibrate n=%d eps=%.3g family=%s max ratio=%.6f", n, eps, family, ratio)
        c_hat = max(c_hat, ratio)
    return c_hat


def verify_constant(n: int, C: float, eps_list: Sequence[float], samples: int, seed: int) -> int:
    """Number of fresh admissible draws with dist_sq > C eps."""
    _check_dimension(n)
    rngs = _streams(seed, VERIFICATION_STREAM, len(eps_list))
    violations = 0
    for eps, rng in zip(eps_list, rngs):
        for start in range(0, samples, CHUNK):
            _, (_, _, dist_sq) = sample_admissible(n, eps, min(CHUNK, samples - start), rng)
            violations += int(np.count_nonzero(dist_sq > C * eps))
    if violations:
        logger.warning("constant %.4f violated %d times for n=%d", C, violations, n)
    return violations


def metric_gap(h: MetricField, g: MetricField, coords) -> List[HermitianGap]:
    """Gap scalars of E^T h E in an orthonormal frame E of g, per point."""
    coords = np.atleast_2d(coords)
    E = cholesky_frame(g.components(coords))
    A = np.einsum("mai,mab,mbj->mij", E, h.components(coords), E)
    trace_slack, det_slack, dist_sq = gap_arrays(A)
    return [HermitianGap(n=4, trace_slack=float(t), det_slack=float(d), dist_sq=float(s))
            for t, d, s in zip(trace_slack, det_slack, dist_sq)]
